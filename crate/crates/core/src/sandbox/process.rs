use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{resolve_path, PortLease, PortRegistry, SandboxError, Workspace};

pub const DEFAULT_READY_TIMEOUT: Duration = Duration::from_secs(60);
pub const TERMINATE_GRACE: Duration = Duration::from_secs(5);
const POLL: Duration = Duration::from_millis(50);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Stdout,
    Stderr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsoleLine {
    pub at: DateTime<Utc>,
    pub stream: Stream,
    pub text: String,
}

/// Append-only interleaving of a process's stdout and stderr lines.
#[derive(Debug, Clone, Default)]
pub struct ConsoleCapture {
    lines: Arc<Mutex<Vec<ConsoleLine>>>,
}

impl ConsoleCapture {
    fn push(&self, stream: Stream, text: String) {
        self.lines.lock().unwrap().push(ConsoleLine { at: Utc::now(), stream, text });
    }

    pub fn lines(&self) -> Vec<ConsoleLine> {
        self.lines.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.lines.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lines_from(&self, start: usize) -> Vec<ConsoleLine> {
        self.lines.lock().unwrap().get(start..).map(<[_]>::to_vec).unwrap_or_default()
    }

    pub fn text(&self) -> String {
        render(&self.lines())
    }

    /// Last `n` lines, rendered.
    pub fn tail(&self, n: usize) -> String {
        let lines = self.lines();
        render(&lines[lines.len().saturating_sub(n)..])
    }
}

fn render(lines: &[ConsoleLine]) -> String {
    let mut out = String::new();
    for l in lines {
        if l.stream == Stream::Stderr {
            out.push_str("[stderr] ");
        }
        out.push_str(&l.text);
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadinessReport {
    pub matched: BTreeMap<u16, String>,
    pub waited: Duration,
}

#[derive(Debug, Clone)]
pub struct SpawnOptions {
    pub env: BTreeMap<String, String>,
    /// Keep stdin open for interactive input.
    pub stdin: bool,
    /// How long to watch for an immediate failing exit before returning.
    pub settle: Duration,
    pub registry: PortRegistry,
}

impl Default for SpawnOptions {
    fn default() -> Self {
        Self {
            env: BTreeMap::new(),
            stdin: false,
            settle: Duration::from_millis(200),
            registry: PortRegistry::global().clone(),
        }
    }
}

/// A shell command running in its own process group.
#[derive(Debug)]
pub struct ServiceHandle {
    pid: u32,
    start_command: String,
    cwd: PathBuf,
    required_ports: Vec<u16>,
    console: ConsoleCapture,
    state: Mutex<State>,
}

#[derive(Debug)]
struct State {
    child: Option<Child>,
    stdin: Option<ChildStdin>,
    readers: Vec<JoinHandle<()>>,
    exit_code: Option<i32>,
    lease: Option<PortLease>,
    terminated: bool,
}

/// Launches `start_command` with `bash -c` in `ws.root()/directory`.
pub fn spawn_service(
    ws: &Workspace,
    directory: &str,
    start_command: &str,
    required_ports: &[u16],
    opts: &SpawnOptions,
) -> Result<ServiceHandle, SandboxError> {
    let cwd = resolve_path(ws, directory)?;
    let lease = opts.registry.lease(required_ports)?;
    let spawn_err =
        |reason: String| SandboxError::Spawn { command: start_command.to_string(), reason, console: String::new() };
    if !cwd.is_dir() {
        return Err(spawn_err(format!("working directory {} does not exist", cwd.display())));
    }
    let mut cmd = Command::new("bash");
    cmd.arg("-c")
        .arg(start_command)
        .current_dir(&cwd)
        .envs(&opts.env)
        .stdin(if opts.stdin { Stdio::piped() } else { Stdio::null() })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    let mut child = cmd.spawn().map_err(|e| spawn_err(e.to_string()))?;
    let console = ConsoleCapture::default();
    let mut readers = Vec::new();
    if let Some(out) = child.stdout.take() {
        readers.push(pump(out, Stream::Stdout, console.clone()));
    }
    if let Some(err) = child.stderr.take() {
        readers.push(pump(err, Stream::Stderr, console.clone()));
    }
    let stdin = child.stdin.take();
    let handle = ServiceHandle {
        pid: child.id(),
        start_command: start_command.to_string(),
        cwd,
        required_ports: required_ports.to_vec(),
        console,
        state: Mutex::new(State {
            child: Some(child),
            stdin,
            readers,
            exit_code: None,
            lease: Some(lease),
            terminated: false,
        }),
    };
    let deadline = Instant::now() + opts.settle;
    while Instant::now() < deadline {
        if let Some(code) = handle.poll_exit() {
            if code != 0 {
                handle.join_readers();
                return Err(SandboxError::Spawn {
                    command: start_command.to_string(),
                    reason: format!("exited with status {code}"),
                    console: handle.console.text(),
                });
            }
            break;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    Ok(handle)
}

fn pump<R: Read + Send + 'static>(reader: R, stream: Stream, console: ConsoleCapture) -> JoinHandle<()> {
    std::thread::spawn(move || {
        let mut reader = BufReader::new(reader);
        let mut buf = Vec::new();
        loop {
            buf.clear();
            match reader.read_until(b'\n', &mut buf) {
                Ok(0) | Err(_) => break,
                Ok(_) => {
                    let text = String::from_utf8_lossy(&buf);
                    console.push(stream, text.trim_end_matches(['\n', '\r']).to_string());
                }
            }
        }
    })
}

fn port_pattern(port: u16) -> Regex {
    let host = hostname().map(|h| format!("|{}", regex::escape(&h))).unwrap_or_default();
    Regex::new(&format!(r"(?:localhost|0\.0\.0\.0|127\.0\.0\.1|\[::1?\]{host}):{port}(?:\D|$)")).unwrap()
}

fn hostname() -> Option<String> {
    let h = std::fs::read_to_string("/proc/sys/kernel/hostname").ok()?;
    let h = h.trim();
    (!h.is_empty()).then(|| h.to_string())
}

fn port_accepts(port: u16) -> bool {
    let addrs: [SocketAddr; 2] = [([127, 0, 0, 1], port).into(), (std::net::Ipv6Addr::LOCALHOST, port).into()];
    addrs.iter().any(|a| TcpStream::connect_timeout(a, Duration::from_millis(200)).is_ok())
}

impl ServiceHandle {
    pub fn pid(&self) -> u32 {
        self.pid
    }

    pub fn start_command(&self) -> &str {
        &self.start_command
    }

    pub fn cwd(&self) -> &Path {
        &self.cwd
    }

    pub fn required_ports(&self) -> &[u16] {
        &self.required_ports
    }

    pub fn console(&self) -> &ConsoleCapture {
        &self.console
    }

    /// Exit code once the shell has exited (signals map to 128+n).
    pub fn poll_exit(&self) -> Option<i32> {
        let mut st = self.state.lock().unwrap();
        if st.exit_code.is_none() {
            if let Some(child) = st.child.as_mut() {
                if let Ok(Some(status)) = child.try_wait() {
                    use std::os::unix::process::ExitStatusExt;
                    st.exit_code = Some(status.code().unwrap_or_else(|| 128 + status.signal().unwrap_or(0)));
                }
            }
        }
        st.exit_code
    }

    /// True while any process of the group is still alive.
    pub fn is_running(&self) -> bool {
        self.poll_exit().is_none() || group_alive(self.pid as i32)
    }

    pub fn write_stdin(&self, input: &str) -> std::io::Result<()> {
        let mut st = self.state.lock().unwrap();
        let stdin = st
            .stdin
            .as_mut()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::BrokenPipe, "stdin not available"))?;
        stdin.write_all(input.as_bytes())?;
        if !input.ends_with('\n') {
            stdin.write_all(b"\n")?;
        }
        stdin.flush()
    }

    /// Waits until every required port is announced in the console and
    /// accepts TCP connections.
    pub fn await_ready(&self, timeout: Duration) -> Result<ReadinessReport, SandboxError> {
        let started = Instant::now();
        let patterns: Vec<(u16, Regex)> = self.required_ports.iter().map(|&p| (p, port_pattern(p))).collect();
        let mut matched: BTreeMap<u16, String> = BTreeMap::new();
        let mut scanned = 0;
        loop {
            for line in self.console.lines_from(scanned) {
                scanned += 1;
                for (port, re) in &patterns {
                    if !matched.contains_key(port) && re.is_match(&line.text) {
                        matched.insert(*port, line.text.clone());
                    }
                }
            }
            let announced = matched.len() == patterns.len();
            if announced && self.required_ports.iter().all(|&p| port_accepts(p)) {
                return Ok(ReadinessReport { matched, waited: started.elapsed() });
            }
            let exited = self.poll_exit().is_some();
            if exited || started.elapsed() >= timeout {
                if exited {
                    // let the pipes drain so the tail is complete
                    self.join_readers();
                }
                let missing = self.required_ports.iter().copied().filter(|p| !matched.contains_key(p)).collect();
                return Err(SandboxError::NotReady {
                    missing,
                    waited_ms: started.elapsed().as_millis(),
                    console: self.console.tail(200),
                });
            }
            std::thread::sleep(POLL);
        }
    }

    /// Stops the whole process group: SIGTERM, a grace period, then
    /// SIGKILL. Safe to call repeatedly.
    pub fn terminate(&self) -> ConsoleCapture {
        self.terminate_with_grace(TERMINATE_GRACE)
    }

    pub fn terminate_with_grace(&self, grace: Duration) -> ConsoleCapture {
        {
            let st = self.state.lock().unwrap();
            if st.terminated {
                return self.console.clone();
            }
        }
        let pgid = self.pid as i32;
        self.state.lock().unwrap().stdin.take();
        if self.is_running() {
            signal_group(pgid, libc::SIGTERM);
            let deadline = Instant::now() + grace;
            while Instant::now() < deadline && self.is_running() {
                std::thread::sleep(Duration::from_millis(20));
            }
            if self.is_running() {
                log::warn!("process group {pgid} ignored SIGTERM; sending SIGKILL");
                signal_group(pgid, libc::SIGKILL);
                let deadline = Instant::now() + Duration::from_secs(2);
                while Instant::now() < deadline && self.is_running() {
                    std::thread::sleep(Duration::from_millis(20));
                }
            }
        }
        self.join_readers();
        let mut st = self.state.lock().unwrap();
        st.terminated = true;
        st.lease.take();
        self.console.clone()
    }

    fn join_readers(&self) {
        let readers: Vec<_> = std::mem::take(&mut self.state.lock().unwrap().readers);
        for r in readers {
            let _ = r.join();
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.terminate_with_grace(Duration::from_millis(500));
    }
}

fn signal_group(pgid: i32, sig: i32) {
    // SAFETY: kill(2) with a negative pid only signals; no memory is touched.
    unsafe {
        libc::kill(-pgid, sig);
    }
}

/// Scans /proc for a non-zombie process in group `pgid`.
pub(crate) fn group_alive(pgid: i32) -> bool {
    let Ok(entries) = std::fs::read_dir("/proc") else {
        // SAFETY: signal 0 performs only the permission/existence check.
        return unsafe { libc::kill(-pgid, 0) } == 0;
    };
    for entry in entries.flatten() {
        let name = entry.file_name();
        let Some(pid) = name.to_str().filter(|s| s.bytes().all(|b| b.is_ascii_digit())) else { continue };
        let Ok(stat) = std::fs::read_to_string(format!("/proc/{pid}/stat")) else { continue };
        // fields after the parenthesised command: state ppid pgrp ...
        let Some(after) = stat.rfind(')').map(|i| &stat[i + 2..]) else { continue };
        let mut fields = after.split_whitespace();
        let state = fields.next();
        let pgrp = fields.nth(1).and_then(|p| p.parse::<i32>().ok());
        if pgrp == Some(pgid) && state != Some("Z") && state != Some("X") {
            return true;
        }
    }
    false
}
