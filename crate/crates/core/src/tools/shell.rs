use std::time::{Duration, Instant};

use serde_json::Value;

use super::{str_arg, ToolResult, ToolRuntime};
use crate::sandbox::{spawn_service, ConsoleLine, PortRegistry, ServiceHandle, SpawnOptions, Stream};

pub(super) struct Background {
    pub id: String,
    pub handle: ServiceHandle,
    seen: usize,
}

fn has_bare_newline(command: &str) -> bool {
    let bytes = command.as_bytes();
    bytes.iter().enumerate().any(|(i, &b)| b == b'\n' && (i == 0 || bytes[i - 1] != b'\\'))
}

fn render_streams(lines: &[ConsoleLine]) -> (String, String) {
    let pick = |s: Stream| {
        let text: Vec<&str> = lines.iter().filter(|l| l.stream == s).map(|l| l.text.as_str()).collect();
        if text.is_empty() {
            "(empty)".to_string()
        } else {
            text.join("\n")
        }
    };
    (pick(Stream::Stdout), pick(Stream::Stderr))
}

pub(super) fn run_shell_command(rt: &ToolRuntime, args: &Value) -> ToolResult {
    let command = str_arg(args, "command").unwrap_or_default();
    let flag = |k| args.get(k).and_then(Value::as_bool).unwrap_or(false);
    if flag("is_input") {
        return send_input(rt, command);
    }
    if command.trim().is_empty() {
        return ToolResult::error("command is empty");
    }
    if has_bare_newline(command) {
        return ToolResult::error("run one command at a time: the command contains an unescaped newline");
    }
    let dir_req = str_arg(args, "directory").unwrap_or(".");
    let dir = match rt.resolve(dir_req) {
        Ok(d) if d.is_dir() => d,
        Ok(d) => return ToolResult::error(format!("{} is not a directory", d.display())),
        Err(e) => return ToolResult::error(e.to_string()),
    };
    let rel = rt.workspace().relative(&dir).map(|p| p.display().to_string()).unwrap_or_default();
    let rel = if rel.is_empty() { ".".to_string() } else { rel };
    let background = flag("background");
    let opts = SpawnOptions {
        env: rt.env.clone(),
        stdin: background,
        settle: if background { Duration::from_millis(300) } else { Duration::ZERO },
        registry: PortRegistry::new(),
    };
    let handle = match spawn_service(rt.workspace(), &rel, command, &[], &opts) {
        Ok(h) => h,
        Err(e) => return ToolResult::error(e.to_string()),
    };
    if background {
        let mut bg = rt.background.lock().unwrap();
        let id = format!("bg-{}", bg.len() + 1);
        let lines = handle.console().lines();
        let (out, err) = render_streams(&lines);
        let content = format!(
            "Started background process {id} (pid {}).\nCommand: {command}\nDirectory: {}\nStdout so far: {out}\nStderr so far: {err}",
            handle.pid(),
            dir.display()
        );
        bg.push(Background { id, handle, seen: lines.len() });
        return ToolResult::ok(content);
    }
    let deadline = Instant::now() + Duration::from_secs(rt.config().shell_timeout_secs);
    let mut code = handle.poll_exit();
    while code.is_none() && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(10));
        code = handle.poll_exit();
    }
    let console = handle.terminate_with_grace(rt.config().grace());
    let (out, err) = render_streams(&console.lines());
    let mut content = format!("Command: {command}\nDirectory: {}\nStdout: {out}\nStderr: {err}\n", dir.display());
    match code {
        Some(c) => {
            content.push_str(&format!("Exit Code: {c}"));
            ToolResult { content, is_error: c != 0, ..ToolResult::default() }
        }
        None => {
            content.push_str(&format!(
                "Timed out after {} s; the process was stopped. Use background mode for long-running commands.",
                rt.config().shell_timeout_secs
            ));
            ToolResult::error(content)
        }
    }
}

fn send_input(rt: &ToolRuntime, input: &str) -> ToolResult {
    let mut bg = rt.background.lock().unwrap();
    let Some(target) = bg.iter_mut().rev().find(|b| b.handle.poll_exit().is_none()) else {
        return ToolResult::error("no running background process to receive input");
    };
    if let Err(e) = target.handle.write_stdin(input) {
        return ToolResult::error(format!("cannot write to {}: {e}", target.id));
    }
    // wait for output to appear and settle
    let deadline = Instant::now() + Duration::from_millis(1500);
    let mut last = target.handle.console().len();
    while Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(100));
        let now = target.handle.console().len();
        if now > target.seen && now == last {
            break;
        }
        last = now;
    }
    let lines = target.handle.console().lines_from(target.seen);
    target.seen += lines.len();
    let (out, err) = render_streams(&lines);
    ToolResult::ok(format!("Sent input to {}.\nStdout: {out}\nStderr: {err}", target.id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::Workspace;
    use crate::tools::ToolConfig;
    use serde_json::json;

    fn runtime() -> (tempfile::TempDir, ToolRuntime) {
        let dir = tempfile::tempdir().unwrap();
        let rt = ToolRuntime::new(Workspace::open(dir.path()).unwrap(), ToolConfig::default());
        (dir, rt)
    }

    #[test]
    fn echo_and_exit_codes() {
        let (_d, rt) = runtime();
        let r = rt.execute_named("run_shell_command", &json!({"command": "echo hi"}));
        assert!(!r.is_error);
        assert!(r.content.contains("Stdout: hi\n") && r.content.ends_with("Exit Code: 0"));
        let r = rt.execute_named("run_shell_command", &json!({"command": "exit 3"}));
        assert!(r.is_error && r.content.ends_with("Exit Code: 3"));
    }

    #[test]
    fn multi_line_commands_are_refused() {
        let (_d, rt) = runtime();
        assert!(rt.execute_named("run_shell_command", &json!({"command": "echo a\necho b"})).is_error);
        let r = rt.execute_named("run_shell_command", &json!({"command": "echo a \\\nb"}));
        assert!(!r.is_error, "{}", r.content);
    }

    #[test]
    fn timeout_returns_partial_output() {
        let (_d, mut rt) = runtime();
        rt.cfg.shell_timeout_secs = 1;
        let r = rt.execute_named("run_shell_command", &json!({"command": "echo partial; sleep 30"}));
        assert!(r.is_error);
        assert!(r.content.contains("Stdout: partial") && r.content.contains("Timed out"));
    }

    #[test]
    fn background_process_accepts_input() {
        let (_d, rt) = runtime();
        let r = rt.execute_named(
            "run_shell_command",
            &json!({"command": "while read l; do echo got $l; done", "background": true}),
        );
        assert!(r.content.starts_with("Started background process bg-1"), "{}", r.content);
        let r = rt.execute_named("run_shell_command", &json!({"command": "ping", "is_input": true}));
        assert!(r.content.contains("Stdout: got ping"), "{}", r.content);
        rt.shutdown();
        let r = rt.execute_named("run_shell_command", &json!({"command": "x", "is_input": true}));
        assert!(r.is_error);
    }
}
