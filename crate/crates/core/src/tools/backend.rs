use std::time::Duration;

use serde_json::{json, Value};

use super::{ports_arg, str_arg, ToolResult, ToolRuntime};
use crate::model::{backend_call_score, ScoreKind};
use crate::sandbox::{spawn_service, SpawnOptions};

const CONSOLE_TAIL: usize = 200;
const LOCAL_HOSTS: [&str; 5] = ["localhost", "127.0.0.1", "0.0.0.0", "[::1]", "::1"];

fn failure(content: String) -> ToolResult {
    ToolResult::error(content).with_score(ScoreKind::BackendFunctionality, -1.0)
}

pub(super) fn backend_test(rt: &ToolRuntime, args: &Value) -> ToolResult {
    let directory = str_arg(args, "directory_path").unwrap_or(".");
    let start_command = str_arg(args, "start_command").unwrap_or_default();
    let method = str_arg(args, "method").unwrap_or("GET");
    let ports = ports_arg(args);
    let raw_url = str_arg(args, "url").unwrap_or_default();

    let mut url = match reqwest::Url::parse(raw_url) {
        Ok(u) => u,
        Err(e) => return ToolResult::error(format!("invalid url `{raw_url}`: {e}")),
    };
    let host = url.host_str().unwrap_or_default().to_string();
    if !LOCAL_HOSTS.contains(&host.as_str()) {
        return ToolResult::error(format!("url must target localhost, got host `{host}`"));
    }
    let port = url.port_or_known_default().unwrap_or(80);
    if !ports.contains(&port) {
        return ToolResult::error(format!("url port {port} is not among required_ports {ports:?}"));
    }
    if host == "0.0.0.0" {
        let _ = url.set_host(Some("127.0.0.1"));
    }

    let opts = SpawnOptions { env: rt.env.clone(), registry: rt.ports.clone(), ..SpawnOptions::default() };
    let handle = match spawn_service(rt.workspace(), directory, start_command, &ports, &opts) {
        Ok(h) => h,
        Err(e) => return failure(e.to_string()),
    };
    if let Err(e) = handle.await_ready(rt.config().ready_timeout()) {
        handle.terminate_with_grace(rt.config().grace());
        return failure(e.to_string());
    }

    let client = match reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(rt.config().request_timeout_secs))
        .build()
    {
        Ok(c) => c,
        Err(e) => {
            handle.terminate_with_grace(rt.config().grace());
            return failure(format!("cannot build HTTP client: {e}"));
        }
    };
    let verb = reqwest::Method::from_bytes(method.as_bytes()).unwrap_or(reqwest::Method::GET);
    let mut req = client.request(verb, url.clone());
    if let Some(headers) = args.get("headers").and_then(Value::as_object) {
        for (k, v) in headers {
            let v = v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string());
            req = req.header(k.as_str(), v);
        }
    }
    match args.get("data") {
        None | Some(Value::Null) => {}
        Some(Value::String(s)) => req = req.body(s.clone()),
        Some(other) => req = req.json(other),
    }
    let outcome = req.send().and_then(|resp| {
        let status = resp.status().as_u16();
        resp.text().map(|body| (status, body))
    });
    // let the request's log lines land before stopping
    std::thread::sleep(Duration::from_millis(100));
    let console = handle.terminate_with_grace(rt.config().grace());
    let console_log = console.tail(CONSOLE_TAIL);

    match outcome {
        Ok((status, body)) => {
            let payload = json!({
                "status": status,
                "response_body": body,
                "console_log": console_log,
            });
            let content = format!(
                "Request: {method} {url}\nStatus: {status}\nResponse Body:\n{body}\nConsole Log:\n{console_log}"
            );
            ToolResult::ok(content)
                .with_structured(payload)
                .with_score(ScoreKind::BackendFunctionality, backend_call_score(status, &body) as f64)
        }
        Err(e) => failure(format!("Request: {method} {url}\nRequest failed: {e}\nConsole Log:\n{console_log}")),
    }
}
