//! Chrome DevTools Protocol driver over a page's debugger websocket.

use std::net::TcpStream;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use super::{ConsoleEntry, GuiDriver, GuiDriverFactory, GuiError, Observation, ScrollDirection};

const OBSERVE_JS: &str = r#"(() => {
  const sel = (el) => el.id ? '#' + CSS.escape(el.id)
    : el.getAttribute('name') ? el.tagName.toLowerCase() + '[name="' + el.getAttribute('name') + '"]' : null;
  const role = (el) => el.getAttribute('role') || ({A: 'link', BUTTON: 'button', INPUT: 'input', TEXTAREA: 'textarea', SELECT: 'select'})[el.tagName] || el.tagName.toLowerCase();
  const visible = (el) => { const r = el.getBoundingClientRect(); return r.width > 0 && r.height > 0; };
  const els = [...document.querySelectorAll('a, button, input, textarea, select, [role=button]')].filter(visible).slice(0, 80);
  return JSON.stringify({
    url: location.href,
    title: document.title,
    text: (document.body ? document.body.innerText : '').replace(/\s+/g, ' ').slice(0, 2000),
    elements: els.map((el) => ({ role: role(el), selector: sel(el), text: (el.innerText || el.value || el.placeholder || el.getAttribute('aria-label') || '').trim().slice(0, 80) }))
  });
})()"#;

fn find_js(target: &str) -> String {
    let t = serde_json::to_string(target).unwrap();
    format!(
        r#"(() => {{
  const t = {t};
  let el = null;
  try {{ el = document.querySelector(t); }} catch (e) {{}}
  if (!el) {{
    const want = t.trim().toLowerCase();
    const all = [...document.querySelectorAll('a, button, input, textarea, select, label, [role=button]')];
    el = all.find((e) => (e.innerText || e.value || e.placeholder || e.getAttribute('aria-label') || '').trim().toLowerCase() === want) || null;
    if (el && el.tagName === 'LABEL' && el.control) el = el.control;
  }}
  return el;
}})()"#
    )
}

/// Connects to an existing browser: either straight to a page websocket,
/// or through the HTTP debugger endpoint, which opens a new tab per session.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdpDriverFactory {
    pub websocket_url: Option<String>,
    /// e.g. `http://127.0.0.1:9222`
    pub debugger_url: Option<String>,
}

impl CdpDriverFactory {
    fn page_socket(&self) -> Result<String, GuiError> {
        if let Some(ws) = &self.websocket_url {
            return Ok(ws.clone());
        }
        let base = self
            .debugger_url
            .as_deref()
            .ok_or_else(|| GuiError::Connect("neither websocket_url nor debugger_url is configured".into()))?;
        let client = reqwest::blocking::Client::new();
        let url = format!("{}/json/new?about:blank", base.trim_end_matches('/'));
        let resp = client
            .put(&url)
            .send()
            .or_else(|_| client.get(&url).send())
            .map_err(|e| GuiError::Connect(e.to_string()))?;
        let info: Value = resp.json().map_err(|e| GuiError::Connect(e.to_string()))?;
        info.get("webSocketDebuggerUrl")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| GuiError::Connect("debugger did not return webSocketDebuggerUrl".into()))
    }
}

impl GuiDriverFactory for CdpDriverFactory {
    fn open(&self, base_url: &str) -> Result<Box<dyn GuiDriver>, GuiError> {
        let mut driver = CdpDriver::connect(&self.page_socket()?)?;
        driver.base_url = base_url.trim_end_matches('/').to_string();
        Ok(Box::new(driver))
    }
}

pub struct CdpDriver {
    socket: WebSocket<MaybeTlsStream<TcpStream>>,
    next_id: u64,
    console: Vec<ConsoleEntry>,
    base_url: String,
    timeout: Duration,
}

impl CdpDriver {
    pub fn connect(ws_url: &str) -> Result<Self, GuiError> {
        let (socket, _) = tungstenite::connect(ws_url).map_err(|e| GuiError::Connect(e.to_string()))?;
        if let MaybeTlsStream::Plain(s) = socket.get_ref() {
            let _ = s.set_read_timeout(Some(Duration::from_millis(250)));
        }
        let mut d =
            Self { socket, next_id: 0, console: Vec::new(), base_url: String::new(), timeout: Duration::from_secs(15) };
        for domain in ["Page.enable", "Runtime.enable", "Log.enable"] {
            d.call(domain, json!({}))?;
        }
        Ok(d)
    }

    fn record_event(&mut self, event: &Value) {
        let params = &event["params"];
        match event["method"].as_str() {
            Some("Runtime.consoleAPICalled") => {
                let text = params["args"]
                    .as_array()
                    .map(|a| {
                        a.iter()
                            .map(|v| {
                                v.get("value")
                                    .map(|x| x.as_str().map(str::to_string).unwrap_or_else(|| x.to_string()))
                                    .or_else(|| v.get("description").and_then(Value::as_str).map(str::to_string))
                                    .unwrap_or_default()
                            })
                            .collect::<Vec<_>>()
                            .join(" ")
                    })
                    .unwrap_or_default();
                let level = params["type"].as_str().unwrap_or("log").to_string();
                self.console.push(ConsoleEntry { level, text });
            }
            Some("Runtime.exceptionThrown") => {
                let d = &params["exceptionDetails"];
                let text =
                    d["exception"]["description"].as_str().or(d["text"].as_str()).unwrap_or("uncaught exception");
                self.console.push(ConsoleEntry::error(text));
            }
            Some("Log.entryAdded") => {
                let e = &params["entry"];
                self.console.push(ConsoleEntry {
                    level: e["level"].as_str().unwrap_or("info").to_string(),
                    text: e["text"].as_str().unwrap_or_default().to_string(),
                });
            }
            _ => {}
        }
    }

    pub fn call(&mut self, method: &str, params: Value) -> Result<Value, GuiError> {
        self.next_id += 1;
        let id = self.next_id;
        let msg = json!({"id": id, "method": method, "params": params});
        self.socket.send(Message::Text(msg.to_string())).map_err(|e| GuiError::Protocol(e.to_string()))?;
        let deadline = Instant::now() + self.timeout;
        loop {
            if Instant::now() > deadline {
                return Err(GuiError::Protocol(format!("{method}: no response")));
            }
            let frame = match self.socket.read() {
                Ok(f) => f,
                Err(tungstenite::Error::Io(e))
                    if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) =>
                {
                    continue
                }
                Err(e) => return Err(GuiError::Protocol(e.to_string())),
            };
            let Message::Text(text) = frame else { continue };
            let value: Value = serde_json::from_str(&text).map_err(|e| GuiError::Protocol(e.to_string()))?;
            if value.get("id").and_then(Value::as_u64) == Some(id) {
                if let Some(err) = value.get("error") {
                    return Err(GuiError::Protocol(format!("{method}: {err}")));
                }
                return Ok(value.get("result").cloned().unwrap_or(Value::Null));
            }
            if value.get("method").is_some() {
                self.record_event(&value);
            }
        }
    }

    fn evaluate(&mut self, expression: &str) -> Result<Value, GuiError> {
        let r = self
            .call("Runtime.evaluate", json!({"expression": expression, "returnByValue": true, "awaitPromise": true}))?;
        if let Some(ex) = r.get("exceptionDetails") {
            return Err(GuiError::Action(format!("script error: {}", ex["text"].as_str().unwrap_or("unknown"))));
        }
        Ok(r["result"]["value"].clone())
    }

    fn wait_loaded(&mut self) -> Result<(), GuiError> {
        let deadline = Instant::now() + self.timeout;
        while Instant::now() < deadline {
            if self.evaluate("document.readyState")?.as_str() == Some("complete") {
                return Ok(());
            }
            std::thread::sleep(Duration::from_millis(100));
        }
        Err(GuiError::Action("page did not finish loading".into()))
    }
}

impl GuiDriver for CdpDriver {
    fn navigate(&mut self, url: &str) -> Result<(), GuiError> {
        let full = if url.starts_with('/') { format!("{}{url}", self.base_url) } else { url.to_string() };
        let r = self.call("Page.navigate", json!({"url": full}))?;
        if let Some(err) = r.get("errorText").and_then(Value::as_str) {
            return Err(GuiError::Action(format!("navigation failed: {err}")));
        }
        self.wait_loaded()
    }

    fn observe(&mut self) -> Result<Observation, GuiError> {
        let raw = self.evaluate(OBSERVE_JS)?;
        let mut obs: Observation = serde_json::from_str(raw.as_str().unwrap_or("{}"))
            .map_err(|e| GuiError::Protocol(format!("observation: {e}")))?;
        let shot = self.call("Page.captureScreenshot", json!({"format": "png"}))?;
        obs.screenshot = shot.get("data").and_then(Value::as_str).map(str::to_string);
        Ok(obs)
    }

    fn click(&mut self, target: &str) -> Result<(), GuiError> {
        let js = format!(
            "(() => {{ const el = {}; if (!el) return false; el.scrollIntoView(); el.click(); return true; }})()",
            find_js(target)
        );
        match self.evaluate(&js)? {
            Value::Bool(true) => {
                std::thread::sleep(Duration::from_millis(300));
                self.wait_loaded()
            }
            _ => Err(GuiError::NoSuchElement(target.into())),
        }
    }

    fn type_text(&mut self, target: &str, text: &str) -> Result<(), GuiError> {
        let value = serde_json::to_string(text).unwrap();
        let js = format!(
            r#"(() => {{ const el = {}; if (!el) return false; el.focus();
  const proto = el.tagName === 'TEXTAREA' ? HTMLTextAreaElement.prototype : HTMLInputElement.prototype;
  const setter = Object.getOwnPropertyDescriptor(proto, 'value');
  if (setter && setter.set) setter.set.call(el, {value}); else el.value = {value};
  el.dispatchEvent(new Event('input', {{bubbles: true}})); el.dispatchEvent(new Event('change', {{bubbles: true}}));
  return true; }})()"#,
            find_js(target)
        );
        match self.evaluate(&js)? {
            Value::Bool(true) => Ok(()),
            _ => Err(GuiError::NoSuchElement(target.into())),
        }
    }

    fn scroll(&mut self, direction: ScrollDirection) -> Result<(), GuiError> {
        let dy = if direction == ScrollDirection::Down { 600 } else { -600 };
        self.evaluate(&format!("window.scrollBy(0, {dy}); true")).map(|_| ())
    }

    fn take_console(&mut self) -> Vec<ConsoleEntry> {
        // pick up events that arrived since the last command
        let _ = self.call("Runtime.evaluate", json!({"expression": "0"}));
        std::mem::take(&mut self.console)
    }

    fn close(&mut self) {
        let _ = self.socket.close(None);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    /// Minimal DevTools endpoint: answers every command and emits a console
    /// error after Page.navigate.
    fn fake_browser() -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut ws = tungstenite::accept(stream).unwrap();
            let mut methods = Vec::new();
            loop {
                let msg = match ws.read() {
                    Ok(Message::Text(t)) => t,
                    Ok(Message::Close(_)) | Err(_) => break,
                    Ok(_) => continue,
                };
                let req: Value = serde_json::from_str(&msg).unwrap();
                let method = req["method"].as_str().unwrap().to_string();
                let expr = req["params"]["expression"].as_str().unwrap_or_default().to_string();
                methods.push(method.clone());
                let result = match method.as_str() {
                    "Page.navigate" => {
                        let ev = json!({"method": "Runtime.consoleAPICalled", "params": {"type": "error", "args": [{"type": "string", "value": "boom"}]}});
                        ws.send(Message::Text(ev.to_string())).unwrap();
                        json!({"frameId": "f"})
                    }
                    "Page.captureScreenshot" => json!({"data": "AAAA"}),
                    "Runtime.evaluate" if expr == "document.readyState" => {
                        json!({"result": {"type": "string", "value": "complete"}})
                    }
                    "Runtime.evaluate" if expr.contains("JSON.stringify") => {
                        json!({"result": {"type": "string", "value":
                        json!({"url": "http://site/", "title": "Fake", "text": "hello", "elements": [{"role": "button", "selector": "#go", "text": "Go"}]}).to_string()}})
                    }
                    "Runtime.evaluate" if expr.contains("el.click()") => {
                        json!({"result": {"type": "boolean", "value": !expr.contains("missing")}})
                    }
                    _ => json!({"result": {"type": "undefined"}}),
                };
                let reply = json!({"id": req["id"], "result": result});
                ws.send(Message::Text(reply.to_string())).unwrap();
            }
            methods
        });
        (format!("ws://{addr}/devtools/page/1"), handle)
    }

    #[test]
    fn drives_a_devtools_endpoint() {
        let (url, server) = fake_browser();
        let factory = CdpDriverFactory { websocket_url: Some(url), debugger_url: None };
        let mut d = factory.open("http://site").unwrap();
        d.navigate("/").unwrap();
        let obs = d.observe().unwrap();
        assert_eq!(obs.title, "Fake");
        assert_eq!(obs.elements[0].selector.as_deref(), Some("#go"));
        assert_eq!(obs.screenshot.as_deref(), Some("AAAA"));
        d.click("#go").unwrap();
        assert!(matches!(d.click("#missing"), Err(GuiError::NoSuchElement(_))));
        let console = d.take_console();
        assert_eq!(console, vec![ConsoleEntry::error("boom")]);
        d.close();
        let methods = server.join().unwrap();
        assert_eq!(&methods[..4], ["Page.enable", "Runtime.enable", "Log.enable", "Page.navigate"]);
    }
}
