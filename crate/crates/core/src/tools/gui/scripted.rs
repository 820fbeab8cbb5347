use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{ConsoleEntry, ElementSummary, GuiDriver, GuiDriverFactory, GuiError, Observation, ScrollDirection};

/// 1x1 white PNG so judges always receive an image.
const BLANK_PNG: &str = "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAIAAACQd1PeAAAADElEQVR4nGP4//8/AAX+Av4N70a4AAAAAElFTkSuQmCC";

/// What clicking an element does.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Effect {
    Navigate {
        to: String,
    },
    ConsoleError {
        message: String,
    },
    /// Sends a real request to the site, with a JSON body built from the
    /// values typed into the listed elements.
    Http {
        method: String,
        path: String,
        #[serde(default)]
        fields: BTreeMap<String, String>,
        #[serde(default)]
        then: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedElement {
    pub role: String,
    pub selector: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub on_click: Option<Effect>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedPage {
    pub title: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub elements: Vec<ScriptedElement>,
    #[serde(default)]
    pub console_on_load: Vec<ConsoleEntry>,
}

/// A page graph standing in for a real browser.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedSite {
    #[serde(default = "root_path")]
    pub start: String,
    pub pages: BTreeMap<String, ScriptedPage>,
}

fn root_path() -> String {
    "/".into()
}

impl ScriptedSite {
    pub fn load(path: &Path) -> Result<Self, GuiError> {
        let text = std::fs::read_to_string(path).map_err(|e| GuiError::Connect(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| GuiError::Connect(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedDriverFactory {
    site: Arc<ScriptedSite>,
}

impl ScriptedDriverFactory {
    pub fn new(site: ScriptedSite) -> Self {
        Self { site: Arc::new(site) }
    }
}

impl GuiDriverFactory for ScriptedDriverFactory {
    fn open(&self, base_url: &str) -> Result<Box<dyn GuiDriver>, GuiError> {
        Ok(Box::new(ScriptedDriver::new(self.site.clone(), base_url)))
    }
}

pub struct ScriptedDriver {
    site: Arc<ScriptedSite>,
    base_url: String,
    path: String,
    typed: BTreeMap<String, String>,
    console: Vec<ConsoleEntry>,
    http: reqwest::blocking::Client,
}

impl ScriptedDriver {
    pub fn new(site: Arc<ScriptedSite>, base_url: &str) -> Self {
        let path = site.start.clone();
        Self {
            site,
            base_url: base_url.trim_end_matches('/').to_string(),
            path,
            typed: BTreeMap::new(),
            console: Vec::new(),
            http: reqwest::blocking::Client::builder().timeout(Duration::from_secs(10)).build().expect("http client"),
        }
    }

    fn page(&self) -> Option<&ScriptedPage> {
        self.site.pages.get(&self.path)
    }

    fn go(&mut self, path: &str) {
        self.path = path.to_string();
        self.typed.clear();
        match self.site.pages.get(path) {
            Some(page) => self.console.extend(page.console_on_load.iter().cloned()),
            None => self.console.push(ConsoleEntry::error(format!("GET {}{path} 404 (Not Found)", self.base_url))),
        }
    }

    fn find(&self, target: &str) -> Result<ScriptedElement, GuiError> {
        let page = self.page().ok_or_else(|| GuiError::NoSuchElement(target.into()))?;
        page.elements
            .iter()
            .find(|e| e.selector == target)
            .or_else(|| page.elements.iter().find(|e| e.text.eq_ignore_ascii_case(target.trim())))
            .cloned()
            .ok_or_else(|| GuiError::NoSuchElement(target.into()))
    }
}

impl GuiDriver for ScriptedDriver {
    fn navigate(&mut self, url: &str) -> Result<(), GuiError> {
        let path = url.strip_prefix(&self.base_url).unwrap_or(url);
        let path = if path.is_empty() { "/" } else { path };
        if !path.starts_with('/') {
            return Err(GuiError::Action(format!("cannot open external url `{url}`")));
        }
        self.go(path);
        Ok(())
    }

    fn observe(&mut self) -> Result<Observation, GuiError> {
        let url = format!("{}{}", self.base_url, self.path);
        Ok(match self.page() {
            Some(page) => Observation {
                url,
                title: page.title.clone(),
                text: page.text.clone(),
                elements: page
                    .elements
                    .iter()
                    .map(|e| ElementSummary {
                        role: e.role.clone(),
                        selector: Some(e.selector.clone()),
                        text: e.text.clone(),
                    })
                    .collect(),
                screenshot: Some(BLANK_PNG.to_string()),
            },
            None => Observation {
                url,
                title: "404 Not Found".into(),
                text: "This page could not be found.".into(),
                elements: vec![],
                screenshot: Some(BLANK_PNG.to_string()),
            },
        })
    }

    fn click(&mut self, target: &str) -> Result<(), GuiError> {
        let element = self.find(target)?;
        match element.on_click {
            None => Ok(()),
            Some(Effect::Navigate { to }) => {
                self.go(&to);
                Ok(())
            }
            Some(Effect::ConsoleError { message }) => {
                self.console.push(ConsoleEntry::error(message));
                Ok(())
            }
            Some(Effect::Http { method, path, fields, then }) => {
                let mut body = Map::new();
                for (key, selector) in &fields {
                    body.insert(key.clone(), Value::String(self.typed.get(selector).cloned().unwrap_or_default()));
                }
                let verb = reqwest::Method::from_bytes(method.as_bytes())
                    .map_err(|e| GuiError::Action(format!("bad method {method}: {e}")))?;
                let url = format!("{}{path}", self.base_url);
                let mut req = self.http.request(verb, &url);
                if !fields.is_empty() {
                    req = req.json(&Value::Object(body));
                }
                match req.send() {
                    Ok(resp) if resp.status().is_success() => {
                        if let Some(next) = then {
                            self.go(&next);
                        }
                    }
                    Ok(resp) => self.console.push(ConsoleEntry::error(format!(
                        "Failed to load resource: {method} {url} responded with status {}",
                        resp.status().as_u16()
                    ))),
                    Err(e) => self.console.push(ConsoleEntry::error(format!("{method} {url} failed: {e}"))),
                }
                Ok(())
            }
        }
    }

    fn type_text(&mut self, target: &str, text: &str) -> Result<(), GuiError> {
        let element = self.find(target)?;
        if element.role != "input" && element.role != "textarea" {
            return Err(GuiError::Action(format!("`{target}` is not a text input")));
        }
        self.typed.insert(element.selector, text.to_string());
        Ok(())
    }

    fn scroll(&mut self, _direction: ScrollDirection) -> Result<(), GuiError> {
        Ok(())
    }

    fn take_console(&mut self) -> Vec<ConsoleEntry> {
        std::mem::take(&mut self.console)
    }
}
