use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use crate::llm::{LlmClient, LlmError, ScriptedTranscript, ScriptedTransport};
use crate::tools::gui::{ScriptedDriverFactory, ScriptedSite};
use crate::tools::{GuiDriverFactory, GuiSetup};

/// Where each agent role gets its model.
///
/// `Recorded` replays `<dir>/<unit>/<role>.jsonl`; a unit directory that
/// holds a `site.json` also gets a scripted browser for GUI testing.
#[derive(Clone)]
pub enum ModelSource {
    Live(LiveModels),
    Recorded(PathBuf),
}

#[derive(Clone)]
pub struct LiveModels {
    pub default: LlmClient,
    pub by_role: BTreeMap<String, LlmClient>,
    pub gui_drivers: Option<Arc<dyn GuiDriverFactory>>,
}

impl std::fmt::Debug for ModelSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelSource::Live(m) => f.debug_struct("Live").field("roles", &m.by_role.keys()).finish_non_exhaustive(),
            ModelSource::Recorded(dir) => f.debug_tuple("Recorded").field(dir).finish(),
        }
    }
}

impl ModelSource {
    pub fn live(default: LlmClient) -> Self {
        ModelSource::Live(LiveModels { default, by_role: BTreeMap::new(), gui_drivers: None })
    }

    pub fn client(&self, unit: &str, role: &str) -> Result<LlmClient, LlmError> {
        match self {
            ModelSource::Live(m) => Ok(m.by_role.get(role).unwrap_or(&m.default).clone()),
            ModelSource::Recorded(dir) => {
                let path = dir.join(unit).join(format!("{role}.jsonl"));
                if !path.is_file() {
                    return Err(LlmError::Transcript(format!("no recorded transcript at {}", path.display())));
                }
                let transcript = ScriptedTranscript::load(&path)?;
                Ok(LlmClient::new(Arc::new(ScriptedTransport::new(transcript))))
            }
        }
    }

    /// Browser plus GUI agent for `frontend_test`, if this source has one.
    pub fn gui(&self, unit: &str) -> Result<Option<GuiSetup>, LlmError> {
        match self.drivers(unit)? {
            Some(drivers) => Ok(Some(GuiSetup { drivers, agent: self.client(unit, "gui_agent")? })),
            None => Ok(None),
        }
    }

    /// The browser alone, for callers that bring their own agent.
    pub fn drivers(&self, unit: &str) -> Result<Option<Arc<dyn GuiDriverFactory>>, LlmError> {
        match self {
            ModelSource::Live(m) => Ok(m.gui_drivers.clone()),
            ModelSource::Recorded(dir) => {
                let site_path = dir.join(unit).join("site.json");
                if !site_path.is_file() {
                    return Ok(None);
                }
                let site = ScriptedSite::load(&site_path).map_err(|e| LlmError::Transcript(e.to_string()))?;
                Ok(Some(Arc::new(ScriptedDriverFactory::new(site))))
            }
        }
    }
}
