use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The five database variables every backend template receives verbatim.
pub const DB_ENV_KEYS: [&str; 5] = ["DB_HOST", "DB_PORT", "DB_USERNAME", "DB_PASSWORD", "DB_NAME"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    Frontend,
    Backend,
}

impl TemplateKind {
    /// Subdirectory the template is mounted under inside a workspace.
    pub fn subdir(self) -> &'static str {
        match self {
            TemplateKind::Frontend => "frontend",
            TemplateKind::Backend => "backend",
        }
    }
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template `{name}`: scaffold path {path} does not exist")]
    MissingScaffold { name: String, path: PathBuf },
    #[error("template `{name}`: db_env must hold exactly {expected:?}, found {found:?}")]
    DbEnvKeys { name: String, expected: &'static [&'static str], found: Vec<String> },
    #[error("reading template descriptor {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing template descriptor {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("duplicate template name `{0}`")]
    Duplicate(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateDescriptor {
    pub name: String,
    pub kind: TemplateKind,
    pub description: String,
    pub scaffold_path: PathBuf,
    #[serde(default)]
    pub dev_workflow: Vec<String>,
    #[serde(default)]
    pub db_env: Option<BTreeMap<String, String>>,
    /// Human-readable tree shown to coding agents.
    #[serde(default)]
    pub project_structure: String,
    /// Free text injected into the starting prompt's reminder slot.
    #[serde(default)]
    pub additional_reminders: String,
}

impl TemplateDescriptor {
    pub fn validate(&self) -> Result<(), TemplateError> {
        if !self.scaffold_path.is_dir() {
            return Err(TemplateError::MissingScaffold { name: self.name.clone(), path: self.scaffold_path.clone() });
        }
        if let Some(env) = &self.db_env {
            let found: Vec<String> = env.keys().cloned().collect();
            let mut expected: Vec<&str> = DB_ENV_KEYS.to_vec();
            expected.sort();
            if found.iter().map(String::as_str).ne(expected.iter().copied()) {
                return Err(TemplateError::DbEnvKeys { name: self.name.clone(), expected: &DB_ENV_KEYS, found });
            }
        }
        Ok(())
    }

    /// Renders the db_env block the way starting prompts present it.
    pub fn database_configuration(&self) -> String {
        match &self.db_env {
            None => "None".to_string(),
            Some(env) => DB_ENV_KEYS
                .iter()
                .map(|k| format!("{k}={}", env.get(*k).map(String::as_str).unwrap_or("")))
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }
}

/// Set of available templates, loaded from `<dir>/<template>/template.toml`
/// with the scaffold tree in `<dir>/<template>/scaffold`.
#[derive(Debug, Clone, Default)]
pub struct TemplateRegistry {
    templates: Vec<TemplateDescriptor>,
}

#[derive(Deserialize)]
struct DescriptorFile {
    name: String,
    kind: TemplateKind,
    description: String,
    #[serde(default)]
    dev_workflow: Vec<String>,
    #[serde(default)]
    db_env: Option<BTreeMap<String, String>>,
    #[serde(default)]
    project_structure: String,
    #[serde(default)]
    additional_reminders: String,
}

impl TemplateRegistry {
    pub fn new(templates: Vec<TemplateDescriptor>) -> Result<Self, TemplateError> {
        let mut reg = Self::default();
        for t in templates {
            reg.insert(t)?;
        }
        Ok(reg)
    }

    pub fn insert(&mut self, template: TemplateDescriptor) -> Result<(), TemplateError> {
        template.validate()?;
        if self.get(&template.name).is_some() {
            return Err(TemplateError::Duplicate(template.name));
        }
        self.templates.push(template);
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let io = |source| TemplateError::Io { path: dir.to_path_buf(), source };
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("template.toml").is_file())
            .collect();
        entries.sort();
        let mut reg = Self::default();
        for root in entries {
            let path = root.join("template.toml");
            let text =
                std::fs::read_to_string(&path).map_err(|source| TemplateError::Io { path: path.clone(), source })?;
            let file: DescriptorFile = toml::from_str(&text).map_err(|source| TemplateError::Parse { path, source })?;
            reg.insert(TemplateDescriptor {
                name: file.name,
                kind: file.kind,
                description: file.description,
                scaffold_path: root.join("scaffold"),
                dev_workflow: file.dev_workflow,
                db_env: file.db_env,
                project_structure: file.project_structure,
                additional_reminders: file.additional_reminders,
            })?;
        }
        Ok(reg)
    }

    pub fn get(&self, name: &str) -> Option<&TemplateDescriptor> {
        self.templates.iter().find(|t| t.name == name)
    }

    pub fn of_kind(&self, kind: TemplateKind) -> impl Iterator<Item = &TemplateDescriptor> {
        self.templates.iter().filter(move |t| t.kind == kind)
    }

    pub fn all(&self) -> &[TemplateDescriptor] {
        &self.templates
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn descriptor(dir: &Path, env: Option<&[&str]>) -> TemplateDescriptor {
        TemplateDescriptor {
            name: "api".into(),
            kind: TemplateKind::Backend,
            description: "d".into(),
            scaffold_path: dir.to_path_buf(),
            dev_workflow: vec![],
            db_env: env.map(|keys| keys.iter().map(|k| (k.to_string(), "v".to_string())).collect()),
            project_structure: String::new(),
            additional_reminders: String::new(),
        }
    }

    #[test]
    fn db_env_must_have_exactly_five_keys() {
        let dir = tempfile::tempdir().unwrap();
        assert!(descriptor(dir.path(), Some(&DB_ENV_KEYS)).validate().is_ok());
        assert!(descriptor(dir.path(), None).validate().is_ok());
        assert!(matches!(
            descriptor(dir.path(), Some(&DB_ENV_KEYS[..4])).validate(),
            Err(TemplateError::DbEnvKeys { .. })
        ));
    }

    #[test]
    fn missing_scaffold_is_rejected() {
        let d = descriptor(Path::new("/definitely/not/here"), None);
        assert!(matches!(d.validate(), Err(TemplateError::MissingScaffold { .. })));
    }
}
