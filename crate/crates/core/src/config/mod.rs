//! Model routing and the toolkit configuration file.

mod models;
mod toolkit;

pub use models::{LiveModels, ModelSource};
pub use toolkit::{endpoint_for_role, BenchSection, ConfigError, Endpoints, LearnSection, Limits, ToolkitConfig};
