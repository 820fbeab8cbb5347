//! Workspaces with a path jail and pristine reset, and supervised service
//! processes with console capture and port readiness detection.

mod ports;
mod process;
mod workspace;

use std::path::PathBuf;

use thiserror::Error;

pub use ports::{PortLease, PortRegistry};
pub use process::{
    spawn_service, ConsoleCapture, ConsoleLine, ReadinessReport, ServiceHandle, SpawnOptions, Stream,
    DEFAULT_READY_TIMEOUT, TERMINATE_GRACE,
};
pub use workspace::{
    create_workspace, normalize_lexical, reset_workspace, resolve_path, source_digest, tree_digest, Workspace,
    RUNTIME_DIRS,
};

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("destination not empty: {0}")]
    DestinationNotEmpty(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("pristine copy missing at {0}; workspace cannot be reset")]
    PristineMissing(PathBuf),
    #[error("jail violation: {requested} resolves outside {root}")]
    JailViolation { requested: String, root: PathBuf },
    #[error("port {0} is already held by another service")]
    PortInUse(u16),
    #[error("spawn failed for `{command}`: {reason}\n{console}")]
    Spawn { command: String, reason: String, console: String },
    #[error("service not ready after {waited_ms} ms; ports never announced: {missing:?}\n--- console ---\n{console}")]
    NotReady { missing: Vec<u16>, waited_ms: u128, console: String },
}

impl SandboxError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SandboxError::Io { path: path.into(), source }
    }
}
