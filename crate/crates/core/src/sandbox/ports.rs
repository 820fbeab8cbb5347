use std::collections::BTreeSet;
use std::sync::{Arc, Mutex, OnceLock};

use super::SandboxError;

/// Ports currently held by services this process launched. Shared across
/// workspaces; a port can be leased by one service at a time.
#[derive(Debug, Clone, Default)]
pub struct PortRegistry {
    held: Arc<Mutex<BTreeSet<u16>>>,
}

impl PortRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn global() -> &'static PortRegistry {
        static GLOBAL: OnceLock<PortRegistry> = OnceLock::new();
        GLOBAL.get_or_init(PortRegistry::new)
    }

    /// Leases every port or none.
    pub fn lease(&self, ports: &[u16]) -> Result<PortLease, SandboxError> {
        let mut held = self.held.lock().unwrap();
        if let Some(&p) = ports.iter().find(|p| held.contains(p)) {
            return Err(SandboxError::PortInUse(p));
        }
        let unique: BTreeSet<u16> = ports.iter().copied().collect();
        held.extend(unique.iter().copied());
        Ok(PortLease { registry: self.clone(), ports: unique.into_iter().collect() })
    }

    pub fn is_held(&self, port: u16) -> bool {
        self.held.lock().unwrap().contains(&port)
    }
}

/// Releases its ports when dropped.
#[derive(Debug)]
pub struct PortLease {
    registry: PortRegistry,
    ports: Vec<u16>,
}

impl PortLease {
    pub fn ports(&self) -> &[u16] {
        &self.ports
    }
}

impl Drop for PortLease {
    fn drop(&mut self) {
        let mut held = self.registry.held.lock().unwrap();
        for p in &self.ports {
            held.remove(p);
        }
    }
}
