// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use super::multicast::MulticastAllocator;
use super::topology::{Attributes, ServiceInstance, Topology};
use super::SimError;
use crate::compiler::Constraint;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Announcement {
    pub name: String,
    pub node_id: String,
    /// Content item the announced name resolves to, when known.
    pub content: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstalledRule {
    pub rule_id: String,
    pub verb: String,
    pub traffic_spec: String,
    pub constraints: Vec<Constraint>,
    pub requester: String,
}

/// Everything the mediator may read or change about the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub topology: Topology,
    #[serde(default)]
    pub multicast: MulticastAllocator,
    #[serde(default)]
    pub announcements: BTreeMap<String, Announcement>,
    #[serde(default)]
    pub rules: Vec<InstalledRule>,
}

impl NetworkState {
    pub fn new(topology: Topology) -> Self {
        NetworkState {
            topology,
            multicast: MulticastAllocator::default(),
            announcements: BTreeMap::new(),
            rules: Vec::new(),
        }
    }

    /// Inserts the service on `node_id` or refreshes its attributes.
    /// Returns `true` when the service already existed.
    pub fn advertize(&mut self, node_id: &str, service: &str, attrs: Attributes) -> Result<bool, SimError> {
        if service.is_empty() {
            return Err(SimError::InvariantViolation("service name must not be empty".into()));
        }
        let node = self
            .topology
            .node_mut(node_id)
            .ok_or_else(|| SimError::UnknownNode(node_id.to_string()))?;
        match node.services.iter_mut().find(|s| s.name == service) {
            Some(existing) => {
                existing.attrs.extend(attrs);
                Ok(true)
            }
            None => {
                let mut svc = ServiceInstance::new(service);
                svc.attrs = attrs;
                node.services.push(svc);
                Ok(false)
            }
        }
    }

    /// Stores `content` in the named service of `node_id`, or in a `store`
    /// service created on demand.
    pub fn place_content(&mut self, node_id: &str, service: Option<&str>, content: &str) -> Result<(), SimError> {
        let node = self
            .topology
            .node_mut(node_id)
            .ok_or_else(|| SimError::UnknownNode(node_id.to_string()))?;
        let name = service.filter(|s| !s.is_empty()).unwrap_or("store");
        if node.service(name).is_none() {
            node.services.push(ServiceInstance::new(name));
        }
        let svc = node
            .services
            .iter_mut()
            .find(|s| s.name == name)
            .expect("service exists");
        svc.content.insert(content.to_string());
        Ok(())
    }

    pub fn announce(&mut self, name: &str, node_id: &str, content: Option<String>) {
        self.announcements.insert(
            name.to_string(),
            Announcement {
                name: name.to_string(),
                node_id: node_id.to_string(),
                content,
            },
        );
    }

    pub fn install_rule(
        &mut self,
        verb: &str,
        traffic_spec: &str,
        constraints: Vec<Constraint>,
        requester: &str,
    ) -> String {
        let rule_id = format!("rule-{}", self.rules.len() + 1);
        self.rules.push(InstalledRule {
            rule_id: rule_id.clone(),
            verb: verb.to_string(),
            traffic_spec: traffic_spec.to_string(),
            constraints,
            requester: requester.to_string(),
        });
        rule_id
    }

    /// Nodes holding `content` directly or via an announcement, sorted.
    pub fn content_holders(&self, content: &str) -> Vec<String> {
        let mut out: Vec<String> = self
            .topology
            .nodes
            .iter()
            .filter(|n| n.services.iter().any(|s| s.content.contains(content)))
            .map(|n| n.id.clone())
            .collect();
        if let Some(a) = self.announcements.get(content) {
            out.push(a.node_id.clone());
        }
        out.sort();
        out.dedup();
        out
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(e.to_string()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let state: NetworkState = serde_path_to_error::deserialize(de).map_err(|e| SimError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        state.topology.validate()?;
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        let text = serde_json::to_string_pretty(self).expect("state serializes");
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text).map_err(|e| SimError::Io(e.to_string()))?;
        std::fs::rename(&tmp, path).map_err(|e| SimError::Io(e.to_string()))
    }
}

/// Shared, single-writer access to a [`NetworkState`], optionally written
/// through to a file after every mutation.
#[derive(Debug, Clone)]
pub struct StateHandle {
    inner: Arc<Mutex<NetworkState>>,
    persist: Option<PathBuf>,
}

impl StateHandle {
    pub fn new(state: NetworkState) -> Self {
        StateHandle {
            inner: Arc::new(Mutex::new(state)),
            persist: None,
        }
    }

    /// Loads `path` if it exists, otherwise starts from `initial` and writes it.
    pub fn persistent(path: impl Into<PathBuf>, initial: impl FnOnce() -> Result<NetworkState, SimError>) -> Result<Self, SimError> {
        let path = path.into();
        let state = if path.exists() {
            NetworkState::load(&path)?
        } else {
            let s = initial()?;
            s.save(&path)?;
            s
        };
        Ok(StateHandle {
            inner: Arc::new(Mutex::new(state)),
            persist: Some(path),
        })
    }

    pub fn lock(&self) -> MutexGuard<'_, NetworkState> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn snapshot(&self) -> NetworkState {
        self.lock().clone()
    }

    /// Runs `f` under the writer lock and persists the result.
    pub fn update<T>(&self, f: impl FnOnce(&mut NetworkState) -> Result<T, SimError>) -> Result<T, SimError> {
        let mut guard = self.lock();
        let out = f(&mut guard)?;
        if let Some(path) = &self.persist {
            guard.save(path)?;
        }
        Ok(out)
    }
}
