// SPDX-License-Identifier: Apache-2.0

//! Scripted runs: boot agents over the in-process transport, replay intents
//! on a logical clock, report what happened.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use super::{load_topology, Clock, LogicalClock, NetworkState, StateHandle, Topology};
use crate::audit::{AuditLog, SharedAuditLog};
use crate::mediator::{Agent, AgentConfig, InProcessTransport, MediationResult, SessionIds};
use crate::ontology::{builtin_ontology, OntologyRegistry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopologySource {
    Path(PathBuf),
    Inline(Box<Topology>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    /// Logical time (ms) at which the intent is submitted.
    #[serde(default)]
    pub at: u64,
    /// Requesting node.
    pub from: String,
    #[serde(default)]
    pub intent: Option<String>,
    /// Alternative to `intent`: a file holding the intent text.
    #[serde(default)]
    pub intent_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Faults {
    /// Agents that never answer.
    #[serde(default)]
    pub unavailable: Vec<String>,
    /// Simulated local mediation time per agent.
    #[serde(default)]
    pub latency_ms: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    pub topology: TopologySource,
    #[serde(default)]
    pub ontology: Option<PathBuf>,
    pub agents: Vec<AgentConfig>,
    pub script: Vec<ScriptStep>,
    #[serde(default)]
    pub faults: Faults,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub at: u64,
    pub from: String,
    pub agent_id: String,
    pub session_id: Uuid,
    pub result: MediationResult,
    pub escalation_count: u32,
    pub agent_chain: Vec<String>,
    pub completed_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub seed: u64,
    pub steps: Vec<StepReport>,
    pub audit_path: Option<PathBuf>,
    pub audit_records: usize,
    pub sessions_closed: usize,
    pub final_state: NetworkState,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}{message}", step.map(|s| format!("step {s}: ")).unwrap_or_default())]
pub struct ScenarioError {
    pub step: Option<usize>,
    pub message: String,
}

impl ScenarioError {
    fn new(message: impl Into<String>) -> Self {
        ScenarioError {
            step: None,
            message: message.into(),
        }
    }

    fn at(step: usize, message: impl Into<String>) -> Self {
        ScenarioError {
            step: Some(step),
            message: message.into(),
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| ScenarioError::new(format!("scenario schema error at {}: {}", e.path(), e.inner())))
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::new(format!("{}: {e}", path.display())))?;
        Scenario::from_json(&text)
    }
}

fn read(base: &Path, p: &Path) -> Result<String, ScenarioError> {
    let full = base.join(p);
    std::fs::read_to_string(&full).map_err(|e| ScenarioError::new(format!("{}: {e}", full.display())))
}

/// Loads `path` and runs it, resolving relative paths against its directory.
pub fn run_scenario_file(path: &Path, audit_path: Option<&Path>) -> Result<ScenarioReport, ScenarioError> {
    let scenario = Scenario::load(path)?;
    run_scenario(&scenario, path.parent().unwrap_or(Path::new(".")), audit_path)
}

/// Runs a scenario. With `audit_path` the log is written there (truncated
/// first); otherwise it stays in memory.
pub fn run_scenario(scenario: &Scenario, base: &Path, audit_path: Option<&Path>) -> Result<ScenarioReport, ScenarioError> {
    let topology = match &scenario.topology {
        TopologySource::Path(p) => load_topology(&read(base, p)?),
        TopologySource::Inline(t) => t.validate().map(|_| (**t).clone()),
    }
    .map_err(|e| ScenarioError::new(format!("topology: {e}")))?;
    let default_ontology = match &scenario.ontology {
        Some(p) => OntologyRegistry::from_json(&read(base, p)?).map_err(|e| ScenarioError::new(e.to_string()))?,
        None => builtin_ontology(),
    };
    let default_ontology = Arc::new(default_ontology);

    let clock = Arc::new(LogicalClock::new());
    let transport = Arc::new(InProcessTransport::new(clock.clone()));
    let state = StateHandle::new(NetworkState::new(topology));
    let audit: SharedAuditLog = match audit_path {
        Some(p) => AuditLog::create(p).map_err(|e| ScenarioError::new(format!("{}: {e}", p.display())))?,
        None => AuditLog::in_memory(),
    }
    .shared();

    let mut agents: Vec<Arc<Agent>> = Vec::new();
    for (i, cfg) in scenario.agents.iter().enumerate() {
        let mut cfg = cfg.clone();
        cfg.check().map_err(|e| ScenarioError::new(e.to_string()))?;
        if agents.iter().any(|a| a.id() == cfg.agent_id) {
            return Err(ScenarioError::new(format!("duplicate agent id '{}'", cfg.agent_id)));
        }
        if let Some(sub) = &cfg.scope_subnet {
            if state.lock().topology.subnet(sub).is_none() {
                return Err(ScenarioError::new(format!(
                    "agent '{}' serves unknown subnet '{sub}'",
                    cfg.agent_id
                )));
            }
        }
        let ontology = match &cfg.ontology {
            Some(p) => Arc::new(
                OntologyRegistry::from_json(&read(base, p)?).map_err(|e| ScenarioError::new(e.to_string()))?,
            ),
            None => default_ontology.clone(),
        };
        let endpoint = cfg.endpoint.get_or_insert_with(|| cfg.agent_id.clone()).clone();
        let agent = Arc::new(
            Agent::new(cfg, state.clone(), clock.clone() as Arc<dyn Clock>, transport.clone())
                .with_ontology(ontology)
                .with_audit(audit.clone())
                .with_session_ids(SessionIds::seeded(scenario.seed, i as u64)),
        );
        transport.register(&endpoint, &agent);
        agents.push(agent);
    }
    for id in &scenario.faults.unavailable {
        let agent = agents
            .iter()
            .find(|a| a.id() == id)
            .ok_or_else(|| ScenarioError::new(format!("fault names unknown agent '{id}'")))?;
        transport.set_down(agent.config().endpoint.as_deref().unwrap_or(id), true);
    }
    for (id, ms) in &scenario.faults.latency_ms {
        agents
            .iter()
            .find(|a| a.id() == id)
            .ok_or_else(|| ScenarioError::new(format!("fault names unknown agent '{id}'")))?
            .set_latency_ms(*ms);
    }

    let mut order: Vec<usize> = (0..scenario.script.len()).collect();
    order.sort_by_key(|&i| scenario.script[i].at);
    let mut steps = Vec::new();
    for i in order {
        let step = &scenario.script[i];
        let text = match (&step.intent, &step.intent_file) {
            (Some(t), None) => t.clone(),
            (None, Some(p)) => read(base, p).map_err(|e| ScenarioError::at(i, e.message))?,
            _ => return Err(ScenarioError::at(i, "exactly one of intent and intent_file is required")),
        };
        let agent = local_agent(&agents, &state, &step.from).map_err(|m| ScenarioError::at(i, m))?;
        clock.advance_to(step.at);
        let sub = agent.submit_intent(&text, &step.from);
        steps.push(StepReport {
            step: i,
            at: step.at,
            from: step.from.clone(),
            agent_id: agent.id().to_string(),
            session_id: sub.session_id,
            result: sub.result,
            escalation_count: sub.escalation_count,
            agent_chain: sub.agent_chain,
            completed_at: sub.completed_at,
        });
    }

    let audit_records = audit.lock().unwrap().records().len();
    let sessions_closed = agents.iter().map(|a| a.sessions().closed_count()).sum();
    Ok(ScenarioReport {
        seed: scenario.seed,
        steps,
        audit_path: audit_path.map(Path::to_path_buf),
        audit_records,
        sessions_closed,
        final_state: state.snapshot(),
    })
}

/// The agent a node reaches first: the one serving the nearest enclosing
/// subnet, falling back to agents without a subnet restriction.
fn local_agent<'a>(agents: &'a [Arc<Agent>], state: &StateHandle, node: &str) -> Result<&'a Arc<Agent>, String> {
    let chain = {
        let s = state.lock();
        let n = s.topology.node(node).ok_or_else(|| format!("unknown node '{node}'"))?;
        s.topology.subnet_chain(&n.subnet)
    };
    chain
        .iter()
        .find_map(|sub| agents.iter().find(|a| a.config().scope_subnet.as_deref() == Some(sub)))
        .or_else(|| agents.iter().find(|a| a.config().scope_subnet.is_none()))
        .ok_or_else(|| format!("no agent serves node '{node}'"))
}
