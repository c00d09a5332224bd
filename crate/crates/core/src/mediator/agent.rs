// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use super::engine::{commit, mediate, plan_tally, Mediation, MediationContext, MediationResult, Tally};
use super::session::{Session, SessionState, SessionStore};
use super::transport::Transport;
use super::wire::{self, codes, Ack, Message, ResultBody, Sessions};
use super::PolicyRule;
use crate::audit::{AuditError, AuditLog, MediationLogRecord, OutcomeKind, SharedAuditLog};
use crate::compiler::{compile, CompileError, ReificationPlan};
use crate::lang::{parse, render};
use crate::ontology::{builtin_ontology, OntologyError, OntologyRegistry};
use crate::simnet::{load_topology, Attributes, Clock, NetworkState, SimError, StateHandle};

fn default_timeout() -> u64 {
    2000
}

fn default_max_escalations() -> u32 {
    3
}

fn default_w_soft() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub agent_id: String,
    /// 0 for agents serving a leaf subnet.
    #[serde(default)]
    pub scope_level: u32,
    /// Subnet whose subtree this agent mediates for; all nodes when absent.
    #[serde(default)]
    pub scope_subnet: Option<String>,
    /// Address the agent is reached at (host:port, or a name in simulation).
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub parent_endpoint: Option<String>,
    #[serde(default = "default_timeout")]
    pub mediation_timeout_ms: u64,
    #[serde(default = "default_max_escalations")]
    pub max_escalations: u32,
    #[serde(default)]
    pub policies: Vec<PolicyRule>,
    #[serde(default = "default_w_soft")]
    pub w_soft: f64,
    #[serde(default)]
    pub ontology: Option<PathBuf>,
    #[serde(default)]
    pub topology: Option<PathBuf>,
    #[serde(default)]
    pub state_file: Option<PathBuf>,
    #[serde(default)]
    pub session_store: Option<PathBuf>,
    #[serde(default)]
    pub audit_log: Option<PathBuf>,
}

impl AgentConfig {
    pub fn new(agent_id: &str) -> Self {
        AgentConfig {
            agent_id: agent_id.to_string(),
            scope_level: 0,
            scope_subnet: None,
            endpoint: None,
            parent_endpoint: None,
            mediation_timeout_ms: default_timeout(),
            max_escalations: default_max_escalations(),
            policies: Vec::new(),
            w_soft: default_w_soft(),
            ontology: None,
            topology: None,
            state_file: None,
            session_store: None,
            audit_log: None,
        }
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path).map_err(|e| AgentError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg: AgentConfig =
            serde_json::from_str(&text).map_err(|e| AgentError::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.check()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.ontology,
            &mut self.topology,
            &mut self.state_file,
            &mut self.session_store,
            &mut self.audit_log,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn check(&self) -> Result<(), AgentError> {
        if self.agent_id.is_empty() {
            return Err(AgentError::Config("agent_id must not be empty".into()));
        }
        if !self.w_soft.is_finite() || self.w_soft < 0.0 {
            return Err(AgentError::Config("w_soft must be a finite non-negative number".into()));
        }
        if let Some(r) = self.policies.iter().find(|r| !r.utility_delta.is_finite()) {
            return Err(AgentError::Config(format!(
                "policy of {} has a non-finite utility_delta",
                r.stakeholder_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error(transparent)]
    Audit(#[from] AuditError),
}

/// Source of session identifiers: seeded for reproducible runs, random in
/// service mode.
#[derive(Debug)]
pub enum SessionIds {
    Seeded(Box<ChaCha8Rng>),
    Random,
}

impl SessionIds {
    pub fn seeded(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        SessionIds::Seeded(Box::new(rng))
    }

    pub fn next_id(&mut self) -> Uuid {
        match self {
            SessionIds::Seeded(rng) => {
                let mut bytes = [0u8; 16];
                rng.fill_bytes(&mut bytes);
                uuid::Builder::from_random_bytes(bytes).into_uuid()
            }
            SessionIds::Random => Uuid::new_v4(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub session_id: Uuid,
    pub result: MediationResult,
    pub escalation_count: u32,
    pub agent_chain: Vec<String>,
    /// Clock reading when the session closed.
    pub completed_at: u64,
}

enum Local {
    Done(Mediation),
    TimedOut,
}

pub struct Agent {
    config: AgentConfig,
    ontology: Arc<OntologyRegistry>,
    state: StateHandle,
    clock: Arc<dyn Clock>,
    transport: Arc<dyn Transport>,
    sessions: Mutex<SessionStore>,
    audit: SharedAuditLog,
    ids: Mutex<SessionIds>,
    latency_ms: AtomicU64,
    shutdown: AtomicBool,
}

impl Agent {
    pub fn new(config: AgentConfig, state: StateHandle, clock: Arc<dyn Clock>, transport: Arc<dyn Transport>) -> Self {
        Agent {
            config,
            ontology: Arc::new(builtin_ontology()),
            state,
            clock,
            transport,
            sessions: Mutex::new(SessionStore::default()),
            audit: AuditLog::in_memory().shared(),
            ids: Mutex::new(SessionIds::Random),
            latency_ms: AtomicU64::new(0),
            shutdown: AtomicBool::new(false),
        }
    }

    pub fn with_ontology(mut self, ontology: Arc<OntologyRegistry>) -> Self {
        self.ontology = ontology;
        self
    }

    pub fn with_audit(mut self, audit: SharedAuditLog) -> Self {
        self.audit = audit;
        self
    }

    pub fn with_session_ids(mut self, ids: SessionIds) -> Self {
        self.ids = Mutex::new(ids);
        self
    }

    pub fn with_sessions(mut self, store: SessionStore) -> Self {
        self.sessions = Mutex::new(store);
        self
    }

    /// Builds a service-mode agent from its config file entries: persistent
    /// state, appended audit log, restored sessions.
    pub fn from_config(config: AgentConfig, clock: Arc<dyn Clock>, transport: Arc<dyn Transport>) -> Result<Self, AgentError> {
        let ontology = match &config.ontology {
            Some(p) => OntologyRegistry::from_json(&read(p)?)?,
            None => builtin_ontology(),
        };
        let initial = || -> Result<NetworkState, SimError> {
            let path = config
                .topology
                .as_ref()
                .ok_or_else(|| SimError::Io("config names neither an existing state_file nor a topology".into()))?;
            let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
            Ok(NetworkState::new(load_topology(&text)?))
        };
        let state = match &config.state_file {
            Some(p) => StateHandle::persistent(p, initial)?,
            None => StateHandle::new(initial()?),
        };
        let audit = match &config.audit_log {
            Some(p) => AuditLog::open_append(p)?,
            None => AuditLog::in_memory(),
        };
        let sessions = match &config.session_store {
            Some(p) if p.exists() => SessionStore::load(p).map_err(|e| AgentError::Io(format!("{}: {e}", p.display())))?,
            _ => SessionStore::default(),
        };
        Ok(Agent::new(config, state, clock, transport)
            .with_ontology(Arc::new(ontology))
            .with_audit(audit.shared())
            .with_sessions(sessions))
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn id(&self) -> &str {
        &self.config.agent_id
    }

    pub fn state(&self) -> &StateHandle {
        &self.state
    }

    pub fn audit(&self) -> &SharedAuditLog {
        &self.audit
    }

    pub fn sessions(&self) -> SessionStore {
        self.sessions.lock().unwrap().clone()
    }

    /// Simulated processing time of one local mediation.
    pub fn set_latency_ms(&self, ms: u64) {
        self.latency_ms.store(ms, Ordering::SeqCst);
    }

    pub fn latency_ms(&self) -> u64 {
        self.latency_ms.load(Ordering::SeqCst)
    }

    pub fn is_shut_down(&self) -> bool {
        self.shutdown.load(Ordering::SeqCst)
    }

    pub fn request_shutdown(&self) {
        self.shutdown.store(true, Ordering::SeqCst);
    }

    pub fn save_sessions(&self) -> std::io::Result<()> {
        match &self.config.session_store {
            Some(p) => self.sessions.lock().unwrap().save(p),
            None => Ok(()),
        }
    }

    fn prepare(&self, text: &str) -> Result<(String, ReificationPlan), Vec<String>> {
        let intent = parse(text).map_err(|e| e.diagnostics.iter().map(|d| d.to_string()).collect::<Vec<_>>())?;
        let plan = compile(&intent, &self.ontology).map_err(|e| match e {
            CompileError::CompileOnInvalid(errs) => errs.iter().map(|v| v.to_string()).collect(),
            other => vec![other.to_string()],
        })?;
        Ok((render(&intent), plan))
    }

    fn mediate_local(&self, plan: &ReificationPlan, requester: &str) -> Local {
        let timeout = self.config.mediation_timeout_ms;
        let latency = self.latency_ms();
        if latency > timeout {
            self.clock.advance(timeout);
            return Local::TimedOut;
        }
        self.clock.advance(latency);
        let outcome = self.state.update(|s| {
            let scope: Option<BTreeSet<String>> =
                self.config.scope_subnet.as_deref().map(|sub| s.topology.nodes_in_scope(sub));
            let ctx = MediationContext {
                state: s,
                requester,
                scope: scope.as_ref(),
                policies: &self.config.policies,
                w_soft: self.config.w_soft,
            };
            match mediate(plan, &ctx) {
                Mediation::Reified {
                    mut bindings,
                    score,
                    tally,
                } => {
                    let mut next = s.clone();
                    match commit(&mut bindings, &mut next, requester) {
                        Ok(()) => {
                            *s = next;
                            Ok(Mediation::Reified {
                                bindings,
                                score,
                                tally,
                            })
                        }
                        Err(e) => Ok(Mediation::Failed {
                            action: plan.root,
                            unsatisfied: Vec::new(),
                            reason: e.to_string(),
                            tally: Tally {
                                hard_satisfied: 0,
                                soft_satisfied: 0,
                                ..tally
                            },
                        }),
                    }
                }
                failed => Ok(failed),
            }
        });
        Local::Done(outcome.unwrap_or_else(|e| Mediation::Failed {
            action: plan.root,
            unsatisfied: Vec::new(),
            reason: format!("state unavailable: {e}"),
            tally: plan_tally(plan),
        }))
    }

    fn requester_known(&self, requester: &str) -> bool {
        self.state.lock().topology.node(requester).is_some()
    }

    /// Parses, compiles and mediates one intent, escalating when needed.
    /// Always opens and closes exactly one session and writes exactly one
    /// audit record.
    pub fn submit_intent(&self, text: &str, requester: &str) -> Submission {
        let id = self.ids.lock().unwrap().next_id();
        self.sessions
            .lock()
            .unwrap()
            .insert(Session::new(id, self.id(), text, requester, self.clock.now_ms()));

        let prepared = self.prepare(text).and_then(|p| {
            if self.requester_known(requester) {
                Ok(p)
            } else {
                Err(vec![format!("unknown requester '{requester}'")])
            }
        });
        let (canonical, plan) = match prepared {
            Ok(p) => p,
            Err(errors) => {
                let result = MediationResult::Rejected { errors };
                self.transition(id, SessionState::Failed, None);
                return self.close(id, text, None, result, Tally::default(), 0, vec![]);
            }
        };
        self.transition(id, SessionState::Mediating, Some(&plan));

        let local = self.mediate_local(&plan, requester);
        let (result, tally, hops, chain, state) = match local {
            Local::Done(Mediation::Reified {
                bindings,
                score,
                tally,
            }) => (
                MediationResult::Reified {
                    bindings,
                    score,
                    tally,
                },
                tally,
                0,
                vec![],
                SessionState::Reified,
            ),
            Local::Done(failed @ Mediation::Failed { .. }) if self.config.parent_endpoint.is_none() => {
                let Mediation::Failed { tally, .. } = &failed else { unreachable!() };
                let tally = *tally;
                (failed.into(), tally, 0, vec![], SessionState::Failed)
            }
            Local::TimedOut if self.config.parent_endpoint.is_none() => (
                fallback("no wider scope"),
                plan_tally(&plan),
                0,
                vec![],
                SessionState::Failed,
            ),
            other => {
                let local_tally = match &other {
                    Local::Done(Mediation::Failed { tally, .. }) => *tally,
                    _ => plan_tally(&plan),
                };
                self.transition(id, SessionState::Escalated, None);
                let (result, hops, chain) = self.escalate(text, requester, 0);
                let tally = match &result {
                    MediationResult::Reified { tally, .. } => *tally,
                    _ => local_tally,
                };
                (result, tally, hops, chain, SessionState::Escalated)
            }
        };
        if state != SessionState::Escalated {
            self.transition(id, state, None);
        }
        self.close(id, &canonical, Some(&plan), result, tally, hops, chain)
    }

    /// Asks the parent to mediate on our behalf. `hops` is the number of
    /// escalations already made for this intent.
    pub fn escalate(&self, text: &str, requester: &str, hops: u32) -> (MediationResult, u32, Vec<String>) {
        if hops >= self.config.max_escalations {
            return (fallback("escalation limit reached"), hops, vec![]);
        }
        let Some(parent) = &self.config.parent_endpoint else {
            return (fallback("no wider scope"), hops, vec![]);
        };
        let msg = Message::Escalate(wire::Escalate {
            intent_text: text.to_string(),
            requester: requester.to_string(),
            hop_count: hops + 1,
        });
        match self.transport.request(parent, msg, self.config.mediation_timeout_ms) {
            Ok(Message::Result(body)) => (body.outcome, body.escalation_count, body.agent_chain),
            Ok(Message::Error(e)) => (fallback(&format!("parent refused: {}", e.message)), hops + 1, vec![]),
            Ok(other) => (
                fallback(&format!("parent answered with {}", other.type_name())),
                hops + 1,
                vec![],
            ),
            Err(e) => (fallback(&format!("parent unreachable: {e}")), hops + 1, vec![]),
        }
    }

    /// Mediates an intent escalated by a child agent. No session or audit
    /// record is kept here; the originating agent records the outcome.
    pub fn handle_escalate(&self, req: &wire::Escalate) -> ResultBody {
        let me = vec![self.id().to_string()];
        let answer = |outcome, escalation_count, agent_chain| ResultBody {
            session_id: None,
            outcome,
            escalation_count,
            agent_chain,
        };
        let (_, plan) = match self.prepare(&req.intent_text) {
            Ok(p) => p,
            Err(errors) => return answer(MediationResult::Rejected { errors }, req.hop_count, me),
        };
        if !self.requester_known(&req.requester) {
            return answer(
                fallback(&format!("requester '{}' unknown at this scope", req.requester)),
                req.hop_count,
                me,
            );
        }
        let local = self.mediate_local(&plan, &req.requester);
        if let Local::Done(Mediation::Reified {
            bindings,
            score,
            tally,
        }) = local
        {
            return answer(
                MediationResult::Reified {
                    bindings,
                    score,
                    tally,
                },
                req.hop_count,
                me,
            );
        }
        if self.config.parent_endpoint.is_some() {
            let (outcome, hops, chain) = self.escalate(&req.intent_text, &req.requester, req.hop_count);
            let mut full = me;
            full.extend(chain);
            return answer(outcome, hops, full);
        }
        let reason = match local {
            Local::Done(Mediation::Failed { unsatisfied, .. }) if !unsatisfied.is_empty() => format!(
                "scopes exhausted, unmet: {}",
                unsatisfied.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")
            ),
            Local::Done(Mediation::Failed { reason, .. }) => format!("scopes exhausted: {reason}"),
            _ => "scopes exhausted: mediation timed out".to_string(),
        };
        answer(fallback(&reason), req.hop_count, me)
    }

    /// Registers or refreshes `service` on `node`.
    pub fn handle_advertize(&self, service: &str, attrs: Attributes, node: &str) -> Result<bool, SimError> {
        self.state.update(|s| s.advertize(node, service, attrs))
    }

    fn transition(&self, id: Uuid, to: SessionState, plan: Option<&ReificationPlan>) {
        let now = self.clock.now_ms();
        let mut store = self.sessions.lock().unwrap();
        let s = store.get_mut(id).expect("session exists");
        if let Some(plan) = plan {
            s.plan = Some(plan.clone());
        }
        s.advance(to, now);
    }

    #[allow(clippy::too_many_arguments)]
    fn close(
        &self,
        id: Uuid,
        intent: &str,
        plan: Option<&ReificationPlan>,
        result: MediationResult,
        tally: Tally,
        hops: u32,
        chain: Vec<String>,
    ) -> Submission {
        let now = self.clock.now_ms();
        let mut agent_chain = vec![self.id().to_string()];
        agent_chain.extend(chain);
        {
            let mut store = self.sessions.lock().unwrap();
            let s = store.get_mut(id).expect("session exists");
            s.result = Some(result.clone());
            s.escalation_count = hops;
            s.agent_chain = agent_chain.clone();
            s.advance(SessionState::Closed, now);
        }
        let outcome = match &result {
            MediationResult::Reified { .. } => OutcomeKind::Reified,
            MediationResult::Failed { .. } => OutcomeKind::Failed,
            MediationResult::NonIdnFallback { .. } => OutcomeKind::NonIdnFallback,
            MediationResult::Rejected { .. } => OutcomeKind::Rejected,
        };
        let bindings = match &result {
            MediationResult::Reified { bindings, .. } => bindings.clone(),
            _ => Vec::new(),
        };
        let record = MediationLogRecord {
            session_id: id,
            agent_id: self.id().to_string(),
            logical_timestamp: now,
            intent: intent.to_string(),
            plan_digest: plan.map(ReificationPlan::digest),
            outcome,
            bindings,
            hard_total: tally.hard_total,
            hard_satisfied: tally.hard_satisfied,
            soft_total: tally.soft_total,
            soft_satisfied: tally.soft_satisfied,
            escalation_count: hops,
        };
        if let Err(e) = self.audit.lock().unwrap().append(record) {
            eprintln!("audit append failed for session {id}: {e}");
        }
        Submission {
            session_id: id,
            result,
            escalation_count: hops,
            agent_chain,
            completed_at: now,
        }
    }

    pub fn handle(&self, msg: Message) -> Message {
        match msg {
            Message::SubmitIntent(req) => {
                let sub = self.submit_intent(&req.intent_text, &req.requester);
                Message::Result(Box::new(ResultBody {
                    session_id: Some(sub.session_id),
                    outcome: sub.result,
                    escalation_count: sub.escalation_count,
                    agent_chain: sub.agent_chain,
                }))
            }
            Message::Escalate(req) => Message::Result(Box::new(self.handle_escalate(&req))),
            Message::Advertize(req) => match self.handle_advertize(&req.service, req.attrs, &req.node) {
                Ok(refreshed) => Message::Ack(Ack {
                    detail: format!(
                        "{} {} on {}",
                        if refreshed { "refreshed" } else { "registered" },
                        req.service,
                        req.node
                    ),
                }),
                Err(e) => Message::error(codes::REJECTED, e.to_string()),
            },
            Message::Ping => Message::Pong,
            Message::ListSessions => Message::Sessions(Sessions {
                sessions: self.sessions.lock().unwrap().summaries(),
            }),
            Message::Shutdown => {
                self.request_shutdown();
                Message::Ack(Ack {
                    detail: "shutting down".into(),
                })
            }
            other => Message::error(
                codes::UNEXPECTED,
                format!("{} is not a request", other.type_name()),
            ),
        }
    }

    /// Answers one line of the wire protocol with one line.
    pub fn handle_line(&self, line: &str) -> String {
        let reply = match wire::decode(line) {
            Ok((id, msg)) => self.handle(msg).into_envelope(id),
            Err((id, e)) => Message::Error(e).into_envelope(id),
        };
        wire::encode(&reply)
    }
}

fn fallback(reason: &str) -> MediationResult {
    MediationResult::NonIdnFallback {
        reason: reason.to_string(),
    }
}

fn read(path: &Path) -> Result<String, AgentError> {
    std::fs::read_to_string(path).map_err(|e| AgentError::Io(format!("{}: {e}", path.display())))
}
