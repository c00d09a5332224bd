// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::MediationResult;
use crate::compiler::ReificationPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Created,
    Mediating,
    Reified,
    Failed,
    Escalated,
    Closed,
}

impl SessionState {
    fn may_become(self, next: SessionState) -> bool {
        use SessionState::*;
        matches!(
            (self, next),
            (Created, Mediating)
                | (Created, Failed)
                | (Mediating, Reified | Failed | Escalated)
                | (Reified | Failed | Escalated, Closed)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub state: SessionState,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: Uuid,
    pub agent_id: String,
    pub intent_text: String,
    pub requester: String,
    pub plan: Option<ReificationPlan>,
    pub result: Option<MediationResult>,
    pub history: Vec<Transition>,
    pub escalation_count: u32,
    pub agent_chain: Vec<String>,
}

impl Session {
    pub fn new(session_id: Uuid, agent_id: &str, intent_text: &str, requester: &str, now: u64) -> Self {
        Session {
            session_id,
            agent_id: agent_id.to_string(),
            intent_text: intent_text.to_string(),
            requester: requester.to_string(),
            plan: None,
            result: None,
            history: vec![Transition {
                state: SessionState::Created,
                at: now,
            }],
            escalation_count: 0,
            agent_chain: vec![agent_id.to_string()],
        }
    }

    pub fn state(&self) -> SessionState {
        self.history.last().expect("history starts with Created").state
    }

    pub fn created_at(&self) -> u64 {
        self.history[0].at
    }

    pub fn closed_at(&self) -> Option<u64> {
        (self.state() == SessionState::Closed).then(|| self.history.last().unwrap().at)
    }

    /// Appends a lifecycle step. Illegal steps are programming errors.
    pub fn advance(&mut self, next: SessionState, at: u64) {
        let cur = self.state();
        assert!(cur.may_become(next), "session {}: {cur:?} -> {next:?}", self.session_id);
        self.history.push(Transition { state: next, at });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: Uuid,
    pub state: SessionState,
    pub requester: String,
    pub intent_text: String,
    pub outcome: Option<String>,
    pub escalation_count: u32,
    pub created_at: u64,
    pub closed_at: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionStore {
    sessions: Vec<Session>,
}

impl SessionStore {
    pub fn insert(&mut self, session: Session) {
        assert!(
            self.get(session.session_id).is_none(),
            "duplicate session id {}",
            session.session_id
        );
        self.sessions.push(session);
    }

    pub fn get(&self, id: Uuid) -> Option<&Session> {
        self.sessions.iter().rev().find(|s| s.session_id == id)
    }

    pub fn get_mut(&mut self, id: Uuid) -> Option<&mut Session> {
        self.sessions.iter_mut().rev().find(|s| s.session_id == id)
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn closed_count(&self) -> usize {
        self.sessions
            .iter()
            .filter(|s| s.state() == SessionState::Closed)
            .count()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Session> {
        self.sessions.iter()
    }

    pub fn summaries(&self) -> Vec<SessionSummary> {
        self.sessions
            .iter()
            .map(|s| SessionSummary {
                session_id: s.session_id,
                state: s.state(),
                requester: s.requester.clone(),
                intent_text: s.intent_text.clone(),
                outcome: s.result.as_ref().map(|r| r.kind().to_string()),
                escalation_count: s.escalation_count,
                created_at: s.created_at(),
                closed_at: s.closed_at(),
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("sessions serialize");
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, path)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifecycle_is_append_only() {
        let mut s = Session::new(Uuid::nil(), "a", "<pull, x, NULL>", "n", 3);
        s.advance(SessionState::Mediating, 3);
        s.advance(SessionState::Escalated, 5);
        s.advance(SessionState::Closed, 9);
        assert_eq!(s.created_at(), 3);
        assert_eq!(s.closed_at(), Some(9));
        let states: Vec<_> = s.history.iter().map(|t| t.state).collect();
        assert_eq!(
            states,
            [
                SessionState::Created,
                SessionState::Mediating,
                SessionState::Escalated,
                SessionState::Closed
            ]
        );
    }

    #[test]
    #[should_panic]
    fn cannot_reopen() {
        let mut s = Session::new(Uuid::nil(), "a", "", "n", 0);
        s.advance(SessionState::Failed, 0);
        s.advance(SessionState::Closed, 0);
        s.advance(SessionState::Mediating, 0);
    }

    #[test]
    fn store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sessions.json");
        let mut store = SessionStore::default();
        store.insert(Session::new(Uuid::from_u128(7), "a", "<pull, x, NULL>", "n", 0));
        store.save(&path).unwrap();
        assert_eq!(SessionStore::load(&path).unwrap(), store);
        assert_eq!(store.closed_count(), 0);
    }
}
