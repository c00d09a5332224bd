// SPDX-License-Identifier: Apache-2.0

//! Mediation logs (JSON Lines, append-only) and the scores derived from them.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::mediator::ActionBinding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Reified,
    Failed,
    NonIdnFallback,
    Rejected,
    /// Written by nothing in this crate; readers must still cope with it.
    Pending,
}

impl OutcomeKind {
    pub fn is_terminal(self) -> bool {
        self != OutcomeKind::Pending
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediationLogRecord {
    pub session_id: Uuid,
    pub agent_id: String,
    pub logical_timestamp: u64,
    /// Canonical rendering, or the raw text when it did not parse.
    pub intent: String,
    pub plan_digest: Option<String>,
    pub outcome: OutcomeKind,
    pub bindings: Vec<ActionBinding>,
    pub hard_total: u32,
    pub hard_satisfied: u32,
    pub soft_total: u32,
    pub soft_satisfied: u32,
    pub escalation_count: u32,
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("record {0} has no terminal outcome")]
    NonTerminalRecord(Uuid),
    #[error("no records to score")]
    EmptyWindow,
    #[error("record {0} claims reified with unmet essential constraints")]
    Inconsistent(Uuid),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediationScore {
    pub value: f64,
    pub soft_ratio: f64,
    pub fallback_penalty_applied: bool,
}

pub fn score_session(record: &MediationLogRecord) -> Result<MediationScore, AuditError> {
    let soft_ratio = if record.soft_total == 0 {
        1.0
    } else {
        f64::from(record.soft_satisfied) / f64::from(record.soft_total)
    };
    match record.outcome {
        OutcomeKind::Pending => Err(AuditError::NonTerminalRecord(record.session_id)),
        OutcomeKind::Reified => Ok(MediationScore {
            value: soft_ratio,
            soft_ratio,
            fallback_penalty_applied: false,
        }),
        OutcomeKind::Failed | OutcomeKind::NonIdnFallback | OutcomeKind::Rejected => Ok(MediationScore {
            value: 0.0,
            soft_ratio,
            fallback_penalty_applied: true,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentScore {
    pub agent_id: String,
    pub mean: f64,
    pub count: usize,
    pub failure_fraction: f64,
}

/// Unweighted mean over the records, summed in log order.
pub fn score_agent(records: &[MediationLogRecord]) -> Result<AgentScore, AuditError> {
    let first = records.first().ok_or(AuditError::EmptyWindow)?;
    let mut sum = 0.0;
    let mut failures = 0usize;
    for r in records {
        sum += score_session(r)?.value;
        if r.outcome != OutcomeKind::Reified {
            failures += 1;
        }
    }
    let n = records.len() as f64;
    Ok(AgentScore {
        agent_id: first.agent_id.clone(),
        mean: sum / n,
        count: records.len(),
        failure_fraction: failures as f64 / n,
    })
}

/// Aggregates per agent, keyed by agent id.
pub fn score_by_agent(records: &[MediationLogRecord]) -> Result<BTreeMap<String, AgentScore>, AuditError> {
    let mut groups: BTreeMap<&str, Vec<MediationLogRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(&r.agent_id).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(id, rs)| Ok((id.to_string(), score_agent(&rs)?)))
        .collect()
}

pub fn parse_log(text: &str) -> Result<Vec<MediationLogRecord>, AuditError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let rec: MediationLogRecord = serde_json::from_str(l).map_err(|e| AuditError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            if rec.outcome == OutcomeKind::Reified && rec.hard_satisfied != rec.hard_total {
                return Err(AuditError::Inconsistent(rec.session_id));
            }
            Ok(rec)
        })
        .collect()
}

pub fn read_log(path: &Path) -> Result<Vec<MediationLogRecord>, AuditError> {
    parse_log(&std::fs::read_to_string(path)?)
}

/// Append-only log. Timestamps are forced to increase strictly per agent.
#[derive(Debug, Default)]
pub struct AuditLog {
    path: Option<PathBuf>,
    file: Option<File>,
    records: Vec<MediationLogRecord>,
    last_ts: BTreeMap<String, u64>,
}

pub type SharedAuditLog = Arc<Mutex<AuditLog>>;

impl AuditLog {
    pub fn in_memory() -> Self {
        AuditLog::default()
    }

    /// Starts a fresh log at `path`, truncating any previous contents.
    pub fn create(path: &Path) -> Result<Self, AuditError> {
        let file = File::create(path)?;
        Ok(AuditLog {
            path: Some(path.to_path_buf()),
            file: Some(file),
            ..AuditLog::default()
        })
    }

    /// Continues an existing log, or starts one.
    pub fn open_append(path: &Path) -> Result<Self, AuditError> {
        let records = if path.exists() { read_log(path)? } else { Vec::new() };
        let mut last_ts = BTreeMap::new();
        for r in &records {
            last_ts.insert(r.agent_id.clone(), r.logical_timestamp);
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog {
            path: Some(path.to_path_buf()),
            file: Some(file),
            records,
            last_ts,
        })
    }

    pub fn shared(self) -> SharedAuditLog {
        Arc::new(Mutex::new(self))
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn records(&self) -> &[MediationLogRecord] {
        &self.records
    }

    pub fn append(&mut self, mut record: MediationLogRecord) -> Result<MediationLogRecord, AuditError> {
        if let Some(&last) = self.last_ts.get(&record.agent_id) {
            record.logical_timestamp = record.logical_timestamp.max(last + 1);
        }
        if let Some(file) = &mut self.file {
            let mut line = serde_json::to_string(&record).expect("record serializes");
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        self.last_ts.insert(record.agent_id.clone(), record.logical_timestamp);
        self.records.push(record.clone());
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(outcome: OutcomeKind, soft: (u32, u32)) -> MediationLogRecord {
        MediationLogRecord {
            session_id: Uuid::nil(),
            agent_id: "a".into(),
            logical_timestamp: 0,
            intent: "<pull, x, NULL>".into(),
            plan_digest: None,
            outcome,
            bindings: vec![],
            hard_total: 0,
            hard_satisfied: 0,
            soft_total: soft.1,
            soft_satisfied: soft.0,
            escalation_count: 0,
        }
    }

    #[test]
    fn session_scores() {
        assert_eq!(score_session(&record(OutcomeKind::Reified, (2, 2))).unwrap().value, 1.0);
        assert_eq!(score_session(&record(OutcomeKind::Reified, (1, 2))).unwrap().value, 0.5);
        assert_eq!(score_session(&record(OutcomeKind::Reified, (0, 0))).unwrap().value, 1.0);
        let fb = score_session(&record(OutcomeKind::NonIdnFallback, (0, 0))).unwrap();
        assert_eq!(fb.value, 0.0);
        assert!(fb.fallback_penalty_applied);
        assert!(matches!(
            score_session(&record(OutcomeKind::Pending, (0, 0))),
            Err(AuditError::NonTerminalRecord(_))
        ));
    }

    #[test]
    fn agent_scores() {
        let rs = [
            record(OutcomeKind::Reified, (1, 1)),
            record(OutcomeKind::Reified, (1, 2)),
            record(OutcomeKind::Failed, (0, 1)),
        ];
        let s = score_agent(&rs).unwrap();
        assert_eq!(s.mean, 0.5);
        assert_eq!(s.count, 3);
        assert_eq!(s.failure_fraction, 1.0 / 3.0);
        assert_eq!(score_agent(&rs[..1]).unwrap().mean, 1.0);
        assert!(matches!(score_agent(&[]), Err(AuditError::EmptyWindow)));
    }

    #[test]
    fn replay_matches_and_timestamps_increase() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        let mut log = AuditLog::create(&path).unwrap();
        for (o, s) in [
            (OutcomeKind::Reified, (1, 2)),
            (OutcomeKind::Reified, (2, 2)),
            (OutcomeKind::Rejected, (0, 0)),
        ] {
            log.append(record(o, s)).unwrap();
        }
        let ts: Vec<u64> = log.records().iter().map(|r| r.logical_timestamp).collect();
        assert_eq!(ts, [0, 1, 2]);
        let replay = read_log(&path).unwrap();
        assert_eq!(replay, log.records());
        assert_eq!(
            score_by_agent(&replay).unwrap()["a"].mean.to_bits(),
            score_agent(log.records()).unwrap().mean.to_bits()
        );
        let mut again = AuditLog::open_append(&path).unwrap();
        let r = again.append(record(OutcomeKind::Failed, (0, 0))).unwrap();
        assert_eq!(r.logical_timestamp, 3);
        assert_eq!(read_log(&path).unwrap().len(), 4);
    }

    #[test]
    fn malformed_lines_are_reported() {
        assert!(matches!(
            parse_log("{}\n"),
            Err(AuditError::Malformed { line: 1, .. })
        ));
    }
}
