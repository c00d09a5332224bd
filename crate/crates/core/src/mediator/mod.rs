// SPDX-License-Identifier: Apache-2.0

//! The mediation agent: candidate selection, sessions, escalation through
//! the agent hierarchy and the newline-delimited JSON wire protocol.

mod agent;
mod engine;
pub mod eval;
mod server;
mod session;
mod transport;
pub mod wire;

use serde::{Deserialize, Serialize};

use crate::compiler::Constraint;
use crate::simnet::{attr_map, Attributes};

pub use agent::{Agent, AgentConfig, AgentError, SessionIds, Submission};
pub use engine::{
    commit, mediate, plan_tally, ActionBinding, Binding, MediationContext, Mediation, MediationResult, Tally,
};
pub use server::{serve, ServerHandle};
pub use session::{Session, SessionState, SessionStore, SessionSummary};
pub use transport::{InProcessTransport, TcpTransport, Transport, TransportError};

/// A node, optionally one of its services, as seen from the requester.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub node_id: String,
    /// Empty when the candidate is a bare node.
    #[serde(default)]
    pub service_name: String,
    #[serde(with = "attr_map")]
    pub attributes: Attributes,
}

/// Operator or stakeholder preference. When every predicate constraint
/// holds for a candidate, `utility_delta` is added to its score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRule {
    pub stakeholder_id: String,
    #[serde(with = "predicates")]
    pub predicate: Vec<Constraint>,
    pub utility_delta: f64,
    #[serde(default)]
    pub priority: i64,
}

impl PolicyRule {
    pub fn new(stakeholder_id: &str, predicate: &[&str], utility_delta: f64, priority: i64) -> Self {
        PolicyRule {
            stakeholder_id: stakeholder_id.to_string(),
            predicate: predicate
                .iter()
                .map(|p| {
                    Constraint::parse_predicate(p, crate::compiler::Hardness::Hard)
                        .unwrap_or_else(|| panic!("malformed predicate {p:?}"))
                })
                .collect(),
            utility_delta,
            priority,
        }
    }

    pub fn matches(&self, attrs: &Attributes) -> bool {
        self.predicate.iter().all(|c| eval::constraint_holds(c, attrs))
    }
}

/// Rules in evaluation order: (priority, stakeholder_id, position).
pub fn ordered_policies(rules: &[PolicyRule]) -> Vec<&PolicyRule> {
    let mut idx: Vec<usize> = (0..rules.len()).collect();
    idx.sort_by(|&a, &b| {
        (rules[a].priority, &rules[a].stakeholder_id, a).cmp(&(rules[b].priority, &rules[b].stakeholder_id, b))
    });
    idx.into_iter().map(|i| &rules[i]).collect()
}

/// Policy predicates are written as `key<cmp>value` strings.
mod predicates {
    use crate::compiler::{Constraint, Hardness};
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(list: &[Constraint], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(list.iter().map(|c| c.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Constraint>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|p| {
                Constraint::parse_predicate(p, Hardness::Hard)
                    .ok_or_else(|| D::Error::custom(format!("malformed predicate {p:?}")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_json_round_trip() {
        let text = r#"{"stakeholder_id":"isp","predicate":["asn=999","rtt<=40ms"],"utility_delta":-10}"#;
        let rule: PolicyRule = serde_json::from_str(text).unwrap();
        assert_eq!(rule, PolicyRule::new("isp", &["asn=999", "rtt<=40ms"], -10.0, 0));
        let back: PolicyRule = serde_json::from_str(&serde_json::to_string(&rule).unwrap()).unwrap();
        assert_eq!(back, rule);
        assert!(serde_json::from_str::<PolicyRule>(
            r#"{"stakeholder_id":"x","predicate":["nonsense"],"utility_delta":1}"#
        )
        .is_err());
    }

    #[test]
    fn policy_order() {
        let rules = vec![
            PolicyRule::new("b", &[], 1.0, 1),
            PolicyRule::new("a", &[], 1.0, 1),
            PolicyRule::new("z", &[], 1.0, 0),
        ];
        let ids: Vec<&str> = ordered_policies(&rules).iter().map(|r| r.stakeholder_id.as_str()).collect();
        assert_eq!(ids, ["z", "a", "b"]);
    }
}
