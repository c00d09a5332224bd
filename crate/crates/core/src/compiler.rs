// SPDX-License-Identifier: Apache-2.0

//! Lowers a validated intent into a [`ReificationPlan`]: one primitive action
//! per sentence, innermost subject first, each parent referring back to the
//! action that realizes its subject.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lang::{Comparator, IntentExpr, ModifierAtom, Priority, SubjectExpr, TypedValue};
use crate::ontology::{validate_intent, OntologyRegistry, ValidationError, VerbCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hardness {
    Hard,
    Soft,
}

impl From<Priority> for Hardness {
    fn from(p: Priority) -> Self {
        match p {
            Priority::Essential => Hardness::Hard,
            Priority::Desirable => Hardness::Soft,
        }
    }
}

impl From<Hardness> for Priority {
    fn from(h: Hardness) -> Self {
        match h {
            Hardness::Hard => Priority::Essential,
            Hardness::Soft => Priority::Desirable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub key: String,
    pub comparator: Comparator,
    pub value: TypedValue,
    pub hardness: Hardness,
}

impl Constraint {
    pub fn new(key: &str, comparator: Comparator, value: TypedValue, hardness: Hardness) -> Self {
        Constraint {
            key: key.to_string(),
            comparator,
            value,
            hardness,
        }
    }

    /// Parses `key<cmp>value`, e.g. `asn=999` or `rtt<=40ms`.
    pub fn parse_predicate(text: &str, hardness: Hardness) -> Option<Constraint> {
        let at = text.find(['=', '<', '>'])?;
        let (key, rest) = text.split_at(at);
        let cmp_len = if rest.len() > 1 && rest.as_bytes()[1] == b'=' && !rest.starts_with('=') {
            2
        } else {
            1
        };
        let (cmp, value) = rest.split_at(cmp_len);
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return None;
        }
        Some(Constraint {
            key: key.to_string(),
            comparator: cmp.parse().ok()?,
            value: TypedValue::parse(value),
            hardness,
        })
    }
}

impl From<&ModifierAtom> for Constraint {
    fn from(atom: &ModifierAtom) -> Self {
        Constraint {
            key: atom.key.clone(),
            comparator: atom.comparator,
            value: atom.value.clone(),
            hardness: atom.priority.into(),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.key, self.comparator, self.value)
    }
}

/// Index of an action within its plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionRef(pub usize);

impl fmt::Display for ActionRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// How an action refers to its subject.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectLink {
    Action(ActionRef),
    Literal(String),
}

impl SubjectLink {
    pub fn action(&self) -> Option<ActionRef> {
        match self {
            SubjectLink::Action(r) => Some(*r),
            SubjectLink::Literal(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegulateKind {
    Prioritize,
    Block,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum PrimitiveAction {
    Discover {
        service_name: String,
        constraints: Vec<Constraint>,
        payload: Option<SubjectLink>,
    },
    Advertize {
        service_name: String,
        constraints: Vec<Constraint>,
        origin: Option<SubjectLink>,
    },
    Connect {
        peer_spec: String,
        constraints: Vec<Constraint>,
        via: Option<SubjectLink>,
    },
    Push {
        content: String,
        constraints: Vec<Constraint>,
        target: Option<SubjectLink>,
        /// Set when the push announces content placed by an earlier push.
        announce: bool,
    },
    Pull {
        content: String,
        constraints: Vec<Constraint>,
        source: Option<SubjectLink>,
    },
    Allocate {
        resource_kind: String,
        constraints: Vec<Constraint>,
        over: Option<SubjectLink>,
    },
    Regulate {
        kind: RegulateKind,
        traffic_spec: String,
        constraints: Vec<Constraint>,
    },
    /// A verb registered at runtime; handled according to its category.
    Extension {
        verb: String,
        category: VerbCategory,
        object: String,
        constraints: Vec<Constraint>,
        subject: Option<SubjectLink>,
    },
}

impl PrimitiveAction {
    pub fn constraints(&self) -> &[Constraint] {
        match self {
            PrimitiveAction::Discover { constraints, .. }
            | PrimitiveAction::Advertize { constraints, .. }
            | PrimitiveAction::Connect { constraints, .. }
            | PrimitiveAction::Push { constraints, .. }
            | PrimitiveAction::Pull { constraints, .. }
            | PrimitiveAction::Allocate { constraints, .. }
            | PrimitiveAction::Regulate { constraints, .. }
            | PrimitiveAction::Extension { constraints, .. } => constraints,
        }
    }

    pub fn link(&self) -> Option<&SubjectLink> {
        match self {
            PrimitiveAction::Discover { payload: l, .. }
            | PrimitiveAction::Advertize { origin: l, .. }
            | PrimitiveAction::Connect { via: l, .. }
            | PrimitiveAction::Push { target: l, .. }
            | PrimitiveAction::Pull { source: l, .. }
            | PrimitiveAction::Allocate { over: l, .. }
            | PrimitiveAction::Extension { subject: l, .. } => l.as_ref(),
            PrimitiveAction::Regulate { .. } => None,
        }
    }

    pub fn verb(&self) -> &str {
        match self {
            PrimitiveAction::Discover { .. } => "discover",
            PrimitiveAction::Advertize { .. } => "advertize",
            PrimitiveAction::Connect { .. } => "connect",
            PrimitiveAction::Push { .. } => "push",
            PrimitiveAction::Pull { .. } => "pull",
            PrimitiveAction::Allocate { .. } => "allocate",
            PrimitiveAction::Regulate {
                kind: RegulateKind::Prioritize,
                ..
            } => "prioritize",
            PrimitiveAction::Regulate {
                kind: RegulateKind::Block,
                ..
            } => "block",
            PrimitiveAction::Extension { verb, .. } => verb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReificationPlan {
    pub actions: Vec<PrimitiveAction>,
    pub root: ActionRef,
}

impl ReificationPlan {
    pub fn get(&self, r: ActionRef) -> Option<&PrimitiveAction> {
        self.actions.get(r.0)
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_canonical_json().as_bytes()))
    }

    /// Every link refers to an earlier action and the root is the last one.
    pub fn is_well_formed(&self) -> bool {
        !self.actions.is_empty()
            && self.root.0 == self.actions.len() - 1
            && self.actions.iter().enumerate().all(|(i, a)| {
                a.link()
                    .and_then(SubjectLink::action)
                    .is_none_or(|r| r.0 < i)
            })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("intent failed validation: {}", join(.0))]
    CompileOnInvalid(Vec<ValidationError>),
    #[error("action {0} is out of range")]
    IndexOutOfRange(ActionRef),
}

fn join(errors: &[ValidationError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn compile(intent: &IntentExpr, reg: &OntologyRegistry) -> Result<ReificationPlan, CompileError> {
    validate_intent(intent, reg).map_err(CompileError::CompileOnInvalid)?;
    let mut actions = Vec::with_capacity(intent.sentence_count());
    let root = lower(intent, reg, &mut actions);
    Ok(ReificationPlan { actions, root })
}

/// The action's own constraints; modifiers never flow across nesting levels.
pub fn plan_constraints(plan: &ReificationPlan, action: ActionRef) -> Result<&[Constraint], CompileError> {
    plan.get(action)
        .map(PrimitiveAction::constraints)
        .ok_or(CompileError::IndexOutOfRange(action))
}

fn lower(intent: &IntentExpr, reg: &OntologyRegistry, out: &mut Vec<PrimitiveAction>) -> ActionRef {
    let link = match &intent.subject {
        SubjectExpr::Null => None,
        SubjectExpr::Identifier(id) => Some(SubjectLink::Literal(id.clone())),
        SubjectExpr::Nested(inner) => Some(SubjectLink::Action(lower(inner, reg, out))),
    };
    let subject_is_push = link
        .as_ref()
        .and_then(SubjectLink::action)
        .is_some_and(|r| matches!(out[r.0], PrimitiveAction::Push { .. }));
    let constraints: Vec<Constraint> = intent.atoms().map(Constraint::from).collect();
    let object = intent.object.clone();

    let action = match intent.verb.as_str() {
        "discover" => PrimitiveAction::Discover {
            service_name: object,
            constraints,
            payload: link,
        },
        "advertize" => PrimitiveAction::Advertize {
            service_name: object,
            constraints,
            origin: link,
        },
        "connect" => PrimitiveAction::Connect {
            peer_spec: object,
            constraints,
            via: link,
        },
        "push" => PrimitiveAction::Push {
            content: object,
            constraints,
            target: link,
            announce: subject_is_push,
        },
        "pull" => PrimitiveAction::Pull {
            content: object,
            constraints,
            source: link,
        },
        "allocate" => PrimitiveAction::Allocate {
            resource_kind: object,
            constraints,
            over: link,
        },
        "prioritize" => PrimitiveAction::Regulate {
            kind: RegulateKind::Prioritize,
            traffic_spec: object,
            constraints,
        },
        "block" => PrimitiveAction::Regulate {
            kind: RegulateKind::Block,
            traffic_spec: object,
            constraints,
        },
        other => {
            let category = reg
                .lookup(other)
                .map(|s| s.category)
                .expect("validated intents only use registered verbs");
            PrimitiveAction::Extension {
                verb: other.to_string(),
                category,
                object,
                constraints,
                subject: link,
            }
        }
    };
    out.push(action);
    ActionRef(out.len() - 1)
}
