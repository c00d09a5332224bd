// SPDX-License-Identifier: Apache-2.0

//! Verb ontology: which verbs exist, their category, and which subject forms
//! each accepts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content_ref::{classify, ContentRef};
use crate::lang::{is_verb, IntentExpr, SubjectExpr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerbCategory {
    Construct,
    Transfer,
    Regulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Service,
    Content,
    Resource,
    TrafficClass,
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectKind {
    Null,
    Identifier,
    Nested,
}

impl SubjectKind {
    pub const ALL: [SubjectKind; 3] = [SubjectKind::Null, SubjectKind::Identifier, SubjectKind::Nested];

    pub fn of(subject: &SubjectExpr) -> Self {
        match subject {
            SubjectExpr::Null => SubjectKind::Null,
            SubjectExpr::Identifier(_) => SubjectKind::Identifier,
            SubjectExpr::Nested(_) => SubjectKind::Nested,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbSpec {
    pub name: String,
    pub category: VerbCategory,
    pub object_kind: ObjectKind,
    pub subject_allowed: BTreeSet<SubjectKind>,
    #[serde(default)]
    pub description: String,
}

impl VerbSpec {
    pub fn new(
        name: &str,
        category: VerbCategory,
        object_kind: ObjectKind,
        subject_allowed: &[SubjectKind],
        description: &str,
    ) -> Self {
        VerbSpec {
            name: name.to_ascii_lowercase(),
            category,
            object_kind,
            subject_allowed: subject_allowed.iter().copied().collect(),
            description: description.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OntologyError {
    #[error("verb '{0}' is already registered")]
    DuplicateVerb(String),
    #[error("registry is frozen")]
    FrozenRegistry,
    #[error("'{0}' is not a valid verb name")]
    InvalidName(String),
    #[error("verb '{0}' not found")]
    NotFound(String),
    #[error("invalid ontology document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ValidationError {
    UnknownVerb { name: String, path: String },
    SubjectKindMismatch {
        verb: String,
        found: SubjectKind,
        path: String,
    },
    ObjectKindMismatch {
        verb: String,
        object: String,
        expected: ObjectKind,
        path: String,
    },
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationError::UnknownVerb { name, path } => {
                write!(f, "{path}: unknown verb '{name}'")
            }
            ValidationError::SubjectKindMismatch { verb, found, path } => {
                write!(f, "{path}: verb '{verb}' does not accept a {found:?} subject")
            }
            ValidationError::ObjectKindMismatch {
                verb,
                object,
                expected,
                path,
            } => write!(f, "{path}: '{object}' is not a valid {expected:?} object for '{verb}'"),
        }
    }
}

/// Verb registry. Built-in verbs can never be removed or replaced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OntologyRegistry {
    verbs: BTreeMap<String, VerbSpec>,
    builtins: BTreeSet<String>,
    frozen: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct OntologyDocument {
    verbs: Vec<VerbSpec>,
}

pub fn builtin_ontology() -> OntologyRegistry {
    use ObjectKind::*;
    use SubjectKind::{Identifier, Nested, Null};
    use VerbCategory::*;

    let any = &SubjectKind::ALL;
    let specs = [
        VerbSpec::new("connect", Construct, Service, &[Null, Identifier, Nested], "form a connection to a peer application"),
        VerbSpec::new("discover", Construct, Service, any, "look for applications or services"),
        VerbSpec::new("advertize", Construct, Service, &[Null, Identifier], "announce a service able to serve other intents"),
        VerbSpec::new("push", Transfer, Content, any, "push content toward a target or announce it"),
        VerbSpec::new("pull", Transfer, Content, any, "request content"),
        VerbSpec::new("allocate", Regulate, Resource, any, "allocate a network resource"),
        VerbSpec::new("prioritize", Regulate, TrafficClass, &[Null], "prioritize a traffic class"),
        VerbSpec::new("block", Regulate, TrafficClass, &[Null], "block a traffic class"),
    ];
    let mut verbs = BTreeMap::new();
    let mut builtins = BTreeSet::new();
    for spec in specs {
        builtins.insert(spec.name.clone());
        verbs.insert(spec.name.clone(), spec);
    }
    OntologyRegistry {
        verbs,
        builtins,
        frozen: false,
    }
}

impl OntologyRegistry {
    pub fn lookup(&self, name: &str) -> Result<&VerbSpec, OntologyError> {
        self.verbs
            .get(&name.to_ascii_lowercase())
            .ok_or_else(|| OntologyError::NotFound(name.to_string()))
    }

    pub fn is_builtin(&self, name: &str) -> bool {
        self.builtins.contains(&name.to_ascii_lowercase())
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn verbs(&self) -> impl Iterator<Item = &VerbSpec> {
        self.verbs.values()
    }

    pub fn register_verb(&mut self, mut spec: VerbSpec) -> Result<(), OntologyError> {
        if self.frozen {
            return Err(OntologyError::FrozenRegistry);
        }
        spec.name = spec.name.to_ascii_lowercase();
        if !is_verb(&spec.name) {
            return Err(OntologyError::InvalidName(spec.name));
        }
        if self.verbs.contains_key(&spec.name) {
            return Err(OntologyError::DuplicateVerb(spec.name));
        }
        self.verbs.insert(spec.name.clone(), spec);
        Ok(())
    }

    /// Builder-style variant of [`register_verb`](Self::register_verb).
    pub fn with_verb(mut self, spec: VerbSpec) -> Result<Self, OntologyError> {
        self.register_verb(spec)?;
        Ok(self)
    }

    /// Serializes every verb, built-ins included.
    pub fn to_json(&self) -> String {
        let doc = OntologyDocument {
            verbs: self.verbs.values().cloned().collect(),
        };
        serde_json::to_string_pretty(&doc).expect("ontology serializes")
    }

    /// Builds a registry from the built-ins plus the verbs of a JSON document.
    /// Entries identical to a built-in are accepted, so a serialized registry
    /// loads back unchanged.
    pub fn from_json(text: &str) -> Result<Self, OntologyError> {
        let doc: OntologyDocument =
            serde_json::from_str(text).map_err(|e| OntologyError::Document(e.to_string()))?;
        let mut reg = builtin_ontology();
        for mut spec in doc.verbs {
            spec.name = spec.name.to_ascii_lowercase();
            if reg.builtins.contains(&spec.name) && reg.verbs.get(&spec.name) == Some(&spec) {
                continue;
            }
            reg.register_verb(spec)?;
        }
        Ok(reg)
    }
}

/// Checks every sentence of `intent` against the registry and returns all
/// problems found.
pub fn validate_intent(
    intent: &IntentExpr,
    reg: &OntologyRegistry,
) -> Result<(), Vec<ValidationError>> {
    let mut errors = Vec::new();
    let mut path = String::from("$");
    let mut current = intent;
    loop {
        validate_sentence(current, reg, &path, &mut errors);
        match &current.subject {
            SubjectExpr::Nested(inner) => {
                current = inner;
                path.push_str(".subject");
            }
            _ => break,
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

fn validate_sentence(
    intent: &IntentExpr,
    reg: &OntologyRegistry,
    path: &str,
    errors: &mut Vec<ValidationError>,
) {
    let Ok(spec) = reg.lookup(&intent.verb) else {
        errors.push(ValidationError::UnknownVerb {
            name: intent.verb.clone(),
            path: path.to_string(),
        });
        return;
    };
    let found = SubjectKind::of(&intent.subject);
    if !spec.subject_allowed.contains(&found) {
        errors.push(ValidationError::SubjectKindMismatch {
            verb: spec.name.clone(),
            found,
            path: path.to_string(),
        });
    }
    // Only traffic classes are checked; other object kinds are advisory.
    if spec.object_kind == ObjectKind::TrafficClass
        && !matches!(classify(&intent.object), ContentRef::Opaque { .. })
    {
        errors.push(ValidationError::ObjectKindMismatch {
            verb: spec.name.clone(),
            object: intent.object.clone(),
            expected: ObjectKind::TrafficClass,
            path: path.to_string(),
        });
    }
}
