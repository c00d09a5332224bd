// SPDX-License-Identifier: Apache-2.0

//! The intent language: tokenizer, recursive descent parser and canonical
//! renderer.
//!
//! ```text
//! intent   ::= '<' verb ',' object (',' element)* '>'
//! element  ::= modclause | subject      ; the last element is the subject
//! subject  ::= 'NULL' | atom | intent
//! modclause::= 'NULL' | mod ('&' mod)*
//! mod      ::= '(' key cmp value (',' tag)? ')'
//! cmp      ::= '=' | '<' | '>' | '<=' | '>='
//! tag      ::= 'essential' | 'desirable'
//! ```
//!
//! Verbs and tags are case-insensitive, keys are not. A modifier without a
//! tag is essential. `NULL` in a modifier slot contributes no clause.

mod ast;
mod lexer;
mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::{
    Comparator, IntentExpr, ModifierAtom, ModifierClause, Priority, SubjectExpr, TypedValue,
};
pub use lexer::{tokenize, Spanned, Token};

pub use parser::is_verb;

pub const DEFAULT_MAX_DEPTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    pub offset: usize,
    /// 1-based.
    pub line: usize,
    /// 1-based, counted in characters.
    pub column: usize,
    pub message: String,
    pub severity: Severity,
}

impl ParseDiagnostic {
    pub fn error(source: &str, offset: usize, message: String) -> Self {
        let offset = offset.min(source.len());
        let before = &source[..offset];
        let line = before.matches('\n').count() + 1;
        let line_start = before.rfind('\n').map_or(0, |i| i + 1);
        let column = source[line_start..offset].chars().count() + 1;
        ParseDiagnostic {
            offset,
            line,
            column,
            message,
            severity: Severity::Error,
        }
    }
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}: {sev}: {}", self.line, self.column, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorKind {
    SyntaxError,
    DepthExceeded,
    UnterminatedInput,
    IllegalCharacter,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind:?}: {}", first_message(.diagnostics))]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub diagnostics: Vec<ParseDiagnostic>,
}

fn first_message(diags: &[ParseDiagnostic]) -> String {
    diags.first().map(ToString::to_string).unwrap_or_default()
}

impl ParseError {
    pub(crate) fn single(kind: ParseErrorKind, diagnostic: ParseDiagnostic) -> Self {
        ParseError {
            kind,
            diagnostics: vec![diagnostic],
        }
    }
}

pub fn parse(source: &str) -> Result<IntentExpr, ParseError> {
    parse_with_depth(source, DEFAULT_MAX_DEPTH)
}

pub fn parse_with_depth(source: &str, max_depth: usize) -> Result<IntentExpr, ParseError> {
    let tokens = tokenize(source)?;
    parser::Parser::new(source, tokens, max_depth).parse_document()
}

/// Canonical text: one space after each comma, `&` surrounded by spaces,
/// nothing inside modifiers, tags always written.
pub fn render(intent: &IntentExpr) -> String {
    intent.to_string()
}

impl fmt::Display for ModifierAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}{}{},{})",
            self.key,
            self.comparator,
            self.value,
            self.priority.as_str()
        )
    }
}

impl fmt::Display for ModifierClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, atom) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{atom}")?;
        }
        Ok(())
    }
}

impl fmt::Display for SubjectExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubjectExpr::Null => f.write_str("NULL"),
            SubjectExpr::Identifier(id) => f.write_str(id),
            SubjectExpr::Nested(inner) => write!(f, "{inner}"),
        }
    }
}

impl fmt::Display for IntentExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}", self.verb, self.object)?;
        for clause in &self.modifiers {
            write!(f, ", {clause}")?;
        }
        write!(f, ", {}>", self.subject)
    }
}
