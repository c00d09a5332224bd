// SPDX-License-Identifier: Apache-2.0

//! Syntax tree for `<verb, object, modifiers, subject>` sentences.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One intent sentence. Subjects may nest further sentences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentExpr {
    /// Lower-cased verb name.
    pub verb: String,
    pub object: String,
    pub modifiers: Vec<ModifierClause>,
    pub subject: SubjectExpr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectExpr {
    Null,
    Identifier(String),
    Nested(Box<IntentExpr>),
}

/// Modifier atoms joined by `&`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModifierClause {
    pub atoms: Vec<ModifierAtom>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModifierAtom {
    pub key: String,
    pub comparator: Comparator,
    pub value: TypedValue,
    pub priority: Priority,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

impl Comparator {
    pub const ALL: [Comparator; 5] = [
        Comparator::Eq,
        Comparator::Lt,
        Comparator::Gt,
        Comparator::Le,
        Comparator::Ge,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Lt => "<",
            Comparator::Gt => ">",
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
        }
    }

    /// Applies the comparator to an already computed ordering of `lhs` vs `rhs`.
    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            Comparator::Eq => ord == Equal,
            Comparator::Lt => ord == Less,
            Comparator::Gt => ord == Greater,
            Comparator::Le => ord != Greater,
            Comparator::Ge => ord != Less,
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Comparator {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "=" => Comparator::Eq,
            "<" => Comparator::Lt,
            ">" => Comparator::Gt,
            "<=" => Comparator::Le,
            ">=" => Comparator::Ge,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Priority {
    Essential,
    Desirable,
}

impl Priority {
    pub fn as_str(self) -> &'static str {
        match self {
            Priority::Essential => "essential",
            Priority::Desirable => "desirable",
        }
    }

    pub fn parse_tag(tag: &str) -> Option<Self> {
        if tag.eq_ignore_ascii_case("essential") {
            Some(Priority::Essential)
        } else if tag.eq_ignore_ascii_case("desirable") {
            Some(Priority::Desirable)
        } else {
            None
        }
    }
}

/// A modifier value.
///
/// Classification of the source text is fixed: an optionally signed decimal
/// followed by an alphabetic unit is a quantity, a dotted quad with a `/n`
/// suffix (n <= 32) is a CIDR block, and anything else is text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TypedValue {
    Quantity { number: f64, unit: String },
    Cidr { address: Ipv4Addr, prefix: u8 },
    Text { text: String },
}

impl TypedValue {
    pub fn quantity(number: f64, unit: impl Into<String>) -> Self {
        TypedValue::Quantity {
            number,
            unit: unit.into(),
        }
    }

    pub fn text(text: impl Into<String>) -> Self {
        TypedValue::Text { text: text.into() }
    }

    pub fn cidr(address: Ipv4Addr, prefix: u8) -> Self {
        TypedValue::Cidr { address, prefix }
    }

    pub fn parse(raw: &str) -> TypedValue {
        if let Some(q) = parse_quantity(raw) {
            return q;
        }
        if let Some((address, prefix)) = parse_cidr(raw) {
            return TypedValue::Cidr { address, prefix };
        }
        TypedValue::Text {
            text: raw.to_string(),
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            TypedValue::Quantity { number, .. } => Some(*number),
            _ => None,
        }
    }
}

impl fmt::Display for TypedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypedValue::Quantity { number, unit } => write!(f, "{number}{unit}"),
            TypedValue::Cidr { address, prefix } => write!(f, "{address}/{prefix}"),
            TypedValue::Text { text } => f.write_str(text),
        }
    }
}

fn parse_quantity(raw: &str) -> Option<TypedValue> {
    let bytes = raw.as_bytes();
    let mut i = 0;
    if bytes.first() == Some(&b'-') {
        i += 1;
    }
    let int_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i == int_start {
        return None;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        let frac_start = i + 1;
        let mut j = frac_start;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if j == frac_start {
            return None;
        }
        i = j;
    }
    let (num, unit) = raw.split_at(i);
    if !unit.bytes().all(|b| b.is_ascii_alphabetic()) {
        return None;
    }
    let number: f64 = num.parse().ok()?;
    if !number.is_finite() {
        return None;
    }
    Some(TypedValue::Quantity {
        number,
        unit: unit.to_string(),
    })
}

pub(crate) fn parse_cidr(raw: &str) -> Option<(Ipv4Addr, u8)> {
    let (addr, prefix) = raw.split_once('/')?;
    if prefix.is_empty() || prefix.len() > 2 || !prefix.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let prefix: u8 = prefix.parse().ok()?;
    if prefix > 32 {
        return None;
    }
    // Ipv4Addr's parser rejects leading zeros, which keeps rendering lossless.
    let address: Ipv4Addr = addr.parse().ok()?;
    Some((address, prefix))
}

impl IntentExpr {
    /// Number of `<...>` sentences in this expression.
    pub fn sentence_count(&self) -> usize {
        1 + match &self.subject {
            SubjectExpr::Nested(inner) => inner.sentence_count(),
            _ => 0,
        }
    }

    pub fn depth(&self) -> usize {
        self.sentence_count()
    }

    pub fn atoms(&self) -> impl Iterator<Item = &ModifierAtom> {
        self.modifiers.iter().flat_map(|c| c.atoms.iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_classification() {
        assert_eq!(TypedValue::parse("32"), TypedValue::quantity(32.0, ""));
        assert_eq!(TypedValue::parse("50ms"), TypedValue::quantity(50.0, "ms"));
        assert_eq!(
            TypedValue::parse("1.2.3.0/24"),
            TypedValue::cidr(Ipv4Addr::new(1, 2, 3, 0), 24)
        );
        // userIDs that start with digits stay text
        assert_eq!(
            TypedValue::parse("92cd701c0be"),
            TypedValue::text("92cd701c0be")
        );
        assert_eq!(
            TypedValue::parse("https://provider.com/oauth"),
            TypedValue::text("https://provider.com/oauth")
        );
        assert_eq!(TypedValue::parse("1.2.3.0/33"), TypedValue::text("1.2.3.0/33"));
        assert_eq!(TypedValue::parse("1."), TypedValue::text("1."));
        assert_eq!(TypedValue::parse("-2.5s"), TypedValue::quantity(-2.5, "s"));
    }

    #[test]
    fn quantity_renders_without_trailing_zeroes() {
        assert_eq!(TypedValue::quantity(32.0, "").to_string(), "32");
        assert_eq!(TypedValue::quantity(0.5, "ms").to_string(), "0.5ms");
    }

    #[test]
    fn comparator_semantics() {
        use std::cmp::Ordering::*;
        assert!(Comparator::Le.holds(Equal));
        assert!(Comparator::Le.holds(Less));
        assert!(!Comparator::Lt.holds(Equal));
        assert!(Comparator::Ge.holds(Greater));
        assert!(!Comparator::Eq.holds(Greater));
    }
}
