// SPDX-License-Identifier: Apache-2.0

//! Evaluation of constraints against candidate attributes.

use crate::compiler::{Constraint, Hardness};
use crate::lang::{Comparator, TypedValue};
use crate::simnet::Attributes;

/// One unit of satisfaction. Equality constraints on the same key with the
/// same hardness are alternatives (any one may hold); every other constraint
/// stands alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Requirement<'a> {
    pub hardness: Hardness,
    pub alternatives: Vec<&'a Constraint>,
}

impl Requirement<'_> {
    pub fn holds(&self, attrs: &Attributes) -> bool {
        self.alternatives.iter().any(|c| constraint_holds(c, attrs))
    }

    pub fn constraints(&self) -> impl Iterator<Item = Constraint> + '_ {
        self.alternatives.iter().map(|c| (*c).clone())
    }
}

pub fn requirements(constraints: &[Constraint]) -> Vec<Requirement<'_>> {
    let mut out: Vec<Requirement<'_>> = Vec::new();
    for c in constraints {
        if c.comparator == Comparator::Eq {
            if let Some(group) = out.iter_mut().find(|r| {
                r.hardness == c.hardness
                    && r.alternatives[0].comparator == Comparator::Eq
                    && r.alternatives[0].key == c.key
            }) {
                group.alternatives.push(c);
                continue;
            }
        }
        out.push(Requirement {
            hardness: c.hardness,
            alternatives: vec![c],
        });
    }
    out
}

/// A missing attribute never satisfies a constraint.
pub fn constraint_holds(c: &Constraint, attrs: &Attributes) -> bool {
    attrs
        .get(&c.key)
        .is_some_and(|have| value_satisfies(have, c.comparator, &c.value))
}

pub fn value_satisfies(have: &TypedValue, cmp: Comparator, want: &TypedValue) -> bool {
    match (have, want) {
        (
            TypedValue::Quantity { number: a, unit: ua },
            TypedValue::Quantity { number: b, unit: ub },
        ) => {
            let Some((a, b)) = common_unit(*a, ua, *b, ub) else {
                return false;
            };
            a.partial_cmp(&b).is_some_and(|o| cmp.holds(o))
        }
        (
            TypedValue::Cidr {
                address: ha,
                prefix: hp,
            },
            TypedValue::Cidr {
                address: wa,
                prefix: wp,
            },
        ) => cmp == Comparator::Eq && hp >= wp && mask(*ha, *wp) == mask(*wa, *wp),
        (TypedValue::Text { text: a }, TypedValue::Text { text: b }) => {
            cmp == Comparator::Eq && a == b
        }
        _ => cmp == Comparator::Eq && have.to_string() == want.to_string(),
    }
}

fn mask(addr: std::net::Ipv4Addr, prefix: u8) -> u32 {
    let bits = u32::from(addr);
    if prefix == 0 {
        0
    } else {
        bits & (u32::MAX << (32 - u32::from(prefix)))
    }
}

fn time_scale(unit: &str) -> Option<f64> {
    match unit {
        "ns" => Some(1e-6),
        "us" => Some(1e-3),
        "ms" => Some(1.0),
        "s" => Some(1e3),
        _ => None,
    }
}

/// Puts two quantities on a common scale. A bare number is compatible with
/// any unit; differing time units are converted; anything else is
/// incomparable.
fn common_unit(a: f64, ua: &str, b: f64, ub: &str) -> Option<(f64, f64)> {
    if ua == ub || ua.is_empty() || ub.is_empty() {
        return Some((a, b));
    }
    let (sa, sb) = (time_scale(ua)?, time_scale(ub)?);
    Some((a * sa, b * sb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::Ipv4Addr;

    fn attrs(pairs: &[(&str, TypedValue)]) -> Attributes {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    fn c(text: &str, h: Hardness) -> Constraint {
        Constraint::parse_predicate(text, h).unwrap()
    }

    #[test]
    fn quantities_and_units() {
        let a = attrs(&[("rtt", TypedValue::quantity(40.0, "ms"))]);
        assert!(constraint_holds(&c("rtt<50ms", Hardness::Hard), &a));
        assert!(!constraint_holds(&c("rtt<40ms", Hardness::Hard), &a));
        assert!(constraint_holds(&c("rtt<=40ms", Hardness::Hard), &a));
        assert!(constraint_holds(&c("rtt<1s", Hardness::Hard), &a));
        assert!(constraint_holds(&c("rtt<41", Hardness::Hard), &a));
        assert!(!constraint_holds(&c("rtt<41kg", Hardness::Hard), &a));
        assert!(!constraint_holds(&c("missing=1", Hardness::Hard), &a));
    }

    #[test]
    fn cidr_containment() {
        let a = attrs(&[("net", TypedValue::cidr(Ipv4Addr::new(1, 2, 3, 0), 24))]);
        assert!(constraint_holds(&c("net=1.2.3.0/24", Hardness::Hard), &a));
        assert!(constraint_holds(&c("net=1.2.0.0/16", Hardness::Hard), &a));
        assert!(!constraint_holds(&c("net=1.2.3.0/25", Hardness::Hard), &a));
        assert!(!constraint_holds(&c("net=9.9.9.0/24", Hardness::Hard), &a));
        assert!(constraint_holds(&c("net=0.0.0.0/0", Hardness::Hard), &a));
    }

    #[test]
    fn text_equality_only() {
        let a = attrs(&[("userID", TypedValue::text("92cd701c0be"))]);
        assert!(constraint_holds(&c("userID=92cd701c0be", Hardness::Hard), &a));
        assert!(!constraint_holds(&c("userID<zzz", Hardness::Hard), &a));
    }

    #[test]
    fn equality_groups_are_alternatives() {
        let cs = vec![
            c("userID=aaa", Hardness::Hard),
            c("rtt<80ms", Hardness::Hard),
            c("userID=bbb", Hardness::Hard),
            c("userID=ccc", Hardness::Soft),
        ];
        let reqs = requirements(&cs);
        assert_eq!(reqs.len(), 3);
        assert_eq!(reqs[0].alternatives.len(), 2);
        let bob = attrs(&[("userID", TypedValue::text("bbb"))]);
        assert!(reqs[0].holds(&bob));
        assert!(!reqs[2].holds(&bob));
    }
}
