// SPDX-License-Identifier: Apache-2.0

//! Plan mediation: for each action, enumerate candidates, drop those that
//! violate an essential constraint, score the rest and take the best.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::eval::{requirements, Requirement};
use super::{ordered_policies, Candidate, PolicyRule};
use crate::compiler::{ActionRef, Constraint, Hardness, PrimitiveAction, ReificationPlan, SubjectLink};
use crate::lang::{Comparator, TypedValue};
use crate::ontology::VerbCategory;
use crate::simnet::{attr_map, Attributes, NetworkState, SimError};

pub struct MediationContext<'a> {
    pub state: &'a NetworkState,
    pub requester: &'a str,
    /// Nodes the mediating agent may hand out; `None` means all.
    pub scope: Option<&'a BTreeSet<String>>,
    pub policies: &'a [PolicyRule],
    pub w_soft: f64,
}

impl<'a> MediationContext<'a> {
    pub fn new(state: &'a NetworkState, requester: &'a str) -> Self {
        MediationContext {
            state,
            requester,
            scope: None,
            policies: &[],
            w_soft: 1.0,
        }
    }

    fn in_scope(&self, node_id: &str) -> bool {
        self.scope.is_none_or(|s| s.contains(node_id))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub hard_total: u32,
    pub hard_satisfied: u32,
    pub soft_total: u32,
    pub soft_satisfied: u32,
}

impl Tally {
    pub fn soft_ratio(&self) -> f64 {
        if self.soft_total == 0 {
            1.0
        } else {
            f64::from(self.soft_satisfied) / f64::from(self.soft_total)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Binding {
    Candidate {
        node_id: String,
        service_name: String,
        utility: f64,
        /// Every candidate that met the essential constraints, best first.
        matched: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        payload: Option<String>,
    },
    Group {
        resource_kind: String,
        /// Filled in when the allocation is committed.
        address: Option<Ipv4Addr>,
        ttl: u8,
        members: Vec<String>,
    },
    Placement {
        content: String,
        node_id: String,
        service_name: String,
        announce: bool,
        /// For announcements, the content item the name points at.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        of: Option<String>,
    },
    Source {
        content: String,
        node_id: Option<String>,
    },
    Registration {
        service_name: String,
        node_id: String,
        #[serde(with = "attr_map")]
        attrs: Attributes,
        refreshed: Option<bool>,
    },
    Rule {
        verb: String,
        traffic_spec: String,
        constraints: Vec<Constraint>,
        rule_id: Option<String>,
    },
}

impl Binding {
    /// Nodes (with the service used there, if any) this binding lands on.
    fn anchors(&self) -> Vec<(String, Option<String>)> {
        let svc = |s: &String| (!s.is_empty()).then(|| s.clone());
        match self {
            Binding::Candidate {
                node_id, service_name, ..
            }
            | Binding::Placement {
                node_id, service_name, ..
            }
            | Binding::Registration {
                node_id, service_name, ..
            } => vec![(node_id.clone(), svc(service_name))],
            Binding::Group { members, .. } => members.iter().map(|m| (m.clone(), None)).collect(),
            Binding::Source { node_id, .. } => node_id.iter().map(|n| (n.clone(), None)).collect(),
            Binding::Rule { .. } => Vec::new(),
        }
    }

    pub fn node_id(&self) -> Option<&str> {
        match self {
            Binding::Candidate { node_id, .. }
            | Binding::Placement { node_id, .. }
            | Binding::Registration { node_id, .. } => Some(node_id),
            Binding::Source { node_id, .. } => node_id.as_deref(),
            Binding::Group { .. } | Binding::Rule { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBinding {
    pub action: ActionRef,
    pub verb: String,
    #[serde(flatten)]
    pub binding: Binding,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mediation {
    Reified {
        bindings: Vec<ActionBinding>,
        score: f64,
        tally: Tally,
    },
    Failed {
        action: ActionRef,
        unsatisfied: Vec<Constraint>,
        reason: String,
        tally: Tally,
    },
}

/// What the requester gets back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MediationResult {
    Reified {
        bindings: Vec<ActionBinding>,
        score: f64,
        tally: Tally,
    },
    Failed {
        action: Option<ActionRef>,
        unsatisfied: Vec<Constraint>,
        reason: String,
    },
    NonIdnFallback {
        reason: String,
    },
    /// The intent did not parse, validate or compile.
    Rejected {
        errors: Vec<String>,
    },
}

impl MediationResult {
    pub fn kind(&self) -> &'static str {
        match self {
            MediationResult::Reified { .. } => "reified",
            MediationResult::Failed { .. } => "failed",
            MediationResult::NonIdnFallback { .. } => "non_idn_fallback",
            MediationResult::Rejected { .. } => "rejected",
        }
    }

    pub fn is_reified(&self) -> bool {
        matches!(self, MediationResult::Reified { .. })
    }
}

impl From<Mediation> for MediationResult {
    fn from(m: Mediation) -> Self {
        match m {
            Mediation::Reified {
                bindings, score, tally,
            } => MediationResult::Reified {
                bindings,
                score,
                tally,
            },
            Mediation::Failed {
                action,
                unsatisfied,
                reason,
                ..
            } => MediationResult::Failed {
                action: Some(action),
                unsatisfied,
                reason,
            },
        }
    }
}

struct Bound {
    binding: Binding,
    soft_satisfied: u32,
}

struct Blocked {
    unsatisfied: Vec<Constraint>,
    reason: String,
}

struct Scored {
    candidate: Candidate,
    utility: f64,
    soft_satisfied: u32,
}

/// Requirement totals of a plan, with nothing satisfied yet.
pub fn plan_tally(plan: &ReificationPlan) -> Tally {
    let mut tally = Tally::default();
    for action in &plan.actions {
        for r in requirements(action.constraints()) {
            match r.hardness {
                Hardness::Hard => tally.hard_total += 1,
                Hardness::Soft => tally.soft_total += 1,
            }
        }
    }
    tally
}

pub fn mediate(plan: &ReificationPlan, ctx: &MediationContext<'_>) -> Mediation {
    let policies = ordered_policies(ctx.policies);
    let mut tally = plan_tally(plan);
    let mut bindings: Vec<ActionBinding> = Vec::with_capacity(plan.actions.len());
    for (i, action) in plan.actions.iter().enumerate() {
        let reqs = requirements(action.constraints());
        match step(action, &reqs, &bindings, ctx, &policies) {
            Ok(bound) => {
                tally.hard_satisfied += reqs.iter().filter(|r| r.hardness == Hardness::Hard).count() as u32;
                tally.soft_satisfied += bound.soft_satisfied;
                bindings.push(ActionBinding {
                    action: ActionRef(i),
                    verb: action.verb().to_string(),
                    binding: bound.binding,
                });
            }
            Err(blocked) => {
                return Mediation::Failed {
                    action: ActionRef(i),
                    unsatisfied: blocked.unsatisfied,
                    reason: blocked.reason,
                    tally,
                }
            }
        }
    }
    Mediation::Reified {
        bindings,
        score: tally.soft_ratio(),
        tally,
    }
}

fn step(
    action: &PrimitiveAction,
    reqs: &[Requirement<'_>],
    bound: &[ActionBinding],
    ctx: &MediationContext<'_>,
    policies: &[&PolicyRule],
) -> Result<Bound, Blocked> {
    match action {
        PrimitiveAction::Discover {
            service_name,
            payload,
            ..
        } => {
            let cands = scoped_matches(ctx, service_name);
            let ranked = rank(cands, reqs, ctx, policies, service_name)?;
            let payload = match payload {
                Some(SubjectLink::Literal(s)) => Some(s.clone()),
                _ => None,
            };
            Ok(candidate_binding(ranked, payload))
        }
        PrimitiveAction::Connect { peer_spec, via, .. } => {
            let cands = match via {
                None => scoped_matches(ctx, peer_spec),
                Some(link) => linked(ctx, link, bound, Some(peer_spec)),
            };
            let ranked = rank(cands, reqs, ctx, policies, peer_spec)?;
            Ok(candidate_binding(ranked, None))
        }
        PrimitiveAction::Extension {
            category: VerbCategory::Construct,
            object,
            subject,
            ..
        } => {
            let cands = match subject {
                None => scoped_matches(ctx, object),
                Some(link) => linked(ctx, link, bound, Some(object)),
            };
            let ranked = rank(cands, reqs, ctx, policies, object)?;
            Ok(candidate_binding(ranked, None))
        }
        PrimitiveAction::Push {
            content,
            target,
            announce,
            ..
        } => place(ctx, reqs, policies, bound, content, target.as_ref(), *announce),
        PrimitiveAction::Extension {
            category: VerbCategory::Transfer,
            object,
            subject,
            ..
        } => place(ctx, reqs, policies, bound, object, subject.as_ref(), false),
        PrimitiveAction::Pull { content, source, .. } => {
            let cands = match source {
                Some(link) => linked(ctx, link, bound, None),
                None => ctx
                    .state
                    .content_holders(content)
                    .iter()
                    .filter(|n| ctx.in_scope(n))
                    .filter_map(|n| ctx.state.topology.candidate_for(n, None, ctx.requester).ok())
                    .collect(),
            };
            let has_hard = reqs.iter().any(|r| r.hardness == Hardness::Hard);
            if source.is_none() && cands.is_empty() && !has_hard {
                return Ok(Bound {
                    binding: Binding::Source {
                        content: content.clone(),
                        node_id: None,
                    },
                    soft_satisfied: 0,
                });
            }
            let ranked = rank(cands, reqs, ctx, policies, content)?;
            let best = &ranked[0];
            Ok(Bound {
                binding: Binding::Source {
                    content: content.clone(),
                    node_id: Some(best.candidate.node_id.clone()),
                },
                soft_satisfied: best.soft_satisfied,
            })
        }
        PrimitiveAction::Allocate {
            resource_kind, over, ..
        } => allocate(ctx, reqs, bound, resource_kind, over.as_ref()),
        PrimitiveAction::Advertize {
            service_name,
            origin,
            constraints,
        } => {
            let node_id = match origin {
                Some(SubjectLink::Literal(s)) if ctx.state.topology.node(s).is_some() => s.clone(),
                Some(SubjectLink::Action(r)) => bound
                    .get(r.0)
                    .and_then(|b| b.binding.node_id())
                    .unwrap_or(ctx.requester)
                    .to_string(),
                _ => ctx.requester.to_string(),
            };
            let mut attrs = Attributes::new();
            for c in constraints.iter().filter(|c| c.comparator == Comparator::Eq) {
                attrs.entry(c.key.clone()).or_insert_with(|| c.value.clone());
            }
            let mut view = ctx
                .state
                .topology
                .node(&node_id)
                .and_then(|n| n.service(service_name))
                .map(|s| s.attrs.clone())
                .unwrap_or_default();
            view.extend(attrs.clone());
            let soft_satisfied = check_fixed(reqs, &view, "advertised attributes do not meet the essential constraints")?;
            Ok(Bound {
                binding: Binding::Registration {
                    service_name: service_name.clone(),
                    node_id,
                    attrs,
                    refreshed: None,
                },
                soft_satisfied,
            })
        }
        PrimitiveAction::Regulate {
            traffic_spec,
            constraints,
            ..
        } => Ok(rule(action.verb(), traffic_spec, constraints, reqs)),
        PrimitiveAction::Extension {
            verb,
            category: VerbCategory::Regulate,
            object,
            constraints,
            ..
        } => Ok(rule(verb, object, constraints, reqs)),
    }
}

fn rule(verb: &str, traffic_spec: &str, constraints: &[Constraint], reqs: &[Requirement<'_>]) -> Bound {
    Bound {
        binding: Binding::Rule {
            verb: verb.to_string(),
            traffic_spec: traffic_spec.to_string(),
            constraints: constraints.to_vec(),
            rule_id: None,
        },
        soft_satisfied: reqs.iter().filter(|r| r.hardness == Hardness::Soft).count() as u32,
    }
}

fn candidate_binding(ranked: Vec<Scored>, payload: Option<String>) -> Bound {
    let matched = ranked.iter().map(|s| s.candidate.node_id.clone()).collect();
    let best = ranked.into_iter().next().expect("rank returns survivors");
    Bound {
        binding: Binding::Candidate {
            node_id: best.candidate.node_id,
            service_name: best.candidate.service_name,
            utility: best.utility,
            matched,
            payload,
        },
        soft_satisfied: best.soft_satisfied,
    }
}

fn place(
    ctx: &MediationContext<'_>,
    reqs: &[Requirement<'_>],
    policies: &[&PolicyRule],
    bound: &[ActionBinding],
    content: &str,
    target: Option<&SubjectLink>,
    announce: bool,
) -> Result<Bound, Blocked> {
    let cands = match target {
        Some(link) => linked(ctx, link, bound, None),
        None => ctx
            .state
            .topology
            .candidate_for(ctx.requester, None, ctx.requester)
            .into_iter()
            .collect(),
    };
    let of = match (announce, target.and_then(SubjectLink::action)) {
        (true, Some(r)) => match bound.get(r.0).map(|b| &b.binding) {
            Some(Binding::Placement { content, .. }) => Some(content.clone()),
            _ => None,
        },
        _ => None,
    };
    let ranked = rank(cands, reqs, ctx, policies, content)?;
    let best = ranked.into_iter().next().expect("rank returns survivors");
    Ok(Bound {
        binding: Binding::Placement {
            content: content.to_string(),
            node_id: best.candidate.node_id,
            service_name: best.candidate.service_name,
            announce,
            of,
        },
        soft_satisfied: best.soft_satisfied,
    })
}

fn allocate(
    ctx: &MediationContext<'_>,
    reqs: &[Requirement<'_>],
    bound: &[ActionBinding],
    resource_kind: &str,
    over: Option<&SubjectLink>,
) -> Result<Bound, Blocked> {
    let kind = resource_kind.to_ascii_lowercase();
    if kind != "ip_multicast" && kind != "multicast" {
        return Err(Blocked {
            unsatisfied: hard_constraints(reqs),
            reason: format!("unsupported resource kind '{resource_kind}'"),
        });
    }
    let mut members = BTreeSet::from([ctx.requester.to_string()]);
    match over {
        Some(SubjectLink::Action(r)) => match bound.get(r.0).map(|b| &b.binding) {
            Some(Binding::Candidate { matched, .. }) => members.extend(matched.iter().cloned()),
            Some(other) => members.extend(other.anchors().into_iter().map(|(n, _)| n)),
            None => {}
        },
        Some(SubjectLink::Literal(s)) => {
            members.extend(resolve_literal(ctx, s, None).into_iter().map(|c| c.node_id));
        }
        None => {}
    }
    let ttl = derive_ttl(reqs);
    let view = Attributes::from([
        ("ttl".to_string(), TypedValue::quantity(f64::from(ttl), "")),
        ("members".to_string(), TypedValue::quantity(members.len() as f64, "")),
    ]);
    let soft_satisfied = check_fixed(reqs, &view, "the group cannot meet the essential constraints")?;
    Ok(Bound {
        binding: Binding::Group {
            resource_kind: resource_kind.to_string(),
            address: None,
            ttl,
            members: members.into_iter().collect(),
        },
        soft_satisfied,
    })
}

/// The ttl that satisfies the first `ttl` constraint, essential ones first.
/// Without one the conventional multicast default of 1 applies.
fn derive_ttl(reqs: &[Requirement<'_>]) -> u8 {
    let pick = |h: Hardness| {
        reqs.iter()
            .filter(|r| r.hardness == h)
            .flat_map(|r| r.alternatives.iter())
            .find_map(|c| match (&c.value, c.key.as_str()) {
                (TypedValue::Quantity { number, .. }, "ttl") => Some((c.comparator, *number)),
                _ => None,
            })
    };
    let Some((cmp, n)) = pick(Hardness::Hard).or_else(|| pick(Hardness::Soft)) else {
        return 1;
    };
    let n = n.round();
    let want = match cmp {
        Comparator::Lt => n - 1.0,
        Comparator::Gt => n + 1.0,
        Comparator::Eq | Comparator::Le | Comparator::Ge => n,
    };
    want.clamp(1.0, 255.0) as u8
}

/// Checks requirements against a single fixed attribute view.
fn check_fixed(reqs: &[Requirement<'_>], view: &Attributes, reason: &str) -> Result<u32, Blocked> {
    let failing: Vec<Constraint> = reqs
        .iter()
        .filter(|r| r.hardness == Hardness::Hard && !r.holds(view))
        .flat_map(|r| r.constraints())
        .collect();
    if !failing.is_empty() {
        return Err(Blocked {
            unsatisfied: failing,
            reason: reason.to_string(),
        });
    }
    Ok(reqs
        .iter()
        .filter(|r| r.hardness == Hardness::Soft && r.holds(view))
        .count() as u32)
}

fn hard_constraints(reqs: &[Requirement<'_>]) -> Vec<Constraint> {
    reqs.iter()
        .filter(|r| r.hardness == Hardness::Hard)
        .flat_map(|r| r.constraints())
        .collect()
}

fn scoped_matches(ctx: &MediationContext<'_>, service: &str) -> Vec<Candidate> {
    ctx.state
        .topology
        .match_candidates(service, ctx.requester)
        .unwrap_or_default()
        .into_iter()
        .filter(|c| ctx.in_scope(&c.node_id))
        .collect()
}

/// A literal subject names a node or, failing that, a service.
fn resolve_literal(ctx: &MediationContext<'_>, s: &str, service: Option<&str>) -> Vec<Candidate> {
    let topo = &ctx.state.topology;
    match topo.node(s) {
        Some(node) => {
            let svc = service.filter(|name| node.service(name).is_some());
            topo.candidate_for(s, svc, ctx.requester).into_iter().collect()
        }
        None => scoped_matches(ctx, s),
    }
}

fn linked(
    ctx: &MediationContext<'_>,
    link: &SubjectLink,
    bound: &[ActionBinding],
    service: Option<&str>,
) -> Vec<Candidate> {
    match link {
        SubjectLink::Literal(s) => resolve_literal(ctx, s, service),
        SubjectLink::Action(r) => bound
            .get(r.0)
            .map(|b| b.binding.anchors())
            .unwrap_or_default()
            .into_iter()
            .filter_map(|(node, svc)| {
                ctx.state
                    .topology
                    .candidate_for(&node, svc.as_deref(), ctx.requester)
                    .ok()
            })
            .collect(),
    }
}

/// Filters out candidates violating an essential requirement and orders the
/// survivors by utility, then node id. With no survivors, returns the
/// essential constraints that blocked at least one candidate (all of them if
/// there were no candidates).
fn rank(
    cands: Vec<Candidate>,
    reqs: &[Requirement<'_>],
    ctx: &MediationContext<'_>,
    policies: &[&PolicyRule],
    what: &str,
) -> Result<Vec<Scored>, Blocked> {
    if cands.is_empty() {
        return Err(Blocked {
            unsatisfied: hard_constraints(reqs),
            reason: format!("no candidates for '{what}' in scope"),
        });
    }
    let hard: Vec<&Requirement<'_>> = reqs.iter().filter(|r| r.hardness == Hardness::Hard).collect();
    let soft: Vec<&Requirement<'_>> = reqs.iter().filter(|r| r.hardness == Hardness::Soft).collect();
    let mut blocking = vec![false; hard.len()];
    let mut survivors = Vec::new();
    for c in cands {
        let mut ok = true;
        for (i, r) in hard.iter().enumerate() {
            if !r.holds(&c.attributes) {
                blocking[i] = true;
                ok = false;
            }
        }
        if ok {
            let (utility, soft_satisfied) = utility(&c.attributes, &soft, ctx.w_soft, policies);
            survivors.push(Scored {
                candidate: c,
                utility,
                soft_satisfied,
            });
        }
    }
    if survivors.is_empty() {
        return Err(Blocked {
            unsatisfied: hard
                .iter()
                .zip(&blocking)
                .filter(|(_, b)| **b)
                .flat_map(|(r, _)| r.constraints())
                .collect(),
            reason: format!("no candidate for '{what}' meets the essential constraints"),
        });
    }
    survivors.sort_by(|a, b| {
        b.utility
            .total_cmp(&a.utility)
            .then_with(|| a.candidate.node_id.cmp(&b.candidate.node_id))
            .then_with(|| a.candidate.service_name.cmp(&b.candidate.service_name))
    });
    Ok(survivors)
}

/// `w_soft * (soft satisfied / soft total, 1 if none) + sum of matching
/// policy deltas`, added in policy order.
pub(crate) fn utility(
    attrs: &Attributes,
    soft: &[&Requirement<'_>],
    w_soft: f64,
    policies: &[&PolicyRule],
) -> (f64, u32) {
    let satisfied = soft.iter().filter(|r| r.holds(attrs)).count() as u32;
    let ratio = if soft.is_empty() {
        1.0
    } else {
        f64::from(satisfied) / soft.len() as f64
    };
    let mut u = w_soft * ratio;
    for p in policies {
        if p.matches(attrs) {
            u += p.utility_delta;
        }
    }
    (u, satisfied)
}

/// Applies the side effects of a reified plan and fills in the
/// identifiers they produce. On error `state` may be partially updated, so
/// callers commit against a copy.
pub fn commit(bindings: &mut [ActionBinding], state: &mut NetworkState, requester: &str) -> Result<(), SimError> {
    for b in bindings.iter_mut() {
        match &mut b.binding {
            Binding::Group {
                address,
                ttl,
                members,
                ..
            } => {
                *address = Some(state.multicast.allocate(*ttl, members.iter().cloned())?);
            }
            Binding::Placement {
                content,
                node_id,
                service_name,
                announce: false,
                ..
            } => state.place_content(node_id, Some(service_name.as_str()), content)?,
            Binding::Placement {
                content,
                node_id,
                announce: true,
                of,
                ..
            } => state.announce(content, node_id, of.clone()),
            Binding::Registration {
                service_name,
                node_id,
                attrs,
                refreshed,
            } => *refreshed = Some(state.advertize(node_id, service_name, attrs.clone())?),
            Binding::Rule {
                verb,
                traffic_spec,
                constraints,
                rule_id,
            } => *rule_id = Some(state.install_rule(verb, traffic_spec, constraints.clone(), requester)),
            Binding::Candidate { .. } | Binding::Source { .. } => {}
        }
    }
    Ok(())
}
