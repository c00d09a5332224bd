// SPDX-License-Identifier: Apache-2.0

//! Generators and reference implementations shared by the property tests and
//! the acceptance runner.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use maat_core::lang::{Comparator, IntentExpr, ModifierAtom, ModifierClause, Priority, SubjectExpr, TypedValue};
use maat_core::mediator::PolicyRule;
use maat_core::simnet::{Link, Node, ServiceInstance, Subnet, Topology};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

// ---- grammar -------------------------------------------------------------

const ALL_VERBS: [&str; 8] = ["connect", "discover", "advertize", "push", "pull", "allocate", "prioritize", "block"];
const NESTED_VERBS: [&str; 5] = ["connect", "discover", "push", "pull", "allocate"];
const IDENT_VERBS: [&str; 6] = ["connect", "discover", "advertize", "push", "pull", "allocate"];

fn general_atom() -> impl Strategy<Value = String> {
    "[a-z][A-Za-z0-9._:/-]{0,12}"
}

fn opaque_atom() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_-]{0,10}"
}

pub fn typed_value() -> impl Strategy<Value = TypedValue> {
    prop_oneof![
        (-1_000_000i64..1_000_000, 0i32..4, "[a-z]{0,3}")
            .prop_map(|(n, k, unit)| TypedValue::quantity(n as f64 / 10f64.powi(k), unit)),
        (any::<u32>(), 0u8..=32).prop_map(|(a, p)| TypedValue::cidr(Ipv4Addr::from(a), p)),
        "[a-z][A-Za-z0-9._:/-]{0,8}".prop_map(TypedValue::text),
    ]
}

pub fn modifier_atom() -> impl Strategy<Value = ModifierAtom> {
    (
        "[a-z][a-z0-9_]{0,6}",
        prop::sample::select(Comparator::ALL.to_vec()),
        typed_value(),
        prop_oneof![Just(Priority::Essential), Just(Priority::Desirable)],
    )
        .prop_map(|(key, comparator, value, priority)| ModifierAtom {
            key,
            comparator,
            value,
            priority,
        })
}

fn clauses() -> impl Strategy<Value = Vec<ModifierClause>> {
    prop::collection::vec(
        prop::collection::vec(modifier_atom(), 1..=3).prop_map(|atoms| ModifierClause { atoms }),
        0..=3,
    )
}

type Level = (usize, String, String, Vec<ModifierClause>);

fn level() -> impl Strategy<Value = Level> {
    (any::<usize>(), general_atom(), opaque_atom(), clauses())
}

fn assemble(levels: Vec<Level>, terminal: Option<String>, verb_of: impl Fn(usize, &SubjectExpr) -> String) -> IntentExpr {
    let mut subject = match terminal {
        Some(id) => SubjectExpr::Identifier(id),
        None => SubjectExpr::Null,
    };
    let mut built = None;
    for (pick, general, opaque, modifiers) in levels.into_iter().rev() {
        if let Some(inner) = built.take() {
            subject = SubjectExpr::Nested(Box::new(inner));
        }
        let verb = verb_of(pick, &subject);
        let object = if verb == "prioritize" || verb == "block" { opaque } else { general };
        built = Some(IntentExpr {
            verb,
            object,
            modifiers,
            subject: subject.clone(),
        });
    }
    built.expect("at least one level")
}

/// Sentences the built-in ontology accepts, nested up to four deep.
pub fn valid_intent() -> impl Strategy<Value = IntentExpr> {
    (
        prop::collection::vec(level(), 1..=4),
        prop::option::of(general_atom()),
    )
        .prop_map(|(levels, terminal)| {
            assemble(levels, terminal, |pick, subject| {
                let list: &[&str] = match subject {
                    SubjectExpr::Null => &ALL_VERBS,
                    SubjectExpr::Identifier(_) => &IDENT_VERBS,
                    SubjectExpr::Nested(_) => &NESTED_VERBS,
                };
                list[pick % list.len()].to_string()
            })
        })
}

/// Syntactically valid sentences with arbitrary verb names.
pub fn any_intent() -> impl Strategy<Value = IntentExpr> {
    (
        prop::collection::vec((level(), "[a-z][a-z0-9_-]{0,8}"), 1..=4),
        prop::option::of(general_atom()),
    )
        .prop_map(|(levels, terminal)| {
            let verbs: Vec<String> = levels.iter().map(|(_, v)| v.clone()).collect();
            let levels = levels
                .into_iter()
                .enumerate()
                .map(|(i, ((_, g, o, m), _))| (i, g, o, m))
                .collect();
            assemble(levels, terminal, |i, _| verbs[i].clone())
        })
}

/// Verbs from the outermost sentence inwards.
pub fn sentence_verbs(intent: &IntentExpr) -> Vec<String> {
    let mut out = vec![intent.verb.clone()];
    let mut cur = &intent.subject;
    while let SubjectExpr::Nested(inner) = cur {
        out.push(inner.verb.clone());
        cur = &inner.subject;
    }
    out
}

// ---- topologies ------------------------------------------------------------

pub const SERVICE: &str = "svc";
pub const REGIONS: [&str; 3] = ["eu", "us", "ap"];
pub const ASNS: [u32; 3] = [100, 200, 300];

pub fn node_id(i: usize) -> String {
    format!("n{i:02}")
}

/// A rooted subnet tree of three subnets, up to `max_nodes` nodes, a sparse
/// random link set with integral latencies. Some nodes may be isolated.
pub fn random_topology(rng: &mut ChaCha8Rng, max_nodes: usize) -> Topology {
    let subnets = vec![
        Subnet {
            id: "core".into(),
            cidr: "10.0.0.0/8".parse::<Ipv4Net>().unwrap(),
            parent: None,
        },
        Subnet {
            id: "s1".into(),
            cidr: "10.1.0.0/16".parse().unwrap(),
            parent: Some("core".into()),
        },
        Subnet {
            id: "s2".into(),
            cidr: "10.2.0.0/16".parse().unwrap(),
            parent: Some("core".into()),
        },
    ];
    let n = rng.gen_range(2..=max_nodes);
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let s = rng.gen_range(0..3u8);
        let mut attrs = BTreeMap::new();
        attrs.insert("cpu".to_string(), TypedValue::quantity(f64::from(rng.gen_range(1..=16u8)), ""));
        attrs.insert("region".to_string(), TypedValue::text(*REGIONS.choose(rng).unwrap()));
        let mut services = Vec::new();
        if rng.gen_bool(0.6) {
            let mut svc = ServiceInstance::new(SERVICE);
            svc.attrs
                .insert("load".into(), TypedValue::quantity(f64::from(rng.gen_range(0..=100u8)), "pct"));
            services.push(svc);
        }
        if rng.gen_bool(0.3) {
            services.push(ServiceInstance::new("other"));
        }
        nodes.push(Node {
            id: node_id(i),
            address: Ipv4Addr::new(10, s, 0, i as u8 + 1),
            subnet: ["core", "s1", "s2"][s as usize].into(),
            asn: *ASNS.choose(rng).unwrap(),
            attrs,
            services,
        });
    }
    let mut links = Vec::new();
    for i in 1..n {
        if rng.gen_bool(0.9) {
            let j = rng.gen_range(0..i);
            links.push(Link {
                a: node_id(i),
                b: node_id(j),
                rtt_ms: f64::from(rng.gen_range(1..=40u8)),
            });
        }
    }
    for _ in 0..rng.gen_range(0..=n) {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            links.push(Link {
                a: node_id(a),
                b: node_id(b),
                rtt_ms: f64::from(rng.gen_range(1..=40u8)),
            });
        }
    }
    let topo = Topology {
        seed: 0,
        subnets,
        nodes,
        links,
    };
    topo.validate().expect("generated topology is valid");
    topo
}

/// All-pairs shortest latencies, indexed in `topo.nodes` order.
pub fn floyd_warshall(topo: &Topology) -> Vec<Vec<f64>> {
    let n = topo.nodes.len();
    let idx: BTreeMap<&str, usize> = topo.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for l in &topo.links {
        let (a, b) = (idx[l.a.as_str()], idx[l.b.as_str()]);
        if l.rtt_ms < d[a][b] {
            d[a][b] = l.rtt_ms;
            d[b][a] = l.rtt_ms;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

// ---- mediation trials ------------------------------------------------------

/// What a candidate looks like to the oracle.
#[derive(Debug, Clone)]
pub struct View {
    pub rtt: f64,
    pub cpu: f64,
    pub region: String,
    pub load: f64,
    pub asn: u32,
    pub subnet: usize,
}

#[derive(Debug, Clone)]
pub enum Pred {
    RttLt(u32),
    RttLe(u32),
    CpuGe(u32),
    LoadLt(u32),
    Region(Vec<&'static str>),
    Asn(Vec<u32>),
    /// 0 is the whole 10/8, 1 and 2 the /16 subnets.
    Net(usize),
}

impl Pred {
    pub fn texts(&self) -> Vec<String> {
        match self {
            Pred::RttLt(x) => vec![format!("rtt<{x}ms")],
            Pred::RttLe(x) => vec![format!("rtt<={x}ms")],
            Pred::CpuGe(x) => vec![format!("cpu>={x}")],
            Pred::LoadLt(x) => vec![format!("load<{x}pct")],
            Pred::Region(rs) => rs.iter().map(|r| format!("region={r}")).collect(),
            Pred::Asn(a) => a.iter().map(|a| format!("asn={a}")).collect(),
            Pred::Net(0) => vec!["net=10.0.0.0/8".into()],
            Pred::Net(k) => vec![format!("net=10.{k}.0.0/16")],
        }
    }

    pub fn holds(&self, v: &View) -> bool {
        match self {
            Pred::RttLt(x) => v.rtt < f64::from(*x),
            Pred::RttLe(x) => v.rtt <= f64::from(*x),
            Pred::CpuGe(x) => v.cpu >= f64::from(*x),
            Pred::LoadLt(x) => v.load < f64::from(*x),
            Pred::Region(rs) => rs.contains(&v.region.as_str()),
            Pred::Asn(a) => a.contains(&v.asn),
            Pred::Net(0) => true,
            Pred::Net(k) => v.subnet == *k,
        }
    }
}

fn random_pred(rng: &mut ChaCha8Rng, kind: usize, alternatives: bool) -> Pred {
    let alts = if alternatives && rng.gen_bool(0.4) { 2 } else { 1 };
    match kind {
        0 if rng.gen_bool(0.5) => Pred::RttLt(rng.gen_range(5..=120)),
        0 => Pred::RttLe(rng.gen_range(5..=120)),
        1 => Pred::CpuGe(rng.gen_range(1..=16)),
        2 => Pred::LoadLt(rng.gen_range(1..=100)),
        3 => Pred::Region(REGIONS.choose_multiple(rng, alts).copied().collect()),
        4 => Pred::Asn(ASNS.choose_multiple(rng, alts).copied().collect()),
        _ => Pred::Net(rng.gen_range(0..=2)),
    }
}

#[derive(Debug, Clone)]
pub struct Policy {
    pub stakeholder: &'static str,
    pub preds: Vec<Pred>,
    pub delta: f64,
    pub priority: i64,
}

#[derive(Debug, Clone)]
pub struct Trial {
    pub topology: Topology,
    pub requester: String,
    pub verb: &'static str,
    pub hard: Vec<Pred>,
    pub soft: Vec<Pred>,
    pub policies: Vec<Policy>,
    pub w_soft: f64,
}

/// Soft requirement counts are powers of two and deltas multiples of 1/8,
/// so every utility is exact under the scale factors used in the tests.
pub fn random_trial(seed: u64, max_nodes: usize) -> Trial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topology = random_topology(&mut rng, max_nodes);
    let requester = topology.nodes.choose(&mut rng).unwrap().id.clone();
    let hard = (0..6)
        .filter(|_| rng.gen_bool(0.3))
        .collect::<Vec<_>>()
        .into_iter()
        .map(|k| random_pred(&mut rng, k, true))
        .collect();
    let soft_count = *[0usize, 1, 2, 4].choose(&mut rng).unwrap();
    let mut kinds: Vec<usize> = (0..6).collect();
    kinds.shuffle(&mut rng);
    let soft = kinds[..soft_count].iter().map(|&k| random_pred(&mut rng, k, true)).collect();
    let policies = (0..rng.gen_range(0..=4))
        .map(|_| Policy {
            stakeholder: *["isp", "op", "user"].choose(&mut rng).unwrap(),
            preds: (0..rng.gen_range(1..=2))
                .map(|_| {
                    let k = rng.gen_range(0..6);
                    random_pred(&mut rng, k, false)
                })
                .collect(),
            delta: f64::from(rng.gen_range(-16i32..=16)) / 8.0,
            priority: rng.gen_range(-1..=1),
        })
        .collect();
    Trial {
        topology,
        requester,
        verb: if rng.gen_bool(0.8) { "discover" } else { "connect" },
        hard,
        soft,
        policies,
        w_soft: *[1.0, 0.5, 2.0].choose(&mut rng).unwrap(),
    }
}

impl Trial {
    pub fn intent_text(&self) -> String {
        let mut parts = vec![self.verb.to_string(), SERVICE.to_string()];
        for (preds, tag) in [(&self.hard, "essential"), (&self.soft, "desirable")] {
            for p in preds {
                for t in p.texts() {
                    parts.push(format!("({t},{tag})"));
                }
            }
        }
        parts.push("NULL".into());
        format!("<{}>", parts.join(", "))
    }

    pub fn policy_rules(&self, scale: f64) -> Vec<PolicyRule> {
        self.policies
            .iter()
            .map(|p| {
                let texts: Vec<String> = p.preds.iter().flat_map(Pred::texts).collect();
                let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
                PolicyRule::new(p.stakeholder, &refs, p.delta * scale, p.priority)
            })
            .collect()
    }

    /// Every node hosting the service and reachable from the requester,
    /// with its oracle view.
    pub fn views(&self) -> Vec<(String, View)> {
        let d = floyd_warshall(&self.topology);
        let r = self.topology.nodes.iter().position(|n| n.id == self.requester).unwrap();
        self.topology
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, n)| n.service(SERVICE).is_some() && d[r][*i].is_finite())
            .map(|(i, n)| {
                let num = |v: Option<&TypedValue>| match v {
                    Some(TypedValue::Quantity { number, .. }) => *number,
                    other => panic!("unexpected attribute {other:?}"),
                };
                let region = match n.attrs.get("region") {
                    Some(TypedValue::Text { text }) => text.clone(),
                    other => panic!("unexpected region {other:?}"),
                };
                let view = View {
                    rtt: d[r][i],
                    cpu: num(n.attrs.get("cpu")),
                    region,
                    load: num(n.service(SERVICE).unwrap().attrs.get("load")),
                    asn: n.asn,
                    subnet: ["core", "s1", "s2"].iter().position(|s| *s == n.subnet).unwrap(),
                };
                (n.id.clone(), view)
            })
            .collect()
    }

    pub fn violates_hard(&self, v: &View) -> bool {
        self.hard.iter().any(|p| !p.holds(v))
    }

    pub fn utility(&self, v: &View, scale: f64) -> f64 {
        let sat = self.soft.iter().filter(|p| p.holds(v)).count();
        let ratio = if self.soft.is_empty() {
            1.0
        } else {
            sat as f64 / self.soft.len() as f64
        };
        let mut order: Vec<usize> = (0..self.policies.len()).collect();
        order.sort_by_key(|&i| (self.policies[i].priority, self.policies[i].stakeholder, i));
        let mut u = self.w_soft * scale * ratio;
        for i in order {
            let p = &self.policies[i];
            if p.preds.iter().all(|q| q.holds(v)) {
                u += p.delta * scale;
            }
        }
        u
    }

    /// Exhaustive selection: drop hard violators, score everything left,
    /// keep the highest utility, break ties on the smaller node id.
    pub fn oracle(&self, scale: f64) -> Option<String> {
        let mut best: Option<(String, f64)> = None;
        for (id, v) in self.views() {
            if self.violates_hard(&v) {
                continue;
            }
            let u = self.utility(&v, scale);
            let better = match &best {
                None => true,
                Some((bid, bu)) => u > *bu || (u == *bu && id < *bid),
            };
            if better {
                best = Some((id, u));
            }
        }
        best.map(|(id, _)| id)
    }
}

/// The node `mediate` selects for the trial's single action, if any.
pub fn mediated(trial: &Trial, scale: f64) -> Option<String> {
    use maat_core::compiler::compile;
    use maat_core::mediator::{mediate, Binding, Mediation, MediationContext};
    use maat_core::ontology::builtin_ontology;
    use maat_core::simnet::NetworkState;

    let text = trial.intent_text();
    let intent = maat_core::lang::parse(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
    let plan = compile(&intent, &builtin_ontology()).expect("trial compiles");
    let state = NetworkState::new(trial.topology.clone());
    let policies = trial.policy_rules(scale);
    let mut ctx = MediationContext::new(&state, &trial.requester);
    ctx.policies = &policies;
    ctx.w_soft = trial.w_soft * scale;
    match mediate(&plan, &ctx) {
        Mediation::Reified { bindings, .. } => match &bindings[0].binding {
            Binding::Candidate { node_id, .. } => Some(node_id.clone()),
            other => panic!("unexpected binding {other:?}"),
        },
        Mediation::Failed { .. } => None,
    }
}
