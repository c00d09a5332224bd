// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::lang::TypedValue;
use crate::mediator::Candidate;

pub type Attributes = BTreeMap<String, TypedValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subnet {
    pub id: String,
    pub cidr: Ipv4Net,
    #[serde(default)]
    pub parent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceInstance {
    pub name: String,
    #[serde(default, with = "attr_map")]
    pub attrs: Attributes,
    /// Content items held by this instance (caches).
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub content: BTreeSet<String>,
}

impl ServiceInstance {
    pub fn new(name: &str) -> Self {
        ServiceInstance {
            name: name.to_string(),
            attrs: Attributes::new(),
            content: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub address: Ipv4Addr,
    pub subnet: String,
    #[serde(default)]
    pub asn: u32,
    #[serde(default, with = "attr_map")]
    pub attrs: Attributes,
    #[serde(default)]
    pub services: Vec<ServiceInstance>,
}

impl Node {
    pub fn service(&self, name: &str) -> Option<&ServiceInstance> {
        self.services.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: String,
    pub b: String,
    pub rtt_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub subnets: Vec<Subnet>,
    #[serde(default)]
    pub nodes: Vec<Node>,
    #[serde(default)]
    pub links: Vec<Link>,
}

pub fn load_topology(document: &str) -> Result<Topology, SimError> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let topo: Topology = serde_path_to_error::deserialize(de).map_err(|e| SimError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    topo.validate()?;
    Ok(topo)
}

impl Topology {
    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |msg: String| Err(SimError::InvariantViolation(msg));

        let mut subnets = BTreeMap::new();
        for s in &self.subnets {
            if subnets.insert(s.id.as_str(), s).is_some() {
                return invalid(format!("duplicate subnet id '{}'", s.id));
            }
        }
        for s in &self.subnets {
            if let Some(p) = &s.parent {
                if !subnets.contains_key(p.as_str()) {
                    return invalid(format!("subnet '{}' has unknown parent '{p}'", s.id));
                }
            }
        }
        let roots = self.subnets.iter().filter(|s| s.parent.is_none()).count();
        if !self.subnets.is_empty() && roots != 1 {
            return invalid(format!("subnet graph must have exactly one root, found {roots}"));
        }
        for s in &self.subnets {
            let mut seen = BTreeSet::new();
            let mut cur = Some(s);
            while let Some(c) = cur {
                if !seen.insert(c.id.as_str()) {
                    return invalid(format!("subnet '{}' is part of a parent cycle", s.id));
                }
                cur = c.parent.as_deref().and_then(|p| subnets.get(p).copied());
            }
        }

        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id.as_str()) {
                return invalid(format!("duplicate node id '{}'", n.id));
            }
            let Some(subnet) = subnets.get(n.subnet.as_str()) else {
                return invalid(format!("node '{}' is in unknown subnet '{}'", n.id, n.subnet));
            };
            if !subnet.cidr.contains(&n.address) {
                return invalid(format!(
                    "node '{}' address {} is outside subnet {}",
                    n.id, n.address, subnet.cidr
                ));
            }
            if n.services.iter().any(|s| s.name.is_empty()) {
                return invalid(format!("node '{}' has a service with an empty name", n.id));
            }
        }
        for (i, l) in self.links.iter().enumerate() {
            for end in [&l.a, &l.b] {
                if !ids.contains(end.as_str()) {
                    return invalid(format!("link {i} references unknown node '{end}'"));
                }
            }
            if !(l.rtt_ms.is_finite() && l.rtt_ms > 0.0) {
                return invalid(format!("link {i} must have a positive rtt"));
            }
        }
        Ok(())
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_mut(&mut self, id: &str) -> Option<&mut Node> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    pub fn subnet(&self, id: &str) -> Option<&Subnet> {
        self.subnets.iter().find(|s| s.id == id)
    }

    /// `subnet_id` and all of its descendants.
    pub fn subtree(&self, subnet_id: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::from([subnet_id.to_string()]);
        loop {
            let before = out.len();
            for s in &self.subnets {
                if s.parent.as_ref().is_some_and(|p| out.contains(p)) {
                    out.insert(s.id.clone());
                }
            }
            if out.len() == before {
                return out;
            }
        }
    }

    /// Nodes whose subnet lies in the subtree rooted at `subnet_id`.
    pub fn nodes_in_scope(&self, subnet_id: &str) -> BTreeSet<String> {
        let subnets = self.subtree(subnet_id);
        self.nodes
            .iter()
            .filter(|n| subnets.contains(&n.subnet))
            .map(|n| n.id.clone())
            .collect()
    }

    /// Ancestors of `subnet_id`, nearest first, starting with itself.
    pub fn subnet_chain(&self, subnet_id: &str) -> Vec<String> {
        let mut chain = Vec::new();
        let mut cur = self.subnet(subnet_id);
        while let Some(s) = cur {
            if chain.contains(&s.id) {
                break;
            }
            chain.push(s.id.clone());
            cur = s.parent.as_deref().and_then(|p| self.subnet(p));
        }
        chain
    }

    /// Minimum path latency from `from` to every reachable node.
    pub fn rtts_from(&self, from: &str) -> Result<BTreeMap<String, f64>, SimError> {
        if self.node(from).is_none() {
            return Err(SimError::UnknownNode(from.to_string()));
        }
        let mut graph = UnGraph::<&str, f64>::new_undirected();
        let mut index: HashMap<&str, NodeIndex> = HashMap::new();
        for n in &self.nodes {
            index.insert(n.id.as_str(), graph.add_node(n.id.as_str()));
        }
        for l in &self.links {
            graph.add_edge(index[l.a.as_str()], index[l.b.as_str()], l.rtt_ms);
        }
        let dist = dijkstra(&graph, index[from], None, |e| *e.weight());
        Ok(dist
            .into_iter()
            .map(|(ix, d)| (graph[ix].to_string(), d))
            .collect())
    }

    /// Latency of the fastest path between two nodes.
    pub fn path_rtt(&self, a: &str, b: &str) -> Result<f64, SimError> {
        if self.node(b).is_none() {
            return Err(SimError::UnknownNode(b.to_string()));
        }
        self.rtts_from(a)?
            .get(b)
            .copied()
            .ok_or_else(|| SimError::Unreachable(a.to_string(), b.to_string()))
    }

    /// Every reachable node hosting `service_name`, ordered by node id, with
    /// attributes as seen from `requester`. No constraint filtering happens
    /// here.
    pub fn match_candidates(&self, service_name: &str, requester: &str) -> Result<Vec<Candidate>, SimError> {
        let rtts = self.rtts_from(requester)?;
        let mut out: Vec<Candidate> = self
            .nodes
            .iter()
            .filter(|n| n.service(service_name).is_some())
            .filter_map(|n| {
                let rtt = *rtts.get(&n.id)?;
                Some(self.materialize(n, Some(service_name), rtt))
            })
            .collect();
        out.sort_by(|a, b| a.node_id.cmp(&b.node_id));
        Ok(out)
    }

    /// A single node as a candidate, optionally with one of its services.
    pub fn candidate_for(
        &self,
        node_id: &str,
        service_name: Option<&str>,
        requester: &str,
    ) -> Result<Candidate, SimError> {
        let node = self
            .node(node_id)
            .ok_or_else(|| SimError::UnknownNode(node_id.to_string()))?;
        let rtt = self.path_rtt(requester, node_id)?;
        Ok(self.materialize(node, service_name, rtt))
    }

    fn materialize(&self, node: &Node, service_name: Option<&str>, rtt: f64) -> Candidate {
        let mut attributes = node.attrs.clone();
        let service = service_name.and_then(|s| node.service(s));
        if let Some(svc) = service {
            attributes.extend(svc.attrs.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        attributes.insert("rtt".into(), TypedValue::quantity(rtt, "ms"));
        attributes.insert("asn".into(), TypedValue::quantity(f64::from(node.asn), ""));
        attributes.insert("address".into(), TypedValue::cidr(node.address, 32));
        attributes.insert("subnet".into(), TypedValue::text(node.subnet.clone()));
        if let Some(subnet) = self.subnet(&node.subnet) {
            attributes.insert(
                "net".into(),
                TypedValue::cidr(subnet.cidr.network(), subnet.cidr.prefix_len()),
            );
        }
        Candidate {
            node_id: node.id.clone(),
            service_name: service.map(|s| s.name.clone()).unwrap_or_default(),
            attributes,
        }
    }
}

/// Attribute maps in documents: plain strings and numbers are parsed with the
/// modifier value rules; the tagged form is accepted and emitted whenever the
/// plain form would not read back identically.
pub(crate) mod attr_map {
    use super::Attributes;
    use crate::lang::TypedValue;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Number(f64),
        Text(String),
        Typed(TypedValue),
    }

    pub fn serialize<S: Serializer>(map: &Attributes, s: S) -> Result<S::Ok, S::Error> {
        let raw: BTreeMap<&String, Raw> = map
            .iter()
            .map(|(k, v)| {
                let r = match v {
                    TypedValue::Quantity { number, unit } if unit.is_empty() => Raw::Number(*number),
                    other if TypedValue::parse(&other.to_string()) == *other => {
                        Raw::Text(other.to_string())
                    }
                    other => Raw::Typed(other.clone()),
                };
                (k, r)
            })
            .collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Attributes, D::Error> {
        let raw = BTreeMap::<String, Raw>::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|(k, r)| {
                let v = match r {
                    Raw::Number(n) => TypedValue::quantity(n, ""),
                    Raw::Text(t) => TypedValue::parse(&t),
                    Raw::Typed(t) => t,
                };
                (k, v)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Topology {
        load_topology(
            r#"{
            "seed": 1,
            "subnets": [{"id": "lan", "cidr": "10.0.0.0/24"}],
            "nodes": [
                {"id": "a", "address": "10.0.0.1", "subnet": "lan"},
                {"id": "b", "address": "10.0.0.2", "subnet": "lan", "services": [{"name": "svc"}]},
                {"id": "c", "address": "10.0.0.3", "subnet": "lan", "asn": 7,
                 "attrs": {"capacity": 4, "userID": "92cd701c0be"},
                 "services": [{"name": "svc", "attrs": {"capacity": 9}}]}
            ],
            "links": [{"a": "a", "b": "b", "rtt_ms": 10}, {"a": "b", "b": "c", "rtt_ms": 15}]
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn single_hop_and_additivity() {
        let t = chain();
        assert_eq!(t.path_rtt("a", "b").unwrap(), 10.0);
        assert_eq!(t.path_rtt("a", "c").unwrap(), 25.0);
        assert_eq!(t.path_rtt("c", "a").unwrap(), 25.0);
        assert_eq!(t.path_rtt("b", "b").unwrap(), 0.0);
    }

    #[test]
    fn triangle_takes_shorter_path() {
        let mut t = chain();
        t.links.push(Link {
            a: "a".into(),
            b: "c".into(),
            rtt_ms: 40.0,
        });
        assert_eq!(t.path_rtt("a", "c").unwrap(), 25.0);
    }

    #[test]
    fn unreachable_and_unknown() {
        let mut t = chain();
        t.links.pop();
        assert_eq!(
            t.path_rtt("a", "c"),
            Err(SimError::Unreachable("a".into(), "c".into()))
        );
        assert_eq!(t.path_rtt("a", "zz"), Err(SimError::UnknownNode("zz".into())));
    }

    #[test]
    fn candidates_are_materialized() {
        let t = chain();
        let cands = t.match_candidates("svc", "a").unwrap();
        assert_eq!(cands.len(), 2);
        assert_eq!(cands[0].node_id, "b");
        assert_eq!(cands[1].attributes["rtt"], TypedValue::quantity(25.0, "ms"));
        assert_eq!(cands[1].attributes["asn"], TypedValue::quantity(7.0, ""));
        // service attributes override node attributes
        assert_eq!(cands[1].attributes["capacity"], TypedValue::quantity(9.0, ""));
        assert_eq!(cands[1].attributes["userID"], TypedValue::text("92cd701c0be"));
        assert_eq!(
            cands[1].attributes["net"],
            TypedValue::cidr(Ipv4Addr::new(10, 0, 0, 0), 24)
        );
        assert!(t.match_candidates("nothing", "a").unwrap().is_empty());
        // requester hosting the service sees itself at zero latency
        let own = t.match_candidates("svc", "b").unwrap();
        assert_eq!(own[0].attributes["rtt"], TypedValue::quantity(0.0, "ms"));
    }

    #[test]
    fn invariant_violations() {
        let bad_link = r#"{"subnets":[{"id":"s","cidr":"10.0.0.0/24"}],
            "nodes":[{"id":"a","address":"10.0.0.1","subnet":"s"}],
            "links":[{"a":"a","b":"ghost","rtt_ms":1}]}"#;
        assert!(matches!(load_topology(bad_link), Err(SimError::InvariantViolation(_))));

        let outside = r#"{"subnets":[{"id":"s","cidr":"10.0.0.0/24"}],
            "nodes":[{"id":"a","address":"10.9.0.1","subnet":"s"}]}"#;
        assert!(matches!(load_topology(outside), Err(SimError::InvariantViolation(_))));

        let cycle = r#"{"subnets":[{"id":"r","cidr":"10.0.0.0/8"},
            {"id":"x","cidr":"10.1.0.0/16","parent":"y"},{"id":"y","cidr":"10.2.0.0/16","parent":"x"}]}"#;
        assert!(matches!(load_topology(cycle), Err(SimError::InvariantViolation(_))));

        let zero_rtt = r#"{"subnets":[{"id":"s","cidr":"10.0.0.0/24"}],
            "nodes":[{"id":"a","address":"10.0.0.1","subnet":"s"},{"id":"b","address":"10.0.0.2","subnet":"s"}],
            "links":[{"a":"a","b":"b","rtt_ms":0}]}"#;
        assert!(matches!(load_topology(zero_rtt), Err(SimError::InvariantViolation(_))));
    }

    #[test]
    fn schema_errors_carry_a_path() {
        let err = load_topology(r#"{"nodes":[{"id":"a","address":"not-an-ip","subnet":"s"}]}"#)
            .unwrap_err();
        let SimError::Schema { path, .. } = err else {
            panic!("expected schema error")
        };
        assert_eq!(path, "nodes[0].address");
    }

    #[test]
    fn empty_topology_is_valid() {
        let t = load_topology(r#"{"nodes": []}"#).unwrap();
        assert!(t.nodes.is_empty());
    }

    #[test]
    fn scope_queries() {
        let t = load_topology(
            r#"{"subnets":[{"id":"root","cidr":"10.0.0.0/16"},
                {"id":"lab","cidr":"10.0.1.0/24","parent":"root"},
                {"id":"dorm","cidr":"10.0.2.0/24","parent":"root"}],
               "nodes":[{"id":"x","address":"10.0.1.5","subnet":"lab"},
                        {"id":"y","address":"10.0.2.5","subnet":"dorm"}]}"#,
        )
        .unwrap();
        assert_eq!(t.nodes_in_scope("lab"), BTreeSet::from(["x".to_string()]));
        assert_eq!(t.nodes_in_scope("root").len(), 2);
        assert_eq!(t.subnet_chain("dorm"), vec!["dorm", "root"]);
    }

    #[test]
    fn attribute_documents_round_trip() {
        let t = chain();
        let text = serde_json::to_string(&t).unwrap();
        assert_eq!(load_topology(&text).unwrap(), t);
    }
}
