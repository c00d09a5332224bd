// SPDX-License-Identifier: Apache-2.0

//! Deterministic network simulator: topology, path costs, multicast groups,
//! service registry and the clocks the agents run on.

mod clock;
mod multicast;
pub mod scenario;
mod state;
mod topology;

use thiserror::Error;

pub use clock::{Clock, LogicalClock, WallClock};
pub use multicast::{MulticastAllocator, MulticastGroup};
pub use scenario::{run_scenario, run_scenario_file, Scenario, ScenarioError, ScenarioReport, StepReport};
pub use state::{Announcement, InstalledRule, NetworkState, StateHandle};
pub(crate) use topology::attr_map;
pub use topology::{load_topology, Attributes, Link, Node, ServiceInstance, Subnet, Topology};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invalid topology: {0}")]
    InvariantViolation(String),
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("no path between '{0}' and '{1}'")]
    Unreachable(String, String),
    #[error("multicast group needs at least one member")]
    EmptyMembership,
    #[error("multicast ttl must be at least 1")]
    InvalidTtl,
    #[error("multicast address pool exhausted")]
    PoolExhausted,
    #[error("io: {0}")]
    Io(String),
}
