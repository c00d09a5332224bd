// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MulticastGroup {
    pub ttl: u8,
    pub members: BTreeSet<String>,
}

/// Hands out the lowest free host address of the pool. Groups are never
/// released, so the allocated set only grows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MulticastAllocator {
    pub pool: Ipv4Net,
    pub allocated: BTreeMap<Ipv4Addr, MulticastGroup>,
}

impl Default for MulticastAllocator {
    fn default() -> Self {
        MulticastAllocator::new("239.0.0.0/8".parse().expect("valid pool"))
    }
}

impl MulticastAllocator {
    pub fn new(pool: Ipv4Net) -> Self {
        MulticastAllocator {
            pool: pool.trunc(),
            allocated: BTreeMap::new(),
        }
    }

    pub fn allocate<I, S>(&mut self, ttl: u8, members: I) -> Result<Ipv4Addr, SimError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let members: BTreeSet<String> = members.into_iter().map(Into::into).collect();
        if members.is_empty() {
            return Err(SimError::EmptyMembership);
        }
        if ttl == 0 {
            return Err(SimError::InvalidTtl);
        }
        let address = self
            .pool
            .hosts()
            .find(|a| !self.allocated.contains_key(a))
            .ok_or(SimError::PoolExhausted)?;
        self.allocated.insert(address, MulticastGroup { ttl, members });
        Ok(address)
    }

    pub fn group(&self, address: Ipv4Addr) -> Option<&MulticastGroup> {
        self.allocated.get(&address)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowest_free_addresses() {
        let mut alloc = MulticastAllocator::default();
        assert_eq!(alloc.allocate(32, ["a"]).unwrap(), Ipv4Addr::new(239, 0, 0, 1));
        assert_eq!(alloc.allocate(1, ["b"]).unwrap(), Ipv4Addr::new(239, 0, 0, 2));
        assert_eq!(alloc.group(Ipv4Addr::new(239, 0, 0, 1)).unwrap().ttl, 32);
    }

    #[test]
    fn membership_and_ttl_errors() {
        let mut alloc = MulticastAllocator::default();
        assert_eq!(alloc.allocate(4, Vec::<String>::new()), Err(SimError::EmptyMembership));
        assert_eq!(alloc.allocate(0, ["a"]), Err(SimError::InvalidTtl));
    }

    #[test]
    fn exhaustion() {
        let mut alloc = MulticastAllocator::new("239.1.1.0/30".parse().unwrap());
        alloc.allocate(1, ["a"]).unwrap();
        alloc.allocate(1, ["a"]).unwrap();
        assert_eq!(alloc.allocate(1, ["a"]), Err(SimError::PoolExhausted));
    }
}
