// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, Weak};
use std::time::Duration;

use thiserror::Error;

use super::agent::Agent;
use super::wire::{self, Message};
use crate::simnet::Clock;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("{0} is unreachable")]
    Unreachable(String),
    #[error("{0} did not answer in time")]
    Timeout(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

/// Request/response exchange with another agent.
pub trait Transport: Send + Sync {
    fn request(&self, endpoint: &str, msg: Message, timeout_ms: u64) -> Result<Message, TransportError>;
}

/// Delivers messages to agents in the same process, still passing every
/// message through its JSON line encoding. Unavailable or slow agents cost
/// the full timeout on the shared logical clock.
pub struct InProcessTransport {
    agents: Mutex<BTreeMap<String, Weak<Agent>>>,
    down: Mutex<BTreeSet<String>>,
    clock: Arc<dyn Clock>,
    next_id: AtomicU64,
}

impl InProcessTransport {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        InProcessTransport {
            agents: Mutex::new(BTreeMap::new()),
            down: Mutex::new(BTreeSet::new()),
            clock,
            next_id: AtomicU64::new(1),
        }
    }

    pub fn register(&self, endpoint: &str, agent: &Arc<Agent>) {
        self.agents
            .lock()
            .unwrap()
            .insert(endpoint.to_string(), Arc::downgrade(agent));
    }

    pub fn set_down(&self, endpoint: &str, down: bool) {
        let mut set = self.down.lock().unwrap();
        if down {
            set.insert(endpoint.to_string());
        } else {
            set.remove(endpoint);
        }
    }
}

impl Transport for InProcessTransport {
    fn request(&self, endpoint: &str, msg: Message, timeout_ms: u64) -> Result<Message, TransportError> {
        let agent = self.agents.lock().unwrap().get(endpoint).and_then(Weak::upgrade);
        let Some(agent) = agent else {
            self.clock.advance(timeout_ms);
            return Err(TransportError::Unreachable(endpoint.to_string()));
        };
        if self.down.lock().unwrap().contains(endpoint) || agent.latency_ms() > timeout_ms {
            self.clock.advance(timeout_ms);
            return Err(TransportError::Timeout(endpoint.to_string()));
        }
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let reply = agent.handle_line(&wire::encode(&msg.into_envelope(id)));
        let (reply_id, reply) = wire::decode(&reply).map_err(|(_, e)| TransportError::Protocol(e.message))?;
        if reply_id != id {
            return Err(TransportError::Protocol(format!("reply to {reply_id}, expected {id}")));
        }
        Ok(reply)
    }
}

/// One connection per request over TCP.
#[derive(Debug, Default)]
pub struct TcpTransport {
    next_id: AtomicU64,
}

impl TcpTransport {
    pub fn new() -> Self {
        TcpTransport {
            next_id: AtomicU64::new(1),
        }
    }
}

impl Transport for TcpTransport {
    fn request(&self, endpoint: &str, msg: Message, timeout_ms: u64) -> Result<Message, TransportError> {
        let unreachable = |e: std::io::Error| TransportError::Unreachable(format!("{endpoint} ({e})"));
        let timeout = Duration::from_millis(timeout_ms.max(1));
        let addr = endpoint
            .to_socket_addrs()
            .map_err(unreachable)?
            .next()
            .ok_or_else(|| TransportError::Unreachable(endpoint.to_string()))?;
        let mut stream = TcpStream::connect_timeout(&addr, timeout).map_err(unreachable)?;
        stream.set_read_timeout(Some(timeout)).map_err(unreachable)?;
        stream.set_write_timeout(Some(timeout)).map_err(unreachable)?;
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let mut line = wire::encode(&msg.into_envelope(id));
        line.push('\n');
        stream.write_all(line.as_bytes()).map_err(unreachable)?;
        let mut reply = String::new();
        BufReader::new(stream).read_line(&mut reply).map_err(|e| match e.kind() {
            std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => {
                TransportError::Timeout(endpoint.to_string())
            }
            _ => TransportError::Protocol(e.to_string()),
        })?;
        if reply.is_empty() {
            return Err(TransportError::Protocol("connection closed".into()));
        }
        wire::decode(reply.trim_end())
            .map(|(_, m)| m)
            .map_err(|(_, e)| TransportError::Protocol(e.message))
    }
}
