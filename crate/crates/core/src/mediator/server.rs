// SPDX-License-Identifier: Apache-2.0

//! Line-oriented TCP front end for an [`Agent`].

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::agent::Agent;

const POLL: Duration = Duration::from_millis(20);

pub struct ServerHandle {
    addr: SocketAddr,
    agent: Arc<Agent>,
    accept: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(&self) {
        self.agent.request_shutdown();
    }

    /// Blocks until the agent is told to shut down, then saves sessions.
    pub fn wait(mut self) -> io::Result<()> {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        self.agent.save_sessions()
    }
}

/// Accepts connections on `listen` (e.g. `127.0.0.1:0`) until the agent is
/// shut down. Each connection gets a thread; each line gets one reply line.
pub fn serve(agent: Arc<Agent>, listen: &str) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(listen)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let a = Arc::clone(&agent);
    let accept = thread::spawn(move || {
        while !a.is_shut_down() {
            match listener.accept() {
                Ok((stream, _)) => {
                    let a = Arc::clone(&a);
                    thread::spawn(move || {
                        if let Err(e) = connection(&a, stream) {
                            if !matches!(e.kind(), io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionReset) {
                                eprintln!("connection error: {e}");
                            }
                        }
                    });
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
                Err(e) => {
                    eprintln!("accept failed: {e}");
                    thread::sleep(POLL);
                }
            }
        }
    });
    Ok(ServerHandle {
        addr,
        agent,
        accept: Some(accept),
    })
}

fn connection(agent: &Agent, stream: TcpStream) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_millis(200)))?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    loop {
        match reader.read_line(&mut line) {
            Ok(0) => return Ok(()),
            Ok(_) => {
                let request = line.trim_end_matches(['\r', '\n']);
                if !request.trim().is_empty() {
                    let mut reply = agent.handle_line(request);
                    reply.push('\n');
                    writer.write_all(reply.as_bytes())?;
                    writer.flush()?;
                }
                line.clear();
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                if agent.is_shut_down() {
                    return Ok(());
                }
            }
            Err(e) => return Err(e),
        }
    }
}
