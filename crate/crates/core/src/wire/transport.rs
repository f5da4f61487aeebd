use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use crate::domain::Timestamp;

/// A received datagram stamped with the local receive time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Received {
    pub bytes: Vec<u8>,
    pub recv_ts: Timestamp,
    /// Sender address, when the transport has one.
    pub from: Option<SocketAddr>,
}

/// Datagram transport with a local clock.
pub trait Transport {
    fn now(&self) -> Timestamp;
    fn send(&mut self, frame: &[u8]) -> io::Result<()>;
    /// Wait for the next datagram until the local clock reaches `deadline`.
    fn recv_until(&mut self, deadline: Timestamp) -> io::Result<Option<Received>>;
}

pub fn system_now() -> Timestamp {
    let d = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or(Duration::ZERO);
    Timestamp(d.as_micros() as u64)
}

/// UDP endpoint talking to a single peer. A reader thread timestamps each
/// datagram on arrival and hands it over through a channel.
#[derive(Debug)]
pub struct UdpEndpoint {
    socket: UdpSocket,
    peer: SocketAddr,
    inbox: Receiver<Received>,
    clock_offset_us: i64,
}

impl UdpEndpoint {
    pub fn bind(local: impl ToSocketAddrs, peer: impl ToSocketAddrs) -> io::Result<Self> {
        let socket = UdpSocket::bind(local)?;
        let peer = peer
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "peer address did not resolve"))?;
        Self::from_socket(socket, peer, 0)
    }

    /// `clock_offset_us` skews this endpoint's clock, for exercising sync
    /// on a single host.
    pub fn from_socket(socket: UdpSocket, peer: SocketAddr, clock_offset_us: i64) -> io::Result<Self> {
        let reader = socket.try_clone()?;
        let (tx, inbox) = mpsc::channel();
        thread::Builder::new()
            .name("udp-rx".into())
            .spawn(move || {
                let mut buf = vec![0u8; 65_536];
                loop {
                    match reader.recv_from(&mut buf) {
                        Ok((n, from)) => {
                            let rx = Received {
                                bytes: buf[..n].to_vec(),
                                recv_ts: system_now().offset_by(clock_offset_us),
                                from: Some(from),
                            };
                            if tx.send(rx).is_err() {
                                break;
                            }
                        }
                        Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                        // ICMP port-unreachable surfaces here on some platforms.
                        Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => continue,
                        Err(_) => break,
                    }
                }
            })?;
        Ok(Self {
            socket,
            peer,
            inbox,
            clock_offset_us,
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    pub fn peer(&self) -> SocketAddr {
        self.peer
    }

    /// Send to an address other than the configured peer.
    pub fn send_to(&self, frame: &[u8], addr: SocketAddr) -> io::Result<()> {
        self.socket.send_to(frame, addr).map(|_| ())
    }

    /// Drain everything received so far without blocking.
    pub fn drain(&mut self) -> Vec<Received> {
        self.inbox.try_iter().collect()
    }
}

impl Transport for UdpEndpoint {
    fn now(&self) -> Timestamp {
        system_now().offset_by(self.clock_offset_us)
    }

    fn send(&mut self, frame: &[u8]) -> io::Result<()> {
        self.socket.send_to(frame, self.peer).map(|_| ())
    }

    fn recv_until(&mut self, deadline: Timestamp) -> io::Result<Option<Received>> {
        let now = self.now();
        let wait = Duration::from_micros(deadline.micros().saturating_sub(now.micros()));
        match self.inbox.recv_timeout(wait) {
            Ok(rx) => Ok(Some(rx)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(io::Error::new(
                io::ErrorKind::BrokenPipe,
                "udp reader thread stopped",
            )),
        }
    }
}
