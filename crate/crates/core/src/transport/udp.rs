//! Datagram endpoint abstraction and the real UDP adapter.
//!
//! Sessions and drivers talk to an [`Endpoint`]; whether the datagrams cross
//! a simulated channel or a genuine socket is invisible to them. The `now_us`
//! argument carries the caller's clock: the simulated implementation delivers
//! by it, the socket implementation ignores it (the wall clock governs).

use std::cell::RefCell;
use std::io;
use std::net::{Ipv4Addr, SocketAddr, SocketAddrV4, UdpSocket};
use std::rc::Rc;

use super::channel::{ChannelModel, SimChannel};
use super::wire::NetworkTuple;

const MAX_DATAGRAM: usize = 65_536;

pub trait Endpoint {
    fn send_to(&mut self, dest: NetworkTuple, payload: &[u8], now_us: u64) -> io::Result<()>;
    /// One datagram per call, `None` when nothing is pending.
    fn try_recv(&mut self, now_us: u64) -> io::Result<Option<(NetworkTuple, Vec<u8>)>>;
    fn local_tuple(&self) -> NetworkTuple;
}

/// Nonblocking UDP socket adapter.
pub struct UdpEndpoint {
    socket: UdpSocket,
    local: NetworkTuple,
    buf: Box<[u8; MAX_DATAGRAM]>,
}

impl UdpEndpoint {
    pub fn bind(host: Ipv4Addr, port: u16) -> io::Result<Self> {
        let socket = UdpSocket::bind(SocketAddrV4::new(host, port))?;
        socket.set_nonblocking(true)?;
        let local = match socket.local_addr()? {
            SocketAddr::V4(a) => NetworkTuple::new(*a.ip(), a.port()),
            SocketAddr::V6(_) => {
                return Err(io::Error::new(io::ErrorKind::Unsupported, "IPv4 only"))
            }
        };
        Ok(Self {
            socket,
            local,
            buf: Box::new([0u8; MAX_DATAGRAM]),
        })
    }
}

impl Endpoint for UdpEndpoint {
    fn send_to(&mut self, dest: NetworkTuple, payload: &[u8], _now_us: u64) -> io::Result<()> {
        self.socket
            .send_to(payload, SocketAddrV4::new(dest.host, dest.port))?;
        Ok(())
    }

    fn try_recv(&mut self, _now_us: u64) -> io::Result<Option<(NetworkTuple, Vec<u8>)>> {
        match self.socket.recv_from(&mut self.buf[..]) {
            Ok((len, SocketAddr::V4(src))) => Ok(Some((
                NetworkTuple::new(*src.ip(), src.port()),
                self.buf[..len].to_vec(),
            ))),
            Ok((_, SocketAddr::V6(_))) => Ok(None),
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn local_tuple(&self) -> NetworkTuple {
        self.local
    }
}

/// One side of an in-process pair of endpoints joined by two simulated
/// channels. Exists so the same driver code can be exercised against the
/// simulated transport and the socket transport interchangeably.
pub struct SimEndpoint {
    local: NetworkTuple,
    peer: NetworkTuple,
    outbound: Rc<RefCell<SimChannel>>,
    inbound: Rc<RefCell<SimChannel>>,
    pending: Vec<Vec<u8>>,
}

impl SimEndpoint {
    /// Builds a connected pair `(a, b)`; datagrams from `a` reach `b` through
    /// stream 0 of the model and the reverse direction uses stream 1.
    pub fn pair(model: ChannelModel, a: NetworkTuple, b: NetworkTuple) -> (SimEndpoint, SimEndpoint) {
        let ab = Rc::new(RefCell::new(SimChannel::with_stream(model, 0)));
        let ba = Rc::new(RefCell::new(SimChannel::with_stream(model, 1)));
        (
            SimEndpoint {
                local: a,
                peer: b,
                outbound: Rc::clone(&ab),
                inbound: Rc::clone(&ba),
                pending: Vec::new(),
            },
            SimEndpoint {
                local: b,
                peer: a,
                outbound: ba,
                inbound: ab,
                pending: Vec::new(),
            },
        )
    }
}

impl Endpoint for SimEndpoint {
    fn send_to(&mut self, _dest: NetworkTuple, payload: &[u8], now_us: u64) -> io::Result<()> {
        self.outbound.borrow_mut().send(payload.to_vec(), now_us);
        Ok(())
    }

    fn try_recv(&mut self, now_us: u64) -> io::Result<Option<(NetworkTuple, Vec<u8>)>> {
        if self.pending.is_empty() {
            let mut deliveries = self.inbound.borrow_mut().poll(now_us);
            deliveries.reverse(); // pop() below restores delivery order
            self.pending = deliveries.into_iter().map(|d| d.payload).collect();
        }
        Ok(self.pending.pop().map(|p| (self.peer, p)))
    }

    fn local_tuple(&self) -> NetworkTuple {
        self.local
    }
}
