//! Datagram transport: wire codec, bind/keepalive session protocol, a seeded
//! simulated channel, and a real UDP adapter behind the same endpoint
//! interface.

pub mod bind;
pub mod channel;
pub mod udp;
pub mod wire;

pub use bind::{BindPhase, BindState, RejectReason, BIND_LIFETIME_SECS, REBIND_MARGIN_SECS};
pub use channel::{ChannelModel, Jitter, SimChannel};
pub use udp::{Endpoint, UdpEndpoint};
pub use wire::{decode, encode, DecodeError, MessageKind, NetworkTuple, WireMessage};
