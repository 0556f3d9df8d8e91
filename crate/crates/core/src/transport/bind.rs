//! Cloud-edge session establishment and maintenance.
//!
//! The edge registers its internal tuple with a bind request; the receiver of
//! any message verifies that the sender's claimed port matches the observed
//! source port. A bind lives for 130 s; the edge refreshes it 10 s before
//! expiry, and data messages are rejected once an expired bind has not been
//! rebuilt.

use thiserror::Error;

use super::wire::{MessageKind, NetworkTuple, WireMessage};

pub const BIND_LIFETIME_SECS: f64 = 130.0;
pub const REBIND_MARGIN_SECS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindPhase {
    Unbound,
    AwaitingAck,
    Bound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RejectReason {
    #[error("sender port does not match the registered or observed port")]
    PortMismatch,
    #[error("unknown session id")]
    UnknownSession,
    #[error("no active bind")]
    Unbound,
}

/// One side's view of the bind.
#[derive(Debug, Clone)]
pub struct BindState {
    phase: BindPhase,
    peer: Option<NetworkTuple>,
    session_id: Option<u64>,
    bound_at_us: u64,
    lifetime_us: u64,
}

impl BindState {
    pub fn new(lifetime_secs: f64) -> Self {
        assert!(lifetime_secs > 0.0);
        Self {
            phase: BindPhase::Unbound,
            peer: None,
            session_id: None,
            bound_at_us: 0,
            lifetime_us: (lifetime_secs * 1e6).round() as u64,
        }
    }

    pub fn phase(&self) -> BindPhase {
        self.phase
    }

    pub fn peer(&self) -> Option<NetworkTuple> {
        self.peer
    }

    pub fn session_id(&self) -> Option<u64> {
        self.session_id
    }

    pub fn is_expired(&self, now_us: u64) -> bool {
        self.phase == BindPhase::Bound && now_us.saturating_sub(self.bound_at_us) >= self.lifetime_us
    }

    /// Bound and within its lifetime: data messages may flow.
    pub fn is_active(&self, now_us: u64) -> bool {
        self.phase == BindPhase::Bound && !self.is_expired(now_us)
    }

    fn within_refresh_window(&self, now_us: u64) -> bool {
        let margin_us = (REBIND_MARGIN_SECS * 1e6) as u64;
        self.phase == BindPhase::Bound
            && now_us.saturating_sub(self.bound_at_us) >= self.lifetime_us.saturating_sub(margin_us)
    }

    /// Client-side (re)initiation. Returns the bind request to send, or
    /// `None` while an existing bind is still comfortably fresh.
    ///
    /// A bind nearing expiry is refreshed without leaving `Bound`, so data
    /// keeps flowing across the keepalive; a fully expired one drops back to
    /// `AwaitingAck` and data acceptance stops until the new ack arrives.
    pub fn initiate(
        &mut self,
        local: NetworkTuple,
        peer: NetworkTuple,
        session_id: u64,
        seq_no: u64,
        now_us: u64,
    ) -> Option<WireMessage> {
        if self.is_active(now_us) && !self.within_refresh_window(now_us) {
            return None;
        }
        if self.is_expired(now_us) || self.phase == BindPhase::Unbound {
            self.phase = BindPhase::AwaitingAck;
        }
        self.peer = Some(peer);
        self.session_id = Some(session_id);
        Some(WireMessage::bind_request(session_id, seq_no, now_us, local))
    }

    /// Server-side handling of a bind request: learns the peer tuple and the
    /// session id, and starts (or restarts) the lifetime clock.
    pub fn handle_request(
        &mut self,
        msg: &WireMessage,
        observed: NetworkTuple,
        now_us: u64,
    ) -> Result<(), RejectReason> {
        debug_assert_eq!(msg.kind, MessageKind::BindRequest);
        if msg.sender.port != observed.port {
            return Err(RejectReason::PortMismatch);
        }
        self.phase = BindPhase::Bound;
        self.peer = Some(observed);
        self.session_id = Some(msg.session_id);
        self.bound_at_us = now_us;
        Ok(())
    }

    /// Client-side handling of a bind ack.
    pub fn handle_ack(
        &mut self,
        msg: &WireMessage,
        observed: NetworkTuple,
        now_us: u64,
    ) -> Result<(), RejectReason> {
        debug_assert_eq!(msg.kind, MessageKind::BindAck);
        if msg.sender.port != observed.port {
            return Err(RejectReason::PortMismatch);
        }
        if self.session_id != Some(msg.session_id) {
            return Err(RejectReason::UnknownSession);
        }
        match self.phase {
            BindPhase::Unbound => Err(RejectReason::Unbound),
            BindPhase::AwaitingAck | BindPhase::Bound => {
                self.phase = BindPhase::Bound;
                self.peer = Some(observed);
                self.bound_at_us = now_us;
                Ok(())
            }
        }
    }

    /// Gate for data messages. Bind-phase messages pass here and are
    /// validated by their own handlers.
    pub fn verify_and_accept(
        &self,
        msg: &WireMessage,
        observed: NetworkTuple,
        now_us: u64,
    ) -> Result<(), RejectReason> {
        if msg.kind.is_bind_phase() {
            return Ok(());
        }
        if !self.is_active(now_us) {
            return Err(RejectReason::Unbound);
        }
        if msg.sender.port != observed.port {
            return Err(RejectReason::PortMismatch);
        }
        if let Some(peer) = self.peer {
            if observed.port != peer.port {
                return Err(RejectReason::PortMismatch);
            }
        }
        if self.session_id != Some(msg.session_id) {
            return Err(RejectReason::UnknownSession);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::Ipv4Addr;

    const SECS: u64 = 1_000_000;

    fn edge() -> NetworkTuple {
        NetworkTuple::new(Ipv4Addr::new(192, 168, 0, 10), 40000)
    }

    fn cloud() -> NetworkTuple {
        NetworkTuple::new(Ipv4Addr::new(10, 0, 0, 1), 9000)
    }

    fn bound_pair(now: u64) -> (BindState, BindState) {
        let mut client = BindState::new(BIND_LIFETIME_SECS);
        let mut server = BindState::new(BIND_LIFETIME_SECS);
        let req = client.initiate(edge(), cloud(), 77, 0, now).unwrap();
        assert_eq!(client.phase(), BindPhase::AwaitingAck);
        server.handle_request(&req, edge(), now).unwrap();
        let ack = WireMessage::bind_ack(77, 0, now, cloud());
        client.handle_ack(&ack, cloud(), now).unwrap();
        assert_eq!(client.phase(), BindPhase::Bound);
        assert_eq!(server.phase(), BindPhase::Bound);
        (client, server)
    }

    #[test]
    fn fresh_initiate_sends_request() {
        let mut st = BindState::new(BIND_LIFETIME_SECS);
        let msg = st.initiate(edge(), cloud(), 1, 0, 0).unwrap();
        assert_eq!(msg.kind, MessageKind::BindRequest);
        assert_eq!(msg.sender, edge());
        assert_eq!(st.phase(), BindPhase::AwaitingAck);
        assert_eq!(st.peer(), Some(cloud()));
    }

    #[test]
    fn initiate_is_idempotent_while_fresh() {
        let (mut client, _) = bound_pair(0);
        assert!(client.initiate(edge(), cloud(), 77, 1, 60 * SECS).is_none());
        assert_eq!(client.phase(), BindPhase::Bound);
    }

    #[test]
    fn initiate_refreshes_near_expiry_without_dropping() {
        let (mut client, _) = bound_pair(0);
        let msg = client.initiate(edge(), cloud(), 77, 1, 121 * SECS);
        assert!(msg.is_some());
        assert_eq!(client.phase(), BindPhase::Bound);
        assert!(client.is_active(121 * SECS));
    }

    #[test]
    fn initiate_rebuilds_after_expiry() {
        let (mut client, _) = bound_pair(0);
        let msg = client.initiate(edge(), cloud(), 77, 1, 131 * SECS);
        assert!(msg.is_some());
        assert_eq!(client.phase(), BindPhase::AwaitingAck);
    }

    #[test]
    fn bind_expires_at_the_lifetime() {
        let (_, server) = bound_pair(0);
        let data = WireMessage::measurement(77, 5, 0, edge(), 0.0, 0.1);
        assert!(server.verify_and_accept(&data, edge(), 129 * SECS).is_ok());
        assert_eq!(
            server.verify_and_accept(&data, edge(), 131 * SECS),
            Err(RejectReason::Unbound)
        );
    }

    #[test]
    fn data_rejected_while_unbound() {
        let st = BindState::new(BIND_LIFETIME_SECS);
        let data = WireMessage::measurement(77, 5, 0, edge(), 0.0, 0.1);
        assert_eq!(st.verify_and_accept(&data, edge(), 0), Err(RejectReason::Unbound));
    }

    #[test]
    fn port_mismatch_is_rejected() {
        let (_, server) = bound_pair(0);
        let data = WireMessage::measurement(77, 5, 0, edge(), 0.0, 0.1);
        // Same claimed tuple, different observed source port.
        let spoofed_source = NetworkTuple::new(Ipv4Addr::new(192, 168, 0, 10), 40001);
        assert_eq!(
            server.verify_and_accept(&data, spoofed_source, SECS),
            Err(RejectReason::PortMismatch)
        );
        // Claimed port differing from the observed one is equally rejected.
        let lying = WireMessage::measurement(77, 6, 0, NetworkTuple::new(edge().host, 40002), 0.0, 0.1);
        assert_eq!(
            server.verify_and_accept(&lying, edge(), SECS),
            Err(RejectReason::PortMismatch)
        );
    }

    #[test]
    fn wrong_session_is_rejected() {
        let (_, server) = bound_pair(0);
        let data = WireMessage::measurement(123, 5, 0, edge(), 0.0, 0.1);
        assert_eq!(
            server.verify_and_accept(&data, edge(), SECS),
            Err(RejectReason::UnknownSession)
        );
    }

    #[test]
    fn unsolicited_ack_is_rejected() {
        let mut st = BindState::new(BIND_LIFETIME_SECS);
        st.session_id = Some(9);
        let ack = WireMessage::bind_ack(9, 0, 0, cloud());
        assert_eq!(st.handle_ack(&ack, cloud(), 0), Err(RejectReason::Unbound));
    }

    #[test]
    fn rebind_restores_acceptance() {
        let (mut client, mut server) = bound_pair(0);
        let now = 140 * SECS;
        let data = WireMessage::measurement(77, 5, 0, edge(), 0.0, 0.1);
        assert_eq!(server.verify_and_accept(&data, edge(), now), Err(RejectReason::Unbound));
        let req = client.initiate(edge(), cloud(), 77, 9, now).unwrap();
        server.handle_request(&req, edge(), now).unwrap();
        let ack = WireMessage::bind_ack(77, 1, now, cloud());
        client.handle_ack(&ack, cloud(), now).unwrap();
        assert!(server.verify_and_accept(&data, edge(), now + SECS).is_ok());
        assert!(client.is_active(now + SECS));
    }
}
