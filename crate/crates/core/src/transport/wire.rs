//! Bit-exact datagram codec.
//!
//! Layout (little-endian, 38-byte header):
//!
//! ```text
//! bytes  0..4   magic "DPCC"
//! byte   4      protocol version
//! byte   5      kind: 0 bind request, 1 bind ack, 2 measurement, 3 control sequence
//! bytes  6..10  sender IPv4 address (network octet order)
//! bytes 10..12  sender port, u16 LE
//! bytes 12..20  session id, u64 LE
//! bytes 20..28  sequence number, u64 LE
//! bytes 28..36  timestamp, microseconds, u64 LE
//! bytes 36..38  payload count n, u16 LE
//! bytes 38..    n IEEE-754 doubles, LE
//! ```

use std::net::Ipv4Addr;

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"DPCC";
pub const PROTOCOL_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 38;

/// `(host, port)` pair identifying one endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NetworkTuple {
    pub host: Ipv4Addr,
    pub port: u16,
}

impl NetworkTuple {
    pub fn new(host: Ipv4Addr, port: u16) -> Self {
        Self { host, port }
    }
}

impl std::fmt::Display for NetworkTuple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.host, self.port)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageKind {
    BindRequest = 0,
    BindAck = 1,
    Measurement = 2,
    ControlSeq = 3,
}

impl MessageKind {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(MessageKind::BindRequest),
            1 => Some(MessageKind::BindAck),
            2 => Some(MessageKind::Measurement),
            3 => Some(MessageKind::ControlSeq),
            _ => None,
        }
    }

    pub fn is_bind_phase(self) -> bool {
        matches!(self, MessageKind::BindRequest | MessageKind::BindAck)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub version: u8,
    pub kind: MessageKind,
    pub session_id: u64,
    pub seq_no: u64,
    pub timestamp_us: u64,
    pub sender: NetworkTuple,
    pub payload: Vec<f64>,
}

impl WireMessage {
    pub fn bind_request(session_id: u64, seq_no: u64, timestamp_us: u64, sender: NetworkTuple) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            kind: MessageKind::BindRequest,
            session_id,
            seq_no,
            timestamp_us,
            sender,
            payload: Vec::new(),
        }
    }

    pub fn bind_ack(session_id: u64, seq_no: u64, timestamp_us: u64, sender: NetworkTuple) -> Self {
        Self {
            kind: MessageKind::BindAck,
            ..Self::bind_request(session_id, seq_no, timestamp_us, sender)
        }
    }

    /// `payload = [applied input, measured output]`.
    pub fn measurement(
        session_id: u64,
        seq_no: u64,
        timestamp_us: u64,
        sender: NetworkTuple,
        input: f64,
        output: f64,
    ) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            kind: MessageKind::Measurement,
            session_id,
            seq_no,
            timestamp_us,
            sender,
            payload: vec![input, output],
        }
    }

    pub fn control_seq(
        session_id: u64,
        seq_no: u64,
        timestamp_us: u64,
        sender: NetworkTuple,
        values: Vec<f64>,
    ) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            kind: MessageKind::ControlSeq,
            session_id,
            seq_no,
            timestamp_us,
            sender,
            payload: values,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("payload of {0} values does not fit the 16-bit count field")]
    PayloadTooLong(usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("unknown message kind {0}")]
    BadKind(u8),
    #[error("datagram truncated: have {have} bytes, need {need}")]
    Truncated { have: usize, need: usize },
    #[error("payload length {got} is invalid for this message")]
    PayloadLengthMismatch { got: usize },
}

pub fn encode(msg: &WireMessage) -> Result<Vec<u8>, EncodeError> {
    if msg.payload.len() > u16::MAX as usize {
        return Err(EncodeError::PayloadTooLong(msg.payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * msg.payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(msg.version);
    out.push(msg.kind as u8);
    out.extend_from_slice(&msg.sender.host.octets());
    out.extend_from_slice(&msg.sender.port.to_le_bytes());
    out.extend_from_slice(&msg.session_id.to_le_bytes());
    out.extend_from_slice(&msg.seq_no.to_le_bytes());
    out.extend_from_slice(&msg.timestamp_us.to_le_bytes());
    out.extend_from_slice(&(msg.payload.len() as u16).to_le_bytes());
    for v in &msg.payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<WireMessage, DecodeError> {
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::Truncated {
            have: bytes.len(),
            need: HEADER_LEN,
        });
    }
    if bytes[0..4] != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    let version = bytes[4];
    if version != PROTOCOL_VERSION {
        return Err(DecodeError::BadVersion(version));
    }
    let kind = MessageKind::from_byte(bytes[5]).ok_or(DecodeError::BadKind(bytes[5]))?;
    let host = Ipv4Addr::new(bytes[6], bytes[7], bytes[8], bytes[9]);
    let port = u16::from_le_bytes([bytes[10], bytes[11]]);
    let session_id = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let seq_no = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
    let timestamp_us = u64::from_le_bytes(bytes[28..36].try_into().unwrap());
    let count = u16::from_le_bytes([bytes[36], bytes[37]]) as usize;
    let need = HEADER_LEN + 8 * count;
    if bytes.len() < need {
        return Err(DecodeError::Truncated {
            have: bytes.len(),
            need,
        });
    }
    if bytes.len() > need {
        return Err(DecodeError::PayloadLengthMismatch { got: count });
    }
    let valid_count = match kind {
        MessageKind::BindRequest | MessageKind::BindAck => count == 0,
        MessageKind::Measurement => count == 2,
        MessageKind::ControlSeq => count >= 1,
    };
    if !valid_count {
        return Err(DecodeError::PayloadLengthMismatch { got: count });
    }
    let payload = (0..count)
        .map(|i| {
            let at = HEADER_LEN + 8 * i;
            f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
        })
        .collect();
    Ok(WireMessage {
        version,
        kind,
        session_id,
        seq_no,
        timestamp_us,
        sender: NetworkTuple::new(host, port),
        payload,
    })
}
