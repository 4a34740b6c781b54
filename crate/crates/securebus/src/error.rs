use thiserror::Error;

use crate::session::HandshakeState;

/// First violated field when a byte string is not a valid frame.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Malformed {
    #[error("truncated at {0}")]
    Truncated(&'static str),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 2]),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown message type {0}")]
    BadMsgType(u8),
    #[error("payload_len {0} exceeds the frame limit")]
    PayloadTooLong(u32),
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("unexpected message type {0}")]
    UnexpectedMsgType(u8),
    #[error("bad handshake body: {0}")]
    BadBody(&'static str),
}

#[derive(Debug, Error)]
pub enum BusError {
    #[error("malformed frame: {0}")]
    MalformedFrame(#[from] Malformed),
    #[error("operation not allowed in state {actual:?}")]
    WrongState { actual: HandshakeState },
    #[error("unsupported crypto suite {0:#04x}")]
    UnsupportedSuite(u8),
    #[error("sensor {0} is not registered")]
    UnknownSensor(u16),
    #[error("signature verification failed")]
    SignatureInvalid,
    #[error("authentication tag mismatch")]
    TagMismatch,
    #[error("replayed sequence {sequence} (last accepted {last})")]
    ReplayDetected { sequence: u64, last: u64 },
    #[error("send sequence space exhausted")]
    SequenceExhausted,
    #[error("crypto backend: {0}")]
    Crypto(String),
    #[error("registry: {0}")]
    Registry(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = BusError> = std::result::Result<T, E>;
