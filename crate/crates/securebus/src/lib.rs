//! Authenticated, replay-protected sensor-to-processor message bus.
//!
//! A sensor proves its identity with a signed Hello, the processor answers
//! with a KEM ciphertext, and both sides derive a session key. Sensor data
//! then travels in AEAD-sealed [`SecureFrame`]s with strictly increasing
//! sequence numbers. The primitives sit behind [`CryptoSuite`]:
//! [`TestSuite`] is a deterministic keyed-hash stand-in, and the `pq`
//! feature adds ML-KEM-768 / ML-DSA-65 / AES-256-GCM.

pub mod error;
pub mod frame;
#[cfg(feature = "pq")]
pub mod pq;
pub mod registry;
pub mod session;
pub mod suite;

pub use error::{BusError, Malformed, Result};
pub use frame::{parse_frame, read_frame, MsgType, SecureFrame};
pub use registry::{RegistryEntry, SensorCredentials, SensorRegistry};
pub use session::{
    accept_close, close_frame, handshake_finish, handshake_hello, handshake_respond, open_frame,
    rotate_keys, seal_frame, HandshakeState, Role, SensorSecrets, SessionState,
};
pub use suite::{suite_by_id, CryptoSuite, KeyPair, TestSuite};
#[cfg(feature = "pq")]
pub use pq::PqSuite;
