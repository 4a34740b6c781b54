//! Quantum-enhanced navigation core: a dense statevector simulator, amplitude
//! encoded sensor fusion, a lane-grid driving environment, a quantum
//! policy-gradient agent and adversarial robust training.

pub mod adversarial;
pub mod checkpoint;
pub mod environment;
pub mod error;
pub mod fusion;
pub mod navq;
pub mod statevector;
pub mod training;

pub use error::{Error, Result};
pub use fusion::{AttentionWeights, CircuitParams, FusedState, Modality, SensorDims, SensorFrame};
pub use statevector::{GateSpec, QuantumState};
