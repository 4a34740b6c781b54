//! Amplitude encoding of multi-modal sensor frames and the layered RY/CNOT ansatz.
//!
//! Layout: modalities are concatenated in [`Modality::ALL`] order, components in
//! natural order, onto consecutive basis indices starting at 0. Unused tail
//! amplitudes are zero.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statevector::{GateSpec, QuantumState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Lidar,
    Radar,
    Camera,
    Gps,
    Weather,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::Lidar,
        Modality::Radar,
        Modality::Camera,
        Modality::Gps,
        Modality::Weather,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Lidar => "lidar",
            Modality::Radar => "radar",
            Modality::Camera => "camera",
            Modality::Gps => "gps",
            Modality::Weather => "weather",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Number of components each modality contributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorDims {
    pub lidar: usize,
    pub radar: usize,
    pub camera: usize,
    pub gps: usize,
    pub weather: usize,
}

impl Default for SensorDims {
    fn default() -> Self {
        Self {
            lidar: 8,
            radar: 4,
            camera: 8,
            gps: 3,
            weather: 2,
        }
    }
}

impl SensorDims {
    pub fn get(&self, m: Modality) -> usize {
        match m {
            Modality::Lidar => self.lidar,
            Modality::Radar => self.radar,
            Modality::Camera => self.camera,
            Modality::Gps => self.gps,
            Modality::Weather => self.weather,
        }
    }

    pub fn total(&self) -> usize {
        Modality::ALL.iter().map(|&m| self.get(m)).sum()
    }
}

/// One modality's normalized reading, every component in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    modality: Modality,
    values: Vec<f64>,
    timestamp_us: u64,
}

impl SensorFrame {
    pub fn new(modality: Modality, values: Vec<f64>, timestamp_us: u64) -> Result<Self> {
        if let Some((j, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::InvalidFrame {
                modality,
                reason: format!("component {j} = {v} outside [0, 1]"),
            });
        }
        Ok(Self {
            modality,
            values,
            timestamp_us,
        })
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamp_us(&self) -> u64 {
        self.timestamp_us
    }

    /// Copy with replacement values, clamped into `[0, 1]`.
    pub fn with_values_clamped(&self, values: Vec<f64>) -> Self {
        Self {
            modality: self.modality,
            values: values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            timestamp_us: self.timestamp_us,
        }
    }
}

/// Per-component attention weights α_{i,j}.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    weights: [Vec<f64>; 5],
    pub trainable: bool,
}

impl AttentionWeights {
    /// All weights 1.0, trainable.
    pub fn uniform(dims: &SensorDims) -> Self {
        Self {
            weights: Modality::ALL.map(|m| vec![1.0; dims.get(m)]),
            trainable: true,
        }
    }

    pub fn from_vecs(weights: [Vec<f64>; 5], trainable: bool) -> Result<Self> {
        for m in Modality::ALL {
            let w = &weights[m.index()];
            if w.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParams(format!("{m} attention weight not finite")));
            }
            if !w.is_empty() && w.iter().all(|&x| x == 0.0) {
                return Err(Error::InvalidParams(format!("{m} attention weights all zero")));
            }
        }
        Ok(Self { weights, trainable })
    }

    pub fn get(&self, m: Modality) -> &[f64] {
        &self.weights[m.index()]
    }

    pub fn get_mut(&mut self, m: Modality) -> &mut [f64] {
        &mut self.weights[m.index()]
    }

    pub fn dims(&self) -> SensorDims {
        SensorDims {
            lidar: self.weights[0].len(),
            radar: self.weights[1].len(),
            camera: self.weights[2].len(),
            gps: self.weights[3].len(),
            weather: self.weights[4].len(),
        }
    }

    /// Number of scalar weights.
    pub fn len(&self) -> usize {
        self.weights.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Weights flattened in layout order.
    pub fn flat(&self) -> Vec<f64> {
        self.weights.iter().flatten().copied().collect()
    }

    pub fn flat_get(&self, k: usize) -> f64 {
        let (m, j) = self.locate(k);
        self.weights[m][j]
    }

    pub fn flat_set(&mut self, k: usize, v: f64) {
        let (m, j) = self.locate(k);
        self.weights[m][j] = v;
    }

    fn locate(&self, mut k: usize) -> (usize, usize) {
        for (m, w) in self.weights.iter().enumerate() {
            if k < w.len() {
                return (m, k);
            }
            k -= w.len();
        }
        panic!("attention index out of range");
    }
}

/// Trainable rotation angles θ_{l,q}, stored row-major `(depth, num_qubits)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitParams {
    depth: usize,
    num_qubits: usize,
    thetas: Vec<f64>,
}

impl CircuitParams {
    pub fn zeros(depth: usize, num_qubits: usize) -> Result<Self> {
        Self::new(depth, num_qubits, vec![0.0; depth * num_qubits])
    }

    pub fn new(depth: usize, num_qubits: usize, thetas: Vec<f64>) -> Result<Self> {
        if depth == 0 || num_qubits == 0 {
            return Err(Error::InvalidParams(format!(
                "depth {depth} and qubit count {num_qubits} must be positive"
            )));
        }
        if thetas.len() != depth * num_qubits {
            return Err(Error::InvalidParams(format!(
                "expected {} thetas for shape ({depth}, {num_qubits}), got {}",
                depth * num_qubits,
                thetas.len()
            )));
        }
        if thetas.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParams("theta not finite".into()));
        }
        Ok(Self {
            depth,
            num_qubits,
            thetas,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn thetas_mut(&mut self) -> &mut [f64] {
        &mut self.thetas
    }

    pub fn get(&self, layer: usize, qubit: usize) -> f64 {
        self.thetas[layer * self.num_qubits + qubit]
    }

    pub fn set(&mut self, layer: usize, qubit: usize, theta: f64) {
        self.thetas[layer * self.num_qubits + qubit] = theta;
    }

    /// Gate list: per layer an RY sublayer on every qubit, then the ascending
    /// CNOT ladder (0,1), (1,2), …, (Q−2, Q−1).
    pub fn gates(&self) -> Vec<GateSpec> {
        let q = self.num_qubits;
        let mut gates = Vec::with_capacity(self.depth * (2 * q - 1));
        for l in 0..self.depth {
            for t in 0..q {
                gates.push(GateSpec::Ry {
                    target: t,
                    angle: self.get(l, t),
                });
            }
            for c in 0..q.saturating_sub(1) {
                gates.push(GateSpec::Cnot {
                    control: c,
                    target: c + 1,
                });
            }
        }
        gates
    }
}

/// Position of one sensor component in the encoded register.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutEntry {
    pub modality: Modality,
    pub component: usize,
    pub basis_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedState {
    pub state: QuantumState,
    /// N = Σ (α_{i,j}·s_{i,j})².
    pub norm_factor: f64,
    pub layout: Vec<LayoutEntry>,
}

fn ordered_frames(frames: &[SensorFrame]) -> Result<Vec<&SensorFrame>> {
    let mut ordered: Vec<&SensorFrame> = frames.iter().collect();
    ordered.sort_by_key(|f| f.modality);
    for pair in ordered.windows(2) {
        if pair[0].modality == pair[1].modality {
            return Err(Error::InvalidFrame {
                modality: pair[0].modality,
                reason: "duplicate modality".into(),
            });
        }
    }
    Ok(ordered)
}

/// Weighted, normalized real amplitudes of length `2^num_qubits` and N.
pub(crate) fn encode_amplitudes(
    frames: &[SensorFrame],
    weights: &AttentionWeights,
    num_qubits: usize,
) -> Result<(Vec<f64>, f64)> {
    let ordered = ordered_frames(frames)?;
    let dim = 1usize << num_qubits;
    let needed: usize = ordered.iter().map(|f| f.values.len()).sum();
    if needed > dim {
        return Err(Error::CapacityExceeded {
            needed,
            capacity: dim,
        });
    }
    let mut amps = vec![0.0; dim];
    let mut k = 0;
    for f in &ordered {
        let alpha = weights.get(f.modality);
        if alpha.len() != f.values.len() {
            return Err(Error::InvalidFrame {
                modality: f.modality,
                reason: format!(
                    "{} components but {} attention weights",
                    f.values.len(),
                    alpha.len()
                ),
            });
        }
        for (a, s) in alpha.iter().zip(&f.values) {
            amps[k] = a * s;
            k += 1;
        }
    }
    let norm_factor: f64 = amps[..k].iter().map(|p| p * p).sum();
    if norm_factor <= 0.0 || !norm_factor.is_finite() {
        return Err(Error::AllZeroInput);
    }
    let scale = norm_factor.sqrt();
    for a in &mut amps[..k] {
        *a /= scale;
    }
    Ok((amps, norm_factor))
}

/// Encode the frames into `|ψ⟩ = N^{-1/2} Σ α_{i,j} s_{i,j} |i,j⟩`.
pub fn encode_frames(
    frames: &[SensorFrame],
    weights: &AttentionWeights,
    num_qubits: usize,
) -> Result<FusedState> {
    if num_qubits == 0 || num_qubits > crate::statevector::MAX_QUBITS {
        return Err(Error::InvalidRegister(num_qubits));
    }
    let (amps, norm_factor) = encode_amplitudes(frames, weights, num_qubits)?;
    let mut layout = Vec::new();
    for f in ordered_frames(frames)? {
        for component in 0..f.values.len() {
            layout.push(LayoutEntry {
                modality: f.modality,
                component,
                basis_index: layout.len(),
            });
        }
    }
    let state =
        QuantumState::from_amplitudes(amps.into_iter().map(|a| Complex64::new(a, 0.0)).collect())?;
    Ok(FusedState {
        state,
        norm_factor,
        layout,
    })
}

/// Run the layered ansatz on the fused state.
pub fn apply_ansatz(fused: &FusedState, params: &CircuitParams) -> Result<QuantumState> {
    run_ansatz(fused.state.clone(), params)
}

pub fn run_ansatz(mut state: QuantumState, params: &CircuitParams) -> Result<QuantumState> {
    if params.num_qubits() != state.num_qubits() {
        return Err(Error::QubitMismatch {
            circuit: params.num_qubits(),
            state: state.num_qubits(),
        });
    }
    for gate in params.gates() {
        state.apply_in_place(&gate)?;
    }
    Ok(state)
}

/// ⟨Z_q⟩ for every qubit.
pub fn extract_features(state: &QuantumState) -> Vec<f64> {
    (0..state.num_qubits())
        .map(|q| state.expectation_z(q).expect("qubit in range"))
        .collect()
}
