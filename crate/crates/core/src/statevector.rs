//! Dense statevector simulator restricted to the gates the navigation circuit needs.
//!
//! Qubit 0 is the least-significant bit of a basis index: basis state `|b⟩`
//! has qubit `q` set iff `(b >> q) & 1 == 1`.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest register the dense simulator accepts.
pub const MAX_QUBITS: usize = 24;

/// Tolerance for the unit-norm invariant.
pub const NORM_TOLERANCE: f64 = 1e-10;

/// Unit-norm vector of `2^Q` complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: Vec<Complex64>,
    num_qubits: usize,
}

/// One gate of a circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateSpec {
    Ry { target: usize, angle: f64 },
    Cnot { control: usize, target: usize },
}

impl GateSpec {
    /// Check qubit indices against a register of `num_qubits`.
    pub fn validate(&self, num_qubits: usize) -> Result<()> {
        match *self {
            GateSpec::Ry { target, .. } => check_qubit(target, num_qubits),
            GateSpec::Cnot { control, target } => {
                check_qubit(control, num_qubits)?;
                check_qubit(target, num_qubits)?;
                if control == target {
                    return Err(Error::InvalidGate(format!(
                        "CNOT control and target are both qubit {control}"
                    )));
                }
                Ok(())
            }
        }
    }
}

fn check_qubit(qubit: usize, num_qubits: usize) -> Result<()> {
    if qubit >= num_qubits {
        Err(Error::QubitOutOfRange { qubit, num_qubits })
    } else {
        Ok(())
    }
}

fn check_register(num_qubits: usize) -> Result<()> {
    if num_qubits == 0 || num_qubits > MAX_QUBITS {
        Err(Error::InvalidRegister(num_qubits))
    } else {
        Ok(())
    }
}

impl QuantumState {
    /// Computational basis state `|index⟩` on `num_qubits` qubits.
    pub fn prepare_basis(index: usize, num_qubits: usize) -> Result<Self> {
        check_register(num_qubits)?;
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(Error::BasisOutOfRange { index, dim });
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(Self {
            amplitudes,
            num_qubits,
        })
    }

    /// Build a state from explicit amplitudes. The vector must have power-of-two
    /// length and unit norm within [`NORM_TOLERANCE`].
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let dim = amplitudes.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::InvalidDimension(dim));
        }
        let num_qubits = dim.trailing_zeros() as usize;
        check_register(num_qubits)?;
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NotNormalized(f64::NAN));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self {
            amplitudes,
            num_qubits,
        })
    }

    /// Real-amplitude convenience constructor.
    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::from_amplitudes(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    /// Σ|a_b|².
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Born-rule probabilities `|a_b|²`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Rotate `qubit` by `RY(angle) = [[cos θ/2, −sin θ/2], [sin θ/2, cos θ/2]]`.
    pub fn apply_ry(mut self, qubit: usize, angle: f64) -> Result<Self> {
        self.ry_in_place(qubit, angle)?;
        Ok(self)
    }

    /// Flip `target` on every basis term whose `control` bit is set.
    pub fn apply_cnot(mut self, control: usize, target: usize) -> Result<Self> {
        self.cnot_in_place(control, target)?;
        Ok(self)
    }

    pub fn apply(mut self, gate: &GateSpec) -> Result<Self> {
        self.apply_in_place(gate)?;
        Ok(self)
    }

    pub fn apply_in_place(&mut self, gate: &GateSpec) -> Result<()> {
        match *gate {
            GateSpec::Ry { target, angle } => self.ry_in_place(target, angle),
            GateSpec::Cnot { control, target } => self.cnot_in_place(control, target),
        }
    }

    pub fn ry_in_place(&mut self, qubit: usize, angle: f64) -> Result<()> {
        check_qubit(qubit, self.num_qubits)?;
        let (s, c) = (angle / 2.0).sin_cos();
        let stride = 1usize << qubit;
        // Walk pairs (b, b | stride) with the target bit clear in b.
        for block in (0..self.amplitudes.len()).step_by(stride << 1) {
            for lo in block..block + stride {
                let hi = lo | stride;
                let a0 = self.amplitudes[lo];
                let a1 = self.amplitudes[hi];
                self.amplitudes[lo] = a0 * c - a1 * s;
                self.amplitudes[hi] = a0 * s + a1 * c;
            }
        }
        Ok(())
    }

    pub fn cnot_in_place(&mut self, control: usize, target: usize) -> Result<()> {
        GateSpec::Cnot { control, target }.validate(self.num_qubits)?;
        let cmask = 1usize << control;
        let tmask = 1usize << target;
        for b in 0..self.amplitudes.len() {
            if b & cmask != 0 && b & tmask == 0 {
                self.amplitudes.swap(b, b | tmask);
            }
        }
        Ok(())
    }

    /// ⟨Z_qubit⟩ = Σ_b ±|a_b|², positive where the qubit's bit is 0.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        check_qubit(qubit, self.num_qubits)?;
        let mask = 1usize << qubit;
        let z = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(b, a)| {
                if b & mask == 0 {
                    a.norm_sqr()
                } else {
                    -a.norm_sqr()
                }
            })
            .sum::<f64>();
        Ok(z.clamp(-1.0, 1.0))
    }

    /// Draw one basis index by the Born rule, deterministic for a fixed seed.
    pub fn sample_basis(&self, rng_seed: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        self.sample_with(&mut rng)
    }

    /// Born-rule draw from a caller-owned RNG stream.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = self.norm_sqr();
        let u: f64 = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut last_nonzero = 0;
        for (b, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            if p > 0.0 {
                last_nonzero = b;
                acc += p;
                if u < acc {
                    return b;
                }
            }
        }
        // Rounding can leave u just above the accumulated mass.
        last_nonzero
    }
}
