mod common;

use common::*;
use num_complex::Complex64;
use qnav_core::fusion::{apply_ansatz, run_ansatz, CircuitParams, FusedState};
use qnav_core::statevector::QuantumState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense unitary of the layered circuit: per layer an RY on every qubit,
/// then the CNOT ladder (0,1), (1,2), …
fn ansatz_unitary(params: &CircuitParams) -> Matrix {
    let q = params.num_qubits();
    let mut u = identity(1 << q);
    for layer in 0..params.depth() {
        for k in 0..q {
            u = matmul(&embed(&ry_2x2(params.get(layer, k)), k, q), &u);
        }
        for k in 0..q.saturating_sub(1) {
            u = matmul(&cnot_matrix(k, k + 1, q), &u);
        }
    }
    u
}

#[test]
fn matches_brute_force_matrix_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let q = rng.gen_range(1..=4);
        let depth = rng.gen_range(1..=3);
        let thetas = (0..q * depth).map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)).collect();
        let params = CircuitParams::new(depth, q, thetas).unwrap();

        let raw: Vec<f64> = (0..1usize << q).map(|_| rng.gen::<f64>()).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        let input: Vec<Complex64> = raw.iter().map(|x| c(x / norm)).collect();
        let state = QuantumState::from_amplitudes(input.clone()).unwrap();
        let fused = FusedState { state, norm_factor: norm * norm, layout: Vec::new() };

        let got = apply_ansatz(&fused, &params).unwrap();
        let expected = matvec(&ansatz_unitary(&params), &input);
        for (a, b) in got.amplitudes().iter().zip(&expected) {
            assert!((a - b).norm() <= 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn zero_angles_leave_basis_zero_fixed() {
    for q in 1..=6 {
        let params = CircuitParams::zeros(3, q).unwrap();
        let out = run_ansatz(QuantumState::prepare_basis(0, q).unwrap(), &params).unwrap();
        assert_eq!(out, QuantumState::prepare_basis(0, q).unwrap());
    }
}

#[test]
fn qubit_mismatch_is_an_error() {
    let params = CircuitParams::zeros(1, 3).unwrap();
    assert!(run_ansatz(QuantumState::prepare_basis(0, 4).unwrap(), &params).is_err());
}
