#![allow(dead_code)]

use num_complex::Complex64;
use qnav_core::fusion::{Modality, SensorDims, SensorFrame};
use rand::Rng;

pub type Matrix = Vec<Vec<Complex64>>;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> Matrix {
    (0..n)
        .map(|i| (0..n).map(|j| c(if i == j { 1.0 } else { 0.0 })).collect())
        .collect()
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| (0..k).map(|t| a[i][t] * b[t][j]).sum())
                .collect()
        })
        .collect()
}

pub fn matvec(a: &Matrix, v: &[Complex64]) -> Vec<Complex64> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (n, m) = (a.len(), b.len());
    let mut out = vec![vec![c(0.0); n * m]; n * m];
    for i in 0..n {
        for j in 0..n {
            for k in 0..m {
                for l in 0..m {
                    out[i * m + k][j * m + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn ry_2x2(theta: f64) -> Matrix {
    let (s, co) = (theta / 2.0).sin_cos();
    vec![vec![c(co), c(-s)], vec![c(s), c(co)]]
}

/// Single-qubit gate on `target` of a `q`-qubit register, qubit 0 least
/// significant: `I ⊗ … ⊗ U ⊗ … ⊗ I` with the highest qubit leftmost.
pub fn embed(u: &Matrix, target: usize, q: usize) -> Matrix {
    let mut out = identity(1);
    for k in (0..q).rev() {
        out = kron(&out, &if k == target { u.clone() } else { identity(2) });
    }
    out
}

/// `|0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ X` expanded over the register.
pub fn cnot_matrix(control: usize, target: usize, q: usize) -> Matrix {
    let p0 = vec![vec![c(1.0), c(0.0)], vec![c(0.0), c(0.0)]];
    let p1 = vec![vec![c(0.0), c(0.0)], vec![c(0.0), c(1.0)]];
    let x = vec![vec![c(0.0), c(1.0)], vec![c(1.0), c(0.0)]];
    let term = |ctrl: &Matrix, tgt: &Matrix| {
        let mut out = identity(1);
        for k in (0..q).rev() {
            let f = if k == control {
                ctrl.clone()
            } else if k == target {
                tgt.clone()
            } else {
                identity(2)
            };
            out = kron(&out, &f);
        }
        out
    };
    let a = term(&p0, &identity(2));
    let b = term(&p1, &x);
    a.iter()
        .zip(&b)
        .map(|(r, s)| r.iter().zip(s).map(|(u, v)| u + v).collect())
        .collect()
}

/// Diagonal Z on one qubit.
pub fn z_expectation(state: &[Complex64], qubit: usize, q: usize) -> f64 {
    let z = vec![vec![c(1.0), c(0.0)], vec![c(0.0), c(-1.0)]];
    let zs = matvec(&embed(&z, qubit, q), state);
    state.iter().zip(&zs).map(|(a, b)| (a.conj() * b).re).sum()
}

pub fn random_frames<R: Rng>(rng: &mut R, dims: &SensorDims) -> Vec<SensorFrame> {
    Modality::ALL
        .iter()
        .map(|&m| {
            let values = (0..dims.get(m)).map(|_| rng.gen::<f64>()).collect();
            SensorFrame::new(m, values, 0).unwrap()
        })
        .collect()
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (tol {tol})");
}
