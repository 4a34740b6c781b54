//! End-to-end acceptance checks, one test per criterion. Each prints a single
//! `criterion NN: PASS|FAIL` line with the measured quantities.
//!
//! Oracles here are written independently of the library internals: dense
//! matrices for the circuit, a literal transcription of the encoding formula,
//! finite differences for gradients and hand-decoded wire headers.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use qnav_cli::config::ExperimentConfig;
use qnav_cli::bench;
use qnav_core::adversarial::{self, AttackConfig};
use qnav_core::environment::{self, Action, EnvConfig, WorldState};
use qnav_core::fusion::{self, FusedState};
use qnav_core::navq::{self, Policy, TrainConfig};
use qnav_core::training::{self, EvalAttack, RobustConfig};
use qnav_core::{AttentionWeights, CircuitParams, GateSpec, Modality, QuantumState, SensorFrame};
use qnav_securebus::frame::HEADER_LEN;
use qnav_securebus::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, pass: bool, detail: &str, elapsed: Duration, budget: Duration) {
    let ok = pass && elapsed <= budget;
    println!(
        "criterion {n:02}: {} | {detail} | {:.1} s (budget {} s)",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    assert!(pass, "criterion {n} failed: {detail}");
    assert!(elapsed <= budget, "criterion {n} over its runtime budget");
}

// ---------------------------------------------------------------- oracles

/// Dense real matrix of RY(θ) on `qubit` (qubit 0 is the least significant bit).
fn dense_ry(n: usize, qubit: usize, theta: f64) -> Vec<Vec<f64>> {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let ry = [[c, -s], [s, c]];
    let dim = 1 << n;
    let mask = 1 << qubit;
    (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    if i & !mask != j & !mask {
                        0.0
                    } else {
                        ry[(i >> qubit) & 1][(j >> qubit) & 1]
                    }
                })
                .collect()
        })
        .collect()
}

fn dense_cnot(n: usize, control: usize, target: usize) -> Vec<Vec<f64>> {
    let dim = 1 << n;
    (0..dim)
        .map(|i| {
            let src = if (i >> control) & 1 == 1 { i ^ (1 << target) } else { i };
            (0..dim).map(|j| if j == src { 1.0 } else { 0.0 }).collect()
        })
        .collect()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

fn matvec(m: &[Vec<f64>], v: &[Complex64]) -> Vec<Complex64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(&a, &x)| x * a).sum())
        .collect()
}

/// Unitary of the layered ansatz: per layer RY on every qubit, then CNOT(q, q+1)
/// for ascending q.
fn ansatz_unitary(n: usize, thetas: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = 1 << n;
    let mut u: Vec<Vec<f64>> = (0..dim)
        .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for layer in thetas {
        for (q, &t) in layer.iter().enumerate() {
            u = matmul(&dense_ry(n, q, t), &u);
        }
        for q in 0..n - 1 {
            u = matmul(&dense_cnot(n, q, q + 1), &u);
        }
    }
    u
}

fn z_expectation(amps: &[Complex64], qubit: usize) -> f64 {
    amps.iter()
        .enumerate()
        .map(|(i, a)| if (i >> qubit) & 1 == 0 { a.norm_sqr() } else { -a.norm_sqr() })
        .sum()
}

fn random_state<R: Rng>(rng: &mut R, n: usize) -> QuantumState {
    let mut v: Vec<Complex64> = (0..1 << n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    QuantumState::from_amplitudes(v).unwrap()
}

fn random_circuit<R: Rng>(rng: &mut R, depth: usize, n: usize) -> CircuitParams {
    CircuitParams::new(depth, n, (0..depth * n).map(|_| rng.gen_range(-PI..PI)).collect()).unwrap()
}

fn random_frames<R: Rng>(rng: &mut R) -> Vec<SensorFrame> {
    let dims = environment::sensor_dims();
    Modality::ALL
        .iter()
        .map(|&m| SensorFrame::new(m, (0..dims.get(m)).map(|_| rng.gen::<f64>()).collect(), 0).unwrap())
        .collect()
}

fn random_weights<R: Rng>(rng: &mut R) -> AttentionWeights {
    let dims = environment::sensor_dims();
    let w = Modality::ALL.map(|m| (0..dims.get(m)).map(|_| rng.gen_range(0.1..2.0)).collect());
    AttentionWeights::from_vecs(w, true).unwrap()
}

// --------------------------------------------------------------- criteria

#[test]
fn criterion_01_quantum_core_invariants() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut max_drift = 0.0f64;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=8);
        let mut s = random_state(&mut rng, n);
        for _ in 0..rng.gen_range(1..=40) {
            let gate = if n > 1 && rng.gen_bool(0.4) {
                let c = rng.gen_range(0..n);
                let mut tq = rng.gen_range(0..n - 1);
                if tq >= c {
                    tq += 1;
                }
                GateSpec::Cnot { control: c, target: tq }
            } else {
                GateSpec::Ry {
                    target: rng.gen_range(0..n),
                    angle: rng.gen_range(-4.0 * PI..4.0 * PI),
                }
            };
            s.apply_in_place(&gate).unwrap();
        }
        max_drift = max_drift.max((s.norm_sqr() - 1.0).abs());
    }

    let dims_ok = (1..=10).all(|n| {
        let s = QuantumState::prepare_basis(0, n).unwrap();
        s.dim() == 1 << n && s.amplitudes().len() == 1 << n && s.num_qubits() == n
    });

    let mut involution_ok = true;
    let mut additivity_err = 0.0f64;
    for _ in 0..500 {
        let n = rng.gen_range(2..=6);
        let s = random_state(&mut rng, n);
        let c = rng.gen_range(0..n);
        let tq = (c + rng.gen_range(1..n)) % n;
        let twice = s.clone().apply_cnot(c, tq).unwrap().apply_cnot(c, tq).unwrap();
        involution_ok &= twice.amplitudes() == s.amplitudes();

        let q = rng.gen_range(0..n);
        let (a, b) = (rng.gen_range(-PI..PI), rng.gen_range(-PI..PI));
        let split = s.clone().apply_ry(q, a).unwrap().apply_ry(q, b).unwrap();
        let joint = s.apply_ry(q, a + b).unwrap();
        for (x, y) in split.amplitudes().iter().zip(joint.amplitudes()) {
            additivity_err = additivity_err.max((x - y).norm());
        }
    }

    let pass = max_drift <= 1e-10 && dims_ok && involution_ok && additivity_err <= 1e-12;
    report(
        1,
        pass,
        &format!(
            "max norm drift {max_drift:.2e} over 1e4 sequences; dims 2^Q for Q=1..10: {dims_ok}; \
             CNOT involution exact: {involution_ok}; RY additivity err {additivity_err:.2e}"
        ),
        t.elapsed(),
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_02_encoding_fidelity() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut max_err = 0.0f64;
    let mut scale_exact = true;
    let mut layout_ok = true;
    for _ in 0..1000 {
        let frames = random_frames(&mut rng);
        let weights = random_weights(&mut rng);
        let fused = fusion::encode_frames(&frames, &weights, 5).unwrap();

        // Literal transcription: concatenate modalities in order, divide by √N.
        let products: Vec<f64> = Modality::ALL
            .iter()
            .flat_map(|&m| {
                let f = frames.iter().find(|f| f.modality() == m).unwrap();
                f.values().iter().zip(weights.get(m)).map(|(s, a)| a * s).collect::<Vec<_>>()
            })
            .collect();
        let n: f64 = products.iter().map(|p| p * p).sum();
        let amps = fused.state.amplitudes();
        for (k, amp) in amps.iter().enumerate() {
            let expected = products.get(k).map_or(0.0, |p| p / n.sqrt());
            max_err = max_err.max((amp.re - expected).abs()).max(amp.im.abs());
        }
        layout_ok &= fused.layout.len() == products.len();
        for e in &fused.layout {
            let idx = Modality::ALL[..e.modality.index()]
                .iter()
                .map(|&m| environment::sensor_dims().get(m))
                .sum::<usize>()
                + e.component;
            layout_ok &= e.basis_index == idx;
        }

        let c = [0.25, 0.5, 2.0, 8.0][rng.gen_range(0..4)];
        let mut scaled = weights.clone();
        for k in 0..scaled.len() {
            scaled.flat_set(k, weights.flat_get(k) * c);
        }
        let rescaled = fusion::encode_frames(&frames, &scaled, 5).unwrap();
        scale_exact &= rescaled.state.amplitudes() == fused.state.amplitudes();
    }

    let zeros: Vec<SensorFrame> = Modality::ALL
        .iter()
        .map(|&m| SensorFrame::new(m, vec![0.0; environment::sensor_dims().get(m)], 0).unwrap())
        .collect();
    let zero_err = matches!(
        fusion::encode_frames(&zeros, &AttentionWeights::uniform(&environment::sensor_dims()), 5),
        Err(qnav_core::Error::AllZeroInput)
    );

    let pass = max_err <= 1e-12 && layout_ok && scale_exact && zero_err;
    report(
        2,
        pass,
        &format!("max |amp - αs/√N| {max_err:.2e} over 1e3 inputs; concatenated layout: {layout_ok}; scale covariance exact: {scale_exact}; AllZeroInput: {zero_err}"),
        t.elapsed(),
        Duration::from_secs(10),
    );
}

#[test]
fn criterion_03_ansatz_oracle() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut max_err = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=4);
        let depth = rng.gen_range(1..=3);
        let circuit = random_circuit(&mut rng, depth, n);
        let input = random_state(&mut rng, n);
        let fused = FusedState {
            state: input.clone(),
            norm_factor: 1.0,
            layout: Vec::new(),
        };
        let out = fusion::apply_ansatz(&fused, &circuit).unwrap();
        let grid: Vec<Vec<f64>> = (0..depth).map(|l| (0..n).map(|q| circuit.get(l, q)).collect()).collect();
        let expected = matvec(&ansatz_unitary(n, &grid), input.amplitudes());
        for (a, b) in out.amplitudes().iter().zip(&expected) {
            max_err = max_err.max((a - b).norm());
        }
    }
    report(
        3,
        max_err <= 1e-10,
        &format!("max elementwise error vs dense product {max_err:.2e} over 100 circuits"),
        t.elapsed(),
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_04_gradient_correctness() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut max_cone = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=6);
        let depth = rng.gen_range(1..=3);
        let circuit = random_circuit(&mut rng, depth, n);
        let input = random_state(&mut rng, n);
        let jac = navq::readout_jacobian(&circuit, &input);

        let readout = |c: &CircuitParams| -> Vec<f64> {
            let out = fusion::run_ansatz(input.clone(), c).unwrap();
            (0..n).map(|q| z_expectation(out.amplitudes(), q)).collect()
        };
        for (k, row) in jac.iter().enumerate() {
            let mut plus = circuit.clone();
            plus.thetas_mut()[k] += h;
            let mut minus = circuit.clone();
            minus.thetas_mut()[k] -= h;
            let (zp, zm) = (readout(&plus), readout(&minus));
            for (q, &ps) in row.iter().enumerate() {
                let fd = (zp[q] - zm[q]) / (2.0 * h);
                let tol = (1e-6 * ps.abs()).max(1e-8);
                worst = worst.max((ps - fd).abs() / tol);
            }
        }
        // Last-layer angles on qubits above k never reach ⟨Z_k⟩.
        for (q, row) in jac[(depth - 1) * n..].iter().enumerate() {
            for g in &row[..q] {
                max_cone = max_cone.max(g.abs());
            }
        }
    }
    let pass = worst <= 1.0 && max_cone <= 1e-10;
    report(
        4,
        pass,
        &format!("worst |ps - fd| / tol {worst:.3} (tol = max(1e-6 rel, 1e-8)); max light-cone gradient {max_cone:.2e}"),
        t.elapsed(),
        Duration::from_secs(120),
    );
}

fn learning_env() -> EnvConfig {
    EnvConfig {
        length: 390,
        obstacle_density: 0.0,
        weather_range: [0.0, 0.3],
        ..EnvConfig::default()
    }
}

fn learning_train(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.1,
        episodes_per_update: 8,
        rng_seed: seed,
        ..TrainConfig::default()
    }
}

const TRAIN_EPISODES: usize = 500;

fn initial_policy(seed: u64) -> Policy {
    Policy::random(3, 5, &environment::sensor_dims(), 2.0, 1.0, seed).unwrap()
}

fn attack_eps() -> AttackConfig {
    AttackConfig::single_step(0.05)
}

fn trained(seed: u64, lambda: f64) -> Policy {
    let robust = RobustConfig {
        lambda,
        attack: attack_eps(),
    };
    training::train(initial_policy(seed), &learning_env(), &learning_train(seed), &robust, TRAIN_EPISODES, |_, _| {})
        .unwrap()
}

fn clean_policies() -> &'static Vec<Policy> {
    static CLEAN: OnceLock<Vec<Policy>> = OnceLock::new();
    CLEAN.get_or_init(|| (0..5).map(|s| trained(s, 0.0)).collect())
}

#[test]
fn criterion_05_learning_signal() {
    let t = Instant::now();
    let env = learning_env();
    let seeds: Vec<u64> = (0..100).map(|i| 10_000 + i).collect();
    let random = seeds
        .iter()
        .map(|&s| navq::run_random_episode(&env, s, s + 7).unwrap())
        .sum::<f64>()
        / seeds.len() as f64;
    let mut passing = 0;
    let mut detail = format!("random baseline {random:.2};");
    for (seed, policy) in clean_policies().iter().enumerate() {
        let greedy = navq::evaluate_greedy(policy, &env, &seeds).unwrap();
        let ok = random > 0.0 && greedy >= 2.0 * random;
        passing += ok as usize;
        detail.push_str(&format!(" seed {seed}: {greedy:.2} ({:.2}x){}", greedy / random, if ok { "" } else { " miss" }));
    }
    report(
        5,
        passing >= 4,
        &format!("{detail}; {passing}/5 seeds at >= 2x after {TRAIN_EPISODES} episodes"),
        t.elapsed(),
        Duration::from_secs(600),
    );
}

#[test]
fn criterion_06_objective_reductions() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let env = EnvConfig::default();

    let mut pgd_exact = true;
    for i in 0..20 {
        let policy = Policy::random(2, 5, &environment::sensor_dims(), 2.0, 1.0, i).unwrap();
        let (_, obs) = WorldState::reset(&env, 600 + i).unwrap();
        let frames = obs.frames;
        let action = Action::ALL[rng.gen_range(0..Action::COUNT)];
        let loss = |p: &Policy, f: &[SensorFrame]| adversarial::action_nll(p, f, action, 1.0);
        let eps = rng.gen_range(0.001..0.2);
        let got = adversarial::pgd_perturb(&policy, &frames, &AttackConfig::single_step(eps), &loss).unwrap();
        let grad = adversarial::input_gradient(&policy, &frames, &loss).unwrap();
        for ((f, g), out) in frames.iter().zip(&grad).zip(&got.frames) {
            for ((&s, &gj), &o) in f.values().iter().zip(g).zip(out.values()) {
                let literal = (s + eps * adversarial::sign(gj)).clamp(s - eps, s + eps).clamp(0.0, 1.0);
                pgd_exact &= literal.to_bits() == o.to_bits();
            }
        }
    }

    let mut lambda_zero_exact = true;
    let mut total_exact = true;
    for seed in 0..4 {
        let policy = initial_policy(seed);
        let train = TrainConfig {
            episodes_per_update: 3,
            rng_seed: seed,
            ..TrainConfig::default()
        };
        let batch = navq::collect_batch(&policy, &env, &train, 0).unwrap();
        let attack = AttackConfig {
            rng_seed: seed,
            ..attack_eps()
        };
        let plain = navq::reinforce_update(&policy, &batch, &train).unwrap();
        let (robust, rep) = adversarial::robust_training_step(&policy, &batch, 0.0, &attack, &train).unwrap();
        lambda_zero_exact &= robust.policy == plain.policy
            && robust.gradient == plain.gradient
            && robust.policy_loss.to_bits() == plain.policy_loss.to_bits()
            && rep.total.to_bits() == rep.clean_loss.to_bits();
        for _ in 0..3 {
            let lambda = rng.gen_range(0.0..3.0);
            let (_, rep) = adversarial::robust_training_step(&policy, &batch, lambda, &attack, &train).unwrap();
            total_exact &= rep.total.to_bits() == (rep.clean_loss + lambda * rep.adv_loss).to_bits();
        }
    }

    let pass = pgd_exact && lambda_zero_exact && total_exact;
    report(
        6,
        pass,
        &format!(
            "single-step PGD bitwise equal to literal formula: {pgd_exact}; λ=0 step bitwise equal to plain update: \
             {lambda_zero_exact}; total == clean + λ·adv exactly: {total_exact}"
        ),
        t.elapsed(),
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_07_robustness_ordering() {
    let t = Instant::now();
    let env = learning_env();
    let seeds: Vec<u64> = (0..100).map(|i| 20_000 + i).collect();
    let attack = EvalAttack::Pgd(attack_eps());
    let degradation = |p: &Policy| {
        let clean = training::mean_return_under_attack(p, &env, &seeds, &EvalAttack::None).unwrap();
        let attacked = training::mean_return_under_attack(p, &env, &seeds, &attack).unwrap();
        training::degradation_percent(clean, attacked)
    };
    let mut wins = 0;
    let mut detail = String::new();
    for (seed, clean_policy) in clean_policies().iter().enumerate() {
        let d_clean = degradation(clean_policy);
        let d_robust = degradation(&trained(seed as u64, 1.0));
        let ok = d_robust <= d_clean;
        wins += ok as usize;
        detail.push_str(&format!(" seed {seed}: robust {d_robust:.2}% vs clean {d_clean:.2}%{};", if ok { "" } else { " miss" }));
    }
    report(
        7,
        wins >= 3,
        &format!("degradation at ε=0.05:{detail} {wins}/5 seeds robust <= clean"),
        t.elapsed(),
        Duration::from_secs(1200),
    );
}

fn bus_suites() -> Vec<Box<dyn CryptoSuite>> {
    qnav_securebus::suite::available_suites()
        .into_iter()
        .map(|id| suite_by_id(id).unwrap())
        .collect()
}

fn connect(suite: &dyn CryptoSuite, sensor_id: u16, seed: u64) -> (SessionState, SessionState, SensorCredentials, SensorRegistry) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let creds = SensorCredentials::generate(suite, sensor_id, &mut rng);
    let mut registry = SensorRegistry::new();
    registry.insert(sensor_id, creds.registry_entry());
    let mut sensor = SessionState::sensor(sensor_id);
    let mut processor = SessionState::processor();
    let hello = handshake_hello(&mut sensor, suite, &creds.signing.secret, b"acceptance", &mut rng).unwrap();
    let resp = handshake_respond(&mut processor, suite, &hello, &registry, &mut rng).unwrap();
    handshake_finish(&mut sensor, suite, &creds.kem.secret, &resp).unwrap();
    (sensor, processor, creds, registry)
}

/// Header decoded by hand: magic "QA", version, type, suite, sensor id LE,
/// sequence LE, 12-byte nonce (sensor id LE, two zero bytes, sequence LE),
/// payload length LE.
fn decode_header(b: &[u8]) -> (u8, u8, u16, u64, [u8; 12], u32) {
    assert_eq!(&b[0..3], &[0x51, 0x41, 0x01]);
    let sensor = u16::from_le_bytes([b[5], b[6]]);
    let seq = u64::from_le_bytes(b[7..15].try_into().unwrap());
    let nonce: [u8; 12] = b[15..27].try_into().unwrap();
    (b[3], b[4], sensor, seq, nonce, u32::from_le_bytes(b[27..31].try_into().unwrap()))
}

#[test]
fn criterion_08_secure_bus_protocol() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut detail = Vec::new();
    let mut pass = true;

    for suite in bus_suites() {
        let suite = suite.as_ref();
        let (mut sensor, mut processor, creds, registry) = connect(suite, 7, 1);

        let mut lossless = true;
        for i in 0..1u32 << 10 {
            let msg: Vec<u8> = (0..rng.gen_range(0..96)).map(|_| rng.gen()).collect();
            let f = seal_frame(&mut sensor, suite, &msg).unwrap();
            lossless &= f.sequence == u64::from(i) + 1;
            lossless &= open_frame(&mut processor, suite, &parse_frame(&f.to_bytes()).unwrap()).unwrap() == msg;
        }

        let (mut tamper_total, mut tag_mismatch, mut header_rejected, mut header_total) = (0u64, 0u64, 0u64, 0u64);
        let mut body_all_tag = true;
        let mut replays_caught = true;
        let mut previous: Option<SecureFrame> = None;
        for _ in 0..1000 {
            let msg: Vec<u8> = (0..rng.gen_range(1..48)).map(|_| rng.gen()).collect();
            let f = seal_frame(&mut sensor, suite, &msg).unwrap();
            let wire = f.to_bytes();
            for bit in 0..wire.len() * 8 {
                let mut bad = wire.clone();
                bad[bit / 8] ^= 1 << (bit % 8);
                let mut p = processor.clone();
                let result = parse_frame(&bad).map_err(BusError::from).and_then(|g| open_frame(&mut p, suite, &g));
                tamper_total += 1;
                if bit / 8 < HEADER_LEN {
                    header_total += 1;
                    header_rejected += result.is_err() as u64;
                    tag_mismatch += matches!(result, Err(BusError::TagMismatch)) as u64;
                } else {
                    let is_tag = matches!(result, Err(BusError::TagMismatch));
                    body_all_tag &= is_tag;
                    tag_mismatch += is_tag as u64;
                }
            }
            assert_eq!(open_frame(&mut processor, suite, &f).unwrap(), msg);
            replays_caught &= matches!(open_frame(&mut processor, suite, &f), Err(BusError::ReplayDetected { .. }));
            if let Some(old) = previous.replace(f) {
                replays_caught &= matches!(open_frame(&mut processor, suite, &old), Err(BusError::ReplayDetected { .. }));
            }
        }

        // An attacker with its own signing key claims to be sensor 7.
        let mut forged_rejected = true;
        for i in 0..200 {
            let mut attacker = SessionState::sensor(7);
            let fake = suite.sig_keygen(&mut rng);
            let hello = handshake_hello(&mut attacker, suite, &fake.secret, b"", &mut rng).unwrap();
            let mut p = SessionState::processor();
            forged_rejected &= matches!(
                handshake_respond(&mut p, suite, &hello, &registry, &mut rng),
                Err(BusError::SignatureInvalid)
            );
            let mut honest = SessionState::sensor(7);
            let mut hello = handshake_hello(&mut honest, suite, &creds.signing.secret, b"", &mut rng).unwrap();
            let mut body = session::HelloBody::decode(&hello.payload).unwrap();
            let k = i % body.signature.len();
            body.signature[k] ^= 1 << (i % 8);
            hello.payload = body.encode();
            let mut p = SessionState::processor();
            forged_rejected &= matches!(
                handshake_respond(&mut p, suite, &hello, &registry, &mut rng),
                Err(BusError::SignatureInvalid)
            );
        }

        let ok = lossless && body_all_tag && header_rejected == header_total && replays_caught && forged_rejected;
        pass &= ok;
        detail.push(format!(
            "{}: 2^10 frames lossless {lossless}; {tamper_total} single-bit tampers over 1e3 frames, \
             {tag_mismatch} TagMismatch, ciphertext/tag flips all TagMismatch {body_all_tag}, \
             header flips rejected {header_rejected}/{header_total}; replays caught {replays_caught}; \
             forged hellos SignatureInvalid {forged_rejected}",
            suite.name()
        ));
    }

    // Golden session bytes: regenerate the pinned transcript and decode each header by hand.
    let golden_path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../securebus/tests/golden/test_suite_session.hex");
    let golden = std::fs::read_to_string(golden_path).expect("golden vectors present");
    let suite = TestSuite;
    let mut grng = ChaCha8Rng::seed_from_u64(2024);
    let creds = SensorCredentials::generate(&suite, 0x0102, &mut grng);
    let mut registry = SensorRegistry::new();
    registry.insert(0x0102, creds.registry_entry());
    let (mut s, mut p) = (SessionState::sensor(0x0102), SessionState::processor());
    let hello = handshake_hello(&mut s, &suite, &creds.signing.secret, b"lidar-front", &mut grng).unwrap();
    let resp = handshake_respond(&mut p, &suite, &hello, &registry, &mut grng).unwrap();
    handshake_finish(&mut s, &suite, &creds.kem.secret, &resp).unwrap();
    let mut regenerated = vec![hello.to_bytes(), resp.to_bytes()];
    for msg in [&b"frame-0"[..], b"", b"frame-2 with a longer body spanning two keystream blocks"] {
        regenerated.push(seal_frame(&mut s, &suite, msg).unwrap().to_bytes());
    }
    let pinned: Vec<Vec<u8>> = golden
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| hex::decode(l.split_once(' ').unwrap().1).unwrap())
        .collect();
    let mut golden_ok = pinned == regenerated;
    for (i, bytes) in pinned.iter().enumerate() {
        let (ty, suite_id, sensor, seq, nonce, len) = decode_header(bytes);
        let expected_seq = i.saturating_sub(1) as u64;
        let mut expected_nonce = [0u8; 12];
        expected_nonce[..2].copy_from_slice(&0x0102u16.to_le_bytes());
        expected_nonce[4..].copy_from_slice(&expected_seq.to_le_bytes());
        let tag_len = if ty == 2 { 16 } else { 0 };
        golden_ok &= ty == [0, 1, 2, 2, 2][i]
            && suite_id == 1
            && sensor == 0x0102
            && seq == expected_seq
            && nonce == expected_nonce
            && bytes.len() == HEADER_LEN + len as usize + tag_len;
    }
    pass &= golden_ok;
    detail.push(format!("golden vectors match: {golden_ok}"));

    let started = Instant::now();
    let mut fuzz_rng = ChaCha8Rng::seed_from_u64(8080);
    let template = pinned[2].clone();
    let mut accepted = 0;
    for i in 0..100_000 {
        let input: Vec<u8> = if i % 2 == 0 {
            (0..fuzz_rng.gen_range(0..512)).map(|_| fuzz_rng.gen()).collect()
        } else {
            let mut m = template.clone();
            for _ in 0..fuzz_rng.gen_range(1..6) {
                let k = fuzz_rng.gen_range(0..m.len());
                m[k] = fuzz_rng.gen();
            }
            m.truncate(fuzz_rng.gen_range(0..=m.len() + 4).min(m.len()));
            m
        };
        let r = std::panic::catch_unwind(|| parse_frame(&input).is_ok());
        match r {
            Ok(ok) => accepted += ok as usize,
            Err(_) => {
                pass = false;
                detail.push(format!("parse_frame panicked on input {}", hex::encode(&input)));
                break;
            }
        }
    }
    detail.push(format!("1e5 fuzz inputs without a crash ({accepted} parsed) in {:.1} s", started.elapsed().as_secs_f64()));

    report(8, pass, &detail.join("; "), t.elapsed(), Duration::from_secs(120));
}

#[test]
fn criterion_09_latency_bound() {
    let t = Instant::now();
    let mut detail = Vec::new();
    let mut pass = true;
    for suite_id in qnav_securebus::suite::available_suites() {
        let mut config = ExperimentConfig::default();
        config.securebus.suite_id = suite_id;
        assert_eq!((config.fusion.num_qubits, config.fusion.depth), (5, 3));
        let policy = config.initial_policy().unwrap();
        let (r, _) = bench::run_bench(&config, &policy).unwrap();
        pass &= r.pass && r.total.p99_ms < 50.0 && r.ticks >= 1000;
        detail.push(format!(
            "{}: p50 {:.3} ms, p99 {:.3} ms over {} ticks (Q=5, L=3)",
            r.suite, r.total.p50_ms, r.total.p99_ms, r.ticks
        ));
    }
    report(9, pass, &format!("{} ; bound 50 ms", detail.join("; ")), t.elapsed(), Duration::from_secs(60));
}

#[test]
fn criterion_10_determinism() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, ExperimentConfig::default().to_json()).unwrap();
    let run = |out: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_qnav"))
            .args(["train", "--seed", "42", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(out))
            .env("QNAV_LOG", "warn")
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(dir.path().join(out).join("metrics.csv")).unwrap()
    };
    let (a, b) = (run("first"), run("second"));
    let rows = String::from_utf8_lossy(&a).lines().count() - 1;
    report(
        10,
        a == b && rows > 0,
        &format!("two train runs with seed 42: {rows} metric rows each, byte-identical {}", a == b),
        t.elapsed(),
        Duration::from_secs(600),
    );
}
