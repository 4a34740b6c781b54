//! Quantum policy-gradient navigation agent.
//!
//! The policy encodes the sensor frames, runs the ansatz, reads ⟨Z_q⟩ on the
//! first five qubits and takes `softmax(β·z)` over the five actions. Circuit
//! angles are differentiated with the parameter-shift rule; attention weights
//! with central finite differences.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{Action, EnvConfig, WorldState};
use crate::error::{Error, Result};
use crate::fusion::{self, AttentionWeights, CircuitParams, SensorDims, SensorFrame};
use crate::statevector::QuantumState;

pub const ACTION_COUNT: usize = Action::COUNT;
pub const MAX_EPISODE_STEPS: usize = 200;
/// Step for the attention-weight finite differences.
pub const ATTENTION_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub circuit: CircuitParams,
    pub attention: AttentionWeights,
    beta: f64,
}

impl Policy {
    pub fn new(circuit: CircuitParams, attention: AttentionWeights, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParams(format!("softmax temperature {beta} must be positive")));
        }
        if circuit.num_qubits() < ACTION_COUNT {
            return Err(Error::InvalidParams(format!(
                "{} qubits cannot read out {ACTION_COUNT} actions",
                circuit.num_qubits()
            )));
        }
        let needed = attention.dims().total();
        let capacity = 1usize << circuit.num_qubits();
        if needed > capacity {
            return Err(Error::CapacityExceeded { needed, capacity });
        }
        Ok(Self {
            circuit,
            attention,
            beta,
        })
    }

    /// Angles drawn uniformly from `[-init_scale, init_scale]`, unit attention.
    pub fn random(
        depth: usize,
        num_qubits: usize,
        dims: &SensorDims,
        beta: f64,
        init_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let thetas = (0..depth * num_qubits)
            .map(|_| init_scale * (2.0 * rng.gen::<f64>() - 1.0))
            .collect();
        Self::new(
            CircuitParams::new(depth, num_qubits, thetas)?,
            AttentionWeights::uniform(dims),
            beta,
        )
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn num_params(&self) -> usize {
        self.circuit.thetas().len() + self.attention.len()
    }

    /// ⟨Z_q⟩ for every qubit of the circuit output.
    pub fn readout(&self, frames: &[SensorFrame]) -> Result<Vec<f64>> {
        let encoded = self.encode(frames)?;
        Ok(run_circuit(&encoded, &self.circuit))
    }

    fn encode(&self, frames: &[SensorFrame]) -> Result<QuantumState> {
        Ok(fusion::encode_frames(frames, &self.attention, self.circuit.num_qubits())?.state)
    }

    pub fn action_distribution(&self, frames: &[SensorFrame]) -> Result<[f64; ACTION_COUNT]> {
        Ok(softmax(self.beta, &self.readout(frames)?))
    }

    pub fn log_prob(&self, frames: &[SensorFrame], action: Action) -> Result<f64> {
        Ok(log_softmax(self.beta, &self.readout(frames)?)[action.index()])
    }

    pub fn greedy_action(&self, frames: &[SensorFrame]) -> Result<Action> {
        let z = self.readout(frames)?;
        Ok(Action::from_index(argmax(&z[..ACTION_COUNT])).expect("index below action count"))
    }
}

/// Run the ansatz on an encoded state and read every ⟨Z_q⟩.
fn run_circuit(encoded: &QuantumState, circuit: &CircuitParams) -> Vec<f64> {
    let out = fusion::run_ansatz(encoded.clone(), circuit).expect("qubit counts checked");
    fusion::extract_features(&out)
}

pub fn softmax(beta: f64, z: &[f64]) -> [f64; ACTION_COUNT] {
    let logp = log_softmax(beta, z);
    logp.map(f64::exp)
}

pub fn log_softmax(beta: f64, z: &[f64]) -> [f64; ACTION_COUNT] {
    let mut logits = [0.0; ACTION_COUNT];
    for (l, &zq) in logits.iter_mut().zip(z) {
        *l = beta * zq;
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.map(|l| l - lse)
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `∂⟨Z_qubit⟩/∂θ_{l,q}` for every angle, row-major like the angle grid, via
/// `[z(θ + π/2) − z(θ − π/2)] / 2`.
pub fn parameter_shift_gradient(
    policy: &Policy,
    frames: &[SensorFrame],
    qubit: usize,
) -> Result<Vec<f64>> {
    if qubit >= policy.circuit.num_qubits() {
        return Err(Error::QubitOutOfRange {
            qubit,
            num_qubits: policy.circuit.num_qubits(),
        });
    }
    let jac = readout_jacobian(&policy.circuit, &policy.encode(frames)?);
    Ok(jac.into_iter().map(|row| row[qubit]).collect())
}

/// Parameter-shift Jacobian: entry `[k][q]` is `∂⟨Z_q⟩/∂θ_k`.
pub fn readout_jacobian(circuit: &CircuitParams, encoded: &QuantumState) -> Vec<Vec<f64>> {
    let mut shifted = circuit.clone();
    (0..circuit.thetas().len())
        .map(|k| {
            let theta = circuit.thetas()[k];
            shifted.thetas_mut()[k] = theta + FRAC_PI_2;
            let plus = run_circuit(encoded, &shifted);
            shifted.thetas_mut()[k] = theta - FRAC_PI_2;
            let minus = run_circuit(encoded, &shifted);
            shifted.thetas_mut()[k] = theta;
            plus.iter().zip(&minus).map(|(p, m)| (p - m) / 2.0).collect()
        })
        .collect()
}

/// Gradient with respect to every trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradient {
    pub thetas: Vec<f64>,
    /// Flattened in layout order; empty when attention is frozen.
    pub attention: Vec<f64>,
}

impl PolicyGradient {
    fn zeros(policy: &Policy) -> Self {
        Self {
            thetas: vec![0.0; policy.circuit.thetas().len()],
            attention: if policy.attention.trainable {
                vec![0.0; policy.attention.len()]
            } else {
                Vec::new()
            },
        }
    }

    pub fn is_finite(&self) -> bool {
        self.thetas.iter().chain(&self.attention).all(|g| g.is_finite())
    }

    fn add_scaled(&mut self, other: &PolicyGradient, scale: f64) {
        for (a, b) in self.thetas.iter_mut().zip(&other.thetas) {
            *a += scale * b;
        }
        for (a, b) in self.attention.iter_mut().zip(&other.attention) {
            *a += scale * b;
        }
    }

    /// `self + scale·other`, elementwise.
    pub fn combined(&self, other: &PolicyGradient, scale: f64) -> PolicyGradient {
        let mut out = self.clone();
        out.add_scaled(other, scale);
        out
    }
}

/// `log π(action | frames)` and its gradient.
pub fn log_prob_gradient(
    policy: &Policy,
    frames: &[SensorFrame],
    action: Action,
) -> Result<(f64, PolicyGradient)> {
    let encoded = policy.encode(frames)?;
    let z = run_circuit(&encoded, &policy.circuit);
    let logp = log_softmax(policy.beta, &z);
    let probs = logp.map(f64::exp);
    let a = action.index();

    // ∂ log π_a / ∂θ = β (∂z_a/∂θ − Σ_b π_b ∂z_b/∂θ)
    let jac = readout_jacobian(&policy.circuit, &encoded);
    let thetas = jac
        .iter()
        .map(|dz| {
            let mean: f64 = probs.iter().zip(dz).map(|(p, d)| p * d).sum();
            policy.beta * (dz[a] - mean)
        })
        .collect();

    let attention = if policy.attention.trainable {
        let mut weights = policy.attention.clone();
        let q = policy.circuit.num_qubits();
        let eval = |w: &AttentionWeights| -> Result<f64> {
            let (amps, _) = fusion::encode_amplitudes(frames, w, q)?;
            let state = QuantumState::from_amplitudes(
                amps.into_iter().map(|x| Complex64::new(x, 0.0)).collect(),
            )?;
            Ok(log_softmax(policy.beta, &run_circuit(&state, &policy.circuit))[a])
        };
        let mut grad = Vec::with_capacity(weights.len());
        for k in 0..weights.len() {
            let w0 = weights.flat_get(k);
            weights.flat_set(k, w0 + ATTENTION_FD_STEP);
            let up = eval(&weights);
            weights.flat_set(k, w0 - ATTENTION_FD_STEP);
            let down = eval(&weights);
            weights.flat_set(k, w0);
            grad.push(match (up, down) {
                (Ok(u), Ok(d)) => (u - d) / (2.0 * ATTENTION_FD_STEP),
                _ => return Err(Error::NonFiniteGradient),
            });
        }
        grad
    } else {
        Vec::new()
    };
    Ok((logp[a], PolicyGradient { thetas, attention }))
}

/// One weighted term of the surrogate objective `Σ w·log π(a|s)`.
#[derive(Debug, Clone)]
pub struct Sample<'a> {
    pub frames: &'a [SensorFrame],
    pub action: Action,
    pub weight: f64,
}

/// Mean of `w·log π(a|s)` over the samples and its gradient. Samples are
/// differentiated in parallel and reduced in order.
pub fn surrogate_with_gradient(policy: &Policy, samples: &[Sample<'_>]) -> Result<(f64, PolicyGradient)> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let terms: Vec<Result<(f64, Option<PolicyGradient>)>> = samples
        .par_iter()
        .map(|s| {
            if s.weight == 0.0 {
                Ok((0.0, None))
            } else {
                let (lp, g) = log_prob_gradient(policy, s.frames, s.action)?;
                Ok((s.weight * lp, Some(g)))
            }
        })
        .collect();
    let n = samples.len() as f64;
    let mut objective = 0.0;
    let mut grad = PolicyGradient::zeros(policy);
    for (term, s) in terms.into_iter().zip(samples) {
        let (value, g) = term?;
        objective += value;
        if let Some(g) = g {
            grad.add_scaled(&g, s.weight / n);
        }
    }
    Ok((objective / n, grad))
}

/// Gradient ascent step; fails without touching the policy on non-finite input.
pub fn ascend(policy: &Policy, grad: &PolicyGradient, learning_rate: f64) -> Result<Policy> {
    if !grad.is_finite() {
        return Err(Error::NonFiniteGradient);
    }
    let mut next = policy.clone();
    for (t, g) in next.circuit.thetas_mut().iter_mut().zip(&grad.thetas) {
        *t += learning_rate * g;
    }
    if next.attention.trainable {
        for (k, g) in grad.attention.iter().enumerate() {
            let w = next.attention.flat_get(k);
            next.attention.flat_set(k, w + learning_rate * g);
        }
    }
    if next.circuit.thetas().iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    None,
    /// Mean of `G_t` over the batch trajectories still running at step `t`.
    MeanReturn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub episodes_per_update: usize,
    pub baseline: Baseline,
    pub discount: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            episodes_per_update: 16,
            baseline: Baseline::MeanReturn,
            discount: 0.99,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig {
                field: "learning_rate",
                reason: format!("{} (need finite, >= 0)", self.learning_rate),
            });
        }
        if self.episodes_per_update == 0 {
            return Err(Error::InvalidConfig {
                field: "episodes_per_update",
                reason: "must be positive".into(),
            });
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::InvalidConfig {
                field: "discount",
                reason: format!("{} not in (0, 1]", self.discount),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub frames: Vec<SensorFrame>,
    pub action: Action,
    pub log_prob: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    /// Discounted return `G_t = Σ_{k≥t} γ^{k−t} r_k` for every step.
    pub returns: Vec<f64>,
    pub discount: f64,
    pub collision: bool,
    pub goal_reached: bool,
}

impl Trajectory {
    pub fn new(steps: Vec<TrajectoryStep>, discount: f64) -> Self {
        let returns = discounted_returns(steps.iter().map(|s| s.reward), discount);
        Self {
            steps,
            returns,
            discount,
            collision: false,
            goal_reached: false,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Undiscounted episode return.
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

pub fn discounted_returns(rewards: impl DoubleEndedIterator<Item = f64>, discount: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = rewards
        .rev()
        .map(|r| {
            acc = r + discount * acc;
            acc
        })
        .collect();
    out.reverse();
    out
}

/// `G_t − b_t` for every step of every trajectory.
pub fn advantages(batch: &[Trajectory], baseline: Baseline) -> Vec<Vec<f64>> {
    match baseline {
        Baseline::None => batch.iter().map(|t| t.returns.clone()).collect(),
        Baseline::MeanReturn => {
            let horizon = batch.iter().map(Trajectory::len).max().unwrap_or(0);
            let mut sums = vec![0.0; horizon];
            let mut counts = vec![0usize; horizon];
            for t in batch {
                for (i, g) in t.returns.iter().enumerate() {
                    sums[i] += g;
                    counts[i] += 1;
                }
            }
            let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
            batch
                .iter()
                .map(|t| t.returns.iter().zip(&means).map(|(g, b)| g - b).collect())
                .collect()
        }
    }
}

pub(crate) fn check_batch(batch: &[Trajectory]) -> Result<()> {
    if batch.is_empty() || batch.iter().all(Trajectory::is_empty) {
        return Err(Error::EmptyBatch);
    }
    if batch.iter().flat_map(|t| &t.returns).any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    Ok(())
}

/// Weighted samples over every recorded step.
pub fn batch_samples<'a>(batch: &'a [Trajectory], advantages: &[Vec<f64>]) -> Vec<Sample<'a>> {
    batch
        .iter()
        .zip(advantages)
        .flat_map(|(t, adv)| {
            t.steps.iter().zip(adv).map(|(s, &w)| Sample {
                frames: &s.frames,
                action: s.action,
                weight: w,
            })
        })
        .collect()
}

/// Outcome of a policy update.
#[derive(Debug, Clone)]
pub struct Update {
    pub policy: Policy,
    /// `L_policy = −mean_t log π(a_t|s_t)·(G_t − b_t)`.
    pub policy_loss: f64,
    pub gradient: PolicyGradient,
}

/// REINFORCE ascent on `mean_t log π(a_t|s_t)·(G_t − b_t)`.
pub fn reinforce_update(policy: &Policy, batch: &[Trajectory], config: &TrainConfig) -> Result<Update> {
    check_batch(batch)?;
    let adv = advantages(batch, config.baseline);
    let samples = batch_samples(batch, &adv);
    let (objective, gradient) = surrogate_with_gradient(policy, &samples)?;
    let policy = ascend(policy, &gradient, config.learning_rate)?;
    Ok(Update {
        policy,
        policy_loss: -objective,
        gradient,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutMode {
    Sample,
    Greedy,
}

/// Roll out one episode, at most [`MAX_EPISODE_STEPS`] steps.
pub fn run_episode(
    policy: &Policy,
    env: &EnvConfig,
    env_seed: u64,
    mode: RolloutMode,
    sample_seed: u64,
    discount: f64,
) -> Result<Trajectory> {
    let (mut world, mut obs) = WorldState::reset(env, env_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let mut steps = Vec::new();
    let (mut collision, mut goal) = (false, false);
    while !obs.done && steps.len() < MAX_EPISODE_STEPS {
        let z = policy.readout(&obs.frames)?;
        let logp = log_softmax(policy.beta, &z);
        let index = match mode {
            RolloutMode::Greedy => argmax(&z[..ACTION_COUNT]),
            RolloutMode::Sample => sample_index(&logp.map(f64::exp), &mut rng),
        };
        let action = Action::from_index(index).expect("index below action count");
        let next = world.step(action)?;
        steps.push(TrajectoryStep {
            frames: std::mem::take(&mut obs.frames),
            action,
            log_prob: logp[index],
            reward: next.reward,
        });
        collision |= next.collision;
        goal |= next.goal_reached;
        obs = next;
    }
    let mut trajectory = Trajectory::new(steps, discount);
    trajectory.collision = collision;
    trajectory.goal_reached = goal;
    Ok(trajectory)
}

fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Undiscounted return of a uniformly random policy.
pub fn run_random_episode(env: &EnvConfig, env_seed: u64, rng_seed: u64) -> Result<f64> {
    let (mut world, mut obs) = WorldState::reset(env, env_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut total = 0.0;
    let mut n = 0;
    while !obs.done && n < MAX_EPISODE_STEPS {
        obs = world.step(Action::ALL[rng.gen_range(0..ACTION_COUNT)])?;
        total += obs.reward;
        n += 1;
    }
    Ok(total)
}

/// SplitMix64 finalizer, used to derive independent per-episode seeds.
pub fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    let mut x = base;
    for &p in parts {
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p.wrapping_mul(0xD1B5_4A32_D192_ED03));
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^= x >> 31;
    }
    x
}

/// Sampled rollouts for one update, seeded from `(config.rng_seed, update)`.
pub fn collect_batch(
    policy: &Policy,
    env: &EnvConfig,
    config: &TrainConfig,
    update: u64,
) -> Result<Vec<Trajectory>> {
    (0..config.episodes_per_update as u64)
        .into_par_iter()
        .map(|e| {
            run_episode(
                policy,
                env,
                mix_seed(config.rng_seed, &[update, e, 1]),
                RolloutMode::Sample,
                mix_seed(config.rng_seed, &[update, e, 2]),
                config.discount,
            )
        })
        .collect()
}

/// Mean undiscounted greedy return over the given environment seeds.
pub fn evaluate_greedy(policy: &Policy, env: &EnvConfig, seeds: &[u64]) -> Result<f64> {
    let returns: Vec<f64> = seeds
        .par_iter()
        .map(|&s| run_episode(policy, env, s, RolloutMode::Greedy, 0, 1.0).map(|t| t.total_reward()))
        .collect::<Result<_>>()?;
    Ok(returns.iter().sum::<f64>() / returns.len() as f64)
}
