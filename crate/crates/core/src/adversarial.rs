//! Adversarial sensor perturbations and robust policy training.
//!
//! Attacks act on the classical sensor values before encoding. The valid input
//! set is the unit box, so every perturbed frame is clamped to `[0, 1]` and to
//! the max-norm ball of radius `epsilon` around the clean reading.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::Action;
use crate::error::{Error, Result};
use crate::fusion::{Modality, SensorFrame};
use crate::navq::{self, Policy, Sample, TrainConfig, Trajectory};

/// Central-difference step for input gradients.
pub const INPUT_FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
    pub target_modalities: Vec<Modality>,
    pub rng_seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            steps: 1,
            step_size: 0.05,
            target_modalities: Modality::ALL.to_vec(),
            rng_seed: 0,
        }
    }
}

impl AttackConfig {
    /// Single sign-gradient step of size `epsilon`.
    pub fn single_step(epsilon: f64) -> Self {
        Self {
            epsilon,
            steps: 1,
            step_size: epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidConfig {
                field: "epsilon",
                reason: format!("{} (need finite, >= 0)", self.epsilon),
            });
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig {
                field: "steps",
                reason: "must be >= 1".into(),
            });
        }
        // A zero budget needs no step; any other budget needs a positive one.
        let step_ok = self.step_size > 0.0 || (self.epsilon == 0.0 && self.step_size == 0.0);
        if !(self.step_size.is_finite() && step_ok) {
            return Err(Error::InvalidConfig {
                field: "step_size",
                reason: format!("{} (need > 0, or 0 with a zero budget)", self.step_size),
            });
        }
        Ok(())
    }

    fn targets(&self, m: Modality) -> bool {
        self.target_modalities.contains(&m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedFrames {
    pub frames: Vec<SensorFrame>,
    /// ‖s_adv − s‖_∞.
    pub delta_norm: f64,
}

impl PerturbedFrames {
    fn new(clean: &[SensorFrame], frames: Vec<SensorFrame>) -> Self {
        let delta_norm = max_abs_diff(clean, &frames);
        Self { frames, delta_norm }
    }
}

pub fn max_abs_diff(a: &[SensorFrame], b: &[SensorFrame]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.values().iter().zip(y.values()).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

/// `sign` with `sign(0) = 0`.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Negative log-likelihood of `action`, scaled by `weight`.
pub fn action_nll(policy: &Policy, frames: &[SensorFrame], action: Action, weight: f64) -> Result<f64> {
    Ok(-weight * policy.log_prob(frames, action)?)
}

/// Per-component gradient of `loss` with respect to the sensor values, by
/// central differences with step [`INPUT_FD_STEP`]. Probes are clamped to
/// `[0, 1]` and divided by the actual probe span, so readings on the box
/// boundary get a one-sided difference.
pub fn input_gradient<L>(policy: &Policy, frames: &[SensorFrame], loss: &L) -> Result<Vec<Vec<f64>>>
where
    L: Fn(&Policy, &[SensorFrame]) -> Result<f64> + ?Sized,
{
    input_gradient_masked(policy, frames, loss, &|_| true)
}

fn input_gradient_masked<L, M>(
    policy: &Policy,
    frames: &[SensorFrame],
    loss: &L,
    include: &M,
) -> Result<Vec<Vec<f64>>>
where
    L: Fn(&Policy, &[SensorFrame]) -> Result<f64> + ?Sized,
    M: Fn(Modality) -> bool + ?Sized,
{
    let mut probe = frames.to_vec();
    let mut grad = Vec::with_capacity(frames.len());
    for i in 0..frames.len() {
        let clean = frames[i].values();
        let mut g = vec![0.0; clean.len()];
        if include(frames[i].modality()) {
            for (j, gj) in g.iter_mut().enumerate() {
                let up = (clean[j] + INPUT_FD_STEP).min(1.0);
                let down = (clean[j] - INPUT_FD_STEP).max(0.0);
                let mut values = clean.to_vec();
                values[j] = up;
                probe[i] = frames[i].with_values_clamped(values.clone());
                let l_up = loss(policy, &probe)?;
                values[j] = down;
                probe[i] = frames[i].with_values_clamped(values);
                let l_down = loss(policy, &probe)?;
                *gj = (l_up - l_down) / (up - down);
                if !gj.is_finite() {
                    return Err(Error::NonFiniteGradient);
                }
            }
            probe[i] = frames[i].clone();
        }
        grad.push(g);
    }
    Ok(grad)
}

/// Projected sign-gradient ascent on `loss`:
/// `s ← clamp₀₁(clip_ε(s + step_size·sign(∇_s L)))`, repeated `steps` times,
/// touching only the target modalities.
pub fn pgd_perturb<L>(
    policy: &Policy,
    frames: &[SensorFrame],
    config: &AttackConfig,
    loss: &L,
) -> Result<PerturbedFrames>
where
    L: Fn(&Policy, &[SensorFrame]) -> Result<f64> + ?Sized,
{
    config.validate()?;
    if config.epsilon == 0.0 {
        return Ok(PerturbedFrames {
            frames: frames.to_vec(),
            delta_norm: 0.0,
        });
    }
    let mut current = frames.to_vec();
    for _ in 0..config.steps {
        let grad = input_gradient_masked(policy, &current, loss, &|m| config.targets(m))?;
        current = current
            .iter()
            .zip(frames)
            .zip(&grad)
            .map(|((cur, clean), g)| {
                if !config.targets(cur.modality()) {
                    return cur.clone();
                }
                let values = cur
                    .values()
                    .iter()
                    .zip(clean.values())
                    .zip(g)
                    .map(|((&x, &x0), &gj)| {
                        (x + config.step_size * sign(gj))
                            .clamp(x0 - config.epsilon, x0 + config.epsilon)
                    })
                    .collect();
                cur.with_values_clamped(values)
            })
            .collect();
    }
    Ok(PerturbedFrames::new(frames, current))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuredAttack {
    GpsJam,
    LidarSpoof,
    CameraPatch,
}

impl StructuredAttack {
    pub const ALL: [StructuredAttack; 3] = [
        StructuredAttack::GpsJam,
        StructuredAttack::LidarSpoof,
        StructuredAttack::CameraPatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StructuredAttack::GpsJam => "gps_jam",
            StructuredAttack::LidarSpoof => "lidar_spoof",
            StructuredAttack::CameraPatch => "camera_patch",
        }
    }

    pub fn target(self) -> Modality {
        match self {
            StructuredAttack::GpsJam => Modality::Gps,
            StructuredAttack::LidarSpoof => Modality::Lidar,
            StructuredAttack::CameraPatch => Modality::Camera,
        }
    }
}

impl fmt::Display for StructuredAttack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StructuredAttack {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown attack kind {s:?}")))
    }
}

/// Knobs for the structured attacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StructuredAttackConfig {
    /// Number of shortest lidar rays overwritten by a spoof.
    pub spoof_rays: usize,
    /// Fake normalized range a full-strength spoof reports.
    pub spoof_floor: f64,
    /// Camera cells flipped by a patch.
    pub patch_len: usize,
    pub rng_seed: u64,
}

impl Default for StructuredAttackConfig {
    fn default() -> Self {
        Self {
            spoof_rays: 3,
            spoof_floor: 0.1,
            patch_len: 4,
            rng_seed: 0,
        }
    }
}

/// Apply a named physical-style attack at strength `magnitude ∈ [0, 1]`.
pub fn structured_attack(
    frames: &[SensorFrame],
    kind: StructuredAttack,
    magnitude: f64,
    config: &StructuredAttackConfig,
) -> Result<PerturbedFrames> {
    if !(0.0..=1.0).contains(&magnitude) {
        return Err(Error::InvalidParams(format!("attack magnitude {magnitude} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let out = frames
        .iter()
        .map(|f| {
            if f.modality() != kind.target() {
                return f.clone();
            }
            let v = f.values();
            let values: Vec<f64> = match kind {
                StructuredAttack::GpsJam => v
                    .iter()
                    .map(|&x| x + magnitude * (2.0 * rng.gen::<f64>() - 1.0))
                    .collect(),
                StructuredAttack::LidarSpoof => {
                    let mut order: Vec<usize> = (0..v.len()).collect();
                    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
                    let mut out = v.to_vec();
                    for &j in order.iter().take(config.spoof_rays) {
                        out[j] = (1.0 - magnitude) * v[j] + magnitude * config.spoof_floor;
                    }
                    out
                }
                StructuredAttack::CameraPatch => {
                    let len = config.patch_len.min(v.len());
                    let start = if v.len() > len {
                        rng.gen_range(0..=v.len() - len)
                    } else {
                        0
                    };
                    let mut out = v.to_vec();
                    for x in &mut out[start..start + len] {
                        *x = (1.0 - magnitude) * *x + magnitude * (1.0 - *x);
                    }
                    out
                }
            };
            f.with_values_clamped(values)
        })
        .collect();
    Ok(PerturbedFrames::new(frames, out))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub clean_loss: f64,
    pub adv_loss: f64,
    pub lambda: f64,
    pub total: f64,
}

impl LossReport {
    pub fn new(clean_loss: f64, adv_loss: f64, lambda: f64) -> Self {
        Self {
            clean_loss,
            adv_loss,
            lambda,
            total: clean_loss + lambda * adv_loss,
        }
    }
}

/// Adversarial replays of every recorded step: each state is attacked by
/// ascending the negative log-likelihood of the action that was taken.
pub fn perturb_batch(policy: &Policy, batch: &[Trajectory], attack: &AttackConfig) -> Result<Vec<Vec<Vec<SensorFrame>>>> {
    batch
        .iter()
        .map(|t| {
            t.steps
                .par_iter()
                .map(|s| {
                    let loss = |p: &Policy, f: &[SensorFrame]| action_nll(p, f, s.action, 1.0);
                    pgd_perturb(policy, &s.frames, attack, &loss).map(|p| p.frames)
                })
                .collect()
        })
        .collect()
}

/// One ascent step on `E[L_policy(s)] + λ·E[L_policy(s_adv)]`, with fresh
/// attacks on replays of the batch states.
pub fn robust_training_step(
    policy: &Policy,
    batch: &[Trajectory],
    lambda: f64,
    attack: &AttackConfig,
    train: &TrainConfig,
) -> Result<(navq::Update, LossReport)> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidParams(format!("lambda = {lambda}")));
    }
    navq::check_batch(batch)?;
    let adv = navq::advantages(batch, train.baseline);
    let clean_samples = navq::batch_samples(batch, &adv);
    let (clean_obj, clean_grad) = navq::surrogate_with_gradient(policy, &clean_samples)?;

    let perturbed = perturb_batch(policy, batch, attack)?;
    let adv_samples: Vec<Sample<'_>> = perturbed
        .iter()
        .zip(batch)
        .zip(&adv)
        .flat_map(|((frames, t), a)| {
            frames.iter().zip(&t.steps).zip(a).map(|((f, s), &w)| Sample {
                frames: f,
                action: s.action,
                weight: w,
            })
        })
        .collect();
    let (adv_obj, adv_grad) = navq::surrogate_with_gradient(policy, &adv_samples)?;
    if !adv_grad.is_finite() {
        return Err(Error::NonFiniteGradient);
    }

    let gradient = if lambda == 0.0 {
        clean_grad
    } else {
        clean_grad.combined(&adv_grad, lambda)
    };
    let next = navq::ascend(policy, &gradient, train.learning_rate)?;
    let report = LossReport::new(-clean_obj, -adv_obj, lambda);
    Ok((
        navq::Update {
            policy: next,
            policy_loss: report.clean_loss,
            gradient,
        },
        report,
    ))
}
