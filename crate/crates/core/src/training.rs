//! Training loop and attacked evaluation shared by the CLI and the test suites.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversarial::{self, AttackConfig, StructuredAttack, StructuredAttackConfig};
use crate::environment::{Action, EnvConfig, WorldState};
use crate::error::Result;
use crate::fusion::SensorFrame;
use crate::navq::{self, Policy, TrainConfig, MAX_EPISODE_STEPS};

/// Adversarial term of the robust objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustConfig {
    pub lambda: f64,
    pub attack: AttackConfig,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            attack: AttackConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct UpdateMetrics {
    pub update: u64,
    pub mean_return: f64,
    pub policy_loss: f64,
    /// Present when the robust objective was used.
    pub adv_loss: Option<f64>,
    pub elapsed: Duration,
}

/// Train for `ceil(total_episodes / episodes_per_update)` updates. The robust
/// step is used only when `lambda > 0`; otherwise the update is plain REINFORCE.
pub fn train<F>(
    mut policy: Policy,
    env: &EnvConfig,
    config: &TrainConfig,
    robust: &RobustConfig,
    total_episodes: usize,
    mut on_update: F,
) -> Result<Policy>
where
    F: FnMut(&UpdateMetrics, &Policy),
{
    config.validate()?;
    env.validate()?;
    let updates = total_episodes.div_ceil(config.episodes_per_update);
    for u in 0..updates as u64 {
        let started = Instant::now();
        let batch = navq::collect_batch(&policy, env, config, u)?;
        let mean_return = batch.iter().map(|t| t.total_reward()).sum::<f64>() / batch.len() as f64;
        let (update, adv_loss) = if robust.lambda > 0.0 {
            let mut attack = robust.attack.clone();
            attack.rng_seed = navq::mix_seed(robust.attack.rng_seed, &[u]);
            let (up, report) =
                adversarial::robust_training_step(&policy, &batch, robust.lambda, &attack, config)?;
            (up, Some(report.adv_loss))
        } else {
            (navq::reinforce_update(&policy, &batch, config)?, None)
        };
        policy = update.policy;
        on_update(
            &UpdateMetrics {
                update: u,
                mean_return,
                policy_loss: update.policy_loss,
                adv_loss,
                elapsed: started.elapsed(),
            },
            &policy,
        );
    }
    Ok(policy)
}

/// Observation attack applied before every greedy decision.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalAttack {
    None,
    /// Ascends the negative log-likelihood of the clean greedy action.
    Pgd(AttackConfig),
    Structured {
        kind: StructuredAttack,
        magnitude: f64,
        config: StructuredAttackConfig,
    },
}

impl EvalAttack {
    fn apply(&self, policy: &Policy, frames: Vec<SensorFrame>, episode_seed: u64) -> Result<Vec<SensorFrame>> {
        match self {
            EvalAttack::None => Ok(frames),
            EvalAttack::Pgd(cfg) => {
                let target = policy.greedy_action(&frames)?;
                let loss = |p: &Policy, f: &[SensorFrame]| adversarial::action_nll(p, f, target, 1.0);
                Ok(adversarial::pgd_perturb(policy, &frames, cfg, &loss)?.frames)
            }
            EvalAttack::Structured {
                kind,
                magnitude,
                config,
            } => {
                let cfg = StructuredAttackConfig {
                    rng_seed: navq::mix_seed(config.rng_seed, &[episode_seed]),
                    ..config.clone()
                };
                Ok(adversarial::structured_attack(&frames, *kind, *magnitude, &cfg)?.frames)
            }
        }
    }
}

/// Undiscounted return of one greedy episode under `attack`.
pub fn greedy_return_under_attack(
    policy: &Policy,
    env: &EnvConfig,
    env_seed: u64,
    attack: &EvalAttack,
) -> Result<f64> {
    let (mut world, mut obs) = WorldState::reset(env, env_seed)?;
    let mut total = 0.0;
    let mut n = 0;
    while !obs.done && n < MAX_EPISODE_STEPS {
        let seen = attack.apply(policy, std::mem::take(&mut obs.frames), env_seed)?;
        let action: Action = policy.greedy_action(&seen)?;
        obs = world.step(action)?;
        total += obs.reward;
        n += 1;
    }
    Ok(total)
}

/// Mean greedy return over `seeds` under `attack`.
pub fn mean_return_under_attack(
    policy: &Policy,
    env: &EnvConfig,
    seeds: &[u64],
    attack: &EvalAttack,
) -> Result<f64> {
    let returns: Vec<f64> = seeds
        .par_iter()
        .map(|&s| greedy_return_under_attack(policy, env, s, attack))
        .collect::<Result<_>>()?;
    Ok(returns.iter().sum::<f64>() / returns.len() as f64)
}

/// Relative return loss in percent; negative when the attack helps.
pub fn degradation_percent(clean: f64, attacked: f64) -> f64 {
    if clean == attacked {
        return 0.0;
    }
    100.0 * (clean - attacked) / clean.abs().max(1e-9)
}
