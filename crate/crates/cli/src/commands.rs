//! `train`, `eval` and `attack`.

use std::path::{Path, PathBuf};

use log::info;
use qnav_core::adversarial::AttackConfig;
use qnav_core::checkpoint::Checkpoint;
use qnav_core::navq::{self, Policy};
use qnav_core::training::{self, EvalAttack};
use serde::Serialize;

use crate::config::{AttackKind, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::manifest::Manifest;

pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const EVAL_FILE: &str = "eval.csv";
pub const ATTACK_FILE: &str = "attack.csv";

/// One row of `metrics.csv`. Only deterministic quantities go here.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub update: u64,
    pub episodes: usize,
    pub mean_return: f64,
    pub policy_loss: f64,
    pub adv_loss: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct TimingRow {
    update: u64,
    elapsed_ms: f64,
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub struct TrainOutput {
    pub policy: Policy,
    pub metrics: Vec<MetricsRow>,
    pub elapsed_ms: Vec<f64>,
}

/// Train from the config's seed. Robust updates run when `adversarial.lambda > 0`.
pub fn run_training(config: &ExperimentConfig) -> Result<TrainOutput> {
    let train = config.train_config();
    let mut metrics = Vec::new();
    let mut elapsed_ms = Vec::new();
    let policy = training::train(
        config.initial_policy()?,
        &config.environment,
        &train,
        &config.robust_config(),
        config.navq.total_episodes,
        |m, _| {
            info!(
                "update {} mean_return {:.3} policy_loss {:.4}{}",
                m.update,
                m.mean_return,
                m.policy_loss,
                m.adv_loss.map(|a| format!(" adv_loss {a:.4}")).unwrap_or_default()
            );
            metrics.push(MetricsRow {
                update: m.update,
                episodes: (m.update as usize + 1) * train.episodes_per_update,
                mean_return: m.mean_return,
                policy_loss: m.policy_loss,
                adv_loss: m.adv_loss,
            });
            elapsed_ms.push(m.elapsed.as_secs_f64() * 1e3);
        },
    )?;
    Ok(TrainOutput {
        policy,
        metrics,
        elapsed_ms,
    })
}

pub fn cmd_train(config: &ExperimentConfig, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let result = run_training(config)?;
    let mut manifest = Manifest::new("train", config);

    write_csv(&out.join(METRICS_FILE), &result.metrics)?;
    manifest.output(METRICS_FILE);
    let timings: Vec<TimingRow> = result
        .metrics
        .iter()
        .zip(&result.elapsed_ms)
        .map(|(m, &elapsed_ms)| TimingRow {
            update: m.update,
            elapsed_ms,
        })
        .collect();
    write_csv(&out.join(TIMINGS_FILE), &timings)?;
    manifest.output(TIMINGS_FILE);

    let ckpt_path = out.join(CHECKPOINT_FILE);
    Checkpoint {
        circuit: result.policy.circuit.clone(),
        attention: result.policy.attention.clone(),
    }
    .save(&ckpt_path)?;
    manifest.output(CHECKPOINT_FILE);
    manifest.write(out)?;
    info!("wrote {} updates to {}", result.metrics.len(), out.display());
    Ok(())
}

/// Load a checkpoint and check it against the configured circuit shape.
pub fn load_policy(config: &ExperimentConfig, path: &Path) -> Result<Policy> {
    if !path.exists() {
        return Err(CliError::Checkpoint(format!("{} does not exist", path.display())));
    }
    let ck = Checkpoint::load(path).map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
    let f = &config.fusion;
    let shape = (ck.circuit.depth(), ck.circuit.num_qubits(), ck.attention.dims());
    if shape != (f.depth, f.num_qubits, f.dims) {
        return Err(CliError::Checkpoint(format!(
            "shape (depth {}, qubits {}, dims {:?}) does not match config (depth {}, qubits {}, dims {:?})",
            shape.0, shape.1, shape.2, f.depth, f.num_qubits, f.dims
        )));
    }
    Ok(Policy::new(ck.circuit, ck.attention, config.navq.beta)?)
}

pub fn checkpoint_path(out: &Path, explicit: Option<&PathBuf>) -> PathBuf {
    explicit.cloned().unwrap_or_else(|| out.join(CHECKPOINT_FILE))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub episodes: usize,
    pub policy_mean_return: f64,
    pub random_mean_return: f64,
}

pub fn evaluate(config: &ExperimentConfig, policy: &Policy) -> Result<EvalRow> {
    let seeds = config.eval_seeds();
    let policy_mean = navq::evaluate_greedy(policy, &config.environment, &seeds)?;
    let mut random = 0.0;
    for &s in &seeds {
        random += navq::run_random_episode(&config.environment, s, navq::mix_seed(config.rng_seed, &[s]))?;
    }
    Ok(EvalRow {
        episodes: seeds.len(),
        policy_mean_return: policy_mean,
        random_mean_return: random / seeds.len() as f64,
    })
}

pub fn cmd_eval(config: &ExperimentConfig, out: &Path, checkpoint: &Path) -> Result<()> {
    let policy = load_policy(config, checkpoint)?;
    ensure_dir(out)?;
    let row = evaluate(config, &policy)?;
    info!(
        "greedy mean return {:.3} vs random {:.3} over {} episodes",
        row.policy_mean_return, row.random_mean_return, row.episodes
    );
    write_csv(&out.join(EVAL_FILE), &[row])?;
    let mut manifest = Manifest::new("eval", config);
    manifest.input(checkpoint)?;
    manifest.output(EVAL_FILE);
    manifest.write(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackRow {
    pub epsilon: f64,
    pub attack: &'static str,
    pub mean_clean: f64,
    pub mean_attacked: f64,
    pub degradation_pct: f64,
}

/// The evaluation attack for one grid cell; a zero budget is the identity.
pub fn eval_attack(config: &ExperimentConfig, kind: AttackKind, epsilon: f64) -> EvalAttack {
    if epsilon == 0.0 {
        return EvalAttack::None;
    }
    match kind {
        AttackKind::Pgd => {
            let base = &config.adversarial.attack;
            let step_size = if base.steps == 1 { epsilon } else { base.step_size };
            EvalAttack::Pgd(AttackConfig {
                epsilon,
                step_size,
                ..base.clone()
            })
        }
        AttackKind::Structured(kind) => EvalAttack::Structured {
            kind,
            magnitude: epsilon,
            config: config.adversarial.structured.clone(),
        },
    }
}

/// Greedy returns for every `(attack, ε)` cell of the configured grid.
pub fn attack_grid(config: &ExperimentConfig, policy: &Policy) -> Result<Vec<AttackRow>> {
    let seeds = config.eval_seeds();
    let env = &config.environment;
    let clean = training::mean_return_under_attack(policy, env, &seeds, &EvalAttack::None)?;
    let mut rows = Vec::new();
    for kind in config.eval_attacks()? {
        for &epsilon in &config.adversarial.eval_epsilons {
            let attack = eval_attack(config, kind, epsilon);
            let attacked = match attack {
                EvalAttack::None => clean,
                _ => training::mean_return_under_attack(policy, env, &seeds, &attack)?,
            };
            let row = AttackRow {
                epsilon,
                attack: kind.name(),
                mean_clean: clean,
                mean_attacked: attacked,
                degradation_pct: training::degradation_percent(clean, attacked),
            };
            info!(
                "{} eps {}: clean {:.3} attacked {:.3} degradation {:.2}%",
                row.attack, epsilon, clean, attacked, row.degradation_pct
            );
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn cmd_attack(config: &ExperimentConfig, out: &Path, checkpoint: &Path) -> Result<()> {
    let policy = load_policy(config, checkpoint)?;
    ensure_dir(out)?;
    let rows = attack_grid(config, &policy)?;
    write_csv(&out.join(ATTACK_FILE), &rows)?;
    let mut manifest = Manifest::new("attack", config);
    manifest.input(checkpoint)?;
    manifest.output(ATTACK_FILE);
    manifest.write(out)
}
