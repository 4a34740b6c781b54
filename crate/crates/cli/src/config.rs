//! Experiment configuration: one JSON document, validated in full at load.

use std::path::{Path, PathBuf};

use qnav_core::adversarial::{AttackConfig, StructuredAttack, StructuredAttackConfig};
use qnav_core::environment::{self, EnvConfig};
use qnav_core::navq::{Baseline, Policy, TrainConfig, ACTION_COUNT};
use qnav_core::statevector::MAX_QUBITS;
use qnav_core::training::RobustConfig;
use qnav_core::{Error as CoreError, SensorDims};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub rng_seed: u64,
    pub output_dir: PathBuf,
    pub environment: EnvConfig,
    pub fusion: FusionConfig,
    pub navq: NavqConfig,
    pub adversarial: AdversarialConfig,
    pub securebus: BusConfig,
    pub bench: BenchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rng_seed: 0,
            output_dir: PathBuf::from("runs/default"),
            environment: EnvConfig::default(),
            fusion: FusionConfig::default(),
            navq: NavqConfig::default(),
            adversarial: AdversarialConfig::default(),
            securebus: BusConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub num_qubits: usize,
    pub depth: usize,
    pub dims: SensorDims,
    pub attention_trainable: bool,
    /// Initial angles are drawn from `[-init_scale, init_scale]`.
    pub init_scale: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            num_qubits: 5,
            depth: 3,
            dims: environment::sensor_dims(),
            attention_trainable: true,
            init_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NavqConfig {
    pub learning_rate: f64,
    pub episodes_per_update: usize,
    pub baseline: Baseline,
    pub discount: f64,
    /// Softmax inverse temperature.
    pub beta: f64,
    pub total_episodes: usize,
    pub eval_episodes: usize,
}

impl Default for NavqConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            episodes_per_update: 8,
            baseline: Baseline::MeanReturn,
            discount: 0.99,
            beta: 2.0,
            total_episodes: 200,
            eval_episodes: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversarialConfig {
    /// Weight of the adversarial loss; 0 trains plain REINFORCE.
    pub lambda: f64,
    pub attack: AttackConfig,
    /// Budgets swept by `attack`. Structured attacks read them as magnitudes.
    pub eval_epsilons: Vec<f64>,
    /// `pgd`, `gps_jam`, `lidar_spoof` or `camera_patch`.
    pub eval_attacks: Vec<String>,
    pub structured: StructuredAttackConfig,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            attack: AttackConfig::default(),
            eval_epsilons: vec![0.0, 0.01, 0.05, 0.1],
            eval_attacks: vec!["pgd".into()],
            structured: StructuredAttackConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BusConfig {
    pub suite_id: u8,
    /// Existing registry; requires `credentials`. When both are absent the
    /// demo generates and writes fresh ones.
    pub registry: Option<PathBuf>,
    pub credentials: Option<PathBuf>,
    pub sensor_id: u16,
    pub frame_signatures: bool,
    pub demo_ticks: usize,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self {
            suite_id: qnav_securebus::TestSuite::ID,
            registry: None,
            credentials: None,
            sensor_id: 1,
            frame_signatures: false,
            demo_ticks: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub ticks: usize,
    pub warmup: usize,
    pub budget_ms: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            ticks: 1000,
            warmup: 20,
            budget_ms: 50.0,
        }
    }
}

/// One evaluation attack from `adversarial.eval_attacks`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    Pgd,
    Structured(StructuredAttack),
}

impl AttackKind {
    pub fn parse(name: &str) -> Option<Self> {
        if name == "pgd" {
            return Some(AttackKind::Pgd);
        }
        name.parse().ok().map(AttackKind::Structured)
    }

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Pgd => "pgd",
            AttackKind::Structured(s) => s.name(),
        }
    }
}

fn prefixed(section: &str, err: CoreError) -> CliError {
    match err {
        CoreError::InvalidConfig { field, reason } => CliError::config(format!("{section}.{field}"), reason),
        other => CliError::config(section, other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(if path == "." { "<root>".into() } else { path }, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(path.display().to_string(), e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    pub fn validate(&self) -> Result<()> {
        self.environment.validate().map_err(|e| prefixed("environment", e))?;

        let f = &self.fusion;
        if f.num_qubits < ACTION_COUNT {
            return Err(CliError::config(
                "fusion.num_qubits",
                format!("{} qubits cannot read out {ACTION_COUNT} actions", f.num_qubits),
            ));
        }
        if f.num_qubits > MAX_QUBITS {
            return Err(CliError::config("fusion.num_qubits", format!("{} exceeds {MAX_QUBITS}", f.num_qubits)));
        }
        if f.depth == 0 {
            return Err(CliError::config("fusion.depth", "must be >= 1"));
        }
        let needed = f.dims.total();
        if needed > 1 << f.num_qubits {
            return Err(CliError::config(
                "fusion.dims",
                format!("{needed} sensor components exceed 2^{} = {} amplitudes", f.num_qubits, 1usize << f.num_qubits),
            ));
        }
        if f.dims != environment::sensor_dims() {
            return Err(CliError::config(
                "fusion.dims",
                format!("{:?} does not match the environment's sensors {:?}", f.dims, environment::sensor_dims()),
            ));
        }
        if !(f.init_scale.is_finite() && f.init_scale >= 0.0) {
            return Err(CliError::config("fusion.init_scale", "must be finite and >= 0"));
        }

        self.train_config().validate().map_err(|e| prefixed("navq", e))?;
        let n = &self.navq;
        if !(n.beta.is_finite() && n.beta > 0.0) {
            return Err(CliError::config("navq.beta", format!("{} (need > 0)", n.beta)));
        }
        if n.total_episodes == 0 {
            return Err(CliError::config("navq.total_episodes", "must be >= 1"));
        }
        if n.eval_episodes == 0 {
            return Err(CliError::config("navq.eval_episodes", "must be >= 1"));
        }

        let a = &self.adversarial;
        if !(a.lambda.is_finite() && a.lambda >= 0.0) {
            return Err(CliError::config("adversarial.lambda", format!("{} (need finite, >= 0)", a.lambda)));
        }
        a.attack.validate().map_err(|e| prefixed("adversarial.attack", e))?;
        for (i, eps) in a.eval_epsilons.iter().enumerate() {
            if !(0.0..=1.0).contains(eps) {
                return Err(CliError::config(format!("adversarial.eval_epsilons[{i}]"), format!("{eps} not in [0, 1]")));
            }
        }
        self.eval_attacks()?;

        let b = &self.securebus;
        if qnav_securebus::suite_by_id(b.suite_id).is_none() {
            return Err(CliError::config(
                "securebus.suite_id",
                format!("suite {:#04x} not available (have {:?})", b.suite_id, qnav_securebus::suite::available_suites()),
            ));
        }
        if b.registry.is_some() != b.credentials.is_some() {
            return Err(CliError::config("securebus.credentials", "registry and credentials must be given together"));
        }
        if b.demo_ticks == 0 {
            return Err(CliError::config("securebus.demo_ticks", "must be >= 1"));
        }

        if self.bench.ticks < 1000 {
            return Err(CliError::config("bench.ticks", format!("{} (need >= 1000)", self.bench.ticks)));
        }
        if !(self.bench.budget_ms.is_finite() && self.bench.budget_ms > 0.0) {
            return Err(CliError::config("bench.budget_ms", "must be > 0"));
        }
        Ok(())
    }

    pub fn eval_attacks(&self) -> Result<Vec<AttackKind>> {
        self.adversarial
            .eval_attacks
            .iter()
            .enumerate()
            .map(|(i, name)| {
                AttackKind::parse(name).ok_or_else(|| {
                    CliError::config(
                        format!("adversarial.eval_attacks[{i}]"),
                        format!("unknown attack {name:?} (expected pgd, gps_jam, lidar_spoof or camera_patch)"),
                    )
                })
            })
            .collect()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.navq.learning_rate,
            episodes_per_update: self.navq.episodes_per_update,
            baseline: self.navq.baseline,
            discount: self.navq.discount,
            rng_seed: self.rng_seed,
        }
    }

    pub fn robust_config(&self) -> RobustConfig {
        RobustConfig {
            lambda: self.adversarial.lambda,
            attack: self.adversarial.attack.clone(),
        }
    }

    /// Freshly initialized policy for this config's seed.
    pub fn initial_policy(&self) -> Result<Policy> {
        let f = &self.fusion;
        let mut policy = Policy::random(f.depth, f.num_qubits, &f.dims, self.navq.beta, f.init_scale, self.rng_seed)?;
        policy.attention.trainable = f.attention_trainable;
        Ok(policy)
    }

    /// Greedy evaluation seeds, disjoint from the training stream.
    pub fn eval_seeds(&self) -> Vec<u64> {
        (0..self.navq.eval_episodes as u64).map(|i| 1_000_000 + i).collect()
    }
}
