//! Latency of one secured decision tick over a local socket.

use std::io::Write as _;
use std::os::unix::net::UnixStream;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use qnav_core::environment::{Action, WorldState};
use qnav_core::fusion;
use qnav_core::navq::{self, Policy, ACTION_COUNT};
use qnav_securebus::{
    handshake_finish, handshake_hello, handshake_respond, open_frame, read_frame, seal_frame, suite_by_id,
    CryptoSuite, SensorCredentials, SensorRegistry, SessionState,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::commands::{ensure_dir, write_csv};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::manifest::Manifest;
use crate::payload;

pub const BENCH_CSV: &str = "bench.csv";
pub const BENCH_JSON: &str = "bench.json";
pub const STAGES: [&str; 6] = ["seal", "transport", "open", "encode", "ansatz", "action"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageStats {
    pub name: String,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub mean_ms: f64,
}

impl StageStats {
    fn from_samples(name: &str, samples: &[f64]) -> Self {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            name: name.into(),
            p50_ms: percentile(&sorted, 0.50),
            p99_ms: percentile(&sorted, 0.99),
            mean_ms: sorted.iter().sum::<f64>() / sorted.len() as f64,
        }
    }
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub ticks: usize,
    pub num_qubits: usize,
    pub depth: usize,
    pub suite: String,
    pub frame_signatures: bool,
    pub budget_ms: f64,
    pub stages: Vec<StageStats>,
    pub total: StageStats,
    /// Sum of the per-stage means; equals `total.mean_ms` up to rounding.
    pub stage_mean_sum_ms: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
struct TickRow {
    tick: usize,
    seal_ms: f64,
    transport_ms: f64,
    open_ms: f64,
    encode_ms: f64,
    ansatz_ms: f64,
    action_ms: f64,
    total_ms: f64,
}

/// A completed in-memory handshake for one sensor.
pub struct Link {
    pub suite: Box<dyn CryptoSuite>,
    pub sensor: SessionState,
    pub processor: SessionState,
}

pub fn establish(config: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Link> {
    let b = &config.securebus;
    let suite = suite_by_id(b.suite_id)
        .ok_or_else(|| CliError::config("securebus.suite_id", format!("suite {:#04x} not available", b.suite_id)))?;
    let creds = SensorCredentials::generate(suite.as_ref(), b.sensor_id, rng);
    let mut registry = SensorRegistry::new();
    registry.insert(b.sensor_id, creds.registry_entry());
    let mut sensor = SessionState::sensor(b.sensor_id).with_frame_signatures(b.frame_signatures);
    let mut processor = SessionState::processor().with_frame_signatures(b.frame_signatures);
    let hello = handshake_hello(&mut sensor, suite.as_ref(), &creds.signing.secret, b"bench", rng)?;
    let response = handshake_respond(&mut processor, suite.as_ref(), &hello, &registry, rng)?;
    handshake_finish(&mut sensor, suite.as_ref(), &creds.kem.secret, &response)?;
    Ok(Link {
        suite,
        sensor,
        processor,
    })
}

fn ms(a: Instant, b: Instant) -> f64 {
    (b - a).as_secs_f64() * 1e3
}

/// Run `warmup + ticks` decision ticks; only the last `ticks` are recorded.
pub fn run_bench(config: &ExperimentConfig, policy: &Policy) -> Result<(BenchReport, Vec<[f64; 7]>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(navq::mix_seed(config.rng_seed, &[0xbe]));
    let Link {
        suite,
        mut sensor,
        mut processor,
    } = establish(config, &mut rng)?;
    let suite = suite.as_ref();
    let (mut tx, mut rx) = UnixStream::pair().map_err(|e| CliError::Runtime(format!("socket pair: {e}")))?;

    let env = &config.environment;
    let mut episode = 0u64;
    let (mut world, mut obs) = WorldState::reset(env, navq::mix_seed(config.rng_seed, &[episode]))?;
    let q = policy.circuit.num_qubits();
    let bench = &config.bench;
    let mut samples = Vec::with_capacity(bench.ticks);

    for tick in 0..bench.warmup + bench.ticks {
        let t0 = Instant::now();
        let plaintext = payload::encode_observation(&obs.frames);
        let frame = seal_frame(&mut sensor, suite, &plaintext)?;
        let t1 = Instant::now();
        tx.write_all(&frame.to_bytes())
            .map_err(|e| CliError::Runtime(format!("socket write: {e}")))?;
        let received = read_frame(&mut rx)?;
        let t2 = Instant::now();
        let opened = open_frame(&mut processor, suite, &received)?;
        let frames = payload::decode_observation(&opened)?;
        let t3 = Instant::now();
        let encoded = fusion::encode_frames(&frames, &policy.attention, q)?;
        let t4 = Instant::now();
        let out = fusion::run_ansatz(encoded.state, &policy.circuit)?;
        let t5 = Instant::now();
        let z = fusion::extract_features(&out);
        let probs = navq::softmax(policy.beta(), &z);
        let action = Action::from_index(navq::argmax(&z[..ACTION_COUNT])).expect("index below action count");
        let t6 = Instant::now();
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        if tick >= bench.warmup {
            samples.push([ms(t0, t1), ms(t1, t2), ms(t2, t3), ms(t3, t4), ms(t4, t5), ms(t5, t6), ms(t0, t6)]);
        }
        obs = world.step(action)?;
        if obs.done {
            episode += 1;
            (world, obs) = WorldState::reset(env, navq::mix_seed(config.rng_seed, &[episode]))?;
        }
    }

    let column = |i: usize| samples.iter().map(|s| s[i]).collect::<Vec<f64>>();
    let stages: Vec<StageStats> = STAGES
        .iter()
        .enumerate()
        .map(|(i, name)| StageStats::from_samples(name, &column(i)))
        .collect();
    let total = StageStats::from_samples("total", &column(6));
    let report = BenchReport {
        ticks: samples.len(),
        num_qubits: q,
        depth: policy.circuit.depth(),
        suite: suite.name().into(),
        frame_signatures: config.securebus.frame_signatures,
        budget_ms: bench.budget_ms,
        stage_mean_sum_ms: stages.iter().map(|s| s.mean_ms).sum(),
        pass: total.p99_ms < bench.budget_ms,
        stages,
        total,
    };
    Ok((report, samples))
}

pub fn cmd_bench(config: &ExperimentConfig, out: &Path, policy: &Policy, checkpoint: Option<&Path>) -> Result<BenchReport> {
    ensure_dir(out)?;
    let (report, samples) = run_bench(config, policy)?;
    let rows: Vec<TickRow> = samples
        .iter()
        .enumerate()
        .map(|(tick, s)| TickRow {
            tick,
            seal_ms: s[0],
            transport_ms: s[1],
            open_ms: s[2],
            encode_ms: s[3],
            ansatz_ms: s[4],
            action_ms: s[5],
            total_ms: s[6],
        })
        .collect();
    write_csv(&out.join(BENCH_CSV), &rows)?;
    let json_path = out.join(BENCH_JSON);
    std::fs::write(&json_path, serde_json::to_string_pretty(&report).expect("report serializes") + "\n")
        .map_err(|e| CliError::io(&json_path, e))?;

    let mut manifest = Manifest::new("bench", config);
    if let Some(path) = checkpoint {
        manifest.input(path)?;
    }
    manifest.output(BENCH_CSV);
    manifest.output(BENCH_JSON);
    manifest.write(out)?;

    for s in &report.stages {
        info!("{:<9} p50 {:>8.4} ms  p99 {:>8.4} ms", s.name, s.p50_ms, s.p99_ms);
    }
    let verdict = format!(
        "total p50 {:.4} ms, p99 {:.4} ms over {} ticks (Q={}, L={}): {} the {} ms budget",
        report.total.p50_ms,
        report.total.p99_ms,
        report.ticks,
        report.num_qubits,
        report.depth,
        if report.pass { "PASS within" } else { "FAIL over" },
        report.budget_ms
    );
    if report.pass {
        info!("{verdict}");
    } else {
        warn!("{verdict}");
    }
    Ok(report)
}
