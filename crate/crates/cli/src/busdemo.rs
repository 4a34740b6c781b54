//! Sensor and processor exchanging observations and actions over a secured
//! Unix socket.

use std::io::Write as _;
use std::os::unix::net::UnixStream;
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::info;
use qnav_core::environment::WorldState;
use qnav_core::navq::{self, Policy};
use qnav_securebus::{
    accept_close, close_frame, handshake_finish, handshake_hello, handshake_respond, open_frame, read_frame,
    seal_frame, suite_by_id, CryptoSuite, MsgType, SecureFrame, SensorCredentials, SensorRegistry, SessionState,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::commands::{ensure_dir, write_csv};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::manifest::Manifest;
use crate::payload;

pub const LOG_FILE: &str = "bus_demo.csv";
pub const REGISTRY_FILE: &str = "registry.json";
pub const CREDENTIALS_FILE: &str = "sensor_credentials.json";

const IO_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoRow {
    pub tick: usize,
    pub sequence: u64,
    pub frame_bytes: usize,
    pub action: usize,
    pub reward: f64,
    pub done: bool,
}

fn send(stream: &mut UnixStream, frame: &SecureFrame) -> Result<()> {
    stream
        .write_all(&frame.to_bytes())
        .map_err(|e| CliError::Runtime(format!("socket write: {e}")))
}

/// Load the configured registry and credentials, or generate fresh ones.
pub fn credentials(config: &ExperimentConfig, out: &Path) -> Result<(SensorCredentials, SensorRegistry, Vec<PathBuf>)> {
    let b = &config.securebus;
    if let (Some(reg), Some(cred)) = (&b.registry, &b.credentials) {
        let registry = SensorRegistry::load(reg).map_err(|e| CliError::config("securebus.registry", e.to_string()))?;
        let text =
            std::fs::read_to_string(cred).map_err(|e| CliError::config("securebus.credentials", e.to_string()))?;
        let creds: SensorCredentials =
            serde_json::from_str(&text).map_err(|e| CliError::config("securebus.credentials", e.to_string()))?;
        if creds.sensor_id != b.sensor_id || creds.suite_id != b.suite_id {
            return Err(CliError::config(
                "securebus.credentials",
                format!(
                    "credentials are for sensor {} suite {:#04x}, config asks for sensor {} suite {:#04x}",
                    creds.sensor_id, creds.suite_id, b.sensor_id, b.suite_id
                ),
            ));
        }
        return Ok((creds, registry, vec![reg.clone(), cred.clone()]));
    }
    let suite = suite_by_id(b.suite_id).expect("suite checked at load");
    let mut rng = ChaCha8Rng::seed_from_u64(navq::mix_seed(config.rng_seed, &[0xc4ed]));
    let creds = SensorCredentials::generate(suite.as_ref(), b.sensor_id, &mut rng);
    let mut registry = SensorRegistry::new();
    registry.insert(b.sensor_id, creds.registry_entry());
    registry.save(&out.join(REGISTRY_FILE))?;
    let cred_path = out.join(CREDENTIALS_FILE);
    std::fs::write(&cred_path, serde_json::to_string_pretty(&creds).expect("credentials serialize") + "\n")
        .map_err(|e| CliError::io(&cred_path, e))?;
    Ok((creds, registry, Vec::new()))
}

fn sensor_side(
    config: &ExperimentConfig,
    suite: &dyn CryptoSuite,
    creds: &SensorCredentials,
    mut stream: UnixStream,
) -> Result<Vec<DemoRow>> {
    let b = &config.securebus;
    let mut rng = ChaCha8Rng::seed_from_u64(navq::mix_seed(config.rng_seed, &[0x5e, 1]));
    let mut session = SessionState::sensor(b.sensor_id).with_frame_signatures(b.frame_signatures);
    let hello = handshake_hello(&mut session, suite, &creds.signing.secret, b"qnav-demo-sensor", &mut rng)?;
    send(&mut stream, &hello)?;
    let response = read_frame(&mut stream)?;
    handshake_finish(&mut session, suite, &creds.kem.secret, &response)?;
    info!("sensor {}: session established", b.sensor_id);

    let (mut world, mut obs) = WorldState::reset(&config.environment, config.rng_seed)?;
    let mut rows = Vec::new();
    for tick in 0..b.demo_ticks {
        if obs.done {
            break;
        }
        let frame = seal_frame(&mut session, suite, &payload::encode_observation(&obs.frames))?;
        send(&mut stream, &frame)?;
        let reply = read_frame(&mut stream)?;
        let action = payload::decode_action(&open_frame(&mut session, suite, &reply)?)?;
        obs = world.step(action)?;
        rows.push(DemoRow {
            tick,
            sequence: frame.sequence,
            frame_bytes: frame.wire_len(),
            action: action.index(),
            reward: obs.reward,
            done: obs.done,
        });
    }
    send(&mut stream, &close_frame(&mut session, suite)?)?;
    Ok(rows)
}

fn processor_side(
    config: &ExperimentConfig,
    suite: &dyn CryptoSuite,
    registry: &SensorRegistry,
    policy: &Policy,
    mut stream: UnixStream,
) -> Result<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(navq::mix_seed(config.rng_seed, &[0x5e, 2]));
    let mut session = SessionState::processor().with_frame_signatures(config.securebus.frame_signatures);
    let hello = read_frame(&mut stream)?;
    let response = handshake_respond(&mut session, suite, &hello, registry, &mut rng)?;
    send(&mut stream, &response)?;
    let mut decisions = 0;
    loop {
        let frame = read_frame(&mut stream)?;
        match frame.msg_type {
            MsgType::Data => {
                let frames = payload::decode_observation(&open_frame(&mut session, suite, &frame)?)?;
                let action = policy.greedy_action(&frames)?;
                send(&mut stream, &seal_frame(&mut session, suite, &payload::encode_action(action))?)?;
                decisions += 1;
            }
            MsgType::Close => {
                accept_close(&mut session, suite, &frame)?;
                return Ok(decisions);
            }
            other => return Err(CliError::Runtime(format!("unexpected {other:?} frame from sensor"))),
        }
    }
}

pub fn cmd_bus_demo(config: &ExperimentConfig, out: &Path, policy: &Policy, checkpoint: Option<&Path>) -> Result<Vec<DemoRow>> {
    ensure_dir(out)?;
    let suite = suite_by_id(config.securebus.suite_id).expect("suite checked at load");
    let (creds, registry, inputs) = credentials(config, out)?;
    let (a, b) = UnixStream::pair().map_err(|e| CliError::Runtime(format!("socket pair: {e}")))?;
    for s in [&a, &b] {
        s.set_read_timeout(Some(IO_TIMEOUT))
            .map_err(|e| CliError::Runtime(format!("socket timeout: {e}")))?;
    }

    let (rows, decisions) = std::thread::scope(|scope| {
        let sensor = scope.spawn(|| sensor_side(config, suite.as_ref(), &creds, a));
        let processed = processor_side(config, suite.as_ref(), &registry, policy, b);
        let rows = sensor.join().expect("sensor thread panicked");
        match (rows, processed) {
            (Ok(r), Ok(d)) => Ok((r, d)),
            (Err(e), _) | (_, Err(e)) => Err(e),
        }
    })?;
    info!(
        "processor made {decisions} decisions for sensor {}; total reward {:.2}",
        config.securebus.sensor_id,
        rows.iter().map(|r| r.reward).sum::<f64>()
    );

    write_csv(&out.join(LOG_FILE), &rows)?;
    let mut manifest = Manifest::new("bus-demo", config);
    for p in inputs.iter().map(PathBuf::as_path).chain(checkpoint) {
        manifest.input(p)?;
    }
    manifest.output(LOG_FILE);
    if config.securebus.registry.is_none() {
        manifest.output(REGISTRY_FILE);
        manifest.output(CREDENTIALS_FILE);
    }
    manifest.write(out)?;
    Ok(rows)
}
