//! Plaintext carried inside bus Data frames.
//!
//! Observation: `count u8`, then per frame `modality u8 ‖ len u8 ‖
//! timestamp_us u64 LE ‖ len × f64 LE`. Action reply: one byte, the action
//! index.

use qnav_core::environment::Action;
use qnav_core::{Modality, SensorFrame};

use crate::error::{CliError, Result};

fn bad(what: &str) -> CliError {
    CliError::Runtime(format!("malformed observation payload: {what}"))
}

pub fn encode_observation(frames: &[SensorFrame]) -> Vec<u8> {
    let size = 1 + frames.iter().map(|f| 10 + 8 * f.values().len()).sum::<usize>();
    let mut out = Vec::with_capacity(size);
    out.push(u8::try_from(frames.len()).expect("at most 255 frames"));
    for f in frames {
        out.push(f.modality().index() as u8);
        out.push(u8::try_from(f.values().len()).expect("at most 255 components"));
        out.extend_from_slice(&f.timestamp_us().to_le_bytes());
        for v in f.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_observation(bytes: &[u8]) -> Result<Vec<SensorFrame>> {
    let (&count, mut rest) = bytes.split_first().ok_or_else(|| bad("empty"))?;
    let mut frames = Vec::with_capacity(count as usize);
    for _ in 0..count {
        if rest.len() < 10 {
            return Err(bad("truncated frame header"));
        }
        let modality = *Modality::ALL.get(rest[0] as usize).ok_or_else(|| bad("unknown modality"))?;
        let len = rest[1] as usize;
        let timestamp = u64::from_le_bytes(rest[2..10].try_into().expect("8 bytes"));
        rest = &rest[10..];
        if rest.len() < 8 * len {
            return Err(bad("truncated values"));
        }
        let values = rest[..8 * len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        rest = &rest[8 * len..];
        frames.push(SensorFrame::new(modality, values, timestamp)?);
    }
    if !rest.is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok(frames)
}

pub fn encode_action(action: Action) -> Vec<u8> {
    vec![action.index() as u8]
}

pub fn decode_action(bytes: &[u8]) -> Result<Action> {
    match bytes {
        [i] => Action::from_index(*i as usize).ok_or_else(|| CliError::Runtime(format!("unknown action {i}"))),
        _ => Err(CliError::Runtime(format!("action payload of {} bytes", bytes.len()))),
    }
}
