//! Portable text checkpoint for circuit angles and attention weights.
//!
//! ```text
//! qnav-checkpoint 1
//! depth 3
//! qubits 5
//! thetas <depth*qubits values, row-major by layer>
//! attention lidar <values...>
//! attention radar <values...>
//! attention camera <values...>
//! attention gps <values...>
//! attention weather <values...>
//! attention_trainable true
//! ```
//!
//! One record per line, fields separated by single spaces, lines terminated
//! by `\n`. Values are decimal floats; writers emit the shortest string that
//! round-trips to the same `f64`. All five attention lines appear, in this
//! order, even when a modality has no components.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::{AttentionWeights, CircuitParams, Modality};

pub const MAGIC: &str = "qnav-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub circuit: CircuitParams,
    pub attention: AttentionWeights,
}

fn push_values(out: &mut String, values: &[f64]) {
    for v in values {
        write!(out, " {v:?}").expect("writing to a String");
    }
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {FORMAT_VERSION}\n");
        writeln!(out, "depth {}", self.circuit.depth()).unwrap();
        writeln!(out, "qubits {}", self.circuit.num_qubits()).unwrap();
        out.push_str("thetas");
        push_values(&mut out, self.circuit.thetas());
        out.push('\n');
        for m in Modality::ALL {
            write!(out, "attention {m}").unwrap();
            push_values(&mut out, self.attention.get(m));
            out.push('\n');
        }
        writeln!(out, "attention_trainable {}", self.attention.trainable).unwrap();
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let mut lines = text.lines().enumerate();
        let mut next = |key: &str| -> Result<(usize, Vec<&str>)> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| bad(format!("missing `{key}` line")))?;
            let fields: Vec<&str> = line.split(' ').collect();
            if fields[0] != key {
                return Err(bad(format!("line {}: expected `{key}`, found `{}`", n + 1, fields[0])));
            }
            Ok((n + 1, fields[1..].to_vec()))
        };
        let floats = |n: usize, fields: &[&str]| -> Result<Vec<f64>> {
            fields
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| bad(format!("line {n}: bad number `{f}`")))
                })
                .collect()
        };
        let single = |n: usize, fields: &[&str]| -> Result<usize> {
            match fields {
                [v] => v.parse().map_err(|_| bad(format!("line {n}: bad integer `{v}`"))),
                _ => Err(bad(format!("line {n}: expected one value"))),
            }
        };

        let (n, version) = next(MAGIC)?;
        if version != [FORMAT_VERSION.to_string().as_str()] {
            return Err(bad(format!("line {n}: unsupported format version {version:?}")));
        }
        let (n, f) = next("depth")?;
        let depth = single(n, &f)?;
        let (n, f) = next("qubits")?;
        let qubits = single(n, &f)?;
        let (n, f) = next("thetas")?;
        let circuit = CircuitParams::new(depth, qubits, floats(n, &f)?)
            .map_err(|e| bad(format!("line {n}: {e}")))?;

        let mut weights: [Vec<f64>; 5] = Default::default();
        for m in Modality::ALL {
            let (n, f) = next("attention")?;
            if f.first() != Some(&m.name()) {
                return Err(bad(format!("line {n}: expected attention for {m}")));
            }
            weights[m.index()] = floats(n, &f[1..])?;
        }
        let (n, f) = next("attention_trainable")?;
        let trainable = match f.as_slice() {
            ["true"] => true,
            ["false"] => false,
            _ => return Err(bad(format!("line {n}: expected true or false"))),
        };
        let attention =
            AttentionWeights::from_vecs(weights, trainable).map_err(|e| bad(e.to_string()))?;
        Ok(Self { circuit, attention })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
