//! Sensor key registry, read-only once loaded.
//!
//! ```json
//! {
//!   "1": { "verification_key": "ab12…", "kem_public_key": "cd34…", "suite_id": 1 }
//! }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand_core::CryptoRngCore;
use serde::{Deserialize, Serialize};

use crate::error::{BusError, Result};
use crate::suite::{CryptoSuite, KeyPair};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryEntry {
    #[serde(with = "hex")]
    pub verification_key: Vec<u8>,
    #[serde(with = "hex")]
    pub kem_public_key: Vec<u8>,
    pub suite_id: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SensorRegistry {
    entries: BTreeMap<u16, RegistryEntry>,
}

impl SensorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sensor_id: u16, entry: RegistryEntry) -> Option<RegistryEntry> {
        self.entries.insert(sensor_id, entry)
    }

    pub fn get(&self, sensor_id: u16) -> Option<&RegistryEntry> {
        self.entries.get(&sensor_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sensor_ids(&self) -> impl Iterator<Item = u16> + '_ {
        self.entries.keys().copied()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| BusError::Registry(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("registry serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BusError::Registry(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// A sensor's full key material. The secret halves stay on the sensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorCredentials {
    pub sensor_id: u16,
    pub suite_id: u8,
    pub signing: KeyPair,
    pub kem: KeyPair,
}

impl SensorCredentials {
    pub fn generate(suite: &dyn CryptoSuite, sensor_id: u16, rng: &mut dyn CryptoRngCore) -> Self {
        Self {
            sensor_id,
            suite_id: suite.suite_id(),
            signing: suite.sig_keygen(rng),
            kem: suite.kem_keygen(rng),
        }
    }

    pub fn registry_entry(&self) -> RegistryEntry {
        RegistryEntry {
            verification_key: self.signing.public.clone(),
            kem_public_key: self.kem.public.clone(),
            suite_id: self.suite_id,
        }
    }

    pub fn secrets(&self) -> crate::session::SensorSecrets<'_> {
        crate::session::SensorSecrets {
            sig_secret: &self.signing.secret,
            kem_secret: &self.kem.secret,
        }
    }
}
