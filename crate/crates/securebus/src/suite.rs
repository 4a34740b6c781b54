//! Pluggable KEM, signature and AEAD primitives.

use std::fmt::Debug;

use hmac::{Hmac, Mac};
use rand_core::CryptoRngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BusError, Result};
use crate::frame::{NONCE_LEN, TAG_LEN};

pub type SharedSecret = [u8; 32];
pub type SymmetricKey = [u8; 32];

/// Raw encoded key material.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPair {
    #[serde(with = "hex")]
    pub public: Vec<u8>,
    #[serde(with = "hex")]
    pub secret: Vec<u8>,
}

impl Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &hex::encode(&self.public))
            .field("secret", &"<redacted>")
            .finish()
    }
}

pub trait CryptoSuite: Debug + Send + Sync {
    fn suite_id(&self) -> u8;
    fn name(&self) -> &'static str;
    /// Claimed NIST security category; 0 for non-cryptographic suites.
    fn nist_level(&self) -> u8;

    fn kem_keygen(&self, rng: &mut dyn CryptoRngCore) -> KeyPair;
    /// Returns `(ciphertext, shared_secret)`.
    fn kem_encapsulate(&self, public: &[u8], rng: &mut dyn CryptoRngCore)
        -> Result<(Vec<u8>, SharedSecret)>;
    fn kem_decapsulate(&self, secret: &[u8], ciphertext: &[u8]) -> Result<SharedSecret>;

    fn sig_keygen(&self, rng: &mut dyn CryptoRngCore) -> KeyPair;
    fn sign(&self, secret: &[u8], msg: &[u8]) -> Result<Vec<u8>>;
    fn verify(&self, public: &[u8], msg: &[u8], signature: &[u8]) -> bool;

    fn aead_seal(
        &self,
        key: &SymmetricKey,
        nonce: &[u8; NONCE_LEN],
        aad: &[u8],
        plaintext: &[u8],
    ) -> Result<(Vec<u8>, [u8; TAG_LEN])>;
    /// Fails with [`BusError::TagMismatch`] on any modification.
    fn aead_open(
        &self,
        key: &SymmetricKey,
        nonce: &[u8; NONCE_LEN],
        aad: &[u8],
        ciphertext: &[u8],
        tag: &[u8; TAG_LEN],
    ) -> Result<Vec<u8>>;
}

/// Suites compiled into this build, by wire id.
pub fn suite_by_id(id: u8) -> Option<Box<dyn CryptoSuite>> {
    match id {
        TestSuite::ID => Some(Box::new(TestSuite)),
        #[cfg(feature = "pq")]
        crate::pq::PqSuite::ID => Some(Box::new(crate::pq::PqSuite)),
        _ => None,
    }
}

pub fn available_suites() -> Vec<u8> {
    (0..=u8::MAX).filter(|&id| suite_by_id(id).is_some()).collect()
}

type HmacSha256 = Hmac<Sha256>;

fn hash(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

fn take32(bytes: &[u8], what: &str) -> Result<[u8; 32]> {
    bytes
        .try_into()
        .map_err(|_| BusError::Crypto(format!("{what}: expected 32 bytes, got {}", bytes.len())))
}

/// Deterministic keyed-hash stand-in for protocol tests.
///
/// Not secure: the KEM ciphertext reveals the shared secret to anyone
/// holding the public key, and signatures are MACs (verification key ==
/// signing key). Signatures still cannot be produced without the key.
#[derive(Debug, Clone, Copy, Default)]
pub struct TestSuite;

impl TestSuite {
    pub const ID: u8 = 0x01;

    fn keystream_xor(key: &SymmetricKey, nonce: &[u8; NONCE_LEN], data: &mut [u8]) {
        for (block, chunk) in data.chunks_mut(32).enumerate() {
            let ks = hash(&[b"qnav-test-ks", key, nonce, &(block as u64).to_le_bytes()]);
            for (d, k) in chunk.iter_mut().zip(ks) {
                *d ^= k;
            }
        }
    }

    fn mac(key: &SymmetricKey, nonce: &[u8; NONCE_LEN], aad: &[u8], ct: &[u8]) -> HmacSha256 {
        let mut mac = HmacSha256::new_from_slice(key).expect("hmac accepts any key length");
        mac.update(nonce);
        mac.update(&(aad.len() as u64).to_le_bytes());
        mac.update(aad);
        mac.update(ct);
        mac
    }
}

impl CryptoSuite for TestSuite {
    fn suite_id(&self) -> u8 {
        Self::ID
    }

    fn name(&self) -> &'static str {
        "test-keyed-hash"
    }

    fn nist_level(&self) -> u8 {
        0
    }

    fn kem_keygen(&self, rng: &mut dyn CryptoRngCore) -> KeyPair {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        KeyPair {
            public: hash(&[b"qnav-test-kem-pk", &secret]).to_vec(),
            secret: secret.to_vec(),
        }
    }

    fn kem_encapsulate(
        &self,
        public: &[u8],
        rng: &mut dyn CryptoRngCore,
    ) -> Result<(Vec<u8>, SharedSecret)> {
        let pk = take32(public, "kem public key")?;
        let mut r = [0u8; 32];
        rng.fill_bytes(&mut r);
        Ok((r.to_vec(), hash(&[b"qnav-test-kem-ss", &pk, &r])))
    }

    fn kem_decapsulate(&self, secret: &[u8], ciphertext: &[u8]) -> Result<SharedSecret> {
        let sk = take32(secret, "kem secret key")?;
        let r = take32(ciphertext, "kem ciphertext")?;
        let pk = hash(&[b"qnav-test-kem-pk", &sk]);
        Ok(hash(&[b"qnav-test-kem-ss", &pk, &r]))
    }

    fn sig_keygen(&self, rng: &mut dyn CryptoRngCore) -> KeyPair {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        KeyPair {
            public: secret.to_vec(),
            secret: secret.to_vec(),
        }
    }

    fn sign(&self, secret: &[u8], msg: &[u8]) -> Result<Vec<u8>> {
        let sk = take32(secret, "signing key")?;
        let mut mac = HmacSha256::new_from_slice(&sk).expect("hmac accepts any key length");
        mac.update(msg);
        Ok(mac.finalize().into_bytes().to_vec())
    }

    fn verify(&self, public: &[u8], msg: &[u8], signature: &[u8]) -> bool {
        let Ok(vk) = take32(public, "verification key") else {
            return false;
        };
        let mut mac = HmacSha256::new_from_slice(&vk).expect("hmac accepts any key length");
        mac.update(msg);
        mac.verify_slice(signature).is_ok()
    }

    fn aead_seal(
        &self,
        key: &SymmetricKey,
        nonce: &[u8; NONCE_LEN],
        aad: &[u8],
        plaintext: &[u8],
    ) -> Result<(Vec<u8>, [u8; TAG_LEN])> {
        let mut ct = plaintext.to_vec();
        Self::keystream_xor(key, nonce, &mut ct);
        let full = Self::mac(key, nonce, aad, &ct).finalize().into_bytes();
        let mut tag = [0u8; TAG_LEN];
        tag.copy_from_slice(&full[..TAG_LEN]);
        Ok((ct, tag))
    }

    fn aead_open(
        &self,
        key: &SymmetricKey,
        nonce: &[u8; NONCE_LEN],
        aad: &[u8],
        ciphertext: &[u8],
        tag: &[u8; TAG_LEN],
    ) -> Result<Vec<u8>> {
        Self::mac(key, nonce, aad, ciphertext)
            .verify_truncated_left(tag)
            .map_err(|_| BusError::TagMismatch)?;
        let mut pt = ciphertext.to_vec();
        Self::keystream_xor(key, nonce, &mut pt);
        Ok(pt)
    }
}
