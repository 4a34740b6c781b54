//! ML-KEM-768, ML-DSA-65 and AES-256-GCM.

use aes_gcm::aead::AeadInPlace;
use aes_gcm::{Aes256Gcm, KeyInit};
use ml_dsa::{EncodedSignature, EncodedVerifyingKey, KeyGen, MlDsa65, Signature, VerifyingKey, B32};
use ml_kem::kem::{Decapsulate, Encapsulate};
use ml_kem::{Ciphertext, Encoded, EncodedSizeUser, KemCore, MlKem768};
use rand_core::CryptoRngCore;

use crate::error::{BusError, Result};
use crate::frame::{NONCE_LEN, TAG_LEN};
use crate::suite::{CryptoSuite, KeyPair, SharedSecret, SymmetricKey};

type DecapsulationKey = <MlKem768 as KemCore>::DecapsulationKey;
type EncapsulationKey = <MlKem768 as KemCore>::EncapsulationKey;

const SIG_CONTEXT: &[u8] = b"qnav-securebus";

fn bad_len(what: &str, got: usize) -> BusError {
    BusError::Crypto(format!("{what}: wrong length {got}"))
}

/// Lattice KEM and signatures at NIST category 3.
///
/// Signing keys are stored as their 32-byte seed.
#[derive(Debug, Clone, Copy, Default)]
pub struct PqSuite;

impl PqSuite {
    pub const ID: u8 = 0x02;
}

impl CryptoSuite for PqSuite {
    fn suite_id(&self) -> u8 {
        Self::ID
    }

    fn name(&self) -> &'static str {
        "mlkem768-mldsa65-aes256gcm"
    }

    fn nist_level(&self) -> u8 {
        3
    }

    fn kem_keygen(&self, rng: &mut dyn CryptoRngCore) -> KeyPair {
        let (dk, ek) = MlKem768::generate(&mut &mut *rng);
        KeyPair {
            public: ek.as_bytes().to_vec(),
            secret: dk.as_bytes().to_vec(),
        }
    }

    fn kem_encapsulate(
        &self,
        public: &[u8],
        rng: &mut dyn CryptoRngCore,
    ) -> Result<(Vec<u8>, SharedSecret)> {
        let enc = Encoded::<EncapsulationKey>::try_from(public)
            .map_err(|_| bad_len("ML-KEM encapsulation key", public.len()))?;
        let ek = EncapsulationKey::from_bytes(&enc);
        let (ct, ss) = ek
            .encapsulate(&mut &mut *rng)
            .map_err(|_| BusError::Crypto("ML-KEM encapsulation failed".into()))?;
        Ok((ct.to_vec(), ss.into()))
    }

    fn kem_decapsulate(&self, secret: &[u8], ciphertext: &[u8]) -> Result<SharedSecret> {
        let enc = Encoded::<DecapsulationKey>::try_from(secret)
            .map_err(|_| bad_len("ML-KEM decapsulation key", secret.len()))?;
        let dk = DecapsulationKey::from_bytes(&enc);
        let ct = Ciphertext::<MlKem768>::try_from(ciphertext)
            .map_err(|_| bad_len("ML-KEM ciphertext", ciphertext.len()))?;
        let ss = dk
            .decapsulate(&ct)
            .map_err(|_| BusError::Crypto("ML-KEM decapsulation failed".into()))?;
        Ok(ss.into())
    }

    fn sig_keygen(&self, rng: &mut dyn CryptoRngCore) -> KeyPair {
        let mut seed = B32::default();
        rng.fill_bytes(&mut seed);
        let kp = MlDsa65::key_gen_internal(&seed);
        KeyPair {
            public: kp.verifying_key().encode().to_vec(),
            secret: seed.to_vec(),
        }
    }

    fn sign(&self, secret: &[u8], msg: &[u8]) -> Result<Vec<u8>> {
        let seed = B32::try_from(secret).map_err(|_| bad_len("ML-DSA seed", secret.len()))?;
        let kp = MlDsa65::key_gen_internal(&seed);
        let sig = kp
            .signing_key()
            .sign_deterministic(msg, SIG_CONTEXT)
            .map_err(|e| BusError::Crypto(e.to_string()))?;
        Ok(sig.encode().to_vec())
    }

    fn verify(&self, public: &[u8], msg: &[u8], signature: &[u8]) -> bool {
        let (Ok(vk), Ok(sig)) = (
            EncodedVerifyingKey::<MlDsa65>::try_from(public),
            EncodedSignature::<MlDsa65>::try_from(signature),
        ) else {
            return false;
        };
        let Some(sig) = Signature::<MlDsa65>::decode(&sig) else {
            return false;
        };
        VerifyingKey::<MlDsa65>::decode(&vk).verify_with_context(msg, SIG_CONTEXT, &sig)
    }

    fn aead_seal(
        &self,
        key: &SymmetricKey,
        nonce: &[u8; NONCE_LEN],
        aad: &[u8],
        plaintext: &[u8],
    ) -> Result<(Vec<u8>, [u8; TAG_LEN])> {
        let cipher = Aes256Gcm::new(key.into());
        let mut buf = plaintext.to_vec();
        let tag = cipher
            .encrypt_in_place_detached(nonce.into(), aad, &mut buf)
            .map_err(|_| BusError::Crypto("AES-GCM seal failed".into()))?;
        Ok((buf, tag.into()))
    }

    fn aead_open(
        &self,
        key: &SymmetricKey,
        nonce: &[u8; NONCE_LEN],
        aad: &[u8],
        ciphertext: &[u8],
        tag: &[u8; TAG_LEN],
    ) -> Result<Vec<u8>> {
        let cipher = Aes256Gcm::new(key.into());
        let mut buf = ciphertext.to_vec();
        cipher
            .decrypt_in_place_detached(nonce.into(), aad, &mut buf, tag.into())
            .map_err(|_| BusError::TagMismatch)?;
        Ok(buf)
    }
}
