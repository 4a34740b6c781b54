//! Handshake state machine and per-frame sealing.
//!
//! Sensor                                Processor
//!   Hello(nonce, sig) ───────────────▶   verify against registry
//!                     ◀─────────────── KemResponse(ciphertext)
//!   decapsulate                         encapsulate
//!   both: key = H(domain ‖ ss ‖ nonce ‖ H(hello ‖ response))
//!   Data / Close frames under per-direction subkeys

use std::fmt;

use rand_core::CryptoRngCore;
use sha2::{Digest, Sha256};

use crate::error::{BusError, Malformed, Result};
use crate::frame::{frame_nonce, MsgType, SecureFrame, MAGIC, TAG_LEN, VERSION};
use crate::registry::SensorRegistry;
use crate::suite::{CryptoSuite, SymmetricKey};

pub const HANDSHAKE_NONCE_LEN: usize = 32;

const KDF_DOMAIN: &[u8] = b"qnav-securebus/v1/session";
const SENSOR_TO_PROCESSOR: &[u8] = b"qnav-securebus/v1/s2p";
const PROCESSOR_TO_SENSOR: &[u8] = b"qnav-securebus/v1/p2s";
const FRAME_SIG_DOMAIN: &[u8] = b"qnav-securebus/v1/frame";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Sensor,
    Processor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandshakeState {
    Idle,
    HelloSent,
    Established,
    Failed,
}

/// One end of a sensor ↔ processor channel.
#[derive(Clone)]
pub struct SessionState {
    role: Role,
    sensor_id: u16,
    suite_id: u8,
    state: HandshakeState,
    session_key: SymmetricKey,
    send_key: SymmetricKey,
    recv_key: SymmetricKey,
    send_seq: u64,
    recv_seq: u64,
    hello_nonce: [u8; HANDSHAKE_NONCE_LEN],
    hello_wire: Vec<u8>,
    per_frame_signatures: bool,
    /// Signing key on the sensor, verification key on the processor.
    frame_sig_key: Vec<u8>,
}

impl fmt::Debug for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionState")
            .field("role", &self.role)
            .field("sensor_id", &self.sensor_id)
            .field("suite_id", &self.suite_id)
            .field("state", &self.state)
            .field("send_seq", &self.send_seq)
            .field("recv_seq", &self.recv_seq)
            .field("per_frame_signatures", &self.per_frame_signatures)
            .finish_non_exhaustive()
    }
}

fn hash(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Bytes covered by the Hello signature.
pub fn hello_signed_bytes(sensor_id: u16, suite_id: u8, nonce: &[u8; HANDSHAKE_NONCE_LEN]) -> Vec<u8> {
    let mut m = Vec::with_capacity(2 + 1 + 2 + 1 + HANDSHAKE_NONCE_LEN);
    m.extend_from_slice(&MAGIC);
    m.push(VERSION);
    m.extend_from_slice(&sensor_id.to_le_bytes());
    m.push(suite_id);
    m.extend_from_slice(nonce);
    m
}

/// Decoded Hello payload: `nonce ‖ sig_len (u16 LE) ‖ sig ‖ meta`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HelloBody {
    pub nonce: [u8; HANDSHAKE_NONCE_LEN],
    pub signature: Vec<u8>,
    pub meta: Vec<u8>,
}

impl HelloBody {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HANDSHAKE_NONCE_LEN + 2 + self.signature.len() + self.meta.len());
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&(self.signature.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.signature);
        out.extend_from_slice(&self.meta);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, Malformed> {
        let nonce: [u8; HANDSHAKE_NONCE_LEN] = bytes
            .get(..HANDSHAKE_NONCE_LEN)
            .ok_or(Malformed::BadBody("hello nonce"))?
            .try_into()
            .unwrap();
        let rest = &bytes[HANDSHAKE_NONCE_LEN..];
        let len = rest.get(..2).ok_or(Malformed::BadBody("hello signature length"))?;
        let len = u16::from_le_bytes([len[0], len[1]]) as usize;
        let signature = rest.get(2..2 + len).ok_or(Malformed::BadBody("hello signature"))?;
        Ok(Self {
            nonce,
            signature: signature.to_vec(),
            meta: rest[2 + len..].to_vec(),
        })
    }
}

fn subkey(key: &SymmetricKey, label: &[u8]) -> SymmetricKey {
    hash(&[label, key])
}

impl SessionState {
    fn new(role: Role, sensor_id: u16) -> Self {
        Self {
            role,
            sensor_id,
            suite_id: 0,
            state: HandshakeState::Idle,
            session_key: [0; 32],
            send_key: [0; 32],
            recv_key: [0; 32],
            send_seq: 1,
            recv_seq: 0,
            hello_nonce: [0; HANDSHAKE_NONCE_LEN],
            hello_wire: Vec::new(),
            per_frame_signatures: false,
            frame_sig_key: Vec::new(),
        }
    }

    pub fn sensor(sensor_id: u16) -> Self {
        Self::new(Role::Sensor, sensor_id)
    }

    /// Processor end; the sensor id is taken from the incoming Hello.
    pub fn processor() -> Self {
        Self::new(Role::Processor, 0)
    }

    /// Also sign every Data frame sent by the sensor. Both ends must agree.
    pub fn with_frame_signatures(mut self, enabled: bool) -> Self {
        self.per_frame_signatures = enabled;
        self
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn sensor_id(&self) -> u16 {
        self.sensor_id
    }

    pub fn suite_id(&self) -> u8 {
        self.suite_id
    }

    pub fn state(&self) -> HandshakeState {
        self.state
    }

    pub fn session_key(&self) -> &SymmetricKey {
        &self.session_key
    }

    /// Sequence number the next sealed frame will carry.
    pub fn send_seq(&self) -> u64 {
        self.send_seq
    }

    /// Highest sequence accepted so far (0 before any).
    pub fn recv_seq(&self) -> u64 {
        self.recv_seq
    }

    pub fn per_frame_signatures(&self) -> bool {
        self.per_frame_signatures
    }

    #[cfg(test)]
    pub(crate) fn set_send_seq(&mut self, seq: u64) {
        self.send_seq = seq;
    }

    fn expect(&self, state: HandshakeState) -> Result<()> {
        if self.state == state {
            Ok(())
        } else {
            Err(BusError::WrongState { actual: self.state })
        }
    }

    fn establish(&mut self, shared: &[u8; 32], transcript: &[u8; 32]) {
        self.session_key = hash(&[KDF_DOMAIN, shared, &self.hello_nonce, transcript]);
        let s2p = subkey(&self.session_key, SENSOR_TO_PROCESSOR);
        let p2s = subkey(&self.session_key, PROCESSOR_TO_SENSOR);
        (self.send_key, self.recv_key) = match self.role {
            Role::Sensor => (s2p, p2s),
            Role::Processor => (p2s, s2p),
        };
        self.send_seq = 1;
        self.recv_seq = 0;
        self.hello_wire.clear();
        self.state = HandshakeState::Established;
    }

    fn wipe(&mut self, state: HandshakeState) {
        self.session_key = [0; 32];
        self.send_key = [0; 32];
        self.recv_key = [0; 32];
        self.state = state;
    }

    fn frame(&self, msg_type: MsgType, sequence: u64) -> SecureFrame {
        SecureFrame {
            msg_type,
            suite_id: self.suite_id,
            sensor_id: self.sensor_id,
            sequence,
            nonce: frame_nonce(self.sensor_id, sequence),
            payload: Vec::new(),
            tag: None,
        }
    }

    fn next_seq(&mut self) -> Result<u64> {
        if self.send_seq == u64::MAX {
            return Err(BusError::SequenceExhausted);
        }
        let seq = self.send_seq;
        self.send_seq += 1;
        Ok(seq)
    }
}

fn transcript_hash(hello_wire: &[u8], response_wire: &[u8]) -> [u8; 32] {
    hash(&[
        &(hello_wire.len() as u64).to_le_bytes(),
        hello_wire,
        response_wire,
    ])
}

/// Sensor side: emit a signed Hello.
pub fn handshake_hello(
    sensor: &mut SessionState,
    suite: &dyn CryptoSuite,
    sig_secret: &[u8],
    meta: &[u8],
    rng: &mut dyn CryptoRngCore,
) -> Result<SecureFrame> {
    sensor.expect(HandshakeState::Idle)?;
    if sensor.role != Role::Sensor {
        return Err(BusError::WrongState { actual: sensor.state });
    }
    sensor.suite_id = suite.suite_id();
    rng.fill_bytes(&mut sensor.hello_nonce);
    let signed = hello_signed_bytes(sensor.sensor_id, sensor.suite_id, &sensor.hello_nonce);
    let body = HelloBody {
        nonce: sensor.hello_nonce,
        signature: suite.sign(sig_secret, &signed)?,
        meta: meta.to_vec(),
    };
    let mut frame = sensor.frame(MsgType::Hello, 0);
    frame.payload = body.encode();
    sensor.hello_wire = frame.to_bytes();
    if sensor.per_frame_signatures {
        sensor.frame_sig_key = sig_secret.to_vec();
    }
    sensor.state = HandshakeState::HelloSent;
    Ok(frame)
}

/// Processor side: authenticate a Hello and answer with a KEM ciphertext.
///
/// Any failure after the state check leaves the session `Failed`.
pub fn handshake_respond(
    processor: &mut SessionState,
    suite: &dyn CryptoSuite,
    hello: &SecureFrame,
    registry: &SensorRegistry,
    rng: &mut dyn CryptoRngCore,
) -> Result<SecureFrame> {
    processor.expect(HandshakeState::Idle)?;
    if processor.role != Role::Processor {
        return Err(BusError::WrongState { actual: processor.state });
    }
    let result = respond_inner(processor, suite, hello, registry, rng);
    if result.is_err() {
        processor.wipe(HandshakeState::Failed);
    }
    result
}

fn respond_inner(
    processor: &mut SessionState,
    suite: &dyn CryptoSuite,
    hello: &SecureFrame,
    registry: &SensorRegistry,
    rng: &mut dyn CryptoRngCore,
) -> Result<SecureFrame> {
    if hello.msg_type != MsgType::Hello {
        return Err(Malformed::UnexpectedMsgType(hello.msg_type as u8).into());
    }
    if hello.suite_id != suite.suite_id() {
        return Err(BusError::UnsupportedSuite(hello.suite_id));
    }
    let entry = registry
        .get(hello.sensor_id)
        .ok_or(BusError::UnknownSensor(hello.sensor_id))?;
    if entry.suite_id != hello.suite_id {
        return Err(BusError::UnsupportedSuite(hello.suite_id));
    }
    let body = HelloBody::decode(&hello.payload)?;
    let signed = hello_signed_bytes(hello.sensor_id, hello.suite_id, &body.nonce);
    if !suite.verify(&entry.verification_key, &signed, &body.signature) {
        return Err(BusError::SignatureInvalid);
    }

    let (ciphertext, shared) = suite.kem_encapsulate(&entry.kem_public_key, rng)?;
    processor.sensor_id = hello.sensor_id;
    processor.suite_id = hello.suite_id;
    processor.hello_nonce = body.nonce;
    if processor.per_frame_signatures {
        processor.frame_sig_key = entry.verification_key.clone();
    }
    let mut response = processor.frame(MsgType::KemResponse, 0);
    response.payload = ciphertext;
    let transcript = transcript_hash(&hello.to_bytes(), &response.to_bytes());
    processor.establish(&shared, &transcript);
    Ok(response)
}

/// Sensor side: decapsulate the response and derive the session key.
pub fn handshake_finish(
    sensor: &mut SessionState,
    suite: &dyn CryptoSuite,
    kem_secret: &[u8],
    response: &SecureFrame,
) -> Result<()> {
    sensor.expect(HandshakeState::HelloSent)?;
    let result = (|| {
        if response.msg_type != MsgType::KemResponse {
            return Err(Malformed::UnexpectedMsgType(response.msg_type as u8).into());
        }
        if response.suite_id != sensor.suite_id || suite.suite_id() != sensor.suite_id {
            return Err(BusError::UnsupportedSuite(response.suite_id));
        }
        if response.sensor_id != sensor.sensor_id || response.sequence != 0 {
            return Err(Malformed::BadBody("kem response header").into());
        }
        let shared = suite.kem_decapsulate(kem_secret, &response.payload)?;
        let transcript = transcript_hash(&sensor.hello_wire, &response.to_bytes());
        Ok((shared, transcript))
    })();
    match result {
        Ok((shared, transcript)) => {
            sensor.establish(&shared, &transcript);
            Ok(())
        }
        Err(e) => {
            sensor.wipe(HandshakeState::Failed);
            Err(e)
        }
    }
}

fn frame_sig_message(sensor_id: u16, sequence: u64, plaintext: &[u8]) -> Vec<u8> {
    let mut m = Vec::with_capacity(FRAME_SIG_DOMAIN.len() + 10 + plaintext.len());
    m.extend_from_slice(FRAME_SIG_DOMAIN);
    m.extend_from_slice(&sensor_id.to_le_bytes());
    m.extend_from_slice(&sequence.to_le_bytes());
    m.extend_from_slice(plaintext);
    m
}

/// Encrypt one payload into a Data frame.
pub fn seal_frame(
    session: &mut SessionState,
    suite: &dyn CryptoSuite,
    plaintext: &[u8],
) -> Result<SecureFrame> {
    session.expect(HandshakeState::Established)?;
    let seq = session.next_seq()?;
    let mut frame = session.frame(MsgType::Data, seq);

    let signed_inner;
    let inner = if session.per_frame_signatures && session.role == Role::Sensor {
        let sig = suite.sign(
            &session.frame_sig_key,
            &frame_sig_message(session.sensor_id, seq, plaintext),
        )?;
        let mut buf = Vec::with_capacity(2 + sig.len() + plaintext.len());
        buf.extend_from_slice(&(sig.len() as u16).to_le_bytes());
        buf.extend_from_slice(&sig);
        buf.extend_from_slice(plaintext);
        signed_inner = buf;
        &signed_inner[..]
    } else {
        plaintext
    };

    let aad = frame.header_with_len(inner.len());
    let (ciphertext, tag) = suite.aead_seal(&session.send_key, &frame.nonce, &aad, inner)?;
    debug_assert_eq!(ciphertext.len(), inner.len());
    frame.payload = ciphertext;
    frame.tag = Some(tag);
    Ok(frame)
}

/// Authenticate and decrypt a Data frame from the peer.
///
/// The replay check runs before decryption; `recv_seq` only advances on
/// success.
pub fn open_frame(
    session: &mut SessionState,
    suite: &dyn CryptoSuite,
    frame: &SecureFrame,
) -> Result<Vec<u8>> {
    session.expect(HandshakeState::Established)?;
    if frame.msg_type != MsgType::Data {
        return Err(Malformed::UnexpectedMsgType(frame.msg_type as u8).into());
    }
    let tag = frame.tag.ok_or(Malformed::Truncated("tag"))?;
    if frame.sequence <= session.recv_seq {
        return Err(BusError::ReplayDetected {
            sequence: frame.sequence,
            last: session.recv_seq,
        });
    }
    let nonce = frame_nonce(session.sensor_id, frame.sequence);
    let inner = suite.aead_open(&session.recv_key, &nonce, &frame.header_bytes(), &frame.payload, &tag)?;

    let plaintext = if session.per_frame_signatures && session.role == Role::Processor {
        let len = inner.get(..2).ok_or(Malformed::BadBody("frame signature length"))?;
        let len = u16::from_le_bytes([len[0], len[1]]) as usize;
        let sig = inner.get(2..2 + len).ok_or(Malformed::BadBody("frame signature"))?;
        let plaintext = &inner[2 + len..];
        let msg = frame_sig_message(session.sensor_id, frame.sequence, plaintext);
        if !suite.verify(&session.frame_sig_key, &msg, sig) {
            return Err(BusError::SignatureInvalid);
        }
        plaintext.to_vec()
    } else {
        inner
    };
    session.recv_seq = frame.sequence;
    Ok(plaintext)
}

/// Authenticated Close. The payload is an AEAD tag over the header and an
/// empty message; sending it returns the session to `Idle`.
pub fn close_frame(session: &mut SessionState, suite: &dyn CryptoSuite) -> Result<SecureFrame> {
    session.expect(HandshakeState::Established)?;
    let seq = session.next_seq()?;
    let mut frame = session.frame(MsgType::Close, seq);
    let aad = frame.header_with_len(TAG_LEN);
    let (_, tag) = suite.aead_seal(&session.send_key, &frame.nonce, &aad, &[])?;
    frame.payload = tag.to_vec();
    session.wipe(HandshakeState::Idle);
    Ok(frame)
}

/// Verify a peer's Close and return the session to `Idle`.
pub fn accept_close(
    session: &mut SessionState,
    suite: &dyn CryptoSuite,
    frame: &SecureFrame,
) -> Result<()> {
    session.expect(HandshakeState::Established)?;
    if frame.msg_type != MsgType::Close {
        return Err(Malformed::UnexpectedMsgType(frame.msg_type as u8).into());
    }
    if frame.sequence <= session.recv_seq {
        return Err(BusError::ReplayDetected {
            sequence: frame.sequence,
            last: session.recv_seq,
        });
    }
    let tag: [u8; TAG_LEN] = frame
        .payload
        .as_slice()
        .try_into()
        .map_err(|_| Malformed::BadBody("close tag"))?;
    let nonce = frame_nonce(session.sensor_id, frame.sequence);
    suite.aead_open(&session.recv_key, &nonce, &frame.header_bytes(), &[], &tag)?;
    session.wipe(HandshakeState::Idle);
    Ok(())
}

/// Secret material a sensor needs to (re)run the handshake.
#[derive(Clone, Copy)]
pub struct SensorSecrets<'a> {
    pub sig_secret: &'a [u8],
    pub kem_secret: &'a [u8],
}

/// Run a fresh handshake between two established ends and swap in the new
/// keys. Sequence counters restart.
pub fn rotate_keys(
    sensor: &mut SessionState,
    processor: &mut SessionState,
    suite: &dyn CryptoSuite,
    secrets: SensorSecrets<'_>,
    registry: &SensorRegistry,
    rng: &mut dyn CryptoRngCore,
) -> Result<()> {
    sensor.expect(HandshakeState::Established)?;
    processor.expect(HandshakeState::Established)?;
    let mut s = SessionState::sensor(sensor.sensor_id).with_frame_signatures(sensor.per_frame_signatures);
    let mut p = SessionState::processor().with_frame_signatures(processor.per_frame_signatures);
    let hello = handshake_hello(&mut s, suite, secrets.sig_secret, &[], rng)?;
    let response = handshake_respond(&mut p, suite, &hello, registry, rng)?;
    handshake_finish(&mut s, suite, secrets.kem_secret, &response)?;
    *sensor = s;
    *processor = p;
    Ok(())
}
