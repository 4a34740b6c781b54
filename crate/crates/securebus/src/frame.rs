//! Bit-exact `SecureFrame` wire format.
//!
//! ```text
//! offset size field
//!      0    2 magic        0x51 0x41
//!      2    1 version      1
//!      3    1 msg_type     0 Hello, 1 KemResponse, 2 Data, 3 Close
//!      4    1 suite_id
//!      5    2 sensor_id    little-endian
//!      7    8 sequence     little-endian
//!     15   12 nonce
//!     27    4 payload_len  little-endian
//!     31    n payload
//!   31+n   16 tag          Data frames only
//! ```

use std::io::Read;

use crate::error::{BusError, Malformed, Result};

pub const MAGIC: [u8; 2] = [0x51, 0x41];
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 31;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
/// Largest accepted payload.
pub const MAX_PAYLOAD: u32 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Hello = 0,
    KemResponse = 1,
    Data = 2,
    Close = 3,
}

impl MsgType {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(MsgType::Hello),
            1 => Some(MsgType::KemResponse),
            2 => Some(MsgType::Data),
            3 => Some(MsgType::Close),
            _ => None,
        }
    }

    pub fn has_tag(self) -> bool {
        self == MsgType::Data
    }
}

/// `sensor_id` (LE) ‖ two zero bytes ‖ `sequence` (LE).
pub fn frame_nonce(sensor_id: u16, sequence: u64) -> [u8; NONCE_LEN] {
    let mut nonce = [0u8; NONCE_LEN];
    nonce[..2].copy_from_slice(&sensor_id.to_le_bytes());
    nonce[4..].copy_from_slice(&sequence.to_le_bytes());
    nonce
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecureFrame {
    pub msg_type: MsgType,
    pub suite_id: u8,
    pub sensor_id: u16,
    pub sequence: u64,
    pub nonce: [u8; NONCE_LEN],
    pub payload: Vec<u8>,
    /// Present exactly on Data frames.
    pub tag: Option<[u8; TAG_LEN]>,
}

impl SecureFrame {
    /// Serialized length.
    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.payload.len() + if self.msg_type.has_tag() { TAG_LEN } else { 0 }
    }

    /// Header bytes `magic..=payload_len`; the AEAD associated data.
    pub fn header_bytes(&self) -> [u8; HEADER_LEN] {
        self.header_with_len(self.payload.len())
    }

    /// Header as it will read once the payload has `payload_len` bytes.
    pub fn header_with_len(&self, payload_len: usize) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[0..2].copy_from_slice(&MAGIC);
        h[2] = VERSION;
        h[3] = self.msg_type as u8;
        h[4] = self.suite_id;
        h[5..7].copy_from_slice(&self.sensor_id.to_le_bytes());
        h[7..15].copy_from_slice(&self.sequence.to_le_bytes());
        h[15..27].copy_from_slice(&self.nonce);
        h[27..31].copy_from_slice(&(payload_len as u32).to_le_bytes());
        h
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(&self.header_bytes());
        out.extend_from_slice(&self.payload);
        if self.msg_type.has_tag() {
            out.extend_from_slice(&self.tag.unwrap_or([0u8; TAG_LEN]));
        }
        out
    }
}

struct Header {
    msg_type: MsgType,
    suite_id: u8,
    sensor_id: u16,
    sequence: u64,
    nonce: [u8; NONCE_LEN],
    payload_len: usize,
}

impl Header {
    fn body_len(&self) -> usize {
        self.payload_len + if self.msg_type.has_tag() { TAG_LEN } else { 0 }
    }
}

fn field<'a>(bytes: &'a [u8], start: usize, len: usize, name: &'static str) -> Result<&'a [u8], Malformed> {
    bytes.get(start..start + len).ok_or(Malformed::Truncated(name))
}

/// Parse and validate a header prefix.
fn parse_header(bytes: &[u8]) -> Result<Header, Malformed> {
    let magic = field(bytes, 0, 2, "magic")?;
    if magic != MAGIC {
        return Err(Malformed::BadMagic([magic[0], magic[1]]));
    }
    let version = field(bytes, 2, 1, "version")?[0];
    if version != VERSION {
        return Err(Malformed::BadVersion(version));
    }
    let raw_type = field(bytes, 3, 1, "msg_type")?[0];
    let msg_type = MsgType::from_u8(raw_type).ok_or(Malformed::BadMsgType(raw_type))?;
    let suite_id = field(bytes, 4, 1, "suite_id")?[0];
    let sensor_id = u16::from_le_bytes(field(bytes, 5, 2, "sensor_id")?.try_into().unwrap());
    let sequence = u64::from_le_bytes(field(bytes, 7, 8, "sequence")?.try_into().unwrap());
    let nonce: [u8; NONCE_LEN] = field(bytes, 15, NONCE_LEN, "nonce")?.try_into().unwrap();
    let payload_len = u32::from_le_bytes(field(bytes, 27, 4, "payload_len")?.try_into().unwrap());
    if payload_len > MAX_PAYLOAD {
        return Err(Malformed::PayloadTooLong(payload_len));
    }
    Ok(Header {
        msg_type,
        suite_id,
        sensor_id,
        sequence,
        nonce,
        payload_len: payload_len as usize,
    })
}

fn assemble(header: Header, body: &[u8]) -> SecureFrame {
    let (payload, tag) = body.split_at(header.payload_len);
    SecureFrame {
        msg_type: header.msg_type,
        suite_id: header.suite_id,
        sensor_id: header.sensor_id,
        sequence: header.sequence,
        nonce: header.nonce,
        payload: payload.to_vec(),
        tag: if header.msg_type.has_tag() {
            Some(tag.try_into().expect("tag length checked"))
        } else {
            None
        },
    }
}

/// Parse the frame at the start of `bytes`, returning it and its length.
pub fn parse_prefix(bytes: &[u8]) -> Result<(SecureFrame, usize), Malformed> {
    let header = parse_header(bytes)?;
    field(bytes, HEADER_LEN, header.payload_len, "payload")?;
    let tag_len = header.body_len() - header.payload_len;
    if tag_len > 0 {
        field(bytes, HEADER_LEN + header.payload_len, tag_len, "tag")?;
    }
    let total = HEADER_LEN + header.body_len();
    Ok((assemble(header, &bytes[HEADER_LEN..total]), total))
}

/// Parse exactly one frame. Total on arbitrary input.
pub fn parse_frame(bytes: &[u8]) -> Result<SecureFrame, Malformed> {
    let (frame, used) = parse_prefix(bytes)?;
    if used != bytes.len() {
        return Err(Malformed::TrailingBytes(bytes.len() - used));
    }
    Ok(frame)
}

/// Read one frame from a byte stream.
pub fn read_frame<R: Read>(reader: &mut R) -> Result<SecureFrame> {
    let mut header = [0u8; HEADER_LEN];
    reader.read_exact(&mut header)?;
    let parsed = parse_header(&header).map_err(BusError::MalformedFrame)?;
    let mut body = vec![0u8; parsed.body_len()];
    reader.read_exact(&mut body)?;
    Ok(assemble(parsed, &body))
}
