//! Bit-exact frame format for quantized gradient messages.
//!
//! Layout (all multi-byte header fields little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "BQG1"
//!      4     1  version (1)
//!      5     4  d, number of codes
//!      9     4  s, quantization level
//!     13     4  m, binomial trials
//!     17     4  q numerator
//!     21     4  q denominator
//!     25     8  C, clip bound (IEEE-754 binary64 bits)
//!     33     8  round index
//!     41     4  client id
//!     45     -  payload: d codes, each w = ceil(log2(2s+m+1)) bits,
//!               shifted by +s, packed LSB-first; pad bits zero
//! ```
//!
//! The payload width is the paper-facing communication cost; the 45-byte
//! header is bookkeeping and reported separately.

use crate::codec::{BqConfig, QuantizedMessage};
use crate::error::{BqError, Result};

pub const MAGIC: [u8; 4] = *b"BQG1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 45;

/// Payload width in bits for one coordinate.
pub fn code_width_bits(s: u32, m: u32) -> u32 {
    let alphabet = 2 * u64::from(s) + u64::from(m) + 1;
    64 - (alphabet - 1).leading_zeros()
}

/// Paper-facing cost of one frame: d * ceil(log2(2s+m+1)) payload bits.
pub fn frame_cost_bits(d: u64, s: u32, m: u32) -> u64 {
    d * u64::from(code_width_bits(s, m))
}

/// Fixed header overhead, reported separately from the payload cost.
pub fn header_cost_bits() -> u64 {
    (HEADER_LEN as u64) * 8
}

fn payload_len(d: usize, width: u32) -> usize {
    (d * width as usize + 7) / 8
}

/// Serialize a message. Codes outside the alphabet are rejected.
pub fn encode_frame(msg: &QuantizedMessage, round: u64, client: u32) -> Result<Vec<u8>> {
    let cfg = &msg.config;
    let s = cfg.quant_level();
    let m = cfg.noise_trials();
    let (lo, hi) = cfg.code_range();
    let width = code_width_bits(s, m);
    let d = msg.codes.len();
    let (q_num, q_den) = cfg.noise_prob_rational();

    let mut out = Vec::with_capacity(HEADER_LEN + payload_len(d, width));
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&s.to_le_bytes());
    out.extend_from_slice(&m.to_le_bytes());
    out.extend_from_slice(&q_num.to_le_bytes());
    out.extend_from_slice(&q_den.to_le_bytes());
    out.extend_from_slice(&cfg.clip_bound().to_bits().to_le_bytes());
    out.extend_from_slice(&round.to_le_bytes());
    out.extend_from_slice(&client.to_le_bytes());

    // LSB-first bit packing.
    let mut acc: u64 = 0;
    let mut filled: u32 = 0;
    for (j, &code) in msg.codes.iter().enumerate() {
        if code < lo || code > hi {
            return Err(BqError::InvalidInput(format!(
                "code {code} at index {j} outside alphabet [{lo}, {hi}]"
            )));
        }
        let shifted = (code + i64::from(s)) as u64;
        acc |= shifted << filled;
        filled += width;
        while filled >= 8 {
            out.push((acc & 0xff) as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push((acc & 0xff) as u8);
    }
    Ok(out)
}

/// A decoded frame with its transport metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub message: QuantizedMessage,
    pub round: u64,
    pub client: u32,
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

/// Decode one frame from the front of `bytes`, returning it and the number
/// of bytes consumed (for trace streams of concatenated frames).
pub fn read_frame(bytes: &[u8]) -> Result<(Frame, usize)> {
    if bytes.len() < HEADER_LEN {
        return Err(BqError::CorruptMessage(format!(
            "truncated header: {} bytes",
            bytes.len()
        )));
    }
    if bytes[0..4] != MAGIC {
        return Err(BqError::UnsupportedFormat(format!(
            "bad magic {:02x?}",
            &bytes[0..4]
        )));
    }
    if bytes[4] != VERSION {
        return Err(BqError::UnsupportedFormat(format!(
            "unsupported version {}",
            bytes[4]
        )));
    }
    let d = read_u32(bytes, 5) as usize;
    let s = read_u32(bytes, 9);
    let m = read_u32(bytes, 13);
    let q_num = read_u32(bytes, 17);
    let q_den = read_u32(bytes, 21);
    let clip = f64::from_bits(read_u64(bytes, 25));
    let round = read_u64(bytes, 33);
    let client = read_u32(bytes, 41);

    let config = BqConfig::new(clip, s, m)
        .and_then(|c| c.with_noise_prob(q_num, q_den))
        .map_err(|e| BqError::CorruptMessage(format!("invalid header config: {e}")))?;

    let width = code_width_bits(s, m);
    let plen = payload_len(d, width);
    let total = HEADER_LEN + plen;
    if bytes.len() < total {
        return Err(BqError::CorruptMessage(format!(
            "truncated payload: have {}, need {total}",
            bytes.len()
        )));
    }
    let payload = &bytes[HEADER_LEN..total];

    let alphabet = config.alphabet_size();
    let mask: u64 = if width >= 64 { u64::MAX } else { (1u64 << width) - 1 };
    let mut codes = Vec::with_capacity(d);
    let mut acc: u64 = 0;
    let mut filled: u32 = 0;
    let mut next = 0usize;
    for j in 0..d {
        while filled < width {
            acc |= u64::from(payload[next]) << filled;
            next += 1;
            filled += 8;
        }
        let shifted = acc & mask;
        acc >>= width;
        filled -= width;
        if shifted >= alphabet {
            return Err(BqError::CorruptMessage(format!(
                "shifted code {shifted} at index {j} outside alphabet of {alphabet}"
            )));
        }
        codes.push(shifted as i64 - i64::from(s));
    }
    // Residual bits in the accumulator and any untouched tail bytes are pad
    // and must be zero.
    if acc != 0 {
        return Err(BqError::CorruptMessage("nonzero pad bits".into()));
    }
    for &b in &payload[next..] {
        if b != 0 {
            return Err(BqError::CorruptMessage("nonzero pad bytes".into()));
        }
    }
    Ok((
        Frame {
            message: QuantizedMessage { codes, config },
            round,
            client,
        },
        total,
    ))
}

/// Decode a frame that must occupy the whole buffer.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame> {
    let (frame, consumed) = read_frame(bytes)?;
    if consumed != bytes.len() {
        return Err(BqError::CorruptMessage(format!(
            "{} trailing bytes after frame",
            bytes.len() - consumed
        )));
    }
    Ok(frame)
}

/// Decode a trace stream of concatenated frames.
pub fn read_all_frames(mut bytes: &[u8]) -> Result<Vec<Frame>> {
    let mut frames = Vec::new();
    while !bytes.is_empty() {
        let (frame, consumed) = read_frame(bytes)?;
        frames.push(frame);
        bytes = &bytes[consumed..];
    }
    Ok(frames)
}
