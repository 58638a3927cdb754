//! Length-prefixed frames of the classical reconciliation channel.
//!
//! ```text
//! u32 length | u8 type | u32 block_id | u32 seq | payload
//! ```
//!
//! All integers and reals are big-endian. `length` counts every byte after
//! itself. Bit-packed payloads are a `u32` count followed by `ceil(n / 8)`
//! bytes, most significant bit first, with zero padding.

use crate::finite_key::Intensity;
use crate::qudit::BasisName;
use std::io::{self, Read, Write};
use thiserror::Error;

/// Bytes before the payload.
pub const HEADER_LEN: usize = 13;

/// Largest accepted value of the length field.
pub const MAX_FRAME_LEN: u32 = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    BasisAnnouncement = 1,
    IntensityAnnouncement = 2,
    ErrorEstimate = 3,
    BlockCommit = 4,
    SymbolDisclosure = 5,
}

impl MessageType {
    pub fn from_code(code: u8) -> Result<Self, WireError> {
        Ok(match code {
            1 => MessageType::BasisAnnouncement,
            2 => MessageType::IntensityAnnouncement,
            3 => MessageType::ErrorEstimate,
            4 => MessageType::BlockCommit,
            5 => MessageType::SymbolDisclosure,
            other => return Err(WireError::UnknownType(other)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// One bit per index: Z = 0, X = 1.
    Bases(Vec<BasisName>),
    /// One bit per index: μ1 = 0, μ2 = 1.
    Intensities(Vec<Intensity>),
    ErrorEstimate {
        rate: f64,
        size: f64,
    },
    BlockCommit {
        key_length: f64,
        duration: f64,
    },
    /// One byte per sifted symbol.
    Symbols(Vec<u8>),
}

impl Payload {
    pub fn message_type(&self) -> MessageType {
        match self {
            Payload::Bases(_) => MessageType::BasisAnnouncement,
            Payload::Intensities(_) => MessageType::IntensityAnnouncement,
            Payload::ErrorEstimate { .. } => MessageType::ErrorEstimate,
            Payload::BlockCommit { .. } => MessageType::BlockCommit,
            Payload::Symbols(_) => MessageType::SymbolDisclosure,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconciliationMessage {
    pub block_id: u32,
    pub seq: u32,
    pub payload: Payload,
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("length field {declared} does not match {actual} bytes")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("frame length {0} exceeds the limit")]
    TooLarge(u32),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("malformed payload: {0}")]
    Malformed(&'static str),
    #[error("sequence number {got}, expected {expected}")]
    OutOfOrder { expected: u32, got: u32 },
    #[error("block id {got}, expected {expected}")]
    WrongBlock { expected: u32, got: u32 },
    #[error("unexpected {got:?}, expected {expected:?}")]
    UnexpectedType {
        expected: MessageType,
        got: MessageType,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + bits.len().div_ceil(8));
    out.extend_from_slice(&(bits.len() as u32).to_be_bytes());
    for chunk in bits.chunks(8) {
        let mut byte = 0u8;
        for (i, &b) in chunk.iter().enumerate() {
            byte |= (b as u8) << (7 - i);
        }
        out.push(byte);
    }
    out
}

pub fn unpack_bits(bytes: &[u8]) -> Result<Vec<bool>, WireError> {
    let n = read_u32(bytes, 0)? as usize;
    let body = &bytes[4..];
    if body.len() != n.div_ceil(8) {
        return Err(WireError::Malformed(
            "bit count does not match payload size",
        ));
    }
    if !n.is_multiple_of(8) {
        let last = body[body.len() - 1];
        if last & (0xff >> (n % 8)) != 0 {
            return Err(WireError::Malformed("nonzero padding bits"));
        }
    }
    Ok((0..n)
        .map(|i| body[i / 8] >> (7 - i % 8) & 1 == 1)
        .collect())
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32, WireError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("four bytes")))
        .ok_or(WireError::Truncated {
            needed: at + 4,
            available: bytes.len(),
        })
}

fn read_f64_pair(bytes: &[u8]) -> Result<(f64, f64), WireError> {
    if bytes.len() != 16 {
        return Err(WireError::Malformed("expected two 8-byte reals"));
    }
    let a = f64::from_be_bytes(bytes[..8].try_into().expect("eight bytes"));
    let b = f64::from_be_bytes(bytes[8..].try_into().expect("eight bytes"));
    Ok((a, b))
}

fn encode_payload(p: &Payload) -> Vec<u8> {
    match p {
        Payload::Bases(v) => pack_bits(&v.iter().map(|&b| b == BasisName::X).collect::<Vec<_>>()),
        Payload::Intensities(v) => {
            pack_bits(&v.iter().map(|&k| k == Intensity::Mu2).collect::<Vec<_>>())
        }
        Payload::ErrorEstimate { rate: a, size: b }
        | Payload::BlockCommit {
            key_length: a,
            duration: b,
        } => {
            let mut out = Vec::with_capacity(16);
            out.extend_from_slice(&a.to_be_bytes());
            out.extend_from_slice(&b.to_be_bytes());
            out
        }
        Payload::Symbols(v) => {
            let mut out = Vec::with_capacity(4 + v.len());
            out.extend_from_slice(&(v.len() as u32).to_be_bytes());
            out.extend_from_slice(v);
            out
        }
    }
}

fn decode_payload(kind: MessageType, bytes: &[u8]) -> Result<Payload, WireError> {
    Ok(match kind {
        MessageType::BasisAnnouncement => Payload::Bases(
            unpack_bits(bytes)?
                .into_iter()
                .map(|x| if x { BasisName::X } else { BasisName::Z })
                .collect(),
        ),
        MessageType::IntensityAnnouncement => Payload::Intensities(
            unpack_bits(bytes)?
                .into_iter()
                .map(|x| if x { Intensity::Mu2 } else { Intensity::Mu1 })
                .collect(),
        ),
        MessageType::ErrorEstimate => {
            let (rate, size) = read_f64_pair(bytes)?;
            Payload::ErrorEstimate { rate, size }
        }
        MessageType::BlockCommit => {
            let (key_length, duration) = read_f64_pair(bytes)?;
            Payload::BlockCommit {
                key_length,
                duration,
            }
        }
        MessageType::SymbolDisclosure => {
            let n = read_u32(bytes, 0)? as usize;
            if bytes.len() - 4 != n {
                return Err(WireError::Malformed(
                    "symbol count does not match payload size",
                ));
            }
            Payload::Symbols(bytes[4..].to_vec())
        }
    })
}

pub fn encode_message(msg: &ReconciliationMessage) -> Vec<u8> {
    let payload = encode_payload(&msg.payload);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&((HEADER_LEN - 4 + payload.len()) as u32).to_be_bytes());
    out.push(msg.payload.message_type() as u8);
    out.extend_from_slice(&msg.block_id.to_be_bytes());
    out.extend_from_slice(&msg.seq.to_be_bytes());
    out.extend_from_slice(&payload);
    out
}

/// Decodes exactly one frame.
pub fn decode_message(frame: &[u8]) -> Result<ReconciliationMessage, WireError> {
    let declared = read_u32(frame, 0)?;
    if declared > MAX_FRAME_LEN {
        return Err(WireError::TooLarge(declared));
    }
    let declared = declared as usize;
    if declared < HEADER_LEN - 4 {
        return Err(WireError::Malformed("length shorter than header"));
    }
    if frame.len() < 4 + declared {
        return Err(WireError::Truncated {
            needed: 4 + declared,
            available: frame.len(),
        });
    }
    if frame.len() > 4 + declared {
        return Err(WireError::LengthMismatch {
            declared,
            actual: frame.len() - 4,
        });
    }
    let kind = MessageType::from_code(frame[4])?;
    Ok(ReconciliationMessage {
        block_id: read_u32(frame, 5)?,
        seq: read_u32(frame, 9)?,
        payload: decode_payload(kind, &frame[HEADER_LEN..])?,
    })
}

/// Reads frames of one block and enforces consecutive sequence numbers.
pub struct FrameReader<R> {
    inner: R,
    block_id: u32,
    next_seq: u32,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R, block_id: u32) -> Self {
        Self {
            inner,
            block_id,
            next_seq: 0,
        }
    }

    pub fn read_message(&mut self) -> Result<ReconciliationMessage, WireError> {
        let mut len = [0u8; 4];
        self.inner.read_exact(&mut len)?;
        let declared = u32::from_be_bytes(len);
        if declared > MAX_FRAME_LEN {
            return Err(WireError::TooLarge(declared));
        }
        let mut frame = len.to_vec();
        frame.resize(4 + declared as usize, 0);
        self.inner.read_exact(&mut frame[4..])?;
        let msg = decode_message(&frame)?;
        if msg.block_id != self.block_id {
            return Err(WireError::WrongBlock {
                expected: self.block_id,
                got: msg.block_id,
            });
        }
        if msg.seq != self.next_seq {
            return Err(WireError::OutOfOrder {
                expected: self.next_seq,
                got: msg.seq,
            });
        }
        self.next_seq += 1;
        Ok(msg)
    }

    /// Reads the next message and requires its type.
    pub fn expect(&mut self, kind: MessageType) -> Result<Payload, WireError> {
        let msg = self.read_message()?;
        let got = msg.payload.message_type();
        if got != kind {
            return Err(WireError::UnexpectedType {
                expected: kind,
                got,
            });
        }
        Ok(msg.payload)
    }
}

/// Writes frames of one block with consecutive sequence numbers.
pub struct FrameWriter<W> {
    inner: W,
    block_id: u32,
    next_seq: u32,
}

impl<W: Write> FrameWriter<W> {
    pub fn new(inner: W, block_id: u32) -> Self {
        Self {
            inner,
            block_id,
            next_seq: 0,
        }
    }

    /// Starts numbering at `seq`.
    pub fn with_seq(inner: W, block_id: u32, seq: u32) -> Self {
        Self {
            inner,
            block_id,
            next_seq: seq,
        }
    }

    pub fn send(&mut self, payload: Payload) -> Result<(), WireError> {
        let msg = ReconciliationMessage {
            block_id: self.block_id,
            seq: self.next_seq,
            payload,
        };
        self.inner.write_all(&encode_message(&msg))?;
        self.inner.flush()?;
        self.next_seq += 1;
        Ok(())
    }
}
