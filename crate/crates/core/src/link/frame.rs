use std::fmt;

use thiserror::Error;

pub const SOF: u8 = 0x7E;
pub const ESC: u8 = 0x7D;
const ESC_XOR: u8 = 0x20;
pub const MAX_PAYLOAD: usize = 255;
/// channel (2) + kind + seq + len.
const HEADER_LEN: usize = 5;
const CRC_LEN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum FrameKind {
    TopicData = 0x01,
    ServiceRequest = 0x02,
    ServiceResponse = 0x03,
    ChannelConfig = 0x04,
    Ack = 0x05,
}

impl FrameKind {
    pub const ALL: [FrameKind; 5] = [
        FrameKind::TopicData,
        FrameKind::ServiceRequest,
        FrameKind::ServiceResponse,
        FrameKind::ChannelConfig,
        FrameKind::Ack,
    ];

    pub fn from_u8(b: u8) -> Option<FrameKind> {
        FrameKind::ALL.into_iter().find(|k| *k as u8 == b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub channel: u16,
    pub kind: FrameKind,
    pub seq: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(channel: u16, kind: FrameKind, seq: u8, payload: Vec<u8>) -> Frame {
        Frame {
            channel,
            kind,
            seq,
            payload,
        }
    }

    /// Unescaped body: header, payload, crc.
    fn body(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(HEADER_LEN + self.payload.len() + CRC_LEN);
        b.extend_from_slice(&self.channel.to_le_bytes());
        b.push(self.kind as u8);
        b.push(self.seq);
        b.push(self.payload.len() as u8);
        b.extend_from_slice(&self.payload);
        let crc = crc16_ccitt_false(&b);
        b.extend_from_slice(&crc.to_le_bytes());
        b
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("payload of {0} bytes exceeds {MAX_PAYLOAD}")]
    PayloadTooLarge(usize),
}

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor.
pub fn crc16_ccitt_false(data: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &b in data {
        crc ^= (b as u16) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ 0x1021
            } else {
                crc << 1
            };
        }
    }
    crc
}

pub fn encode_frame(f: &Frame) -> Result<Vec<u8>, FrameError> {
    if f.payload.len() > MAX_PAYLOAD {
        return Err(FrameError::PayloadTooLarge(f.payload.len()));
    }
    let body = f.body();
    let mut out = Vec::with_capacity(body.len() + 8);
    out.push(SOF);
    for b in body {
        if b == SOF || b == ESC {
            out.push(ESC);
            out.push(b ^ ESC_XOR);
        } else {
            out.push(b);
        }
    }
    Ok(out)
}

/// In-band decoding problem; `offset` is the position in the input stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StreamError {
    /// Bytes before a start-of-frame were discarded.
    Resync { offset: usize, skipped: usize },
    CrcError {
        offset: usize,
        expected: u16,
        found: u16,
    },
    /// A new start-of-frame arrived before the frame was complete.
    TruncatedFrame { offset: usize },
    BadEscape { offset: usize },
    UnknownKind { offset: usize, kind: u8 },
}

impl fmt::Display for StreamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StreamError::Resync { offset, skipped } => {
                write!(f, "resync at byte {offset}: skipped {skipped} bytes")
            }
            StreamError::CrcError {
                offset,
                expected,
                found,
            } => write!(
                f,
                "crc error in frame at byte {offset}: computed {expected:#06x}, received {found:#06x}"
            ),
            StreamError::TruncatedFrame { offset } => write!(f, "truncated frame at byte {offset}"),
            StreamError::BadEscape { offset } => write!(f, "bad escape in frame at byte {offset}"),
            StreamError::UnknownKind { offset, kind } => {
                write!(f, "unknown frame kind {kind:#04x} at byte {offset}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Decoded {
    pub frames: Vec<Frame>,
    pub errors: Vec<StreamError>,
    /// Trailing bytes of an incomplete frame, starting at its start-of-frame.
    pub remainder: Vec<u8>,
}

enum Attempt {
    Frame(Frame, usize),
    Error(StreamError, usize),
    Incomplete,
}

/// Parses one frame whose SOF is at `start`. On success or error returns the
/// index where scanning should continue.
fn parse_at(bytes: &[u8], start: usize) -> Attempt {
    let mut body = Vec::new();
    let mut i = start + 1;
    let mut need = HEADER_LEN + CRC_LEN;
    while body.len() < need {
        let Some(&b) = bytes.get(i) else {
            return Attempt::Incomplete;
        };
        match b {
            SOF => return Attempt::Error(StreamError::TruncatedFrame { offset: start }, i),
            ESC => {
                let Some(&n) = bytes.get(i + 1) else {
                    return Attempt::Incomplete;
                };
                if n != (SOF ^ ESC_XOR) && n != (ESC ^ ESC_XOR) {
                    // The next SOF (if any) is the resync point.
                    return Attempt::Error(StreamError::BadEscape { offset: start }, i + 1);
                }
                body.push(n ^ ESC_XOR);
                i += 2;
            }
            _ => {
                body.push(b);
                i += 1;
            }
        }
        if body.len() == HEADER_LEN {
            need = HEADER_LEN + body[4] as usize + CRC_LEN;
        }
    }
    let split = body.len() - CRC_LEN;
    let expected = crc16_ccitt_false(&body[..split]);
    let found = u16::from_le_bytes([body[split], body[split + 1]]);
    if expected != found {
        return Attempt::Error(
            StreamError::CrcError {
                offset: start,
                expected,
                found,
            },
            i,
        );
    }
    let Some(kind) = FrameKind::from_u8(body[2]) else {
        return Attempt::Error(
            StreamError::UnknownKind {
                offset: start,
                kind: body[2],
            },
            i,
        );
    };
    Attempt::Frame(
        Frame {
            channel: u16::from_le_bytes([body[0], body[1]]),
            kind,
            seq: body[3],
            payload: body[HEADER_LEN..split].to_vec(),
        },
        i,
    )
}

/// Decodes every complete frame in `bytes`, resynchronizing on SOF after any
/// error. Never fails; problems are reported in [`Decoded::errors`].
pub fn decode_stream(bytes: &[u8]) -> Decoded {
    let mut out = Decoded::default();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != SOF {
            let skip_to = bytes[i..]
                .iter()
                .position(|&b| b == SOF)
                .map_or(bytes.len(), |p| i + p);
            out.errors.push(StreamError::Resync {
                offset: i,
                skipped: skip_to - i,
            });
            i = skip_to;
            continue;
        }
        match parse_at(bytes, i) {
            Attempt::Frame(f, next) => {
                out.frames.push(f);
                i = next;
            }
            Attempt::Error(e, next) => {
                out.errors.push(e);
                // Resume at the next SOF; bytes between are part of the bad frame.
                i = bytes[next..]
                    .iter()
                    .position(|&b| b == SOF)
                    .map_or(bytes.len(), |p| next + p);
            }
            Attempt::Incomplete => {
                out.remainder = bytes[i..].to_vec();
                break;
            }
        }
    }
    out
}

/// Incremental decoder that carries incomplete frames across chunks.
#[derive(Debug, Default)]
pub struct StreamDecoder {
    pending: Vec<u8>,
}

impl StreamDecoder {
    pub fn new() -> StreamDecoder {
        StreamDecoder::default()
    }

    pub fn push(&mut self, chunk: &[u8]) -> Decoded {
        self.pending.extend_from_slice(chunk);
        let mut d = decode_stream(&self.pending);
        self.pending = std::mem::take(&mut d.remainder);
        d
    }

    pub fn pending(&self) -> &[u8] {
        &self.pending
    }
}
