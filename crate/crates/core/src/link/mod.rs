//! Host/fabric bridge: HDLC-style framing with CRC-16/CCITT-FALSE and the
//! channel table derived from a deployment plan.

mod bridge;
mod frame;

pub use bridge::{Bridge, LinkError, Received, Side, Transmission};
pub use frame::{
    crc16_ccitt_false, decode_stream, encode_frame, Decoded, Frame, FrameError, FrameKind,
    StreamDecoder, StreamError, ESC, MAX_PAYLOAD, SOF,
};
