//! Host to servo-controller serial protocol.
//!
//! ```text
//! +------+------+-----+-----+-------------+-------+
//! | 0xAA | type | seq | len | payload ... | crc-8 |
//! +------+------+-----+-----+-------------+-------+
//! ```
//!
//! The CRC covers `type`, `seq`, `len` and the payload (poly 0x07, init 0x00,
//! MSB first, no final xor). `SET_TARGETS` carries one little-endian `u16`
//! pulse width per servo.

mod codec;
mod crc;
mod device;

pub use codec::{decode, encode, DecodeOutcome, Decoder, DeviceFrame, MsgType};
pub use crc::crc8;
pub use device::{DeviceModel, DEFAULT_FAILSAFE_TIMEOUT_MS, INTERBYTE_TIMEOUT_MS};

pub const SYNC: u8 = 0xAA;
/// Largest payload carried by one frame.
pub const MAX_PAYLOAD: usize = 64;
/// Most servo channels one `SET_TARGETS` frame can address.
pub const MAX_CHANNELS: usize = MAX_PAYLOAD / 2;
/// Bytes around the payload: sync, type, seq, len, crc.
pub const FRAME_OVERHEAD: usize = 5;
