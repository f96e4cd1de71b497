use serde::{Deserialize, Serialize};

use super::{crc8, FRAME_OVERHEAD, MAX_CHANNELS, MAX_PAYLOAD, SYNC};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum MsgType {
    SetTargets = 0x01,
    Heartbeat = 0x02,
    Ack = 0x81,
    FailsafeTriggered = 0x82,
}

impl MsgType {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0x01 => Some(MsgType::SetTargets),
            0x02 => Some(MsgType::Heartbeat),
            0x81 => Some(MsgType::Ack),
            0x82 => Some(MsgType::FailsafeTriggered),
            _ => None,
        }
    }

    /// Whether `len` is a legal payload length for this type.
    pub fn accepts_len(self, len: usize) -> bool {
        match self {
            MsgType::SetTargets => len.is_multiple_of(2) && len <= MAX_PAYLOAD,
            _ => len <= 1,
        }
    }
}

/// One decoded message. The length byte and CRC are implied by the payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceFrame {
    pub msg_type: MsgType,
    pub seq: u8,
    pub payload: Vec<u8>,
}

impl DeviceFrame {
    pub fn new(msg_type: MsgType, seq: u8, payload: Vec<u8>) -> Result<Self> {
        if !msg_type.accepts_len(payload.len()) {
            return Err(Error::invalid(format!(
                "{msg_type:?} cannot carry a {}-byte payload",
                payload.len()
            )));
        }
        Ok(DeviceFrame { msg_type, seq, payload })
    }

    pub fn set_targets(seq: u8, pulses: &[u16]) -> Result<Self> {
        if pulses.len() > MAX_CHANNELS {
            return Err(Error::invalid(format!(
                "{} channels exceed the {MAX_CHANNELS}-channel frame limit",
                pulses.len()
            )));
        }
        let payload = pulses.iter().flat_map(|p| p.to_le_bytes()).collect();
        DeviceFrame::new(MsgType::SetTargets, seq, payload)
    }

    pub fn heartbeat(seq: u8) -> Self {
        DeviceFrame {
            msg_type: MsgType::Heartbeat,
            seq,
            payload: Vec::new(),
        }
    }

    /// Pulse widths carried by a `SET_TARGETS` frame.
    pub fn pulses(&self) -> Option<Vec<u16>> {
        (self.msg_type == MsgType::SetTargets).then(|| {
            self.payload
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect()
        })
    }

    /// Sequence number echoed in an ACK or failsafe payload, if any.
    pub fn echo_seq(&self) -> Option<u8> {
        match self.msg_type {
            MsgType::SetTargets => None,
            _ => self.payload.first().copied(),
        }
    }

    pub fn encoded_len(&self) -> usize {
        FRAME_OVERHEAD + self.payload.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(SYNC);
        out.push(self.msg_type as u8);
        out.push(self.seq);
        out.push(self.payload.len() as u8);
        out.extend_from_slice(&self.payload);
        out.push(crc8(&out[1..]));
        out
    }
}

pub fn encode(msg_type: MsgType, seq: u8, payload: &[u8]) -> Result<Vec<u8>> {
    Ok(DeviceFrame::new(msg_type, seq, payload.to_vec())?.to_bytes())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecodeOutcome {
    pub messages: Vec<DeviceFrame>,
    /// Bytes fully processed; any unconsumed suffix is a possible partial frame.
    pub consumed: usize,
    /// Bytes discarded while hunting for a valid frame.
    pub errors_skipped: usize,
}

enum Scan {
    Frame(DeviceFrame, usize),
    Skip,
    Incomplete,
}

fn scan_at(buf: &[u8]) -> Scan {
    if buf[0] != SYNC {
        return Scan::Skip;
    }
    if buf.len() < 4 {
        return Scan::Incomplete;
    }
    let Some(msg_type) = MsgType::from_byte(buf[1]) else {
        return Scan::Skip;
    };
    let len = buf[3] as usize;
    if !msg_type.accepts_len(len) {
        return Scan::Skip;
    }
    let total = FRAME_OVERHEAD + len;
    if buf.len() < total {
        return Scan::Incomplete;
    }
    if crc8(&buf[1..total - 1]) != buf[total - 1] {
        return Scan::Skip;
    }
    let frame = DeviceFrame {
        msg_type,
        seq: buf[2],
        payload: buf[4..4 + len].to_vec(),
    };
    Scan::Frame(frame, total)
}

/// Extracts every valid frame from `stream`.
///
/// On a bad sync byte, unknown type, illegal length or CRC mismatch the
/// parser drops one byte and rescans for the next sync byte. A frame that
/// is still incomplete at the end of the input is left unconsumed.
pub fn decode(stream: &[u8]) -> DecodeOutcome {
    let mut out = DecodeOutcome::default();
    let mut pos = 0;
    while pos < stream.len() {
        match scan_at(&stream[pos..]) {
            Scan::Frame(frame, n) => {
                out.messages.push(frame);
                pos += n;
            }
            Scan::Skip => {
                out.errors_skipped += 1;
                pos += 1;
            }
            Scan::Incomplete => break,
        }
    }
    out.consumed = pos;
    out
}

/// Streaming wrapper around [`decode`] that keeps partial frames between reads.
#[derive(Debug, Clone, Default)]
pub struct Decoder {
    pending: Vec<u8>,
    skipped: usize,
}

impl Decoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) -> Vec<DeviceFrame> {
        self.pending.extend_from_slice(bytes);
        let outcome = decode(&self.pending);
        self.pending.drain(..outcome.consumed);
        self.skipped += outcome.errors_skipped;
        outcome.messages
    }

    /// Gives up on a partial frame that will never complete: drops its sync
    /// byte, rescans, and repeats until nothing is pending.
    pub fn flush(&mut self) -> Vec<DeviceFrame> {
        let mut frames = Vec::new();
        while !self.pending.is_empty() {
            self.pending.remove(0);
            self.skipped += 1;
            let outcome = decode(&self.pending);
            self.pending.drain(..outcome.consumed);
            self.skipped += outcome.errors_skipped;
            frames.extend(outcome.messages);
        }
        frames
    }

    /// Total garbage bytes skipped so far.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }
}
