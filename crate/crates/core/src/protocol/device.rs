use super::codec::{Decoder, DeviceFrame, MsgType};

pub const DEFAULT_FAILSAFE_TIMEOUT_MS: u64 = 500;
/// A partial frame older than this is abandoned.
pub const INTERBYTE_TIMEOUT_MS: u64 = 10;

/// Behavioral reference of the servo controller's receive loop.
///
/// Time is supplied by the caller on every step, so the model is fully
/// deterministic.
#[derive(Debug, Clone)]
pub struct DeviceModel {
    current_pulses: Vec<u16>,
    rest_pulses: Vec<u16>,
    last_valid_rx_ms: u64,
    failsafe_engaged: bool,
    failsafe_timeout_ms: u64,
    decoder: Decoder,
    last_rx_ms: u64,
    tx_seq: u8,
    failsafe_count: u64,
}

impl DeviceModel {
    /// Powers up at `now_ms` holding the rest pose.
    pub fn new(rest_pulses: Vec<u16>, failsafe_timeout_ms: u64, now_ms: u64) -> Self {
        DeviceModel {
            current_pulses: rest_pulses.clone(),
            rest_pulses,
            last_valid_rx_ms: now_ms,
            failsafe_engaged: false,
            failsafe_timeout_ms,
            decoder: Decoder::new(),
            last_rx_ms: now_ms,
            tx_seq: 0,
            failsafe_count: 0,
        }
    }

    pub fn current_pulses(&self) -> &[u16] {
        &self.current_pulses
    }

    pub fn rest_pulses(&self) -> &[u16] {
        &self.rest_pulses
    }

    pub fn failsafe_engaged(&self) -> bool {
        self.failsafe_engaged
    }

    pub fn last_valid_rx_ms(&self) -> u64 {
        self.last_valid_rx_ms
    }

    pub fn failsafe_timeout_ms(&self) -> u64 {
        self.failsafe_timeout_ms
    }

    /// Number of times the watchdog has fired.
    pub fn failsafe_count(&self) -> u64 {
        self.failsafe_count
    }

    pub fn garbage_bytes(&self) -> usize {
        self.decoder.skipped()
    }

    /// Feeds received bytes, runs the watchdog at `now_ms` and returns the
    /// bytes the device transmits in response.
    pub fn step(&mut self, rx: &[u8], now_ms: u64) -> Vec<u8> {
        let mut tx = Vec::new();
        let mut frames = Vec::new();
        if self.decoder.pending() > 0 && now_ms.saturating_sub(self.last_rx_ms) > INTERBYTE_TIMEOUT_MS {
            frames = self.decoder.flush();
        }
        if !rx.is_empty() {
            self.last_rx_ms = now_ms;
        }
        frames.extend(self.decoder.push(rx));
        for frame in frames {
            match frame.msg_type {
                MsgType::SetTargets => {
                    let Some(pulses) = frame.pulses() else { continue };
                    // A frame for a different servo count is not for us.
                    if pulses.len() != self.rest_pulses.len() {
                        continue;
                    }
                    self.current_pulses = pulses;
                    self.mark_valid(now_ms);
                    tx.extend(self.reply(MsgType::Ack, Some(frame.seq)));
                }
                MsgType::Heartbeat => self.mark_valid(now_ms),
                // Device-to-host types are never addressed to the device.
                MsgType::Ack | MsgType::FailsafeTriggered => {}
            }
        }

        if !self.failsafe_engaged && now_ms.saturating_sub(self.last_valid_rx_ms) > self.failsafe_timeout_ms {
            self.failsafe_engaged = true;
            self.failsafe_count += 1;
            self.current_pulses.clone_from(&self.rest_pulses);
            tx.extend(self.reply(MsgType::FailsafeTriggered, None));
        }
        tx
    }

    fn mark_valid(&mut self, now_ms: u64) {
        self.last_valid_rx_ms = now_ms;
        self.failsafe_engaged = false;
    }

    fn reply(&mut self, msg_type: MsgType, echo: Option<u8>) -> Vec<u8> {
        let frame = DeviceFrame {
            msg_type,
            seq: self.tx_seq,
            payload: echo.into_iter().collect(),
        };
        self.tx_seq = self.tx_seq.wrapping_add(1);
        frame.to_bytes()
    }
}
