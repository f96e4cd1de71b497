use serde::{Deserialize, Serialize};
use wastive_core::protocol::{Decoder, MsgType};

/// First retry delay after a transport failure.
pub const INITIAL_BACKOFF_MS: u64 = 100;
/// Retry delays double up to this ceiling.
pub const MAX_BACKOFF_MS: u64 = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkStatus {
    Up,
    Down,
}

/// Host-side view of the device link, published in every snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSummary {
    pub status: LinkStatus,
    pub transport: String,
    pub frames_sent: u64,
    pub bytes_sent: u64,
    pub acks: u64,
    pub last_ack_seq: Option<u8>,
    pub failsafe_reports: u64,
    pub rx_garbage: u64,
    pub failures: u64,
    pub last_error: Option<String>,
}

/// What one batch of device bytes told us.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RxEvents {
    pub acks: u64,
    pub failsafe_triggered: bool,
}

/// Tracks link health, device replies and the reconnect schedule.
#[derive(Debug)]
pub struct LinkTracker {
    summary: LinkSummary,
    decoder: Decoder,
    failsafe: bool,
    backoff_ms: u64,
    retry_at_ms: u64,
}

impl LinkTracker {
    pub fn new(transport: impl Into<String>) -> Self {
        LinkTracker {
            summary: LinkSummary {
                status: LinkStatus::Up,
                transport: transport.into(),
                frames_sent: 0,
                bytes_sent: 0,
                acks: 0,
                last_ack_seq: None,
                failsafe_reports: 0,
                rx_garbage: 0,
                failures: 0,
                last_error: None,
            },
            decoder: Decoder::new(),
            failsafe: false,
            backoff_ms: INITIAL_BACKOFF_MS,
            retry_at_ms: 0,
        }
    }

    pub fn summary(&self) -> &LinkSummary {
        &self.summary
    }

    pub fn is_up(&self) -> bool {
        self.summary.status == LinkStatus::Up
    }

    /// Failsafe as reported by the device: set by FAILSAFE_TRIGGERED,
    /// cleared by the next ACK.
    pub fn failsafe(&self) -> bool {
        self.failsafe
    }

    pub fn on_sent(&mut self, bytes: usize) {
        self.summary.frames_sent += 1;
        self.summary.bytes_sent += bytes as u64;
    }

    pub fn on_received(&mut self, rx: &[u8]) -> RxEvents {
        let mut events = RxEvents::default();
        for msg in self.decoder.push(rx) {
            match msg.msg_type {
                MsgType::Ack => {
                    events.acks += 1;
                    self.summary.acks += 1;
                    self.summary.last_ack_seq = msg.echo_seq();
                    self.failsafe = false;
                }
                MsgType::FailsafeTriggered => {
                    events.failsafe_triggered = true;
                    self.summary.failsafe_reports += 1;
                    self.failsafe = true;
                }
                MsgType::SetTargets | MsgType::Heartbeat => {}
            }
        }
        self.summary.rx_garbage = self.decoder.skipped() as u64;
        events
    }

    /// Marks the link down and schedules the next reconnect attempt.
    pub fn on_failure(&mut self, error: impl ToString, now_ms: u64) {
        self.summary.status = LinkStatus::Down;
        self.summary.failures += 1;
        self.summary.last_error = Some(error.to_string());
        self.retry_at_ms = now_ms + self.backoff_ms;
        self.backoff_ms = (self.backoff_ms * 2).min(MAX_BACKOFF_MS);
    }

    pub fn retry_due(&self, now_ms: u64) -> bool {
        !self.is_up() && now_ms >= self.retry_at_ms
    }

    pub fn on_reconnected(&mut self) {
        self.summary.status = LinkStatus::Up;
        self.backoff_ms = INITIAL_BACKOFF_MS;
        self.decoder = Decoder::new();
    }
}
