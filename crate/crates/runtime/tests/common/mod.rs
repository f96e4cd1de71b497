#![allow(dead_code)]

use std::sync::{Arc, Mutex};

use wastive::transport::Transport;
use wastive::Error;
use wastive_core::protocol::{decode, DeviceFrame};

/// Wraps a transport and keeps a copy of every frame it was asked to send.
pub struct Recording<T> {
    pub inner: T,
    pub sent: Arc<Mutex<Vec<Vec<u8>>>>,
}

impl<T> Recording<T> {
    pub fn new(inner: T) -> Self {
        Recording {
            inner,
            sent: Arc::default(),
        }
    }

    pub fn frames(&self) -> Vec<DeviceFrame> {
        self.sent
            .lock()
            .unwrap()
            .iter()
            .flat_map(|b| decode(b).messages)
            .collect()
    }
}

impl<T: Transport> Transport for Recording<T> {
    fn exchange(&mut self, tx: &[u8], now_ms: u64) -> wastive::Result<Vec<u8>> {
        self.sent.lock().unwrap().push(tx.to_vec());
        self.inner.exchange(tx, now_ms)
    }

    fn reopen(&mut self, now_ms: u64) -> wastive::Result<()> {
        self.inner.reopen(now_ms)
    }

    fn describe(&self) -> String {
        format!("recording {}", self.inner.describe())
    }

    fn device_failsafe(&self) -> Option<bool> {
        self.inner.device_failsafe()
    }
}

/// Loopback whose wire is cut between `down_from` and `down_until` (ms):
/// frames are lost while the device keeps running, and reopening fails
/// until the wire is back.
pub struct Flaky<T> {
    pub inner: T,
    pub down_from: u64,
    pub down_until: u64,
    pub now: u64,
    pub reopen_attempts: Arc<Mutex<Vec<u64>>>,
}

impl<T: Transport> Transport for Flaky<T> {
    fn exchange(&mut self, tx: &[u8], now_ms: u64) -> wastive::Result<Vec<u8>> {
        self.now = now_ms;
        if (self.down_from..self.down_until).contains(&now_ms) {
            self.inner.exchange(&[], now_ms)?;
            return Err(Error::Transport("wire cut".into()));
        }
        self.inner.exchange(tx, now_ms)
    }

    fn reopen(&mut self, now_ms: u64) -> wastive::Result<()> {
        self.now = now_ms;
        self.reopen_attempts.lock().unwrap().push(self.now);
        // The device keeps its own time while the host is cut off.
        self.inner.exchange(&[], self.now)?;
        if self.now < self.down_until {
            Err(Error::Transport("still cut".into()))
        } else {
            Ok(())
        }
    }

    fn describe(&self) -> String {
        "flaky".into()
    }

    fn device_failsafe(&self) -> Option<bool> {
        self.inner.device_failsafe()
    }
}
