use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use wastive_core::vision::Frame;

/// Capacity-1, latest-wins frame slot shared between a producer and the
/// control loop. A newer frame replaces an unread one, so a slow consumer
/// never sees a backlog.
#[derive(Debug, Clone, Default)]
pub struct FrameMailbox {
    inner: Arc<Inner>,
}

#[derive(Debug, Default)]
struct Inner {
    slot: Mutex<Option<Frame>>,
    delivered: AtomicU64,
    dropped: AtomicU64,
}

impl FrameMailbox {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `frame`, returning true if an unread frame was discarded.
    pub fn put(&self, frame: Frame) -> bool {
        let replaced = self.inner.slot.lock().unwrap().replace(frame).is_some();
        if replaced {
            self.inner.dropped.fetch_add(1, Ordering::Relaxed);
        }
        replaced
    }

    pub fn take(&self) -> Option<Frame> {
        let frame = self.inner.slot.lock().unwrap().take();
        if frame.is_some() {
            self.inner.delivered.fetch_add(1, Ordering::Relaxed);
        }
        frame
    }

    pub fn delivered(&self) -> u64 {
        self.inner.delivered.load(Ordering::Relaxed)
    }

    /// Frames overwritten before the loop got to them.
    pub fn dropped(&self) -> u64 {
        self.inner.dropped.load(Ordering::Relaxed)
    }
}
