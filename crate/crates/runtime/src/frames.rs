//! Frame producers feeding the control loop's mailbox.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use wastive_core::vision::Frame;

use crate::mailbox::FrameMailbox;
use crate::Result;

/// Reads every `.pgm` file in `dir`, in file-name order.
pub fn load_pgm_dir(dir: &Path) -> Result<Vec<Frame>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| Ok(Frame::read_pgm(BufReader::new(File::open(p)?), 0)?))
        .collect()
}

/// Plays `frames` into `mailbox` at `fps` on a background thread, looping
/// until `stop` is raised.
pub fn spawn_player(frames: Vec<Frame>, fps: f64, mailbox: FrameMailbox, stop: Arc<AtomicBool>) -> JoinHandle<()> {
    thread::spawn(move || {
        if frames.is_empty() {
            return;
        }
        let period = Duration::from_secs_f64(1.0 / fps);
        let origin = Instant::now();
        for (k, frame) in frames.iter().cycle().enumerate() {
            if stop.load(Ordering::Relaxed) {
                break;
            }
            let due = origin + period * k as u32;
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
            let stamp = origin.elapsed().as_millis() as u64;
            mailbox.put(frame.clone().with_timestamp(stamp));
        }
    })
}
