//! Interactive pulse-width stepping for finding one servo's travel limits.
//!
//! Commands, one per line:
//!
//! ```text
//! +  / -        step the pulse by the current step size
//! +N / -N       step by N microseconds
//! =N            jump to N microseconds
//! step N        change the step size
//! min / max     record the current pulse as the lower / upper limit
//! show          print the current state
//! done          print the calibration entry and finish
//! ```

use std::io::Write;
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::time::Duration;

use wastive_core::actuation::ServoCalibration;
use wastive_core::protocol::DeviceFrame;
use wastive_core::RuntimeConfig;

use crate::clock::Clock;
use crate::transport::Transport;
use crate::Result;

/// Hard travel limits while probing, whatever the configuration says.
pub const PROBE_PULSE_RANGE: (u16, u16) = (500, 2500);
/// Targets are re-sent this often so the device watchdog stays fed.
pub const KEEPALIVE_MS: u64 = 100;

#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Moved(u16),
    Recorded { which: &'static str, pulse: u16 },
    Step(u16),
    Show(String),
    Done(ServoCalibration),
}

#[derive(Debug, Clone)]
pub struct CalibrationSession {
    index: usize,
    calibration: ServoCalibration,
    targets: Vec<u16>,
    step: u16,
    seq: u8,
}

impl CalibrationSession {
    /// Starts probing servo `index` from its configured rest pulse, with
    /// every other servo held at rest.
    pub fn new(config: &RuntimeConfig, index: usize, step: u16) -> Result<Self> {
        let calibration = config.servos.get(index).cloned().ok_or_else(|| {
            wastive_core::Error::config(
                "servo",
                format!("no servo {index}; the panel has {}", config.servos.len()),
            )
        })?;
        let targets = config
            .servos
            .iter()
            .map(|s| wastive_core::actuation::angle_to_pulse(s.rest_angle(), s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CalibrationSession {
            index,
            calibration,
            targets,
            step: step.max(1),
            seq: 0,
        })
    }

    pub fn pulse(&self) -> u16 {
        self.targets[self.index]
    }

    pub fn calibration(&self) -> &ServoCalibration {
        &self.calibration
    }

    fn move_to(&mut self, pulse: i64) -> Reply {
        let (lo, hi) = PROBE_PULSE_RANGE;
        let p = pulse.clamp(i64::from(lo), i64::from(hi)) as u16;
        self.targets[self.index] = p;
        Reply::Moved(p)
    }

    pub fn apply(&mut self, line: &str) -> Result<Reply, String> {
        let line = line.trim();
        let pulse = i64::from(self.pulse());
        let number = |s: &str| s.trim().parse::<i64>().map_err(|_| format!("not a number: {s:?}"));
        Ok(match line {
            "+" => self.move_to(pulse + i64::from(self.step)),
            "-" => self.move_to(pulse - i64::from(self.step)),
            "min" | "max" => {
                let p = self.pulse();
                let which = if line == "min" {
                    self.calibration.pulse_min = p;
                    "pulse_min"
                } else {
                    self.calibration.pulse_max = p;
                    "pulse_max"
                };
                Reply::Recorded { which, pulse: p }
            }
            "show" => Reply::Show(format!(
                "servo {} at {} us, step {} us, pulse_min {}, pulse_max {}",
                self.index, pulse, self.step, self.calibration.pulse_min, self.calibration.pulse_max
            )),
            "done" | "q" | "quit" => Reply::Done(self.calibration),
            _ => {
                if let Some(n) = line.strip_prefix("step") {
                    let n = number(n)?;
                    if !(1..=1000).contains(&n) {
                        return Err(format!("step must be 1..=1000, got {n}"));
                    }
                    self.step = n as u16;
                    Reply::Step(self.step)
                } else if let Some(n) = line.strip_prefix('=') {
                    self.move_to(number(n)?)
                } else if let Some(n) = line.strip_prefix('+') {
                    self.move_to(pulse + number(n)?)
                } else if let Some(n) = line.strip_prefix('-') {
                    self.move_to(pulse - number(n)?)
                } else {
                    return Err(format!("unknown command {line:?}"));
                }
            }
        })
    }

    /// Current targets as the next `SET_TARGETS` frame.
    pub fn frame(&mut self) -> Result<Vec<u8>> {
        let bytes = DeviceFrame::set_targets(self.seq, &self.targets)?.to_bytes();
        self.seq = self.seq.wrapping_add(1);
        Ok(bytes)
    }
}

/// Calibration entry for the config file.
pub fn format_entry(index: usize, c: &ServoCalibration) -> String {
    format!(
        "# servo {index}\n[[servos]]\nangle_min = {:?}\nangle_max = {:?}\npulse_min = {}\npulse_max = {}\ninverted = {}\n",
        c.angle_min, c.angle_max, c.pulse_min, c.pulse_max, c.inverted
    )
}

/// Drives a session from `lines` until `done` or end of input, re-sending
/// the targets every [`KEEPALIVE_MS`]. Returns the final calibration.
pub fn run_session(
    session: &mut CalibrationSession,
    transport: &mut impl Transport,
    clock: &mut impl Clock,
    lines: Receiver<String>,
    out: &mut impl Write,
) -> Result<ServoCalibration> {
    transport.exchange(&session.frame()?, clock.now_ms())?;
    writeln!(
        out,
        "probing servo {} at {} us; type + - =N step N min max show done",
        session.index,
        session.pulse()
    )?;
    let result = loop {
        match lines.recv_timeout(Duration::from_millis(KEEPALIVE_MS)) {
            Ok(line) if line.trim().is_empty() => continue,
            Ok(line) => match session.apply(&line) {
                Ok(Reply::Done(c)) => break c,
                Ok(Reply::Moved(p)) => writeln!(out, "{p} us")?,
                Ok(Reply::Recorded { which, pulse }) => writeln!(out, "{which} = {pulse}")?,
                Ok(Reply::Step(s)) => writeln!(out, "step {s} us")?,
                Ok(Reply::Show(s)) => writeln!(out, "{s}")?,
                Err(e) => writeln!(out, "error: {e}")?,
            },
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break session.calibration,
        }
        transport.exchange(&session.frame()?, clock.now_ms())?;
    };
    write!(out, "{}", format_entry(session.index, &result))?;
    Ok(result)
}
