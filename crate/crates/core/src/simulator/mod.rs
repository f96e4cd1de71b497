//! Deterministic end-to-end simulation.
//!
//! A scripted visitor is drawn into synthetic frames that run through the
//! full host pipeline and into the device reference model, one row of
//! trace per tick.

mod scenario;
mod trace;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use scenario::{OccupancyOverrides, ParamOverrides, Scenario, WaveOverrides, Waypoint, SCENARIO_SCHEMA_VERSION};
pub use trace::{export_trace, Trace, TraceRow};

use crate::config::RuntimeConfig;
use crate::error::Result;
use crate::pipeline::{Pipeline, TickOutput};
use crate::protocol::DeviceModel;
use crate::vision::Frame;

pub const BACKGROUND_LUMA: u8 = 30;
pub const VISITOR_LUMA: u8 = 220;
/// Visitor blob width as a fraction of the frame width.
pub const VISITOR_WIDTH_FRACTION: f64 = 0.15;

/// Flat scene with, when `visitor` is set, a full-height bright band of
/// 15% of the frame width centered at that position, clipped at the edges.
pub fn synthesize_frame(visitor: Option<f64>, width: usize, height: usize) -> Result<Frame> {
    let mut pixels = vec![BACKGROUND_LUMA; width * height];
    if let Some(x) = visitor {
        let (start, end) = visitor_columns(x, width);
        for row in pixels.chunks_exact_mut(width) {
            row[start..end].fill(VISITOR_LUMA);
        }
    }
    Frame::new(width, height, pixels, 0)
}

fn visitor_columns(x: f64, width: usize) -> (usize, usize) {
    let blob = (VISITOR_WIDTH_FRACTION * width as f64).round() as i64;
    let center = x.clamp(0.0, 1.0) * width as f64;
    let start = (center - blob as f64 / 2.0).round() as i64;
    let clip = |c: i64| c.clamp(0, width as i64) as usize;
    (clip(start), clip(start + blob))
}

fn add_noise(frame: Frame, rng: &mut ChaCha8Rng, amplitude: u8) -> Result<Frame> {
    let amp = i16::from(amplitude);
    let pixels = frame
        .pixels()
        .iter()
        .map(|&p| (i16::from(p) + rng.gen_range(-amp..=amp)).clamp(0, 255) as u8)
        .collect();
    Frame::new(frame.width(), frame.height(), pixels, frame.timestamp_ms())
}

/// Timestamp of tick `k`, rounded to the nearest millisecond.
pub fn tick_time_ms(tick: u64, tick_hz: u32) -> u64 {
    let hz = u64::from(tick_hz);
    (tick * 1000 + hz / 2) / hz
}

/// Produces the frames a scenario shows the camera, one per tick.
#[derive(Debug, Clone)]
pub struct ScenarioFrames {
    scenario: Scenario,
    tick_hz: u32,
    width: usize,
    height: usize,
    rng: Option<ChaCha8Rng>,
}

impl ScenarioFrames {
    pub fn new(scenario: &Scenario, config: &RuntimeConfig) -> Self {
        ScenarioFrames {
            tick_hz: scenario.tick_hz.unwrap_or(config.tick_hz),
            width: config.vision.frame_width,
            height: config.vision.frame_height,
            rng: (scenario.noise > 0).then(|| ChaCha8Rng::seed_from_u64(scenario.seed)),
            scenario: scenario.clone(),
        }
    }

    /// Number of ticks covering `[0, duration_s]`.
    pub fn tick_count(&self) -> u64 {
        (self.scenario.duration_s * f64::from(self.tick_hz)).round() as u64 + 1
    }

    /// The empty scene used to seed the background.
    pub fn background(&self) -> Result<Frame> {
        synthesize_frame(None, self.width, self.height)
    }

    pub fn frame_at(&mut self, tick: u64) -> Result<Frame> {
        let t_s = tick as f64 / f64::from(self.tick_hz);
        let frame = synthesize_frame(self.scenario.visitor_at(t_s), self.width, self.height)?
            .with_timestamp(tick_time_ms(tick, self.tick_hz));
        match self.rng.as_mut() {
            Some(rng) => add_noise(frame, rng, self.scenario.noise),
            None => Ok(frame),
        }
    }
}

/// Builds the trace row for one tick.
pub fn trace_row(tick: u64, tick_hz: u32, out: &TickOutput, tx_bytes: usize, failsafe: bool) -> TraceRow {
    TraceRow {
        tick,
        t_s: tick as f64 / f64::from(tick_hz),
        occupied: out.observation.occupied,
        centroid_x: out.observation.centroid_x,
        region: out.region,
        dwell_ms: out.dwell_ms,
        base: out.base.clone(),
        panels: out.panels.clone(),
        angles: out.angles.clone(),
        tx_bytes,
        failsafe,
    }
}

/// Runs `scenario` through the pipeline and the device model over loopback.
pub fn run_scenario(scenario: &Scenario, config: &RuntimeConfig) -> Result<Trace> {
    scenario.validate()?;
    let cfg = scenario.effective_config(config)?;
    let mut frames = ScenarioFrames::new(scenario, &cfg);
    let mut pipeline = Pipeline::new(cfg.clone(), Some(&frames.background()?), 0)?;
    let mut device = DeviceModel::new(pipeline.rest_pulses(), cfg.device.failsafe_timeout_ms, 0);
    let mut trace = Trace::new(cfg.n_regions, cfg.m_panels);

    for tick in 0..frames.tick_count() {
        let now_ms = tick_time_ms(tick, cfg.tick_hz);
        let frame = frames.frame_at(tick)?;
        let out = pipeline.step(Some(&frame), now_ms)?;
        let bytes = out.message.to_bytes();
        device.step(&bytes, now_ms);
        trace.rows.push(trace_row(
            tick,
            cfg.tick_hz,
            &out,
            bytes.len(),
            device.failsafe_engaged(),
        ));
    }
    Ok(trace)
}
