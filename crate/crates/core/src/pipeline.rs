//! One control tick: frame in, servo command out.

use crate::actuation::{angle_to_pulse, height_to_angle, slew_limit};
use crate::config::RuntimeConfig;
use crate::error::{Error, Result};
use crate::occupancy::OccupancyState;
use crate::protocol::DeviceFrame;
use crate::vision::{quantize_region, BackgroundModel, Frame, PresenceObservation};
use crate::wave::WaveState;

/// Angles closer than this to the last transmitted command are not re-sent.
pub const IDLE_ANGLE_EPSILON_DEG: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub now_ms: u64,
    pub observation: PresenceObservation,
    /// Region under the centroid this tick, before debouncing.
    pub observed_region: Option<usize>,
    /// Debounced region driving the wave.
    pub region: Option<usize>,
    pub dwell_ms: u64,
    pub base: Vec<f64>,
    pub panels: Vec<f64>,
    pub angles: Vec<f64>,
    pub pulses: Vec<u16>,
    /// Message for the device: `SET_TARGETS`, or `HEARTBEAT` when idle.
    pub message: DeviceFrame,
}

/// Host-side pipeline state: vision, occupancy, wave and actuation.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: RuntimeConfig,
    background: Option<BackgroundModel>,
    occupancy: OccupancyState,
    wave: WaveState,
    angles: Vec<f64>,
    last_sent: Option<Vec<f64>>,
    seq: u8,
}

impl Pipeline {
    /// Builds a pipeline at `start_ms`. With `background` the empty scene is
    /// known up front; otherwise the first frame seen seeds the model.
    pub fn new(config: RuntimeConfig, background: Option<&Frame>, start_ms: u64) -> Result<Self> {
        config.validate()?;
        let angles = config.servos.iter().map(|s| s.rest_angle()).collect();
        Ok(Pipeline {
            background: background.map(BackgroundModel::from_frame),
            occupancy: OccupancyState::new(start_ms),
            wave: WaveState::new(config.n_regions),
            angles,
            last_sent: None,
            seq: 0,
            config,
        })
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.config
    }

    pub fn occupancy(&self) -> &OccupancyState {
        &self.occupancy
    }

    pub fn wave(&self) -> &WaveState {
        &self.wave
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn background(&self) -> Option<&BackgroundModel> {
        self.background.as_ref()
    }

    /// Swaps in new tunables. Layout (regions, panels, servos, tick rate)
    /// cannot change on a running pipeline.
    pub fn set_config(&mut self, config: RuntimeConfig) -> Result<()> {
        config.validate()?;
        let same_layout = config.tick_hz == self.config.tick_hz
            && config.n_regions == self.config.n_regions
            && config.m_panels == self.config.m_panels
            && config.servos == self.config.servos;
        if !same_layout {
            return Err(Error::config(
                "layout",
                "tick rate, regions, panels and servos are fixed while running",
            ));
        }
        self.config = config;
        Ok(())
    }

    /// Forgets the background; `frame` (if any) becomes the new empty scene.
    pub fn reset_background(&mut self, frame: Option<&Frame>) {
        self.background = frame.map(BackgroundModel::from_frame);
    }

    /// Forces the next tick to send `SET_TARGETS` even if the angles are
    /// unchanged, e.g. after the device fell back to its rest pose.
    pub fn resend_targets(&mut self) {
        self.last_sent = None;
    }

    pub fn rest_pulses(&self) -> Vec<u16> {
        self.config
            .servos
            .iter()
            .map(|s| angle_to_pulse(s.rest_angle(), s).expect("rest angle is inside calibration"))
            .collect()
    }

    /// `SET_TARGETS` with every panel lowered, consuming a sequence number.
    pub fn rest_command(&mut self) -> DeviceFrame {
        let frame = DeviceFrame::set_targets(self.seq, &self.rest_pulses())
            .expect("servo count validated against the frame limit");
        self.seq = self.seq.wrapping_add(1);
        frame
    }

    /// Runs one tick at `now_ms` on the latest frame, if one arrived.
    pub fn step(&mut self, frame: Option<&Frame>, now_ms: u64) -> Result<TickOutput> {
        let cfg = &self.config;
        let dt = cfg.dt();

        let observation = match (frame, self.background.as_mut()) {
            (Some(frame), Some(model)) => {
                let obs = model.detect(frame, &cfg.vision.detection())?;
                model.update_selective(
                    frame,
                    cfg.vision.alpha,
                    cfg.vision.foreground_alpha,
                    cfg.vision.diff_threshold,
                )?;
                PresenceObservation {
                    timestamp_ms: now_ms,
                    ..obs
                }
            }
            (Some(frame), None) => {
                self.background = Some(BackgroundModel::from_frame(frame));
                PresenceObservation::vacant(now_ms)
            }
            (None, _) => PresenceObservation::vacant(now_ms),
        };

        let observed_region = observation
            .centroid_x
            .map(|x| quantize_region(x, cfg.n_regions))
            .transpose()?;
        self.occupancy
            .update(&observation, observed_region, now_ms, &cfg.occupancy)?;
        let region = self.occupancy.current_region;

        // The debounced region rises only while someone is actually seen.
        let rising = region.filter(|_| observation.occupied);
        self.wave.step(rising, dt, &cfg.wave)?;
        let panels = self.wave.render(cfg.m_panels, &cfg.wave)?;

        let targets = panels
            .iter()
            .zip(&cfg.servos)
            .map(|(&h, s)| height_to_angle(h, s))
            .collect::<Result<Vec<_>>>()?;
        self.angles = slew_limit(&self.angles, &targets, dt, &cfg.actuator)?;
        let pulses = self
            .angles
            .iter()
            .zip(&cfg.servos)
            .map(|(&a, s)| angle_to_pulse(a, s))
            .collect::<Result<Vec<_>>>()?;

        let idle = self.last_sent.as_ref().is_some_and(|sent| {
            sent.iter()
                .zip(&self.angles)
                .all(|(a, b)| (a - b).abs() <= IDLE_ANGLE_EPSILON_DEG)
        });
        let message = if idle {
            DeviceFrame::heartbeat(self.seq)
        } else {
            self.last_sent = Some(self.angles.clone());
            DeviceFrame::set_targets(self.seq, &pulses)?
        };
        self.seq = self.seq.wrapping_add(1);

        Ok(TickOutput {
            now_ms,
            observation,
            observed_region,
            region,
            dwell_ms: self.occupancy.dwell_ms,
            base: self.wave.base.clone(),
            panels,
            angles: self.angles.clone(),
            pulses,
            message,
        })
    }
}
