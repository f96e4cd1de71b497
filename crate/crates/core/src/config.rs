//! Installation configuration, loaded from TOML.
//!
//! Every key is optional; omitted keys take their defaults and unknown keys
//! are rejected. See `README.md` for the full schema.

use serde::{Deserialize, Serialize};

use crate::actuation::{ActuatorLimits, ServoCalibration};
use crate::error::{Error, Result};
use crate::occupancy::OccupancyParams;
use crate::protocol::{DEFAULT_FAILSAFE_TIMEOUT_MS, MAX_CHANNELS};
use crate::vision::{DetectionParams, MIN_FRAME_DIM};
use crate::wave::WaveParams;

pub const TICK_HZ_RANGE: std::ops::RangeInclusive<u32> = 10..=120;
pub const DEFAULT_BAUD: u32 = 115_200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    pub tick_hz: u32,
    pub n_regions: usize,
    pub m_panels: usize,
    pub vision: VisionConfig,
    pub occupancy: OccupancyParams,
    pub wave: WaveParams,
    pub actuator: ActuatorLimits,
    /// One calibration per panel; left empty, it is filled with defaults.
    pub servos: Vec<ServoCalibration>,
    pub device: DeviceConfig,
    pub transport: TransportConfig,
    pub telemetry: TelemetryConfig,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        let m_panels = 8;
        RuntimeConfig {
            tick_hz: 30,
            n_regions: 4,
            m_panels,
            vision: VisionConfig::default(),
            occupancy: OccupancyParams::default(),
            wave: WaveParams::default(),
            actuator: ActuatorLimits::default(),
            servos: vec![ServoCalibration::default(); m_panels],
            device: DeviceConfig::default(),
            transport: TransportConfig::default(),
            telemetry: TelemetryConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisionConfig {
    /// Background learning rate for pixels that match the background.
    pub alpha: f64,
    /// Learning rate for pixels currently in the foreground.
    pub foreground_alpha: f64,
    pub diff_threshold: f64,
    pub min_activity: f64,
    /// Size of synthesized frames.
    pub frame_width: usize,
    pub frame_height: usize,
}

impl Default for VisionConfig {
    fn default() -> Self {
        VisionConfig {
            alpha: 0.02,
            foreground_alpha: 0.001,
            diff_threshold: 40.0,
            min_activity: 0.02,
            frame_width: 160,
            frame_height: 120,
        }
    }
}

impl VisionConfig {
    pub fn detection(&self) -> DetectionParams {
        DetectionParams {
            diff_threshold: self.diff_threshold,
            min_activity: self.min_activity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub failsafe_timeout_ms: u64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            failsafe_timeout_ms: DEFAULT_FAILSAFE_TIMEOUT_MS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TransportConfig {
    /// In-process device model.
    Loopback {},
    /// Serial character device, 8N1.
    Serial {
        path: String,
        #[serde(default = "default_baud")]
        baud: u32,
    },
    /// Append raw frames to a file.
    File { path: String },
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig::Loopback {}
    }
}

fn default_baud() -> u32 {
    DEFAULT_BAUD
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TelemetryConfig {
    pub bind: String,
}

impl Default for TelemetryConfig {
    fn default() -> Self {
        TelemetryConfig {
            bind: "127.0.0.1:8787".to_string(),
        }
    }
}

impl RuntimeConfig {
    /// Parses, fills defaults and validates a TOML document.
    pub fn from_toml(document: &str) -> Result<Self> {
        let mut cfg: RuntimeConfig = toml::from_str(document)
            .map_err(|e| Error::parse_at(document, e.span().map(|s| s.start), e.message().to_string()))?;
        if !document_sets_servos(document) {
            cfg.servos = vec![ServoCalibration::default(); cfg.m_panels];
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn dt(&self) -> f64 {
        1.0 / f64::from(self.tick_hz)
    }

    pub fn validate(&self) -> Result<()> {
        if !TICK_HZ_RANGE.contains(&self.tick_hz) {
            return Err(Error::config(
                "tick_hz",
                format!(
                    "{} outside [{}, {}]",
                    self.tick_hz,
                    TICK_HZ_RANGE.start(),
                    TICK_HZ_RANGE.end()
                ),
            ));
        }
        if self.n_regions < 2 {
            return Err(Error::config("n_regions", "must be >= 2"));
        }
        if self.m_panels < self.n_regions {
            return Err(Error::config(
                "m_panels",
                format!("{} panels cannot show {} regions", self.m_panels, self.n_regions),
            ));
        }
        if self.m_panels > MAX_CHANNELS {
            return Err(Error::config(
                "m_panels",
                format!("at most {MAX_CHANNELS} servos fit in one frame"),
            ));
        }
        self.validate_vision()?;
        self.occupancy.validate()?;
        self.wave.validate(self.dt())?;
        self.actuator.validate()?;
        if self.servos.len() != self.m_panels {
            return Err(Error::config(
                "servos",
                format!("{} servos configured for {} panels", self.servos.len(), self.m_panels),
            ));
        }
        for (i, servo) in self.servos.iter().enumerate() {
            servo.validate().map_err(|e| match e {
                Error::InvalidInput(msg) => Error::config(format!("servos[{i}]"), msg),
                other => other,
            })?;
        }
        if self.device.failsafe_timeout_ms == 0 {
            return Err(Error::config("device.failsafe_timeout_ms", "must be > 0"));
        }
        match &self.transport {
            TransportConfig::Serial { path, baud } => {
                if path.is_empty() {
                    return Err(Error::config("transport.path", "must not be empty"));
                }
                if *baud == 0 {
                    return Err(Error::config("transport.baud", "must be > 0"));
                }
            }
            TransportConfig::File { path } if path.is_empty() => {
                return Err(Error::config("transport.path", "must not be empty"));
            }
            _ => {}
        }
        Ok(())
    }

    fn validate_vision(&self) -> Result<()> {
        let v = &self.vision;
        for (name, rate) in [
            ("vision.alpha", v.alpha),
            ("vision.foreground_alpha", v.foreground_alpha),
        ] {
            if !(rate > 0.0 && rate <= 1.0) {
                return Err(Error::config(name, format!("{rate} outside (0, 1]")));
            }
        }
        if !(v.diff_threshold > 0.0 && v.diff_threshold < 255.0) {
            return Err(Error::config(
                "vision.diff_threshold",
                format!("{} outside (0, 255)", v.diff_threshold),
            ));
        }
        if !(v.min_activity > 0.0 && v.min_activity < 1.0) {
            return Err(Error::config(
                "vision.min_activity",
                format!("{} outside (0, 1)", v.min_activity),
            ));
        }
        if v.frame_width < MIN_FRAME_DIM || v.frame_height < MIN_FRAME_DIM {
            return Err(Error::config(
                "vision.frame_width",
                format!("synthetic frames must be at least {MIN_FRAME_DIM}x{MIN_FRAME_DIM}"),
            ));
        }
        Ok(())
    }

    /// Sets one tunable by dotted name, keeping `self` untouched if the
    /// result would be invalid.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        let mut next = self.clone();
        let as_ms = |v: f64| -> Result<u64> {
            if v.is_finite() && v >= 0.0 && v.fract() == 0.0 {
                Ok(v as u64)
            } else {
                Err(Error::config(
                    name,
                    format!("{v} is not a whole number of milliseconds"),
                ))
            }
        };
        match name {
            "wave.rise_rate" => next.wave.rise_rate = value,
            "wave.decay_rate" => next.wave.decay_rate = value,
            "wave.coupling" => next.wave.coupling = value,
            "wave.ripple_amplitude" => next.wave.ripple_amplitude = value,
            "wave.ripple_frequency" => next.wave.ripple_frequency = value,
            "wave.ripple_wavenumber" => next.wave.ripple_wavenumber = value,
            "occupancy.debounce_ms" => next.occupancy.debounce_ms = as_ms(value)?,
            "occupancy.vacancy_timeout_ms" => next.occupancy.vacancy_timeout_ms = as_ms(value)?,
            "vision.alpha" => next.vision.alpha = value,
            "vision.foreground_alpha" => next.vision.foreground_alpha = value,
            "vision.diff_threshold" => next.vision.diff_threshold = value,
            "vision.min_activity" => next.vision.min_activity = value,
            "actuator.max_speed" => next.actuator.max_speed = value,
            _ => return Err(Error::config(name, "not a tunable parameter")),
        }
        next.validate()?;
        *self = next;
        Ok(())
    }
}

impl RuntimeConfig {
    /// Current value of a tunable, by the same dotted name as [`set_param`](Self::set_param).
    pub fn get_param(&self, name: &str) -> Option<f64> {
        Some(match name {
            "wave.rise_rate" => self.wave.rise_rate,
            "wave.decay_rate" => self.wave.decay_rate,
            "wave.coupling" => self.wave.coupling,
            "wave.ripple_amplitude" => self.wave.ripple_amplitude,
            "wave.ripple_frequency" => self.wave.ripple_frequency,
            "wave.ripple_wavenumber" => self.wave.ripple_wavenumber,
            "occupancy.debounce_ms" => self.occupancy.debounce_ms as f64,
            "occupancy.vacancy_timeout_ms" => self.occupancy.vacancy_timeout_ms as f64,
            "vision.alpha" => self.vision.alpha,
            "vision.foreground_alpha" => self.vision.foreground_alpha,
            "vision.diff_threshold" => self.vision.diff_threshold,
            "vision.min_activity" => self.vision.min_activity,
            "actuator.max_speed" => self.actuator.max_speed,
            _ => return None,
        })
    }
}

pub const TUNABLE_PARAMS: &[&str] = &[
    "wave.rise_rate",
    "wave.decay_rate",
    "wave.coupling",
    "wave.ripple_amplitude",
    "wave.ripple_frequency",
    "wave.ripple_wavenumber",
    "occupancy.debounce_ms",
    "occupancy.vacancy_timeout_ms",
    "vision.alpha",
    "vision.foreground_alpha",
    "vision.diff_threshold",
    "vision.min_activity",
    "actuator.max_speed",
];

fn document_sets_servos(document: &str) -> bool {
    toml::from_str::<toml::Table>(document)
        .map(|t| t.contains_key("servos"))
        .unwrap_or(false)
}

pub fn load_config(document: &str) -> Result<RuntimeConfig> {
    RuntimeConfig::from_toml(document)
}
