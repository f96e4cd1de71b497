use serde::{Deserialize, Serialize};

use crate::config::{RuntimeConfig, TICK_HZ_RANGE};
use crate::error::{Error, Result};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

/// A visitor waypoint. `x = None` means nobody is in front of the installation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveOverrides {
    pub rise_rate: Option<f64>,
    pub decay_rate: Option<f64>,
    pub coupling: Option<f64>,
    pub ripple_amplitude: Option<f64>,
    pub ripple_frequency: Option<f64>,
    pub ripple_wavenumber: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancyOverrides {
    pub debounce_ms: Option<u64>,
    pub vacancy_timeout_ms: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamOverrides {
    pub wave: WaveOverrides,
    pub occupancy: OccupancyOverrides,
}

impl ParamOverrides {
    pub fn apply(&self, cfg: &mut RuntimeConfig) {
        let w = &self.wave;
        let wave = &mut cfg.wave;
        macro_rules! set {
            ($($src:expr => $dst:expr),* $(,)?) => { $(if let Some(v) = $src { $dst = v; })* };
        }
        set! {
            w.rise_rate => wave.rise_rate,
            w.decay_rate => wave.decay_rate,
            w.coupling => wave.coupling,
            w.ripple_amplitude => wave.ripple_amplitude,
            w.ripple_frequency => wave.ripple_frequency,
            w.ripple_wavenumber => wave.ripple_wavenumber,
            self.occupancy.debounce_ms => cfg.occupancy.debounce_ms,
            self.occupancy.vacancy_timeout_ms => cfg.occupancy.vacancy_timeout_ms,
        }
    }
}

/// Scripted visitor trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub duration_s: f64,
    /// Overrides the configured tick rate when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tick_hz: Option<u32>,
    #[serde(default)]
    pub events: Vec<Waypoint>,
    #[serde(default)]
    pub overrides: ParamOverrides,
    /// Seed for luma noise; only used when `noise > 0`.
    #[serde(default)]
    pub seed: u64,
    /// Peak uniform luma noise added to every synthesized frame.
    #[serde(default)]
    pub noise: u8,
}

impl Scenario {
    pub fn new(duration_s: f64, events: Vec<Waypoint>) -> Self {
        Scenario {
            schema_version: SCENARIO_SCHEMA_VERSION,
            name: None,
            duration_s,
            tick_hz: None,
            events,
            overrides: ParamOverrides::default(),
            seed: 0,
            noise: 0,
        }
    }

    /// The canonical two-region walk: dwell at the center of region 1 for
    /// 5 s, cross to the center of region 2 over 1 s, then dwell 5 s.
    pub fn region_walk(n_regions: usize) -> Self {
        let center = |i: usize| (i as f64 + 0.5) / n_regions as f64;
        let mut s = Scenario::new(
            11.0,
            vec![
                Waypoint {
                    t_s: 0.0,
                    x: Some(center(1)),
                },
                Waypoint {
                    t_s: 5.0,
                    x: Some(center(1)),
                },
                Waypoint {
                    t_s: 6.0,
                    x: Some(center(2)),
                },
            ],
        );
        s.name = Some("region-walk".to_string());
        s
    }

    /// Visitor stands at `x` for `dwell_s` seconds, then leaves.
    pub fn dwell(x: f64, dwell_s: f64, duration_s: f64) -> Self {
        Scenario::new(
            duration_s,
            vec![Waypoint { t_s: 0.0, x: Some(x) }, Waypoint { t_s: dwell_s, x: None }],
        )
    }

    pub fn from_toml(document: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(document)
            .map_err(|e| Error::parse_at(document, e.span().map(|s| s.start), e.message().to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCENARIO_SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::config("duration_s", "must be > 0"));
        }
        if let Some(hz) = self.tick_hz {
            if !TICK_HZ_RANGE.contains(&hz) {
                return Err(Error::config("tick_hz", format!("{hz} outside [10, 120]")));
            }
        }
        let mut prev: Option<f64> = None;
        for (i, ev) in self.events.iter().enumerate() {
            if !(ev.t_s.is_finite() && ev.t_s >= 0.0) {
                return Err(Error::config(format!("events[{i}].t_s"), "must be >= 0"));
            }
            if prev.is_some_and(|p| ev.t_s <= p) {
                return Err(Error::config(
                    format!("events[{i}].t_s"),
                    "waypoints must be strictly increasing in time",
                ));
            }
            if let Some(x) = ev.x {
                if !(0.0..=1.0).contains(&x) {
                    return Err(Error::config(format!("events[{i}].x"), "must be in [0, 1]"));
                }
            }
            prev = Some(ev.t_s);
        }
        Ok(())
    }

    /// Visitor position at `t_s`: the latest waypoint is held, and x is
    /// interpolated linearly when both it and the next waypoint are present.
    pub fn visitor_at(&self, t_s: f64) -> Option<f64> {
        let idx = self.events.iter().rposition(|e| e.t_s <= t_s)?;
        let here = self.events[idx];
        let x0 = here.x?;
        match self.events.get(idx + 1) {
            Some(next) => match next.x {
                Some(x1) => {
                    let f = (t_s - here.t_s) / (next.t_s - here.t_s);
                    Some(x0 + f * (x1 - x0))
                }
                None => Some(x0),
            },
            None => Some(x0),
        }
    }

    pub fn effective_config(&self, base: &RuntimeConfig) -> Result<RuntimeConfig> {
        let mut cfg = base.clone();
        if let Some(hz) = self.tick_hz {
            cfg.tick_hz = hz;
        }
        self.overrides.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}
