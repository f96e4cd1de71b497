//! Panel height to servo angle and pulse width.
//!
//! The hinged panel's lift is treated as linear in servo angle over a
//! calibrated safe window; calibration endpoints absorb the real mechanism's
//! nonlinearity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PULSE_FLOOR_US: u16 = 500;
pub const PULSE_CEIL_US: u16 = 2500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServoCalibration {
    /// Mechanical safe range, degrees.
    pub angle_min: f64,
    pub angle_max: f64,
    /// Pulse width at `angle_min`, microseconds.
    pub pulse_min: u16,
    /// Pulse width at `angle_max`, microseconds.
    pub pulse_max: u16,
    #[serde(default)]
    pub inverted: bool,
}

impl Default for ServoCalibration {
    fn default() -> Self {
        ServoCalibration {
            angle_min: 10.0,
            angle_max: 80.0,
            pulse_min: 1000,
            pulse_max: 2000,
            inverted: false,
        }
    }
}

impl ServoCalibration {
    pub fn validate(&self) -> Result<()> {
        if !(self.angle_min.is_finite() && self.angle_max.is_finite()) || self.angle_min >= self.angle_max {
            return Err(Error::invalid(format!(
                "angle_min {} must be below angle_max {}",
                self.angle_min, self.angle_max
            )));
        }
        if self.pulse_min == self.pulse_max {
            return Err(Error::invalid("pulse_min and pulse_max must differ"));
        }
        for p in [self.pulse_min, self.pulse_max] {
            if !(PULSE_FLOOR_US..=PULSE_CEIL_US).contains(&p) {
                return Err(Error::invalid(format!(
                    "pulse {p} us outside [{PULSE_FLOOR_US}, {PULSE_CEIL_US}]"
                )));
            }
        }
        Ok(())
    }

    /// Angle at which the panel is fully lowered.
    pub fn rest_angle(&self) -> f64 {
        if self.inverted {
            self.angle_max
        } else {
            self.angle_min
        }
    }

    pub fn pulse_bounds(&self) -> (u16, u16) {
        (self.pulse_min.min(self.pulse_max), self.pulse_min.max(self.pulse_max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorLimits {
    /// Degrees per second.
    pub max_speed: f64,
}

impl Default for ActuatorLimits {
    fn default() -> Self {
        ActuatorLimits { max_speed: 90.0 }
    }
}

impl ActuatorLimits {
    pub fn validate(&self) -> Result<()> {
        if self.max_speed.is_finite() && self.max_speed > 0.0 {
            Ok(())
        } else {
            Err(Error::config("actuator.max_speed", "must be > 0"))
        }
    }
}

pub fn height_to_angle(h: f64, calib: &ServoCalibration) -> Result<f64> {
    if !(0.0..=1.0).contains(&h) {
        return Err(Error::invalid(format!("height {h} outside [0, 1]")));
    }
    let span = calib.angle_max - calib.angle_min;
    let angle = if calib.inverted {
        calib.angle_max - h * span
    } else {
        calib.angle_min + h * span
    };
    // Rounding can land one ulp outside the range.
    Ok(angle.clamp(calib.angle_min, calib.angle_max))
}

/// Moves each angle from `prev` toward `target` by at most `max_speed * dt`.
pub fn slew_limit(prev: &[f64], target: &[f64], dt: f64, limits: &ActuatorLimits) -> Result<Vec<f64>> {
    if prev.len() != target.len() {
        return Err(Error::invalid(format!(
            "angle vectors differ in length: {} vs {}",
            prev.len(),
            target.len()
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    limits.validate()?;
    let max_step = limits.max_speed * dt;
    Ok(prev
        .iter()
        .zip(target)
        .map(|(&p, &t)| slew_one(p, t, max_step))
        .collect())
}

fn slew_one(prev: f64, target: f64, max_step: f64) -> f64 {
    let delta = target - prev;
    if delta.abs() <= max_step {
        return target;
    }
    let mut out = if delta > 0.0 { prev + max_step } else { prev - max_step };
    // Rounding in the addition can overshoot the bound by an ulp.
    while (out - prev).abs() > max_step {
        out = if delta > 0.0 { out.next_down() } else { out.next_up() };
    }
    out
}

/// Linear angle to pulse map, rounded half-up to whole microseconds.
pub fn angle_to_pulse(angle: f64, calib: &ServoCalibration) -> Result<u16> {
    if !(calib.angle_min..=calib.angle_max).contains(&angle) {
        return Err(Error::invalid(format!(
            "angle {angle} outside calibrated range [{}, {}]",
            calib.angle_min, calib.angle_max
        )));
    }
    let frac = (angle - calib.angle_min) / (calib.angle_max - calib.angle_min);
    let p0 = f64::from(calib.pulse_min);
    let p1 = f64::from(calib.pulse_max);
    let raw = p0 + frac * (p1 - p0);
    let (lo, hi) = calib.pulse_bounds();
    let rounded = (raw + 0.5).floor().clamp(f64::from(lo), f64::from(hi));
    Ok(rounded as u16)
}
