//! Per-region wave dynamics and panel rendering.
//!
//! Each region carries a slow base height in `[0, 1]`. A step raises the
//! occupied region linearly, lowers every other region linearly, spreads
//! height to neighbors with an explicit three-point diffusion stencil and
//! clamps. The ripple is applied only when rendering panel heights, so it
//! never feeds back into the base state.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `coupling * dt` for which explicit diffusion stays stable.
pub const MAX_DIFFUSION_NUMBER: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveParams {
    /// Height units per second gained by the occupied region.
    pub rise_rate: f64,
    /// Height units per second lost by every unoccupied region.
    pub decay_rate: f64,
    /// Neighbor diffusion coefficient, 1/s.
    pub coupling: f64,
    pub ripple_amplitude: f64,
    /// Ripple oscillator frequency, Hz.
    pub ripple_frequency: f64,
    /// Ripple phase advance per panel, radians.
    pub ripple_wavenumber: f64,
}

impl Default for WaveParams {
    fn default() -> Self {
        WaveParams {
            rise_rate: 0.25,
            decay_rate: 0.15,
            coupling: 0.05,
            ripple_amplitude: 0.15,
            ripple_frequency: 0.4,
            ripple_wavenumber: std::f64::consts::FRAC_PI_4,
        }
    }
}

impl WaveParams {
    /// Checks parameter ranges and diffusion stability at time step `dt`.
    pub fn validate(&self, dt: f64) -> Result<()> {
        let fields = [
            ("wave.rise_rate", self.rise_rate),
            ("wave.decay_rate", self.decay_rate),
            ("wave.coupling", self.coupling),
            ("wave.ripple_amplitude", self.ripple_amplitude),
            ("wave.ripple_frequency", self.ripple_frequency),
            ("wave.ripple_wavenumber", self.ripple_wavenumber),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if self.rise_rate <= 0.0 {
            return Err(Error::config("wave.rise_rate", "must be > 0"));
        }
        if self.coupling * dt > MAX_DIFFUSION_NUMBER {
            return Err(Error::config(
                "wave.coupling",
                format!(
                    "coupling * dt = {} exceeds the explicit diffusion limit {MAX_DIFFUSION_NUMBER}",
                    self.coupling * dt
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveState {
    pub base: Vec<f64>,
    /// Ripple oscillator phase in `[0, 2π)`.
    pub phase: f64,
    pub tick: u64,
}

impl WaveState {
    /// Dormant state with `n_regions` flat regions.
    pub fn new(n_regions: usize) -> Self {
        WaveState {
            base: vec![0.0; n_regions],
            phase: 0.0,
            tick: 0,
        }
    }

    pub fn n_regions(&self) -> usize {
        self.base.len()
    }

    /// Advances the wave by `dt` seconds with `occupied` as the visitor's region.
    pub fn step(&mut self, occupied: Option<usize>, dt: f64, params: &WaveParams) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
        }
        params.validate(dt)?;
        if let Some(r) = occupied {
            if r >= self.base.len() {
                return Err(Error::invalid(format!(
                    "region {r} out of range for {} regions",
                    self.base.len()
                )));
            }
        }

        let rise = params.rise_rate * dt;
        let decay = params.decay_rate * dt;
        for (i, b) in self.base.iter_mut().enumerate() {
            *b = if occupied == Some(i) {
                (*b + rise).min(1.0)
            } else {
                (*b - decay).max(0.0)
            };
        }
        diffuse(&mut self.base, params.coupling * dt);
        for b in &mut self.base {
            *b = b.clamp(0.0, 1.0);
        }

        self.phase = (self.phase + TAU * params.ripple_frequency * dt).rem_euclid(TAU);
        if self.phase >= TAU {
            self.phase = 0.0;
        }
        self.tick += 1;
        Ok(())
    }

    /// Panel heights for `m_panels` evenly spaced sections.
    pub fn render(&self, m_panels: usize, params: &WaveParams) -> Result<Vec<f64>> {
        if m_panels < self.base.len() {
            return Err(Error::invalid(format!(
                "{m_panels} panels cannot render {} regions",
                self.base.len()
            )));
        }
        let profile = (0..m_panels)
            .map(|j| {
                let x = (j as f64 + 0.5) / m_panels as f64;
                let local = sample_base(&self.base, x);
                let ripple = params.ripple_amplitude * local * (self.phase + params.ripple_wavenumber * j as f64).sin();
                (local + ripple).clamp(0.0, 1.0)
            })
            .collect();
        Ok(profile)
    }
}

/// One explicit diffusion step with reflective ends; `k` is `coupling * dt`.
///
/// Preserves the sum of `base` up to rounding.
pub fn diffuse(base: &mut [f64], k: f64) {
    if k == 0.0 || base.is_empty() {
        return;
    }
    let n = base.len();
    let old = base.to_vec();
    for i in 0..n {
        let left = old[i.saturating_sub(1)];
        let right = old[(i + 1).min(n - 1)];
        base[i] = old[i] + k * (left + right - 2.0 * old[i]);
    }
}

/// Piecewise-linear interpolation of region heights sampled at region
/// centers `(i + 0.5) / n`, held constant beyond the outermost centers.
pub fn sample_base(base: &[f64], x: f64) -> f64 {
    let n = base.len();
    match n {
        0 => 0.0,
        1 => base[0],
        _ => {
            let pos = x * n as f64 - 0.5;
            if pos <= 0.0 {
                base[0]
            } else if pos >= (n - 1) as f64 {
                base[n - 1]
            } else {
                let i = pos.floor() as usize;
                let t = pos - i as f64;
                base[i] + t * (base[i + 1] - base[i])
            }
        }
    }
}

pub fn step_wave(state: &WaveState, occupied: Option<usize>, dt: f64, params: &WaveParams) -> Result<WaveState> {
    let mut next = state.clone();
    next.step(occupied, dt, params)?;
    Ok(next)
}

pub fn render_profile(state: &WaveState, m_panels: usize, params: &WaveParams) -> Result<Vec<f64>> {
    state.render(m_panels, params)
}
