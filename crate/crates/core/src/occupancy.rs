//! Debounced region occupancy and dwell accounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vision::PresenceObservation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OccupancyParams {
    /// How long a new region must be observed before it replaces the current one.
    pub debounce_ms: u64,
    /// How long without an occupied observation before presence is cleared.
    pub vacancy_timeout_ms: u64,
}

impl Default for OccupancyParams {
    fn default() -> Self {
        OccupancyParams {
            debounce_ms: 300,
            vacancy_timeout_ms: 1500,
        }
    }
}

impl OccupancyParams {
    pub fn validate(&self) -> Result<()> {
        if self.debounce_ms == 0 {
            return Err(Error::config("occupancy.debounce_ms", "must be > 0"));
        }
        if self.vacancy_timeout_ms == 0 {
            return Err(Error::config("occupancy.vacancy_timeout_ms", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancyState {
    pub current_region: Option<usize>,
    pub dwell_ms: u64,
    pub candidate_region: Option<usize>,
    pub candidate_since_ms: u64,
    pub last_occupied_ms: u64,
    pub last_update_ms: u64,
}

impl OccupancyState {
    pub fn new(now_ms: u64) -> Self {
        OccupancyState {
            current_region: None,
            dwell_ms: 0,
            candidate_region: None,
            candidate_since_ms: now_ms,
            last_occupied_ms: now_ms,
            last_update_ms: now_ms,
        }
    }

    pub fn is_vacant(&self) -> bool {
        self.current_region.is_none() && self.dwell_ms == 0
    }

    /// Advances the state to `now_ms` given the latest observation and its
    /// quantized region.
    pub fn update(
        &mut self,
        obs: &PresenceObservation,
        region: Option<usize>,
        now_ms: u64,
        params: &OccupancyParams,
    ) -> Result<()> {
        if now_ms < self.last_update_ms {
            return Err(Error::invalid(format!(
                "time went backwards: {now_ms} ms < {} ms",
                self.last_update_ms
            )));
        }
        let elapsed = now_ms - self.last_update_ms;
        self.last_update_ms = now_ms;

        match region.filter(|_| obs.occupied) {
            Some(r) => {
                self.last_occupied_ms = now_ms;
                if self.current_region == Some(r) {
                    self.dwell_ms += elapsed;
                    self.candidate_region = None;
                } else {
                    if self.candidate_region != Some(r) {
                        self.candidate_region = Some(r);
                        self.candidate_since_ms = now_ms;
                    }
                    if now_ms - self.candidate_since_ms >= params.debounce_ms {
                        self.current_region = Some(r);
                        self.dwell_ms = 0;
                        self.candidate_region = None;
                    }
                }
            }
            None => {
                // A candidate has to be seen without gaps.
                self.candidate_region = None;
                if self.current_region.is_some() && now_ms - self.last_occupied_ms >= params.vacancy_timeout_ms {
                    self.current_region = None;
                    self.dwell_ms = 0;
                }
            }
        }
        Ok(())
    }
}

pub fn update_occupancy(
    state: &OccupancyState,
    obs: &PresenceObservation,
    region: Option<usize>,
    now_ms: u64,
    params: &OccupancyParams,
) -> Result<OccupancyState> {
    let mut next = *state;
    next.update(obs, region, now_ms, params)?;
    Ok(next)
}
