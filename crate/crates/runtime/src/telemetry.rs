//! JSON messages exchanged with the operator console.
//!
//! Every message is a UTF-8 JSON object with a `type` field.
//!
//! Runtime to console:
//!
//! * `snapshot`: one per tick, see [`TelemetrySnapshot`] for the fields.
//! * `error`: `{"type":"error","message":...}` when a control message was
//!   malformed or rejected.
//!
//! Console to runtime:
//!
//! * `set_param`: `{"type":"set_param","name":"wave.rise_rate","value":0.4}`.
//!   Names are those listed in the snapshot's `params` map.
//! * `virtual_visitor`: `{"type":"virtual_visitor","x":0.6}`, or `"x":null`
//!   for nobody. Only used in virtual-visitor mode.
//! * `mode`: `{"type":"mode","mode":"live"}` or `"virtual-visitor"`.
//!
//! Control messages take effect between ticks, all at once.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use wastive_core::config::TUNABLE_PARAMS;
use wastive_core::RuntimeConfig;

use crate::link::LinkSummary;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Frames come from the camera mailbox.
    #[default]
    Live,
    /// Frames are synthesized from an operator-placed visitor.
    #[serde(alias = "virtual")]
    VirtualVisitor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSummary {
    pub occupied: bool,
    pub centroid_x: Option<f64>,
    pub activity_ratio: f64,
}

/// Immutable per-tick record published to telemetry consumers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySnapshot {
    pub tick: u64,
    /// Loop time of this tick in milliseconds.
    pub t_ms: u64,
    pub mode: Mode,
    /// Operator-placed visitor position, if any.
    pub virtual_visitor: Option<f64>,
    pub observation: ObservationSummary,
    /// Region the raw observation falls in, before debouncing.
    pub observed_region: Option<usize>,
    /// Debounced region the wave responds to.
    pub region: Option<usize>,
    pub dwell_ms: u64,
    pub n_regions: usize,
    pub m_panels: usize,
    pub base: Vec<f64>,
    pub panels: Vec<f64>,
    pub angles: Vec<f64>,
    pub pulses: Vec<u16>,
    /// `"set_targets"` or `"heartbeat"`.
    pub message: String,
    pub link: LinkSummary,
    pub failsafe: bool,
    /// Current value of every tunable, keyed by `set_param` name.
    pub params: BTreeMap<String, f64>,
    /// Bumped each time a control message changes the configuration.
    pub config_revision: u64,
}

pub fn param_map(config: &RuntimeConfig) -> BTreeMap<String, f64> {
    TUNABLE_PARAMS
        .iter()
        .filter_map(|&name| Some((name.to_string(), config.get_param(name)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum ServerMessage {
    Snapshot(TelemetrySnapshot),
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    SetParam { name: String, value: f64 },
    VirtualVisitor { x: Option<f64> },
    Mode { mode: Mode },
}

impl ClientMessage {
    pub fn parse(text: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("telemetry messages always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_parse() {
        assert_eq!(
            ClientMessage::parse(r#"{"type":"set_param","name":"wave.rise_rate","value":0.4}"#).unwrap(),
            ClientMessage::SetParam {
                name: "wave.rise_rate".into(),
                value: 0.4
            }
        );
        assert_eq!(
            ClientMessage::parse(r#"{"type":"virtual_visitor","x":null}"#).unwrap(),
            ClientMessage::VirtualVisitor { x: None }
        );
        assert_eq!(
            ClientMessage::parse(r#"{"type":"mode","mode":"virtual"}"#).unwrap(),
            ClientMessage::Mode {
                mode: Mode::VirtualVisitor
            }
        );
        assert!(ClientMessage::parse(r#"{"type":"snapshot"}"#).is_err());
        assert!(ClientMessage::parse(r#"{"type":"mode","mode":"party"}"#).is_err());
    }

    #[test]
    fn every_tunable_is_listed() {
        let params = param_map(&RuntimeConfig::default());
        assert_eq!(params.len(), TUNABLE_PARAMS.len());
        assert_eq!(params["occupancy.debounce_ms"], 300.0);
    }
}
