use std::sync::atomic::{AtomicBool, Ordering};

use wastive_core::actuation::angle_to_pulse;
use wastive_core::protocol::DeviceFrame;
use wastive_core::simulator::Trace;
use wastive_core::{Error as CoreError, RuntimeConfig};

use crate::clock::Clock;
use crate::link::{LinkSummary, LinkTracker};
use crate::transport::Transport;
use crate::Result;

/// Re-sends the angles recorded in `trace` as `SET_TARGETS`, one frame per
/// row at the row's time offset, then lowers the panel.
pub fn replay_trace(
    trace: &Trace,
    config: &RuntimeConfig,
    transport: &mut impl Transport,
    clock: &mut impl Clock,
    stop: &AtomicBool,
) -> Result<LinkSummary> {
    if trace.m_panels != config.m_panels {
        return Err(CoreError::config(
            "m_panels",
            format!("trace has {} panels, config has {}", trace.m_panels, config.m_panels),
        )
        .into());
    }
    let mut link = LinkTracker::new(transport.describe());
    let start = clock.now_ms();
    let mut seq = 0u8;
    let mut last_ms = start;
    for row in &trace.rows {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        let pulses = row
            .angles
            .iter()
            .zip(&config.servos)
            .map(|(&a, s)| angle_to_pulse(a.clamp(s.angle_min, s.angle_max), s))
            .collect::<Result<Vec<_>, _>>()?;
        let frame = DeviceFrame::set_targets(seq, &pulses)?.to_bytes();
        seq = seq.wrapping_add(1);
        last_ms = start + (row.t_s * 1000.0).round() as u64;
        clock.sleep_until(last_ms);
        let rx = transport.exchange(&frame, last_ms)?;
        link.on_sent(frame.len());
        link.on_received(&rx);
    }
    let rest: Vec<u16> = config
        .servos
        .iter()
        .map(|s| angle_to_pulse(s.rest_angle(), s))
        .collect::<Result<_, _>>()?;
    let frame = DeviceFrame::set_targets(seq, &rest)?.to_bytes();
    let rx = transport.exchange(&frame, last_ms)?;
    link.on_sent(frame.len());
    link.on_received(&rx);
    Ok(link.summary().clone())
}
