use std::fs;
use std::path::Path;
use std::sync::atomic::AtomicBool;
use std::sync::{mpsc, Arc, Mutex};
use std::thread;

use wastive::transport::LoopbackTransport;
use wastive::{ClientMessage, ControlLoop, FrameMailbox, Mode, SimClock, TelemetrySnapshot};
use wastive_core::protocol::{DeviceFrame, DeviceModel, MsgType};
use wastive_core::simulator::{run_scenario, tick_time_ms, trace_row, Scenario, ScenarioFrames, TraceRow};
use wastive_core::wave::{WaveParams, WaveState};
use wastive_core::{Pipeline, RuntimeConfig};

mod common;
use common::{Flaky, Recording};

fn loopback(cfg: &RuntimeConfig, start_ms: u64) -> LoopbackTransport {
    let rest = Pipeline::new(cfg.clone(), None, 0).unwrap().rest_pulses();
    LoopbackTransport::new(DeviceModel::new(rest, cfg.device.failsafe_timeout_ms, start_ms))
}

type Store = Arc<Mutex<Vec<Arc<TelemetrySnapshot>>>>;

fn collector() -> (Store, impl FnMut(Arc<TelemetrySnapshot>) + Send) {
    let store: Store = Arc::default();
    let sink = Arc::clone(&store);
    (store, move |s| sink.lock().unwrap().push(s))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn assert_rows_match(live: &TraceRow, sim: &TraceRow) {
    let ctx = format!("tick {}", sim.tick);
    assert_eq!(live.tick, sim.tick, "{ctx}");
    assert!(close(live.t_s, sim.t_s), "{ctx}");
    assert_eq!(live.occupied, sim.occupied, "{ctx}");
    match (live.centroid_x, sim.centroid_x) {
        (Some(a), Some(b)) => assert!(close(a, b), "{ctx}"),
        (a, b) => assert_eq!(a, b, "{ctx}"),
    }
    assert_eq!(live.region, sim.region, "{ctx}");
    assert_eq!(live.dwell_ms, sim.dwell_ms, "{ctx}");
    for (name, a, b) in [
        ("base", &live.base, &sim.base),
        ("panels", &live.panels, &sim.panels),
        ("angles", &live.angles, &sim.angles),
    ] {
        assert_eq!(a.len(), b.len(), "{ctx} {name}");
        assert!(
            a.iter().zip(b).all(|(x, y)| close(*x, *y)),
            "{ctx} {name}: {a:?} vs {b:?}"
        );
    }
    assert_eq!(live.tx_bytes, sim.tx_bytes, "{ctx}");
    assert_eq!(live.failsafe, sim.failsafe, "{ctx}");
}

#[test]
fn loopback_loop_reproduces_the_simulator() {
    let scenarios = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for name in ["region-walk.toml", "wander.toml", "dwell-2s.toml"] {
        let scenario = Scenario::from_toml(&fs::read_to_string(scenarios.join(name)).unwrap()).unwrap();
        let base = RuntimeConfig::default();
        let expected = run_scenario(&scenario, &base).unwrap();

        let cfg = scenario.effective_config(&base).unwrap();
        let mut frames = ScenarioFrames::new(&scenario, &cfg);
        let mailbox = FrameMailbox::new();
        let background = frames.background().unwrap();
        let mut control =
            ControlLoop::new(cfg.clone(), loopback(&cfg, 0), mailbox.clone(), Some(&background), 0).unwrap();
        let mut rows = Vec::new();
        for k in 0..frames.tick_count() {
            mailbox.put(frames.frame_at(k).unwrap());
            let rec = control.tick(control.tick_deadline(k)).unwrap();
            rows.push(trace_row(k, cfg.tick_hz, &rec.output, rec.tx_bytes, rec.failsafe));
        }
        assert_eq!(rows.len(), expected.rows.len(), "{name}");
        for (live, sim) in rows.iter().zip(&expected.rows) {
            assert_rows_match(live, sim);
        }
    }
}

#[test]
fn simulated_second_has_exactly_tick_hz_ticks() {
    for hz in [10u32, 25, 30, 60, 120] {
        let cfg = RuntimeConfig {
            tick_hz: hz,
            ..RuntimeConfig::default()
        };
        let (store, sink) = collector();
        let mut control = ControlLoop::new(cfg.clone(), loopback(&cfg, 0), FrameMailbox::new(), None, 0)
            .unwrap()
            .with_publisher(sink);
        let seconds = 4;
        let ran = control
            .run(
                &mut SimClock::new(0),
                &AtomicBool::new(false),
                Some(u64::from(hz) * seconds),
            )
            .unwrap();
        assert_eq!(ran, u64::from(hz) * seconds);
        let snaps = store.lock().unwrap();
        for (k, s) in snaps.iter().enumerate() {
            assert_eq!(s.tick, k as u64);
            assert_eq!(s.t_ms, tick_time_ms(k as u64, hz));
        }
        for sec in 0..seconds {
            let in_second = snaps
                .iter()
                .filter(|s| (sec * 1000..(sec + 1) * 1000).contains(&s.t_ms))
                .count();
            assert_eq!(in_second, hz as usize, "hz {hz}, second {sec}");
        }
    }
}

#[test]
fn starved_loop_heartbeats_at_rest() {
    let cfg = RuntimeConfig::default();
    let transport = Recording::new(loopback(&cfg, 0));
    let mut control = ControlLoop::new(cfg.clone(), transport, FrameMailbox::new(), None, 0).unwrap();
    let rest_angles: Vec<f64> = cfg.servos.iter().map(|s| s.rest_angle()).collect();
    for k in 0..300 {
        let rec = control.tick(control.tick_deadline(k)).unwrap();
        assert!(!rec.output.observation.occupied);
        assert_eq!(rec.output.angles, rest_angles);
        assert!(!rec.failsafe);
    }
    let frames = control.transport().frames();
    assert_eq!(frames.len(), 300);
    assert_eq!(frames[0].msg_type, MsgType::SetTargets);
    assert!(frames[1..].iter().all(|f| f.msg_type == MsgType::Heartbeat));
    let device = control.transport().inner.device();
    assert_eq!(device.current_pulses(), device.rest_pulses());
    assert_eq!(device.failsafe_count(), 0);
}

#[test]
fn stopping_lowers_the_panel() {
    let cfg = RuntimeConfig::default();
    let transport = Recording::new(loopback(&cfg, 0));
    let mut control = ControlLoop::new(cfg.clone(), transport, FrameMailbox::new(), None, 0).unwrap();
    control
        .apply(ClientMessage::Mode {
            mode: Mode::VirtualVisitor,
        })
        .unwrap();
    control.apply(ClientMessage::VirtualVisitor { x: Some(0.4) }).unwrap();

    // Stop from inside the loop once the panel is visibly raised.
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    let mut control = control.with_publisher(move |s: Arc<TelemetrySnapshot>| {
        if s.base.iter().any(|&b| b > 0.5) {
            flag.store(true, std::sync::atomic::Ordering::Relaxed);
        }
    });
    let ran = control.run(&mut SimClock::new(0), &stop, Some(10_000)).unwrap();
    assert!(ran < 10_000);

    let rest = Pipeline::new(cfg.clone(), None, 0).unwrap().rest_pulses();
    let frames = control.transport().frames();
    let last = frames.last().unwrap();
    assert_eq!(last.msg_type, MsgType::SetTargets);
    assert_eq!(last.pulses().unwrap(), rest);
    assert!(frames.iter().rev().nth(1).unwrap().pulses().is_some_and(|p| p != rest));
    assert_eq!(control.transport().inner.device().current_pulses(), rest.as_slice());
}

fn wave_params(s: &TelemetrySnapshot) -> WaveParams {
    WaveParams {
        rise_rate: s.params["wave.rise_rate"],
        decay_rate: s.params["wave.decay_rate"],
        coupling: s.params["wave.coupling"],
        ripple_amplitude: s.params["wave.ripple_amplitude"],
        ripple_frequency: s.params["wave.ripple_frequency"],
        ripple_wavenumber: s.params["wave.ripple_wavenumber"],
    }
}

#[test]
fn parameter_updates_land_whole_between_ticks() {
    let cfg = RuntimeConfig::default();
    let (tx, rx) = mpsc::channel();
    let (store, sink) = collector();
    let mut control = ControlLoop::new(cfg.clone(), loopback(&cfg, 0), FrameMailbox::new(), None, 0)
        .unwrap()
        .with_controls(rx)
        .with_publisher(sink);
    control
        .apply(ClientMessage::Mode {
            mode: Mode::VirtualVisitor,
        })
        .unwrap();
    control.apply(ClientMessage::VirtualVisitor { x: Some(0.6) }).unwrap();

    let producer = thread::spawn(move || {
        for i in 0..4000 {
            let v = 0.05 + (i % 37) as f64 * 0.01;
            let name = if i % 2 == 0 {
                "wave.rise_rate"
            } else {
                "wave.decay_rate"
            };
            tx.send(ClientMessage::SetParam {
                name: name.into(),
                value: v,
            })
            .unwrap();
            if i % 50 == 0 {
                // Rejected outright: unstable diffusion.
                tx.send(ClientMessage::SetParam {
                    name: "wave.coupling".into(),
                    value: 1e6,
                })
                .unwrap();
                thread::yield_now();
            }
        }
    });
    control
        .run(&mut SimClock::new(0), &AtomicBool::new(false), Some(3000))
        .unwrap();
    producer.join().unwrap();

    let snaps = store.lock().unwrap();
    let dt = cfg.dt();
    let mut changed = 0;
    for pair in snaps.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        let params = wave_params(cur);
        assert_eq!(params.coupling, cfg.wave.coupling);
        // Re-derive this tick's base from the previous one using only the
        // parameters the snapshot claims were in force.
        let mut wave = WaveState::new(cfg.n_regions);
        wave.base = prev.base.clone();
        let rising = cur.region.filter(|_| cur.observation.occupied);
        wave.step(rising, dt, &params).unwrap();
        assert_eq!(wave.base, cur.base, "tick {}", cur.tick);
        if cur.config_revision != prev.config_revision {
            changed += 1;
        }
    }
    assert!(changed > 10, "only {changed} ticks saw updates");
    assert!(snaps.iter().any(|s| s.region == Some(2)));
}

#[test]
fn virtual_visitor_steers_the_region() {
    let cfg = RuntimeConfig::default();
    let (tx, rx) = mpsc::channel();
    let (store, sink) = collector();
    let mut control = ControlLoop::new(cfg.clone(), loopback(&cfg, 0), FrameMailbox::new(), None, 0)
        .unwrap()
        .with_controls(rx)
        .with_publisher(sink);
    tx.send(ClientMessage::Mode {
        mode: Mode::VirtualVisitor,
    })
    .unwrap();
    tx.send(ClientMessage::VirtualVisitor { x: Some(0.6) }).unwrap();
    control
        .run(&mut SimClock::new(0), &AtomicBool::new(false), Some(60))
        .unwrap();
    tx.send(ClientMessage::VirtualVisitor { x: Some(1.5) }).unwrap();
    tx.send(ClientMessage::Mode { mode: Mode::Live }).unwrap();
    control
        .run(&mut SimClock::new(2000), &AtomicBool::new(false), Some(90))
        .unwrap();

    let snaps = store.lock().unwrap();
    assert_eq!(snaps[0].mode, Mode::VirtualVisitor);
    assert_eq!(snaps[59].region, Some(2));
    assert_eq!(snaps[59].virtual_visitor, Some(0.6));
    // The out-of-range position was refused; the mode switch went through.
    let after = &snaps[60];
    assert_eq!(after.mode, Mode::Live);
    assert_eq!(after.virtual_visitor, Some(0.6));
    // No camera frames in live mode: the region clears after the vacancy timeout.
    assert_eq!(snaps.last().unwrap().region, None);
}

#[test]
fn link_outage_retries_with_backoff_and_resyncs() {
    let cfg = RuntimeConfig::default();
    let attempts: Arc<Mutex<Vec<u64>>> = Arc::default();
    let flaky = Flaky {
        inner: loopback(&cfg, 0),
        down_from: 2000,
        down_until: 4000,
        now: 0,
        reopen_attempts: Arc::clone(&attempts),
    };
    let transport = Recording::new(flaky);
    let (store, sink) = collector();
    let mut control = ControlLoop::new(cfg.clone(), transport, FrameMailbox::new(), None, 0)
        .unwrap()
        .with_publisher(sink);
    control
        .apply(ClientMessage::Mode {
            mode: Mode::VirtualVisitor,
        })
        .unwrap();
    control.apply(ClientMessage::VirtualVisitor { x: Some(0.1) }).unwrap();
    control
        .run(&mut SimClock::new(0), &AtomicBool::new(false), Some(180))
        .unwrap();

    // Reopen attempts back off: gaps of roughly 100, 200, 400, 800 ms.
    let attempts = attempts.lock().unwrap().clone();
    let gaps: Vec<u64> = attempts.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(
        attempts[0] >= 2000 + 100 && attempts[0] < 2000 + 100 + 34,
        "{attempts:?}"
    );
    for (gap, want) in gaps.iter().zip([200u64, 400, 800]) {
        assert!(*gap >= want && *gap < want + 34, "{gaps:?}");
    }
    assert!(*attempts.last().unwrap() >= 4000);

    let snaps = store.lock().unwrap();
    let during = snaps.iter().find(|s| s.t_ms == tick_time_ms(90, 30)).unwrap();
    assert_eq!(during.link.status, wastive::link::LinkStatus::Down);
    // The device, unfed for over 500 ms, fell back to rest.
    assert!(snaps.iter().any(|s| s.failsafe));
    let back = snaps
        .iter()
        .find(|s| s.t_ms > 4000 && s.link.status == wastive::link::LinkStatus::Up)
        .unwrap();
    assert_eq!(back.message, "set_targets");
    assert!(!back.failsafe);
    assert!(!snaps.last().unwrap().failsafe);
    assert_eq!(snaps.last().unwrap().link.failures, attempts.len() as u64);
}

#[test]
fn rest_command_matches_calibration() {
    let cfg = RuntimeConfig::default();
    let mut p = Pipeline::new(cfg, None, 0).unwrap();
    let rest = p.rest_command();
    assert_eq!(rest, DeviceFrame::set_targets(0, &[1000; 8]).unwrap());
}
