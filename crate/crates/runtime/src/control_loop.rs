use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Receiver;
use std::sync::Arc;

use tracing::{debug, info, warn};
use wastive_core::pipeline::TickOutput;
use wastive_core::simulator::{synthesize_frame, tick_time_ms};
use wastive_core::vision::Frame;
use wastive_core::{Error as CoreError, Pipeline, RuntimeConfig};

use crate::clock::Clock;
use crate::link::{LinkSummary, LinkTracker};
use crate::mailbox::FrameMailbox;
use crate::telemetry::{param_map, ClientMessage, Mode, ObservationSummary, TelemetrySnapshot};
use crate::transport::Transport;
use crate::Result;

pub type Publisher = Box<dyn FnMut(Arc<TelemetrySnapshot>) + Send>;

/// Everything one tick produced.
#[derive(Debug, Clone)]
pub struct TickRecord {
    pub tick: u64,
    pub output: TickOutput,
    /// Bytes handed to the transport; zero while the link is down.
    pub tx_bytes: usize,
    pub rx: Vec<u8>,
    pub failsafe: bool,
    pub snapshot: Arc<TelemetrySnapshot>,
}

/// Single-writer owner of the live pipeline.
pub struct ControlLoop<T: Transport> {
    pipeline: Pipeline,
    transport: T,
    mailbox: FrameMailbox,
    controls: Option<Receiver<ClientMessage>>,
    publisher: Option<Publisher>,
    link: LinkTracker,
    mode: Mode,
    virtual_x: Option<f64>,
    tick: u64,
    start_ms: u64,
    config_revision: u64,
}

impl<T: Transport> ControlLoop<T> {
    /// Builds a loop whose tick 0 falls at `start_ms`. `background`, if
    /// given, is the known empty scene; otherwise the first frame seeds it.
    pub fn new(
        config: RuntimeConfig,
        transport: T,
        mailbox: FrameMailbox,
        background: Option<&Frame>,
        start_ms: u64,
    ) -> Result<Self> {
        let link = LinkTracker::new(transport.describe());
        Ok(ControlLoop {
            pipeline: Pipeline::new(config, background, start_ms)?,
            transport,
            mailbox,
            controls: None,
            publisher: None,
            link,
            mode: Mode::Live,
            virtual_x: None,
            tick: 0,
            start_ms,
            config_revision: 0,
        })
    }

    pub fn with_controls(mut self, controls: Receiver<ClientMessage>) -> Self {
        self.controls = Some(controls);
        self
    }

    pub fn with_publisher(mut self, publisher: impl FnMut(Arc<TelemetrySnapshot>) + Send + 'static) -> Self {
        self.publisher = Some(Box::new(publisher));
        self
    }

    pub fn config(&self) -> &RuntimeConfig {
        self.pipeline.config()
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn link(&self) -> &LinkSummary {
        self.link.summary()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Number of ticks processed so far.
    pub fn ticks(&self) -> u64 {
        self.tick
    }

    /// Scheduled time of tick `k`.
    pub fn tick_deadline(&self, k: u64) -> u64 {
        self.start_ms + tick_time_ms(k, self.config().tick_hz)
    }

    /// Applies one control message immediately. Normally messages arrive on
    /// the control channel and are applied at the start of the next tick.
    pub fn apply(&mut self, msg: ClientMessage) -> Result<()> {
        match msg {
            ClientMessage::SetParam { name, value } => {
                let mut next = self.pipeline.config().clone();
                next.set_param(&name, value)?;
                self.pipeline.set_config(next)?;
                self.config_revision += 1;
            }
            ClientMessage::VirtualVisitor { x } => {
                if let Some(x) = x.filter(|x| !(0.0..=1.0).contains(x)) {
                    return Err(CoreError::invalid(format!("visitor x {x} outside [0, 1]")).into());
                }
                self.virtual_x = x;
            }
            ClientMessage::Mode { mode } if mode != self.mode => {
                self.mode = mode;
                match mode {
                    Mode::Live => self.pipeline.reset_background(None),
                    Mode::VirtualVisitor => {
                        let empty = self.synthesize(None)?;
                        self.pipeline.reset_background(Some(&empty));
                    }
                }
                info!(?mode, "mode switched");
            }
            ClientMessage::Mode { .. } => {}
        }
        Ok(())
    }

    fn drain_controls(&mut self) {
        let Some(rx) = self.controls.take() else {
            return;
        };
        while let Ok(msg) = rx.try_recv() {
            if let Err(e) = self.apply(msg.clone()) {
                warn!(?msg, "control message rejected: {e}");
            }
        }
        self.controls = Some(rx);
    }

    fn synthesize(&self, x: Option<f64>) -> Result<Frame> {
        let v = &self.pipeline.config().vision;
        Ok(synthesize_frame(x, v.frame_width, v.frame_height)?)
    }

    fn reconnect_if_due(&mut self, now_ms: u64) {
        if !self.link.retry_due(now_ms) {
            return;
        }
        match self.transport.reopen(now_ms) {
            Ok(()) => {
                info!("link to {} restored", self.transport.describe());
                self.link.on_reconnected();
                // The device may have fallen back to rest while we were away.
                self.pipeline.resend_targets();
            }
            Err(e) => {
                debug!("reconnect failed: {e}");
                self.link.on_failure(e, now_ms);
            }
        }
    }

    fn send(&mut self, bytes: &[u8], now_ms: u64) -> (usize, Vec<u8>) {
        if !self.link.is_up() {
            return (0, Vec::new());
        }
        match self.transport.exchange(bytes, now_ms) {
            Ok(rx) => {
                self.link.on_sent(bytes.len());
                if self.link.on_received(&rx).failsafe_triggered {
                    warn!("device reported failsafe");
                    self.pipeline.resend_targets();
                }
                (bytes.len(), rx)
            }
            Err(e) => {
                warn!("transport failure: {e}");
                self.link.on_failure(e, now_ms);
                (0, Vec::new())
            }
        }
    }

    /// Runs one tick at `now_ms`: apply pending control messages, take the
    /// latest frame, step the pipeline, talk to the device, publish.
    pub fn tick(&mut self, now_ms: u64) -> Result<TickRecord> {
        self.drain_controls();
        self.reconnect_if_due(now_ms);

        let camera = self.mailbox.take();
        let frame = match self.mode {
            Mode::Live => camera,
            Mode::VirtualVisitor => Some(self.synthesize(self.virtual_x)?.with_timestamp(now_ms)),
        };
        let output = self.pipeline.step(frame.as_ref(), now_ms)?;
        let bytes = output.message.to_bytes();
        let (tx_bytes, rx) = self.send(&bytes, now_ms);
        let failsafe = self.transport.device_failsafe().unwrap_or_else(|| self.link.failsafe());

        let snapshot = Arc::new(self.snapshot(&output, failsafe));
        if let Some(publish) = self.publisher.as_mut() {
            publish(Arc::clone(&snapshot));
        }
        let record = TickRecord {
            tick: self.tick,
            output,
            tx_bytes,
            rx,
            failsafe,
            snapshot,
        };
        self.tick += 1;
        Ok(record)
    }

    fn snapshot(&self, out: &TickOutput, failsafe: bool) -> TelemetrySnapshot {
        let cfg = self.pipeline.config();
        TelemetrySnapshot {
            tick: self.tick,
            t_ms: out.now_ms,
            mode: self.mode,
            virtual_visitor: self.virtual_x,
            observation: ObservationSummary {
                occupied: out.observation.occupied,
                centroid_x: out.observation.centroid_x,
                activity_ratio: out.observation.activity_ratio,
            },
            observed_region: out.observed_region,
            region: out.region,
            dwell_ms: out.dwell_ms,
            n_regions: cfg.n_regions,
            m_panels: cfg.m_panels,
            base: out.base.clone(),
            panels: out.panels.clone(),
            angles: out.angles.clone(),
            pulses: out.pulses.clone(),
            message: match out.message.msg_type {
                wastive_core::protocol::MsgType::SetTargets => "set_targets",
                _ => "heartbeat",
            }
            .into(),
            link: self.link.summary().clone(),
            failsafe,
            params: param_map(cfg),
            config_revision: self.config_revision,
        }
    }

    /// Sends the all-lowered rest pose. Called on the way out of [`run`](Self::run).
    pub fn shutdown(&mut self, now_ms: u64) -> Result<()> {
        if !self.link.is_up() {
            self.transport.reopen(now_ms)?;
            self.link.on_reconnected();
        }
        let rest = self.pipeline.rest_command().to_bytes();
        let rx = self.transport.exchange(&rest, now_ms)?;
        self.link.on_sent(rest.len());
        self.link.on_received(&rx);
        info!("rest pose sent");
        Ok(())
    }

    /// Ticks on schedule until `stop` is raised or `max_ticks` ticks have
    /// run, then sends the rest pose. Returns the number of ticks run.
    pub fn run(&mut self, clock: &mut impl Clock, stop: &AtomicBool, max_ticks: Option<u64>) -> Result<u64> {
        let first = self.tick;
        let period_ms = 1000 / u64::from(self.config().tick_hz);
        while !stop.load(Ordering::Relaxed) && max_ticks.is_none_or(|m| self.tick - first < m) {
            let deadline = self.tick_deadline(self.tick);
            clock.sleep_until(deadline);
            let late = clock.now_ms().saturating_sub(deadline);
            if late > period_ms {
                debug!(tick = self.tick, late, "tick overran");
            }
            self.tick(deadline)?;
        }
        let now = clock.now_ms().max(self.tick_deadline(self.tick.saturating_sub(1)));
        self.shutdown(now)?;
        Ok(self.tick - first)
    }
}
