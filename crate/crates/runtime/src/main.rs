use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, IsTerminal};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tracing::info;
use tracing_subscriber::EnvFilter;

use wastive::calibrate::{run_session, CalibrationSession};
use wastive::frames::{load_pgm_dir, spawn_player};
use wastive::replay::replay_trace;
use wastive::server::{router, snapshot_channel, ServerState};
use wastive::transport::{open_transport, parse_spec};
use wastive::{ClientMessage, ControlLoop, FrameMailbox, Mode, RealClock, SimClock};
use wastive_core::config::{load_config, TransportConfig};
use wastive_core::protocol::crc8;
use wastive_core::simulator::{run_scenario, Scenario, Trace};
use wastive_core::{Pipeline, RuntimeConfig};

#[derive(Parser)]
#[command(
    name = "wastive",
    version,
    about = "Host software for the wastive kinetic wave panel"
)]
struct Cli {
    /// Configuration file (TOML). Defaults apply when omitted.
    #[arg(long, global = true, env = "WASTIVE_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the live control loop.
    Run(LoopArgs),
    /// Run the live loop and serve telemetry/control over WebSocket.
    Serve {
        #[command(flatten)]
        args: LoopArgs,
        /// Listen address, overriding the config.
        #[arg(long)]
        bind: Option<String>,
        /// Directory of console assets served at `/`.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
    /// Run a scenario file through the full pipeline.
    Simulate {
        scenario: PathBuf,
        /// Write the per-tick trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Re-send the angles recorded in a trace CSV.
    Replay {
        trace: PathBuf,
        /// loopback, file:PATH or serial:PATH[@BAUD]; overrides the config.
        #[arg(long)]
        transport: Option<String>,
        /// Send as fast as possible instead of at the recorded times.
        #[arg(long)]
        fast: bool,
    },
    /// Step one servo's pulse width interactively from stdin.
    Calibrate {
        servo: usize,
        #[arg(long)]
        transport: Option<String>,
        /// Initial step in microseconds.
        #[arg(long, default_value_t = 10)]
        step: u16,
    },
    /// Print the CRC-8 of a hex byte string.
    Crc { hex: String },
}

#[derive(Args)]
struct LoopArgs {
    /// loopback, file:PATH or serial:PATH[@BAUD]; overrides the config.
    #[arg(long)]
    transport: Option<String>,
    /// Directory of PGM frames played in a loop as the camera.
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Frame rate for --frames; defaults to the tick rate.
    #[arg(long)]
    fps: Option<f64>,
    /// Start in virtual-visitor mode with a visitor at this position.
    #[arg(long = "virtual", value_name = "X")]
    virtual_x: Option<f64>,
    /// Stop after this many ticks.
    #[arg(long)]
    ticks: Option<u64>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(io::stderr)
        .with_ansi(io::stderr().is_terminal())
        .init();
    let config = read_config(cli.config.as_deref())?;
    match cli.command {
        Command::Run(args) => run_live(config, args, None),
        Command::Serve { args, bind, assets } => {
            let bind = bind.unwrap_or_else(|| config.telemetry.bind.clone());
            run_live(config, args, Some((bind, assets)))
        }
        Command::Simulate { scenario, trace } => simulate(&config, &scenario, trace.as_deref()),
        Command::Replay { trace, transport, fast } => replay(config, &trace, transport, fast),
        Command::Calibrate { servo, transport, step } => calibrate(config, servo, transport, step),
        Command::Crc { hex } => {
            let cleaned: String = hex.chars().filter(|c| !c.is_whitespace()).collect();
            let cleaned = cleaned.strip_prefix("0x").unwrap_or(&cleaned);
            let bytes = hex::decode(cleaned).with_context(|| format!("{hex:?} is not a hex byte string"))?;
            println!("{:02X}", crc8(&bytes));
            Ok(())
        }
    }
}

fn read_config(path: Option<&Path>) -> Result<RuntimeConfig> {
    let Some(path) = path else {
        return Ok(RuntimeConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load_config(&text).with_context(|| format!("in {}", path.display()))
}

fn with_transport(mut config: RuntimeConfig, spec: Option<String>) -> Result<RuntimeConfig> {
    if let Some(spec) = spec {
        config.transport = parse_spec(&spec).map_err(anyhow::Error::msg)?;
    }
    Ok(config)
}

fn rest_pulses(config: &RuntimeConfig) -> Result<Vec<u16>> {
    Ok(Pipeline::new(config.clone(), None, 0)?.rest_pulses())
}

/// Raises the returned flag on Ctrl-C.
fn stop_on_ctrl_c() -> Arc<AtomicBool> {
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build();
        if let Ok(rt) = rt {
            if rt.block_on(tokio::signal::ctrl_c()).is_ok() {
                info!("stopping");
                flag.store(true, Ordering::Relaxed);
            }
        }
    });
    stop
}

fn run_live(config: RuntimeConfig, args: LoopArgs, serve: Option<(String, Option<PathBuf>)>) -> Result<()> {
    let config = with_transport(config, args.transport)?;
    let transport = open_transport(
        &config.transport,
        rest_pulses(&config)?,
        config.device.failsafe_timeout_ms,
        0,
    )?;
    info!("transport: {}", transport.describe());
    let stop = stop_on_ctrl_c();
    let mailbox = FrameMailbox::new();
    let (control_tx, control_rx) = mpsc::channel();
    let (publish, snapshots) = snapshot_channel();

    if let Some(dir) = &args.frames {
        let frames = load_pgm_dir(dir)?;
        if frames.is_empty() {
            bail!("no .pgm frames in {}", dir.display());
        }
        let fps = args.fps.unwrap_or(f64::from(config.tick_hz));
        if !(fps > 0.0 && fps.is_finite()) {
            bail!("--fps must be positive");
        }
        info!("playing {} frames from {} at {fps} fps", frames.len(), dir.display());
        spawn_player(frames, fps, mailbox.clone(), Arc::clone(&stop));
    }

    let mut control = ControlLoop::new(config.clone(), transport, mailbox, None, 0)?
        .with_controls(control_rx)
        .with_publisher(publish);
    if let Some(x) = args.virtual_x {
        control.apply(ClientMessage::Mode {
            mode: Mode::VirtualVisitor,
        })?;
        control.apply(ClientMessage::VirtualVisitor { x: Some(x) })?;
    }

    let loop_stop = Arc::clone(&stop);
    let max_ticks = args.ticks;
    let worker = thread::spawn(move || -> Result<ControlLoop<_>> {
        let ran = control.run(&mut RealClock::new(), &loop_stop, max_ticks);
        loop_stop.store(true, Ordering::Relaxed);
        ran?;
        Ok(control)
    });

    if let Some((bind, assets)) = serve {
        let state = ServerState::new(snapshots, control_tx);
        let server_stop = Arc::clone(&stop);
        tokio::runtime::Runtime::new()?.block_on(async move {
            let listener = tokio::net::TcpListener::bind(&bind)
                .await
                .with_context(|| format!("binding {bind}"))?;
            info!("telemetry on ws://{}/ws", listener.local_addr()?);
            axum::serve(listener, router(state, assets))
                .with_graceful_shutdown(async move {
                    while !server_stop.load(Ordering::Relaxed) {
                        tokio::time::sleep(std::time::Duration::from_millis(50)).await;
                    }
                })
                .await?;
            anyhow::Ok(())
        })?;
    } else {
        drop(control_tx);
    }

    let control = worker.join().map_err(|_| anyhow::anyhow!("control loop panicked"))??;
    let link = control.link();
    info!(
        ticks = control.ticks(),
        frames_sent = link.frames_sent,
        acks = link.acks,
        failures = link.failures,
        "stopped"
    );
    Ok(())
}

fn simulate(config: &RuntimeConfig, path: &Path, trace_out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let scenario = Scenario::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
    let trace = run_scenario(&scenario, config)?;
    if let Some(out) = trace_out {
        let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
        trace.write_csv(BufWriter::new(file))?;
    }
    let mut peaks = vec![0.0f64; trace.n_regions];
    for row in &trace.rows {
        for (p, b) in peaks.iter_mut().zip(&row.base) {
            *p = p.max(*b);
        }
    }
    let peaks: Vec<String> = peaks.iter().map(|p| format!("{p:.3}")).collect();
    println!(
        "{} ticks; peak base per region [{}]; failsafe ticks {}",
        trace.rows.len(),
        peaks.join(", "),
        trace.rows.iter().filter(|r| r.failsafe).count()
    );
    Ok(())
}

fn replay(config: RuntimeConfig, path: &Path, transport: Option<String>, fast: bool) -> Result<()> {
    let config = with_transport(config, transport)?;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let trace = Trace::read_csv(BufReader::new(file)).with_context(|| format!("in {}", path.display()))?;
    let mut link = open_transport(
        &config.transport,
        rest_pulses(&config)?,
        config.device.failsafe_timeout_ms,
        0,
    )?;
    let stop = stop_on_ctrl_c();
    let summary = if fast {
        replay_trace(&trace, &config, &mut link, &mut SimClock::new(0), &stop)?
    } else {
        replay_trace(&trace, &config, &mut link, &mut RealClock::new(), &stop)?
    };
    println!(
        "sent {} frames ({} bytes) over {}; {} acks",
        summary.frames_sent, summary.bytes_sent, summary.transport, summary.acks
    );
    Ok(())
}

fn calibrate(config: RuntimeConfig, servo: usize, transport: Option<String>, step: u16) -> Result<()> {
    let config = with_transport(config, transport)?;
    if matches!(config.transport, TransportConfig::Loopback {}) {
        info!("calibrating against the loopback device model; pass --transport serial:PATH for hardware");
    }
    let mut session = CalibrationSession::new(&config, servo, step)?;
    let mut link = open_transport(
        &config.transport,
        rest_pulses(&config)?,
        config.device.failsafe_timeout_ms,
        0,
    )?;
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in io::stdin().lock().lines() {
            let Ok(line) = line else { break };
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    run_session(&mut session, &mut link, &mut RealClock::new(), rx, &mut io::stdout())?;
    Ok(())
}
