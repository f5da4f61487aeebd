use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dts_core::dtentity::{generate_report, DtError, Storage};
use dts_core::ptsim::Scenario;
use dts_core::runtime::{
    acc_params, probe, run_dt_udp, run_pt_udp, CombinedRun, DtConfig, DtEntity, PtEntity, RunOptions, REPORT_DIR,
    STORE_FILE,
};
use dts_core::wire::{SyncOptions, UdpEndpoint};
use dts_gateway::{GatewayConfig, GatewayHandle, DEFAULT_HTTP_ADDR};
use serde_json::json;

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_MISSING_STORE: u8 = 3;

const DEFAULT_PT_PORT: u16 = 47001;
const DEFAULT_DT_PORT: u16 = 47002;

#[derive(Debug, Parser)]
#[command(name = "dts", version, about = "ACC digital twin: simulator, twin entity and tooling")]
struct Cli {
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info", env = "DTS_LOG")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the system, in one process or as one side of a UDP link.
    Run(RunArgs),
    /// Write CSV reports from a stored run.
    Report(ReportArgs),
    /// Measure clock offset and latency against a running peer.
    Probe(ProbeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Combined,
    Pt,
    Dt,
}

#[derive(Debug, Args)]
struct DataArg {
    /// Data directory holding the store and reports.
    #[arg(long = "data", env = "DTS_DATA_DIR", default_value = "dts-data")]
    dir: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "combined")]
    mode: Mode,
    /// Address of the other entity (pt and dt modes).
    #[arg(long)]
    peer: Option<String>,
    /// Local UDP port (pt and dt modes).
    #[arg(long)]
    listen: Option<u16>,
    /// Gateway bind address (combined and dt modes).
    #[arg(long, default_value = DEFAULT_HTTP_ADDR)]
    http: SocketAddr,
    /// Skip the gateway.
    #[arg(long)]
    no_http: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    data: DataArg,
    /// Store every ACC tick from the start.
    #[arg(long)]
    collect: bool,
    /// Override the scenario duration, in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Run the combined mode as fast as possible instead of in real time.
    #[arg(long)]
    fast: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    data: DataArg,
    /// First timestamp, microseconds.
    #[arg(long = "from")]
    from_us: Option<u64>,
    /// Last timestamp, microseconds, inclusive.
    #[arg(long = "to")]
    to_us: Option<u64>,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long)]
    peer: String,
    #[arg(long, default_value_t = SyncOptions::default().rounds)]
    rounds: u32,
    /// Per-round timeout, milliseconds.
    #[arg(long, default_value_t = 200)]
    timeout_ms: u64,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            err: anyhow::anyhow!(msg.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        Self {
            code: EXIT_RUNTIME,
            err,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp_millis()
        .init();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
        Command::Probe(a) => cmd_probe(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", describe(&f.err));
            ExitCode::from(f.code)
        }
    }
}

/// The error chain, skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    Scenario::load(path).map_err(|e| Failure {
        code: EXIT_USAGE,
        err: anyhow::Error::new(e),
    })
}

fn stop_flag() -> Result<Arc<AtomicBool>> {
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed)).context("installing signal handler")?;
    Ok(stop)
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    if a.mode != Mode::Combined && a.peer.is_none() {
        return Err(Failure::usage(format!("--mode {:?} requires --peer", a.mode).to_lowercase()));
    }
    if let Some(d) = a.duration {
        if !(d.is_finite() && d > 0.0) {
            return Err(Failure::usage(format!("--duration must be positive, got {d}")));
        }
    }
    let scenario = match (&a.scenario, a.mode) {
        (Some(p), _) => load_scenario(p)?,
        (None, Mode::Dt) => Scenario::default(),
        (None, _) => return Err(Failure::usage("--scenario is required")),
    };
    match a.mode {
        Mode::Combined => run_combined_mode(&a, &scenario),
        Mode::Pt => run_pt_mode(&a, &scenario),
        Mode::Dt => run_dt_mode(&a, &scenario),
    }
}

fn start_gateway(a: &RunArgs, link: dts_core::gateway::GatewayLink) -> Result<Option<GatewayHandle>> {
    if a.no_http {
        return Ok(None);
    }
    let gw = dts_gateway::spawn(a.http, link, GatewayConfig::default())
        .with_context(|| format!("binding gateway on {}", a.http))?;
    Ok(Some(gw))
}

fn run_combined_mode(a: &RunArgs, scenario: &Scenario) -> Result<(), Failure> {
    let opts = RunOptions {
        seed: a.seed,
        data_dir: a.data.dir.clone(),
        duration_s: a.duration,
        collect: a.collect,
        realtime: !a.fast,
        stop: Some(stop_flag()?),
    };
    let mut run = CombinedRun::new(scenario, opts).context("setting up combined run")?;
    let gw = start_gateway(a, run.gateway_link())?;
    let summary = run.run().context("combined run")?;
    if let Some(gw) = gw {
        gw.shutdown().context("stopping gateway")?;
    }
    let mut v = serde_json::to_value(&summary).context("encoding summary")?;
    if let Some(o) = v.as_object_mut() {
        o.remove("trace");
    }
    print_json(&v)?;
    Ok(())
}

fn udp_endpoint(a: &RunArgs, default_port: u16) -> Result<UdpEndpoint> {
    let peer = a.peer.as_deref().expect("checked by caller");
    let local = SocketAddr::from(([0, 0, 0, 0], a.listen.unwrap_or(default_port)));
    UdpEndpoint::bind(local, peer).with_context(|| format!("binding UDP {local} towards {peer}"))
}

fn run_pt_mode(a: &RunArgs, scenario: &Scenario) -> Result<(), Failure> {
    let ep = udp_endpoint(a, DEFAULT_PT_PORT)?;
    let pt = PtEntity::new(scenario, a.seed.unwrap_or(scenario.seed)).context("building vehicle")?;
    let duration = a.duration.map(Duration::from_secs_f64);
    let pt = run_pt_udp(pt, ep, duration, stop_flag()?).context("vehicle loop")?;
    print_json(&json!({
        "sim_time_s": pt.sim_time(),
        "steps": pt.steps(),
        "final_ego_speed": pt.scene().ego.speed,
        "decode_errors": pt.decode_errors,
        "perception_errors": pt.perception_errors,
    }))?;
    Ok(())
}

fn run_dt_mode(a: &RunArgs, scenario: &Scenario) -> Result<(), Failure> {
    let ep = udp_endpoint(a, DEFAULT_DT_PORT)?;
    std::fs::create_dir_all(&a.data.dir).with_context(|| format!("creating {}", a.data.dir.display()))?;
    let store = a.data.dir.join(STORE_FILE);
    let storage = Storage::open(&store).with_context(|| format!("opening {}", store.display()))?;
    let mut cfg = DtConfig::new(a.data.dir.join(REPORT_DIR));
    cfg.acc = acc_params(scenario);
    cfg.set_speed = scenario.acc.set_speed;
    cfg.acc_enabled = scenario.acc.enabled;
    cfg.collect = a.collect;
    let mut dt = DtEntity::new(cfg, storage).context("building twin entity")?;
    let gw = start_gateway(a, dt.gateway_link())?;
    let duration = a.duration.map(Duration::from_secs_f64);
    let dt = run_dt_udp(dt, ep, duration, stop_flag()?).context("twin loop")?;
    if let Some(gw) = gw {
        gw.shutdown().context("stopping gateway")?;
    }
    let offset = dt.clock_offset();
    print_json(&json!({
        "clock_synced": offset.is_some(),
        "clock_offset_ms": offset.map(|o| o.offset_ms()),
        "latency": dt.latency().latency_stats(),
        "latency_recorded": dt.latency().total_recorded(),
        "link": dt.link_status(),
        "dt_ticks": dt.ticks(),
        "collection_ticks": dt.collection_ticks(),
        "writer": dt.writer().stats(),
        "store_path": store,
    }))?;
    drop(dt.finish());
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<(), Failure> {
    if let (Some(f), Some(t)) = (a.from_us, a.to_us) {
        if f > t {
            return Err(Failure::usage(format!("--from {f} is after --to {t}")));
        }
    }
    let store = a.data.dir.join(STORE_FILE);
    let storage = match Storage::open_existing(&store) {
        Ok(s) => s,
        Err(e @ DtError::MissingStore(_)) => {
            return Err(Failure {
                code: EXIT_MISSING_STORE,
                err: e.into(),
            })
        }
        Err(e) => return Err(anyhow::Error::new(e).context(format!("opening {}", store.display())).into()),
    };
    let from = a.from_us.unwrap_or(0);
    let to = a.to_us.unwrap_or(i64::MAX as u64);
    let out = a.data.dir.join(REPORT_DIR);
    let r = generate_report(&storage, from, to, &out).context("writing report")?;
    print_json(&json!({
        "ego_csv": r.ego_csv,
        "tracks_csv": r.tracks_csv,
        "rows": {"ego": r.ego_rows, "tracks": r.track_rows},
    }))?;
    Ok(())
}

fn cmd_probe(a: ProbeArgs) -> Result<(), Failure> {
    if a.rounds == 0 {
        return Err(Failure::usage("--rounds must be at least 1"));
    }
    let opts = SyncOptions {
        rounds: a.rounds,
        round_timeout: Duration::from_millis(a.timeout_ms),
    };
    let report = probe(a.peer.as_str(), opts).with_context(|| format!("probing {}", a.peer))?;
    print_json(&serde_json::to_value(&report).context("encoding probe report")?)?;
    Ok(())
}
