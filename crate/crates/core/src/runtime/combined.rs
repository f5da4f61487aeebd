use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::dt::{DtConfig, DtEntity};
use super::pt::PtEntity;
use super::RuntimeError;
use crate::domain::Timestamp;
use crate::dtentity::{AccParams, WriterStats, Storage};
use crate::gateway::{CommandRequest, GatewayLink};
use crate::ptsim::{Scenario, SIM_DT};
use crate::wire::{ChannelConfig, LatencyStats, SimChannel, SyncOptions};

/// Virtual epoch of a combined run (true time, microseconds).
pub const START_US: u64 = 1_600_000_000_000_000;
pub const STORE_FILE: &str = "dts.sqlite";
pub const REPORT_DIR: &str = "reports";
const STEP_US: u64 = 10_000;

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    pub data_dir: PathBuf,
    /// Overrides the scenario duration.
    pub duration_s: Option<f64>,
    /// Collect samples from the start.
    pub collect: bool,
    /// Pace the simulation against the wall clock.
    pub realtime: bool,
    pub stop: Option<Arc<AtomicBool>>,
}

impl RunOptions {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            seed: None,
            data_dir: data_dir.into(),
            duration_s: None,
            collect: false,
            realtime: false,
            stop: None,
        }
    }
}

/// Ground truth sampled every 100 ms of simulated time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub ego_speed: f64,
    pub ego_x: f64,
    pub gap: Option<f64>,
    pub setpoint: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub duration_s: f64,
    pub store_path: PathBuf,
    pub report_dir: PathBuf,
    pub latency: LatencyStats,
    pub latency_recorded: u64,
    pub clock_skew_events: u64,
    /// Vehicle clock minus twin clock, as configured.
    pub true_offset_us: i64,
    pub estimated_offset_us: Option<i64>,
    pub min_gap: Option<f64>,
    pub final_ego_speed: f64,
    pub dt_ticks: u64,
    pub collection_ticks: u64,
    pub writer: WriterStats,
    pub frames_to_dt: u64,
    pub frames_to_pt: u64,
    pub frames_dropped: u64,
    pub trace: Vec<TracePoint>,
}

fn channel_cfg(delay_ms: f64, jitter_ms: f64, drop: f64, seed: u64) -> Result<ChannelConfig, RuntimeError> {
    for (name, v) in [("delay_ms", delay_ms), ("jitter_ms", jitter_ms)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(RuntimeError::InvalidConfig(format!("network.{name} must be >= 0, got {v}")));
        }
    }
    if !(0.0..=1.0).contains(&drop) {
        return Err(RuntimeError::InvalidConfig(format!("network.drop must be in [0, 1], got {drop}")));
    }
    Ok(ChannelConfig {
        base_delay_ms: delay_ms,
        jitter_ms,
        drop_probability: drop,
        seed,
    })
}

pub fn acc_params(s: &Scenario) -> AccParams {
    AccParams {
        time_gap: s.acc.time_gap,
        standstill_dist: s.acc.standstill,
        kp_gap: s.acc.kp_gap,
        ..AccParams::default()
    }
}

/// Both entities plus the simulated link, stepped in virtual time.
pub struct CombinedRun {
    pt: PtEntity,
    dt: DtEntity,
    to_dt: SimChannel,
    to_pt: SimChannel,
    dt_offset_us: i64,
    scripted: Vec<(f64, CommandRequest)>,
    opts: RunOptions,
    seed: u64,
    duration_s: f64,
    store_path: PathBuf,
    report_dir: PathBuf,
    now_us: u64,
    min_gap: Option<f64>,
    trace: Vec<TracePoint>,
}

impl std::fmt::Debug for CombinedRun {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CombinedRun").field("seed", &self.seed).field("now_us", &self.now_us).finish_non_exhaustive()
    }
}

impl CombinedRun {
    pub fn new(scenario: &Scenario, opts: RunOptions) -> Result<Self, RuntimeError> {
        let seed = opts.seed.unwrap_or(scenario.seed);
        let duration_s = opts.duration_s.unwrap_or(scenario.duration_s);
        if !(duration_s.is_finite() && duration_s > 0.0) {
            return Err(RuntimeError::InvalidConfig(format!("duration must be positive, got {duration_s}")));
        }
        let params = acc_params(scenario);
        let mut scripted = Vec::new();
        for c in &scenario.commands {
            if !(c.t.is_finite() && c.t >= 0.0) {
                return Err(RuntimeError::InvalidConfig(format!("command time {} must be >= 0", c.t)));
            }
            scripted.push((c.t, CommandRequest::from_parts(&c.kind, c.value, &params)?));
        }
        scripted.sort_by(|a, b| a.0.total_cmp(&b.0));

        let net = &scenario.network;
        let to_dt = SimChannel::new(channel_cfg(net.delay_ms, net.jitter_ms, net.drop, seed ^ 0x5054_0001)?);
        let to_pt = SimChannel::new(channel_cfg(
            net.back_delay_ms.unwrap_or(net.delay_ms),
            net.back_jitter_ms.unwrap_or(net.jitter_ms),
            net.drop,
            seed ^ 0x4454_0002,
        )?);
        if !net.clock_offset_ms.is_finite() {
            return Err(RuntimeError::InvalidConfig("network.clock_offset_ms must be finite".into()));
        }
        let dt_offset_us = (net.clock_offset_ms * 1_000.0).round() as i64;

        std::fs::create_dir_all(&opts.data_dir)?;
        let store_path = opts.data_dir.join(STORE_FILE);
        if store_path.exists() {
            log::info!("replacing previous store {}", store_path.display());
            std::fs::remove_file(&store_path)?;
        }
        let report_dir = opts.data_dir.join(REPORT_DIR);
        let storage = Storage::open(&store_path)?;
        let dt = DtEntity::new(
            DtConfig {
                acc: params,
                set_speed: scenario.acc.set_speed,
                acc_enabled: scenario.acc.enabled,
                collect: opts.collect,
                report_dir: report_dir.clone(),
                sync: SyncOptions::default(),
            },
            storage,
        )?;
        let pt = PtEntity::new(scenario, seed)?;
        let min_gap = pt.scene().lead_gap();
        Ok(Self {
            pt,
            dt,
            to_dt,
            to_pt,
            dt_offset_us,
            scripted,
            opts,
            seed,
            duration_s,
            store_path,
            report_dir,
            now_us: START_US,
            min_gap,
            trace: Vec::new(),
        })
    }

    pub fn gateway_link(&mut self) -> GatewayLink {
        self.dt.gateway_link()
    }

    pub fn dt(&self) -> &DtEntity {
        &self.dt
    }

    pub fn pt(&self) -> &PtEntity {
        &self.pt
    }

    fn dt_clock(&self, true_ts: Timestamp) -> Timestamp {
        true_ts.offset_by(self.dt_offset_us)
    }

    /// Deliver every frame due up to `until`, in time order, including
    /// replies generated along the way.
    fn deliver_until(&mut self, until: Timestamp) {
        let mut out = Vec::new();
        loop {
            let a = self.to_dt.next_delivery().filter(|t| *t <= until);
            let b = self.to_pt.next_delivery().filter(|t| *t <= until);
            let (at, to_dt) = match (a, b) {
                (None, None) => break,
                (Some(a), None) => (a, true),
                (None, Some(b)) => (b, false),
                (Some(a), Some(b)) => if a <= b { (a, true) } else { (b, false) },
            };
            if to_dt {
                let local = self.dt_clock(at);
                for f in self.to_dt.poll(at) {
                    self.dt.on_frame(&f.bytes, local, &mut out);
                }
                for b in out.drain(..) {
                    self.to_pt.sim_channel_send(&b, at);
                }
            } else {
                for f in self.to_pt.poll(at) {
                    self.pt.on_frame(&f.bytes, at, &mut out);
                }
                for b in out.drain(..) {
                    self.to_dt.sim_channel_send(&b, at);
                }
            }
        }
    }

    /// One 10 ms step of the whole system.
    pub fn step(&mut self) -> Result<(), RuntimeError> {
        let next = Timestamp(self.now_us + STEP_US);
        self.deliver_until(next);
        self.now_us = next.micros();

        let mut out = Vec::new();
        self.pt.step(next, &mut out)?;
        for b in out.drain(..) {
            self.to_dt.sim_channel_send(&b, next);
        }

        let t = self.pt.sim_time();
        let dt_now = self.dt_clock(next);
        while let Some((at, _)) = self.scripted.first() {
            if *at > t + 1e-9 {
                break;
            }
            let (_, cmd) = self.scripted.remove(0);
            if let crate::gateway::CommandReply::Failed(e) = self.dt.apply_command(cmd, dt_now) {
                log::warn!("scripted {} rejected: {e}", cmd.kind());
            }
        }
        self.dt.poll(dt_now, &mut out);
        for b in out.drain(..) {
            self.to_pt.sim_channel_send(&b, next);
        }

        let scene = self.pt.scene();
        if let Some(g) = scene.lead_gap() {
            self.min_gap = Some(self.min_gap.map_or(g, |m: f64| m.min(g)));
        }
        if self.pt.steps().is_multiple_of(10) {
            self.trace.push(TracePoint {
                t,
                ego_speed: scene.ego.speed,
                ego_x: scene.ego.pose.x,
                gap: scene.lead_gap(),
                setpoint: self.pt.setpoint(),
            });
        }
        Ok(())
    }

    fn stopped(&self) -> bool {
        self.opts.stop.as_ref().is_some_and(|s| s.load(Ordering::Relaxed))
    }

    pub fn run(mut self) -> Result<RunSummary, RuntimeError> {
        let steps = (self.duration_s / SIM_DT).round() as u64;
        let wall_start = Instant::now();
        for k in 0..steps {
            if self.stopped() {
                log::info!("stop requested after {:.2} s", k as f64 * SIM_DT);
                break;
            }
            self.step()?;
            if self.opts.realtime {
                let target = Duration::from_micros((k + 1) * STEP_US);
                if let Some(wait) = target.checked_sub(wall_start.elapsed()) {
                    std::thread::sleep(wait);
                }
            }
        }
        self.dt.writer().flush();
        let latency = self.dt.latency();
        let frames_dropped = self
            .to_dt
            .log()
            .iter()
            .chain(self.to_pt.log())
            .filter(|r| r.outcome == crate::wire::Delivery::Dropped)
            .count() as u64;
        let summary = RunSummary {
            seed: self.seed,
            duration_s: self.pt.sim_time(),
            store_path: self.store_path.clone(),
            report_dir: self.report_dir.clone(),
            latency: latency.latency_stats(),
            latency_recorded: latency.total_recorded(),
            clock_skew_events: latency.clock_skew_events(),
            true_offset_us: -self.dt_offset_us,
            estimated_offset_us: self.dt.clock_offset().map(|o| o.offset_us),
            min_gap: self.min_gap,
            final_ego_speed: self.pt.scene().ego.speed,
            dt_ticks: self.dt.ticks(),
            collection_ticks: self.dt.collection_ticks(),
            writer: self.dt.writer().stats(),
            frames_to_dt: self.to_dt.log().len() as u64,
            frames_to_pt: self.to_pt.log().len() as u64,
            frames_dropped,
            trace: std::mem::take(&mut self.trace),
        };
        drop(self.dt.finish());
        Ok(summary)
    }
}

/// Load nothing, build everything, run to completion.
pub fn run_combined(scenario: &Scenario, opts: RunOptions) -> Result<RunSummary, RuntimeError> {
    CombinedRun::new(scenario, opts)?.run()
}
