//! One test per acceptance criterion. Each prints a single PASS/FAIL line
//! with the measured values, then asserts.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use dts_core::domain::{EgoState, Lifecycle, ObjectClass, ObjectTrack, Timestamp};
use dts_core::dtentity::{
    acc_step, generate_report, AccParams, AccState, Storage, EGO_CSV_HEADER, TRACKS_CSV_HEADER,
};
use dts_core::perception::{dbscan, Cluster, Perception, TrackerParams, TrackerState};
use dts_core::ptsim::{cast_scan, ActuationInputs, LidarConfig, Scenario};
use dts_core::runtime::{run_combined, RunOptions, RunSummary};
use dts_core::wire::{
    clock_sync, decode_message, encode_message, ChannelConfig, MessageEnvelope, MsgType, SequenceCounters,
    SimulatedPeerLink, SyncOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::dbscan_reference;

fn report(name: &str, ok: bool, detail: String) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn load(name: &str) -> Scenario {
    Scenario::load(&scenario_path(name)).unwrap()
}

fn run(sc: &Scenario, dir: &Path, duration_s: Option<f64>, collect: bool) -> RunSummary {
    let mut o = RunOptions::new(dir);
    o.duration_s = duration_s;
    o.collect = collect;
    run_combined(sc, o).unwrap()
}

#[test]
fn latency_monitor_threshold() {
    let d = tempfile::tempdir().unwrap();
    let mut sc = load("lead_brakes.json");
    sc.network.delay_ms = 20.0;
    sc.network.jitter_ms = 5.0;
    let started = Instant::now();
    let r = run(&sc, d.path(), Some(60.0), false);
    let wall = started.elapsed().as_secs_f64();

    let slow_dir = tempfile::tempdir().unwrap();
    let slow = load("slow_link.json");
    let rs = run(&slow, slow_dir.path(), Some(60.0), false);

    let ok = r.duration_s >= 59.99
        && r.latency.p95_ms < 100.0
        && r.latency.violation_count == 0
        && r.latency_recorded > 1_000
        && wall < 10.0
        && slow.network.delay_ms == 120.0
        && rs.latency.violation_count > 0;
    report(
        "latency",
        ok,
        format!(
            "20+5 ms link over {:.0} s: p95 {:.2} ms, max {:.2} ms, {} violations in {} samples, wall {:.2} s; \
             120 ms link: {} violations",
            r.duration_s,
            r.latency.p95_ms,
            r.latency.max_ms,
            r.latency.violation_count,
            r.latency_recorded,
            wall,
            rs.latency.violation_count
        ),
    );
}

fn channel(delay_ms: f64, jitter_ms: f64, seed: u64) -> ChannelConfig {
    ChannelConfig {
        base_delay_ms: delay_ms,
        jitter_ms,
        drop_probability: 0.0,
        seed,
    }
}

#[test]
fn clock_sync_accuracy() {
    let started = Instant::now();
    let mut symmetric_worst = 0i64;
    for (i, delay) in [1.0, 5.0, 20.0, 50.0, 90.0].into_iter().enumerate() {
        let mut link =
            SimulatedPeerLink::new(1_000_000_000, 0, 5_000_000, channel(delay, 0.0, i as u64), channel(delay, 0.0, 50 + i as u64));
        let off = clock_sync(&mut link, &mut SequenceCounters::default(), SyncOptions::default()).unwrap();
        symmetric_worst = symmetric_worst.max((off.offset_us - link.true_offset_us()).abs());
    }
    let mut jitter_worst = 0i64;
    for seed in 0..50 {
        let mut link =
            SimulatedPeerLink::new(1_000_000_000, 0, 5_000_000, channel(10.0, 40.0, seed), channel(10.0, 0.0, 1_000 + seed));
        let off = clock_sync(&mut link, &mut SequenceCounters::default(), SyncOptions::default()).unwrap();
        jitter_worst = jitter_worst.max((off.offset_us - link.true_offset_us()).abs());
    }
    let ok = symmetric_worst <= 1_000 && jitter_worst <= 100_000;
    report(
        "clock sync",
        ok,
        format!(
            "5 s offset: symmetric worst error {:.3} ms, 40 ms one-sided jitter worst error {:.3} ms ({:.2} s)",
            symmetric_worst as f64 / 1e3,
            jitter_worst as f64 / 1e3,
            started.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn wire_golden_fuzz_round_trip() {
    let golden: [u8; 20] = [0x44, 0x54, 0x30, 0x31, 0x01, 0x04, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0];
    let golden_ok = encode_message(&MessageEnvelope::new(MsgType::TimeReq, 0, Timestamp(0), Vec::new()))
        .map(|b| b == golden)
        .unwrap_or(false);

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut panics = 0;
    for _ in 0..100_000 {
        let len = rng.random_range(0..80);
        let mut bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        if len >= 6 && rng.random_bool(0.5) {
            bytes[..6].copy_from_slice(&golden[..6]);
            bytes[5] = rng.random_range(0..8);
        }
        if catch_unwind(AssertUnwindSafe(|| decode_message(&bytes))).is_err() {
            panics += 1;
        }
    }

    let mut mismatches = 0;
    for _ in 0..10_000 {
        let t = MsgType::ALL[rng.random_range(0..MsgType::ALL.len())];
        let body: Vec<u8> = (0..rng.random_range(0..256)).map(|_| rng.random()).collect();
        let env = MessageEnvelope::new(t, rng.random(), Timestamp(rng.random()), body);
        match encode_message(&env).ok().and_then(|b| decode_message(&b).ok()) {
            Some(back) if back == env => {}
            _ => mismatches += 1,
        }
    }
    report(
        "wire protocol",
        golden_ok && panics == 0 && mismatches == 0,
        format!("golden frame {golden_ok}, {panics} panics in 100000 fuzz cases, {mismatches} of 10000 round trips differ"),
    );
}

fn cluster_at(x: f64, y: f64) -> Cluster {
    Cluster {
        member_indices: (0..10).collect(),
        centroid: (x, y),
        extent: (0.3, 0.2),
    }
}

/// Lidar pipeline on a scene with two objects 2 m apart; returns the
/// cycle at which exactly two tracks first became Confirmed.
fn two_object_confirmation() -> (Option<usize>, usize) {
    let sc = Scenario::from_json_str(
        r#"{
          "lead": {"x": 2.75, "profile": [[0, 0.0]]},
          "obstacles": [{"kind": "rect", "x": 2.75, "y": 2.0, "length": 0.4, "width": 0.27}]
        }"#,
        Path::new("two_objects.json"),
    )
    .unwrap();
    let scene = sc.build_scene().unwrap();
    let mut p = Perception::new(LidarConfig::default(), TrackerParams::default());
    let mut first = None;
    let mut count = 0;
    for k in 1..=10 {
        let mut scan = cast_scan(&scene, &p.lidar, k as u64);
        scan.timestamp = Timestamp(k as u64 * 100_000);
        let confirmed = p.process_scan(&scan).unwrap();
        count = confirmed.len();
        if count == 2 && first.is_none() {
            first = Some(k);
        }
    }
    (first, count)
}

/// RMSE of confirmed track positions against truth, tracker fed with exact
/// centroids of a target moving at (1, 0.2) m/s.
fn tracker_cv_rmse() -> f64 {
    let mut t = TrackerState::new(TrackerParams::default());
    let (mut se, mut n) = (0.0, 0);
    for k in 0..100 {
        let s = k as f64 * 0.1;
        let truth = (1.0 + s, -0.5 + 0.2 * s);
        for tr in t.tracker_step(&[cluster_at(truth.0, truth.1)], Timestamp(k * 100_000)).unwrap() {
            se += (tr.x - truth.0).powi(2) + (tr.y - truth.1).powi(2);
            n += 1;
        }
    }
    (se / n as f64).sqrt()
}

/// Same measure through noiseless lidar, against the centre of the lead's
/// visible rear face.
fn lidar_cv_rmse() -> f64 {
    let sc = Scenario::from_json_str(
        r#"{"lead": {"x": 1.5, "profile": [[0, 0.5]]}}"#,
        Path::new("cv.json"),
    )
    .unwrap();
    let mut scene = sc.build_scene().unwrap();
    let lidar = LidarConfig {
        noise_sigma: 0.0,
        ..LidarConfig::default()
    };
    let mut p = Perception::new(lidar, TrackerParams::default());
    let (mut se, mut n) = (0.0, 0);
    for step in 0..1_000 {
        if step % 10 == 0 {
            let mut scan = cast_scan(&scene, &p.lidar, 0);
            scan.timestamp = Timestamp(step * 10_000);
            let lead = scene.lead.as_ref().unwrap();
            let truth = (lead.rear_x(), lead.state.pose.y);
            for tr in p.process_scan(&scan).unwrap() {
                se += (tr.x - truth.0).powi(2) + (tr.y - truth.1).powi(2);
                n += 1;
            }
        }
        scene = scene.step_world(step as f64 * 0.01, 0.01, ActuationInputs::default()).unwrap();
    }
    (se / n as f64).sqrt()
}

#[test]
fn perception_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(1_000);
    let mut mismatches = 0;
    for _ in 0..1_000 {
        let n = rng.random_range(0..=50);
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(0.0..4.0), rng.random_range(0.0..4.0)))
            .collect();
        let eps = rng.random_range(0.05..1.0);
        let min_pts = rng.random_range(1..=6);
        if dbscan(&pts, eps, min_pts) != dbscan_reference(&pts, eps, min_pts) {
            mismatches += 1;
        }
    }
    let (confirmed_at, final_count) = two_object_confirmation();
    let tracker_rmse = tracker_cv_rmse();
    let lidar_rmse = lidar_cv_rmse();
    let ok = mismatches == 0
        && confirmed_at.is_some_and(|k| k <= 3)
        && final_count == 2
        && tracker_rmse <= 0.1
        && lidar_rmse <= 0.1;
    report(
        "perception",
        ok,
        format!(
            "dbscan {mismatches} mismatches in 1000 instances; two objects confirmed at cycle {confirmed_at:?} \
             ({final_count} at end); CV position RMSE {tracker_rmse:.4} m (tracker), {lidar_rmse:.4} m (lidar)"
        ),
    );
}

fn random_track(rng: &mut ChaCha8Rng, id: u32) -> ObjectTrack {
    ObjectTrack {
        id,
        x: rng.random_range(-3.0..10.0),
        y: rng.random_range(-1.0..1.0),
        vx: rng.random_range(-3.0..3.0),
        vy: rng.random_range(-1.0..1.0),
        length: 0.5,
        width: 0.27,
        object_class: if rng.random_bool(0.7) { ObjectClass::Vehicle } else { ObjectClass::Obstacle },
        lifecycle: Lifecycle::Confirmed,
        hits: 3,
        misses: 0,
    }
}

#[test]
fn acc_closed_loop() {
    let d = tempfile::tempdir().unwrap();
    let braking = load("lead_brakes.json");
    let rb = run(&braking, d.path(), Some(20.0), false);
    let min_gap = rb.min_gap.unwrap();
    let stopped = rb.final_ego_speed.abs() <= 0.05;

    let d2 = tempfile::tempdir().unwrap();
    let free = load("no_lead.json");
    let rf = run(&free, d2.path(), Some(15.0), false);
    let set = free.acc.set_speed;
    let worst_after_10 = rf
        .trace
        .iter()
        .filter(|p| p.t >= 10.0)
        .map(|p| (p.ego_speed - set).abs())
        .fold(0.0, f64::max);
    let settle = rf
        .trace
        .iter()
        .rposition(|p| (p.ego_speed - set).abs() > 0.05)
        .and_then(|i| rf.trace.get(i + 1))
        .map(|p| p.t);

    let p = AccParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut out_of_range, mut emergency_nonzero) = (0, 0);
    for _ in 0..100_000 {
        let mut st = AccState::new(rng.random_range(0.0..=p.v_set_max));
        if rng.random_bool(0.9) {
            st.enable();
        }
        let emergency = rng.random_bool(0.2);
        if emergency {
            st.emergency_brake();
        }
        let n = rng.random_range(0..5);
        let tracks: Vec<ObjectTrack> = (0..n).map(|i| random_track(&mut rng, i + 1)).collect();
        let ego = EgoState {
            speed: rng.random_range(0.0..3.0),
            ..EgoState::at_rest(Timestamp(0))
        };
        if let (Some(cmd), _) = acc_step(&st, &tracks, &ego, &p) {
            if !(0.0..=st.set_speed).contains(&cmd.commanded_speed) {
                out_of_range += 1;
            }
            if emergency && cmd.commanded_speed != 0.0 {
                emergency_nonzero += 1;
            }
        } else if emergency {
            emergency_nonzero += 1;
        }
    }

    let ok = braking.lead.is_some()
        && min_gap >= 0.25
        && stopped
        && worst_after_10 <= 0.05
        && out_of_range == 0
        && emergency_nonzero == 0;
    report(
        "acc closed loop",
        ok,
        format!(
            "lead braking 1.0 to 0 m/s: min gap {min_gap:.3} m, final speed {:.4} m/s after {:.0} s; \
             no lead: within 0.05 of {set} m/s from {settle:?} s, worst after 10 s {worst_after_10:.4}; \
             100000 random steps: {out_of_range} out of range, {emergency_nonzero} emergency not zero",
            rb.final_ego_speed, rb.duration_s
        ),
    );
}

fn close_6sig(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 5e-6 * a.abs().max(b.abs())
}

fn csv_records(path: &Path) -> (String, Vec<csv::StringRecord>) {
    let text = std::fs::read_to_string(path).unwrap();
    let header = text.split('\n').next().unwrap_or_default().to_string();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    (header, rdr.records().map(|r| r.unwrap()).collect())
}

#[test]
fn data_pipeline() {
    let d = tempfile::tempdir().unwrap();
    let r = run(&load("lead_brakes.json"), d.path(), Some(10.0), true);
    let store = Storage::open_existing(&r.store_path).unwrap();
    let ego = store.ego_rows(0, i64::MAX).unwrap();
    let tracks = store.track_rows(0, i64::MAX).unwrap();
    let rows_ok = (ego.len() as i64 - r.collection_ticks as i64).abs() <= 2;
    let increasing = ego.windows(2).all(|w| w[0].ts_us < w[1].ts_us);

    let out = d.path().join("acceptance_report");
    let summary = generate_report(&store, 0, u64::MAX, &out).unwrap();
    let (ego_header, ego_csv) = csv_records(&summary.ego_csv);
    let (tracks_header, tracks_csv) = csv_records(&summary.tracks_csv);
    let headers_ok = ego_header == EGO_CSV_HEADER
        && tracks_header == TRACKS_CSV_HEADER
        && ego_header == "ts_us,speed_mps,steering_rad,acc_enabled,set_speed_mps,commanded_speed_mps"
        && tracks_header == "ts_us,track_id,x_m,y_m,vx_mps,vy_mps,length_m,width_m,class,state";

    let f = |r: &csv::StringRecord, i: usize| r[i].parse::<f64>().unwrap();
    let mut value_mismatches = 0;
    if ego_csv.len() != ego.len() || tracks_csv.len() != tracks.len() {
        value_mismatches += 1;
    }
    for (rec, row) in ego_csv.iter().zip(&ego) {
        let same = rec[0].parse::<i64>().unwrap() == row.ts_us
            && close_6sig(f(rec, 1), row.speed)
            && close_6sig(f(rec, 2), row.steering)
            && (&rec[3] == "1") == row.acc_enabled
            && close_6sig(f(rec, 4), row.set_speed)
            && close_6sig(f(rec, 5), row.commanded_speed);
        value_mismatches += usize::from(!same);
    }
    for (rec, row) in tracks_csv.iter().zip(&tracks) {
        let same = rec[0].parse::<i64>().unwrap() == row.ts_us
            && rec[1].parse::<i64>().unwrap() == row.track_id
            && [row.x, row.y, row.vx, row.vy, row.length, row.width]
                .iter()
                .enumerate()
                .all(|(i, v)| close_6sig(f(rec, i + 2), *v))
            && rec[8] == row.class
            && rec[9] == row.state;
        value_mismatches += usize::from(!same);
    }

    let ok = rows_ok && increasing && headers_ok && value_mismatches == 0 && !tracks.is_empty();
    report(
        "data pipeline",
        ok,
        format!(
            "10 s run: {} ego rows for {} collection ticks, {} track rows, ts strictly increasing {increasing}, \
             headers exact {headers_ok}, {value_mismatches} CSV rows differ from the store",
            ego.len(),
            r.collection_ticks,
            tracks.len()
        ),
    );
}

#[test]
fn determinism() {
    let sc = load("lead_brakes.json");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run(&sc, a.path(), None, true);
    let rb = run(&sc, b.path(), None, true);
    let ea = Storage::open_existing(&ra.store_path).unwrap().ego_rows(0, i64::MAX).unwrap();
    let eb = Storage::open_existing(&rb.store_path).unwrap().ego_rows(0, i64::MAX).unwrap();
    let ta = Storage::open_existing(&ra.store_path).unwrap().track_rows(0, i64::MAX).unwrap();
    let tb = Storage::open_existing(&rb.store_path).unwrap().track_rows(0, i64::MAX).unwrap();
    let ok = !ea.is_empty() && ea == eb && ta == tb;
    report(
        "determinism",
        ok,
        format!(
            "seed {}: ego tables {} and {} rows, identical {}; track tables identical {}",
            ra.seed,
            ea.len(),
            eb.len(),
            ea == eb,
            ta == tb
        ),
    );
}
