use dts_core::domain::{EgoState, Lifecycle, ObjectClass, ObjectTrack, Timestamp};
use dts_core::dtentity::{
    acc_following_speed, acc_step, generate_report, select_lead, AccParams, AccState, Collector, Storage,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn track(id: u32, x: f64, y: f64, vx: f64, vehicle: bool) -> ObjectTrack {
    ObjectTrack {
        id,
        x,
        y,
        vx,
        vy: 0.0,
        length: 0.05,
        width: 0.27,
        object_class: if vehicle { ObjectClass::Vehicle } else { ObjectClass::Obstacle },
        lifecycle: Lifecycle::Confirmed,
        hits: 3,
        misses: 0,
    }
}

fn tracks() -> impl Strategy<Value = Vec<ObjectTrack>> {
    prop::collection::vec((-2.0f64..8.0, -1.0f64..1.0, -2.0f64..2.0, prop::bool::weighted(0.8)), 0..8).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (x, y, vx, veh))| track(i as u32 + 1, x, y, vx, veh))
            .collect()
    })
}

fn ego(speed: f64) -> EgoState {
    EgoState {
        speed,
        ..EgoState::at_rest(Timestamp(0))
    }
}

#[test]
fn commanded_speed_bounded_over_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let p = AccParams::default();
    for _ in 0..100_000 {
        let mut st = AccState::new(rng.random_range(0.0..=p.v_set_max));
        if rng.random_bool(0.8) {
            st.enable();
        }
        let emergency = rng.random_bool(0.1);
        if emergency {
            st.emergency_brake();
        }
        let n = rng.random_range(0..5);
        let ts: Vec<ObjectTrack> = (0..n)
            .map(|i| {
                track(
                    i + 1,
                    rng.random_range(-3.0..10.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_bool(0.7),
                )
            })
            .collect();
        let (cmd, next) = acc_step(&st, &ts, &ego(rng.random_range(0.0..3.0)), &p);
        if let Some(cmd) = cmd {
            assert!(cmd.commanded_speed >= 0.0 && cmd.commanded_speed <= st.set_speed);
            if emergency {
                assert_eq!(cmd.commanded_speed, 0.0);
                assert!(cmd.emergency);
            }
        } else {
            assert!(!st.enabled && !emergency);
        }
        if emergency {
            assert_eq!(next.last_command, 0.0);
        }
    }
}

proptest! {
    #[test]
    fn lead_selection_is_permutation_invariant(ts in tracks(), rot in 0usize..8, rev in any::<bool>()) {
        let p = AccParams::default();
        let mut shuffled = ts.clone();
        if !shuffled.is_empty() {
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
        }
        if rev {
            shuffled.reverse();
        }
        prop_assert_eq!(select_lead(&ts, &p), select_lead(&shuffled, &p));
    }

    #[test]
    fn following_speed_monotone_in_distance(
        d in 0.0f64..10.0,
        extra in 0.0f64..5.0,
        ego_v in 0.0f64..3.0,
        rel_v in -3.0f64..3.0,
        set in 0.0f64..3.0,
    ) {
        let p = AccParams::default();
        let mut st = AccState::new(set);
        st.enable();
        let near = acc_following_speed(&track(1, d, 0.0, rel_v, true), ego_v, &st, &p);
        let far = acc_following_speed(&track(1, d + extra, 0.0, rel_v, true), ego_v, &st, &p);
        prop_assert!(far >= near);
    }

    #[test]
    fn report_rows_equal_stored_rows(
        stamps in prop::collection::btree_set(1u64..10_000, 0..40),
        tracks_per in prop::collection::vec(0usize..3, 40),
        a in 0u64..10_000,
        b in 0u64..10_000,
    ) {
        let (from, to) = (a.min(b), a.max(b));
        let mut s = Storage::open_in_memory().unwrap();
        let mut c = Collector::default();
        c.start();
        let mut expected_ego = 0;
        let mut expected_tracks = 0;
        for (i, ts) in stamps.iter().enumerate() {
            let n = tracks_per[i % tracks_per.len()];
            let tr: Vec<ObjectTrack> = (0..n).map(|k| track(k as u32 + 1, 1.0, 0.0, 0.0, true)).collect();
            c.collect_sample(&mut s, &ego(1.0), &tr, *ts).unwrap();
            if (from..=to).contains(ts) {
                expected_ego += 1;
                expected_tracks += n;
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let r = generate_report(&s, from, to, dir.path()).unwrap();
        prop_assert_eq!(r.ego_rows, expected_ego);
        prop_assert_eq!(r.track_rows, expected_tracks);
        let lines = std::fs::read_to_string(&r.ego_csv).unwrap().lines().count();
        prop_assert_eq!(lines, expected_ego + 1);
    }
}
