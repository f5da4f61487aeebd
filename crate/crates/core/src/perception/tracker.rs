use serde::{Deserialize, Serialize};

use super::cluster::{classify_cluster, Cluster};
use super::kalman::{kf_predict, kf_update, KalmanState};
use super::PerceptionError;
use crate::domain::{Lifecycle, ObjectTrack, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerParams {
    pub eps: f64,
    pub min_pts: usize,
    pub gate_m: f64,
    pub confirm_hits: u32,
    pub delete_misses: u32,
    pub process_noise_sigma: f64,
    pub meas_noise_sigma: f64,
    /// Velocity variance given to a freshly spawned track.
    pub init_velocity_var: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            eps: 0.3,
            min_pts: 3,
            gate_m: 0.5,
            confirm_hits: 3,
            delete_misses: 5,
            process_noise_sigma: 0.5,
            meas_noise_sigma: 0.05,
            init_velocity_var: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrack {
    pub track: ObjectTrack,
    pub filter: KalmanState,
}

impl KalmanTrack {
    fn sync_track(&mut self) {
        let (x, y) = self.filter.position();
        let (vx, vy) = self.filter.velocity();
        self.track.x = x;
        self.track.y = y;
        self.track.vx = vx;
        self.track.vy = vy;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub tracks: Vec<KalmanTrack>,
    pub params: TrackerParams,
    next_id: u32,
    last_ts: Option<Timestamp>,
}

impl TrackerState {
    pub fn new(params: TrackerParams) -> Self {
        Self {
            tracks: Vec::new(),
            params,
            next_id: 1,
            last_ts: None,
        }
    }

    pub fn next_id(&self) -> u32 {
        self.next_id
    }

    /// Predict, associate greedily by ascending distance inside the gate,
    /// update or age tracks, and spawn tentative tracks for leftovers.
    /// Returns the confirmed tracks.
    pub fn tracker_step(&mut self, clusters: &[Cluster], ts: Timestamp) -> Result<Vec<ObjectTrack>, PerceptionError> {
        if let Some(last) = self.last_ts {
            if ts < last {
                return Err(PerceptionError::TimeWentBackwards { last, now: ts });
            }
            let dt = ts.signed_diff(last) as f64 * 1e-6;
            if dt > 0.0 {
                for t in &mut self.tracks {
                    t.filter = kf_predict(&t.filter, dt, self.params.process_noise_sigma);
                    t.sync_track();
                }
            }
        }
        self.last_ts = Some(ts);

        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, t) in self.tracks.iter().enumerate() {
            let (px, py) = t.filter.position();
            for (ci, c) in clusters.iter().enumerate() {
                let d = ((c.centroid.0 - px).powi(2) + (c.centroid.1 - py).powi(2)).sqrt();
                if d <= self.params.gate_m {
                    pairs.push((d, ti, ci));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut track_used = vec![false; self.tracks.len()];
        let mut cluster_used = vec![false; clusters.len()];
        for (_, ti, ci) in pairs {
            if track_used[ti] || cluster_used[ci] {
                continue;
            }
            track_used[ti] = true;
            cluster_used[ci] = true;
            let c = &clusters[ci];
            let t = &mut self.tracks[ti];
            t.filter = kf_update(&t.filter, c.centroid, self.params.meas_noise_sigma)?;
            t.sync_track();
            t.track.hits += 1;
            t.track.misses = 0;
            t.track.length = c.extent.0;
            t.track.width = c.extent.1;
            t.track.object_class = classify_cluster(c.extent);
            if t.track.hits >= self.params.confirm_hits {
                t.track.lifecycle = Lifecycle::Confirmed;
            }
        }

        for (t, used) in self.tracks.iter_mut().zip(&track_used) {
            if !used {
                t.track.misses += 1;
            }
        }
        let delete_at = self.params.delete_misses;
        self.tracks.retain(|t| t.track.misses < delete_at);

        for (c, used) in clusters.iter().zip(&cluster_used) {
            if *used {
                continue;
            }
            let filter = KalmanState::from_measurement(c.centroid, self.params.meas_noise_sigma, self.params.init_velocity_var);
            let id = self.next_id;
            self.next_id += 1;
            let lifecycle = if self.params.confirm_hits <= 1 {
                Lifecycle::Confirmed
            } else {
                Lifecycle::Tentative
            };
            let mut kt = KalmanTrack {
                track: ObjectTrack {
                    id,
                    x: 0.0,
                    y: 0.0,
                    vx: 0.0,
                    vy: 0.0,
                    length: c.extent.0,
                    width: c.extent.1,
                    object_class: classify_cluster(c.extent),
                    lifecycle,
                    hits: 1,
                    misses: 0,
                },
                filter,
            };
            kt.sync_track();
            self.tracks.push(kt);
        }

        Ok(self.confirmed())
    }

    pub fn confirmed(&self) -> Vec<ObjectTrack> {
        self.tracks
            .iter()
            .filter(|t| t.track.lifecycle == Lifecycle::Confirmed)
            .map(|t| t.track)
            .collect()
    }
}
