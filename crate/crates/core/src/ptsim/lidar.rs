//! Planar LiDAR synthesis by ray casting against the scene.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scene::{Aabb, Obstacle, Scene};
use crate::domain::Timestamp;

/// Defaults match a 270 degree, 0.25 degree, 10 m class scanner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarConfig {
    pub fov: f64,
    pub angular_resolution: f64,
    pub range_max: f64,
    pub noise_sigma: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            fov: 270f64.to_radians(),
            angular_resolution: 0.25f64.to_radians(),
            range_max: 10.0,
            noise_sigma: 0.01,
        }
    }
}

impl LidarConfig {
    pub fn beam_count(&self) -> usize {
        // Nudge before flooring so 270/0.25 lands on 1080, not 1079.
        (self.fov / self.angular_resolution + 1e-9).floor() as usize + 1
    }

    /// Beam angle relative to the vehicle heading.
    pub fn beam_angle(&self, i: usize) -> f64 {
        -self.fov / 2.0 + i as f64 * self.angular_resolution
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    pub timestamp: Timestamp,
    pub ranges: Vec<f64>,
}

pub fn cast_scan(scene: &Scene, cfg: &LidarConfig, rng_seed: u64) -> LidarScan {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    cast_scan_with(scene, cfg, &mut rng)
}

pub fn cast_scan_with<R: Rng + ?Sized>(scene: &Scene, cfg: &LidarConfig, rng: &mut R) -> LidarScan {
    let origin = (scene.ego.pose.x, scene.ego.pose.y);
    let heading = scene.ego.pose.heading();
    let noise = (cfg.noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.noise_sigma).expect("sigma > 0"));
    let lead_box = scene.lead.as_ref().map(|l| l.footprint());

    let ranges = (0..cfg.beam_count())
        .map(|i| {
            let a = heading + cfg.beam_angle(i);
            let dir = (a.cos(), a.sin());
            let mut best = f64::INFINITY;
            if let Some(b) = &lead_box {
                if let Some(t) = ray_aabb(origin, dir, b) {
                    best = best.min(t);
                }
            }
            for ob in &scene.obstacles {
                let hit = match ob {
                    Obstacle::Circle { x, y, radius } => ray_circle(origin, dir, (*x, *y), *radius),
                    Obstacle::Rect(b) => ray_aabb(origin, dir, b),
                };
                if let Some(t) = hit {
                    best = best.min(t);
                }
            }
            let n = noise.as_ref().map_or(0.0, |d| d.sample(rng));
            if best < cfg.range_max {
                let r = (best + n).max(0.0);
                if r >= cfg.range_max { cfg.range_max } else { r }
            } else {
                cfg.range_max
            }
        })
        .collect();

    LidarScan {
        timestamp: Timestamp::ZERO,
        ranges,
    }
}

/// Nearest non-negative hit distance along a unit ray.
pub fn ray_circle(o: (f64, f64), d: (f64, f64), c: (f64, f64), r: f64) -> Option<f64> {
    let f = (o.0 - c.0, o.1 - c.1);
    let b = f.0 * d.0 + f.1 * d.1;
    let cc = f.0 * f.0 + f.1 * f.1 - r * r;
    let disc = b * b - cc;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let t1 = -b - s;
    let t2 = -b + s;
    if t1 >= 0.0 {
        Some(t1)
    } else if t2 >= 0.0 {
        Some(t2)
    } else {
        None
    }
}

/// Slab test. Rays starting inside the box report the exit distance.
pub fn ray_aabb(o: (f64, f64), d: (f64, f64), b: &Aabb) -> Option<f64> {
    let mut t_min = f64::NEG_INFINITY;
    let mut t_max = f64::INFINITY;
    for (oc, dc, lo, hi) in [(o.0, d.0, b.min_x, b.max_x), (o.1, d.1, b.min_y, b.max_y)] {
        if dc.abs() < 1e-15 {
            if oc < lo || oc > hi {
                return None;
            }
        } else {
            let t1 = (lo - oc) / dc;
            let t2 = (hi - oc) / dc;
            t_min = t_min.max(t1.min(t2));
            t_max = t_max.min(t1.max(t2));
        }
    }
    if t_max < t_min || t_max < 0.0 {
        return None;
    }
    Some(if t_min >= 0.0 { t_min } else { t_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Pose2D;

    fn no_noise() -> LidarConfig {
        LidarConfig {
            noise_sigma: 0.0,
            ..LidarConfig::default()
        }
    }

    #[test]
    fn default_beam_count() {
        assert_eq!(LidarConfig::default().beam_count(), 1081);
        let c = LidarConfig::default();
        assert!((c.beam_angle(540)).abs() < 1e-12);
    }

    #[test]
    fn empty_scene_all_max() {
        let scan = cast_scan(&Scene::empty(), &LidarConfig::default(), 1);
        assert_eq!(scan.ranges.len(), 1081);
        assert!(scan.ranges.iter().all(|&r| r == 10.0));
    }

    #[test]
    fn circle_ahead() {
        let mut s = Scene::empty();
        s.obstacles.push(Obstacle::Circle { x: 2.0, y: 0.0, radius: 0.1 });
        let scan = cast_scan(&s, &no_noise(), 0);
        assert!((scan.ranges[540] - 1.9).abs() < 1e-9);
        let noisy = cast_scan(&s, &LidarConfig::default(), 5);
        assert!((noisy.ranges[540] - 1.9).abs() < 0.06);
    }

    #[test]
    fn same_seed_identical_scan() {
        let mut s = Scene::empty();
        s.obstacles.push(Obstacle::Rect(Aabb::centered(3.0, 1.0, 0.5, 0.5)));
        let a = cast_scan(&s, &LidarConfig::default(), 11);
        let b = cast_scan(&s, &LidarConfig::default(), 11);
        assert_eq!(a, b);
        let c = cast_scan(&s, &LidarConfig::default(), 12);
        assert_ne!(a, c);
    }

    #[test]
    fn rect_face_matches_analytic() {
        let mut s = Scene::empty();
        s.obstacles.push(Obstacle::Rect(Aabb::centered(2.25, 0.0, 0.5, 0.4)));
        let cfg = no_noise();
        let scan = cast_scan(&s, &cfg, 0);
        for (i, &r) in scan.ranges.iter().enumerate() {
            let a = cfg.beam_angle(i);
            let y_at_face = 2.0 * a.tan();
            if a.abs() < 0.09 && y_at_face.abs() < 0.19 {
                assert!((r - 2.0 / a.cos()).abs() < 1e-9, "beam {i}");
            }
        }
    }

    #[test]
    fn heading_rotates_beams() {
        let mut s = Scene::empty();
        s.ego.pose = Pose2D::new(0.0, 0.0, std::f64::consts::FRAC_PI_2).unwrap();
        s.obstacles.push(Obstacle::Circle { x: 0.0, y: 3.0, radius: 0.5 });
        let scan = cast_scan(&s, &no_noise(), 0);
        assert!((scan.ranges[540] - 2.5).abs() < 1e-9);
    }

    #[test]
    fn ray_primitives() {
        assert_eq!(ray_circle((0.0, 0.0), (1.0, 0.0), (-2.0, 0.0), 0.5), None);
        assert!((ray_circle((0.0, 0.0), (1.0, 0.0), (0.0, 0.0), 0.5).unwrap() - 0.5).abs() < 1e-12);
        let b = Aabb::centered(0.0, 5.0, 1.0, 1.0);
        assert_eq!(ray_aabb((0.0, 0.0), (1.0, 0.0), &b), None);
        assert!((ray_aabb((0.0, 0.0), (0.0, 1.0), &b).unwrap() - 4.5).abs() < 1e-12);
    }
}
