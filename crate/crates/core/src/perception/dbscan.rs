use std::collections::VecDeque;

pub const NOISE: i32 = -1;

/// Density clustering with Euclidean distance; neighborhoods are inclusive
/// (`<= eps`) and contain the point itself.
///
/// Iteration is index-ordered: the scan visits points 0..n, expansion
/// enqueues neighbors in index order, and cluster ids are handed out in
/// discovery order. A border point reachable from several clusters belongs
/// to the first one that reaches it.
pub fn dbscan(points: &[(f64, f64)], eps: f64, min_pts: usize) -> Vec<i32> {
    const UNVISITED: i32 = -2;
    let n = points.len();
    let mut labels = vec![UNVISITED; n];
    let neighbors = |i: usize| -> Vec<usize> {
        let (xi, yi) = points[i];
        (0..n)
            .filter(|&j| {
                let dx = points[j].0 - xi;
                let dy = points[j].1 - yi;
                (dx * dx + dy * dy).sqrt() <= eps
            })
            .collect()
    };

    let mut next_id = 0;
    for i in 0..n {
        if labels[i] != UNVISITED {
            continue;
        }
        let seeds = neighbors(i);
        if seeds.len() < min_pts {
            labels[i] = NOISE;
            continue;
        }
        let id = next_id;
        next_id += 1;
        labels[i] = id;
        let mut queue: VecDeque<usize> = seeds.into_iter().filter(|&j| j != i).collect();
        while let Some(q) = queue.pop_front() {
            match labels[q] {
                NOISE => labels[q] = id,
                UNVISITED => {
                    labels[q] = id;
                    let nq = neighbors(q);
                    if nq.len() >= min_pts {
                        queue.extend(nq);
                    }
                }
                _ => {}
            }
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    fn six() -> Vec<(f64, f64)> {
        vec![(0.0, 0.0), (0.1, 0.0), (0.2, 0.0), (5.0, 5.0), (5.1, 5.0), (5.2, 5.0)]
    }

    #[test]
    fn empty_input() {
        assert!(dbscan(&[], 0.3, 3).is_empty());
    }

    #[test]
    fn two_groups() {
        assert_eq!(dbscan(&six(), 0.3, 3), vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn isolated_point_is_noise() {
        let mut pts = six();
        pts.push((10.0, 10.0));
        assert_eq!(dbscan(&pts, 0.3, 3), vec![0, 0, 0, 1, 1, 1, -1]);
    }

    #[test]
    fn border_claimed_by_first_cluster() {
        // x=0.75 is within eps of a core point in each group but is not core.
        let pts = vec![
            (0.0, 0.0), (0.1, 0.0), (0.2, 0.0), (0.3, 0.0),
            (0.75, 0.0),
            (1.2, 0.0), (1.3, 0.0), (1.4, 0.0), (1.5, 0.0),
        ];
        let labels = dbscan(&pts, 0.5, 4);
        assert_eq!(labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1]);

        // Same geometry with the right-hand group listed first: the border
        // point now goes to that group.
        let mut reordered = pts.clone();
        reordered.rotate_left(5);
        assert_eq!(dbscan(&reordered, 0.5, 4), vec![0, 0, 0, 0, 1, 1, 1, 1, 0]);
    }

    #[test]
    fn min_pts_one_makes_every_point_core() {
        let pts = vec![(0.0, 0.0), (9.0, 9.0)];
        assert_eq!(dbscan(&pts, 0.1, 1), vec![0, 1]);
    }
}
