use dts_core::perception::NOISE;

/// Reference DBSCAN: core points, connected components over core-core
/// edges, components numbered by their lowest core index, border points
/// take the lowest id among their core neighbours.
pub fn dbscan_reference(points: &[(f64, f64)], eps: f64, min_pts: usize) -> Vec<i32> {
    let n = points.len();
    let near = |i: usize, j: usize| {
        let (a, b) = (points[i], points[j]);
        ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt() <= eps
    };
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();

    let mut comp = vec![usize::MAX; n];
    for i in 0..n {
        if !core[i] || comp[i] != usize::MAX {
            continue;
        }
        let mut stack = vec![i];
        comp[i] = i;
        while let Some(p) = stack.pop() {
            for q in 0..n {
                if core[q] && comp[q] == usize::MAX && near(p, q) {
                    comp[q] = i;
                    stack.push(q);
                }
            }
        }
    }
    let mut roots: Vec<usize> = (0..n).filter(|&i| core[i]).map(|i| comp[i]).collect();
    roots.sort_unstable();
    roots.dedup();
    let id_of = |root: usize| roots.iter().position(|&r| r == root).unwrap() as i32;

    (0..n)
        .map(|i| {
            if core[i] {
                id_of(comp[i])
            } else {
                (0..n)
                    .filter(|&j| core[j] && near(i, j))
                    .map(|j| id_of(comp[j]))
                    .min()
                    .unwrap_or(NOISE)
            }
        })
        .collect()
}
