// SPDX-License-Identifier: MIT OR Apache-2.0

/// Indices of the points no other point dominates when maximizing both
/// coordinates, sorted by x (then y, then index). Exact duplicates are all
/// kept. `O(n log n)`.
pub fn pareto_frontier(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[b]
            .0
            .total_cmp(&points[a].0)
            .then(points[b].1.total_cmp(&points[a].1))
            .then(a.cmp(&b))
    });
    let mut keep = Vec::new();
    let mut best_right = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let x = points[order[i]].0;
        let group_max = points[order[i]].1;
        let mut j = i;
        while j < order.len() && points[order[j]].0 == x {
            let y = points[order[j]].1;
            if y == group_max && y > best_right {
                keep.push(order[j]);
            }
            j += 1;
        }
        best_right = best_right.max(group_max);
        i = j;
    }
    keep.sort_by(|&a, &b| {
        points[a]
            .0
            .total_cmp(&points[b].0)
            .then(points[a].1.total_cmp(&points[b].1))
            .then(a.cmp(&b))
    });
    keep
}
