use std::collections::VecDeque;

use super::points::Points;
use crate::error::{CapireError, Result};

pub const NOISE: i32 = -1;

/// Sorted distances from every point to its `k`-th nearest other point.
pub fn kdistance(points: &Points, k: usize) -> Result<Vec<f64>> {
    if k == 0 || k >= points.len() {
        return Err(CapireError::invalid(format!(
            "k-distance needs 1 <= k < n (k = {k}, n = {})",
            points.len()
        )));
    }
    let mut out: Vec<f64> = points.knn(k).into_iter().map(|nn| nn[k - 1].1).collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Top percentile of the k-distance curve considered by [`suggest_eps`].
pub const EPS_CURVE_PERCENTILE: usize = 99;

/// Samples the sorted k-distance curve at percentiles 0..=99 (nearest rank)
/// and returns the value at the largest discrete second
/// difference, i.e. the sharpest upward bend. Cutting the sparsest percent
/// keeps isolated far points from dominating the bend.
pub fn suggest_eps(sorted_kdist: &[f64]) -> Option<f64> {
    let n = sorted_kdist.len();
    if n < 3 {
        return sorted_kdist.last().copied().filter(|&v| v > 0.0);
    }
    let curve: Vec<f64> = (0..=EPS_CURVE_PERCENTILE)
        .map(|p| sorted_kdist[((n - 1) as f64 * p as f64 / 100.0).round() as usize])
        .collect();
    let mut best = (f64::NEG_INFINITY, 1);
    for i in 1..curve.len() - 1 {
        let d2 = curve[i + 1] - 2.0 * curve[i] + curve[i - 1];
        if d2 > best.0 {
            best = (d2, i);
        }
    }
    Some(curve[best.1]).filter(|&v| v > 0.0)
}

/// Classic DBSCAN. A point's neighbourhood includes itself; core points
/// have at least `min_pts` neighbours within `eps` (inclusive). Points are
/// visited in index order, so border points go to the first cluster that
/// reaches them. Noise is [`NOISE`].
pub fn dbscan(points: &Points, eps: f64, min_pts: usize) -> Result<Vec<i32>> {
    if !(eps > 0.0) || min_pts == 0 {
        return Err(CapireError::invalid(
            "dbscan needs eps > 0 and min_pts >= 1",
        ));
    }
    let n = points.len();
    let eps2 = eps * eps;
    let neighbours: Vec<Vec<usize>> = {
        use rayon::prelude::*;
        (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .filter(|&j| super::points::sq_dist(points.row(i), points.row(j)) <= eps2)
                    .collect()
            })
            .collect()
    };
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();
    let mut labels = vec![NOISE; n];
    let mut assigned = vec![false; n];
    let mut next = 0;
    for start in 0..n {
        if assigned[start] || !core[start] {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        assigned[start] = true;
        labels[start] = next;
        while let Some(p) = queue.pop_front() {
            if !core[p] {
                continue;
            }
            for &q in &neighbours[p] {
                if !assigned[q] {
                    assigned[q] = true;
                    labels[q] = next;
                    queue.push_back(q);
                }
            }
        }
        next += 1;
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, spacing: f64) -> Points {
        Points::new(1, (0..n).map(|i| i as f64 * spacing).collect()).unwrap()
    }

    #[test]
    fn kdistance_examples() {
        assert_eq!(kdistance(&line(4, 2.5), 1).unwrap(), vec![2.5; 4]);
        assert!(kdistance(&line(1, 1.0), 1).is_err());
    }

    #[test]
    fn two_far_blobs() {
        let eps = 1.0;
        let mut data = Vec::new();
        for b in 0..2 {
            for i in 0..50 {
                let a = i as f64 * 0.3;
                data.extend([
                    b as f64 * 100.0 * eps + 0.4 * a.cos(),
                    0.4 * a.sin(),
                    0.01 * i as f64,
                ]);
            }
        }
        let p = Points::new(3, data).unwrap();
        let labels = dbscan(&p, eps, 5).unwrap();
        assert!(labels[..50].iter().all(|&l| l == 0));
        assert!(labels[50..].iter().all(|&l| l == 1));
        let kd = kdistance(&p, 4).unwrap();
        assert!(kd.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn degenerate_cases() {
        let p = line(5, 1.0);
        assert!(dbscan(&p, 1.0, 6).unwrap().iter().all(|&l| l == NOISE));
        assert_eq!(dbscan(&line(1, 1.0), 0.5, 1).unwrap(), vec![0]);
        assert!(dbscan(&p, 0.0, 1).is_err());
    }

    #[test]
    fn border_point_goes_to_first_cluster_in_index_order() {
        let a = [0.0, 0.1, 0.2, 0.3];
        let b = [2.1, 2.2, 2.3, 2.4];
        let border = 1.2;
        let mut xs: Vec<f64> = a.to_vec();
        xs.extend(b);
        xs.push(border);
        let labels = dbscan(&Points::new(1, xs.clone()).unwrap(), 0.95, 4).unwrap();
        assert_eq!(labels, vec![0, 0, 0, 0, 1, 1, 1, 1, 0]);
        let mut ys: Vec<f64> = b.to_vec();
        ys.extend(a);
        ys.push(border);
        let labels = dbscan(&Points::new(1, ys).unwrap(), 0.95, 4).unwrap();
        assert_eq!(labels[8], 0);
        assert_eq!(labels[..4], [0; 4]);
    }

    #[test]
    fn eps_suggestion_finds_scale_jump() {
        let mut k = vec![1.0; 90];
        k.extend((0..10).map(|i| 10.0 + i as f64));
        assert_eq!(suggest_eps(&k), Some(1.0));
    }

    #[test]
    fn eps_suggestion_ignores_isolated_tail() {
        let mut k: Vec<f64> = (0..400).map(|i| 0.1 + 0.001 * i as f64).collect();
        k.extend((0..40).map(|i| 1.0 + 0.05 * i as f64));
        k.extend([40.0, 41.0, 80.0]);
        let eps = suggest_eps(&k).unwrap();
        assert!((0.45..0.55).contains(&eps), "{eps}");
    }
}
