use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dbscan::NOISE;
use super::points::{sq_dist, Points};
use crate::error::{CapireError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityIndices {
    pub silhouette: f64,
    pub calinski_harabasz: f64,
    pub davies_bouldin: f64,
    pub n_clusters: usize,
    pub n_points: usize,
}

/// Non-noise rows grouped by label.
fn groups(labels: &[i32]) -> BTreeMap<i32, Vec<usize>> {
    let mut g: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l != NOISE {
            g.entry(l).or_default().push(i);
        }
    }
    g
}

fn require_two(g: &BTreeMap<i32, Vec<usize>>) -> Result<()> {
    if g.len() < 2 {
        return Err(CapireError::Degenerate(format!(
            "validity indices need at least 2 clusters, found {}",
            g.len()
        )));
    }
    Ok(())
}

/// Mean silhouette over non-noise points, from a precomputed distance
/// matrix. Points in singleton clusters score 0.
pub fn silhouette_from_distances(dist: &[f64], n: usize, labels: &[i32]) -> Result<f64> {
    let g = groups(labels);
    require_two(&g)?;
    let ids: Vec<i32> = g.keys().copied().collect();
    let slot: BTreeMap<i32, usize> = ids.iter().enumerate().map(|(k, &l)| (l, k)).collect();
    let mut total = 0.0;
    let mut count = 0usize;
    let mut sums = vec![0.0; ids.len()];
    for i in 0..n {
        if labels[i] == NOISE {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if labels[j] != NOISE {
                sums[slot[&labels[j]]] += dist[i * n + j];
            }
        }
        let own = slot[&labels[i]];
        let own_size = g[&labels[i]].len();
        count += 1;
        if own_size == 1 {
            continue;
        }
        let a = sums[own] / (own_size - 1) as f64;
        let b = ids
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != own)
            .map(|(k, l)| sums[k] / g[l].len() as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / count as f64)
}

pub fn silhouette(points: &Points, labels: &[i32]) -> Result<f64> {
    silhouette_from_distances(&points.distance_matrix(), points.len(), labels)
}

fn centroids(points: &Points, g: &BTreeMap<i32, Vec<usize>>) -> Vec<Vec<f64>> {
    g.values()
        .map(|rows| {
            let mut c = vec![0.0; points.dim];
            for &i in rows {
                for (cj, x) in c.iter_mut().zip(points.row(i)) {
                    *cj += x;
                }
            }
            c.iter_mut().for_each(|v| *v /= rows.len() as f64);
            c
        })
        .collect()
}

pub fn calinski_harabasz(points: &Points, labels: &[i32]) -> Result<f64> {
    let g = groups(labels);
    require_two(&g)?;
    let n: usize = g.values().map(Vec::len).sum();
    let k = g.len();
    if n <= k {
        return Err(CapireError::Degenerate(
            "Calinski-Harabasz needs more points than clusters".into(),
        ));
    }
    let cents = centroids(points, &g);
    let mut overall = vec![0.0; points.dim];
    for rows in g.values() {
        for &i in rows {
            for (o, x) in overall.iter_mut().zip(points.row(i)) {
                *o += x / n as f64;
            }
        }
    }
    let mut between = 0.0;
    let mut within = 0.0;
    for (rows, c) in g.values().zip(&cents) {
        between += rows.len() as f64 * sq_dist(c, &overall);
        within += rows.iter().map(|&i| sq_dist(points.row(i), c)).sum::<f64>();
    }
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(between / (k - 1) as f64 / (within / (n - k) as f64))
}

pub fn davies_bouldin(points: &Points, labels: &[i32]) -> Result<f64> {
    let g = groups(labels);
    require_two(&g)?;
    let cents = centroids(points, &g);
    let scatter: Vec<f64> = g
        .values()
        .zip(&cents)
        .map(|(rows, c)| {
            rows.iter()
                .map(|&i| sq_dist(points.row(i), c).sqrt())
                .sum::<f64>()
                / rows.len() as f64
        })
        .collect();
    let k = cents.len();
    let mut total = 0.0;
    for i in 0..k {
        let worst = (0..k)
            .filter(|&j| j != i)
            .map(|j| {
                let d = sq_dist(&cents[i], &cents[j]).sqrt();
                if d == 0.0 {
                    f64::INFINITY
                } else {
                    (scatter[i] + scatter[j]) / d
                }
            })
            .fold(0.0, f64::max);
        total += worst;
    }
    Ok(total / k as f64)
}

/// All three indices over non-noise points.
pub fn validity_indices(points: &Points, labels: &[i32]) -> Result<ValidityIndices> {
    let g = groups(labels);
    require_two(&g)?;
    Ok(ValidityIndices {
        silhouette: silhouette(points, labels)?,
        calinski_harabasz: calinski_harabasz(points, labels)?,
        davies_bouldin: davies_bouldin(points, labels)?,
        n_clusters: g.len(),
        n_points: g.values().map(Vec::len).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_far_pairs() {
        let p = Points::new(1, vec![0.0, 0.01, 100.0, 100.01]).unwrap();
        let v = validity_indices(&p, &[0, 0, 1, 1]).unwrap();
        assert!(v.silhouette > 0.999);
        assert!(v.calinski_harabasz > 1e6);
        assert!(v.davies_bouldin < 1e-3);
    }

    #[test]
    fn noise_is_ignored_and_single_cluster_errors() {
        let p = Points::new(1, vec![0.0, 1.0, 50.0, 51.0, 1000.0]).unwrap();
        let with_noise = silhouette(&p, &[0, 0, 1, 1, NOISE]).unwrap();
        let without = silhouette(&p.select(&[0, 1, 2, 3]), &[0, 0, 1, 1]).unwrap();
        assert_eq!(with_noise, without);
        assert!(validity_indices(&p, &[0, 0, 0, 0, NOISE]).is_err());
    }

    #[test]
    fn closed_form_silhouette() {
        // Points 0, 1 | 3: a(0)=1, b(0)=3 -> 2/3; a(1)=1, b(1)=2 -> 1/2; singleton -> 0.
        let p = Points::new(1, vec![0.0, 1.0, 3.0]).unwrap();
        let s = silhouette(&p, &[0, 0, 1]).unwrap();
        assert!((s - (2.0 / 3.0 + 0.5) / 3.0).abs() < 1e-12);
    }
}
