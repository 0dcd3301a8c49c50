use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::archetype::{silhouette_from_distances, sq_dist, Points};
use crate::error::{CapireError, Result};
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReclusterMethod {
    KMeans,
    AverageLinkage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReclusterSolution {
    pub method: ReclusterMethod,
    pub k: usize,
    pub silhouette: f64,
    pub sizes: Vec<usize>,
    pub labels: Vec<i32>,
    /// Silhouette for every k tried, in order.
    pub scores: Vec<(usize, f64)>,
}

const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITER: usize = 300;

fn sizes(labels: &[i32], k: usize) -> Vec<usize> {
    let mut s = vec![0; k];
    for &l in labels {
        s[l as usize] += 1;
    }
    s
}

/// Lloyd's algorithm with k-means++ seeding; best of several restarts by
/// inertia. Deterministic given `seed`.
pub fn kmeans(points: &Points, k: usize, seed: u64) -> Result<(Vec<i32>, f64)> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(CapireError::invalid(format!(
            "k-means needs 1 <= k <= n, got k={k}, n={n}"
        )));
    }
    let d = points.dim;
    let mut best: Option<(Vec<i32>, f64)> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut rng = rng_for(seed, "kmeans", (k * 1000 + restart) as u64);
        let mut centres: Vec<Vec<f64>> = vec![points.row(rng.random_range(0..n)).to_vec()];
        let mut closest: Vec<f64> = (0..n)
            .map(|i| sq_dist(points.row(i), &centres[0]))
            .collect();
        while centres.len() < k {
            let total: f64 = closest.iter().sum();
            let next = if total <= 0.0 {
                rng.random_range(0..n)
            } else {
                let mut t = rng.random::<f64>() * total;
                let mut pick = n - 1;
                for (i, &c) in closest.iter().enumerate() {
                    if t < c {
                        pick = i;
                        break;
                    }
                    t -= c;
                }
                pick
            };
            centres.push(points.row(next).to_vec());
            let c = centres.last().unwrap();
            for (i, cl) in closest.iter_mut().enumerate() {
                *cl = cl.min(sq_dist(points.row(i), c));
            }
        }
        let mut labels = vec![0i32; n];
        for iter in 0..KMEANS_MAX_ITER {
            let mut changed = false;
            for (i, label) in labels.iter_mut().enumerate() {
                let mut bl = (f64::INFINITY, 0);
                for (c, centre) in centres.iter().enumerate() {
                    let dd = sq_dist(points.row(i), centre);
                    if dd < bl.0 {
                        bl = (dd, c);
                    }
                }
                if *label != bl.1 as i32 {
                    *label = bl.1 as i32;
                    changed = true;
                }
            }
            if !changed && iter > 0 {
                break;
            }
            let mut sums = vec![vec![0.0; d]; k];
            let mut counts = vec![0usize; k];
            for (i, &l) in labels.iter().enumerate() {
                counts[l as usize] += 1;
                for (s, v) in sums[l as usize].iter_mut().zip(points.row(i)) {
                    *s += v;
                }
            }
            for c in 0..k {
                if counts[c] > 0 {
                    centres[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
                }
            }
        }
        let inertia: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| sq_dist(points.row(i), &centres[l as usize]))
            .sum();
        if best.as_ref().is_none_or(|b| inertia < b.1) {
            best = Some((labels, inertia));
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Average-linkage agglomerative clustering over a full distance matrix,
/// returning the cut at each requested number of clusters.
pub fn average_linkage_cuts(
    dist: &[f64],
    n: usize,
    ks: &[usize],
) -> Result<Vec<(usize, Vec<i32>)>> {
    if ks.iter().any(|&k| k == 0 || k > n) {
        return Err(CapireError::invalid("cluster counts must lie in 1..=n"));
    }
    let mut d = dist.to_vec();
    let mut size = vec![1usize; n];
    let mut active: Vec<bool> = vec![true; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut cuts = Vec::new();
    let mut remaining = n;
    let snapshot = |members: &Vec<Vec<usize>>, active: &Vec<bool>| {
        let mut labels = vec![0i32; n];
        let mut groups: Vec<&Vec<usize>> =
            (0..n).filter(|&c| active[c]).map(|c| &members[c]).collect();
        groups.sort_by_key(|g| g.iter().min().copied());
        for (l, g) in groups.iter().enumerate() {
            for &i in g.iter() {
                labels[i] = l as i32;
            }
        }
        labels
    };
    loop {
        if ks.contains(&remaining) {
            cuts.push((remaining, snapshot(&members, &active)));
        }
        if remaining <= *ks.iter().min().unwrap_or(&1) {
            break;
        }
        let mut best = (f64::INFINITY, 0, 0);
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                if d[i * n + j] < best.0 {
                    best = (d[i * n + j], i, j);
                }
            }
        }
        let (_, a, b) = best;
        for c in (0..n).filter(|&c| active[c] && c != a && c != b) {
            let v = (size[a] as f64 * d[a * n + c] + size[b] as f64 * d[b * n + c])
                / (size[a] + size[b]) as f64;
            d[a * n + c] = v;
            d[c * n + a] = v;
        }
        size[a] += size[b];
        active[b] = false;
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);
        remaining -= 1;
    }
    cuts.sort_by_key(|c| c.0);
    Ok(cuts)
}

/// Runs k-means and average linkage for every k in `ks` and keeps, per
/// method, the k with the highest silhouette (ties to the smaller k).
pub fn recluster(points: &Points, ks: &[usize], seed: u64) -> Result<Vec<ReclusterSolution>> {
    let n = points.len();
    let ks: Vec<usize> = ks.iter().copied().filter(|&k| k >= 2 && k < n).collect();
    if ks.is_empty() {
        return Err(CapireError::Degenerate(format!(
            "{n} points are too few to recluster"
        )));
    }
    let dist = points.distance_matrix();
    let pick = |method, runs: Vec<(usize, Vec<i32>)>| -> Result<ReclusterSolution> {
        let mut scores = Vec::new();
        let mut best: Option<(usize, f64, Vec<i32>)> = None;
        for (k, labels) in runs {
            let s = silhouette_from_distances(&dist, n, &labels)?;
            scores.push((k, s));
            if best.as_ref().is_none_or(|b| s > b.1) {
                best = Some((k, s, labels));
            }
        }
        let (k, silhouette, labels) = best.expect("non-empty");
        Ok(ReclusterSolution {
            method,
            k,
            silhouette,
            sizes: sizes(&labels, k),
            labels,
            scores,
        })
    };
    let km: Vec<(usize, Vec<i32>)> = ks
        .iter()
        .map(|&k| kmeans(points, k, seed).map(|(l, _)| (k, l)))
        .collect::<Result<_>>()?;
    let al = average_linkage_cuts(&dist, n, &ks)?;
    Ok(vec![
        pick(ReclusterMethod::KMeans, km)?,
        pick(ReclusterMethod::AverageLinkage, al)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_groups() -> Points {
        let mut rows = Vec::new();
        for i in 0..12 {
            rows.push(vec![(i % 3) as f64 * 0.1, (i / 3) as f64 * 0.1]);
            rows.push(vec![
                10.0 + (i % 3) as f64 * 0.1,
                5.0 + (i / 3) as f64 * 0.1,
            ]);
        }
        Points::from_rows(&rows).unwrap()
    }

    #[test]
    fn both_methods_find_two_groups() {
        let sols = recluster(&two_groups(), &[2, 3, 4, 5, 6], 9).unwrap();
        for s in &sols {
            assert_eq!(s.k, 2, "{:?}", s.method);
            assert_eq!(s.sizes, vec![12, 12]);
            assert!(s.silhouette > 0.9);
        }
    }

    #[test]
    fn linkage_cut_matches_hand_example() {
        // Points on a line at 0, 1, 5: first merge {0,1}, then everything.
        let p = Points::from_rows(&[vec![0.0], vec![1.0], vec![5.0]]).unwrap();
        let cuts = average_linkage_cuts(&p.distance_matrix(), 3, &[1, 2, 3]).unwrap();
        assert_eq!(cuts[0], (1, vec![0, 0, 0]));
        assert_eq!(cuts[1], (2, vec![0, 0, 1]));
        assert_eq!(cuts[2], (3, vec![0, 1, 2]));
    }

    #[test]
    fn kmeans_is_deterministic() {
        let p = two_groups();
        assert_eq!(kmeans(&p, 3, 4).unwrap(), kmeans(&p, 3, 4).unwrap());
    }
}
