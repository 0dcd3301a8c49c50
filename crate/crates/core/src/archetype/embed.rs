use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::points::{sq_dist, Points};
use crate::error::{CapireError, Result};
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingParams {
    pub n_neighbors: usize,
    pub dims: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub epochs: usize,
    pub negative_sample_rate: usize,
    pub learning_rate: f64,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        Self {
            n_neighbors: 15,
            dims: 3,
            min_dist: 0.1,
            spread: 1.0,
            epochs: 200,
            negative_sample_rate: 5,
            learning_rate: 1.0,
        }
    }
}

impl EmbeddingParams {
    pub fn validate(&self, n_samples: usize) -> Result<()> {
        if self.n_neighbors < 2 || self.n_neighbors >= n_samples {
            return Err(CapireError::invalid(format!(
                "n_neighbors must satisfy 2 <= n_neighbors < n_samples (got {} with n = {n_samples})",
                self.n_neighbors
            )));
        }
        if !(2..=3).contains(&self.dims) {
            return Err(CapireError::config("embedding dims must be 2 or 3"));
        }
        if !(self.min_dist >= 0.0 && self.spread > 0.0 && self.min_dist < self.spread) {
            return Err(CapireError::config("need 0 <= min_dist < spread"));
        }
        if self.epochs == 0 || self.learning_rate <= 0.0 {
            return Err(CapireError::config(
                "epochs and learning_rate must be positive",
            ));
        }
        Ok(())
    }
}

const SMOOTH_K_TOLERANCE: f64 = 1e-5;
const MIN_K_DIST_SCALE: f64 = 1e-3;
const GRAD_CLIP: f64 = 4.0;

/// Fits `1 / (1 + a x^(2b))` to the offset-exponential target curve by
/// Levenberg-Marquardt on 300 points over `[0, 3 * spread]`.
pub fn fit_ab(min_dist: f64, spread: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x < min_dist {
                1.0
            } else {
                (-(x - min_dist) / spread).exp()
            }
        })
        .collect();
    let residuals = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| (1.0 / (1.0 + a * x.powf(2.0 * b)) - y).powi(2))
            .sum()
    };
    let (mut a, mut b, mut lambda) = (1.0f64, 1.0f64, 1e-3);
    let mut cost = residuals(a, b);
    for _ in 0..500 {
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x == 0.0 {
                continue;
            }
            let p = x.powf(2.0 * b);
            let den = 1.0 + a * p;
            let r = 1.0 / den - y;
            let ja = -p / (den * den);
            let jb = -a * p * 2.0 * x.ln() / (den * den);
            let j = [ja, jb];
            for u in 0..2 {
                jtr[u] += j[u] * r;
                for v in 0..2 {
                    jtj[u][v] += j[u] * j[v];
                }
            }
        }
        let m = [
            [jtj[0][0] * (1.0 + lambda), jtj[0][1]],
            [jtj[1][0], jtj[1][1] * (1.0 + lambda)],
        ];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let da = -(m[1][1] * jtr[0] - m[0][1] * jtr[1]) / det;
        let db = -(-m[1][0] * jtr[0] + m[0][0] * jtr[1]) / det;
        let (na, nb) = (a + da, b + db);
        let new_cost = if na > 0.0 && nb > 0.0 {
            residuals(na, nb)
        } else {
            f64::INFINITY
        };
        if new_cost < cost {
            let done = (cost - new_cost) < 1e-15 * cost.max(1e-300);
            a = na;
            b = nb;
            cost = new_cost;
            lambda *= 0.3;
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    (a, b)
}

/// Per-point `(rho, sigma)` so that the smoothed weights of the neighbours
/// sum to `log2(k + 1)`, where `k` is the neighbour count.
fn smooth_knn(knn: &[Vec<(usize, f64)>], target: f64) -> Vec<(f64, f64)> {
    let mean_all = {
        let (s, c) = knn
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, c), &(_, d)| (s + d, c + 1));
        s / c.max(1) as f64
    };
    knn.iter()
        .map(|nn| {
            let rho = nn.iter().map(|&(_, d)| d).find(|&d| d > 0.0).unwrap_or(0.0);
            let (mut lo, mut hi, mut mid) = (0.0, f64::INFINITY, 1.0);
            for _ in 0..64 {
                let psum: f64 = nn
                    .iter()
                    .map(|&(_, d)| {
                        if d - rho > 0.0 {
                            (-(d - rho) / mid).exp()
                        } else {
                            1.0
                        }
                    })
                    .sum();
                if (psum - target).abs() < SMOOTH_K_TOLERANCE {
                    break;
                }
                if psum > target {
                    hi = mid;
                    mid = (lo + hi) / 2.0;
                } else {
                    lo = mid;
                    mid = if hi.is_infinite() {
                        mid * 2.0
                    } else {
                        (lo + hi) / 2.0
                    };
                }
            }
            let floor = if rho > 0.0 {
                MIN_K_DIST_SCALE * nn.iter().map(|&(_, d)| d).sum::<f64>() / nn.len() as f64
            } else {
                MIN_K_DIST_SCALE * mean_all
            };
            (rho, mid.max(floor))
        })
        .collect()
}

/// Symmetrized fuzzy graph as directed edges `(head, tail, weight)` sorted
/// by head then tail; each undirected edge appears in both directions.
pub fn fuzzy_graph(points: &Points, n_neighbors: usize) -> Vec<(usize, usize, f64)> {
    let k = n_neighbors - 1;
    let knn = points.knn(k);
    let params = smooth_knn(&knn, (n_neighbors as f64).log2());
    let mut w: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, nn) in knn.iter().enumerate() {
        let (rho, sigma) = params[i];
        for &(j, d) in nn {
            let v = if d - rho <= 0.0 {
                1.0
            } else {
                (-(d - rho) / sigma).exp()
            };
            w.insert((i, j), v);
        }
    }
    let mut sym: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&(i, j), &v) in &w {
        let t = w.get(&(j, i)).copied().unwrap_or(0.0);
        let p = v + t - v * t;
        sym.insert((i, j), p);
        sym.insert((j, i), p);
    }
    sym.into_iter().map(|((i, j), p)| (i, j, p)).collect()
}

fn pca_init(points: &Points, dims: usize) -> Vec<f64> {
    let (n, d) = (points.len(), points.dim);
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, x) in mean.iter_mut().zip(points.row(i)) {
            *m += x / n as f64;
        }
    }
    let centred = DMatrix::from_fn(n, d, |i, j| points.row(i)[j] - mean[j]);
    let cov = centred.transpose() * &centred / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let mut out = vec![0.0; n * dims];
    for (c, &k) in order.iter().take(dims).enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for i in 0..n {
            out[i * dims + c] = centred.row(i).iter().zip(&v).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// Fuzzy-graph neighbour embedding: exact kNN graph, smoothed and
/// symmetrized memberships, PCA initialisation, then single-threaded SGD
/// with negative sampling. Deterministic under `seed`.
pub fn embed(points: &Points, params: &EmbeddingParams, seed: u64) -> Result<Points> {
    let n = points.len();
    params.validate(n)?;
    let spread_ok = (1..n).any(|i| sq_dist(points.row(0), points.row(i)) > 0.0);
    if !spread_ok {
        return Err(CapireError::Degenerate("all rows are identical".into()));
    }
    let dims = params.dims;
    let (a, b) = fit_ab(params.min_dist, params.spread);
    let mut edges = fuzzy_graph(points, params.n_neighbors);
    let max_w = edges.iter().map(|e| e.2).fold(0.0, f64::max);
    edges.retain(|e| e.2 >= max_w / params.epochs as f64);

    let mut rng = rng_for(seed, "embedding", 0);
    let mut y = pca_init(points, dims);
    let max_abs = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let noise = Normal::new(0.0, 1e-4).expect("valid");
    for v in y.iter_mut() {
        *v = if max_abs > 0.0 {
            *v * 10.0 / max_abs
        } else {
            0.0
        } + noise.sample(&mut rng);
    }

    let epochs_per_sample: Vec<f64> = edges.iter().map(|e| max_w / e.2).collect();
    let epochs_per_negative: Vec<f64> = epochs_per_sample
        .iter()
        .map(|e| e / params.negative_sample_rate as f64)
        .collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();
    let clip = |g: f64| g.clamp(-GRAD_CLIP, GRAD_CLIP);
    let mut cur = vec![0.0; dims];

    for epoch in 0..params.epochs {
        let alpha = params.learning_rate * (1.0 - epoch as f64 / params.epochs as f64);
        let e = epoch as f64;
        for (idx, &(j, k, _)) in edges.iter().enumerate() {
            if next_sample[idx] > e {
                continue;
            }
            let d2: f64 = (0..dims)
                .map(|c| (y[j * dims + c] - y[k * dims + c]).powi(2))
                .sum();
            let coeff = if d2 > 0.0 {
                -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0)
            } else {
                0.0
            };
            for c in 0..dims {
                let g = clip(coeff * (y[j * dims + c] - y[k * dims + c]));
                y[j * dims + c] += g * alpha;
                y[k * dims + c] -= g * alpha;
            }
            next_sample[idx] += epochs_per_sample[idx];

            let n_neg = ((e - next_negative[idx]) / epochs_per_negative[idx])
                .floor()
                .max(0.0) as usize;
            cur.copy_from_slice(&y[j * dims..(j + 1) * dims]);
            for _ in 0..n_neg {
                let t = rng.random_range(0..n);
                if t == j {
                    continue;
                }
                let d2: f64 = (0..dims).map(|c| (cur[c] - y[t * dims + c]).powi(2)).sum();
                let coeff = if d2 > 0.0 {
                    2.0 * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0))
                } else {
                    0.0
                };
                for c in 0..dims {
                    let g = if coeff > 0.0 {
                        clip(coeff * (cur[c] - y[t * dims + c]))
                    } else {
                        GRAD_CLIP
                    };
                    cur[c] += g * alpha;
                }
            }
            y[j * dims..(j + 1) * dims].copy_from_slice(&cur);
            next_negative[idx] += n_neg as f64 * epochs_per_negative[idx];
        }
    }
    Points::new(dims, y)
}

/// Mean fraction of each point's `k` nearest input-space neighbours that
/// are also among its `k` nearest embedded neighbours.
pub fn neighbor_preservation(input: &Points, embedded: &Points, k: usize) -> f64 {
    let a = input.knn(k);
    let b = embedded.knn(k);
    let total: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| {
            let ys: std::collections::BTreeSet<usize> = y.iter().map(|p| p.0).collect();
            x.iter().filter(|p| ys.contains(&p.0)).count() as f64 / k as f64
        })
        .sum();
    total / input.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_parameters_for_default_min_dist() {
        let (a, b) = fit_ab(0.1, 1.0);
        assert!((a - 1.577).abs() < 0.01, "a = {a}");
        assert!((b - 0.895).abs() < 0.01, "b = {b}");
    }

    #[test]
    fn memberships_sum_to_target() {
        let data: Vec<f64> = (0..60)
            .map(|i| ((i * 37) % 23) as f64 * 0.7 + (i as f64).sin())
            .collect();
        let p = Points::new(2, data).unwrap();
        let knn = p.knn(9);
        let target = 10f64.log2();
        for (nn, (rho, sigma)) in knn.iter().zip(smooth_knn(&knn, target)) {
            let s: f64 = nn
                .iter()
                .map(|&(_, d)| {
                    if d - rho > 0.0 {
                        (-(d - rho) / sigma).exp()
                    } else {
                        1.0
                    }
                })
                .sum();
            assert!((s - target).abs() < 1e-3, "{s}");
        }
    }

    #[test]
    fn identical_rows_are_degenerate() {
        let p = Points::new(2, vec![1.0; 40]).unwrap();
        assert!(matches!(
            embed(&p, &EmbeddingParams::default(), 1),
            Err(CapireError::Degenerate(_))
        ));
    }
}
