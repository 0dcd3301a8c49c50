use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal};

use crate::error::{CapireError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwuMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub p_value: f64,
    pub method: MwuMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Levene {
    pub statistic: f64,
    pub p_value: f64,
}

/// Group sizes below which the exact null distribution is used.
pub const MWU_EXACT_BELOW: usize = 10;

/// Average ranks (1-based) of the pooled sample, plus the tie term
/// `sum(t^3 - t)` over tie groups.
fn midranks(pooled: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (ranks, ties)
}

/// Two-sided exact p-value for the rank sum of the first `n1` items, by
/// dynamic programming over doubled (integer) midranks.
fn exact_p(doubled: &[usize], n1: usize, observed: usize) -> f64 {
    let n = doubled.len();
    let (k, obs, total_sum) = if n1 <= n - n1 {
        (n1, observed, 0)
    } else {
        (n - n1, doubled.iter().sum::<usize>() - observed, 0)
    };
    let _ = total_sum;
    let max_sum: usize = {
        let mut d = doubled.to_vec();
        d.sort_unstable_by(|a, b| b.cmp(a));
        d.iter().take(k).sum()
    };
    // ways[j][s]: subsets of size j with doubled-rank sum s.
    let mut ways = vec![vec![0.0f64; max_sum + 1]; k + 1];
    ways[0][0] = 1.0;
    for &r in doubled {
        for j in (1..=k).rev() {
            let (lo, hi) = ways.split_at_mut(j);
            for s in (r..=max_sum).rev() {
                let add = lo[j - 1][s - r];
                if add != 0.0 {
                    hi[0][s] += add;
                }
            }
        }
    }
    let dist = &ways[k];
    let total: f64 = dist.iter().sum();
    let le: f64 = dist[..=obs.min(max_sum)].iter().sum();
    let ge: f64 = if obs <= max_sum {
        dist[obs..].iter().sum()
    } else {
        0.0
    };
    (2.0 * le.min(ge) / total).min(1.0)
}

/// Two-sided Mann-Whitney U test. Uses the exact null distribution when
/// either sample has fewer than [`MWU_EXACT_BELOW`] values, otherwise the
/// normal approximation with tie and continuity corrections.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<MannWhitney> {
    if x.is_empty() || y.is_empty() {
        return Err(CapireError::invalid(
            "Mann-Whitney U needs two non-empty samples",
        ));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(CapireError::invalid("Mann-Whitney U input contains NaN"));
    }
    let (n1, n2) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    if n1 < MWU_EXACT_BELOW || n2 < MWU_EXACT_BELOW {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let observed: usize = doubled[..n1].iter().sum();
        return Ok(MannWhitney {
            u,
            p_value: exact_p(&doubled, n1, observed),
            method: MwuMethod::Exact,
        });
    }
    let (a, b) = (n1 as f64, n2 as f64);
    let n = a + b;
    let mu = a * b / 2.0;
    let var = a * b / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
        let std_normal = Normal::new(0.0, 1.0).expect("valid");
        (2.0 * std_normal.sf(z)).min(1.0)
    };
    Ok(MannWhitney {
        u,
        p_value,
        method: MwuMethod::Normal,
    })
}

fn median(v: &[f64]) -> f64 {
    crate::features::formulas::median(v).unwrap_or(f64::NAN)
}

/// Levene's test for equal variances with median centring.
pub fn levene_median(groups: &[&[f64]]) -> Result<Levene> {
    let k = groups.len();
    if k < 2 || groups.iter().any(|g| g.is_empty()) {
        return Err(CapireError::invalid(
            "Levene's test needs at least two non-empty groups",
        ));
    }
    let z: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let m = median(g);
            g.iter().map(|x| (x - m).abs()).collect()
        })
        .collect();
    let n: usize = z.iter().map(Vec::len).sum();
    if n <= k {
        return Err(CapireError::invalid(
            "Levene's test needs more observations than groups",
        ));
    }
    let means: Vec<f64> = z
        .iter()
        .map(|g| g.iter().sum::<f64>() / g.len() as f64)
        .collect();
    let grand = z.iter().flatten().sum::<f64>() / n as f64;
    let between: f64 = z
        .iter()
        .zip(&means)
        .map(|(g, m)| g.len() as f64 * (m - grand).powi(2))
        .sum();
    let within: f64 = z
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();
    let (df1, df2) = ((k - 1) as f64, (n - k) as f64);
    if within == 0.0 {
        let statistic = if between == 0.0 {
            f64::NAN
        } else {
            f64::INFINITY
        };
        let p_value = if between == 0.0 { 1.0 } else { 0.0 };
        return Ok(Levene { statistic, p_value });
    }
    let statistic = df2 / df1 * between / within;
    let f = FisherSnedecor::new(df1, df2).map_err(|e| CapireError::invalid(e.to_string()))?;
    Ok(Levene {
        statistic,
        p_value: f.sf(statistic).clamp(0.0, 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_approximation_matches_reference_values() {
        // Two samples of 12; reference p from the tie- and continuity-corrected approximation.
        let x: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..12).map(|i| i as f64 + 6.5).collect();
        let r = mann_whitney_u(&x, &y).unwrap();
        assert_eq!(r.method, MwuMethod::Normal);
        // U1 = sum over pairs of [x > y]: brute-force value.
        let brute: f64 = x
            .iter()
            .flat_map(|a| {
                y.iter().map(move |b| {
                    if a > b {
                        1.0
                    } else if a == b {
                        0.5
                    } else {
                        0.0
                    }
                })
            })
            .sum();
        assert_eq!(r.u, brute);
        let mu = 72.0;
        let sigma = (144.0 / 12.0 * 25.0f64).sqrt();
        let z = ((r.u - mu).abs() - 0.5) / sigma;
        let expected = 2.0 * Normal::new(0.0, 1.0).unwrap().sf(z);
        assert!((r.p_value - expected).abs() < 1e-12);
    }

    #[test]
    fn exact_small_sample() {
        // Completely separated samples of 3 and 3: p = 2 / C(6,3) = 0.1.
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.method, MwuMethod::Exact);
        assert_eq!(r.u, 0.0);
        assert!((r.p_value - 0.1).abs() < 1e-12);
    }

    #[test]
    fn levene_detects_variance_difference() {
        let tight: Vec<f64> = (0..40).map(|i| 10.0 + 0.01 * (i % 7) as f64).collect();
        let wide: Vec<f64> = (0..40)
            .map(|i| 10.0 + 3.0 * ((i * 13 % 17) as f64 - 8.0))
            .collect();
        let l = levene_median(&[&tight, &wide]).unwrap();
        assert!(l.p_value < 1e-6);
        let same = levene_median(&[&wide, &wide]).unwrap();
        assert!(same.p_value > 0.99);
    }
}
