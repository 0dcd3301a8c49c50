//! Scalar feature formulas. Each returns `None` where the quantity is undefined.

use crate::error::{CapireError, Result};

/// Default weight on the withdrawal share of course friction.
pub const DEFAULT_W1: f64 = 1.0;
/// Default weight on the failure share of course friction.
pub const DEFAULT_W2: f64 = 0.5;

/// Course friction `w1 * dropped / attempted + w2 * failed / attempted`.
pub fn ifc_course(attempted: u64, dropped: u64, failed: u64, w1: f64, w2: f64) -> Result<f64> {
    if attempted == 0 {
        return Err(CapireError::invalid(
            "course friction undefined for zero attempts",
        ));
    }
    if dropped + failed > attempted {
        return Err(CapireError::invalid(format!(
            "dropped ({dropped}) + failed ({failed}) exceeds attempted ({attempted})"
        )));
    }
    if !(w1 >= 0.0 && w2 >= 0.0) {
        return Err(CapireError::invalid(
            "friction weights must be non-negative",
        ));
    }
    let a = attempted as f64;
    Ok(w1 * dropped as f64 / a + w2 * failed as f64 / a)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Population standard deviation.
pub fn std_pop(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    let var = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / values.len() as f64;
    Some(var.sqrt())
}

/// Shannon entropy in bits of a count distribution; `0 log 0 = 0`.
pub fn state_entropy(counts: &[u64]) -> Option<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let t = total as f64;
    let h = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / t;
            -p * p.log2()
        })
        .sum::<f64>();
    Some(h.max(0.0))
}

/// OLS slope of `loads` against index `0..k`.
pub fn load_trend(loads: &[f64]) -> Option<f64> {
    let k = loads.len();
    if k < 2 {
        return None;
    }
    let xbar = (k as f64 - 1.0) / 2.0;
    let ybar = loads.iter().sum::<f64>() / k as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in loads.iter().enumerate() {
        let dx = i as f64 - xbar;
        sxy += dx * (y - ybar);
        sxx += dx * dx;
    }
    Some(sxy / sxx)
}

/// Longest run of idle terms between consecutive active terms.
pub fn max_gap(active_terms: &[u32]) -> Option<f64> {
    if active_terms.is_empty() {
        return None;
    }
    let gap = active_terms
        .windows(2)
        .map(|w| w[1].saturating_sub(w[0]).saturating_sub(1))
        .max()
        .unwrap_or(0);
    Some(gap as f64)
}

pub fn velocity(completed: u64, expected: u64) -> Option<f64> {
    if expected == 0 {
        None
    } else {
        Some(completed as f64 / expected as f64)
    }
}

/// Standard deviation of the spacing between consecutive active terms.
pub fn enrolment_regularity(active_terms: &[u32]) -> Option<f64> {
    if active_terms.len() < 2 {
        return None;
    }
    let diffs: Vec<f64> = active_terms
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64)
        .collect();
    std_pop(&diffs)
}

/// Fills interior gaps of a term series by linear interpolation and the
/// edges by carrying the nearest observed value. All-missing stays missing.
pub fn interpolate(series: &[Option<f64>]) -> Vec<Option<f64>> {
    let known: Vec<(usize, f64)> = series
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|x| (i, x)))
        .collect();
    if known.is_empty() {
        return series.to_vec();
    }
    (0..series.len())
        .map(|i| {
            if let Some(v) = series[i] {
                return Some(v);
            }
            let after = known.iter().position(|&(j, _)| j > i);
            Some(match after {
                None => known[known.len() - 1].1,
                Some(0) => known[0].1,
                Some(p) => {
                    let (j0, y0) = known[p - 1];
                    let (j1, y1) = known[p];
                    y0 + (y1 - y0) * (i - j0) as f64 / (j1 - j0) as f64
                }
            })
        })
        .collect()
}
