use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archetype::{silhouette_from_distances, Points, NOISE};
use crate::error::{CapireError, Result};
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationReport {
    pub observed: f64,
    pub permutations: usize,
    pub null_scores: Vec<f64>,
    pub null_mean: f64,
    pub n_at_least_observed: usize,
    pub p_value: f64,
}

/// Add-one empirical p-value.
pub fn empirical_p(observed: f64, null: &[f64]) -> (usize, f64) {
    let ge = null.iter().filter(|&&s| s >= observed).count();
    (ge, (1 + ge) as f64 / (null.len() + 1) as f64)
}

/// Silhouette permutation test: labels are shuffled among clustered points
/// (noise stays fixed and is excluded from scoring).
pub fn permutation_silhouette_test(
    coords: &Points,
    labels: &[i32],
    permutations: usize,
    seed: u64,
) -> Result<PermutationReport> {
    if labels.len() != coords.len() {
        return Err(CapireError::invalid("label count differs from point count"));
    }
    if permutations == 0 {
        return Err(CapireError::config(
            "permutation test needs at least one permutation",
        ));
    }
    let clustered: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != NOISE).collect();
    let sub = coords.select(&clustered);
    let base: Vec<i32> = clustered.iter().map(|&i| labels[i]).collect();
    let mut distinct = base.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(CapireError::Degenerate(
            "permutation test needs at least two clusters".into(),
        ));
    }
    let dist = sub.distance_matrix();
    let n = sub.len();
    let observed = silhouette_from_distances(&dist, n, &base)?;
    let null_scores: Vec<f64> = (0..permutations)
        .into_par_iter()
        .map(|p| {
            let mut shuffled = base.clone();
            shuffled.shuffle(&mut rng_for(seed, "permutation", p as u64));
            silhouette_from_distances(&dist, n, &shuffled)
        })
        .collect::<Result<_>>()?;
    let (ge, p_value) = empirical_p(observed, &null_scores);
    let null_mean = null_scores.iter().sum::<f64>() / permutations as f64;
    Ok(PermutationReport {
        observed,
        permutations,
        null_scores,
        null_mean,
        n_at_least_observed: ge,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_value_floor_and_rank_logic() {
        let (_, p) = empirical_p(1.0, &vec![0.0; 100]);
        assert!((p - 1.0 / 101.0).abs() < 1e-15);
        let (_, p) = empirical_p(-1.0, &[0.0, 0.1, -2.0, 0.3]);
        assert!(p > 0.5);
    }

    #[test]
    fn separated_blobs_are_significant() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3 {
            for i in 0..30 {
                rows.push(vec![
                    c as f64 * 20.0 + (i % 5) as f64 * 0.1,
                    (i / 5) as f64 * 0.1,
                ]);
                labels.push(c);
            }
        }
        rows.push(vec![100.0, 100.0]);
        labels.push(NOISE);
        let pts = Points::from_rows(&rows).unwrap();
        let r = permutation_silhouette_test(&pts, &labels, 100, 3).unwrap();
        assert!((r.p_value - 1.0 / 101.0).abs() < 1e-12);
        assert!(r.observed > 0.9);
        let again = permutation_silhouette_test(&pts, &labels, 100, 3).unwrap();
        assert_eq!(r, again);
        assert!(matches!(
            permutation_silhouette_test(&pts, &vec![0; labels.len()], 10, 1),
            Err(CapireError::Degenerate(_))
        ));
    }
}
