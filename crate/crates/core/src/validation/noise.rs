use serde::{Deserialize, Serialize};

use super::recluster::{recluster, ReclusterSolution};
use super::stats::{levene_median, mann_whitney_u, Levene, MannWhitney};
use crate::archetype::{Points, NOISE};
use crate::error::{CapireError, Result};
use crate::matrix::FeatureMatrix;

/// Features compared between the residual group and archetype members
/// unless a list is configured.
pub const DEFAULT_NOISE_FEATURES: [&str; 3] = ["age_at_entry", "ifc_mean", "max_gap"];

/// Smallest residual group for which tests and reclustering are run.
pub const MIN_NOISE_GROUP: usize = 10;

pub const RECLUSTER_KS: [usize; 5] = [2, 3, 4, 5, 6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureComparison {
    pub feature: String,
    pub n_noise: usize,
    pub n_clustered: usize,
    pub noise_median: Option<f64>,
    pub clustered_median: Option<f64>,
    /// Mean absolute deviation from the group median.
    pub noise_dispersion: Option<f64>,
    pub clustered_dispersion: Option<f64>,
    pub mann_whitney: Option<MannWhitney>,
    pub levene: Option<Levene>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseAnalysisReport {
    pub n_noise: usize,
    pub n_clustered: usize,
    pub skipped: Option<String>,
    pub comparisons: Vec<FeatureComparison>,
    pub reclustering: Vec<ReclusterSolution>,
}

impl NoiseAnalysisReport {
    pub fn best_recluster(&self) -> Option<&ReclusterSolution> {
        self.reclustering
            .iter()
            .max_by(|a, b| a.silhouette.total_cmp(&b.silhouette))
    }
}

fn compare(feature: &str, noise: Vec<f64>, clustered: Vec<f64>) -> FeatureComparison {
    let med = |v: &[f64]| crate::features::formulas::median(v);
    let mad =
        |v: &[f64]| med(v).map(|m| v.iter().map(|x| (x - m).abs()).sum::<f64>() / v.len() as f64);
    let mut c = FeatureComparison {
        feature: feature.to_string(),
        n_noise: noise.len(),
        n_clustered: clustered.len(),
        noise_median: med(&noise),
        clustered_median: med(&clustered),
        noise_dispersion: mad(&noise),
        clustered_dispersion: mad(&clustered),
        mann_whitney: None,
        levene: None,
        skipped: None,
    };
    if noise.len() < MIN_NOISE_GROUP || clustered.len() < MIN_NOISE_GROUP {
        c.skipped = Some(format!(
            "fewer than {MIN_NOISE_GROUP} observed values in a group"
        ));
        return c;
    }
    match (
        mann_whitney_u(&noise, &clustered),
        levene_median(&[&noise, &clustered]),
    ) {
        (Ok(m), Ok(l)) => {
            c.mann_whitney = Some(m);
            c.levene = Some(l);
        }
        (Err(e), _) | (_, Err(e)) => c.skipped = Some(e.to_string()),
    }
    c
}

/// Compares the residual group (label [`NOISE`]) with archetype members on
/// each named feature of `matrix` (missing cells ignored), then reclusters
/// the residual rows of `space`.
pub fn noise_analysis(
    matrix: &FeatureMatrix,
    labels: &[i32],
    space: &Points,
    features: &[String],
    seed: u64,
) -> Result<NoiseAnalysisReport> {
    if labels.len() != matrix.n_rows() || space.len() != matrix.n_rows() {
        return Err(CapireError::invalid(
            "labels, matrix and reclustering space must have the same rows",
        ));
    }
    let noise: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == NOISE).collect();
    let clustered: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != NOISE).collect();
    if noise.is_empty() {
        return Err(CapireError::invalid(
            "noise analysis needs a non-empty residual group",
        ));
    }
    let mut report = NoiseAnalysisReport {
        n_noise: noise.len(),
        n_clustered: clustered.len(),
        skipped: None,
        comparisons: Vec::new(),
        reclustering: Vec::new(),
    };
    if noise.len() < MIN_NOISE_GROUP {
        report.skipped = Some(format!(
            "residual group has {} members, fewer than {MIN_NOISE_GROUP}",
            noise.len()
        ));
        return Ok(report);
    }
    for f in features {
        let col = matrix.column_index(f).ok_or_else(|| {
            CapireError::config(format!("noise analysis feature `{f}` is not in the matrix"))
        })?;
        let values = |rows: &[usize]| -> Vec<f64> {
            rows.iter()
                .map(|&r| matrix.get(r, col))
                .filter(|v| !v.is_nan())
                .collect()
        };
        report
            .comparisons
            .push(compare(f, values(&noise), values(&clustered)));
    }
    report.reclustering = recluster(&space.select(&noise), &RECLUSTER_KS, seed)?;
    Ok(report)
}
