use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dbscan::NOISE;
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeProfile {
    /// [`NOISE`] for the residual group.
    pub archetype_id: i32,
    pub size: usize,
    pub mean: Vec<f64>,
    /// `(mean - population mean) / population std`; 0 for constant columns.
    pub z: Vec<f64>,
    /// Ex-post attrition among members with a known outcome.
    pub attrition_rate: Option<f64>,
    pub narrative: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub columns: Vec<String>,
    pub population_mean: Vec<f64>,
    pub population_std: Vec<f64>,
    pub population_attrition: Option<f64>,
    pub profiles: Vec<ArchetypeProfile>,
}

fn mean_std(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = vals.filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (
        m,
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt(),
    )
}

fn rate(flags: impl Iterator<Item = Option<u8>>) -> Option<f64> {
    let known: Vec<u8> = flags.flatten().collect();
    (!known.is_empty()).then(|| known.iter().map(|&f| f as f64).sum::<f64>() / known.len() as f64)
}

/// Descriptive profile per archetype (and the residual group, listed last).
/// Outcomes are joined only here, after clustering.
pub fn profile_archetypes(
    matrix: &FeatureMatrix,
    labels: &[i32],
    attrition: &[Option<u8>],
) -> ProfileReport {
    let cols: Vec<usize> = (0..matrix.n_cols())
        .filter(|&j| !matrix.columns[j].indicator)
        .collect();
    let stats: Vec<(f64, f64)> = cols
        .iter()
        .map(|&j| mean_std((0..matrix.n_rows()).map(|i| matrix.get(i, j))))
        .collect();
    let mut members: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    let mut order: Vec<i32> = members.keys().copied().filter(|&l| l != NOISE).collect();
    if members.contains_key(&NOISE) {
        order.push(NOISE);
    }
    let profiles = order
        .into_iter()
        .map(|id| {
            let rows = &members[&id];
            let mean: Vec<f64> = cols
                .iter()
                .map(|&j| mean_std(rows.iter().map(|&i| matrix.get(i, j))).0)
                .collect();
            let z = mean
                .iter()
                .zip(&stats)
                .map(|(m, (pm, ps))| {
                    if *ps > 0.0 && !m.is_nan() {
                        (m - pm) / ps
                    } else {
                        0.0
                    }
                })
                .collect();
            ArchetypeProfile {
                archetype_id: id,
                size: rows.len(),
                mean,
                z,
                attrition_rate: rate(rows.iter().map(|&i| attrition[i])),
                narrative: String::new(),
            }
        })
        .collect();
    ProfileReport {
        columns: cols
            .iter()
            .map(|&j| matrix.columns[j].name.clone())
            .collect(),
        population_mean: stats.iter().map(|s| s.0).collect(),
        population_std: stats.iter().map(|s| s.1).collect(),
        population_attrition: rate(attrition.iter().copied()),
        profiles,
    }
}
