use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ari::adjusted_rand_index;
use super::summary::Summary;
use crate::archetype::{
    cluster_embedded, discover, embed, ClusterSolution, ClusteringParams, EmbeddingParams, Eps,
    Points,
};
use crate::error::{CapireError, Result};
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleOutcome {
    pub index: usize,
    pub distinct: usize,
    /// `None` when the resample was skipped.
    pub ari: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub resamples: usize,
    pub completed: usize,
    pub skipped: usize,
    pub outcomes: Vec<ResampleOutcome>,
    pub summary: Option<Summary>,
}

impl StabilityReport {
    pub fn mean_ari(&self) -> Option<f64> {
        self.summary.map(|s| s.mean)
    }
}

fn one_resample(
    points: &Points,
    reference: &[i32],
    embedding: &EmbeddingParams,
    clustering: &ClusteringParams,
    seed: u64,
    b: usize,
) -> ResampleOutcome {
    let n = points.len();
    let mut rng = rng_for(seed, "bootstrap", b as u64);
    let draws: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut first: BTreeMap<usize, usize> = BTreeMap::new();
    for (pos, &i) in draws.iter().enumerate() {
        first.entry(i).or_insert(pos);
    }
    let distinct = first.len();
    let skip = |note: String| ResampleOutcome {
        index: b,
        distinct,
        ari: None,
        note: Some(note),
    };
    if distinct < embedding.n_neighbors {
        return skip(format!(
            "{distinct} distinct students, fewer than n_neighbors"
        ));
    }
    let sample = points.select(&draws);
    let embed_seed = rng.random::<u64>();
    match discover(&sample, embedding, clustering, embed_seed) {
        Ok(sol) => {
            let (ra, rb): (Vec<i32>, Vec<i32>) = first
                .iter()
                .map(|(&i, &pos)| (reference[i], sol.labels[pos]))
                .unzip();
            match adjusted_rand_index(&ra, &rb) {
                Ok(a) => ResampleOutcome {
                    index: b,
                    distinct,
                    ari: Some(a),
                    note: None,
                },
                Err(e) => skip(e.to_string()),
            }
        }
        Err(e) => skip(e.to_string()),
    }
}

/// Resamples students with replacement, reruns embedding and clustering on
/// each resample and scores archetype labels against `reference` over the
/// distinct students drawn.
pub fn bootstrap_stability(
    points: &Points,
    reference: &[i32],
    embedding: &EmbeddingParams,
    clustering: &ClusteringParams,
    resamples: usize,
    seed: u64,
) -> Result<StabilityReport> {
    if reference.len() != points.len() {
        return Err(CapireError::invalid(format!(
            "reference has {} labels for {} points",
            reference.len(),
            points.len()
        )));
    }
    if resamples == 0 {
        return Err(CapireError::config("bootstrap needs at least one resample"));
    }
    let outcomes: Vec<ResampleOutcome> = (0..resamples)
        .into_par_iter()
        .map(|b| one_resample(points, reference, embedding, clustering, seed, b))
        .collect();
    let aris: Vec<f64> = outcomes.iter().filter_map(|o| o.ari).collect();
    Ok(StabilityReport {
        resamples,
        completed: aris.len(),
        skipped: resamples - aris.len(),
        summary: Summary::of(&aris),
        outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCell {
    pub n_neighbors: usize,
    pub eps: f64,
    pub min_pts: usize,
    pub n_archetypes: Option<usize>,
    pub ari: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityGrid {
    pub n_neighbors: Vec<usize>,
    /// Multipliers applied to the reference eps.
    pub eps_factors: Vec<f64>,
    pub min_pts: Vec<usize>,
}

impl SensitivityGrid {
    /// Three values per axis around the reference: n_neighbors +-5,
    /// eps x0.8 / x1.2, min_pts +-3.
    pub fn around(embedding: &EmbeddingParams, clustering: &ClusteringParams) -> Self {
        let k = embedding.n_neighbors;
        let m = clustering.min_pts;
        SensitivityGrid {
            n_neighbors: vec![k.saturating_sub(5).max(2), k, k + 5],
            eps_factors: vec![0.8, 1.0, 1.2],
            min_pts: vec![m.saturating_sub(3).max(1), m, m + 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub reference_eps: f64,
    pub cells: Vec<SensitivityCell>,
    pub failed: usize,
    pub summary: Option<Summary>,
}

impl SensitivityReport {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "n_neighbors",
            "eps",
            "min_pts",
            "n_archetypes",
            "ari",
            "error",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.n_neighbors.to_string(),
                format!("{:.16e}", c.eps),
                c.min_pts.to_string(),
                c.n_archetypes.map(|v| v.to_string()).unwrap_or_default(),
                c.ari.map(|v| format!("{:.16e}", v)).unwrap_or_default(),
                c.error.clone().unwrap_or_default(),
            ])?;
        }
        w.into_inner().map_err(|e| CapireError::Io(e.into_error()))
    }
}

/// Reruns the pipeline over a grid of (n_neighbors, eps factor, min_pts) and
/// scores each cell's archetype labels against the reference solution. Every
/// cell uses the reference embedding seed, so the reference cell reproduces
/// the reference labels.
pub fn hyperparameter_sensitivity(
    points: &Points,
    reference: &ClusterSolution,
    embedding: &EmbeddingParams,
    clustering: &ClusteringParams,
    grid: &SensitivityGrid,
    seed: u64,
) -> Result<SensitivityReport> {
    let embeddings: Vec<(usize, Result<Points>)> = grid
        .n_neighbors
        .par_iter()
        .map(|&k| {
            let params = EmbeddingParams {
                n_neighbors: k,
                ..embedding.clone()
            };
            (
                k,
                params
                    .validate(points.len())
                    .and_then(|_| embed(points, &params, seed)),
            )
        })
        .collect();
    let mut jobs = Vec::new();
    for (k, coords) in &embeddings {
        for &f in &grid.eps_factors {
            for &m in &grid.min_pts {
                jobs.push((*k, coords, reference.eps * f, m));
            }
        }
    }
    let cells: Vec<SensitivityCell> = jobs
        .into_par_iter()
        .map(|(k, coords, eps, m)| {
            let fail = |e: String| SensitivityCell {
                n_neighbors: k,
                eps,
                min_pts: m,
                n_archetypes: None,
                ari: None,
                error: Some(e),
            };
            let coords = match coords {
                Ok(c) => c.clone(),
                Err(e) => return fail(e.to_string()),
            };
            let params = ClusteringParams {
                eps: Eps::Value(eps),
                min_pts: m,
                ..clustering.clone()
            };
            match cluster_embedded(coords, &params).and_then(|s| {
                Ok((
                    s.n_archetypes(),
                    adjusted_rand_index(&reference.labels, &s.labels)?,
                ))
            }) {
                Ok((na, ari)) => SensitivityCell {
                    n_neighbors: k,
                    eps,
                    min_pts: m,
                    n_archetypes: Some(na),
                    ari: Some(ari),
                    error: None,
                },
                Err(e) => fail(e.to_string()),
            }
        })
        .collect();
    let aris: Vec<f64> = cells.iter().filter_map(|c| c.ari).collect();
    Ok(SensitivityReport {
        reference_eps: reference.eps,
        failed: cells.len() - aris.len(),
        summary: Summary::of(&aris),
        cells,
    })
}
