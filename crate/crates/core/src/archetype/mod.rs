//! Neighbour embedding, density clustering, archetype filtering, validity
//! indices and archetype profiles.

mod dbscan;
mod embed;
mod indices;
mod points;
mod profile;
mod view;

use serde::{Deserialize, Serialize};

pub use dbscan::{dbscan, kdistance, suggest_eps, NOISE};
pub use embed::{embed, fit_ab, fuzzy_graph, neighbor_preservation, EmbeddingParams};
pub use indices::{
    calinski_harabasz, davies_bouldin, silhouette, silhouette_from_distances, validity_indices,
    ValidityIndices,
};
pub use points::{sq_dist, Points};
pub use profile::{profile_archetypes, ArchetypeProfile, ProfileReport};
pub use view::{clustering_view, ClusteringView};

use crate::error::{CapireError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsRule {
    /// Largest second difference of the sorted k-distance curve.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Eps {
    Value(f64),
    Rule(EpsRule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringParams {
    pub eps: Eps,
    pub min_pts: usize,
    pub min_archetype_size: usize,
}

impl Default for ClusteringParams {
    fn default() -> Self {
        Self {
            eps: Eps::Rule(EpsRule::Auto),
            min_pts: 10,
            min_archetype_size: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetainedCluster {
    pub id: i32,
    pub size: usize,
    /// The DBSCAN label this archetype was renumbered from.
    pub source_label: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredLabels {
    pub labels: Vec<i32>,
    pub retained: Vec<RetainedCluster>,
    /// Noise plus members of clusters below the size threshold.
    pub residual: usize,
}

/// Keeps clusters with at least `min_size` members, renumbered 0.. by
/// descending size (ties to the lower source label); the rest become
/// [`NOISE`].
pub fn filter_archetypes(labels: &[i32], min_size: usize) -> FilteredLabels {
    let mut sizes: std::collections::BTreeMap<i32, usize> = std::collections::BTreeMap::new();
    for &l in labels.iter().filter(|&&l| l != NOISE) {
        *sizes.entry(l).or_default() += 1;
    }
    let mut kept: Vec<(i32, usize)> = sizes.into_iter().filter(|&(_, s)| s >= min_size).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let retained: Vec<RetainedCluster> = kept
        .iter()
        .enumerate()
        .map(|(k, &(src, size))| RetainedCluster {
            id: k as i32,
            size,
            source_label: src,
        })
        .collect();
    let map: std::collections::BTreeMap<i32, i32> =
        retained.iter().map(|r| (r.source_label, r.id)).collect();
    let labels: Vec<i32> = labels
        .iter()
        .map(|l| map.get(l).copied().unwrap_or(NOISE))
        .collect();
    let residual = labels.iter().filter(|&&l| l == NOISE).count();
    FilteredLabels {
        labels,
        retained,
        residual,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSolution {
    pub coordinates: Points,
    /// DBSCAN output before size filtering.
    pub raw_labels: Vec<i32>,
    /// Archetype per point after filtering; [`NOISE`] for the residual group.
    pub labels: Vec<i32>,
    pub eps: f64,
    pub min_pts: usize,
    pub retained: Vec<RetainedCluster>,
    pub residual: usize,
    /// Over retained archetypes in embedding space; `None` with fewer than two.
    pub indices: Option<ValidityIndices>,
}

impl ClusterSolution {
    pub fn n_archetypes(&self) -> usize {
        self.retained.len()
    }
}

/// Resolves the eps setting against the embedded points.
pub fn resolve_eps(coords: &Points, params: &ClusteringParams) -> Result<f64> {
    match params.eps {
        Eps::Value(v) if v > 0.0 => Ok(v),
        Eps::Value(v) => Err(CapireError::config(format!(
            "eps must be positive, got {v}"
        ))),
        Eps::Rule(EpsRule::Auto) => {
            let k = params.min_pts.saturating_sub(1).max(1);
            let kd = kdistance(coords, k)?;
            suggest_eps(&kd)
                .ok_or_else(|| CapireError::Degenerate("k-distance curve is flat at zero".into()))
        }
    }
}

/// DBSCAN plus archetype filtering on already embedded coordinates.
pub fn cluster_embedded(coords: Points, params: &ClusteringParams) -> Result<ClusterSolution> {
    let eps = resolve_eps(&coords, params)?;
    let raw_labels = dbscan(&coords, eps, params.min_pts)?;
    let filtered = filter_archetypes(&raw_labels, params.min_archetype_size);
    let indices = if filtered.retained.len() >= 2 {
        Some(validity_indices(&coords, &filtered.labels)?)
    } else {
        None
    };
    Ok(ClusterSolution {
        coordinates: coords,
        raw_labels,
        labels: filtered.labels,
        eps,
        min_pts: params.min_pts,
        retained: filtered.retained,
        residual: filtered.residual,
        indices,
    })
}

/// Embeds standardized rows and clusters the embedding.
pub fn discover(
    points: &Points,
    embedding: &EmbeddingParams,
    clustering: &ClusteringParams,
    seed: u64,
) -> Result<ClusterSolution> {
    let coords = embed(points, embedding, seed)?;
    cluster_embedded(coords, clustering)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_examples() {
        let mut labels = vec![0; 100];
        labels.extend(vec![1; 45]);
        labels.extend(vec![2; 12]);
        labels.extend(vec![NOISE; 3]);
        let f = filter_archetypes(&labels, 40);
        assert_eq!(
            f.retained.iter().map(|r| r.size).collect::<Vec<_>>(),
            vec![100, 45]
        );
        assert_eq!(f.residual, 15);
        assert_eq!(
            f.retained.iter().map(|r| r.size).sum::<usize>() + f.residual,
            labels.len()
        );

        let f = filter_archetypes(&[0, 0, 1, 1, 1], 40);
        assert!(f.retained.is_empty());
        assert!(f.labels.iter().all(|&l| l == NOISE));
    }

    #[test]
    fn renumbering_is_by_descending_size() {
        let mut labels = vec![0; 41];
        labels.extend(vec![1; 60]);
        let f = filter_archetypes(&labels, 40);
        assert_eq!(f.labels[0], 1);
        assert_eq!(f.labels[50], 0);
    }

    #[test]
    fn eps_parses_from_number_or_rule() {
        let p: ClusteringParams = serde_json::from_str(r#"{"eps": "auto"}"#).unwrap();
        assert_eq!(p.eps, Eps::Rule(EpsRule::Auto));
        let p: ClusteringParams = serde_json::from_str(r#"{"eps": 0.5, "min_pts": 5}"#).unwrap();
        assert_eq!((p.eps, p.min_pts), (Eps::Value(0.5), 5));
    }
}
