use serde::{Deserialize, Serialize};

use super::points::Points;
use crate::error::{CapireError, Result};
use crate::matrix::{FeatureMatrix, ScalingStats};

/// The standardized sub-matrix that clustering operates on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringView {
    /// Matrix rows entering clustering: students with a non-empty window.
    pub rows: Vec<usize>,
    pub columns: Vec<String>,
    /// Feature columns dropped because a clustering row lacks a value.
    pub excluded_columns: Vec<String>,
    pub excluded_rows: usize,
    pub scaling: ScalingStats,
    pub points: Points,
}

/// Selects non-indicator columns complete over rows with a non-empty
/// window and z-scores them with statistics fitted on the training rows.
pub fn clustering_view(
    imputed: &FeatureMatrix,
    window_empty: &[bool],
    training: &[bool],
) -> Result<ClusteringView> {
    let rows: Vec<usize> = (0..imputed.n_rows())
        .filter(|&i| !window_empty[i])
        .collect();
    if rows.is_empty() {
        return Err(CapireError::Degenerate(
            "no student has an enrolment inside the observation window".into(),
        ));
    }
    let mut keep = Vec::new();
    let mut excluded_columns = Vec::new();
    for (j, c) in imputed.columns.iter().enumerate() {
        if c.indicator {
            continue;
        }
        if rows.iter().any(|&i| imputed.get(i, j).is_nan()) {
            excluded_columns.push(c.name.clone());
        } else {
            keep.push(j);
        }
    }
    if keep.is_empty() {
        return Err(CapireError::Degenerate(
            "no feature column is complete over the clustering rows".into(),
        ));
    }
    let sub = imputed.select_rows(&rows).select_columns(&keep);
    let fit_rows: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|&(_, &i)| training[i])
        .map(|(k, _)| k)
        .collect();
    let fit_rows = if fit_rows.is_empty() {
        (0..rows.len()).collect()
    } else {
        fit_rows
    };
    let scaling = ScalingStats::fit(&sub, &fit_rows);
    let scaled = scaling.apply(&sub)?;
    Ok(ClusteringView {
        excluded_rows: imputed.n_rows() - rows.len(),
        rows,
        columns: sub.column_names().into_iter().map(str::to_string).collect(),
        excluded_columns,
        scaling,
        points: Points::new(scaled.n_cols(), scaled.data)?,
    })
}
