use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{CapireError, Result};

/// Per-column mean and population standard deviation from training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStats {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Zero-variance columns, passed through unscaled.
    pub constant: Vec<bool>,
}

impl ScalingStats {
    /// Missing cells are ignored; an all-missing column is treated as constant.
    pub fn fit(matrix: &FeatureMatrix, rows: &[usize]) -> Self {
        let mut mean = Vec::with_capacity(matrix.n_cols());
        let mut std = Vec::with_capacity(matrix.n_cols());
        for j in 0..matrix.n_cols() {
            let vals: Vec<f64> = rows
                .iter()
                .map(|&i| matrix.get(i, j))
                .filter(|v| !v.is_nan())
                .collect();
            if vals.is_empty() {
                mean.push(0.0);
                std.push(0.0);
                continue;
            }
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.push(m);
            std.push(var.sqrt());
        }
        let constant = std.iter().map(|&s| s <= 1e-12).collect();
        Self {
            columns: matrix
                .column_names()
                .into_iter()
                .map(str::to_string)
                .collect(),
            mean,
            std,
            constant,
        }
    }

    pub fn fit_all(matrix: &FeatureMatrix) -> Self {
        Self::fit(matrix, &(0..matrix.n_rows()).collect::<Vec<_>>())
    }

    pub fn apply_value(&self, j: usize, v: f64) -> f64 {
        if self.constant[j] {
            v
        } else {
            (v - self.mean[j]) / self.std[j]
        }
    }

    /// Pointwise z-scoring; the column set must match the fitted one exactly.
    pub fn apply(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        if matrix.column_names() != self.columns.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(CapireError::SchemaMismatch(format!(
                "scaling fitted on {} columns, matrix has a different column set",
                self.columns.len()
            )));
        }
        let mut out = matrix.clone();
        let c = matrix.n_cols();
        for (k, v) in out.data.iter_mut().enumerate() {
            *v = self.apply_value(k % c, *v);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::StudentId;
    use crate::features::Level;
    use crate::matrix::Column;

    fn matrix(cols: &[&str], rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix {
            student_ids: (0..rows.len())
                .map(|i| StudentId(format!("S{i}")))
                .collect(),
            columns: cols
                .iter()
                .map(|c| Column {
                    name: c.to_string(),
                    level: Level::N3,
                    indicator: false,
                })
                .collect(),
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    #[test]
    fn population_std_and_constant_passthrough() {
        let m = matrix(&["x", "k"], &[&[1.0, 5.0], &[2.0, 5.0], &[3.0, 5.0]]);
        let s = ScalingStats::fit_all(&m);
        assert!((s.mean[0] - 2.0).abs() < 1e-12);
        assert!((s.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((s.std[0] - 0.8165).abs() < 1e-4);
        assert_eq!(s.constant, vec![false, true]);
        let z = s.apply(&m).unwrap();
        assert_eq!(z.get(1, 0), 0.0);
        assert_eq!(z.get(2, 1), 5.0);
    }

    #[test]
    fn test_rows_do_not_influence_fit_or_each_other() {
        let m = matrix(&["x"], &[&[1.0], &[3.0], &[100.0], &[-40.0]]);
        let s = ScalingStats::fit(&m, &[0, 1]);
        assert_eq!((s.mean[0], s.std[0]), (2.0, 1.0));
        let alone = s.apply(&m.select_rows(&[2])).unwrap();
        let together = s.apply(&m).unwrap();
        assert_eq!(alone.get(0, 0), together.get(2, 0));
    }

    #[test]
    fn mismatched_columns_rejected() {
        let s = ScalingStats::fit_all(&matrix(&["x"], &[&[1.0]]));
        assert!(matches!(
            s.apply(&matrix(&["y"], &[&[1.0]])),
            Err(CapireError::SchemaMismatch(_))
        ));
    }
}
