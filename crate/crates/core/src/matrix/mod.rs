//! Feature matrices, imputation, scaling, canonical hashing and run manifests.

mod assemble;
mod hash;
mod impute;
mod io;
mod manifest;
mod scale;

use serde::{Deserialize, Serialize};

pub use assemble::{assemble, Assembly};
pub use hash::{canonical_json, config_hash, sha256_hex};
pub use impute::{
    impute, ImputationModel, ImputationPolicies, ImputationStrategy, INDICATOR_SUFFIX,
};
pub use io::{ensure_writable, matrix_csv_bytes, read_matrix_csv, write_matrix_csv, write_output};
pub use manifest::{RunManifest, Timestamps};
pub use scale::ScalingStats;

use crate::domain::StudentId;
use crate::error::{CapireError, Result};
use crate::features::{FeatureVector, Level, ROSTER};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub level: Level,
    /// Missing-value indicator companion rather than a feature.
    pub indicator: bool,
}

/// Dense row-major matrix with `NaN` as the missing sentinel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub student_ids: Vec<StudentId>,
    pub columns: Vec<Column>,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.student_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.n_cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let c = self.n_cols();
        self.data[i * c + j] = v;
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.get(i, j)).collect()
    }

    /// Roster features restricted to `admissible`, in roster order, rows
    /// sorted by student id.
    pub fn from_vectors(vectors: &[FeatureVector], admissible: &[String]) -> Result<Self> {
        let keep: Vec<usize> = (0..ROSTER.len())
            .filter(|&j| admissible.iter().any(|a| a == ROSTER[j].0))
            .collect();
        for a in admissible {
            if !ROSTER.iter().any(|(n, _)| n == a) {
                return Err(CapireError::config(format!(
                    "admissible feature '{a}' has no extractor"
                )));
            }
        }
        let mut order: Vec<&FeatureVector> = vectors.iter().collect();
        order.sort_by(|a, b| a.student_id.cmp(&b.student_id));
        let columns = keep
            .iter()
            .map(|&j| Column {
                name: ROSTER[j].0.to_string(),
                level: ROSTER[j].1,
                indicator: false,
            })
            .collect();
        let mut data = Vec::with_capacity(order.len() * keep.len());
        for v in &order {
            data.extend(keep.iter().map(|&j| v.values[j].unwrap_or(f64::NAN)));
        }
        Ok(Self {
            student_ids: order.iter().map(|v| v.student_id.clone()).collect(),
            columns,
            data,
        })
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols());
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Self {
            student_ids: rows.iter().map(|&i| self.student_ids[i].clone()).collect(),
            columns: self.columns.clone(),
            data,
        }
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.n_rows() * cols.len());
        for i in 0..self.n_rows() {
            let r = self.row(i);
            data.extend(cols.iter().map(|&j| r[j]));
        }
        Self {
            student_ids: self.student_ids.clone(),
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            data,
        }
    }

    /// Fraction of missing cells per column.
    pub fn missing_fraction(&self) -> Vec<f64> {
        let n = self.n_rows().max(1) as f64;
        (0..self.n_cols())
            .map(|j| {
                (0..self.n_rows())
                    .filter(|&i| self.get(i, j).is_nan())
                    .count() as f64
                    / n
            })
            .collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows()).map(|i| self.row(i).to_vec()).collect()
    }
}
