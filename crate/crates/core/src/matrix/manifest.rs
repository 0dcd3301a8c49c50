use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{config_hash, write_output, FeatureMatrix};
use crate::domain::MissingnessProfile;
use crate::error::{CapireError, Result};

/// Everything needed to re-run and audit an assembly. Serializes
/// deterministically; the wall-clock timestamp lives in [`Timestamps`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub pipeline_version: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub feature_count: usize,
    pub indicator_count: usize,
    pub columns: Vec<String>,
    /// Missingness of each matrix column before imputation.
    pub feature_missingness: MissingnessProfile,
    /// Missingness of the raw input tables.
    pub input_missingness: MissingnessProfile,
    pub included_cohorts: Vec<i32>,
    pub sample_size: usize,
    pub training_size: usize,
    pub empty_window_students: usize,
    /// Output file name -> SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub execution_timestamp: String,
}

impl RunManifest {
    pub fn feature_missingness_of(raw: &FeatureMatrix) -> MissingnessProfile {
        let mut p = MissingnessProfile::default();
        for (j, c) in raw.columns.iter().enumerate() {
            p.add_column(
                c.name.clone(),
                (0..raw.n_rows()).map(|i| raw.get(i, j).is_nan()),
            );
        }
        p
    }

    /// True when `config_hash` matches the embedded snapshot.
    pub fn verify_hash(&self) -> Result<bool> {
        Ok(config_hash(&self.config)? == self.config_hash)
    }

    pub fn write(&self, dir: &Path, timestamp: Option<&str>, force: bool) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_output(&dir.join("manifest.json"), &bytes, force)?;
        if let Some(ts) = timestamp {
            let t = Timestamps {
                execution_timestamp: ts.to_string(),
            };
            write_output(
                &dir.join("timestamps.json"),
                &serde_json::to_vec_pretty(&t)?,
                force,
            )?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        if !path.exists() {
            return Err(CapireError::MissingArtifact {
                artifact: path,
                stage: "assemble",
            });
        }
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}
