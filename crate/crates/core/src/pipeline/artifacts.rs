use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::archetype::{Points, NOISE};
use crate::classifier::Prediction;
use crate::domain::StudentId;
use crate::error::{CapireError, Result};
use crate::features::CourseFrictionTable;

pub const VALIDATION_REPORT: &str = "validation_report.json";
pub const AUDIT: &str = "audit.json";
pub const RAW_MATRIX: &str = "features_raw.csv";
pub const EXTRACTION: &str = "extraction.json";
pub const MATRIX: &str = "matrix.csv";
pub const IMPUTATION: &str = "imputation.json";
pub const SCALING: &str = "scaling_stats.json";
pub const CLUSTERS: &str = "clusters.csv";
pub const EMBEDDING: &str = "embedding.csv";
pub const PROFILES: &str = "profiles.json";
pub const INDICES: &str = "indices.json";
pub const STABILITY: &str = "stability.json";
pub const PERMUTATION: &str = "permutation.json";
pub const TEMPORAL: &str = "temporal.json";
pub const SENSITIVITY: &str = "sensitivity.csv";
pub const SENSITIVITY_SUMMARY: &str = "sensitivity_summary.json";
pub const NOISE_ANALYSIS: &str = "noise_analysis.json";
pub const MODEL: &str = "model.json";
pub const TRAINING: &str = "training.json";
pub const EVAL_REPORT: &str = "eval_report.json";
pub const IMPORTANCE: &str = "importance.csv";
pub const PREDICTIONS: &str = "predictions.csv";
pub const PROBE: &str = "probe.json";
pub const GROUND_TRUTH: &str = "ground_truth.csv";

/// Per-row metadata of the extracted matrix, in matrix row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMeta {
    pub student_id: StudentId,
    pub cohort_year: i32,
    pub region: Option<String>,
    pub training: bool,
    pub window_empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionMeta {
    pub admissible: Vec<String>,
    pub excluded: Vec<String>,
    pub rows: Vec<RowMeta>,
    pub friction: CourseFrictionTable,
}

impl ExtractionMeta {
    pub fn regions(&self) -> Vec<Option<String>> {
        self.rows.iter().map(|r| r.region.clone()).collect()
    }

    pub fn training(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.training).collect()
    }

    pub fn window_empty(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.window_empty).collect()
    }

    pub fn cohort_years(&self) -> Vec<i32> {
        self.rows.iter().map(|r| r.cohort_year).collect()
    }
}

/// One clustered student.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub student_id: StudentId,
    /// Archetype id, or -1 for the residual group.
    pub label: i32,
    pub retained: bool,
    /// DBSCAN label before the archetype size filter.
    pub raw_label: i32,
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Reads a JSON artifact, naming the producing stage when it is absent.
pub fn read_json<T: DeserializeOwned>(dir: &Path, name: &str, stage: &'static str) -> Result<T> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(CapireError::MissingArtifact {
            artifact: path,
            stage,
        });
    }
    Ok(serde_json::from_slice(&std::fs::read(&path)?)?)
}

pub fn require(dir: &Path, name: &str, stage: &'static str) -> Result<std::path::PathBuf> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(CapireError::MissingArtifact {
            artifact: path,
            stage,
        });
    }
    Ok(path)
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| CapireError::Io(e.into_error()))
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn clusters_csv(rows: &[ClusterRow]) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(["student_id", "label", "retained", "raw_label"])?;
    for r in rows {
        w.write_record([
            r.student_id.0.clone(),
            r.label.to_string(),
            r.retained.to_string(),
            r.raw_label.to_string(),
        ])?;
    }
    finish(w)
}

pub fn read_clusters(dir: &Path) -> Result<Vec<ClusterRow>> {
    let path = require(dir, CLUSTERS, "cluster")?;
    let bad = |m: String| CapireError::Ingest {
        path: path.clone(),
        message: m,
    };
    let mut r = csv::Reader::from_path(&path).map_err(|e| bad(e.to_string()))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let int = |k: usize| {
            rec[k]
                .parse::<i32>()
                .map_err(|_| bad(format!("bad integer '{}'", &rec[k])))
        };
        let label = int(1)?;
        out.push(ClusterRow {
            student_id: StudentId(rec[0].to_string()),
            label,
            retained: label != NOISE,
            raw_label: int(3)?,
        });
    }
    Ok(out)
}

pub fn embedding_csv(ids: &[StudentId], coords: &Points) -> Result<Vec<u8>> {
    let mut w = writer();
    let mut header = vec!["student_id".to_string()];
    header.extend((0..coords.dim).map(|d| format!("x{d}")));
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.0.clone()];
        rec.extend(coords.row(i).iter().map(|&v| float(v)));
        w.write_record(&rec)?;
    }
    finish(w)
}

pub fn read_embedding(dir: &Path) -> Result<(Vec<StudentId>, Points)> {
    let path = require(dir, EMBEDDING, "cluster")?;
    let bad = |m: String| CapireError::Ingest {
        path: path.clone(),
        message: m,
    };
    let mut r = csv::Reader::from_path(&path).map_err(|e| bad(e.to_string()))?;
    let dim = r
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .len()
        .saturating_sub(1);
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        ids.push(StudentId(rec[0].to_string()));
        for cell in rec.iter().skip(1) {
            data.push(
                cell.parse::<f64>()
                    .map_err(|_| bad(format!("bad number '{cell}'")))?,
            );
        }
    }
    Ok((ids, Points::new(dim, data)?))
}

pub fn predictions_csv(classes: &[i32], predictions: &[Prediction]) -> Result<Vec<u8>> {
    let mut w = writer();
    let mut header = vec!["student_id".to_string(), "archetype".to_string()];
    header.extend(classes.iter().map(|c| format!("p_{c}")));
    w.write_record(&header)?;
    for p in predictions {
        let mut rec = vec![p.student_id.0.clone(), p.archetype.to_string()];
        rec.extend(p.distribution.iter().map(|&v| float(v)));
        w.write_record(&rec)?;
    }
    finish(w)
}
