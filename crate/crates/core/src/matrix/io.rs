use std::path::Path;

use super::{Column, FeatureMatrix};
use crate::domain::StudentId;
use crate::error::{CapireError, Result};
use crate::features::roster_level;

/// Errors with `OutputExists` when `path` exists and `force` is off.
pub fn ensure_writable(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(CapireError::OutputExists(path.to_path_buf()));
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(())
}

pub fn write_output(path: &Path, bytes: &[u8], force: bool) -> Result<()> {
    ensure_writable(path, force)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

fn format_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.16e}")
    }
}

/// CSV bytes: header `student_id,<columns>`, 17 significant digits per
/// cell, empty cell for missing.
pub fn matrix_csv_bytes(m: &FeatureMatrix) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec!["student_id"];
    header.extend(m.column_names());
    w.write_record(&header)?;
    for i in 0..m.n_rows() {
        let mut rec = vec![m.student_ids[i].0.clone()];
        rec.extend(m.row(i).iter().map(|&v| format_cell(v)));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| CapireError::Io(e.into_error()))
}

pub fn write_matrix_csv(m: &FeatureMatrix, path: &Path, force: bool) -> Result<Vec<u8>> {
    let bytes = matrix_csv_bytes(m)?;
    write_output(path, &bytes, force)?;
    Ok(bytes)
}

/// Reads a matrix written by [`write_matrix_csv`]. Level tags are restored
/// from the roster; `<name>_missing` columns are indicators.
pub fn read_matrix_csv(path: &Path) -> Result<FeatureMatrix> {
    let ingest = |message: String| CapireError::Ingest {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| ingest(e.to_string()))?;
    let header = r.headers().map_err(|e| ingest(e.to_string()))?.clone();
    if header.get(0) != Some("student_id") {
        return Err(ingest("first column must be student_id".into()));
    }
    let mut columns = Vec::new();
    for name in header.iter().skip(1) {
        let base = name.strip_suffix(super::INDICATOR_SUFFIX);
        let level = roster_level(base.unwrap_or(name))
            .or_else(|| roster_level(name))
            .ok_or_else(|| ingest(format!("unknown column '{name}'")))?;
        let indicator = base.is_some() && roster_level(name).is_none();
        columns.push(Column {
            name: name.to_string(),
            level,
            indicator,
        });
    }
    let mut student_ids = Vec::new();
    let mut data = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| ingest(e.to_string()))?;
        student_ids.push(StudentId(rec[0].to_string()));
        for cell in rec.iter().skip(1) {
            data.push(if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse()
                    .map_err(|_| ingest(format!("row {}: not a number: '{cell}'", k + 1)))?
            });
        }
    }
    Ok(FeatureMatrix {
        student_ids,
        columns,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Level;

    #[test]
    fn round_trips_bit_exactly() {
        let m = FeatureMatrix {
            student_ids: vec!["a".into(), "b".into()],
            columns: vec![
                Column {
                    name: "hs_gpa".into(),
                    level: Level::N2,
                    indicator: false,
                },
                Column {
                    name: "hs_gpa_missing".into(),
                    level: Level::N2,
                    indicator: true,
                },
            ],
            data: vec![0.1 + 0.2, 0.0, f64::NAN, 1.0],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let bytes = write_matrix_csv(&m, &p, false).unwrap();
        let back = read_matrix_csv(&p).unwrap();
        assert_eq!(back.columns, m.columns);
        assert_eq!(back.get(0, 0).to_bits(), (0.1f64 + 0.2).to_bits());
        assert!(back.get(1, 0).is_nan());
        assert_eq!(matrix_csv_bytes(&back).unwrap(), bytes);
        assert!(matches!(
            write_matrix_csv(&m, &p, false),
            Err(CapireError::OutputExists(_))
        ));
        write_matrix_csv(&m, &p, true).unwrap();
    }
}
