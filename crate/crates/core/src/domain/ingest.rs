use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::Dataset;
use crate::error::{CapireError, Result};

/// The input tables. Areas and graduations are optional inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    Students,
    Enrolments,
    Courses,
    Curricula,
    Calendar,
    Areas,
    Graduations,
}

impl TableKind {
    pub const ALL: [TableKind; 7] = [
        TableKind::Students,
        TableKind::Enrolments,
        TableKind::Courses,
        TableKind::Curricula,
        TableKind::Calendar,
        TableKind::Areas,
        TableKind::Graduations,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TableKind::Students => "students",
            TableKind::Enrolments => "enrolments",
            TableKind::Courses => "courses",
            TableKind::Curricula => "curricula",
            TableKind::Calendar => "calendar",
            TableKind::Areas => "areas",
            TableKind::Graduations => "graduations",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.csv", self.name())
    }

    pub fn required(self) -> bool {
        !matches!(self, TableKind::Areas | TableKind::Graduations)
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            TableKind::Students => &[
                "student_id",
                "cohort_year",
                "entry_term",
                "age_at_entry",
                "gender",
                "works_at_entry",
                "hs_gpa",
                "postcode",
                "parental_education",
                "siblings_university",
                "secondary_school_type",
                "distance_to_campus_km",
            ],
            TableKind::Enrolments => &["student_id", "course_id", "term_index", "state", "grade"],
            TableKind::Courses => &["course_id", "curriculum_id", "nominal_term", "is_core"],
            TableKind::Curricula => &["curriculum_id", "term_offset", "expected_courses"],
            TableKind::Calendar => &[
                "term_index",
                "calendar_year",
                "season",
                "inflation_yoy",
                "strike_count_24m",
            ],
            TableKind::Areas => &[
                "postcode",
                "year",
                "deprivation_index",
                "unemployment",
                "informality",
                "poverty",
            ],
            TableKind::Graduations => &["student_id", "term_index"],
        }
    }
}

/// A table of untyped cells in canonical column order. Empty string is missing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub kind: TableKind,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(kind: TableKind) -> Self {
        RawTable {
            kind,
            rows: Vec::new(),
        }
    }

    pub fn columns(&self) -> &'static [&'static str] {
        self.kind.columns()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns().iter().position(|c| *c == name)
    }

    pub fn push(&mut self, cells: &[&str]) {
        assert_eq!(
            cells.len(),
            self.columns().len(),
            "row width for {}",
            self.kind.name()
        );
        self.rows
            .push(cells.iter().map(|s| s.to_string()).collect());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTables {
    pub students: RawTable,
    pub enrolments: RawTable,
    pub courses: RawTable,
    pub curricula: RawTable,
    pub calendar: RawTable,
    pub areas: RawTable,
    pub graduations: RawTable,
}

impl Default for RawTables {
    fn default() -> Self {
        RawTables {
            students: RawTable::new(TableKind::Students),
            enrolments: RawTable::new(TableKind::Enrolments),
            courses: RawTable::new(TableKind::Courses),
            curricula: RawTable::new(TableKind::Curricula),
            calendar: RawTable::new(TableKind::Calendar),
            areas: RawTable::new(TableKind::Areas),
            graduations: RawTable::new(TableKind::Graduations),
        }
    }
}

impl RawTables {
    pub fn tables(&self) -> [&RawTable; 7] {
        [
            &self.students,
            &self.enrolments,
            &self.courses,
            &self.curricula,
            &self.calendar,
            &self.areas,
            &self.graduations,
        ]
    }

    fn table_mut(&mut self, kind: TableKind) -> &mut RawTable {
        match kind {
            TableKind::Students => &mut self.students,
            TableKind::Enrolments => &mut self.enrolments,
            TableKind::Courses => &mut self.courses,
            TableKind::Curricula => &mut self.curricula,
            TableKind::Calendar => &mut self.calendar,
            TableKind::Areas => &mut self.areas,
            TableKind::Graduations => &mut self.graduations,
        }
    }
}

fn ingest_err(path: &Path, message: impl Into<String>) -> CapireError {
    CapireError::Ingest {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn read_table(kind: TableKind, path: &Path) -> Result<RawTable> {
    let file = File::open(path).map_err(|e| ingest_err(path, e.to_string()))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| ingest_err(path, e.to_string()))?
        .clone();
    let header: Vec<&str> = headers.iter().map(str::trim).collect();
    let mut positions = Vec::with_capacity(kind.columns().len());
    for col in kind.columns() {
        match header.iter().position(|h| h == col) {
            Some(p) => positions.push(p),
            None => return Err(ingest_err(path, format!("missing required column `{col}`"))),
        }
    }
    let mut table = RawTable::new(kind);
    for record in reader.records() {
        let record = record.map_err(|e| ingest_err(path, e.to_string()))?;
        table.rows.push(
            positions
                .iter()
                .map(|&p| record[p].trim().to_string())
                .collect(),
        );
    }
    Ok(table)
}

/// Reads every input table from `dir`. Missing optional files yield empty
/// tables; missing required files, invalid UTF-8, ragged rows or absent
/// columns are ingestion errors, distinct from validation failures.
pub fn read_raw_tables(dir: &Path) -> Result<RawTables> {
    let mut tables = RawTables::default();
    for kind in TableKind::ALL {
        let path: PathBuf = dir.join(kind.file_name());
        if !path.exists() {
            if kind.required() {
                return Err(ingest_err(&path, "file not found"));
            }
            continue;
        }
        *tables.table_mut(kind) = read_table(kind, &path)?;
    }
    Ok(tables)
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_bool(v: Option<bool>) -> String {
    v.map(|b| if b { "true" } else { "false" }.to_string())
        .unwrap_or_default()
}

impl Dataset {
    /// Renders the typed tables back into canonical raw cells.
    pub fn to_raw(&self) -> RawTables {
        let mut t = RawTables::default();
        t.students.rows = self
            .students
            .iter()
            .map(|s| {
                vec![
                    s.student_id.0.clone(),
                    s.cohort_year.to_string(),
                    s.entry_term.to_string(),
                    s.age_at_entry.to_string(),
                    s.gender.clone().unwrap_or_default(),
                    match s.works_at_entry {
                        Some(true) => "yes".into(),
                        Some(false) => "no".into(),
                        None => "unknown".into(),
                    },
                    opt_f64(s.hs_gpa),
                    s.postcode.clone().unwrap_or_default(),
                    s.parental_education
                        .map(|p| p.to_string())
                        .unwrap_or_default(),
                    opt_bool(s.siblings_university),
                    s.secondary_school_type
                        .map(|t| t.as_str().to_string())
                        .unwrap_or_default(),
                    opt_f64(s.distance_to_campus_km),
                ]
            })
            .collect();
        t.enrolments.rows = self
            .enrolments
            .iter()
            .map(|e| {
                vec![
                    e.student_id.0.clone(),
                    e.course_id.0.clone(),
                    e.term_index.to_string(),
                    e.state.as_str().to_string(),
                    opt_f64(e.grade),
                ]
            })
            .collect();
        t.courses.rows = self
            .courses
            .iter()
            .map(|c| {
                vec![
                    c.course_id.0.clone(),
                    c.curriculum_id.clone(),
                    c.nominal_term.to_string(),
                    c.is_core.to_string(),
                ]
            })
            .collect();
        t.curricula.rows = self
            .curricula
            .iter()
            .flat_map(|c| {
                c.expected_courses_by_term
                    .iter()
                    .map(move |(t, n)| vec![c.curriculum_id.clone(), t.to_string(), n.to_string()])
            })
            .collect();
        t.calendar.rows = self
            .calendar
            .iter()
            .map(|t| {
                vec![
                    t.term_index.to_string(),
                    t.calendar_year.to_string(),
                    t.season.clone(),
                    opt_f64(t.inflation_yoy),
                    opt_f64(t.strike_count_24m),
                ]
            })
            .collect();
        t.areas.rows = self
            .areas
            .iter()
            .map(|a| {
                vec![
                    a.postcode.clone(),
                    a.year.to_string(),
                    opt_f64(a.deprivation_index),
                    opt_f64(a.unemployment),
                    opt_f64(a.informality),
                    opt_f64(a.poverty),
                ]
            })
            .collect();
        t.graduations.rows = self
            .graduations
            .iter()
            .map(|g| vec![g.student_id.0.clone(), g.term_index.to_string()])
            .collect();
        t
    }
}

/// Writes raw tables as CSV files (header row, RFC-4180 quoting). Every
/// table is written, including empty optional ones.
pub fn write_raw_tables(tables: &RawTables, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for table in tables.tables() {
        let path = dir.join(table.kind.file_name());
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(table.columns())?;
        for r in &table.rows {
            w.write_record(r)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CapireError::Io(e.into_error()))?;
        File::create(&path)?.write_all(&bytes)?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<Vec<PathBuf>> {
    write_raw_tables(&dataset.to_raw(), dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_utf8_is_an_ingestion_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("courses.csv");
        std::fs::write(
            &p,
            b"course_id,curriculum_id,nominal_term,is_core\nC\xff1,CIV,1,true\n",
        )
        .unwrap();
        let err = read_table(TableKind::Courses, &p).unwrap_err();
        assert!(matches!(err, CapireError::Ingest { .. }), "{err}");
    }

    #[test]
    fn missing_column_and_ragged_rows_are_ingestion_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("courses.csv");
        std::fs::write(&p, "course_id,nominal_term,is_core\nC1,1,true\n").unwrap();
        assert!(matches!(
            read_table(TableKind::Courses, &p),
            Err(CapireError::Ingest { .. })
        ));
        std::fs::write(
            &p,
            "course_id,curriculum_id,nominal_term,is_core\nC1,CIV,1\n",
        )
        .unwrap();
        assert!(matches!(
            read_table(TableKind::Courses, &p),
            Err(CapireError::Ingest { .. })
        ));
    }

    #[test]
    fn columns_are_reordered_and_quoted_fields_kept() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("courses.csv");
        std::fs::write(
            &p,
            "is_core,course_id,nominal_term,curriculum_id\ntrue,\"C,1\",2,CIV\n",
        )
        .unwrap();
        let t = read_table(TableKind::Courses, &p).unwrap();
        assert_eq!(t.rows, vec![vec!["C,1", "CIV", "2", "true"]]);
    }
}
