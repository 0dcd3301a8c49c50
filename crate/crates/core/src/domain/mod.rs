//! Relational entities of the longitudinal record, ingestion and the
//! validation gate that stops malformed input before feature construction.

mod ingest;
mod labels;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use ingest::{
    read_raw_tables, write_dataset, write_raw_tables, RawTable, RawTables, TableKind,
};
pub use labels::{derive_outcome_labels, LabelBasis, OutcomeLabel};
pub use validate::{
    profile_missingness, validate_dataset, validate_raw, ColumnMissingness, MissingnessProfile,
    RuleKind, ValidationReport, ValidationRules, Verdict, Violation,
};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StudentId(pub String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CourseId(pub String);

impl fmt::Display for StudentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for CourseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StudentId {
    fn from(s: &str) -> Self {
        StudentId(s.to_string())
    }
}

impl From<&str> for CourseId {
    fn from(s: &str) -> Self {
        CourseId(s.to_string())
    }
}

/// Outcome of one course attempt. "libre" (dropped without sitting the
/// exam) is read as `Dropped`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeState {
    Passed,
    Failed,
    Dropped,
}

impl OutcomeState {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "passed" | "pass" => Some(Self::Passed),
            "failed" | "fail" => Some(Self::Failed),
            "dropped" | "libre" | "withdrawn" => Some(Self::Dropped),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Passed => "passed",
            Self::Failed => "failed",
            Self::Dropped => "dropped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchoolType {
    Public,
    Private,
    Technical,
}

impl SchoolType {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "public" => Some(Self::Public),
            "private" => Some(Self::Private),
            "technical" => Some(Self::Technical),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Public => "public",
            Self::Private => "private",
            Self::Technical => "technical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Student {
    pub student_id: StudentId,
    pub cohort_year: i32,
    /// Global term index of first enrolment (t0).
    pub entry_term: u32,
    pub age_at_entry: f64,
    pub gender: Option<String>,
    /// Tri-state: `None` is "unknown".
    pub works_at_entry: Option<bool>,
    pub hs_gpa: Option<f64>,
    pub postcode: Option<String>,
    /// Ordinal 0 (none) ..= 4 (postgraduate).
    pub parental_education: Option<u8>,
    pub siblings_university: Option<bool>,
    pub secondary_school_type: Option<SchoolType>,
    pub distance_to_campus_km: Option<f64>,
}

impl Student {
    /// Region key: the postcode prefix before the first `-`.
    pub fn region(&self) -> Option<&str> {
        self.postcode.as_deref().map(region_of)
    }
}

pub fn region_of(postcode: &str) -> &str {
    postcode.split('-').next().unwrap_or(postcode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enrolment {
    pub student_id: StudentId,
    pub course_id: CourseId,
    pub term_index: u32,
    pub state: OutcomeState,
    pub grade: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Course {
    pub course_id: CourseId,
    pub curriculum_id: String,
    pub nominal_term: u32,
    pub is_core: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curriculum {
    pub curriculum_id: String,
    /// term offset -> cumulative courses a nominal student has completed.
    pub expected_courses_by_term: BTreeMap<u32, u32>,
}

impl Curriculum {
    /// Expected cumulative completions after `terms` terms, using the last
    /// declared offset at or before `terms`.
    pub fn expected_at(&self, terms: u32) -> u32 {
        self.expected_courses_by_term
            .range(..=terms)
            .next_back()
            .map(|(_, &c)| c)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermInfo {
    pub term_index: u32,
    pub calendar_year: i32,
    pub season: String,
    pub inflation_yoy: Option<f64>,
    pub strike_count_24m: Option<f64>,
}

/// Area-level census and labour-market indicators keyed by postcode and year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaIndicators {
    pub postcode: String,
    pub year: i32,
    pub deprivation_index: Option<f64>,
    pub unemployment: Option<f64>,
    pub informality: Option<f64>,
    pub poverty: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graduation {
    pub student_id: StudentId,
    pub term_index: u32,
}

/// Typed, validated input tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub students: Vec<Student>,
    pub enrolments: Vec<Enrolment>,
    pub courses: Vec<Course>,
    pub curricula: Vec<Curriculum>,
    pub calendar: Vec<TermInfo>,
    pub areas: Vec<AreaIndicators>,
    pub graduations: Vec<Graduation>,
}

impl Dataset {
    pub fn enrolments_by_student(&self) -> BTreeMap<&StudentId, Vec<&Enrolment>> {
        let mut map: BTreeMap<&StudentId, Vec<&Enrolment>> = BTreeMap::new();
        for e in &self.enrolments {
            map.entry(&e.student_id).or_default().push(e);
        }
        map
    }

    pub fn course_map(&self) -> BTreeMap<&CourseId, &Course> {
        self.courses.iter().map(|c| (&c.course_id, c)).collect()
    }

    pub fn calendar_map(&self) -> BTreeMap<u32, &TermInfo> {
        self.calendar.iter().map(|t| (t.term_index, t)).collect()
    }

    pub fn student(&self, id: &StudentId) -> Option<&Student> {
        self.students.iter().find(|s| &s.student_id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn libre_reads_as_dropped() {
        assert_eq!(OutcomeState::parse("libre"), Some(OutcomeState::Dropped));
        assert_eq!(OutcomeState::parse(" Passed "), Some(OutcomeState::Passed));
        assert_eq!(OutcomeState::parse("absent"), None);
    }

    #[test]
    fn expected_courses_uses_last_offset_at_or_before() {
        let c = Curriculum {
            curriculum_id: "CIV".into(),
            expected_courses_by_term: [(1, 5), (2, 10), (4, 20)].into_iter().collect(),
        };
        assert_eq!(c.expected_at(0), 0);
        assert_eq!(c.expected_at(2), 10);
        assert_eq!(c.expected_at(3), 10);
        assert_eq!(c.expected_at(9), 20);
    }

    #[test]
    fn region_is_postcode_prefix() {
        assert_eq!(region_of("R3-017"), "R3");
        assert_eq!(region_of("4000"), "4000");
    }
}
