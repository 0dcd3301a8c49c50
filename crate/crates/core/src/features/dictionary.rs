use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CapireError, Result};
use crate::matrix::ImputationStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    N1,
    N2,
    N3,
    N4,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::N1, Level::N2, Level::N3, Level::N4];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::N1 => "N1",
            Level::N2 => "N2",
            Level::N3 => "N3",
            Level::N4 => "N4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedBound {
    /// Known before the student enrols.
    PreEntry,
    /// Anchored at the entry term t0.
    Entry,
    /// Computed from the observation window only.
    Vot,
    /// Computed over the full enrolment record.
    FullHistory,
    /// End-of-programme quantities (final GPA, completion time).
    ProgrammeEnd,
}

/// Declared latest information a feature may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeBound {
    Named(NamedBound),
    /// Uses data up to and including this relative term.
    RelativeTerm {
        relative_term: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Point,
    Windowed,
    /// Counts, sums or means over terms.
    Aggregate,
    /// A summary of trajectory shape (longest gap, last active term).
    TrajectoryStatistic,
    Interaction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryEntry {
    pub name: String,
    pub level: Level,
    #[serde(default)]
    pub source_fields: Vec<String>,
    #[serde(default)]
    pub time_bound: Option<TimeBound>,
    #[serde(default)]
    pub aggregation: Aggregation,
    /// Overrides the level-wide imputation strategy when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imputation: Option<ImputationStrategy>,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDictionary {
    pub version: String,
    pub features: Vec<DictionaryEntry>,
}

const BUILTIN: &str = include_str!("../../dictionary/features_v1.json");

impl FeatureDictionary {
    /// The shipped 44-feature dictionary.
    pub fn builtin() -> Self {
        serde_json::from_str(BUILTIN).expect("shipped dictionary parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| CapireError::config(format!("feature dictionary {}: {e}", path.display())))
    }

    pub fn entry(&self, name: &str) -> Option<&DictionaryEntry> {
        self.features.iter().find(|f| f.name == name)
    }
}

/// The extractable feature roster in dictionary (column) order.
pub const ROSTER: [(&str, Level); 44] = [
    ("deprivation_index", Level::N1),
    ("distance_to_campus_km", Level::N1),
    ("area_unemployment_t0", Level::N1),
    ("area_informality_t0", Level::N1),
    ("area_poverty_t0", Level::N1),
    ("parental_education", Level::N1),
    ("parental_tertiary", Level::N1),
    ("siblings_university", Level::N1),
    ("first_generation", Level::N1),
    ("secondary_public", Level::N1),
    ("secondary_private", Level::N1),
    ("secondary_technical", Level::N1),
    ("age_at_entry", Level::N2),
    ("gender_female", Level::N2),
    ("works_at_entry", Level::N2),
    ("hs_gpa", Level::N2),
    ("inflation_t0", Level::N2),
    ("strikes_24m_t0", Level::N2),
    ("attempted_count", Level::N3),
    ("passed_count", Level::N3),
    ("failed_count", Level::N3),
    ("dropped_count", Level::N3),
    ("pass_rate", Level::N3),
    ("fail_rate", Level::N3),
    ("libre_rate", Level::N3),
    ("grade_mean", Level::N3),
    ("grade_median", Level::N3),
    ("grade_std", Level::N3),
    ("core_failed_count", Level::N3),
    ("ifc_mean", Level::N3),
    ("filter_exposure_count", Level::N3),
    ("filter_exposure_rate", Level::N3),
    ("filter_courses_distinct", Level::N3),
    ("max_course_attempts", Level::N3),
    ("mean_attempts_per_course", Level::N4),
    ("max_gap", Level::N4),
    ("load_trend", Level::N4),
    ("velocity", Level::N4),
    ("enrolment_regularity", Level::N4),
    ("state_entropy", Level::N4),
    ("ifc_x_libre_rate", Level::N4),
    ("age_x_mean_attempts", Level::N4),
    ("deprivation_x_pass_rate", Level::N4),
    ("filter_exposure_x_max_gap", Level::N4),
];

pub fn roster_index(name: &str) -> Option<usize> {
    ROSTER.iter().position(|(n, _)| *n == name)
}

pub fn roster_level(name: &str) -> Option<Level> {
    ROSTER.iter().find(|(n, _)| *n == name).map(|&(_, l)| l)
}

/// Grade statistics: never imputed and dropped from clustering when any
/// clustering row lacks them.
pub const GRADE_FEATURES: [&str; 3] = ["grade_mean", "grade_median", "grade_std"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_dictionary_matches_roster() {
        let d = FeatureDictionary::builtin();
        let names: Vec<&str> = d.features.iter().map(|f| f.name.as_str()).collect();
        let roster: Vec<&str> = ROSTER.iter().map(|(n, _)| *n).collect();
        assert_eq!(names, roster);
        for f in &d.features {
            assert_eq!(Some(f.level), roster_level(&f.name));
            assert!(f.time_bound.is_some());
        }
    }

    #[test]
    fn level_counts_are_12_6_16_10() {
        let count = |l| ROSTER.iter().filter(|(_, lv)| *lv == l).count();
        assert_eq!(
            [
                count(Level::N1),
                count(Level::N2),
                count(Level::N3),
                count(Level::N4)
            ],
            [12, 6, 16, 10]
        );
    }

    #[test]
    fn time_bound_forms_parse() {
        let t: TimeBound = serde_json::from_str("\"full_history\"").unwrap();
        assert_eq!(t, TimeBound::Named(NamedBound::FullHistory));
        let t: TimeBound = serde_json::from_str("{\"relative_term\": 2}").unwrap();
        assert_eq!(t, TimeBound::RelativeTerm { relative_term: 2 });
    }
}
