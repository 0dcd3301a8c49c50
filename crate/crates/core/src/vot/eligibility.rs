use serde::{Deserialize, Serialize};

use super::VotConfig;
use crate::error::{CapireError, Result};
use crate::features::{Aggregation, FeatureDictionary, NamedBound, TimeBound};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eligibility {
    VotAdmissible,
    PostVot,
    Restricted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EligibilityTag {
    pub feature_name: String,
    pub tag: Eligibility,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub cutoff: u32,
    pub dictionary_version: String,
    pub tags: Vec<EligibilityTag>,
    /// Features allowed into the early-warning matrix, in dictionary order.
    pub admissible: Vec<String>,
    pub excluded: Vec<String>,
}

impl AuditReport {
    pub fn tag(&self, name: &str) -> Option<&EligibilityTag> {
        self.tags.iter().find(|t| t.feature_name == name)
    }
}

pub const REASON_OUTCOME_PROXIMAL: &str = "outcome-proximal";
pub const REASON_UNWINDOWED: &str = "temporal aggregation without windowing";
pub const REASON_LABEL_DEPENDENT: &str = "label-dependent feature construction";
pub const REASON_FULL_HISTORY: &str = "full-history proxy";
pub const REASON_BEYOND_CUTOFF: &str = "time bound exceeds cutoff";

const LABEL_FIELDS: [&str; 3] = ["attrition_flag", "label_basis", "horizon_terms"];
const LABEL_TABLES: [&str; 3] = ["outcomes.", "labels.", "graduations."];

fn references_labels(source: &str) -> bool {
    LABEL_TABLES.iter().any(|t| source.starts_with(t))
        || LABEL_FIELDS
            .iter()
            .any(|f| source == *f || source.ends_with(&format!(".{f}")))
}

/// Tags every dictionary feature. A missing time bound is a hard error.
pub fn audit_eligibility(dictionary: &FeatureDictionary, vot: &VotConfig) -> Result<AuditReport> {
    let mut tags = Vec::with_capacity(dictionary.features.len());
    for f in &dictionary.features {
        let bound = f
            .time_bound
            .ok_or_else(|| CapireError::UndeclaredTimeBound(f.name.clone()))?;
        let (tag, reason) = if f.source_fields.iter().any(|s| references_labels(s)) {
            (Eligibility::Restricted, REASON_LABEL_DEPENDENT.to_string())
        } else {
            match bound {
                TimeBound::Named(NamedBound::ProgrammeEnd) => {
                    (Eligibility::Restricted, REASON_OUTCOME_PROXIMAL.to_string())
                }
                TimeBound::Named(NamedBound::FullHistory) => match f.aggregation {
                    Aggregation::TrajectoryStatistic => {
                        (Eligibility::PostVot, REASON_FULL_HISTORY.to_string())
                    }
                    _ => (Eligibility::PostVot, REASON_UNWINDOWED.to_string()),
                },
                TimeBound::RelativeTerm { relative_term } if relative_term >= vot.cutoff => (
                    Eligibility::PostVot,
                    format!(
                        "{REASON_BEYOND_CUTOFF} (term {relative_term} >= cutoff {})",
                        vot.cutoff
                    ),
                ),
                TimeBound::RelativeTerm { relative_term } => (
                    Eligibility::VotAdmissible,
                    format!(
                        "bounded at relative term {relative_term} < cutoff {}",
                        vot.cutoff
                    ),
                ),
                TimeBound::Named(NamedBound::Vot) => (
                    Eligibility::VotAdmissible,
                    "computed from the observation window".to_string(),
                ),
                TimeBound::Named(NamedBound::Entry) => {
                    (Eligibility::VotAdmissible, "anchored at entry".to_string())
                }
                TimeBound::Named(NamedBound::PreEntry) => {
                    (Eligibility::VotAdmissible, "known before entry".to_string())
                }
            }
        };
        tags.push(EligibilityTag {
            feature_name: f.name.clone(),
            tag,
            reason,
        });
    }
    let admissible = tags
        .iter()
        .filter(|t| t.tag == Eligibility::VotAdmissible)
        .map(|t| t.feature_name.clone())
        .collect();
    let excluded = tags
        .iter()
        .filter(|t| t.tag != Eligibility::VotAdmissible)
        .map(|t| t.feature_name.clone())
        .collect();
    Ok(AuditReport {
        cutoff: vot.cutoff,
        dictionary_version: dictionary.version.clone(),
        tags,
        admissible,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{DictionaryEntry, Level};

    fn entry(
        name: &str,
        bound: Option<TimeBound>,
        agg: Aggregation,
        sources: &[&str],
    ) -> DictionaryEntry {
        DictionaryEntry {
            name: name.into(),
            level: Level::N3,
            source_fields: sources.iter().map(|s| s.to_string()).collect(),
            time_bound: bound,
            aggregation: agg,
            imputation: None,
            description: String::new(),
        }
    }

    #[test]
    fn builtin_dictionary_is_fully_admissible() {
        let report =
            audit_eligibility(&FeatureDictionary::builtin(), &VotConfig::default()).unwrap();
        assert_eq!(report.tags.len(), 44);
        assert_eq!(report.admissible.len(), 44);
        assert!(report.excluded.is_empty());
    }

    #[test]
    fn named_examples() {
        let dict = FeatureDictionary {
            version: "t".into(),
            features: vec![
                entry(
                    "failed_core_courses_up_to_term_2",
                    Some(TimeBound::RelativeTerm { relative_term: 2 }),
                    Aggregation::Windowed,
                    &["enrolments.state"],
                ),
                entry(
                    "total_semesters_enrolled",
                    Some(TimeBound::Named(NamedBound::FullHistory)),
                    Aggregation::Aggregate,
                    &["enrolments.term_index"],
                ),
                entry(
                    "final_gpa",
                    Some(TimeBound::Named(NamedBound::ProgrammeEnd)),
                    Aggregation::Point,
                    &["enrolments.grade"],
                ),
                entry(
                    "failed_up_to_term_3",
                    Some(TimeBound::RelativeTerm { relative_term: 3 }),
                    Aggregation::Windowed,
                    &["enrolments.state"],
                ),
            ],
        };
        let r = audit_eligibility(&dict, &VotConfig::terms(3, 12, 1)).unwrap();
        assert_eq!(
            r.tag("failed_core_courses_up_to_term_2").unwrap().tag,
            Eligibility::VotAdmissible
        );
        let t = r.tag("total_semesters_enrolled").unwrap();
        assert_eq!(
            (t.tag, t.reason.as_str()),
            (Eligibility::PostVot, REASON_UNWINDOWED)
        );
        let t = r.tag("final_gpa").unwrap();
        assert_eq!(
            (t.tag, t.reason.as_str()),
            (Eligibility::Restricted, REASON_OUTCOME_PROXIMAL)
        );
        assert_eq!(
            r.tag("failed_up_to_term_3").unwrap().tag,
            Eligibility::PostVot
        );
        assert_eq!(r.tags.len(), dict.features.len());
    }

    #[test]
    fn undeclared_time_bound_is_hard_error() {
        let dict = FeatureDictionary {
            version: "t".into(),
            features: vec![entry("mystery", None, Aggregation::Point, &[])],
        };
        assert!(matches!(
            audit_eligibility(&dict, &VotConfig::default()),
            Err(CapireError::UndeclaredTimeBound(n)) if n == "mystery"
        ));
    }
}
