//! Observation-window ("value of observation time") handling.
//!
//! The window predicate is relative to each student's entry term and is
//! half-open: an enrolment is visible iff
//! `0 <= term_index - entry_term < cutoff`. [`in_window`] is the only place
//! that predicate is written down.

mod eligibility;
mod probe;

use serde::{Deserialize, Serialize};

use crate::domain::{CourseId, Enrolment, OutcomeState, Student, StudentId};
use crate::error::{CapireError, Result};

pub use eligibility::{
    audit_eligibility, AuditReport, Eligibility, EligibilityTag, REASON_BEYOND_CUTOFF,
    REASON_FULL_HISTORY, REASON_LABEL_DEPENDENT, REASON_OUTCOME_PROXIMAL, REASON_UNWINDOWED,
};
pub use probe::{leakage_probe, CellDiff, OutcomeAlteration, ProbeOptions, ProbeReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VotUnit {
    Terms,
    Credits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotConfig {
    pub unit: VotUnit,
    /// Window length in `unit` (3 terms is roughly 1.5 academic years).
    pub cutoff: u32,
    /// Outcome horizon in terms, counted from entry.
    pub horizon: u32,
    /// Grace period in terms.
    pub grace: u32,
    #[serde(default = "default_label_policy")]
    pub label_policy: String,
}

fn default_label_policy() -> String {
    "binary_attrition".to_string()
}

impl Default for VotConfig {
    fn default() -> Self {
        VotConfig {
            unit: VotUnit::Terms,
            cutoff: 3,
            horizon: 12,
            grace: 1,
            label_policy: default_label_policy(),
        }
    }
}

impl VotConfig {
    pub fn terms(cutoff: u32, horizon: u32, grace: u32) -> Self {
        VotConfig {
            cutoff,
            horizon,
            grace,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.unit == VotUnit::Credits {
            return Err(CapireError::NotImplemented(
                "credit-based observation windows (schema carries no credit weights)".into(),
            ));
        }
        if self.cutoff == 0 || self.cutoff >= self.horizon {
            return Err(CapireError::config(format!(
                "observation window requires 0 < cutoff ({}) < horizon ({})",
                self.cutoff, self.horizon
            )));
        }
        if self.label_policy != "binary_attrition" {
            return Err(CapireError::config(format!(
                "unknown label policy `{}`",
                self.label_policy
            )));
        }
        Ok(())
    }
}

/// Relative-term window predicate.
#[inline]
pub fn in_window(term_index: u32, entry_term: u32, cutoff: u32) -> bool {
    term_index >= entry_term && term_index - entry_term < cutoff
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedEnrolment {
    pub course_id: CourseId,
    pub rel_term: u32,
    pub state: OutcomeState,
    pub grade: Option<f64>,
}

/// A student's enrolments restricted to the observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedTrajectory {
    pub student_id: StudentId,
    pub cutoff: u32,
    /// Sorted by `(rel_term, course_id)`.
    pub enrolments: Vec<WindowedEnrolment>,
    /// Distinct relative terms with at least one enrolment, strictly increasing.
    pub active_terms: Vec<u32>,
}

impl WindowedTrajectory {
    pub fn is_empty(&self) -> bool {
        self.enrolments.is_empty()
    }
}

pub fn slice_trajectory<'a>(
    student: &Student,
    enrolments: impl IntoIterator<Item = &'a Enrolment>,
    vot: &VotConfig,
) -> WindowedTrajectory {
    let mut kept: Vec<WindowedEnrolment> = enrolments
        .into_iter()
        .filter(|e| {
            e.student_id == student.student_id
                && in_window(e.term_index, student.entry_term, vot.cutoff)
        })
        .map(|e| WindowedEnrolment {
            course_id: e.course_id.clone(),
            rel_term: e.term_index - student.entry_term,
            state: e.state,
            grade: e.grade,
        })
        .collect();
    kept.sort_by(|a, b| (a.rel_term, &a.course_id).cmp(&(b.rel_term, &b.course_id)));
    let mut active_terms: Vec<u32> = kept.iter().map(|e| e.rel_term).collect();
    active_terms.dedup();
    WindowedTrajectory {
        student_id: student.student_id.clone(),
        cutoff: vot.cutoff,
        enrolments: kept,
        active_terms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn student(entry: u32) -> Student {
        Student {
            student_id: "S1".into(),
            cohort_year: 2010,
            entry_term: entry,
            age_at_entry: 18.0,
            gender: None,
            works_at_entry: None,
            hs_gpa: None,
            postcode: None,
            parental_education: None,
            siblings_university: None,
            secondary_school_type: None,
            distance_to_campus_km: None,
        }
    }

    fn enrol(course: &str, term: u32) -> Enrolment {
        Enrolment {
            student_id: "S1".into(),
            course_id: course.into(),
            term_index: term,
            state: OutcomeState::Passed,
            grade: Some(6.0),
        }
    }

    #[test]
    fn window_keeps_terms_below_cutoff() {
        let s = student(4);
        let es = [enrol("A", 4), enrol("B", 5), enrol("C", 6), enrol("D", 9)];
        let w = slice_trajectory(&s, &es, &VotConfig::terms(3, 12, 1));
        assert_eq!(w.active_terms, vec![0, 1, 2]);
        assert_eq!(w.enrolments.len(), 3);
    }

    #[test]
    fn all_post_cutoff_gives_empty_window() {
        let s = student(0);
        let es = [enrol("A", 3), enrol("B", 7)];
        let w = slice_trajectory(&s, &es, &VotConfig::terms(3, 12, 1));
        assert!(w.is_empty());
        assert!(w.active_terms.is_empty());
    }

    #[test]
    fn config_checks() {
        assert!(VotConfig::terms(3, 12, 0).validate().is_ok());
        assert!(matches!(
            VotConfig::terms(0, 12, 0).validate(),
            Err(CapireError::Config(_))
        ));
        assert!(matches!(
            VotConfig::terms(12, 12, 0).validate(),
            Err(CapireError::Config(_))
        ));
        let credits = VotConfig {
            unit: VotUnit::Credits,
            ..VotConfig::default()
        };
        assert!(matches!(
            credits.validate(),
            Err(CapireError::NotImplemented(_))
        ));
    }

    proptest! {
        #[test]
        fn post_cutoff_injections_leave_window_identical(
            base in prop::collection::vec((0u32..3, 0u8..6), 0..8),
            extra in prop::collection::vec((3u32..20, 0u8..6), 1..10),
            entry in 0u32..5,
        ) {
            let s = student(entry);
            let vot = VotConfig::terms(3, 24, 1);
            let raw: Vec<Enrolment> = base.iter().map(|&(t, c)| enrol(&format!("C{c}"), entry + t)).collect();
            let mut perturbed = raw.clone();
            perturbed.extend(extra.iter().map(|&(t, c)| enrol(&format!("C{c}"), entry + t)));
            prop_assert_eq!(slice_trajectory(&s, &raw, &vot), slice_trajectory(&s, &perturbed, &vot));
        }

        #[test]
        fn windows_are_monotone_in_cutoff(
            terms in prop::collection::vec((0u32..12, 0u8..6), 0..12),
            a in 1u32..6,
            b in 1u32..6,
        ) {
            let (a, b) = (a.min(b), a.max(b));
            let s = student(0);
            let es: Vec<Enrolment> = terms.iter().map(|&(t, c)| enrol(&format!("C{c}"), t)).collect();
            let wa = slice_trajectory(&s, &es, &VotConfig::terms(a, 24, 0));
            let wb = slice_trajectory(&s, &es, &VotConfig::terms(b, 24, 0));
            for e in &wa.enrolments {
                prop_assert!(wb.enrolments.contains(e));
            }
            prop_assert!(wa.active_terms.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
