use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Dataset, StudentId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelBasis {
    Graduated,
    StillEnrolled,
    Departed,
}

/// Binary attrition outcome. Lives outside the feature path: nothing in
/// feature extraction reads this type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeLabel {
    pub student_id: StudentId,
    pub attrition_flag: u8,
    pub label_basis: LabelBasis,
    pub horizon_terms: u32,
}

/// Labels every student once from the full (untruncated) history.
///
/// Relative terms count from the student's entry term. A graduation before
/// `horizon + grace` is `Graduated`; otherwise a student whose last
/// enrolment falls at relative term `>= horizon - 1 - grace` is still
/// enrolled at the horizon; everyone else, including students with no
/// enrolments at all, departed.
pub fn derive_outcome_labels(
    dataset: &Dataset,
    horizon_terms: u32,
    grace_terms: u32,
) -> Vec<OutcomeLabel> {
    let mut last_active: HashMap<&StudentId, u32> = HashMap::new();
    for e in &dataset.enrolments {
        let t = last_active.entry(&e.student_id).or_insert(e.term_index);
        *t = (*t).max(e.term_index);
    }
    let mut graduated: HashMap<&StudentId, u32> = HashMap::new();
    for g in &dataset.graduations {
        let t = graduated.entry(&g.student_id).or_insert(g.term_index);
        *t = (*t).min(g.term_index);
    }
    let still_enrolled_from = horizon_terms.saturating_sub(1 + grace_terms);

    let mut labels: Vec<OutcomeLabel> = dataset
        .students
        .iter()
        .map(|s| {
            let rel = |t: u32| t.saturating_sub(s.entry_term);
            let basis = if graduated
                .get(&s.student_id)
                .is_some_and(|&g| rel(g) < horizon_terms + grace_terms)
            {
                LabelBasis::Graduated
            } else {
                match last_active.get(&s.student_id) {
                    Some(&last) if rel(last) >= still_enrolled_from => LabelBasis::StillEnrolled,
                    _ => LabelBasis::Departed,
                }
            };
            OutcomeLabel {
                student_id: s.student_id.clone(),
                attrition_flag: u8::from(basis == LabelBasis::Departed),
                label_basis: basis,
                horizon_terms,
            }
        })
        .collect();
    labels.sort_by(|a, b| a.student_id.cmp(&b.student_id));
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CourseId, Enrolment, Graduation, OutcomeState, Student};

    fn student(id: &str, entry: u32) -> Student {
        Student {
            student_id: id.into(),
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

    fn enrol(id: &str, term: u32) -> Enrolment {
        Enrolment {
            student_id: id.into(),
            course_id: CourseId::from("C1"),
            term_index: term,
            state: OutcomeState::Passed,
            grade: Some(7.0),
        }
    }

    #[test]
    fn label_cases() {
        let ds = Dataset {
            students: vec![
                student("A", 2),
                student("B", 2),
                student("C", 2),
                student("D", 0),
            ],
            enrolments: vec![
                enrol("A", 2),
                enrol("A", 9),
                enrol("B", 2),
                enrol("B", 10),
                enrol("C", 2),
                enrol("C", 13),
            ],
            graduations: vec![Graduation {
                student_id: "A".into(),
                term_index: 10,
            }],
            ..Default::default()
        };
        // horizon 12 terms, grace 1: still enrolled needs activity at relative term >= 10
        let labels = derive_outcome_labels(&ds, 12, 1);
        let get = |id: &str| labels.iter().find(|l| l.student_id.0 == id).unwrap();
        assert_eq!(get("A").label_basis, LabelBasis::Graduated);
        assert_eq!(get("A").attrition_flag, 0);
        // last activity at relative term 8: four terms before the horizon end
        assert_eq!(get("B").label_basis, LabelBasis::Departed);
        assert_eq!(get("B").attrition_flag, 1);
        assert_eq!(get("C").label_basis, LabelBasis::StillEnrolled);
        assert_eq!(get("C").attrition_flag, 0);
        // zero enrolments
        assert_eq!(get("D").label_basis, LabelBasis::Departed);
        assert_eq!(labels.len(), 4);
    }
}
