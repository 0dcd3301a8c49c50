use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::formulas::ifc_course;
use crate::domain::{CourseId, OutcomeState};
use crate::error::Result;
use crate::vot::WindowedTrajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseFriction {
    pub attempted: u64,
    pub passed: u64,
    pub failed: u64,
    pub dropped: u64,
    pub ifc: f64,
    pub is_filter: bool,
}

/// Per-course friction fitted on training windows and frozen afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseFrictionTable {
    pub w1: f64,
    pub w2: f64,
    pub filter_threshold: f64,
    pub courses: BTreeMap<CourseId, CourseFriction>,
}

impl CourseFrictionTable {
    /// Single reduction over in-window attempts of the given trajectories.
    pub fn fit<'a>(
        windows: impl IntoIterator<Item = &'a WindowedTrajectory>,
        w1: f64,
        w2: f64,
        filter_threshold: f64,
    ) -> Result<Self> {
        let mut counts: BTreeMap<CourseId, [u64; 3]> = BTreeMap::new();
        for w in windows {
            for e in &w.enrolments {
                let c = counts.entry(e.course_id.clone()).or_default();
                match e.state {
                    OutcomeState::Passed => c[0] += 1,
                    OutcomeState::Failed => c[1] += 1,
                    OutcomeState::Dropped => c[2] += 1,
                }
            }
        }
        let mut courses = BTreeMap::new();
        for (id, [p, f, d]) in counts {
            let attempted = p + f + d;
            let ifc = ifc_course(attempted, d, f, w1, w2)?;
            courses.insert(
                id,
                CourseFriction {
                    attempted,
                    passed: p,
                    failed: f,
                    dropped: d,
                    ifc,
                    is_filter: ifc >= filter_threshold,
                },
            );
        }
        Ok(Self {
            w1,
            w2,
            filter_threshold,
            courses,
        })
    }

    pub fn get(&self, course: &CourseId) -> Option<&CourseFriction> {
        self.courses.get(course)
    }
}

/// Unweighted mean friction over the distinct courses of a window that the
/// table knows about. `None` when that set is empty.
pub fn ifc_mean(window: &WindowedTrajectory, table: &CourseFrictionTable) -> Option<f64> {
    let mut distinct: Vec<&CourseId> = window.enrolments.iter().map(|e| &e.course_id).collect();
    distinct.sort();
    distinct.dedup();
    let vals: Vec<f64> = distinct
        .into_iter()
        .filter_map(|c| table.get(c))
        .map(|c| c.ifc)
        .collect();
    super::formulas::mean(&vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vot::WindowedEnrolment;

    fn window(attempts: &[(&str, OutcomeState)]) -> WindowedTrajectory {
        WindowedTrajectory {
            student_id: "S".into(),
            cutoff: 3,
            enrolments: attempts
                .iter()
                .map(|(c, s)| WindowedEnrolment {
                    course_id: (*c).into(),
                    rel_term: 0,
                    state: *s,
                    grade: None,
                })
                .collect(),
            active_terms: vec![0],
        }
    }

    fn table(entries: &[(&str, f64)]) -> CourseFrictionTable {
        CourseFrictionTable {
            w1: 1.0,
            w2: 0.5,
            filter_threshold: 0.5,
            courses: entries
                .iter()
                .map(|(c, v)| {
                    (
                        CourseId::from(*c),
                        CourseFriction {
                            attempted: 1,
                            passed: 0,
                            failed: 0,
                            dropped: 0,
                            ifc: *v,
                            is_filter: *v >= 0.5,
                        },
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn mean_uses_distinct_courses() {
        use OutcomeState::*;
        let t = table(&[("A", 0.6), ("B", 0.0)]);
        assert!(
            (ifc_mean(&window(&[("A", Failed), ("A", Passed), ("B", Passed)]), &t).unwrap() - 0.3)
                .abs()
                < 1e-12
        );
        let t = table(&[("A", 0.2), ("B", 0.4)]);
        assert!(
            (ifc_mean(&window(&[("A", Passed), ("B", Passed)]), &t).unwrap() - 0.3).abs() < 1e-12
        );
        let t = table(&[("A", 0.35)]);
        assert!((ifc_mean(&window(&[("A", Passed)]), &t).unwrap() - 0.35).abs() < 1e-12);
        assert_eq!(ifc_mean(&window(&[]), &t), None);
        assert_eq!(ifc_mean(&window(&[("Z", Passed)]), &t), None);
    }

    #[test]
    fn fit_counts_attempts() {
        use OutcomeState::*;
        let mut attempts = vec![("C", Dropped), ("C", Dropped)];
        attempts.extend(std::iter::repeat_n(("C", Failed), 3));
        attempts.extend(std::iter::repeat_n(("C", Passed), 5));
        let t = CourseFrictionTable::fit([&window(&attempts)], 1.0, 0.5, 0.5).unwrap();
        let c = t.get(&"C".into()).unwrap();
        assert_eq!((c.attempted, c.passed, c.failed, c.dropped), (10, 5, 3, 2));
        assert!((c.ifc - 0.35).abs() < 1e-12);
        assert!(!c.is_filter);
    }
}
