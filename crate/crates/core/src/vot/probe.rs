use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::VotConfig;
use crate::domain::{Dataset, Enrolment, Graduation, OutcomeState, StudentId};
use crate::error::Result;
use crate::matrix::FeatureMatrix;
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeAlteration {
    None,
    /// Toggles the graduation record of a random fraction of students.
    Random(f64),
    /// Toggles the graduation record of every student.
    FlipAll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub inject_enrolments: usize,
    pub alter_outcomes: OutcomeAlteration,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            inject_enrolments: 100,
            alter_outcomes: OutcomeAlteration::Random(0.2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDiff {
    pub student_id: StudentId,
    pub column: String,
    pub baseline: Option<f64>,
    pub perturbed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub identical: bool,
    pub injected_enrolments: usize,
    pub altered_outcomes: usize,
    pub changed_columns: Vec<String>,
    pub shape_mismatch: bool,
    /// Changed cells, capped at [`MAX_REPORTED_DIFFS`].
    pub diffs: Vec<CellDiff>,
    pub total_changed_cells: usize,
}

pub const MAX_REPORTED_DIFFS: usize = 1000;

fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

fn cell(v: f64) -> Option<f64> {
    (!v.is_nan()).then_some(v)
}

/// Copy of `dataset` with extra enrolments at relative terms at or beyond
/// the cutoff and toggled graduation records. Returns the copy and the
/// number of injected enrolments and altered outcomes.
pub fn perturb_future(
    dataset: &Dataset,
    vot: &VotConfig,
    seed: u64,
    opts: &ProbeOptions,
) -> (Dataset, usize, usize) {
    let mut out = dataset.clone();
    let mut rng = rng_for(seed, "leakage-probe", 0);
    let last_term = dataset
        .calendar
        .iter()
        .map(|t| t.term_index)
        .max()
        .unwrap_or(0);
    let mut taken: BTreeSet<(StudentId, String, u32)> = dataset
        .enrolments
        .iter()
        .map(|e| (e.student_id.clone(), e.course_id.0.clone(), e.term_index))
        .collect();
    let eligible: Vec<_> = dataset
        .students
        .iter()
        .filter(|s| s.entry_term + vot.cutoff <= last_term)
        .collect();
    let mut injected = 0;
    if !eligible.is_empty() && !dataset.courses.is_empty() {
        let mut tries = 0;
        while injected < opts.inject_enrolments && tries < opts.inject_enrolments * 50 {
            tries += 1;
            let s = eligible.choose(&mut rng).expect("non-empty");
            let term = rng.random_range(s.entry_term + vot.cutoff..=last_term);
            let course = &dataset
                .courses
                .choose(&mut rng)
                .expect("non-empty")
                .course_id;
            if !taken.insert((s.student_id.clone(), course.0.clone(), term)) {
                continue;
            }
            let state = [
                OutcomeState::Passed,
                OutcomeState::Failed,
                OutcomeState::Dropped,
            ][rng.random_range(0..3)];
            let grade = match state {
                OutcomeState::Passed => Some(rng.random_range(4.0..=10.0)),
                OutcomeState::Failed => Some(rng.random_range(0.0..4.0)),
                OutcomeState::Dropped => None,
            };
            out.enrolments.push(Enrolment {
                student_id: s.student_id.clone(),
                course_id: course.clone(),
                term_index: term,
                state,
                grade,
            });
            injected += 1;
        }
    }

    let graduated: BTreeMap<&StudentId, u32> = dataset
        .graduations
        .iter()
        .map(|g| (&g.student_id, g.term_index))
        .collect();
    let mut toggled = BTreeSet::new();
    for s in &dataset.students {
        let flip = match opts.alter_outcomes {
            OutcomeAlteration::None => false,
            OutcomeAlteration::FlipAll => true,
            OutcomeAlteration::Random(p) => rng.random_bool(p.clamp(0.0, 1.0)),
        };
        if flip {
            toggled.insert(s.student_id.clone());
            if !graduated.contains_key(&s.student_id) {
                let term =
                    (s.entry_term + vot.horizon.saturating_sub(1)).max(s.entry_term + vot.cutoff);
                out.graduations.push(Graduation {
                    student_id: s.student_id.clone(),
                    term_index: term,
                });
            }
        }
    }
    out.graduations
        .retain(|g| !(toggled.contains(&g.student_id) && graduated.contains_key(&g.student_id)));
    (out, injected, toggled.len())
}

/// Cell-by-cell bitwise comparison of two matrices.
pub fn compare_matrices(
    baseline: &FeatureMatrix,
    perturbed: &FeatureMatrix,
) -> (bool, Vec<String>, Vec<CellDiff>, usize) {
    if baseline.student_ids != perturbed.student_ids || baseline.columns != perturbed.columns {
        let a: BTreeSet<&str> = baseline.column_names().into_iter().collect();
        let b: BTreeSet<&str> = perturbed.column_names().into_iter().collect();
        let changed = a.symmetric_difference(&b).map(|s| s.to_string()).collect();
        return (true, changed, Vec::new(), 0);
    }
    let mut changed = BTreeSet::new();
    let mut diffs = Vec::new();
    let mut total = 0;
    for i in 0..baseline.n_rows() {
        for j in 0..baseline.n_cols() {
            let (a, b) = (baseline.get(i, j), perturbed.get(i, j));
            if !same(a, b) {
                total += 1;
                changed.insert(j);
                if diffs.len() < MAX_REPORTED_DIFFS {
                    diffs.push(CellDiff {
                        student_id: baseline.student_ids[i].clone(),
                        column: baseline.columns[j].name.clone(),
                        baseline: cell(a),
                        perturbed: cell(b),
                    });
                }
            }
        }
    }
    (
        false,
        changed
            .into_iter()
            .map(|j| baseline.columns[j].name.clone())
            .collect(),
        diffs,
        total,
    )
}

/// Runs `run` on the dataset and on a future-perturbed copy; the report is
/// `identical` iff the two matrices agree bit for bit.
pub fn leakage_probe<F>(
    run: F,
    dataset: &Dataset,
    vot: &VotConfig,
    seed: u64,
    opts: &ProbeOptions,
) -> Result<ProbeReport>
where
    F: Fn(&Dataset) -> Result<FeatureMatrix>,
{
    let baseline = run(dataset)?;
    let (perturbed_data, injected, altered) = perturb_future(dataset, vot, seed, opts);
    let perturbed = run(&perturbed_data)?;
    let (shape_mismatch, changed_columns, diffs, total) = compare_matrices(&baseline, &perturbed);
    Ok(ProbeReport {
        identical: !shape_mismatch && total == 0,
        injected_enrolments: injected,
        altered_outcomes: altered,
        changed_columns,
        shape_mismatch,
        diffs,
        total_changed_cells: total,
    })
}
