//! Feature extraction on a generated cohort, recomputed directly from the
//! raw enrolment table.

mod common;

use std::collections::BTreeMap;

use capire_core::domain::{Dataset, Enrolment, OutcomeState, StudentId};
use capire_core::features::{extract_features, FeatureConfig, FeatureVector};
use capire_core::synth::{generate, GeneratorConfig};
use capire_core::vot::VotConfig;
use common::close_opt;

fn in_window(e: &Enrolment, entry: u32, cutoff: u32) -> bool {
    e.term_index >= entry && e.term_index < entry + cutoff
}

struct Brute<'a> {
    dataset: &'a Dataset,
    cutoff: u32,
    training_before: Option<i32>,
}

impl Brute<'_> {
    fn window(&self, id: &StudentId) -> Vec<&Enrolment> {
        let s = self
            .dataset
            .students
            .iter()
            .find(|s| &s.student_id == id)
            .unwrap();
        self.dataset
            .enrolments
            .iter()
            .filter(|e| &e.student_id == id && in_window(e, s.entry_term, self.cutoff))
            .collect()
    }

    fn friction(&self, w1: f64, w2: f64) -> BTreeMap<String, f64> {
        let mut tallies: BTreeMap<String, (f64, f64)> = BTreeMap::new();
        for s in &self.dataset.students {
            if self.training_before.is_some_and(|y| s.cohort_year >= y) {
                continue;
            }
            for e in self.window(&s.student_id) {
                let t = tallies.entry(e.course_id.0.clone()).or_default();
                t.1 += 1.0;
                t.0 += match e.state {
                    OutcomeState::Dropped => w1,
                    OutcomeState::Failed => w2,
                    OutcomeState::Passed => 0.0,
                };
            }
        }
        tallies.into_iter().map(|(c, (w, n))| (c, w / n)).collect()
    }
}

fn check(v: &FeatureVector, name: &str, want: Option<f64>) {
    assert!(
        close_opt(v.get(name), want),
        "{} {name}: extracted {:?}, brute force {want:?}",
        v.student_id.0,
        v.get(name)
    );
}

fn run(cutoff: u32, training_before: Option<i32>) {
    let cohort = generate(&GeneratorConfig::facet_like(250, 21)).unwrap();
    let ds = &cohort.dataset;
    let vot = VotConfig {
        cutoff,
        ..VotConfig::default()
    };
    let cfg = FeatureConfig {
        training_cohorts_before: training_before,
        ..FeatureConfig::default()
    };
    let extraction = extract_features(ds, &vot, &cfg).unwrap();
    let brute = Brute {
        dataset: ds,
        cutoff,
        training_before,
    };
    let friction = brute.friction(cfg.w1, cfg.w2);
    assert_eq!(extraction.vectors.len(), ds.students.len());
    let mut nonempty = 0;
    for v in &extraction.vectors {
        let w = brute.window(&v.student_id);
        let n = w.len() as f64;
        let count = |s: OutcomeState| w.iter().filter(|e| e.state == s).count() as f64;
        let rate = |s: OutcomeState| (n > 0.0).then(|| count(s) / n);
        let grades: Vec<f64> = w
            .iter()
            .filter(|e| e.state != OutcomeState::Dropped)
            .filter_map(|e| e.grade)
            .collect();
        let mut per_course: BTreeMap<&str, f64> = BTreeMap::new();
        for e in &w {
            *per_course.entry(&e.course_id.0).or_default() += 1.0;
        }
        let known: Vec<f64> = per_course
            .keys()
            .filter_map(|c| friction.get(*c).copied())
            .collect();
        let ifc = (!known.is_empty()).then(|| known.iter().sum::<f64>() / known.len() as f64);
        assert_eq!(v.window_empty, w.is_empty());
        nonempty += usize::from(!w.is_empty());

        check(v, "attempted_count", Some(n));
        check(v, "passed_count", Some(count(OutcomeState::Passed)));
        check(v, "failed_count", Some(count(OutcomeState::Failed)));
        check(v, "dropped_count", Some(count(OutcomeState::Dropped)));
        check(v, "pass_rate", rate(OutcomeState::Passed));
        check(v, "libre_rate", rate(OutcomeState::Dropped));
        check(
            v,
            "grade_mean",
            (!grades.is_empty()).then(|| grades.iter().sum::<f64>() / grades.len() as f64),
        );
        check(
            v,
            "max_course_attempts",
            Some(per_course.values().copied().fold(0.0, f64::max)),
        );
        check(
            v,
            "mean_attempts_per_course",
            (!w.is_empty()).then(|| n / per_course.len() as f64),
        );
        check(v, "ifc_mean", ifc);
        check(
            v,
            "ifc_x_libre_rate",
            ifc.zip(rate(OutcomeState::Dropped)).map(|(a, b)| a * b),
        );
        let s = ds
            .students
            .iter()
            .find(|s| s.student_id == v.student_id)
            .unwrap();
        check(v, "age_at_entry", Some(s.age_at_entry));
        check(v, "distance_to_campus_km", s.distance_to_campus_km);
    }
    assert!(nonempty > 200, "only {nonempty} non-empty windows");
}

#[test]
fn default_window_matches_brute_force() {
    run(3, None);
}

#[test]
fn wider_window_with_training_cutoff_matches_brute_force() {
    run(5, Some(2012));
}

#[test]
fn post_window_enrolments_do_not_move_any_feature() {
    let cohort = generate(&GeneratorConfig::facet_like(150, 4)).unwrap();
    let vot = VotConfig::default();
    let cfg = FeatureConfig::default();
    let before = extract_features(&cohort.dataset, &vot, &cfg).unwrap();
    let mut late = cohort.dataset.clone();
    let entry: BTreeMap<_, _> = late
        .students
        .iter()
        .map(|s| (s.student_id.clone(), s.entry_term))
        .collect();
    for e in late.enrolments.iter_mut() {
        if e.term_index >= entry[&e.student_id] + vot.cutoff {
            e.state = OutcomeState::Dropped;
            e.grade = None;
        }
    }
    let after = extract_features(&late, &vot, &cfg).unwrap();
    assert_eq!(before.vectors, after.vectors);
    assert_eq!(before.friction, after.friction);
}
