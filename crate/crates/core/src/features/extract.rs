use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dictionary::{roster_index, ROSTER};
use super::formulas::{self, enrolment_regularity, load_trend, max_gap, state_entropy, velocity};
use super::friction::{ifc_mean, CourseFrictionTable};
use super::FeatureConfig;
use crate::domain::{
    AreaIndicators, Course, CourseId, Curriculum, Dataset, OutcomeState, SchoolType, Student,
    StudentId, TermInfo,
};
use crate::error::{CapireError, Result};
use crate::vot::{slice_trajectory, VotConfig, WindowedTrajectory};

pub const N1_COUNT: usize = 12;
pub const N2_COUNT: usize = 6;
pub const N3_COUNT: usize = 16;
pub const N4_BASE_COUNT: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionPair {
    pub name: String,
    pub a: String,
    pub b: String,
}

/// Ordered product features appended to the N4 block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InteractionSpec(pub Vec<InteractionPair>);

impl Default for InteractionSpec {
    fn default() -> Self {
        let pair = |name: &str, a: &str, b: &str| InteractionPair {
            name: name.into(),
            a: a.into(),
            b: b.into(),
        };
        Self(vec![
            pair("ifc_x_libre_rate", "ifc_mean", "libre_rate"),
            pair(
                "age_x_mean_attempts",
                "age_at_entry",
                "mean_attempts_per_course",
            ),
            pair("deprivation_x_pass_rate", "deprivation_index", "pass_rate"),
            pair(
                "filter_exposure_x_max_gap",
                "filter_exposure_count",
                "max_gap",
            ),
        ])
    }
}

impl InteractionSpec {
    /// Every output must be a roster slot and every operand a non-interaction
    /// roster feature.
    pub fn validate(&self) -> Result<()> {
        let outputs: BTreeSet<&str> = self.0.iter().map(|p| p.name.as_str()).collect();
        for p in &self.0 {
            if roster_index(&p.name).is_none() {
                return Err(CapireError::config(format!(
                    "interaction output '{}' is not a dictionary feature",
                    p.name
                )));
            }
            for op in [&p.a, &p.b] {
                if roster_index(op).is_none() || outputs.contains(op.as_str()) {
                    return Err(CapireError::config(format!(
                        "interaction '{}' references unknown feature '{op}'",
                        p.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.iter().any(|p| p.name == name)
    }
}

/// Products for each pair; a missing operand yields a missing product.
pub fn generate_interactions(
    values: &[Option<f64>],
    spec: &InteractionSpec,
) -> Result<Vec<Option<f64>>> {
    spec.validate()?;
    Ok(spec
        .0
        .iter()
        .map(|p| {
            let a = values[roster_index(&p.a).expect("validated")];
            let b = values[roster_index(&p.b).expect("validated")];
            Some(a? * b?)
        })
        .collect())
}

/// Area indicators per postcode, ordered by year.
#[derive(Debug, Default)]
pub struct AreaIndex<'a>(BTreeMap<&'a str, BTreeMap<i32, &'a AreaIndicators>>);

impl<'a> AreaIndex<'a> {
    pub fn new(areas: &'a [AreaIndicators]) -> Self {
        let mut m: BTreeMap<&str, BTreeMap<i32, &AreaIndicators>> = BTreeMap::new();
        for a in areas {
            m.entry(a.postcode.as_str()).or_default().insert(a.year, a);
        }
        Self(m)
    }

    /// The row for `year`, else the latest earlier year. Later years are never used.
    pub fn lookup(&self, postcode: &str, year: i32) -> Option<&'a AreaIndicators> {
        self.0
            .get(postcode)?
            .range(..=year)
            .next_back()
            .map(|(_, a)| *a)
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn entry_info<'a>(
    student: &Student,
    calendar: &BTreeMap<u32, &'a TermInfo>,
) -> Result<&'a TermInfo> {
    calendar.get(&student.entry_term).copied().ok_or_else(|| {
        CapireError::config(format!(
            "no calendar entry for entry term {} of student {}",
            student.entry_term, student.student_id
        ))
    })
}

pub fn extract_n1(
    student: &Student,
    areas: &AreaIndex,
    calendar: &BTreeMap<u32, &TermInfo>,
) -> Result<[Option<f64>; N1_COUNT]> {
    let year = entry_info(student, calendar)?.calendar_year;
    let area = student
        .postcode
        .as_deref()
        .and_then(|p| areas.lookup(p, year));
    let pe = student.parental_education.map(f64::from);
    let tertiary = student.parental_education.map(|p| flag(p >= 3));
    let first_gen = match (student.parental_education, student.siblings_university) {
        (Some(p), Some(s)) => Some(flag(p < 3 && !s)),
        _ => None,
    };
    let school = |t: SchoolType| student.secondary_school_type.map(|s| flag(s == t));
    Ok([
        area.and_then(|a| a.deprivation_index),
        student.distance_to_campus_km,
        area.and_then(|a| a.unemployment),
        area.and_then(|a| a.informality),
        area.and_then(|a| a.poverty),
        pe,
        tertiary,
        student.siblings_university.map(flag),
        first_gen,
        school(SchoolType::Public),
        school(SchoolType::Private),
        school(SchoolType::Technical),
    ])
}

fn is_female(gender: &str) -> bool {
    matches!(
        gender.trim().to_ascii_lowercase().as_str(),
        "f" | "female" | "woman" | "mujer"
    )
}

pub fn extract_n2(
    student: &Student,
    calendar: &BTreeMap<u32, &TermInfo>,
) -> Result<[Option<f64>; N2_COUNT]> {
    let t0 = entry_info(student, calendar)?;
    Ok([
        Some(student.age_at_entry),
        student.gender.as_deref().map(|g| flag(is_female(g))),
        student.works_at_entry.map(flag),
        student.hs_gpa,
        t0.inflation_yoy,
        t0.strike_count_24m,
    ])
}

pub fn extract_n3(
    window: &WindowedTrajectory,
    table: &CourseFrictionTable,
    courses: &BTreeMap<&CourseId, &Course>,
) -> [Option<f64>; N3_COUNT] {
    let attempted = window.enrolments.len() as u64;
    let count = |s: OutcomeState| window.enrolments.iter().filter(|e| e.state == s).count() as u64;
    let (passed, failed, dropped) = (
        count(OutcomeState::Passed),
        count(OutcomeState::Failed),
        count(OutcomeState::Dropped),
    );
    let rate = |c: u64| (attempted > 0).then(|| c as f64 / attempted as f64);
    let grades: Vec<f64> = window
        .enrolments
        .iter()
        .filter(|e| e.state != OutcomeState::Dropped)
        .filter_map(|e| e.grade)
        .collect();

    let mut per_course: BTreeMap<&CourseId, u64> = BTreeMap::new();
    for e in &window.enrolments {
        *per_course.entry(&e.course_id).or_default() += 1;
    }
    let core_failed = window
        .enrolments
        .iter()
        .filter(|e| {
            e.state == OutcomeState::Failed && courses.get(&e.course_id).is_some_and(|c| c.is_core)
        })
        .map(|e| &e.course_id)
        .collect::<BTreeSet<_>>()
        .len();
    let is_filter = |c: &CourseId| table.get(c).is_some_and(|f| f.is_filter);
    let exposures = window
        .enrolments
        .iter()
        .filter(|e| is_filter(&e.course_id))
        .count() as u64;
    let filter_distinct = per_course.keys().filter(|c| is_filter(c)).count();

    [
        Some(attempted as f64),
        Some(passed as f64),
        Some(failed as f64),
        Some(dropped as f64),
        rate(passed),
        rate(failed),
        rate(dropped),
        formulas::mean(&grades),
        formulas::median(&grades),
        formulas::std_pop(&grades),
        Some(core_failed as f64),
        ifc_mean(window, table),
        Some(exposures as f64),
        rate(exposures),
        Some(filter_distinct as f64),
        Some(per_course.values().copied().max().unwrap_or(0) as f64),
    ]
}

/// Base temporal features. `curriculum_courses` are the courses of the
/// student's curriculum, used for the not-attempted entropy state.
pub fn extract_n4(
    window: &WindowedTrajectory,
    curriculum: Option<&Curriculum>,
    curriculum_courses: &[&Course],
) -> [Option<f64>; N4_BASE_COUNT] {
    if window.is_empty() {
        return [None; N4_BASE_COUNT];
    }
    let attempted = window.enrolments.len();
    let distinct: BTreeSet<&CourseId> = window.enrolments.iter().map(|e| &e.course_id).collect();
    let first = window.active_terms[0];
    let last = *window.active_terms.last().expect("non-empty");
    let mut loads = vec![0.0; (last - first + 1) as usize];
    for e in &window.enrolments {
        loads[(e.rel_term - first) as usize] += 1.0;
    }
    let completed = window
        .enrolments
        .iter()
        .filter(|e| e.state == OutcomeState::Passed)
        .map(|e| &e.course_id)
        .collect::<BTreeSet<_>>()
        .len() as u64;
    let expected = curriculum
        .map(|c| u64::from(c.expected_at(window.cutoff)))
        .unwrap_or(0);
    let count = |s: OutcomeState| window.enrolments.iter().filter(|e| e.state == s).count() as u64;
    let not_attempted = curriculum_courses
        .iter()
        .filter(|c| c.nominal_term <= window.cutoff && !distinct.contains(&c.course_id))
        .count() as u64;
    [
        Some(attempted as f64 / distinct.len() as f64),
        max_gap(&window.active_terms),
        load_trend(&loads),
        velocity(completed, expected),
        enrolment_regularity(&window.active_terms),
        state_entropy(&[
            count(OutcomeState::Passed),
            count(OutcomeState::Failed),
            count(OutcomeState::Dropped),
            not_attempted,
        ]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub student_id: StudentId,
    pub cohort_year: i32,
    pub region: Option<String>,
    /// One slot per roster feature; `None` is missing.
    pub values: Vec<Option<f64>>,
    pub window_empty: bool,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        roster_index(name).and_then(|i| self.values[i])
    }
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub vectors: Vec<FeatureVector>,
    pub friction: CourseFrictionTable,
    pub training: BTreeSet<StudentId>,
}

/// The curriculum a window belongs to: the most frequent curriculum among
/// its courses, ties to the smallest id.
fn window_curriculum<'a>(
    window: &WindowedTrajectory,
    courses: &BTreeMap<&CourseId, &'a Course>,
) -> Option<&'a str> {
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &window.enrolments {
        if let Some(c) = courses.get(&e.course_id) {
            *freq.entry(c.curriculum_id.as_str()).or_default() += 1;
        }
    }
    let best = freq.values().copied().max()?;
    freq.into_iter().find(|&(_, n)| n == best).map(|(id, _)| id)
}

/// Windows every student, fits the friction table on the training population
/// and extracts the full roster. Output is sorted by student id.
pub fn extract_features(
    dataset: &Dataset,
    vot: &VotConfig,
    cfg: &FeatureConfig,
) -> Result<Extraction> {
    vot.validate()?;
    cfg.interactions.validate()?;
    let base = N1_COUNT + N2_COUNT + N3_COUNT + N4_BASE_COUNT;
    for (name, _) in &ROSTER[base..] {
        if !cfg.interactions.contains(name) {
            return Err(CapireError::config(format!(
                "no interaction definition for '{name}'"
            )));
        }
    }
    let by_student = dataset.enrolments_by_student();
    let empty = Vec::new();
    let mut students: Vec<&Student> = dataset.students.iter().collect();
    students.sort_by(|a, b| a.student_id.cmp(&b.student_id));
    let windows: Vec<WindowedTrajectory> = students
        .par_iter()
        .map(|s| {
            slice_trajectory(
                s,
                by_student
                    .get(&s.student_id)
                    .unwrap_or(&empty)
                    .iter()
                    .copied(),
                vot,
            )
        })
        .collect();

    let training: BTreeSet<StudentId> = students
        .iter()
        .filter(|s| cfg.is_training(s.cohort_year))
        .map(|s| s.student_id.clone())
        .collect();
    let friction = CourseFrictionTable::fit(
        windows.iter().filter(|w| training.contains(&w.student_id)),
        cfg.w1,
        cfg.w2,
        cfg.filter_threshold,
    )?;

    let calendar = dataset.calendar_map();
    let courses = dataset.course_map();
    let areas = AreaIndex::new(&dataset.areas);
    let curricula: BTreeMap<&str, &Curriculum> = dataset
        .curricula
        .iter()
        .map(|c| (c.curriculum_id.as_str(), c))
        .collect();
    let mut by_curriculum: BTreeMap<&str, Vec<&Course>> = BTreeMap::new();
    for c in &dataset.courses {
        by_curriculum
            .entry(c.curriculum_id.as_str())
            .or_default()
            .push(c);
    }

    let vectors = students
        .par_iter()
        .zip(windows.par_iter())
        .map(|(s, w)| {
            let mut values = Vec::with_capacity(ROSTER.len());
            values.extend(extract_n1(s, &areas, &calendar)?);
            values.extend(extract_n2(s, &calendar)?);
            values.extend(extract_n3(w, &friction, &courses));
            let cur = window_curriculum(w, &courses);
            let cur_courses = cur
                .and_then(|c| by_curriculum.get(c))
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            values.extend(extract_n4(
                w,
                cur.and_then(|c| curricula.get(c).copied()),
                cur_courses,
            ));
            values.resize(ROSTER.len(), None);
            for (p, v) in cfg
                .interactions
                .0
                .iter()
                .zip(generate_interactions(&values, &cfg.interactions)?)
            {
                values[roster_index(&p.name).unwrap()] = v;
            }
            Ok(FeatureVector {
                student_id: s.student_id.clone(),
                cohort_year: s.cohort_year,
                region: s.region().map(str::to_string),
                values,
                window_empty: w.is_empty(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Extraction {
        vectors,
        friction,
        training,
    })
}
