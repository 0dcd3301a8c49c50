use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use rand_distr::Normal as Gaussian;
use serde::{Deserialize, Serialize};

use super::{ArchetypeTemplate, GeneratorConfig, LoadShape, Normal, OutcomePropensity};
use crate::domain::{
    AreaIndicators, Course, CourseId, Curriculum, Dataset, Enrolment, Graduation, OutcomeState,
    SchoolType, Student, StudentId, TermInfo,
};
use crate::error::Result;
use crate::matrix::write_output;
use crate::rng::{rng_for, Rng};

pub const CURRICULUM_ID: &str = "CIV";
const COURSES_PER_TERM: usize = 4;
const MAX_LOAD: f64 = 8.0;
const REGIONS: usize = 6;
const POSTCODES_PER_REGION: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub student_id: StudentId,
    /// `None` for diffuse-noise students.
    pub template_id: Option<String>,
    pub attrition_flag: u8,
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub dataset: Dataset,
    pub ground_truth: Vec<GroundTruth>,
}

fn sample(rng: &mut Rng, n: Normal) -> f64 {
    if n.sd <= 0.0 {
        n.mean
    } else {
        Gaussian::new(n.mean, n.sd).expect("finite sd").sample(rng)
    }
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn maybe<T>(rng: &mut Rng, rate: f64, v: T) -> Option<T> {
    if rng.random_bool(rate) {
        None
    } else {
        Some(v)
    }
}

struct World {
    courses: Vec<Course>,
    difficulty: Vec<f64>,
    /// Postcode and its baseline deprivation, sorted by deprivation.
    postcodes: Vec<(String, f64)>,
    n_years: i32,
}

fn build_world(cfg: &GeneratorConfig, rng: &mut Rng) -> World {
    let jitter = Gaussian::new(0.0, 0.4).expect("valid");
    let mut courses = Vec::with_capacity(cfg.n_courses);
    let mut difficulty = Vec::with_capacity(cfg.n_courses);
    for k in 0..cfg.n_courses {
        let nominal = (k / COURSES_PER_TERM) as u32 + 1;
        courses.push(Course {
            course_id: CourseId(format!("C{:03}", k + 1)),
            curriculum_id: CURRICULUM_ID.into(),
            nominal_term: nominal,
            is_core: k % COURSES_PER_TERM < 2,
        });
        difficulty.push(jitter.sample(rng));
    }
    // Filter courses: spread over the first terms, one core course per term.
    for f in 0..cfg.n_filter_courses {
        let k = (f * COURSES_PER_TERM) % cfg.n_courses;
        difficulty[k] += 2.0;
    }
    let mut postcodes = Vec::new();
    for r in 0..REGIONS {
        for p in 0..POSTCODES_PER_REGION {
            let base =
                (r * POSTCODES_PER_REGION + p) as f64 / (REGIONS * POSTCODES_PER_REGION - 1) as f64;
            postcodes.push((
                format!("R{}-{:02}", r + 1, p + 1),
                round3(0.05 + 0.9 * base),
            ));
        }
    }
    let n_years =
        cfg.n_cohorts as i32 + (cfg.horizon_terms + cfg.grace_terms).div_ceil(2) as i32 + 1;
    World {
        courses,
        difficulty,
        postcodes,
        n_years,
    }
}

fn calendar(cfg: &GeneratorConfig, world: &World, rng: &mut Rng) -> Vec<TermInfo> {
    let shock = Gaussian::new(0.0, 3.0).expect("valid");
    let mut inflation: f64 = 10.0;
    let mut strikes_by_year = Vec::new();
    let mut terms = Vec::new();
    for y in 0..world.n_years {
        inflation = (0.7 * inflation + 3.0 + cfg.macro_volatility * shock.sample(rng)).max(0.5);
        let strikes = rng.random_range(0..6u32) as f64;
        strikes_by_year.push(
            (2.5 + cfg.macro_volatility * (strikes - 2.5))
                .round()
                .max(0.0) as u32,
        );
        let last_two = strikes_by_year.iter().rev().take(2).sum::<u32>();
        for season in 0..2 {
            terms.push(TermInfo {
                term_index: (y * 2 + season) as u32,
                calendar_year: cfg.first_cohort + y,
                season: format!("S{}", season + 1),
                inflation_yoy: Some(round1(inflation)),
                strike_count_24m: Some(f64::from(last_two)),
            });
        }
    }
    terms
}

fn areas(cfg: &GeneratorConfig, world: &World, rng: &mut Rng) -> Vec<AreaIndicators> {
    let drift = Gaussian::new(0.0, 0.01).expect("valid");
    let mut out = Vec::new();
    for (postcode, dep) in &world.postcodes {
        for y in 0..world.n_years {
            let d = (dep + drift.sample(rng)).clamp(0.0, 1.0);
            out.push(AreaIndicators {
                postcode: postcode.clone(),
                year: cfg.first_cohort + y,
                deprivation_index: Some(round3(d)),
                unemployment: Some(round3((0.04 + 0.2 * d + drift.sample(rng)).clamp(0.0, 1.0))),
                informality: Some(round3((0.2 + 0.5 * d + drift.sample(rng)).clamp(0.0, 1.0))),
                poverty: Some(round3((0.05 + 0.6 * d + drift.sample(rng)).clamp(0.0, 1.0))),
            });
        }
    }
    out
}

/// A diffuse-noise student's template: every parameter uniform over a broad range.
fn random_template(rng: &mut Rng) -> ArchetypeTemplate {
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..=hi);
    let (pass, fail, drop) = (u(0.05, 1.0), u(0.0, 0.6), u(0.0, 0.6));
    let age_spread = u(0.0, 1.0);
    ArchetypeTemplate {
        template_id: "noise".into(),
        share: 0.0,
        age: Normal::new(17.5 + 8.0 * age_spread * age_spread, 1.5),
        p_female: u(0.0, 1.0),
        p_work: u(0.0, 1.0),
        hs_gpa: Normal::new(u(5.0, 9.5), 0.8),
        deprivation: Normal::new(u(0.05, 0.95), 0.1),
        parental_education: Normal::new(u(0.0, 4.0), 1.0),
        p_siblings_university: u(0.0, 1.0),
        school_weights: [u(0.0, 1.0), u(0.0, 1.0), u(0.0, 1.0)],
        distance_km: Normal::new(u(2.0, 60.0), 5.0),
        load: LoadShape {
            base: u(1.0, 7.0),
            trend: u(-2.0, 1.0),
            sd: 1.0,
        },
        p_gap: u(0.0, 0.6),
        outcomes: OutcomePropensity { pass, fail, drop },
        friction_sensitivity: u(0.0, 1.5),
        grade_mean: u(5.0, 9.0),
        p_retake: u(0.0, 1.0),
        attrition: u(0.1, 0.9),
        attrition_drift: None,
    }
}

fn outcome(rng: &mut Rng, p: OutcomePropensity, difficulty: f64) -> OutcomeState {
    let w = [
        p.pass * (-difficulty).exp(),
        p.fail * (difficulty / 2.0).exp(),
        p.drop * (difficulty / 2.0).exp(),
    ];
    let total: f64 = w.iter().sum();
    let x = rng.random_range(0.0..total);
    if x < w[0] {
        OutcomeState::Passed
    } else if x < w[0] + w[1] {
        OutcomeState::Failed
    } else {
        OutcomeState::Dropped
    }
}

struct Trajectory {
    enrolments: Vec<Enrolment>,
    graduation: Option<u32>,
}

#[allow(clippy::too_many_arguments)]
fn simulate_trajectory(
    rng: &mut Rng,
    cfg: &GeneratorConfig,
    world: &World,
    t: &ArchetypeTemplate,
    id: &StudentId,
    entry: u32,
    attrits: bool,
) -> Trajectory {
    let window = cfg.window_terms;
    let still_enrolled_from = cfg.horizon_terms - 1 - cfg.grace_terms;
    let (last_rel, graduation) = if attrits {
        (
            rng.random_range(window - 1..still_enrolled_from.min(window + 5)),
            None,
        )
    } else if rng.random_bool(0.6) {
        let g = rng.random_range(still_enrolled_from..cfg.horizon_terms + cfg.grace_terms);
        (g - 1, Some(entry + g))
    } else {
        (cfg.horizon_terms - 1, None)
    };
    let jitter = |rng: &mut Rng| {
        if t.load.sd > 0.0 {
            Gaussian::new(0.0, t.load.sd).expect("valid").sample(rng)
        } else {
            0.0
        }
    };
    let mut passed: BTreeSet<usize> = BTreeSet::new();
    let mut to_retake: Vec<usize> = Vec::new();
    let mut enrolments = Vec::new();
    for rel in 0..=last_rel {
        let in_window = rel < window;
        let active = rel == 0 || rel == last_rel || !rng.random_bool(t.p_gap);
        if !active {
            continue;
        }
        let shape_rel = rel.min(window - 1) as f64;
        let load = (t.load.base + t.load.trend * shape_rel + jitter(rng))
            .round()
            .clamp(1.0, MAX_LOAD) as usize;
        let mut picked: Vec<usize> = Vec::with_capacity(load);
        for &k in &to_retake {
            if picked.len() < load && !passed.contains(&k) && rng.random_bool(t.p_retake) {
                picked.push(k);
            }
        }
        for k in 0..world.courses.len() {
            if picked.len() >= load {
                break;
            }
            if !passed.contains(&k) && !picked.contains(&k) && !to_retake.contains(&k) {
                picked.push(k);
            }
        }
        let outcomes = if in_window {
            t.outcomes
        } else {
            OutcomePropensity {
                pass: 0.7,
                fail: 0.2,
                drop: 0.1,
            }
        };
        for k in picked {
            let state = outcome(rng, outcomes, world.difficulty[k] * t.friction_sensitivity);
            let grade = match state {
                OutcomeState::Passed => Some(round1(
                    sample(rng, Normal::new(t.grade_mean, 0.8)).clamp(4.0, 10.0),
                )),
                OutcomeState::Failed => Some(round1(rng.random_range(1.0..4.0))),
                OutcomeState::Dropped => None,
            };
            match state {
                OutcomeState::Passed => {
                    passed.insert(k);
                    to_retake.retain(|&c| c != k);
                }
                _ if !to_retake.contains(&k) => to_retake.push(k),
                _ => {}
            }
            enrolments.push(Enrolment {
                student_id: id.clone(),
                course_id: world.courses[k].course_id.clone(),
                term_index: entry + rel,
                state,
                grade,
            });
        }
    }
    let mut graduation = graduation;
    if !attrits && graduation.is_none() {
        // Curriculum exhausted before the horizon: the student graduated.
        let last = enrolments.last().map_or(0, |e| e.term_index - entry);
        if last < still_enrolled_from {
            graduation = Some(entry + last + 1);
        }
    }
    Trajectory {
        enrolments,
        graduation,
    }
}

fn simulate_student(
    rng: &mut Rng,
    cfg: &GeneratorConfig,
    world: &World,
    t: &ArchetypeTemplate,
    index: usize,
) -> (Student, Trajectory, bool) {
    let id = StudentId(format!("S{:06}", index + 1));
    let cohort_offset = rng.random_range(0..cfg.n_cohorts) as i32;
    let cohort_year = cfg.first_cohort + cohort_offset;
    let entry = (cohort_offset * 2) as u32;
    let miss = cfg.missing_rate;

    let dep = sample(rng, t.deprivation).clamp(0.0, 1.0);
    let postcode = world
        .postcodes
        .iter()
        .min_by(|a, b| (a.1 - dep).abs().total_cmp(&(b.1 - dep).abs()))
        .map(|p| p.0.clone())
        .expect("postcodes exist");
    let school = WeightedIndex::new(t.school_weights)
        .expect("validated weights")
        .sample(rng);
    let age = round1(sample(rng, t.age).clamp(16.0, 60.0));
    let gender = if rng.random_bool(t.p_female) {
        "F"
    } else {
        "M"
    }
    .to_string();
    let works = rng.random_bool(t.p_work);
    let gpa = round1(sample(rng, t.hs_gpa).clamp(4.0, 10.0));
    let parental = sample(rng, t.parental_education).round().clamp(0.0, 4.0) as u8;
    let siblings = rng.random_bool(t.p_siblings_university);
    let school = [
        SchoolType::Public,
        SchoolType::Private,
        SchoolType::Technical,
    ][school];
    let distance = round1(sample(rng, t.distance_km).max(0.5));
    let student = Student {
        student_id: id.clone(),
        cohort_year,
        entry_term: entry,
        age_at_entry: age,
        gender: maybe(rng, miss, gender),
        works_at_entry: maybe(rng, miss, works),
        hs_gpa: maybe(rng, miss, gpa),
        postcode: maybe(rng, miss, postcode),
        parental_education: maybe(rng, miss, parental),
        siblings_university: maybe(rng, miss, siblings),
        secondary_school_type: maybe(rng, miss, school),
        distance_to_campus_km: maybe(rng, miss, distance),
    };
    let attrits = rng.random_bool(t.attrition_for(cohort_year));
    let traj = simulate_trajectory(rng, cfg, world, t, &id, entry, attrits);
    (student, traj, attrits)
}

/// Deterministic under `cfg.seed`. Every student's stream is derived from
/// the seed and the student index alone.
pub fn generate(cfg: &GeneratorConfig) -> Result<SyntheticCohort> {
    cfg.validate()?;
    let mut world_rng = rng_for(cfg.seed, "synth-world", 0);
    let world = build_world(cfg, &mut world_rng);
    let calendar = calendar(cfg, &world, &mut world_rng);
    let areas = areas(cfg, &world, &mut world_rng);

    let mut weights: Vec<f64> = cfg.templates.iter().map(|t| t.share).collect();
    weights.push(cfg.noise_share());
    let picker = WeightedIndex::new(&weights)
        .map_err(|e| crate::CapireError::Config(format!("template shares: {e}")))?;

    let mut students = Vec::with_capacity(cfg.n_students);
    let mut enrolments = Vec::new();
    let mut graduations = Vec::new();
    let mut truth = Vec::with_capacity(cfg.n_students);
    for i in 0..cfg.n_students {
        let mut rng = rng_for(cfg.seed, "synth-student", i as u64);
        let k = picker.sample(&mut rng);
        let noise;
        let template = match cfg.templates.get(k) {
            Some(t) => t,
            None => {
                noise = random_template(&mut rng);
                &noise
            }
        };
        let (student, traj, attrits) = simulate_student(&mut rng, cfg, &world, template, i);
        truth.push(GroundTruth {
            student_id: student.student_id.clone(),
            template_id: cfg.templates.get(k).map(|t| t.template_id.clone()),
            attrition_flag: attrits as u8,
        });
        if let Some(term) = traj.graduation {
            graduations.push(Graduation {
                student_id: student.student_id.clone(),
                term_index: term,
            });
        }
        enrolments.extend(traj.enrolments);
        students.push(student);
    }

    let n_terms = (cfg.n_courses.div_ceil(COURSES_PER_TERM)) as u32;
    let curriculum = Curriculum {
        curriculum_id: CURRICULUM_ID.into(),
        expected_courses_by_term: (1..=n_terms)
            .map(|t| (t, (t as usize * COURSES_PER_TERM).min(cfg.n_courses) as u32))
            .collect::<BTreeMap<_, _>>(),
    };
    let dataset = Dataset {
        students,
        enrolments,
        courses: world.courses,
        curricula: vec![curriculum],
        calendar,
        areas,
        graduations,
    };
    Ok(SyntheticCohort {
        dataset,
        ground_truth: truth,
    })
}

pub fn write_ground_truth(truth: &[GroundTruth], path: &Path, force: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["student_id", "template_id", "attrition_flag"])?;
    for g in truth {
        w.write_record([
            g.student_id.0.as_str(),
            g.template_id.as_deref().unwrap_or("noise"),
            &g.attrition_flag.to_string(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| crate::CapireError::Io(e.into_error()))?;
    write_output(path, &bytes, force)
}
