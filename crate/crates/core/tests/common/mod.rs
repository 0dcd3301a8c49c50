//! Brute-force reference implementations and random instance builders
//! shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use capire_core::domain::{Course, CourseId, Curriculum, OutcomeState, StudentId};
use capire_core::vot::{WindowedEnrolment, WindowedTrajectory};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const RTOL: f64 = 1e-9;

/// Relative agreement, scaled by `max(|a|, |b|, 1)` so that quantities
/// that are exactly zero in one implementation and a rounding residue in
/// the other still compare.
pub fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= RTOL * a.abs().max(b.abs()).max(1.0)
}

pub fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => close(x, y),
        _ => false,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

const STATES: [OutcomeState; 3] = [
    OutcomeState::Passed,
    OutcomeState::Failed,
    OutcomeState::Dropped,
];

/// A random window over a pool of up to eight courses, with the curriculum
/// those courses belong to.
pub struct WindowCase {
    pub window: WindowedTrajectory,
    pub curriculum: Curriculum,
    pub courses: Vec<Course>,
}

pub fn random_window(rng: &mut ChaCha8Rng, student: &str) -> WindowCase {
    let cutoff = rng.random_range(1..=12u32);
    let n_courses = rng.random_range(1..=8usize);
    let courses: Vec<Course> = (0..n_courses)
        .map(|k| Course {
            course_id: CourseId(format!("C{k}")),
            curriculum_id: "K".into(),
            nominal_term: rng.random_range(0..12),
            is_core: rng.random_bool(0.5),
        })
        .collect();
    let mut expected = BTreeMap::new();
    let mut cumulative = 0;
    for t in 0..12u32 {
        if rng.random_bool(0.4) {
            cumulative += rng.random_range(0..4u32);
            expected.insert(t, cumulative);
        }
    }
    let mut enrolments = Vec::new();
    for t in 0..cutoff {
        if rng.random_bool(0.55) {
            for _ in 0..rng.random_range(1..=4) {
                let c = &courses[rng.random_range(0..n_courses)];
                let state = STATES[rng.random_range(0..3)];
                let grade =
                    (state != OutcomeState::Dropped).then(|| rng.random_range(1..=10) as f64);
                enrolments.push(WindowedEnrolment {
                    course_id: c.course_id.clone(),
                    rel_term: t,
                    state,
                    grade,
                });
            }
        }
    }
    enrolments.sort_by(|a, b| (a.rel_term, &a.course_id).cmp(&(b.rel_term, &b.course_id)));
    let active_terms: Vec<u32> = enrolments
        .iter()
        .map(|e| e.rel_term)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    WindowCase {
        window: WindowedTrajectory {
            student_id: StudentId(student.into()),
            cutoff,
            enrolments,
            active_terms,
        },
        curriculum: Curriculum {
            curriculum_id: "K".into(),
            expected_courses_by_term: expected,
        },
        courses,
    }
}

/// Course friction fitted by walking every attempt, then averaged over the
/// distinct courses of `window`.
pub fn oracle_ifc_mean(
    training: &[&WindowedTrajectory],
    window: &WindowedTrajectory,
    w1: f64,
    w2: f64,
) -> Option<f64> {
    let mut sums: BTreeMap<&CourseId, (f64, f64)> = BTreeMap::new();
    for w in training {
        for e in &w.enrolments {
            let s = sums.entry(&e.course_id).or_insert((0.0, 0.0));
            s.1 += 1.0;
            match e.state {
                OutcomeState::Dropped => s.0 += w1,
                OutcomeState::Failed => s.0 += w2,
                OutcomeState::Passed => {}
            }
        }
    }
    let mut seen = Vec::new();
    let mut total = 0.0;
    for e in &window.enrolments {
        if seen.contains(&&e.course_id) {
            continue;
        }
        seen.push(&e.course_id);
        if let Some((weight, n)) = sums.get(&e.course_id) {
            total += weight / n;
        }
    }
    let known = seen.iter().filter(|c| sums.contains_key(**c)).count();
    (known > 0).then(|| total / known as f64)
}

/// Entropy in bits of the labels passed, failed, dropped (one per attempt)
/// and not-attempted (one per curriculum course due by the cutoff and
/// absent from the window).
pub fn oracle_entropy(case: &WindowCase) -> Option<f64> {
    let w = &case.window;
    if w.enrolments.is_empty() {
        return None;
    }
    let mut labels: Vec<&str> = w.enrolments.iter().map(|e| e.state.as_str()).collect();
    for c in &case.courses {
        if c.nominal_term <= w.cutoff && !w.enrolments.iter().any(|e| e.course_id == c.course_id) {
            labels.push("not_attempted");
        }
    }
    let n = labels.len() as f64;
    let mut distinct = labels.clone();
    distinct.sort();
    distinct.dedup();
    let h: f64 = distinct
        .iter()
        .map(|d| {
            let p = labels.iter().filter(|l| *l == d).count() as f64 / n;
            -p * p.ln() / 2f64.ln()
        })
        .sum();
    Some(h)
}

/// Least-squares slope of per-term attempt counts over the span from the
/// first to the last active term, in exact integer arithmetic.
pub fn oracle_load_trend(w: &WindowedTrajectory) -> Option<f64> {
    let first = w.enrolments.iter().map(|e| e.rel_term).min()?;
    let last = w.enrolments.iter().map(|e| e.rel_term).max()?;
    if last == first {
        return None;
    }
    let n = i64::from(last - first + 1);
    let (mut sx, mut sy, mut sxy, mut sxx) = (0i64, 0i64, 0i64, 0i64);
    for t in first..=last {
        let x = i64::from(t - first);
        let y = w.enrolments.iter().filter(|e| e.rel_term == t).count() as i64;
        sx += x;
        sy += y;
        sxy += x * y;
        sxx += x * x;
    }
    Some((n * sxy - sx * sy) as f64 / (n * sxx - sx * sx) as f64)
}

/// Longest idle run strictly between the first and last active terms.
pub fn oracle_max_gap(w: &WindowedTrajectory) -> Option<f64> {
    let first = w.enrolments.iter().map(|e| e.rel_term).min()?;
    let last = w.enrolments.iter().map(|e| e.rel_term).max()?;
    let (mut best, mut run) = (0, 0);
    for t in first..=last {
        if w.enrolments.iter().any(|e| e.rel_term == t) {
            run = 0;
        } else {
            run += 1;
            best = best.max(run);
        }
    }
    Some(f64::from(best))
}

/// Distinct passed courses over the curriculum's expected completions at
/// the cutoff.
pub fn oracle_velocity(case: &WindowCase) -> Option<f64> {
    let w = &case.window;
    if w.enrolments.is_empty() {
        return None;
    }
    let mut passed: Vec<&CourseId> = w
        .enrolments
        .iter()
        .filter(|e| e.state == OutcomeState::Passed)
        .map(|e| &e.course_id)
        .collect();
    passed.sort();
    passed.dedup();
    let mut expected = 0;
    let mut best_key = None;
    for (&t, &c) in &case.curriculum.expected_courses_by_term {
        if t <= w.cutoff && best_key.is_none_or(|k| t > k) {
            best_key = Some(t);
            expected = c;
        }
    }
    (expected > 0).then(|| passed.len() as f64 / f64::from(expected))
}

/// Adjusted Rand index from an explicit walk over all item pairs.
pub fn oracle_ari(a: &[i32], b: &[i32]) -> f64 {
    let (mut ss, mut sd, mut ds, mut dd) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => ss += 1,
                (true, false) => sd += 1,
                (false, true) => ds += 1,
                (false, false) => dd += 1,
            }
        }
    }
    let den = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
    if den == 0 {
        1.0
    } else {
        (2 * (ss * dd - sd * ds)) as f64 / den as f64
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean silhouette over points whose label is not -1. Singleton clusters
/// contribute 0.
pub fn oracle_silhouette(rows: &[Vec<f64>], labels: &[i32]) -> f64 {
    let clusters: BTreeSet<i32> = labels.iter().copied().filter(|&l| l != -1).collect();
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..rows.len() {
        if labels[i] == -1 {
            continue;
        }
        count += 1;
        let mean_to = |c: i32, skip_self: bool| {
            let members: Vec<usize> = (0..rows.len())
                .filter(|&j| labels[j] == c && !(skip_self && j == i))
                .collect();
            (
                members
                    .iter()
                    .map(|&j| euclid(&rows[i], &rows[j]))
                    .sum::<f64>()
                    / members.len() as f64,
                members.len(),
            )
        };
        let (a, own) = mean_to(labels[i], true);
        if own == 0 {
            continue;
        }
        let b = clusters
            .iter()
            .filter(|&&c| c != labels[i])
            .map(|&c| mean_to(c, false).0)
            .fold(f64::INFINITY, f64::min);
        if a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / count as f64
}

/// Mann-Whitney U of `x` against `y` by pair counting (ties count one half).
pub fn oracle_u(x: &[f64], y: &[f64]) -> f64 {
    let mut u = 0.0;
    for a in x {
        for b in y {
            if a > b {
                u += 1.0;
            } else if a == b {
                u += 0.5;
            }
        }
    }
    u
}

/// Two-sided exact p-value by enumerating every split of the pooled sample
/// into groups of the original sizes.
pub fn oracle_mwu_exact_p(x: &[f64], y: &[f64]) -> f64 {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let n = pooled.len();
    let u_obs = oracle_u(x, y);
    let (mut le, mut ge, mut total) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != x.len() {
            continue;
        }
        let (gx, gy): (Vec<f64>, Vec<f64>) = {
            let mut gx = Vec::new();
            let mut gy = Vec::new();
            for (k, &v) in pooled.iter().enumerate() {
                if mask & (1 << k) != 0 {
                    gx.push(v);
                } else {
                    gy.push(v);
                }
            }
            (gx, gy)
        };
        let u = oracle_u(&gx, &gy);
        total += 1;
        le += u64::from(u <= u_obs);
        ge += u64::from(u >= u_obs);
    }
    (2.0 * le.min(ge) as f64 / total as f64).min(1.0)
}

/// A random 2-D point set with labels in `-1..k`, every cluster non-empty
/// and at least two clusters.
pub fn random_labelled_points(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<i32>) {
    let k = rng.random_range(2..=4);
    let n = rng.random_range(k as usize + 1..=24);
    let mut labels: Vec<i32> = (0..n)
        .map(|i| {
            if i < k as usize {
                i as i32
            } else {
                rng.random_range(-1..k)
            }
        })
        .collect();
    labels.rotate_left(rng.random_range(0..n));
    let rows = labels
        .iter()
        .map(|&l| {
            let c = f64::from(l.max(0)) * 2.0;
            vec![c + rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)]
        })
        .collect();
    (rows, labels)
}

/// Two samples with sizes drawn from `sizes`, on a coarse grid so ties are common.
pub fn random_samples(
    rng: &mut ChaCha8Rng,
    sizes: std::ops::RangeInclusive<usize>,
) -> (Vec<f64>, Vec<f64>) {
    let n1 = rng.random_range(sizes.clone());
    let n2 = rng.random_range(sizes);
    let mut draw = |len: usize| {
        (0..len)
            .map(|_| f64::from(rng.random_range(0..6)) * 0.5)
            .collect::<Vec<_>>()
    };
    let x = draw(n1);
    (x, draw(n2))
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: i32) -> Vec<i32> {
    (0..n).map(|_| rng.random_range(-1..k)).collect()
}

pub const FORMULAS: [&str; 8] = [
    "ifc",
    "entropy",
    "ols_slope",
    "max_gap",
    "velocity",
    "ari",
    "silhouette",
    "mann_whitney_u",
];

/// One random instance per formula, derived from `seed`. Each entry is
/// `(formula, agrees, detail)`.
pub fn compare_formulas(seed: u64) -> Vec<(&'static str, bool, String)> {
    use capire_core::archetype::{silhouette, Points};
    use capire_core::features::{extract_n4, ifc_mean, CourseFrictionTable};
    use capire_core::validation::{adjusted_rand_index, mann_whitney_u, MwuMethod};

    let mut r = rng(seed);
    let mut out = Vec::new();

    let w1 = r.random_range(0.0..2.0);
    let w2 = r.random_range(0.0..2.0);
    let training: Vec<WindowCase> = (0..4)
        .map(|i| random_window(&mut r, &format!("t{i}")))
        .collect();
    let target = random_window(&mut r, "target");
    let refs: Vec<&WindowedTrajectory> = training.iter().map(|c| &c.window).collect();
    let table = CourseFrictionTable::fit(refs.iter().copied(), w1, w2, 0.5).expect("valid counts");
    let (got, want) = (
        ifc_mean(&target.window, &table),
        oracle_ifc_mean(&refs, &target.window, w1, w2),
    );
    out.push(("ifc", close_opt(got, want), format!("{got:?} vs {want:?}")));

    let case = random_window(&mut r, "s");
    let course_refs: Vec<&Course> = case.courses.iter().collect();
    let n4 = extract_n4(&case.window, Some(&case.curriculum), &course_refs);
    for (name, got, want) in [
        ("entropy", n4[5], oracle_entropy(&case)),
        ("ols_slope", n4[2], oracle_load_trend(&case.window)),
        ("max_gap", n4[1], oracle_max_gap(&case.window)),
        ("velocity", n4[3], oracle_velocity(&case)),
    ] {
        out.push((name, close_opt(got, want), format!("{got:?} vs {want:?}")));
    }

    let n = r.random_range(2..=30);
    let k = r.random_range(1..=5);
    let (a, b) = (random_labels(&mut r, n, k), random_labels(&mut r, n, k));
    let (got, want) = (
        adjusted_rand_index(&a, &b).expect("equal lengths"),
        oracle_ari(&a, &b),
    );
    out.push(("ari", close(got, want), format!("{got} vs {want}")));

    let (rows, labels) = random_labelled_points(&mut r);
    let points = Points::from_rows(&rows).expect("rectangular");
    let (got, want) = (
        silhouette(&points, &labels).expect("two clusters"),
        oracle_silhouette(&rows, &labels),
    );
    out.push(("silhouette", close(got, want), format!("{got} vs {want}")));

    let exact = r.random_bool(0.5);
    let (x, y) = random_samples(&mut r, if exact { 1..=7 } else { 10..=25 });
    let m = mann_whitney_u(&x, &y).expect("non-empty");
    let u_ok = close(m.u, oracle_u(&x, &y));
    let (ok, detail) = if m.method == MwuMethod::Exact {
        let p = oracle_mwu_exact_p(&x, &y);
        (
            u_ok && close(m.p_value, p),
            format!("U {} p {} vs p {p}", m.u, m.p_value),
        )
    } else {
        (u_ok, format!("U {} vs {}", m.u, oracle_u(&x, &y)))
    };
    out.push(("mann_whitney_u", ok, detail));
    out
}
