use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{
    AreaIndicators, Course, CourseId, Curriculum, Dataset, Enrolment, Graduation, OutcomeState,
    RawTable, RawTables, SchoolType, Student, StudentId, TableKind, TermInfo,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Type,
    Range,
    Referential,
    Temporal,
    Completeness,
}

impl RuleKind {
    pub const ALL: [RuleKind; 5] = [
        RuleKind::Type,
        RuleKind::Range,
        RuleKind::Referential,
        RuleKind::Temporal,
        RuleKind::Completeness,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub rule: RuleKind,
    pub table: String,
    /// 1-based data row (header excluded).
    pub row: Option<usize>,
    pub column: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMissingness {
    pub rows: usize,
    pub missing: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MissingnessProfile {
    /// `table.column` (or bare column name for matrices) -> missingness.
    pub columns: BTreeMap<String, ColumnMissingness>,
    /// Tables with zero rows; their fractions are defined as 0.
    pub empty_tables: Vec<String>,
}

impl MissingnessProfile {
    pub fn add_column(&mut self, name: String, cells: impl IntoIterator<Item = bool>) {
        let (mut rows, mut missing) = (0usize, 0usize);
        for is_missing in cells {
            rows += 1;
            missing += is_missing as usize;
        }
        let fraction = if rows == 0 {
            0.0
        } else {
            missing as f64 / rows as f64
        };
        self.columns.insert(
            name,
            ColumnMissingness {
                rows,
                missing,
                fraction,
            },
        );
    }

    pub fn fraction(&self, column: &str) -> Option<f64> {
        self.columns.get(column).map(|c| c.fraction)
    }
}

/// Missing fraction per `table.column`; an empty cell is missing.
pub fn profile_missingness(tables: &RawTables) -> MissingnessProfile {
    let mut profile = MissingnessProfile::default();
    for table in tables.tables() {
        if table.rows.is_empty() {
            profile.empty_tables.push(table.kind.name().to_string());
        }
        for (ci, col) in table.columns().iter().enumerate() {
            profile.add_column(
                format!("{}.{}", table.kind.name(), col),
                table.rows.iter().map(|r| r[ci].is_empty()),
            );
        }
    }
    profile
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub hard_violations: usize,
    pub violations: BTreeMap<RuleKind, Vec<Violation>>,
    /// Implausible-but-typed values; never block the pipeline.
    pub warnings: Vec<Violation>,
    pub row_counts: BTreeMap<String, usize>,
    pub missingness: MissingnessProfile,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn count(&self, rule: RuleKind) -> usize {
        self.violations.get(&rule).map_or(0, Vec::len)
    }
}

/// Plausibility bounds for the range rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationRules {
    pub grade_min: f64,
    pub grade_max: f64,
    pub age_min: f64,
    pub age_max: f64,
    /// Ages above this (but within `age_max`) raise a soft warning.
    pub age_warn_above: f64,
}

impl Default for ValidationRules {
    fn default() -> Self {
        ValidationRules {
            grade_min: 0.0,
            grade_max: 10.0,
            age_min: 14.0,
            age_max: 90.0,
            age_warn_above: 65.0,
        }
    }
}

struct Collector {
    hard: Vec<Violation>,
    soft: Vec<Violation>,
}

impl Collector {
    fn hard(
        &mut self,
        rule: RuleKind,
        table: TableKind,
        row: Option<usize>,
        column: Option<&str>,
        message: String,
    ) {
        self.hard.push(Violation {
            rule,
            table: table.name().to_string(),
            row,
            column: column.map(str::to_string),
            message,
        });
    }

    fn soft(
        &mut self,
        rule: RuleKind,
        table: TableKind,
        row: Option<usize>,
        column: Option<&str>,
        message: String,
    ) {
        self.soft.push(Violation {
            rule,
            table: table.name().to_string(),
            row,
            column: column.map(str::to_string),
            message,
        });
    }
}

/// Per-row typed cell access that records type and completeness violations.
struct RowParser<'a> {
    table: &'a RawTable,
    row: usize,
    cells: &'a [String],
    ok: bool,
}

impl<'a> RowParser<'a> {
    fn cell(&self, col: &str) -> &'a str {
        let i = self.table.column_index(col).expect("known column");
        &self.cells[i]
    }

    fn required(&mut self, out: &mut Collector, col: &str) -> Option<&'a str> {
        let v = self.cell(col);
        if v.is_empty() {
            out.hard(
                RuleKind::Completeness,
                self.table.kind,
                Some(self.row),
                Some(col),
                "essential field is missing".into(),
            );
            self.ok = false;
            None
        } else {
            Some(v)
        }
    }

    fn typed<T>(
        &mut self,
        out: &mut Collector,
        col: &str,
        v: &str,
        parse: impl Fn(&str) -> Option<T>,
        what: &str,
    ) -> Option<T> {
        let parsed = parse(v);
        if parsed.is_none() {
            out.hard(
                RuleKind::Type,
                self.table.kind,
                Some(self.row),
                Some(col),
                format!("`{v}` is not a valid {what}"),
            );
            self.ok = false;
        }
        parsed
    }

    fn req<T>(
        &mut self,
        out: &mut Collector,
        col: &str,
        parse: impl Fn(&str) -> Option<T>,
        what: &str,
    ) -> Option<T> {
        let v = self.required(out, col)?;
        self.typed(out, col, v, parse, what)
    }

    fn opt<T>(
        &mut self,
        out: &mut Collector,
        col: &str,
        parse: impl Fn(&str) -> Option<T>,
        what: &str,
    ) -> Option<T> {
        let v = self.cell(col);
        if v.is_empty() {
            return None;
        }
        self.typed(out, col, v, parse, what)
    }
}

fn p_f64(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn p_i32(s: &str) -> Option<i32> {
    s.parse().ok()
}

fn p_u32(s: &str) -> Option<u32> {
    s.parse().ok()
}

fn p_u8(s: &str) -> Option<u8> {
    s.parse().ok()
}

fn p_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "y" => Some(true),
        "false" | "0" | "no" | "n" => Some(false),
        _ => None,
    }
}

fn p_tristate(s: &str) -> Option<Option<bool>> {
    match s.to_ascii_lowercase().as_str() {
        "unknown" | "na" => Some(None),
        other => p_bool(other).map(Some),
    }
}

fn each_row<'a>(table: &'a RawTable) -> impl Iterator<Item = RowParser<'a>> {
    table
        .rows
        .iter()
        .enumerate()
        .map(move |(i, cells)| RowParser {
            table,
            row: i + 1,
            cells,
            ok: true,
        })
}

fn parse_tables(raw: &RawTables, out: &mut Collector) -> (Dataset, Vec<usize>, Vec<usize>) {
    let mut ds = Dataset::default();
    // Source row numbers kept so semantic violations point at input rows.
    let mut student_rows = Vec::new();
    let mut enrolment_rows = Vec::new();

    for mut r in each_row(&raw.students) {
        let student_id = r.required(out, "student_id").map(StudentId::from);
        let cohort_year = r.req(out, "cohort_year", p_i32, "integer year");
        let entry_term = r.req(out, "entry_term", p_u32, "non-negative term index");
        let age = r.req(out, "age_at_entry", p_f64, "number");
        let gender = Some(r.cell("gender"))
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        let works = r
            .opt(out, "works_at_entry", p_tristate, "yes/no/unknown")
            .flatten();
        let hs_gpa = r.opt(out, "hs_gpa", p_f64, "number");
        let postcode = Some(r.cell("postcode"))
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        let parental = r.opt(out, "parental_education", p_u8, "ordinal 0-4");
        let siblings = r.opt(out, "siblings_university", p_bool, "boolean");
        let school = r.opt(
            out,
            "secondary_school_type",
            SchoolType::parse,
            "school type",
        );
        let distance = r.opt(out, "distance_to_campus_km", p_f64, "number");
        if r.ok {
            ds.students.push(Student {
                student_id: student_id.unwrap(),
                cohort_year: cohort_year.unwrap(),
                entry_term: entry_term.unwrap(),
                age_at_entry: age.unwrap(),
                gender,
                works_at_entry: works,
                hs_gpa,
                postcode,
                parental_education: parental,
                siblings_university: siblings,
                secondary_school_type: school,
                distance_to_campus_km: distance,
            });
            student_rows.push(r.row);
        }
    }

    for mut r in each_row(&raw.enrolments) {
        let sid = r.required(out, "student_id").map(StudentId::from);
        let cid = r.required(out, "course_id").map(CourseId::from);
        let term = r.req(out, "term_index", p_u32, "non-negative term index");
        let state = r.req(out, "state", OutcomeState::parse, "outcome state");
        let grade = r.opt(out, "grade", p_f64, "number");
        if r.ok {
            ds.enrolments.push(Enrolment {
                student_id: sid.unwrap(),
                course_id: cid.unwrap(),
                term_index: term.unwrap(),
                state: state.unwrap(),
                grade,
            });
            enrolment_rows.push(r.row);
        }
    }

    for mut r in each_row(&raw.courses) {
        let cid = r.required(out, "course_id").map(CourseId::from);
        let cur = r.required(out, "curriculum_id").map(str::to_string);
        let nominal = r.req(out, "nominal_term", p_u32, "term position");
        let core = r.req(out, "is_core", p_bool, "boolean");
        if r.ok {
            ds.courses.push(Course {
                course_id: cid.unwrap(),
                curriculum_id: cur.unwrap(),
                nominal_term: nominal.unwrap(),
                is_core: core.unwrap(),
            });
        }
    }

    let mut curricula: BTreeMap<String, Curriculum> = BTreeMap::new();
    let mut seen_offsets = HashSet::new();
    for mut r in each_row(&raw.curricula) {
        let cur = r.required(out, "curriculum_id").map(str::to_string);
        let offset = r.req(out, "term_offset", p_u32, "term offset");
        let count = r.req(out, "expected_courses", p_u32, "course count");
        if r.ok {
            let (cur, offset) = (cur.unwrap(), offset.unwrap());
            if !seen_offsets.insert((cur.clone(), offset)) {
                out.hard(
                    RuleKind::Referential,
                    TableKind::Curricula,
                    Some(r.row),
                    Some("term_offset"),
                    format!("duplicate offset {offset} for curriculum {cur}"),
                );
                continue;
            }
            curricula
                .entry(cur.clone())
                .or_insert_with(|| Curriculum {
                    curriculum_id: cur,
                    expected_courses_by_term: BTreeMap::new(),
                })
                .expected_courses_by_term
                .insert(offset, count.unwrap());
        }
    }
    ds.curricula = curricula.into_values().collect();

    for mut r in each_row(&raw.calendar) {
        let term = r.req(out, "term_index", p_u32, "term index");
        let year = r.req(out, "calendar_year", p_i32, "integer year");
        let season = r.required(out, "season").map(str::to_string);
        let inflation = r.opt(out, "inflation_yoy", p_f64, "number");
        let strikes = r.opt(out, "strike_count_24m", p_f64, "number");
        if r.ok {
            ds.calendar.push(TermInfo {
                term_index: term.unwrap(),
                calendar_year: year.unwrap(),
                season: season.unwrap(),
                inflation_yoy: inflation,
                strike_count_24m: strikes,
            });
        }
    }

    for mut r in each_row(&raw.areas) {
        let postcode = r.required(out, "postcode").map(str::to_string);
        let year = r.req(out, "year", p_i32, "integer year");
        let dep = r.opt(out, "deprivation_index", p_f64, "number");
        let un = r.opt(out, "unemployment", p_f64, "number");
        let inf = r.opt(out, "informality", p_f64, "number");
        let pov = r.opt(out, "poverty", p_f64, "number");
        if r.ok {
            ds.areas.push(AreaIndicators {
                postcode: postcode.unwrap(),
                year: year.unwrap(),
                deprivation_index: dep,
                unemployment: un,
                informality: inf,
                poverty: pov,
            });
        }
    }

    for mut r in each_row(&raw.graduations) {
        let sid = r.required(out, "student_id").map(StudentId::from);
        let term = r.req(out, "term_index", p_u32, "term index");
        if r.ok {
            ds.graduations.push(Graduation {
                student_id: sid.unwrap(),
                term_index: term.unwrap(),
            });
        }
    }

    (ds, student_rows, enrolment_rows)
}

fn check_semantics(
    ds: &Dataset,
    student_rows: &[usize],
    enrolment_rows: &[usize],
    rules: &ValidationRules,
    out: &mut Collector,
) {
    let in_scale = |g: f64| g >= rules.grade_min && g <= rules.grade_max;
    let calendar: BTreeMap<u32, &TermInfo> =
        ds.calendar.iter().map(|t| (t.term_index, t)).collect();

    let mut students: HashMap<&StudentId, &Student> = HashMap::new();
    for (s, &row) in ds.students.iter().zip(student_rows) {
        let row = Some(row);
        if students.insert(&s.student_id, s).is_some() {
            out.hard(
                RuleKind::Referential,
                TableKind::Students,
                row,
                Some("student_id"),
                format!("duplicate student_id {}", s.student_id),
            );
        }
        if !(rules.age_min..=rules.age_max).contains(&s.age_at_entry) {
            out.hard(
                RuleKind::Range,
                TableKind::Students,
                row,
                Some("age_at_entry"),
                format!(
                    "age {} outside [{}, {}]",
                    s.age_at_entry, rules.age_min, rules.age_max
                ),
            );
        } else if s.age_at_entry > rules.age_warn_above {
            out.soft(
                RuleKind::Range,
                TableKind::Students,
                row,
                Some("age_at_entry"),
                format!("implausible age {}", s.age_at_entry),
            );
        }
        if let Some(g) = s.hs_gpa.filter(|&g| !in_scale(g)) {
            out.hard(
                RuleKind::Range,
                TableKind::Students,
                row,
                Some("hs_gpa"),
                format!("grade {g} outside scale"),
            );
        }
        if let Some(p) = s.parental_education.filter(|&p| p > 4) {
            out.hard(
                RuleKind::Range,
                TableKind::Students,
                row,
                Some("parental_education"),
                format!("ordinal {p} outside 0-4"),
            );
        }
        if let Some(d) = s.distance_to_campus_km.filter(|&d| d < 0.0) {
            out.hard(
                RuleKind::Range,
                TableKind::Students,
                row,
                Some("distance_to_campus_km"),
                format!("negative distance {d}"),
            );
        }
        match calendar.get(&s.entry_term) {
            None => out.hard(
                RuleKind::Referential,
                TableKind::Students,
                row,
                Some("entry_term"),
                format!("entry term {} missing from calendar", s.entry_term),
            ),
            Some(t) if t.calendar_year != s.cohort_year => out.soft(
                RuleKind::Temporal,
                TableKind::Students,
                row,
                Some("cohort_year"),
                format!(
                    "cohort year {} differs from entry-term year {}",
                    s.cohort_year, t.calendar_year
                ),
            ),
            _ => {}
        }
    }

    let courses: HashSet<&CourseId> = {
        let mut set = HashSet::new();
        for (i, c) in ds.courses.iter().enumerate() {
            if !set.insert(&c.course_id) {
                out.hard(
                    RuleKind::Referential,
                    TableKind::Courses,
                    Some(i + 1),
                    Some("course_id"),
                    format!("duplicate course_id {}", c.course_id),
                );
            }
        }
        set
    };
    let curricula: HashSet<&str> = ds
        .curricula
        .iter()
        .map(|c| c.curriculum_id.as_str())
        .collect();
    for (i, c) in ds.courses.iter().enumerate() {
        if !curricula.contains(c.curriculum_id.as_str()) {
            out.hard(
                RuleKind::Referential,
                TableKind::Courses,
                Some(i + 1),
                Some("curriculum_id"),
                format!("unknown curriculum {}", c.curriculum_id),
            );
        }
        if c.nominal_term < 1 {
            out.hard(
                RuleKind::Range,
                TableKind::Courses,
                Some(i + 1),
                Some("nominal_term"),
                "nominal_term must be >= 1".into(),
            );
        }
    }
    for c in &ds.curricula {
        let counts: Vec<u32> = c.expected_courses_by_term.values().copied().collect();
        if counts.windows(2).any(|w| w[1] < w[0]) {
            out.hard(
                RuleKind::Range,
                TableKind::Curricula,
                None,
                Some("expected_courses"),
                format!(
                    "cumulative counts decrease for curriculum {}",
                    c.curriculum_id
                ),
            );
        }
    }

    let mut seen = HashSet::new();
    let mut first_term: HashMap<&StudentId, u32> = HashMap::new();
    for (e, &row) in ds.enrolments.iter().zip(enrolment_rows) {
        let row = Some(row);
        if !seen.insert((&e.student_id, &e.course_id, e.term_index)) {
            out.hard(
                RuleKind::Referential,
                TableKind::Enrolments,
                row,
                None,
                format!(
                    "duplicate attempt ({}, {}, {})",
                    e.student_id, e.course_id, e.term_index
                ),
            );
        }
        match students.get(&e.student_id) {
            None => out.hard(
                RuleKind::Referential,
                TableKind::Enrolments,
                row,
                Some("student_id"),
                format!("unknown student {}", e.student_id),
            ),
            Some(s) => {
                if e.term_index < s.entry_term {
                    out.hard(
                        RuleKind::Temporal,
                        TableKind::Enrolments,
                        row,
                        Some("term_index"),
                        format!(
                            "term {} precedes entry term {} of {}",
                            e.term_index, s.entry_term, s.student_id
                        ),
                    );
                }
                let f = first_term.entry(&e.student_id).or_insert(e.term_index);
                *f = (*f).min(e.term_index);
            }
        }
        if !courses.contains(&e.course_id) {
            out.hard(
                RuleKind::Referential,
                TableKind::Enrolments,
                row,
                Some("course_id"),
                format!("unknown course {}", e.course_id),
            );
        }
        if !calendar.contains_key(&e.term_index) {
            out.hard(
                RuleKind::Referential,
                TableKind::Enrolments,
                row,
                Some("term_index"),
                format!("term {} missing from calendar", e.term_index),
            );
        }
        match (e.state, e.grade) {
            (OutcomeState::Dropped, Some(g)) => out.hard(
                RuleKind::Range,
                TableKind::Enrolments,
                row,
                Some("grade"),
                format!("dropped attempt carries grade {g}"),
            ),
            (_, Some(g)) if !in_scale(g) => out.hard(
                RuleKind::Range,
                TableKind::Enrolments,
                row,
                Some("grade"),
                format!("grade {g} outside scale"),
            ),
            _ => {}
        }
    }
    for s in &ds.students {
        if let Some(&f) = first_term.get(&s.student_id) {
            if f > s.entry_term {
                out.soft(
                    RuleKind::Temporal,
                    TableKind::Students,
                    None,
                    Some("entry_term"),
                    format!(
                        "{}: entry term {} precedes first enrolment {}",
                        s.student_id, s.entry_term, f
                    ),
                );
            }
        }
    }

    let mut terms = BTreeSet::new();
    for (i, t) in ds.calendar.iter().enumerate() {
        if !terms.insert(t.term_index) {
            out.hard(
                RuleKind::Referential,
                TableKind::Calendar,
                Some(i + 1),
                Some("term_index"),
                format!("duplicate term {}", t.term_index),
            );
        }
        if t.strike_count_24m.is_some_and(|c| c < 0.0) {
            out.hard(
                RuleKind::Range,
                TableKind::Calendar,
                Some(i + 1),
                Some("strike_count_24m"),
                "negative strike count".into(),
            );
        }
    }
    let years: Vec<(u32, i32)> = calendar
        .iter()
        .map(|(&k, t)| (k, t.calendar_year))
        .collect();
    for w in years.windows(2) {
        if w[1].1 < w[0].1 {
            out.hard(
                RuleKind::Temporal,
                TableKind::Calendar,
                None,
                Some("calendar_year"),
                format!(
                    "term {} (year {}) runs backwards from term {} (year {})",
                    w[1].0, w[1].1, w[0].0, w[0].1
                ),
            );
        }
    }

    let mut area_keys = HashSet::new();
    for (i, a) in ds.areas.iter().enumerate() {
        if !area_keys.insert((&a.postcode, a.year)) {
            out.hard(
                RuleKind::Referential,
                TableKind::Areas,
                Some(i + 1),
                None,
                format!("duplicate area row {} {}", a.postcode, a.year),
            );
        }
        for (col, v) in [
            ("deprivation_index", a.deprivation_index),
            ("unemployment", a.unemployment),
            ("informality", a.informality),
            ("poverty", a.poverty),
        ] {
            if let Some(v) = v.filter(|v| !(0.0..=1.0).contains(v)) {
                out.hard(
                    RuleKind::Range,
                    TableKind::Areas,
                    Some(i + 1),
                    Some(col),
                    format!("rate {v} outside [0, 1]"),
                );
            }
        }
    }

    for (i, g) in ds.graduations.iter().enumerate() {
        match students.get(&g.student_id) {
            None => out.hard(
                RuleKind::Referential,
                TableKind::Graduations,
                Some(i + 1),
                Some("student_id"),
                format!("unknown student {}", g.student_id),
            ),
            Some(s) if g.term_index < s.entry_term => out.hard(
                RuleKind::Temporal,
                TableKind::Graduations,
                Some(i + 1),
                Some("term_index"),
                format!(
                    "graduation term {} precedes entry term {}",
                    g.term_index, s.entry_term
                ),
            ),
            _ => {}
        }
    }
}

/// Parses raw cells into typed tables and checks every hard and soft rule.
/// The returned dataset holds only rows that parsed; it is only meaningful
/// for downstream use when the verdict is `Pass`.
pub fn validate_raw(raw: &RawTables, rules: &ValidationRules) -> (ValidationReport, Dataset) {
    let mut out = Collector {
        hard: Vec::new(),
        soft: Vec::new(),
    };
    let (ds, student_rows, enrolment_rows) = parse_tables(raw, &mut out);
    check_semantics(&ds, &student_rows, &enrolment_rows, rules, &mut out);

    let mut violations: BTreeMap<RuleKind, Vec<Violation>> =
        RuleKind::ALL.iter().map(|&k| (k, Vec::new())).collect();
    let hard_violations = out.hard.len();
    for v in out.hard {
        violations
            .get_mut(&v.rule)
            .expect("all kinds present")
            .push(v);
    }
    for list in violations.values_mut() {
        list.sort();
    }
    let mut warnings = out.soft;
    warnings.sort();

    let report = ValidationReport {
        verdict: if hard_violations == 0 {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        hard_violations,
        violations,
        warnings,
        row_counts: raw
            .tables()
            .iter()
            .map(|t| (t.kind.name().to_string(), t.rows.len()))
            .collect(),
        missingness: profile_missingness(raw),
    };
    (report, ds)
}

/// Validates already-typed tables (e.g. generator output) through the same
/// rule set as file input.
pub fn validate_dataset(dataset: &Dataset, rules: &ValidationRules) -> ValidationReport {
    validate_raw(&dataset.to_raw(), rules).0
}
