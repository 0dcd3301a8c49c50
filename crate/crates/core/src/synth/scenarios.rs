use super::{
    ArchetypeTemplate, AttritionDrift, GeneratorConfig, LoadShape, Normal, OutcomePropensity,
};

/// Compact template description used by the preset scenarios.
struct Spec {
    id: &'static str,
    share: f64,
    age: (f64, f64),
    p_female: f64,
    p_work: f64,
    gpa: f64,
    deprivation: f64,
    parental_education: f64,
    siblings: f64,
    school: [f64; 3],
    distance: f64,
    load: (f64, f64),
    gap: f64,
    outcomes: (f64, f64, f64),
    sensitivity: f64,
    grade: f64,
    retake: f64,
    attrition: f64,
}

impl Spec {
    fn build(&self) -> ArchetypeTemplate {
        ArchetypeTemplate {
            template_id: self.id.into(),
            share: self.share,
            age: Normal::new(self.age.0, self.age.1),
            p_female: self.p_female,
            p_work: self.p_work,
            hs_gpa: Normal::new(self.gpa, 0.4),
            deprivation: Normal::new(self.deprivation, 0.04),
            parental_education: Normal::new(self.parental_education, 0.4),
            p_siblings_university: self.siblings,
            school_weights: self.school,
            distance_km: Normal::new(self.distance, self.distance * 0.15),
            load: LoadShape {
                base: self.load.0,
                trend: self.load.1,
                sd: 0.4,
            },
            p_gap: self.gap,
            outcomes: OutcomePropensity {
                pass: self.outcomes.0,
                fail: self.outcomes.1,
                drop: self.outcomes.2,
            },
            friction_sensitivity: self.sensitivity,
            grade_mean: self.grade,
            p_retake: self.retake,
            attrition: self.attrition,
            attrition_drift: None,
        }
    }
}

fn base(n_students: usize, seed: u64, templates: Vec<ArchetypeTemplate>) -> GeneratorConfig {
    GeneratorConfig {
        n_students,
        n_courses: 40,
        n_filter_courses: 3,
        first_cohort: 2004,
        n_cohorts: 16,
        window_terms: 3,
        horizon_terms: 12,
        grace_terms: 1,
        templates,
        missing_rate: 0.02,
        macro_volatility: 1.0,
        seed,
    }
}

/// Fixes every binary trait of a template at its most likely value so the
/// template forms a single population without categorical sub-groups.
fn homogeneous(mut t: ArchetypeTemplate) -> ArchetypeTemplate {
    t.p_female = t.p_female.round();
    t.p_work = t.p_work.round();
    t.p_siblings_university = t.p_siblings_university.round();
    t.parental_education = Normal::new(t.parental_education.mean.round(), 0.0);
    t.load.sd = 0.0;
    let top = (0..3)
        .max_by(|&a, &b| t.school_weights[a].total_cmp(&t.school_weights[b]))
        .unwrap_or(0);
    t.school_weights = [0.0; 3];
    t.school_weights[top] = 1.0;
    t
}

fn five_specs(share: f64) -> [Spec; 5] {
    [
        Spec {
            id: "all_libre",
            share,
            age: (22.0, 1.5),
            p_female: 0.3,
            p_work: 0.6,
            gpa: 6.0,
            deprivation: 0.8,
            parental_education: 0.5,
            siblings: 0.1,
            school: [1.0, 0.0, 0.05],
            distance: 35.0,
            load: (4.0, 0.0),
            gap: 0.0,
            outcomes: (0.0, 0.0, 1.0),
            sensitivity: 0.0,
            grade: 6.0,
            retake: 1.0,
            attrition: 0.9,
        },
        Spec {
            id: "high_achiever",
            share,
            age: (18.0, 0.5),
            p_female: 0.4,
            p_work: 0.02,
            gpa: 9.0,
            deprivation: 0.15,
            parental_education: 3.5,
            siblings: 0.8,
            school: [0.05, 1.0, 0.05],
            distance: 5.0,
            load: (5.0, 0.3),
            gap: 0.0,
            outcomes: (1.0, 0.0, 0.0),
            sensitivity: 0.3,
            grade: 8.5,
            retake: 0.0,
            attrition: 0.1,
        },
        Spec {
            id: "high_friction",
            share,
            age: (18.5, 0.7),
            p_female: 0.2,
            p_work: 0.1,
            gpa: 6.8,
            deprivation: 0.45,
            parental_education: 2.0,
            siblings: 0.4,
            school: [0.3, 0.1, 1.0],
            distance: 15.0,
            load: (5.0, 0.0),
            gap: 0.0,
            outcomes: (0.3, 0.6, 0.1),
            sensitivity: 1.2,
            grade: 5.5,
            retake: 0.9,
            attrition: 0.7,
        },
        Spec {
            id: "intermittent_worker",
            share,
            age: (27.0, 2.0),
            p_female: 0.3,
            p_work: 0.95,
            gpa: 7.0,
            deprivation: 0.6,
            parental_education: 1.0,
            siblings: 0.2,
            school: [1.0, 0.1, 0.3],
            distance: 25.0,
            load: (2.0, 0.0),
            gap: 1.0,
            outcomes: (1.0, 0.0, 0.0),
            sensitivity: 0.5,
            grade: 7.0,
            retake: 1.0,
            attrition: 0.6,
        },
        Spec {
            id: "decelerating",
            share,
            age: (19.0, 0.6),
            p_female: 0.15,
            p_work: 0.15,
            gpa: 7.5,
            deprivation: 0.3,
            parental_education: 1.8,
            siblings: 0.5,
            school: [0.5, 0.5, 0.0],
            distance: 10.0,
            load: (7.0, -2.5),
            gap: 0.0,
            outcomes: (0.55, 0.2, 0.25),
            sensitivity: 0.8,
            grade: 6.5,
            retake: 0.0,
            attrition: 0.75,
        },
    ]
}

impl GeneratorConfig {
    /// Five well-separated, internally homogeneous templates at 18% each plus
    /// 10% diffuse noise, in a constant macro environment.
    pub fn planted_five(n_students: usize, seed: u64) -> Self {
        let templates = five_specs(0.18)
            .iter()
            .map(|s| homogeneous(s.build()))
            .collect();
        GeneratorConfig {
            macro_volatility: 0.0,
            ..base(n_students, seed, templates)
        }
    }

    /// Five templates, no noise, attrition close to 0 or 1 and constant over cohorts.
    pub fn stationary(n_students: usize, seed: u64) -> Self {
        let attrition = [0.99, 0.01, 0.99, 0.01, 0.99];
        let templates = five_specs(0.2)
            .iter()
            .zip(attrition)
            .map(|(s, a)| {
                homogeneous(ArchetypeTemplate {
                    attrition: a,
                    ..s.build()
                })
            })
            .collect();
        GeneratorConfig {
            macro_volatility: 0.0,
            ..base(n_students, seed, templates)
        }
    }

    /// [`GeneratorConfig::stationary`] with the `high_achiever` template's
    /// attrition jumping from 0.01 to 0.6 for cohorts from `from_year`.
    pub fn drifting(n_students: usize, seed: u64, from_year: i32) -> Self {
        let mut cfg = Self::stationary(n_students, seed);
        for t in &mut cfg.templates {
            if t.template_id == "high_achiever" {
                t.attrition_drift = Some(AttritionDrift {
                    from_year,
                    attrition: 0.6,
                });
            }
        }
        cfg
    }

    /// Four large templates plus two small, tightly concentrated templates
    /// below the archetype size threshold; no diffuse noise.
    pub fn micro_noise(n_students: usize, seed: u64, micro_share: f64) -> Self {
        let big = (1.0 - 2.0 * micro_share) / 4.0;
        let mut templates: Vec<ArchetypeTemplate> =
            five_specs(big).iter().take(4).map(Spec::build).collect();
        let micro = |id: &str, age: f64, pass: f64, drop: f64, load: f64| {
            let mut t = Spec {
                id: "micro",
                share: micro_share,
                age: (age, 0.2),
                p_female: 0.0,
                p_work: 0.0,
                gpa: 7.0,
                deprivation: 0.5,
                parental_education: 2.0,
                siblings: 0.0,
                school: [0.0, 0.0, 1.0],
                distance: 12.0,
                load: (load, 0.0),
                gap: 0.0,
                outcomes: (pass, 1.0 - pass - drop, drop),
                sensitivity: 0.0,
                grade: 7.0,
                retake: 1.0,
                attrition: 0.5,
            }
            .build();
            t.template_id = id.into();
            t.hs_gpa.sd = 0.1;
            t.deprivation.sd = 0.01;
            t.parental_education.sd = 0.0;
            t.distance_km.sd = 0.5;
            t.load.sd = 0.0;
            t
        };
        templates.push(micro("micro_a", 20.0, 0.9, 0.05, 3.0));
        templates.push(micro("micro_b", 20.6, 0.1, 0.6, 6.0));
        base(n_students, seed, templates)
    }

    /// Mixture shaped after a large engineering programme: about 57%
    /// attrition, mean entry age near 18.7, mostly male, few working students.
    pub fn facet_like(n_students: usize, seed: u64) -> Self {
        let s =
            |id, share, age, work, dep, load: (f64, f64), gap, outcomes, grade, attrition| Spec {
                id,
                share,
                age,
                p_female: 0.18,
                p_work: work,
                gpa: 5.5 + 3.0 * (outcomes as (f64, f64, f64)).0,
                deprivation: dep,
                parental_education: 3.2 - 2.5 * dep,
                siblings: 0.4,
                school: [0.6, 0.25, 0.15],
                distance: 8.0 + 20.0 * dep,
                load,
                gap,
                outcomes,
                sensitivity: 0.8,
                grade,
                retake: 0.6,
                attrition,
            };
        let specs = [
            s(
                "all_libre",
                0.1,
                (18.4, 0.6),
                0.03,
                0.7,
                (4.0, 0.0),
                0.0,
                (0.0, 0.0, 1.0),
                6.0,
                0.95,
            ),
            s(
                "steady_progress",
                0.15,
                (18.0, 0.3),
                0.01,
                0.2,
                (5.0, 0.0),
                0.0,
                (0.9, 0.07, 0.03),
                8.0,
                0.12,
            ),
            s(
                "filter_blocked",
                0.11,
                (18.1, 0.4),
                0.02,
                0.45,
                (5.0, 0.0),
                0.0,
                (0.35, 0.5, 0.15),
                5.5,
                0.75,
            ),
            s(
                "early_fade",
                0.1,
                (18.3, 0.5),
                0.03,
                0.5,
                (6.0, -2.0),
                0.0,
                (0.5, 0.2, 0.3),
                6.5,
                0.8,
            ),
            s(
                "part_time",
                0.06,
                (21.0, 1.5),
                0.3,
                0.6,
                (2.0, 0.0),
                0.4,
                (0.6, 0.15, 0.25),
                7.0,
                0.65,
            ),
            s(
                "mixed_drop",
                0.1,
                (18.2, 0.4),
                0.02,
                0.55,
                (4.0, 0.0),
                0.0,
                (0.4, 0.2, 0.4),
                6.0,
                0.7,
            ),
            s(
                "slow_steady",
                0.13,
                (18.0, 0.3),
                0.02,
                0.35,
                (3.0, 0.0),
                0.0,
                (0.75, 0.2, 0.05),
                7.0,
                0.35,
            ),
        ];
        base(n_students, seed, specs.iter().map(Spec::build).collect())
    }
}
