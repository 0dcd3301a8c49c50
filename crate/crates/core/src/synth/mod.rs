//! Synthetic cohorts with planted archetype structure and known ground truth.

mod generate;
mod scenarios;

use serde::{Deserialize, Serialize};

pub use generate::{generate, write_ground_truth, GroundTruth, SyntheticCohort};

use crate::error::{CapireError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normal {
    pub mean: f64,
    pub sd: f64,
}

impl Normal {
    pub const fn new(mean: f64, sd: f64) -> Self {
        Self { mean, sd }
    }
}

/// Per-attempt outcome propensities before course difficulty is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomePropensity {
    pub pass: f64,
    pub fail: f64,
    pub drop: f64,
}

/// Courses per active term: `base + trend * relative_term` plus Gaussian jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadShape {
    pub base: f64,
    pub trend: f64,
    pub sd: f64,
}

/// Attrition probability that applies to cohorts from `from_year` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttritionDrift {
    pub from_year: i32,
    pub attrition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchetypeTemplate {
    pub template_id: String,
    pub share: f64,
    pub age: Normal,
    pub p_female: f64,
    pub p_work: f64,
    pub hs_gpa: Normal,
    /// Target neighbourhood deprivation in [0, 1].
    pub deprivation: Normal,
    pub parental_education: Normal,
    pub p_siblings_university: f64,
    /// Weights for public, private, technical secondary schools.
    pub school_weights: [f64; 3],
    pub distance_km: Normal,
    pub load: LoadShape,
    /// Probability that a term after the first is skipped.
    pub p_gap: f64,
    pub outcomes: OutcomePropensity,
    /// Multiplier on course difficulty: how strongly hard courses bite.
    pub friction_sensitivity: f64,
    pub grade_mean: f64,
    pub p_retake: f64,
    pub attrition: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attrition_drift: Option<AttritionDrift>,
}

impl ArchetypeTemplate {
    pub fn attrition_for(&self, cohort_year: i32) -> f64 {
        match self.attrition_drift {
            Some(d) if cohort_year >= d.from_year => d.attrition,
            _ => self.attrition,
        }
    }

    fn validate(&self) -> Result<()> {
        let id = &self.template_id;
        let probs = [
            ("share", self.share),
            ("p_female", self.p_female),
            ("p_work", self.p_work),
            ("p_siblings_university", self.p_siblings_university),
            ("p_gap", self.p_gap),
            ("p_retake", self.p_retake),
            ("attrition", self.attrition),
            ("outcomes.pass", self.outcomes.pass),
            ("outcomes.fail", self.outcomes.fail),
            ("outcomes.drop", self.outcomes.drop),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(CapireError::config(format!(
                    "template {id}: {name} = {p} outside [0, 1]"
                )));
            }
        }
        if let Some(d) = self.attrition_drift {
            if !(0.0..=1.0).contains(&d.attrition) {
                return Err(CapireError::config(format!(
                    "template {id}: drift attrition outside [0, 1]"
                )));
            }
        }
        if self.outcomes.pass + self.outcomes.fail + self.outcomes.drop <= 0.0 {
            return Err(CapireError::config(format!(
                "template {id}: outcome propensities are all zero"
            )));
        }
        if self.school_weights.iter().any(|w| *w < 0.0)
            || self.school_weights.iter().sum::<f64>() <= 0.0
        {
            return Err(CapireError::config(format!(
                "template {id}: invalid school weights"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_students: usize,
    pub n_courses: usize,
    /// Courses with an added difficulty shift, placed in the first terms.
    pub n_filter_courses: usize,
    pub first_cohort: i32,
    pub n_cohorts: u32,
    /// Relative term at which planted trajectory behaviour gives way to the
    /// generic post-window process.
    pub window_terms: u32,
    pub horizon_terms: u32,
    pub grace_terms: u32,
    /// Template shares sum to at most 1; the remainder is diffuse noise,
    /// each noise student drawing a fresh random template.
    pub templates: Vec<ArchetypeTemplate>,
    /// Per-field probability that an optional student attribute is missing.
    pub missing_rate: f64,
    /// Scale of year-to-year inflation shocks and strike-count variation;
    /// 0 gives a constant macro environment.
    #[serde(default = "one")]
    pub macro_volatility: f64,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::planted_five(1500, 20240501)
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_students == 0 {
            return Err(CapireError::config("n_students must be at least 1"));
        }
        if self.n_courses < 4 || self.n_filter_courses > self.n_courses {
            return Err(CapireError::config(
                "need at least 4 courses and no more filter courses than courses",
            ));
        }
        if self.n_cohorts == 0 {
            return Err(CapireError::config("n_cohorts must be at least 1"));
        }
        if self.window_terms == 0
            || self.window_terms >= self.horizon_terms
            || self.horizon_terms < self.grace_terms + 3
        {
            return Err(CapireError::config(
                "window, horizon and grace terms are inconsistent",
            ));
        }
        if !(self.macro_volatility >= 0.0 && self.macro_volatility.is_finite()) {
            return Err(CapireError::config(
                "macro_volatility must be finite and non-negative",
            ));
        }
        if !(0.0..=1.0).contains(&self.missing_rate) {
            return Err(CapireError::config("missing_rate must lie in [0, 1]"));
        }
        let total: f64 = self.templates.iter().map(|t| t.share).sum();
        if total > 1.0 + 1e-9 {
            return Err(CapireError::config(format!(
                "template shares sum to {total} > 1"
            )));
        }
        let mut ids: Vec<&str> = self
            .templates
            .iter()
            .map(|t| t.template_id.as_str())
            .collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(CapireError::config("duplicate template id"));
        }
        self.templates
            .iter()
            .try_for_each(ArchetypeTemplate::validate)
    }

    pub fn noise_share(&self) -> f64 {
        (1.0 - self.templates.iter().map(|t| t.share).sum::<f64>()).max(0.0)
    }
}
