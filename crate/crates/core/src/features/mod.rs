//! The N1 to N4 feature dictionary, scalar formulas and per-student extraction.

mod dictionary;
mod extract;
pub mod formulas;
mod friction;

use serde::{Deserialize, Serialize};

pub use dictionary::{
    roster_index, roster_level, Aggregation, DictionaryEntry, FeatureDictionary, Level, NamedBound,
    TimeBound, GRADE_FEATURES, ROSTER,
};
pub use extract::{
    extract_features, extract_n1, extract_n2, extract_n3, extract_n4, generate_interactions,
    AreaIndex, Extraction, FeatureVector, InteractionPair, InteractionSpec, N1_COUNT, N2_COUNT,
    N3_COUNT, N4_BASE_COUNT,
};
pub use friction::{ifc_mean, CourseFriction, CourseFrictionTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub w1: f64,
    pub w2: f64,
    pub filter_threshold: f64,
    /// Students with `cohort_year` below this value form the population on
    /// which the friction table and imputation statistics are fitted. All
    /// students when unset.
    pub training_cohorts_before: Option<i32>,
    pub interactions: InteractionSpec,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            w1: formulas::DEFAULT_W1,
            w2: formulas::DEFAULT_W2,
            filter_threshold: 0.5,
            training_cohorts_before: None,
            interactions: InteractionSpec::default(),
        }
    }
}

impl FeatureConfig {
    pub fn is_training(&self, cohort_year: i32) -> bool {
        self.training_cohorts_before.is_none_or(|y| cohort_year < y)
    }
}
