use serde::{Deserialize, Serialize};

use super::{impute, FeatureMatrix, ImputationModel, ImputationPolicies};
use crate::error::Result;
use crate::features::{Extraction, FeatureDictionary, InteractionSpec};

/// The extracted matrix before and after imputation, with row metadata in
/// matrix row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assembly {
    pub raw: FeatureMatrix,
    pub imputed: FeatureMatrix,
    pub model: ImputationModel,
    pub regions: Vec<Option<String>>,
    pub training: Vec<bool>,
    pub window_empty: Vec<bool>,
    pub cohort_years: Vec<i32>,
}

pub fn assemble(
    extraction: &Extraction,
    admissible: &[String],
    policies: &ImputationPolicies,
    dictionary: &FeatureDictionary,
    interactions: &InteractionSpec,
) -> Result<Assembly> {
    let raw = FeatureMatrix::from_vectors(&extraction.vectors, admissible)?;
    let mut vectors: Vec<_> = extraction.vectors.iter().collect();
    vectors.sort_by(|a, b| a.student_id.cmp(&b.student_id));
    let regions: Vec<Option<String>> = vectors.iter().map(|v| v.region.clone()).collect();
    let training: Vec<bool> = vectors
        .iter()
        .map(|v| extraction.training.contains(&v.student_id))
        .collect();
    let (imputed, model) = impute(
        &raw,
        &regions,
        &training,
        policies,
        dictionary,
        interactions,
    )?;
    Ok(Assembly {
        raw,
        imputed,
        model,
        regions,
        training,
        window_empty: vectors.iter().map(|v| v.window_empty).collect(),
        cohort_years: vectors.iter().map(|v| v.cohort_year).collect(),
    })
}
