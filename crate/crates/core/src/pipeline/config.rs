use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::archetype::{ClusteringParams, EmbeddingParams};
use crate::classifier::{ForestConfig, SplitConfig, TuningGrid};
use crate::domain::ValidationRules;
use crate::error::{CapireError, Result};
use crate::features::{FeatureConfig, FeatureDictionary};
use crate::matrix::{config_hash, ImputationPolicies};
use crate::synth::GeneratorConfig;
use crate::validation::DEFAULT_NOISE_FEATURES;
use crate::vot::VotConfig;

/// Named generator presets usable from a config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    PlantedFive,
    Stationary,
    Drifting,
    MicroNoise,
    FacetLike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SynthSource {
    Preset {
        preset: Preset,
        n_students: usize,
        seed: u64,
        /// First drifting cohort for `drifting`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        drift_from: Option<i32>,
        /// Share of each micro template for `micro_noise`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        micro_share: Option<f64>,
    },
    Custom(Box<GeneratorConfig>),
}

impl SynthSource {
    pub fn generator(&self) -> Result<GeneratorConfig> {
        let cfg = match self {
            SynthSource::Custom(c) => (**c).clone(),
            SynthSource::Preset {
                preset,
                n_students,
                seed,
                drift_from,
                micro_share,
            } => match preset {
                Preset::PlantedFive => GeneratorConfig::planted_five(*n_students, *seed),
                Preset::Stationary => GeneratorConfig::stationary(*n_students, *seed),
                Preset::Drifting => {
                    GeneratorConfig::drifting(*n_students, *seed, drift_from.unwrap_or(2011))
                }
                Preset::MicroNoise => {
                    GeneratorConfig::micro_noise(*n_students, *seed, micro_share.unwrap_or(0.02))
                }
                Preset::FacetLike => GeneratorConfig::facet_like(*n_students, *seed),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationParams {
    pub bootstrap_resamples: usize,
    pub permutations: usize,
    pub sensitivity: bool,
    /// First cohort of the second period; the median cohort when unset.
    pub temporal_split_year: Option<i32>,
    pub noise_features: Vec<String>,
}

impl Default for ValidationParams {
    fn default() -> Self {
        Self {
            bootstrap_resamples: 100,
            permutations: 100,
            sensitivity: true,
            temporal_split_year: None,
            noise_features: DEFAULT_NOISE_FEATURES
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierParams {
    pub split: SplitConfig,
    pub forest: ForestConfig,
    pub tuning: TuningGrid,
    pub shuffled_control: bool,
    pub split_discrepancy: bool,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            split: SplitConfig::default(),
            forest: ForestConfig::default(),
            tuning: TuningGrid::default(),
            shuffled_control: true,
            split_discrepancy: true,
        }
    }
}

/// The single configuration file driving every stage.
///
/// Relative paths resolve against the working directory. `output_dir` is
/// not part of the configuration hash, so the same analysis written to two
/// directories carries the same manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct PipelineConfig {
    /// Directory holding the input CSV files; `<output_dir>/inputs` when unset.
    pub inputs: Option<PathBuf>,
    /// Generator used by the `synth` stage.
    pub synth: Option<SynthSource>,
    pub vot: VotConfig,
    /// Feature dictionary file; the built-in dictionary when unset.
    pub dictionary: Option<PathBuf>,
    pub features: FeatureConfig,
    pub imputation: ImputationPolicies,
    pub validation_rules: ValidationRules,
    pub embedding: EmbeddingParams,
    pub clustering: ClusteringParams,
    pub validation: ValidationParams,
    pub classifier: ClassifierParams,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CapireError::config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CapireError::config(format!("config {}: {e}", path.display())))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Structural checks that need no input files.
    pub fn check(&self) -> Result<()> {
        self.vot.validate()?;
        self.features.interactions.validate()?;
        self.imputation.validate()?;
        self.classifier.split.validate()?;
        self.classifier.forest.validate()?;
        if self.validation.permutations == 0 {
            return Err(CapireError::config(
                "validation.permutations must be at least 1",
            ));
        }
        if let Some(s) = &self.synth {
            s.generator()?;
        }
        if let Some(d) = &self.dictionary {
            if !d.exists() {
                return Err(CapireError::config(format!(
                    "dictionary file {} does not exist",
                    d.display()
                )));
            }
        }
        Ok(())
    }

    /// The configuration as hashed and recorded in the manifest.
    pub fn snapshot(&self) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(self)?;
        if let Some(map) = v.as_object_mut() {
            map.remove("output_dir");
        }
        Ok(v)
    }

    pub fn hash(&self) -> Result<String> {
        config_hash(&self.snapshot()?)
    }

    pub fn dictionary(&self) -> Result<FeatureDictionary> {
        match &self.dictionary {
            Some(p) => FeatureDictionary::load(p),
            None => Ok(FeatureDictionary::builtin()),
        }
    }

    pub fn input_dir(&self, out: &Path) -> PathBuf {
        self.inputs.clone().unwrap_or_else(|| out.join("inputs"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default_config() {
        let cfg: PipelineConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        cfg.check().unwrap();
    }

    #[test]
    fn round_trip_keeps_the_hash_and_ignores_output_dir() {
        let mut cfg = PipelineConfig {
            synth: Some(SynthSource::Preset {
                preset: Preset::PlantedFive,
                n_students: 300,
                seed: 4,
                drift_from: None,
                micro_share: None,
            }),
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let h = cfg.hash().unwrap();
        cfg.output_dir = Some("elsewhere".into());
        assert_eq!(cfg.hash().unwrap(), h);
        cfg.vot.cutoff = 4;
        assert_ne!(cfg.hash().unwrap(), h);
    }

    #[test]
    fn unknown_fields_and_bad_values_are_config_errors() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sede": 1}"#).is_err());
        let cfg = PipelineConfig {
            vot: VotConfig::terms(12, 12, 1),
            ..Default::default()
        };
        assert!(matches!(cfg.check(), Err(CapireError::Config(_))));
    }

    #[test]
    fn custom_generator_parses() {
        let g = GeneratorConfig::stationary(100, 1);
        let text = format!(r#"{{"synth": {}}}"#, serde_json::to_string(&g).unwrap());
        let cfg: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg.synth.unwrap().generator().unwrap(), g);
    }
}
