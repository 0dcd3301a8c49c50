//! Partition agreement, resampling stability, significance and noise analyses.

mod ari;
mod bootstrap;
mod discrepancy;
mod noise;
mod permutation;
mod recluster;
mod stats;
mod summary;
mod temporal;

pub use ari::adjusted_rand_index;
pub use bootstrap::{
    bootstrap_stability, hyperparameter_sensitivity, ResampleOutcome, SensitivityCell,
    SensitivityGrid, SensitivityReport, StabilityReport,
};
pub use discrepancy::{split_discrepancy, SplitDiscrepancy};
pub use noise::{
    noise_analysis, FeatureComparison, NoiseAnalysisReport, DEFAULT_NOISE_FEATURES, MIN_NOISE_GROUP,
};
pub use permutation::{empirical_p, permutation_silhouette_test, PermutationReport};
pub use recluster::{average_linkage_cuts, kmeans, recluster, ReclusterMethod, ReclusterSolution};
pub use stats::{levene_median, mann_whitney_u, Levene, MannWhitney, MwuMethod, MWU_EXACT_BELOW};
pub use summary::{percentile, Summary};
pub use temporal::{nearest_neighbours, temporal_stability, ArchetypeDrift, TemporalReport};
