//! Leakage-aware longitudinal trajectory analytics.
//!
//! The crate turns student/enrolment records into observation-window
//! restricted feature matrices, discovers trajectory archetypes with a
//! neighbour embedding plus density clustering, validates them with
//! resampling statistics and trains a tree-ensemble early-warning model.
//!
//! Stages, in pipeline order:
//!
//! * [`domain`]: relational entities, CSV ingestion, validation gates, outcome labels
//! * [`vot`]: observation-window slicing, eligibility audit, leakage probe
//! * [`features`]: the 44-feature N1-N4 dictionary and its extractors
//! * [`matrix`]: imputation, scaling, serialization, config hashing, manifests
//! * [`synth`]: planted-structure synthetic cohorts
//! * [`archetype`]: embedding, DBSCAN, archetype filtering, validity indices
//! * [`validation`]: ARI, bootstrap, permutation, temporal and noise analyses
//! * [`classifier`]: random forest, splits, evaluation, feature importance
//! * [`pipeline`]: configuration and file-based stage orchestration

pub mod archetype;
pub mod classifier;
pub mod domain;
pub mod error;
pub mod features;
pub mod matrix;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod validation;
pub mod vot;

pub use error::{CapireError, Result};

/// Version string stamped into every manifest.
pub const PIPELINE_VERSION: &str = env!("CARGO_PKG_VERSION");
