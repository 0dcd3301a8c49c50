//! File-based orchestration: every stage reads the artifacts of earlier
//! stages from the output directory and writes its own, updating
//! `manifest.json` with the SHA-256 of each file it produced.

pub mod artifacts;
mod config;
mod stages;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use config::{ClassifierParams, PipelineConfig, Preset, SynthSource, ValidationParams};
pub use stages::{EvaluationReport, IndicesReport, Skipped, TrainingRecord};

use crate::domain::MissingnessProfile;
use crate::error::{CapireError, Result};
use crate::matrix::{sha256_hex, write_output, RunManifest, Timestamps};
use crate::PIPELINE_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Synth,
    Validate,
    Extract,
    Assemble,
    Cluster,
    ValidateClusters,
    Train,
    Evaluate,
    Predict,
    Audit,
    Probe,
    All,
}

impl Stage {
    pub const EVERY: [Stage; 12] = [
        Stage::Synth,
        Stage::Validate,
        Stage::Extract,
        Stage::Assemble,
        Stage::Cluster,
        Stage::ValidateClusters,
        Stage::Train,
        Stage::Evaluate,
        Stage::Predict,
        Stage::Audit,
        Stage::Probe,
        Stage::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Validate => "validate",
            Stage::Extract => "extract",
            Stage::Assemble => "assemble",
            Stage::Cluster => "cluster",
            Stage::ValidateClusters => "validate-clusters",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Predict => "predict",
            Stage::Audit => "audit",
            Stage::Probe => "probe",
            Stage::All => "all",
        }
    }

    /// The stages `all` runs, in order. `synth` is included when the config
    /// has a generator section.
    pub fn chain(cfg: &PipelineConfig) -> Vec<Stage> {
        let mut v = Vec::new();
        if cfg.synth.is_some() {
            v.push(Stage::Synth);
        }
        v.extend([
            Stage::Validate,
            Stage::Audit,
            Stage::Extract,
            Stage::Assemble,
            Stage::Cluster,
            Stage::ValidateClusters,
            Stage::Train,
            Stage::Evaluate,
            Stage::Predict,
            Stage::Probe,
        ]);
        v
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = CapireError;

    fn from_str(s: &str) -> Result<Self> {
        Stage::EVERY
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| CapireError::Config(format!("unknown subcommand `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out: PathBuf,
    pub force: bool,
    /// Written to `timestamps.json`; never part of the manifest.
    pub timestamp: Option<String>,
}

/// What a stage did, for the command-line summary.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StageReport {
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
}

/// Process exit status for an error: 2 for configuration problems, 1 for
/// everything else (validation failures, leakage, missing artifacts, I/O).
pub fn exit_code(err: &CapireError) -> i32 {
    match err {
        CapireError::Config(_)
        | CapireError::NotImplemented(_)
        | CapireError::UndeclaredTimeBound(_)
        | CapireError::OutputExists(_) => 2,
        _ => 1,
    }
}

pub(crate) struct Context<'a> {
    pub cfg: &'a PipelineConfig,
    pub out: PathBuf,
    pub force: bool,
    timestamp: Option<String>,
    hash: String,
    written: BTreeMap<String, String>,
    pub report: StageReport,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a PipelineConfig, opts: &RunOptions) -> Result<Self> {
        Ok(Self {
            cfg,
            out: opts.out.clone(),
            force: opts.force,
            timestamp: opts.timestamp.clone(),
            hash: cfg.hash()?,
            written: BTreeMap::new(),
            report: StageReport::default(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Writes an artifact relative to the output directory.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_output(&self.path(name), bytes, self.force)?;
        self.recorded(name, bytes);
        Ok(())
    }

    /// Registers a file written by other means.
    pub fn recorded(&mut self, name: &str, bytes: &[u8]) {
        self.written.insert(name.to_string(), sha256_hex(bytes));
        self.report.outputs.push(name.to_string());
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        self.report.notes.push(msg.into());
    }

    /// The manifest of this output directory, or a fresh one. A manifest
    /// written under a different configuration is an error unless forced.
    pub fn manifest(&self) -> Result<RunManifest> {
        if self.path("manifest.json").exists() {
            let m = RunManifest::read(&self.out)?;
            if m.config_hash == self.hash {
                return Ok(m);
            }
            if !self.force {
                return Err(CapireError::Config(format!(
                    "{} holds artifacts of another configuration (hash {}); use a fresh --out or --force",
                    self.out.display(),
                    m.config_hash
                )));
            }
        }
        Ok(RunManifest {
            pipeline_version: PIPELINE_VERSION.to_string(),
            config_hash: self.hash.clone(),
            config: self.cfg.snapshot()?,
            feature_count: 0,
            indicator_count: 0,
            columns: Vec::new(),
            feature_missingness: MissingnessProfile::default(),
            input_missingness: MissingnessProfile::default(),
            included_cohorts: Vec::new(),
            sample_size: 0,
            training_size: 0,
            empty_window_students: 0,
            outputs: BTreeMap::new(),
        })
    }

    /// Stores the recorded output hashes (and any field updates) in the manifest.
    pub fn commit(&mut self, update: impl FnOnce(&mut RunManifest)) -> Result<()> {
        let mut m = self.manifest()?;
        update(&mut m);
        m.outputs.extend(std::mem::take(&mut self.written));
        m.write(&self.out, None, true)?;
        if let Some(ts) = &self.timestamp {
            let t = Timestamps {
                execution_timestamp: ts.clone(),
            };
            write_output(
                &self.path("timestamps.json"),
                &artifacts::json_bytes(&t)?,
                true,
            )?;
        }
        Ok(())
    }
}

/// Runs one stage (or the whole chain for [`Stage::All`]).
pub fn run(stage: Stage, cfg: &PipelineConfig, opts: &RunOptions) -> Result<StageReport> {
    cfg.check()?;
    std::fs::create_dir_all(&opts.out)?;
    if stage == Stage::All {
        let mut total = StageReport::default();
        for s in Stage::chain(cfg) {
            let r = run(s, cfg, opts)?;
            total.outputs.extend(r.outputs);
            total
                .notes
                .extend(r.notes.into_iter().map(|n| format!("{s}: {n}")));
        }
        return Ok(total);
    }
    let mut ctx = Context::new(cfg, opts)?;
    // Outputs written before a failure are still recorded.
    let result = match stage {
        Stage::Synth => stages::synth(&mut ctx),
        Stage::Validate => stages::validate(&mut ctx),
        Stage::Extract => stages::extract(&mut ctx),
        Stage::Assemble => stages::assemble(&mut ctx),
        Stage::Cluster => stages::cluster(&mut ctx),
        Stage::ValidateClusters => stages::validate_clusters(&mut ctx),
        Stage::Train => stages::train(&mut ctx),
        Stage::Evaluate => stages::evaluate(&mut ctx),
        Stage::Predict => stages::predict(&mut ctx),
        Stage::Audit => stages::audit(&mut ctx),
        Stage::Probe => stages::probe(&mut ctx),
        Stage::All => unreachable!("handled above"),
    };
    if !ctx.written.is_empty() {
        ctx.commit(|_| {})?;
    }
    result.map(|()| ctx.report)
}

/// Convenience for callers holding a path to the config file.
pub fn run_from_file(stage: Stage, config: &Path, opts: &RunOptions) -> Result<StageReport> {
    run(stage, &PipelineConfig::load(config)?, opts)
}
