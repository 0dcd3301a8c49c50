use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use capire_core::pipeline::{self, PipelineConfig, RunOptions, Stage};
use capire_core::CapireError;
use clap::Parser;

/// Early-window student archetype pipeline.
#[derive(Debug, Parser)]
#[command(name = "capire", version)]
struct Cli {
    /// synth, validate, audit, extract, assemble, cluster, validate-clusters,
    /// train, evaluate, predict, probe or all
    stage: Stage,

    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,

    /// Output directory; defaults to `output_dir` from the config, then `./out`.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Overrides the master seed of the config.
    #[arg(long)]
    seed: Option<u64>,

    /// Overwrite existing artifacts.
    #[arg(long)]
    force: bool,

    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let opts = RunOptions {
        out: out.clone(),
        force: cli.force,
        timestamp: Some(chrono::Utc::now().to_rfc3339()),
    };
    let report = pipeline::run(cli.stage, &cfg, &opts).with_context(|| {
        format!(
            "stage `{}` failed (output directory {})",
            cli.stage,
            out.display()
        )
    })?;
    if !cli.quiet {
        for note in &report.notes {
            println!("{note}");
        }
        println!(
            "{}: wrote {} file(s) to {}",
            cli.stage,
            report.outputs.len(),
            out.display()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<CapireError>()
                .map_or(1, pipeline::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
