use std::path::Path;

use capire_core::matrix::{sha256_hex, RunManifest};
use capire_core::pipeline::{exit_code, run, PipelineConfig, RunOptions, Stage};
use capire_core::CapireError;

const QUICK: &str = r#"{
    "synth": { "preset": "planted_five", "n_students": 500, "seed": 3 },
    "seed": 5,
    "validation": { "bootstrap_resamples": 4, "permutations": 20, "sensitivity": false },
    "classifier": {
        "forest": { "n_trees": 30 },
        "tuning": { "n_trees": [30], "max_depth": [null], "min_leaf": [1] }
    }
}"#;

fn quick() -> PipelineConfig {
    serde_json::from_str(QUICK).unwrap()
}

fn opts(out: &Path, force: bool) -> RunOptions {
    RunOptions {
        out: out.to_path_buf(),
        force,
        timestamp: Some("2024-01-01T00:00:00Z".into()),
    }
}

fn files(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        out.push(
            entry
                .strip_prefix(dir)
                .unwrap()
                .to_string_lossy()
                .into_owned(),
        );
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn full_run_is_byte_reproducible_and_manifest_hashes_match() {
    let cfg = quick();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let report = run(Stage::All, &cfg, &opts(a.path(), false)).unwrap();
    assert!(report.notes.iter().any(|n| n.starts_with("probe:")));
    run(
        Stage::All,
        &cfg,
        &RunOptions {
            timestamp: Some("other".into()),
            ..opts(b.path(), false)
        },
    )
    .unwrap();

    let names = files(a.path());
    assert_eq!(names, files(b.path()));
    for name in &names {
        if name == "timestamps.json" {
            continue;
        }
        let (x, y) = (
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
        );
        assert!(x == y, "{name} differs between runs");
    }

    let manifest = RunManifest::read(a.path()).unwrap();
    assert_eq!(manifest.config_hash, cfg.hash().unwrap());
    assert_eq!(manifest.sample_size, 500);
    for (name, hash) in &manifest.outputs {
        assert_eq!(
            &sha256_hex(&std::fs::read(a.path().join(name)).unwrap()),
            hash,
            "{name}"
        );
    }
    for required in [
        "matrix.csv",
        "clusters.csv",
        "model.json",
        "eval_report.json",
        "probe.json",
        "inputs/students.csv",
    ] {
        assert!(
            manifest.outputs.contains_key(required),
            "{required} missing from manifest"
        );
    }
    assert!(!serde_json::to_string(&manifest)
        .unwrap()
        .contains("2024-01-01"));
}

#[test]
fn stages_refuse_to_overwrite_and_report_missing_inputs() {
    let cfg = quick();
    let dir = tempfile::tempdir().unwrap();
    let err = run(Stage::Extract, &cfg, &opts(dir.path(), false)).unwrap_err();
    assert!(matches!(err, CapireError::MissingArtifact { .. }), "{err}");
    assert_eq!(exit_code(&err), 1);

    run(Stage::Synth, &cfg, &opts(dir.path(), false)).unwrap();
    run(Stage::Validate, &cfg, &opts(dir.path(), false)).unwrap();
    let err = run(Stage::Validate, &cfg, &opts(dir.path(), false)).unwrap_err();
    assert!(matches!(err, CapireError::OutputExists(_)), "{err}");
    assert_eq!(exit_code(&err), 2);
    run(Stage::Validate, &cfg, &opts(dir.path(), true)).unwrap();

    let err = run(Stage::Cluster, &cfg, &opts(dir.path(), false)).unwrap_err();
    assert!(
        matches!(
            err,
            CapireError::MissingArtifact {
                stage: "assemble",
                ..
            }
        ),
        "{err}"
    );

    let mut other = cfg.clone();
    other.seed = 99;
    let err = run(Stage::Audit, &other, &opts(dir.path(), false)).unwrap_err();
    assert!(matches!(err, CapireError::Config(_)), "{err}");
}

#[test]
fn failing_validation_stops_the_chain() {
    let cfg = quick();
    let dir = tempfile::tempdir().unwrap();
    run(Stage::Synth, &cfg, &opts(dir.path(), false)).unwrap();
    let students = dir.path().join("inputs/students.csv");
    let text = std::fs::read_to_string(&students).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let dup = lines[1];
    lines.push(dup);
    std::fs::write(&students, lines.join("\n") + "\n").unwrap();

    let err = run(Stage::Validate, &cfg, &opts(dir.path(), false)).unwrap_err();
    assert!(matches!(err, CapireError::ValidationFailed { .. }), "{err}");
    assert!(dir.path().join("validation_report.json").exists());
    let err = run(Stage::Extract, &cfg, &opts(dir.path(), false)).unwrap_err();
    assert!(matches!(err, CapireError::ValidationFailed { .. }), "{err}");
}

#[test]
fn stage_names_round_trip() {
    for s in Stage::EVERY {
        assert_eq!(s.name().parse::<Stage>().unwrap(), s);
    }
    assert!(matches!(
        "clusterize".parse::<Stage>(),
        Err(CapireError::Config(_))
    ));
}
