use std::process::Command;

const CONFIG: &str = r#"{
    "synth": { "preset": "planted_five", "n_students": 400, "seed": 2 },
    "validation": { "bootstrap_resamples": 3, "permutations": 10, "sensitivity": false },
    "classifier": {
        "forest": { "n_trees": 20 },
        "tuning": { "n_trees": [20], "max_depth": [null], "min_leaf": [1] }
    }
}"#;

fn capire(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_capire"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn runs_stages_and_maps_errors_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = dir.path().join("out");
    let (cfg, out) = (cfg.to_str().unwrap(), out.to_str().unwrap());

    let r = capire(&["synth", "--config", cfg, "--out", out]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stdout).contains("400 students"));

    let r = capire(&["extract", "--config", cfg, "--out", out]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("validate"));

    let r = capire(&["all", "--config", cfg, "--out", out, "--quiet"]);
    assert_eq!(
        r.status.code(),
        Some(2),
        "synth outputs exist without --force"
    );

    let r = capire(&["all", "--config", cfg, "--out", out, "--quiet", "--force"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(r.stdout.is_empty());
    for f in [
        "manifest.json",
        "timestamps.json",
        "predictions.csv",
        "probe.json",
    ] {
        assert!(std::path::Path::new(out).join(f).exists(), "{f}");
    }

    let r = capire(&["train", "--config", cfg, "--out", out, "--seed", "8"]);
    assert_eq!(
        r.status.code(),
        Some(2),
        "a different seed needs a fresh directory"
    );

    let r = capire(&["cluster", "--config", "/nonexistent.json"]);
    assert_eq!(r.status.code(), Some(2));
}
