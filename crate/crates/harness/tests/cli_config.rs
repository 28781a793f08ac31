mod common;

use common::*;

fn write_config(dir: &tempfile::TempDir, text: &str) -> String {
    let p = dir.path().join("c.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn unknown_key_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "[rate_study]\nreplica = 4\n");
    let err = run_failing(&["rate-study", "--config", &cfg]);
    assert!(err.contains("`rate_study.replica`"), "{err}");
}

#[test]
fn wrong_type_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "[system.initial]\nposition = [1.0, \"two\"]\n");
    let err = run_failing(&["simulate", "--config", &cfg]);
    assert!(err.contains("`system.initial.position[1]`"), "{err}");
}

#[test]
fn family_parameters_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "[noise.slow]\nfamily = \"exponential\"\n");
    let err = run_failing(&["validate", "--config", &cfg]);
    assert!(err.contains("`noise.slow.rho`"), "{err}");
    let cfg = write_config(&dir, "[noise.slow]\nfamily = \"gaussian\"\n");
    let err = run_failing(&["validate", "--config", &cfg]);
    assert!(err.contains("`noise.slow.family`"), "{err}");
}

#[test]
fn unknown_fixture_parameter_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "[fixture]\nname = \"linear_ou\"\nparams = { gama = 1.0 }\n");
    let err = run_failing(&["validate", "--config", &cfg]);
    assert!(err.contains("`fixture`") && err.contains("gama"), "{err}");
}

#[test]
fn missing_config_file_is_an_io_error() {
    let err = run_failing(&["validate", "--config", "/nonexistent/slowfast.toml"]);
    assert!(err.contains("/nonexistent/slowfast.toml"), "{err}");
}

#[test]
fn validate_prints_key_value_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["validate", "--out", dir.path().to_str().unwrap()], None);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "kappa=7.5000000000000000e-1");
    assert!(lines.contains(&"violations=0"));
    assert!(lines.iter().all(|l| l.contains('=')));
    let file = std::fs::read_to_string(dir.path().join("validate.txt")).unwrap();
    assert_eq!(file, stdout);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mini_config();
    let cfg = cfg.to_str().unwrap();
    let sim = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        run(&["simulate", "--config", cfg, "--seed", seed, "--out", out.to_str().unwrap()], None);
        std::fs::read(out.join("trajectory.csv")).unwrap()
    };
    assert_eq!(sim("5", "a"), sim("5", "b"));
    assert_ne!(sim("5", "a"), sim("6", "c"));
}
