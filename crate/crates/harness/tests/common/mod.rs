#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const SUBCOMMANDS: [&str; 6] = ["simulate", "avg-drift", "mixing", "rate-study", "validate", "lemma-checks"];

pub fn mini_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/mini.toml")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Run the CLI; panics with its stderr on a nonzero exit.
pub fn run(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_slowfast"));
    cmd.args(args).env_remove("SPDE_THREADS");
    if let Some(t) = threads {
        cmd.env("SPDE_THREADS", t);
    }
    let out = cmd.output().expect("spawn slowfast");
    assert!(out.status.success(), "slowfast {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

pub fn run_failing(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_slowfast")).args(args).output().expect("spawn slowfast");
    assert!(!out.status.success(), "slowfast {args:?} unexpectedly succeeded");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Run every subcommand on `config` into `out`; returns stdout per command.
pub fn run_all(config: &Path, out: &Path, threads: &str) -> Vec<String> {
    SUBCOMMANDS
        .iter()
        .map(|c| {
            let o = run(&[c, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()], Some(threads));
            String::from_utf8(o.stdout).unwrap()
        })
        .collect()
}

/// Sorted `(file name, contents)` of a directory.
pub fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}
