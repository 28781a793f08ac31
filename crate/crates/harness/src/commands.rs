//! Subcommand implementations. Each writes its CSV files into the output
//! directory and returns the `key=value` lines meant for stdout.

use std::path::{Path, PathBuf};

use slowfast_core::{
    energy_residual, estimate_avg_drift, estimate_mixing, integrate_averaged, integrate_full, validate_assumptions,
    Channel, ClosedFormDrift, DriftProvider, MonteCarloDrift, NoiseStream, StreamFactory, StreamId,
};

use crate::config::{Config, Model};
use crate::csv::{float, Table};
use crate::error::{HarnessError, Result};
use crate::lemmas::run_lemma_checks;
use crate::rate::run_rate_study;

/// Files written and lines for stdout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
}

/// Closed form when the fixture has one, Monte Carlo otherwise.
pub fn default_provider(cfg: &Config, model: &Model, seed: u64) -> Result<Box<dyn DriftProvider>> {
    if model.coefficients.linear_ou().is_some() {
        return Ok(Box::new(ClosedFormDrift::new(model.coefficients.clone(), model.basis.length())?));
    }
    let method = cfg.avg_drift_method(model.kappa())?;
    let quality = Some((cfg.avg_drift.quality_rel, cfg.avg_drift.quality_abs));
    Ok(Box::new(MonteCarloDrift::new(model.frozen()?, method, seed).with_quality(quality)))
}

/// One trajectory of the full system, or of the averaged equation on the
/// same slow noise with `averaged`.
pub fn simulate(cfg: &Config, seed: u64, out: &Path, averaged: bool) -> Result<Outcome> {
    let model = cfg.model()?;
    let mut sys = cfg.system_config(&model)?;
    let (w1, w2) = StreamFactory::new(seed).pair(0, 0);
    let mut t = Table::new(&["t", "energy", "x_h1", "v_h", "y_h", "slow_residual", "fast_residual"]);
    let name = if averaged {
        let drift = default_provider(cfg, &model, seed)?;
        let run = integrate_averaged(&sys, drift.as_ref(), w1)?;
        for s in &run.trajectory {
            t.push(vec![
                s.time.into(),
                s.slow.energy().into(),
                s.slow.position.sobolev_norm(1.0).into(),
                s.slow.velocity.norm().into(),
                f64::NAN.into(),
                f64::NAN.into(),
                f64::NAN.into(),
            ]);
        }
        "averaged.csv"
    } else {
        sys.scheme.record_energy = true;
        let traj = integrate_full(&sys, (w1, w2))?;
        let res = energy_residual(&traj, &sys)?;
        for (i, s) in traj.iter().enumerate() {
            t.push(vec![
                s.time.into(),
                s.slow.energy().into(),
                s.slow.position.sobolev_norm(1.0).into(),
                s.slow.velocity.norm().into(),
                s.fast.norm().into(),
                res.slow[i].into(),
                res.fast[i].into(),
            ]);
        }
        "trajectory.csv"
    };
    Ok(Outcome { files: vec![t.write(out, name)?], lines: Vec::new() })
}

pub fn avg_drift(cfg: &Config, seed: u64, out: &Path) -> Result<Outcome> {
    let model = cfg.model()?;
    let x = cfg.field(&model.basis, &cfg.avg_drift.x)?;
    let method = cfg.avg_drift_method(model.kappa())?;
    let stream = NoiseStream::new(seed, StreamId::new(0, 0, Channel::Drift));
    let est = estimate_avg_drift(&model.frozen()?, &x, method, stream)?;
    let mut t = Table::new(&["k", "value", "stderr"]);
    for (k, (v, se)) in est.value.coeffs().iter().zip(&est.mode_stderr).enumerate() {
        t.push(vec![(k + 1).into(), (*v).into(), (*se).into()]);
    }
    let lines = vec![
        format!("stderr={}", float(est.stderr)),
        format!("burn_in={}", float(est.burn_in)),
        format!("horizon={}", float(est.horizon)),
    ];
    Ok(Outcome { files: vec![t.write(out, "avg_drift.csv")?], lines })
}

pub fn mixing(cfg: &Config, seed: u64, out: &Path) -> Result<Outcome> {
    let model = cfg.model()?;
    let m = &cfg.mixing;
    let b = &model.basis;
    let (x, y, y_other) = (cfg.field(b, &m.x)?, cfg.field(b, &m.y)?, cfg.field(b, &m.y_other)?);
    let stream = NoiseStream::new(seed, StreamId::new(0, 0, Channel::Drift));
    let rep = estimate_mixing(&model.frozen()?, &x, &y, &y_other, m.horizon, m.dt, m.replicas, stream)?;
    let mut t = Table::new(&["t", "mean_sq_diff", "fitted_exponent"]);
    for (time, d) in rep.times.iter().zip(&rep.mean_sq_diff) {
        t.push(vec![(*time).into(), (*d).into(), rep.exponent.into()]);
    }
    let lines = vec![
        format!("exponent={}", float(rep.exponent)),
        format!("prefactor={}", float(rep.prefactor)),
        format!("fully_contracted={}", rep.fully_contracted),
    ];
    Ok(Outcome { files: vec![t.write(out, "mixing.csv")?], lines })
}

pub fn rate_study(cfg: &Config, seed: u64, out: &Path) -> Result<Outcome> {
    let rep = run_rate_study(cfg, seed)?;
    let files = vec![
        rep.table().write(out, "rate_study.csv")?,
        rep.midpoint_table().write(out, "rate_study_midpoint.csv")?,
        rep.summary_table().write(out, "rate_summary.csv")?,
    ];
    Ok(Outcome { files, lines: rep.flags() })
}

pub fn validate(cfg: &Config, seed: u64, out: &Path) -> Result<Outcome> {
    let model = cfg.model()?;
    let mut probe = NoiseStream::new(seed, StreamId::new(0, 0, Channel::Probe));
    let rep = validate_assumptions(&model.coefficients, &model.basis, &model.noise, cfg.validate.probes, &mut probe)?;
    let lines = rep.to_lines();
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let path = out.join("validate.txt");
    let mut text = lines.join("\n");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    Ok(Outcome { files: vec![path], lines })
}

pub fn lemma_checks(cfg: &Config, seed: u64, out: &Path) -> Result<Outcome> {
    let rep = run_lemma_checks(cfg, seed)?;
    let failed = rep.rows.iter().filter(|r| !r.passed() && !matches!(r.verdict, crate::lemmas::Verdict::Skipped(_)));
    let lines = vec![
        format!("checks={}", rep.rows.len()),
        format!("failed={}", failed.count()),
        format!("all_passed={}", rep.all_passed()),
    ];
    Ok(Outcome { files: vec![rep.table().write(out, "lemma_checks.csv")?], lines })
}
