//! Strong-convergence rate study: the squared slow error between the full
//! system and the averaged equation on shared `W¹` paths, fitted against ε.

use rayon::prelude::*;
use slowfast_core::{
    integrate_averaged_path, integrate_full_paths, slow_error, stats, BrownianPath, ClosedFormDrift, DriftProvider,
    Error as CoreError, MonteCarloDrift, StreamFactory, SystemConfig,
};

use crate::config::{Config, DriftKind, Model};
use crate::csv::Table;
use crate::error::Result;

/// Largest aborted fraction before a report is invalid.
pub const MAX_ABORTED_FRACTION: f64 = 0.01;
/// Largest relative change of the smallest-ε error under dt-halving.
pub const SELF_CHECK_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonRow {
    pub epsilon: f64,
    /// Block length of the averaging argument, `√ε`; recorded, not simulated.
    pub delta: f64,
    pub dt: f64,
    pub replicas: usize,
    pub aborted: usize,
    pub mse_mean: f64,
    pub mse_stderr: f64,
    /// The same error at `T/2`.
    pub mid_mean: f64,
    pub mid_stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheck {
    pub epsilon: f64,
    pub coarse: f64,
    pub fine: f64,
    pub relative_change: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub rows: Vec<EpsilonRow>,
    pub fit: stats::LineFit,
    pub mid_fit: stats::LineFit,
    pub self_check: Option<SelfCheck>,
    /// Per-ε errors are nonincreasing as ε shrinks, up to `2·stderr`.
    pub monotone: bool,
    /// Some ε has `stderr/mean` above the configured target.
    pub stderr_warning: bool,
    pub valid: bool,
}

impl RateReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&["epsilon", "delta", "dt", "replicas", "aborted", "mse_mean", "mse_stderr"]);
        for r in &self.rows {
            t.push(vec![
                r.epsilon.into(),
                r.delta.into(),
                r.dt.into(),
                r.replicas.into(),
                r.aborted.into(),
                r.mse_mean.into(),
                r.mse_stderr.into(),
            ]);
        }
        t
    }

    pub fn midpoint_table(&self) -> Table {
        let mut t = Table::new(&["epsilon", "mse_mean", "mse_stderr"]);
        for r in &self.rows {
            t.push(vec![r.epsilon.into(), r.mid_mean.into(), r.mid_stderr.into()]);
        }
        t
    }

    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(&["slope", "ci_low", "ci_high"]);
        t.push(vec![self.fit.slope.into(), self.fit.ci_low.into(), self.fit.ci_high.into()]);
        t
    }

    /// `key=value` flags in a fixed order.
    pub fn flags(&self) -> Vec<String> {
        let mut lines = vec![
            format!("valid={}", self.valid),
            format!("monotone={}", self.monotone),
            format!("stderr_warning={}", self.stderr_warning),
            format!("aborted={}", self.rows.iter().map(|r| r.aborted).sum::<usize>()),
            format!("slope={}", crate::csv::float(self.fit.slope)),
            format!("midpoint_slope={}", crate::csv::float(self.mid_fit.slope)),
        ];
        match &self.self_check {
            Some(c) => {
                lines.push(format!("self_check={}", if c.passed { "pass" } else { "fail" }));
                lines.push(format!("self_check_change={}", crate::csv::float(c.relative_change)));
            }
            None => lines.push("self_check=off".to_string()),
        }
        lines
    }
}

/// Step for a given ε: `min(dt_base, ε/10)`, shrunk so that an even number
/// of steps covers the horizon (the midpoint is then a grid time).
pub fn step_for(epsilon: f64, dt_base: f64, horizon: f64) -> (f64, usize) {
    let target = dt_base.min(epsilon / 10.0);
    let half = (horizon / (2.0 * target) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (horizon / (2 * half) as f64, 2 * half)
}

fn provider(cfg: &Config, model: &Model, seed: u64) -> Result<Box<dyn DriftProvider>> {
    Ok(match cfg.rate_study.drift {
        DriftKind::ClosedForm => Box::new(ClosedFormDrift::new(model.coefficients.clone(), model.basis.length())?),
        DriftKind::MonteCarlo => {
            let method = cfg.avg_drift_method(model.kappa())?;
            let quality = Some((cfg.avg_drift.quality_rel, cfg.avg_drift.quality_abs));
            Box::new(MonteCarloDrift::new(model.frozen()?, method, seed).with_quality(quality))
        }
    })
}

/// Errors at `T/2` and `T` of one replica, or `None` on blowup.
fn replica_errors(
    sys: &SystemConfig,
    drift: &dyn DriftProvider,
    factory: &StreamFactory,
    point: u64,
    replica: u64,
    refine: u32,
) -> Result<Option<(f64, f64)>> {
    let (w1, w2) = factory.pair(point, replica);
    let mut p1 = BrownianPath::refined(w1.clone(), refine);
    let mut p2 = BrownianPath::refined(w2, refine);
    let full = match integrate_full_paths(sys, &mut p1, &mut p2) {
        Ok(t) => t,
        Err(CoreError::Blowup { .. }) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let avg = match integrate_averaged_path(sys, drift, &mut BrownianPath::refined(w1, refine)) {
        Ok(r) => r.trajectory,
        Err(CoreError::Blowup { .. }) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    // samples at 0, T/2 and T
    let mid = slow_error(&full[1].slow, &avg[1].slow);
    let end = slow_error(&full[2].slow, &avg[2].slow);
    Ok(Some((mid, end)))
}

fn system_for(cfg: &Config, model: &Model, epsilon: f64, dt: f64, n_steps: usize) -> Result<SystemConfig> {
    let mut sys = cfg.system_config(model)?;
    sys.epsilon = epsilon;
    sys.horizon = cfg.rate_study.horizon;
    sys.dt = dt;
    sys.scheme.stride = n_steps / 2;
    sys.scheme.record_energy = false;
    Ok(sys)
}

fn summarize(values: &[f64]) -> (f64, f64) {
    if values.len() < 2 {
        (values.first().copied().unwrap_or(f64::NAN), f64::NAN)
    } else {
        stats::mean_stderr(values)
    }
}

/// A NaN fit when some ε has no usable replicas; the report is then invalid.
fn fit_or_nan(points: &[(f64, f64)]) -> Result<stats::LineFit> {
    if points.iter().all(|p| p.1.is_finite()) {
        return Ok(stats::fit_loglog_slope(points, None)?);
    }
    let nan = f64::NAN;
    Ok(stats::LineFit { slope: nan, intercept: nan, slope_stderr: nan, ci_low: nan, ci_high: nan })
}

/// Run the study. Replicas of all ε run on the current rayon pool;
/// aggregation is in index order, so the report does not depend on the
/// pool size.
pub fn run_rate_study(cfg: &Config, seed: u64) -> Result<RateReport> {
    let rs = &cfg.rate_study;
    let model = cfg.model()?;
    let drift = provider(cfg, &model, seed)?;
    let factory = StreamFactory::new(seed);

    let mut epsilons = rs.epsilons.clone();
    epsilons.sort_by(|a, b| b.total_cmp(a));
    let systems: Vec<(f64, f64, SystemConfig)> = epsilons
        .iter()
        .map(|&e| {
            let (dt, n) = step_for(e, rs.dt_base, rs.horizon);
            Ok((e, dt, system_for(cfg, &model, e, dt, n)?))
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, u64)> =
        (0..systems.len()).flat_map(|i| (0..rs.replicas as u64).map(move |r| (i, r))).collect();
    let results: Vec<Option<(f64, f64)>> = jobs
        .par_iter()
        .map(|&(i, r)| replica_errors(&systems[i].2, drift.as_ref(), &factory, i as u64, r, 1))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(systems.len());
    for (i, (epsilon, dt, _)) in systems.iter().enumerate() {
        let chunk = &results[i * rs.replicas..(i + 1) * rs.replicas];
        let ok: Vec<(f64, f64)> = chunk.iter().flatten().copied().collect();
        let (mid_mean, mid_stderr) = summarize(&ok.iter().map(|p| p.0).collect::<Vec<_>>());
        let (mse_mean, mse_stderr) = summarize(&ok.iter().map(|p| p.1).collect::<Vec<_>>());
        rows.push(EpsilonRow {
            epsilon: *epsilon,
            delta: epsilon.sqrt(),
            dt: *dt,
            replicas: rs.replicas,
            aborted: rs.replicas - ok.len(),
            mse_mean,
            mse_stderr,
            mid_mean,
            mid_stderr,
        });
    }

    let fit = fit_or_nan(&rows.iter().map(|r| (r.epsilon, r.mse_mean)).collect::<Vec<_>>())?;
    let mid_fit = fit_or_nan(&rows.iter().map(|r| (r.epsilon, r.mid_mean)).collect::<Vec<_>>())?;

    let self_check = if rs.self_check {
        let last = systems.len() - 1;
        let (epsilon, dt, coarse_sys) = &systems[last];
        let n = (rs.horizon / dt).round() as usize;
        let fine_sys = system_for(cfg, &model, *epsilon, dt / 2.0, 2 * n)?;
        // both runs see the Brownian path sampled at the finer step
        let run = |sys: &SystemConfig, refine: u32| -> Result<Vec<Option<(f64, f64)>>> {
            (0..rs.replicas as u64)
                .into_par_iter()
                .map(|r| replica_errors(sys, drift.as_ref(), &factory, last as u64, r, refine))
                .collect()
        };
        let coarse = run(coarse_sys, 2)?;
        let fine = run(&fine_sys, 1)?;
        let pairs: Vec<(f64, f64)> =
            coarse.iter().zip(&fine).filter_map(|(a, b)| Some((a.as_ref()?.1, b.as_ref()?.1))).collect();
        let c = stats::pairwise_sum(&pairs.iter().map(|p| p.0).collect::<Vec<_>>()) / pairs.len() as f64;
        let f = stats::pairwise_sum(&pairs.iter().map(|p| p.1).collect::<Vec<_>>()) / pairs.len() as f64;
        let relative_change = (f - c).abs() / c;
        Some(SelfCheck {
            epsilon: *epsilon,
            coarse: c,
            fine: f,
            relative_change,
            passed: relative_change < SELF_CHECK_TOLERANCE,
        })
    } else {
        None
    };

    let monotone = rows.windows(2).all(|w| w[1].mse_mean <= w[0].mse_mean + 2.0 * (w[0].mse_stderr + w[1].mse_stderr));
    let stderr_warning = rows.iter().any(|r| r.mse_stderr.is_nan() || r.mse_stderr > rs.stderr_target * r.mse_mean);
    let aborted_ok = rows.iter().all(|r| (r.aborted as f64) < MAX_ABORTED_FRACTION * r.replicas as f64);
    let valid = aborted_ok && fit.slope.is_finite() && self_check.as_ref().is_none_or(|c| c.passed);

    Ok(RateReport { rows, fit, mid_fit, self_check, monotone, stderr_warning, valid })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_rule() {
        let (dt, n) = step_for(0.5, 0.01, 1.0);
        assert_eq!((dt, n), (0.01, 100));
        let (dt, n) = step_for(2f64.powi(-9), 0.01, 1.0);
        assert!(dt <= 2f64.powi(-9) / 10.0);
        assert_eq!(n % 2, 0);
        assert!((dt * n as f64 - 1.0).abs() < 1e-12);
        let (dt, n) = step_for(0.3, 0.07, 1.0);
        assert_eq!(n, 34);
        assert!(dt <= 0.03);
    }
}
