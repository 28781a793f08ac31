//! The fast equation with the slow variable frozen,
//! `dY = (AY + g(x, Y))dt + b(x, Y)dW²`, run at unit speed: long paths,
//! invariant-measure statistics, averaged drifts, mixing and the first
//! variation `ζ = D_x Y·h`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{all_finite, HeatKernel};
use crate::model::CoefficientSet;
use crate::noise::{NoiseSpec, NoiseStream};
use crate::spectral::{norm_sq, Basis, SpectralField};
use crate::stats::{batch_means, fit_line, mean_stderr, pairwise_sum};

/// Everything the frozen equation needs except the frozen point.
#[derive(Debug, Clone)]
pub struct FrozenSystem {
    pub basis: Arc<Basis>,
    pub coefficients: CoefficientSet,
    pub noise: NoiseSpec,
}

impl FrozenSystem {
    pub fn new(basis: Arc<Basis>, coefficients: CoefficientSet, noise: NoiseSpec) -> Result<Self> {
        noise.check_modes(basis.n_modes())?;
        Ok(Self { basis, coefficients, noise })
    }

    pub fn kappa(&self) -> f64 {
        self.coefficients.kappa(self.basis.length())
    }

    fn check_field(&self, name: &str, f: &SpectralField) -> Result<()> {
        if f.n_modes() != self.basis.n_modes() || f.domain_length() != self.basis.length() {
            return Err(Error::config(format!("{name} does not match the basis")));
        }
        Ok(())
    }

    fn stepper(&self, dt: f64) -> Stepper<'_> {
        let n = self.basis.n_modes();
        Stepper {
            sys: self,
            dt,
            kernel: HeatKernel::new(&self.basis, dt, 1.0),
            drift: vec![0.0; n],
            diffusion: vec![0.0; n],
            dw: vec![0.0; n],
        }
    }
}

pub(crate) fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && horizon >= dt && horizon.is_finite()) {
        return Err(Error::config(format!("need 0 < dt <= horizon, got dt = {dt}, horizon = {horizon}")));
    }
    let ratio = horizon / dt;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * ratio {
        return Err(Error::config(format!("horizon {horizon} is not an integer multiple of dt {dt}")));
    }
    Ok(n as usize)
}

/// Steps discarded for a burn-in time (rounded up to the step grid).
fn burn_steps(burn_in: f64, dt: f64) -> usize {
    (burn_in / dt * (1.0 - 1e-12)).ceil().max(0.0) as usize
}

struct Stepper<'a> {
    sys: &'a FrozenSystem,
    dt: f64,
    kernel: HeatKernel,
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    dw: Vec<f64>,
}

impl Stepper<'_> {
    fn draw(&mut self, stream: &mut NoiseStream) {
        stream.increment_into(&self.sys.noise.lambda2, self.dt, &mut self.dw);
    }

    /// Advance `y` with the increment from the last [`Stepper::draw`].
    fn advance(&mut self, x: &[f64], y: &mut [f64]) {
        let maps = &self.sys.coefficients.maps;
        maps.fast_drift(x, y, &mut self.drift);
        maps.fast_diffusion(x, y, &mut self.diffusion);
        self.kernel.step(y, &self.drift, &self.diffusion, &self.dw, None);
    }

    fn step(&mut self, x: &[f64], y: &mut [f64], stream: &mut NoiseStream, step: usize) -> Result<()> {
        self.draw(stream);
        self.advance(x, y);
        if !all_finite(&[y]) {
            return Err(Error::Blowup { step, time: step as f64 * self.dt });
        }
        Ok(())
    }
}

/// A frozen-equation path sampled on every step.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenPath {
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
}

/// Integrate `Y^{x,y}` on `[0, horizon]`.
pub fn integrate_frozen(
    sys: &FrozenSystem,
    x: &SpectralField,
    y: &SpectralField,
    horizon: f64,
    dt: f64,
    mut stream: NoiseStream,
) -> Result<FrozenPath> {
    sys.check_field("x", x)?;
    sys.check_field("y", y)?;
    let n_steps = step_count(horizon, dt)?;
    let length = sys.basis.length();
    let mut st = sys.stepper(dt);
    let mut cur = y.coeffs().to_vec();
    let mut path = FrozenPath { times: vec![0.0], states: vec![y.clone()] };
    for step in 1..=n_steps {
        st.step(x.coeffs(), &mut cur, &mut stream, step)?;
        path.times.push(step as f64 * dt);
        path.states.push(SpectralField::from_raw(cur.clone(), length));
    }
    Ok(path)
}

/// How `f̄(x)` is estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AvgDriftMethod {
    /// `(T_a − T_b)⁻¹ ∫_{T_b}^{T_a} f(x, Y_s) ds` along one path from `y = 0`.
    TimeAverage { burn_in: f64, horizon: f64, dt: f64, batches: usize },
    /// Mean of `f(x, Y_T)` over independent paths from `y = 0`.
    Ensemble { replicas: usize, terminal_time: f64, dt: f64 },
}

impl AvgDriftMethod {
    /// Burn-in `10/κ`, horizon `200/κ`, step 0.01, 20 batches.
    pub fn default_time_average(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::config(format!("kappa nonpositive ({kappa}); no averaging budget")));
        }
        let dt = 0.01;
        let snap = |t: f64| (t / dt).ceil() * dt;
        Ok(Self::TimeAverage { burn_in: snap(10.0 / kappa), horizon: snap(200.0 / kappa), dt, batches: 20 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedDriftEstimate {
    pub value: SpectralField,
    /// Standard error in the `H` norm.
    pub stderr: f64,
    pub mode_stderr: Vec<f64>,
    pub burn_in: f64,
    pub horizon: f64,
}

/// Estimate `f̄(x) = ∫ f(x, y) μ^x(dy)`.
pub fn estimate_avg_drift(
    sys: &FrozenSystem,
    x: &SpectralField,
    method: AvgDriftMethod,
    stream: NoiseStream,
) -> Result<AveragedDriftEstimate> {
    sys.check_field("x", x)?;
    let n = sys.basis.n_modes();
    let length = sys.basis.length();
    let maps = &sys.coefficients.maps;
    match method {
        AvgDriftMethod::TimeAverage { burn_in, horizon, dt, batches } => {
            if !(horizon > burn_in && burn_in >= 0.0) {
                return Err(Error::config(format!("averaging horizon {horizon} must exceed burn-in {burn_in}")));
            }
            if batches < 2 {
                return Err(Error::config("time averaging needs at least two batches"));
            }
            let n_total = step_count(horizon, dt)?;
            let n_burn = burn_steps(burn_in, dt);
            let mut stream = stream;
            let mut st = sys.stepper(dt);
            let mut y = vec![0.0; n];
            let mut f = vec![0.0; n];
            let mut series = vec![Vec::with_capacity(n_total - n_burn); n];
            for step in 0..n_total {
                if step >= n_burn {
                    maps.slow_drift(x.coeffs(), &y, &mut f);
                    for (s, v) in series.iter_mut().zip(&f) {
                        s.push(*v);
                    }
                }
                st.step(x.coeffs(), &mut y, &mut stream, step + 1)?;
            }
            if series[0].len() < batches {
                return Err(Error::config("fewer averaging samples than batches"));
            }
            let mut value = Vec::with_capacity(n);
            let mut mode_stderr = Vec::with_capacity(n);
            for s in &series {
                value.push(pairwise_sum(s) / s.len() as f64);
                mode_stderr.push(mean_stderr(&batch_means(s, batches)).1);
            }
            Ok(AveragedDriftEstimate {
                value: SpectralField::from_raw(value, length),
                stderr: norm_sq(&mode_stderr).sqrt(),
                mode_stderr,
                burn_in,
                horizon,
            })
        }
        AvgDriftMethod::Ensemble { replicas, terminal_time, dt } => {
            if replicas < 2 {
                return Err(Error::config("ensemble averaging needs at least two replicas"));
            }
            let n_steps = step_count(terminal_time, dt)?;
            let finals: Vec<Vec<f64>> = (0..replicas as u64)
                .into_par_iter()
                .map(|r| {
                    let mut stream = stream.fork(r);
                    let mut st = sys.stepper(dt);
                    let mut y = vec![0.0; n];
                    for step in 1..=n_steps {
                        st.step(x.coeffs(), &mut y, &mut stream, step)?;
                    }
                    let mut f = vec![0.0; n];
                    maps.slow_drift(x.coeffs(), &y, &mut f);
                    Ok(f)
                })
                .collect::<Result<_>>()?;
            let mut value = Vec::with_capacity(n);
            let mut mode_stderr = Vec::with_capacity(n);
            let mut column = vec![0.0; replicas];
            for k in 0..n {
                for (c, f) in column.iter_mut().zip(&finals) {
                    *c = f[k];
                }
                let (m, se) = mean_stderr(&column);
                value.push(m);
                mode_stderr.push(se);
            }
            Ok(AveragedDriftEstimate {
                value: SpectralField::from_raw(value, length),
                stderr: norm_sq(&mode_stderr).sqrt(),
                mode_stderr,
                burn_in: 0.0,
                horizon: terminal_time,
            })
        }
    }
}

/// `f̄(x)_k = x_k/(α_k + γ)` for the linear Ornstein–Uhlenbeck fixture.
pub fn closed_form_avg_drift(x: &SpectralField, coefficients: &CoefficientSet) -> Result<SpectralField> {
    let ou = coefficients
        .linear_ou()
        .ok_or_else(|| Error::Usage(format!("no closed-form averaged drift for fixture {}", coefficients.name)))?;
    let length = x.domain_length();
    let value =
        x.coeffs().iter().enumerate().map(|(i, xk)| xk / (crate::spectral::alpha(i + 1, length) + ou.gamma)).collect();
    Ok(SpectralField::from_raw(value, length))
}

/// Long-run statistics of `Y^{x,0}` under `μ^x`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryMoments {
    pub mean: Vec<f64>,
    pub mean_stderr: Vec<f64>,
    pub variance: Vec<f64>,
    pub variance_stderr: Vec<f64>,
    /// `∫ ‖y‖² μ^x(dy)`.
    pub second_moment: f64,
    pub second_moment_stderr: f64,
}

/// Time averages of `y_k`, `(y_k − ȳ_k)²` and `‖y‖²` over `[burn_in, horizon]`.
pub fn stationary_moments(
    sys: &FrozenSystem,
    x: &SpectralField,
    burn_in: f64,
    horizon: f64,
    dt: f64,
    batches: usize,
    mut stream: NoiseStream,
) -> Result<StationaryMoments> {
    sys.check_field("x", x)?;
    if !(horizon > burn_in && burn_in >= 0.0) {
        return Err(Error::config(format!("averaging horizon {horizon} must exceed burn-in {burn_in}")));
    }
    let n = sys.basis.n_modes();
    let n_total = step_count(horizon, dt)?;
    let n_burn = burn_steps(burn_in, dt);
    let mut st = sys.stepper(dt);
    let mut y = vec![0.0; n];
    let mut series = vec![Vec::with_capacity(n_total - n_burn); n];
    let mut sq = Vec::with_capacity(n_total - n_burn);
    for step in 1..=n_total {
        st.step(x.coeffs(), &mut y, &mut stream, step)?;
        if step > n_burn {
            for (s, v) in series.iter_mut().zip(&y) {
                s.push(*v);
            }
            sq.push(norm_sq(&y));
        }
    }
    let mut out = StationaryMoments {
        mean: Vec::with_capacity(n),
        mean_stderr: Vec::with_capacity(n),
        variance: Vec::with_capacity(n),
        variance_stderr: Vec::with_capacity(n),
        second_moment: pairwise_sum(&sq) / sq.len() as f64,
        second_moment_stderr: mean_stderr(&batch_means(&sq, batches)).1,
    };
    for s in &series {
        let m = pairwise_sum(s) / s.len() as f64;
        let dev: Vec<f64> = s.iter().map(|v| (v - m) * (v - m)).collect();
        out.mean.push(m);
        out.mean_stderr.push(mean_stderr(&batch_means(s, batches)).1);
        out.variance.push(pairwise_sum(&dev) / dev.len() as f64);
        out.variance_stderr.push(mean_stderr(&batch_means(&dev, batches)).1);
    }
    Ok(out)
}

/// Ensemble mean of `f(x, Y_t^{x,y})` every `stride` steps, for watching
/// `E f(x, Y_t) → f̄(x)`.
#[allow(clippy::too_many_arguments)]
pub fn mean_drift_path(
    sys: &FrozenSystem,
    x: &SpectralField,
    y: &SpectralField,
    horizon: f64,
    dt: f64,
    stride: usize,
    replicas: usize,
    stream: NoiseStream,
) -> Result<Vec<(f64, SpectralField)>> {
    sys.check_field("x", x)?;
    sys.check_field("y", y)?;
    let n_steps = step_count(horizon, dt)?;
    let stride = stride.max(1);
    let n = sys.basis.n_modes();
    let maps = &sys.coefficients.maps;
    let paths: Vec<Vec<Vec<f64>>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut stream = stream.fork(r);
            let mut st = sys.stepper(dt);
            let mut cur = y.coeffs().to_vec();
            let mut f = vec![0.0; n];
            let mut rows = Vec::new();
            for step in 0..=n_steps {
                if step > 0 {
                    st.step(x.coeffs(), &mut cur, &mut stream, step)?;
                }
                if step % stride == 0 {
                    maps.slow_drift(x.coeffs(), &cur, &mut f);
                    rows.push(f.clone());
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    let mut column = vec![0.0; replicas];
    for (i, step) in (0..=n_steps).step_by(stride).enumerate() {
        let mut mean = Vec::with_capacity(n);
        for k in 0..n {
            for (c, p) in column.iter_mut().zip(&paths) {
                *c = p[i][k];
            }
            mean.push(pairwise_sum(&column) / replicas as f64);
        }
        out.push((step as f64 * dt, SpectralField::from_raw(mean, sys.basis.length())));
    }
    Ok(out)
}

/// Decay of `E‖Y_t^{x,y} − Y_t^{x,y'}‖²` under synchronous coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingReport {
    pub times: Vec<f64>,
    pub mean_sq_diff: Vec<f64>,
    /// `ĉ` in `E‖ΔY_t‖² ≈ C e^{−ĉt}`, fitted on `[T/4, T]`; infinite when
    /// fully contracted.
    pub exponent: f64,
    pub prefactor: f64,
    /// Every difference in the fit window is below `1e-14`.
    pub fully_contracted: bool,
}

const CONTRACTED: f64 = 1e-14;

#[allow(clippy::too_many_arguments)]
pub fn estimate_mixing(
    sys: &FrozenSystem,
    x: &SpectralField,
    y: &SpectralField,
    y_other: &SpectralField,
    horizon: f64,
    dt: f64,
    replicas: usize,
    stream: NoiseStream,
) -> Result<MixingReport> {
    sys.check_field("x", x)?;
    sys.check_field("y", y)?;
    sys.check_field("y'", y_other)?;
    if replicas == 0 {
        return Err(Error::config("mixing needs at least one replica"));
    }
    let n_steps = step_count(horizon, dt)?;
    let diffs: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut stream = stream.fork(r);
            let mut st = sys.stepper(dt);
            let mut a = y.coeffs().to_vec();
            let mut b = y_other.coeffs().to_vec();
            let mut d = Vec::with_capacity(n_steps + 1);
            d.push(sq_dist(&a, &b));
            for step in 1..=n_steps {
                st.draw(&mut stream);
                st.advance(x.coeffs(), &mut a);
                st.advance(x.coeffs(), &mut b);
                if !all_finite(&[&a, &b]) {
                    return Err(Error::Blowup { step, time: step as f64 * dt });
                }
                d.push(sq_dist(&a, &b));
            }
            Ok(d)
        })
        .collect::<Result<_>>()?;
    let mut column = vec![0.0; replicas];
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut mean_sq_diff = Vec::with_capacity(n_steps + 1);
    for step in 0..=n_steps {
        for (c, d) in column.iter_mut().zip(&diffs) {
            *c = d[step];
        }
        times.push(step as f64 * dt);
        mean_sq_diff.push(pairwise_sum(&column) / replicas as f64);
    }
    let start = horizon / 4.0;
    let window: Vec<(f64, f64)> =
        times.iter().zip(&mean_sq_diff).filter(|(t, _)| **t >= start - 1e-12).map(|(t, m)| (*t, *m)).collect();
    let fully_contracted = window.iter().all(|(_, m)| *m < CONTRACTED);
    let (exponent, prefactor) = if fully_contracted {
        (f64::INFINITY, 0.0)
    } else {
        let (t, l): (Vec<f64>, Vec<f64>) = window.iter().filter(|(_, m)| *m > 0.0).map(|(t, m)| (*t, m.ln())).unzip();
        let fit = fit_line(&t, &l, None)?;
        (-fit.slope, fit.intercept.exp())
    };
    Ok(MixingReport { times, mean_sq_diff, exponent, prefactor, fully_contracted })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Result of integrating the first-variation equation.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstVariation {
    pub times: Vec<f64>,
    /// `ζ_t` along the first replica's path.
    pub trajectory: Vec<SpectralField>,
    /// Monte Carlo `E‖ζ_t‖²`.
    pub mean_sq: Vec<f64>,
    pub sup_mean_sq: f64,
}

/// Integrate `dζ = (Aζ + g'_x h + g'_y ζ)dt + (b'_x h + b'_y ζ)dW²`, `ζ₀ = 0`,
/// along simulated paths of `Y^{x,y}` sharing their increments.
#[allow(clippy::too_many_arguments)]
pub fn first_variation(
    sys: &FrozenSystem,
    x: &SpectralField,
    y: &SpectralField,
    h: &SpectralField,
    horizon: f64,
    dt: f64,
    replicas: usize,
    stream: NoiseStream,
) -> Result<FirstVariation> {
    sys.check_field("x", x)?;
    sys.check_field("y", y)?;
    sys.check_field("h", h)?;
    let jac = sys.coefficients.maps.fast_jacobian().ok_or_else(|| {
        Error::config(format!("fixture {} provides no derivatives of g and b", sys.coefficients.name))
    })?;
    if replicas == 0 {
        return Err(Error::config("first variation needs at least one replica"));
    }
    let n_steps = step_count(horizon, dt)?;
    let n = sys.basis.n_modes();
    let length = sys.basis.length();
    let xs = x.coeffs();
    let hs = h.coeffs();
    let runs: Vec<(Vec<f64>, Option<Vec<SpectralField>>)> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut stream = stream.fork(r);
            let mut st = sys.stepper(dt);
            let mut cur = y.coeffs().to_vec();
            let mut zeta = vec![0.0; n];
            let (mut gx, mut gy, mut bx, mut by) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            let mut sq = vec![0.0];
            let mut traj = (r == 0).then(|| vec![SpectralField::from_raw(zeta.clone(), length)]);
            for step in 1..=n_steps {
                st.draw(&mut stream);
                jac.drift_dx(xs, &cur, hs, &mut gx);
                jac.drift_dy(xs, &cur, &zeta, &mut gy);
                jac.diffusion_dx(xs, &cur, hs, &mut bx);
                jac.diffusion_dy(xs, &cur, &zeta, &mut by);
                for k in 0..n {
                    gx[k] += gy[k];
                    bx[k] += by[k];
                }
                st.kernel.step(&mut zeta, &gx, &bx, &st.dw, None);
                st.advance(xs, &mut cur);
                if !all_finite(&[&cur, &zeta]) {
                    return Err(Error::Blowup { step, time: step as f64 * dt });
                }
                sq.push(norm_sq(&zeta));
                if let Some(t) = traj.as_mut() {
                    t.push(SpectralField::from_raw(zeta.clone(), length));
                }
            }
            Ok((sq, traj))
        })
        .collect::<Result<_>>()?;
    let mut column = vec![0.0; replicas];
    let mut mean_sq = Vec::with_capacity(n_steps + 1);
    for step in 0..=n_steps {
        for (c, run) in column.iter_mut().zip(&runs) {
            *c = run.0[step];
        }
        mean_sq.push(pairwise_sum(&column) / replicas as f64);
    }
    let sup_mean_sq = mean_sq.iter().copied().fold(0.0, f64::max);
    let trajectory = runs.into_iter().next().and_then(|r| r.1).unwrap_or_default();
    Ok(FirstVariation { times: (0..=n_steps).map(|s| s as f64 * dt).collect(), trajectory, mean_sq, sup_mean_sq })
}
