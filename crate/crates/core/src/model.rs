//! Coefficients `f`, `g`, `σ`, `b` of the coupled system, their declared
//! regularity constants, and the built-in fixtures.
//!
//! Diffusions are diagonal: `σ(x)` and `b(x, y)` return one multiplier per
//! mode, so `‖σ‖²_{Q₁} = Σ_k λ_{1,k} σ_k²`. Nemytskii nonlinearities are
//! evaluated on the collocation grid (synthesize, map pointwise, project).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::noise::{NoiseSpec, NoiseStream};
use crate::spectral::{norm_sq, Basis, SpectralField};

/// Coefficient maps acting on coefficient slices of a fixed basis.
pub trait Coefficients: Send + Sync + fmt::Debug {
    /// Slow drift `f(x, y)`.
    fn slow_drift(&self, x: &[f64], y: &[f64], out: &mut [f64]);
    /// Fast drift `g(x, y)`.
    fn fast_drift(&self, x: &[f64], y: &[f64], out: &mut [f64]);
    /// Per-mode multipliers of `σ(x)`.
    fn slow_diffusion(&self, x: &[f64], out: &mut [f64]);
    /// Per-mode multipliers of `b(x, y)`.
    fn fast_diffusion(&self, x: &[f64], y: &[f64], out: &mut [f64]);

    /// Directional derivatives of `g` and `b`, when known analytically.
    fn fast_jacobian(&self) -> Option<&dyn FastJacobian> {
        None
    }

    /// Parameters of the linear Ornstein–Uhlenbeck fixture, which has a
    /// closed-form averaged drift.
    fn linear_ou(&self) -> Option<OuParams> {
        None
    }
}

/// Derivatives needed by the first-variation equation.
pub trait FastJacobian: Send + Sync {
    /// `D_x g(x, y)·h`.
    fn drift_dx(&self, x: &[f64], y: &[f64], h: &[f64], out: &mut [f64]);
    /// `D_y g(x, y)·z`.
    fn drift_dy(&self, x: &[f64], y: &[f64], z: &[f64], out: &mut [f64]);
    /// Multipliers of `D_x b(x, y)·h`.
    fn diffusion_dx(&self, x: &[f64], y: &[f64], h: &[f64], out: &mut [f64]);
    /// Multipliers of `D_y b(x, y)·z`.
    fn diffusion_dy(&self, x: &[f64], y: &[f64], z: &[f64], out: &mut [f64]);
}

/// Declared constants of the regularity and dissipativity assumptions.
/// Diffusion constants are measured in the `Q`-weighted Hilbert–Schmidt norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeclaredConstants {
    pub l_f: f64,
    /// Bound on `‖f‖`; `None` when the drift is unbounded.
    pub m_f: Option<f64>,
    pub c_g: f64,
    pub l_g: f64,
    pub l_sigma: f64,
    pub c_b: f64,
    pub l_b: f64,
}

impl DeclaredConstants {
    fn check(&self) -> Result<()> {
        let all = [self.l_f, self.c_g, self.l_g, self.l_sigma, self.c_b, self.l_b];
        if all.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::config("declared constants must be finite and nonnegative"));
        }
        if let Some(m) = self.m_f {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::config("declared bound on f must be finite"));
            }
        }
        Ok(())
    }
}

/// A coefficient set bound to one basis.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub name: String,
    pub maps: Arc<dyn Coefficients>,
    pub constants: DeclaredConstants,
}

impl CoefficientSet {
    pub fn new(name: impl Into<String>, maps: Arc<dyn Coefficients>, constants: DeclaredConstants) -> Result<Self> {
        constants.check()?;
        Ok(Self { name: name.into(), maps, constants })
    }

    /// `κ = 2α₁ − 2L_g − L_b²`.
    pub fn kappa(&self, length: f64) -> f64 {
        let alpha1 = crate::spectral::alpha(1, length);
        2.0 * alpha1 - 2.0 * self.constants.l_g - self.constants.l_b * self.constants.l_b
    }

    pub fn linear_ou(&self) -> Option<OuParams> {
        self.maps.linear_ou()
    }

    pub fn slow_drift(&self, x: &SpectralField, y: &SpectralField) -> SpectralField {
        let mut out = vec![0.0; x.n_modes()];
        self.maps.slow_drift(x.coeffs(), y.coeffs(), &mut out);
        SpectralField::from_raw(out, x.domain_length())
    }

    pub fn fast_drift(&self, x: &SpectralField, y: &SpectralField) -> SpectralField {
        let mut out = vec![0.0; x.n_modes()];
        self.maps.fast_drift(x.coeffs(), y.coeffs(), &mut out);
        SpectralField::from_raw(out, x.domain_length())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuParams {
    pub gamma: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

/// `f(x, y) = y`, `g(x, y) = −γy + x`, constant diffusions.
#[derive(Debug, Clone)]
pub struct LinearOu {
    pub params: OuParams,
}

impl Coefficients for LinearOu {
    fn slow_drift(&self, _x: &[f64], y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y);
    }

    fn fast_drift(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let g = self.params.gamma;
        for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
            *o = xi - g * yi;
        }
    }

    fn slow_diffusion(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = self.params.sigma1);
    }

    fn fast_diffusion(&self, _x: &[f64], _y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = self.params.sigma2);
    }

    fn fast_jacobian(&self) -> Option<&dyn FastJacobian> {
        Some(self)
    }

    fn linear_ou(&self) -> Option<OuParams> {
        Some(self.params)
    }
}

impl FastJacobian for LinearOu {
    fn drift_dx(&self, _x: &[f64], _y: &[f64], h: &[f64], out: &mut [f64]) {
        out.copy_from_slice(h);
    }

    fn drift_dy(&self, _x: &[f64], _y: &[f64], z: &[f64], out: &mut [f64]) {
        for (o, zi) in out.iter_mut().zip(z) {
            *o = -self.params.gamma * zi;
        }
    }

    fn diffusion_dx(&self, _x: &[f64], _y: &[f64], _h: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }

    fn diffusion_dy(&self, _x: &[f64], _y: &[f64], _z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
}

/// Bounded smooth fixture built from `tanh`:
/// `f = a·tanh(x + y)` and `g = −γy + tanh(x)` pointwise on the grid,
/// `σ_k = σ₁(1 + ½tanh x_k)`, `b_k = σ₂(1 + ½tanh(x_k + y_k))`.
#[derive(Debug, Clone)]
pub struct BoundedNonlinear {
    pub amplitude: f64,
    pub gamma: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    basis: Arc<Basis>,
}

impl BoundedNonlinear {
    fn pointwise(&self, u: &[f64], v: Option<&[f64]>, map: impl Fn(f64) -> f64, out: &mut [f64]) {
        let n = self.basis.n_modes();
        let mut a = vec![0.0; n];
        self.basis.synthesize(u, &mut a);
        if let Some(v) = v {
            let mut b = vec![0.0; n];
            self.basis.synthesize(v, &mut b);
            for (ai, bi) in a.iter_mut().zip(&b) {
                *ai += bi;
            }
        }
        a.iter_mut().for_each(|s| *s = map(*s));
        self.basis.project(&a, out);
    }
}

fn sech2(s: f64) -> f64 {
    let c = s.cosh();
    1.0 / (c * c)
}

impl Coefficients for BoundedNonlinear {
    fn slow_drift(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let a = self.amplitude;
        self.pointwise(x, Some(y), |s| a * s.tanh(), out);
    }

    fn fast_drift(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.pointwise(x, None, f64::tanh, out);
        for (o, yi) in out.iter_mut().zip(y) {
            *o -= self.gamma * yi;
        }
    }

    fn slow_diffusion(&self, x: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.sigma1 * (1.0 + 0.5 * xi.tanh());
        }
    }

    fn fast_diffusion(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
            *o = self.sigma2 * (1.0 + 0.5 * (xi + yi).tanh());
        }
    }

    fn fast_jacobian(&self) -> Option<&dyn FastJacobian> {
        Some(self)
    }
}

impl FastJacobian for BoundedNonlinear {
    fn drift_dx(&self, x: &[f64], _y: &[f64], h: &[f64], out: &mut [f64]) {
        let n = self.basis.n_modes();
        let (mut xs, mut hs) = (vec![0.0; n], vec![0.0; n]);
        self.basis.synthesize(x, &mut xs);
        self.basis.synthesize(h, &mut hs);
        for (hj, xj) in hs.iter_mut().zip(&xs) {
            *hj *= sech2(*xj);
        }
        self.basis.project(&hs, out);
    }

    fn drift_dy(&self, _x: &[f64], _y: &[f64], z: &[f64], out: &mut [f64]) {
        for (o, zi) in out.iter_mut().zip(z) {
            *o = -self.gamma * zi;
        }
    }

    fn diffusion_dx(&self, x: &[f64], y: &[f64], h: &[f64], out: &mut [f64]) {
        for (((o, xi), yi), hi) in out.iter_mut().zip(x).zip(y).zip(h) {
            *o = 0.5 * self.sigma2 * sech2(xi + yi) * hi;
        }
    }

    fn diffusion_dy(&self, x: &[f64], y: &[f64], z: &[f64], out: &mut [f64]) {
        self.diffusion_dx(x, y, z, out);
    }
}

/// Named fixture with numeric parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

impl FixtureSpec {
    pub fn new(name: &str, params: &[(&str, f64)]) -> Self {
        Self { name: name.to_string(), params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect() }
    }

    fn get(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.params.get(key).copied().unwrap_or(default);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::config(format!("fixture parameter `{key}` is not finite")))
        }
    }

    fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        match self.params.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(Error::config(format!(
                "fixture `{}` has no parameter `{k}` (known: {})",
                self.name,
                known.join(", ")
            ))),
            None => Ok(()),
        }
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// Build a fixture on `basis`. Diffusion constants depend on the noise
/// spectra through the `Q`-weighted norms.
///
/// * `linear_ou`: `gamma` (0.5), `sigma1` (0.1), `sigma2` (0.5) and the
///   declared `l_b` (defaults to `sigma2`; the true Lipschitz constant of a
///   constant `b` is zero, so any nonnegative value is admissible).
/// * `bounded_nonlinear`: `a` (1.0), `gamma` (0.5), `sigma1` (0.1), `sigma2` (0.5).
pub fn make_fixture(spec: &FixtureSpec, basis: &Arc<Basis>, noise: &NoiseSpec) -> Result<CoefficientSet> {
    noise.check_modes(basis.n_modes())?;
    match spec.name.as_str() {
        "linear_ou" => {
            spec.reject_unknown(&["gamma", "sigma1", "sigma2", "l_b"])?;
            let params = OuParams {
                gamma: spec.get("gamma", 0.5)?,
                sigma1: spec.get("sigma1", 0.1)?,
                sigma2: spec.get("sigma2", 0.5)?,
            };
            let constants = DeclaredConstants {
                l_f: 1.0,
                m_f: None,
                c_g: 1.0,
                l_g: params.gamma.abs(),
                l_sigma: 0.0,
                c_b: 0.0,
                l_b: spec.get("l_b", params.sigma2.abs())?,
            };
            CoefficientSet::new("linear_ou", Arc::new(LinearOu { params }), constants)
        }
        "bounded_nonlinear" => {
            spec.reject_unknown(&["a", "gamma", "sigma1", "sigma2"])?;
            let maps = BoundedNonlinear {
                amplitude: spec.get("a", 1.0)?,
                gamma: spec.get("gamma", 0.5)?,
                sigma1: spec.get("sigma1", 0.1)?,
                sigma2: spec.get("sigma2", 0.5)?,
                basis: basis.clone(),
            };
            let q1 = max_of(&noise.lambda1).sqrt();
            let q2 = max_of(&noise.lambda2).sqrt();
            let b_lip = 0.5 * maps.sigma2.abs() * q2;
            let constants = DeclaredConstants {
                l_f: maps.amplitude.abs(),
                m_f: Some(maps.amplitude.abs() * basis.length().sqrt()),
                c_g: 1.0,
                l_g: maps.gamma.abs(),
                l_sigma: 0.5 * maps.sigma1.abs() * q1,
                c_b: b_lip,
                l_b: b_lip,
            };
            CoefficientSet::new("bounded_nonlinear", Arc::new(maps), constants)
        }
        other => Err(Error::config(format!("unknown fixture `{other}` (expected linear_ou or bounded_nonlinear)"))),
    }
}

/// Empirical constants measured by random probing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EstimatedConstants {
    /// Largest `‖f(x₁, y₁) − f(x₂, y₂)‖` quotient over separate `x`/`y` moves.
    pub l_f: f64,
    pub sup_f: f64,
    pub c_g: f64,
    pub l_g: f64,
    pub l_sigma: f64,
    pub c_b: f64,
    pub l_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub assumption: &'static str,
    pub constant: &'static str,
    pub declared: f64,
    pub estimated: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub kappa: f64,
    pub fatal: bool,
    pub declared: DeclaredConstants,
    pub estimated: EstimatedConstants,
    pub violations: Vec<Violation>,
}

impl AssumptionReport {
    /// `key=value` lines in a fixed order.
    pub fn to_lines(&self) -> Vec<String> {
        let d = &self.declared;
        let e = &self.estimated;
        let mut lines = vec![
            format!("kappa={:.16e}", self.kappa),
            format!("fatal={}", self.fatal),
            format!("declared.l_f={:.16e}", d.l_f),
            format!("declared.m_f={}", d.m_f.map_or("unbounded".to_string(), |m| format!("{m:.16e}"))),
            format!("declared.c_g={:.16e}", d.c_g),
            format!("declared.l_g={:.16e}", d.l_g),
            format!("declared.l_sigma={:.16e}", d.l_sigma),
            format!("declared.c_b={:.16e}", d.c_b),
            format!("declared.l_b={:.16e}", d.l_b),
            format!("estimated.l_f={:.16e}", e.l_f),
            format!("estimated.sup_f={:.16e}", e.sup_f),
            format!("estimated.c_g={:.16e}", e.c_g),
            format!("estimated.l_g={:.16e}", e.l_g),
            format!("estimated.l_sigma={:.16e}", e.l_sigma),
            format!("estimated.c_b={:.16e}", e.c_b),
            format!("estimated.l_b={:.16e}", e.l_b),
            format!("violations={}", self.violations.len()),
        ];
        for v in &self.violations {
            lines.push(format!("violation.{}.{}={:.16e} > {:.16e}", v.assumption, v.constant, v.estimated, v.declared));
        }
        lines
    }
}

/// Relative slack allowed between a declared constant and its estimate.
pub const PROBE_TOLERANCE: f64 = 0.05;

fn q_norm(lambda: &[f64], m: &[f64]) -> f64 {
    lambda.iter().zip(m).map(|(l, mi)| l * mi * mi).sum::<f64>().sqrt()
}

/// Check the declared constants against random secant quotients and
/// compute `κ`. Probe points have i.i.d. `N(0, s²)` coefficients with a
/// scale `s` drawn log-uniformly in `[0.1, 10]`; perturbation sizes are
/// log-uniform in `[1e-4, 1]`.
pub fn validate_assumptions(
    coeffs: &CoefficientSet,
    basis: &Basis,
    noise: &NoiseSpec,
    probes: usize,
    stream: &mut NoiseStream,
) -> Result<AssumptionReport> {
    let n = basis.n_modes();
    noise.check_modes(n)?;
    let probes = probes.max(1);
    let maps = &coeffs.maps;
    let mut est = EstimatedConstants::default();

    let draw = |stream: &mut NoiseStream, scale: f64| -> Vec<f64> {
        (0..n).map(|_| scale * stream.standard_normal()).collect()
    };
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..probes {
        let s = 10f64.powf(2.0 * stream.uniform() - 1.0);
        let x = draw(stream, s);
        let y = draw(stream, s);
        let mut h = draw(stream, 1.0);
        let hn = norm_sq(&h).sqrt();
        let size = 10f64.powf(-4.0 * stream.uniform());
        h.iter_mut().for_each(|c| *c *= size / hn);
        let hnorm = norm_sq(&h).sqrt();
        let xh: Vec<f64> = x.iter().zip(&h).map(|(u, v)| u + v).collect();
        let yh: Vec<f64> = y.iter().zip(&h).map(|(u, v)| u + v).collect();
        let diff =
            |p: &[f64], q: &[f64]| -> f64 { p.iter().zip(q).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt() };

        maps.slow_drift(&x, &y, &mut a);
        est.sup_f = est.sup_f.max(norm_sq(&a).sqrt());
        maps.slow_drift(&xh, &y, &mut b);
        est.l_f = est.l_f.max(diff(&a, &b) / hnorm);
        maps.slow_drift(&x, &yh, &mut b);
        est.l_f = est.l_f.max(diff(&a, &b) / hnorm);

        maps.fast_drift(&x, &y, &mut a);
        maps.fast_drift(&xh, &y, &mut b);
        est.c_g = est.c_g.max(diff(&a, &b) / hnorm);
        maps.fast_drift(&x, &yh, &mut b);
        est.l_g = est.l_g.max(diff(&a, &b) / hnorm);

        maps.slow_diffusion(&x, &mut a);
        maps.slow_diffusion(&xh, &mut b);
        let d: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u - v).collect();
        est.l_sigma = est.l_sigma.max(q_norm(&noise.lambda1, &d) / hnorm);

        maps.fast_diffusion(&x, &y, &mut a);
        maps.fast_diffusion(&xh, &y, &mut b);
        let d: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u - v).collect();
        est.c_b = est.c_b.max(q_norm(&noise.lambda2, &d) / hnorm);
        maps.fast_diffusion(&x, &yh, &mut b);
        let d: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u - v).collect();
        est.l_b = est.l_b.max(q_norm(&noise.lambda2, &d) / hnorm);
    }

    let decl = coeffs.constants;
    let mut violations = Vec::new();
    let mut check = |assumption, constant, declared: f64, estimated: f64| {
        if estimated > declared * (1.0 + PROBE_TOLERANCE) + 1e-12 {
            violations.push(Violation { assumption, constant, declared, estimated });
        }
    };
    check("slow_drift", "l_f", decl.l_f, est.l_f);
    if let Some(m) = decl.m_f {
        check("slow_drift", "m_f", m, est.sup_f);
    }
    check("slow_diffusion", "l_sigma", decl.l_sigma, est.l_sigma);
    check("fast_drift", "c_g", decl.c_g, est.c_g);
    check("fast_drift", "l_g", decl.l_g, est.l_g);
    check("fast_diffusion", "c_b", decl.c_b, est.c_b);
    check("fast_diffusion", "l_b", decl.l_b, est.l_b);

    let kappa = coeffs.kappa(basis.length());
    Ok(AssumptionReport { kappa, fatal: !(kappa > 0.0), declared: decl, estimated: est, violations })
}
