//! Per-mode exponential-integrator kernels shared by every time stepper.

use crate::spectral::Basis;

/// Running sums of the discretized energy identities.
///
/// The stochastic correction terms use the realized quadratic variation
/// `Σ m_k² ΔW_k²` of the stored increments. On the heat side every term is
/// weighted by the exact linear flow over the step (`e^{−α_k h}` and its
/// integrals), which keeps the quadrature consistent for stiff modes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyLedger {
    /// Initial energy `‖Ẋ₀‖² + ‖X₀‖₁²`.
    pub slow_initial: f64,
    /// Accumulated right-hand side increments of the slow identity.
    pub slow_rhs: f64,
    /// Accumulated absolute sizes of those increments.
    pub slow_scale: f64,
    pub fast_initial: f64,
    pub fast_rhs: f64,
    pub fast_scale: f64,
}

/// Exact rotation of the wave modes over one macro step, with the forcing
/// kernel frozen at the left endpoint.
#[derive(Debug, Clone)]
pub(crate) struct WaveKernel {
    dt: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
    omega: Vec<f64>,
    // √(∫₀^dt (sin ωs/ω)² ds / dt) and √(∫₀^dt cos² ωs ds / dt)
    exact: Option<(Vec<f64>, Vec<f64>)>,
}

impl WaveKernel {
    pub fn new(basis: &Basis, dt: f64, exact_variance: bool) -> Self {
        let omega = basis.omegas().to_vec();
        let cos = omega.iter().map(|w| (w * dt).cos()).collect();
        let sin = omega.iter().map(|w| (w * dt).sin()).collect();
        let exact = exact_variance.then(|| {
            let px =
                omega.iter().map(|w| ((dt / 2.0 - (2.0 * w * dt).sin() / (4.0 * w)) / (w * w) / dt).sqrt()).collect();
            let pv = omega.iter().map(|w| ((dt / 2.0 + (2.0 * w * dt).sin() / (4.0 * w)) / dt).sqrt()).collect();
            (px, pv)
        });
        Self { dt, cos, sin, omega, exact }
    }

    /// One step of `(x, v)` driven by drift `f` and noise `σ·ΔW`.
    pub fn step(
        &self,
        x: &mut [f64],
        v: &mut [f64],
        drift: &[f64],
        sigma: &[f64],
        dw: &[f64],
        ledger: Option<&mut EnergyLedger>,
    ) {
        let dt = self.dt;
        if let Some(led) = ledger {
            for k in 0..x.len() {
                let jf = drift[k] * dt;
                let js = sigma[k] * dw[k];
                let terms = [2.0 * v[k] * jf, 2.0 * v[k] * js, js * js];
                led.slow_rhs += terms[0] + terms[1] + terms[2];
                led.slow_scale += terms[0].abs() + terms[1].abs() + terms[2];
            }
        }
        match &self.exact {
            None => {
                for k in 0..x.len() {
                    let (c, s, w) = (self.cos[k], self.sin[k], self.omega[k]);
                    let vj = v[k] + drift[k] * dt + sigma[k] * dw[k];
                    let x0 = x[k];
                    x[k] = c * x0 + s / w * vj;
                    v[k] = -w * s * x0 + c * vj;
                }
            }
            Some((px, pv)) => {
                for k in 0..x.len() {
                    let (c, s, w) = (self.cos[k], self.sin[k], self.omega[k]);
                    let vj = v[k] + drift[k] * dt;
                    let noise = sigma[k] * dw[k];
                    let x0 = x[k];
                    x[k] = c * x0 + s / w * vj + px[k] * noise;
                    v[k] = -w * s * x0 + c * vj + pv[k] * noise;
                }
            }
        }
    }
}

/// Exponential Euler for `dY = ε⁻¹(AY + g)dt + ε^{-1/2} b dW` over one
/// (sub)step of length `dt`. The noise uses the step's Brownian increment
/// rescaled so the stochastic convolution has its exact variance.
#[derive(Debug, Clone)]
pub(crate) struct HeatKernel {
    inv_sqrt_eps: f64,
    decay: Vec<f64>,
    gain: Vec<f64>,
    noise_gain: Vec<f64>,
}

impl HeatKernel {
    pub fn new(basis: &Basis, dt: f64, epsilon: f64) -> Self {
        let h = dt / epsilon;
        let alpha = basis.alphas();
        let decay = alpha.iter().map(|a| (-a * h).exp()).collect();
        let gain = alpha.iter().map(|a| -(-a * h).exp_m1() / a).collect();
        let noise_gain = alpha.iter().map(|a| (-(-2.0 * a * h).exp_m1() / (2.0 * a * h)).sqrt()).collect();
        Self { inv_sqrt_eps: 1.0 / epsilon.sqrt(), decay, gain, noise_gain }
    }

    pub fn step(&self, y: &mut [f64], drift: &[f64], diffusion: &[f64], dw: &[f64], ledger: Option<&mut EnergyLedger>) {
        if let Some(led) = ledger {
            for k in 0..y.len() {
                let a = self.decay[k];
                let kick = diffusion[k] * dw[k] * self.inv_sqrt_eps;
                let q = self.noise_gain[k];
                let terms = [
                    -(1.0 - a * a) * y[k] * y[k],
                    2.0 * a * self.gain[k] * y[k] * drift[k],
                    2.0 * a * q * y[k] * kick,
                    q * q * kick * kick,
                ];
                led.fast_rhs += terms.iter().sum::<f64>();
                led.fast_scale += terms.iter().map(|t| t.abs()).sum::<f64>();
            }
        }
        for k in 0..y.len() {
            y[k] = self.decay[k] * y[k]
                + self.gain[k] * drift[k]
                + self.noise_gain[k] * diffusion[k] * dw[k] * self.inv_sqrt_eps;
        }
    }
}

pub(crate) fn all_finite(parts: &[&[f64]]) -> bool {
    parts.iter().all(|p| p.iter().all(|v| v.is_finite()))
}
