//! Dirichlet sine eigenbasis on `(0, L)`.
//!
//! A field is stored by its coefficients `u_k` against the orthonormal
//! eigenfunctions `e_k(ξ) = √(2/L) sin(kπξ/L)` of `-Δ`, with eigenvalues
//! `α_k = (kπ/L)²`. Every linear operator used by the integrators (heat
//! semigroup, wave propagator, Sobolev scaling) is diagonal in this basis.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Eigenvalue `α_k = (kπ/L)²` of the Dirichlet Laplacian.
pub fn eigenvalue(k: usize, length: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("mode index must be >= 1"));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::domain(format!("domain length must be positive, got {length}")));
    }
    Ok(alpha(k, length))
}

#[inline]
pub(crate) fn alpha(k: usize, length: f64) -> f64 {
    let w = k as f64 * PI / length;
    w * w
}

/// Uniform interior collocation grid `ξ_j = jL/(N+1)`, `j = 1..N`.
pub fn collocation_grid(n_modes: usize, length: f64) -> Vec<f64> {
    let h = length / (n_modes as f64 + 1.0);
    (1..=n_modes).map(|j| j as f64 * h).collect()
}

/// Coefficients of a field in the first `N` sine modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    coeffs: Vec<f64>,
    length: f64,
}

impl SpectralField {
    pub fn new(coeffs: Vec<f64>, length: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::domain("a field needs at least one mode"));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::domain(format!("domain length must be positive, got {length}")));
        }
        if let Some(k) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::domain(format!("coefficient of mode {} is not finite", k + 1)));
        }
        Ok(Self { coeffs, length })
    }

    pub fn zeros(n_modes: usize, length: f64) -> Result<Self> {
        Self::new(vec![0.0; n_modes], length)
    }

    /// Field with a single nonzero coefficient at mode `k` (1-based).
    pub fn single_mode(k: usize, value: f64, n_modes: usize, length: f64) -> Result<Self> {
        if k == 0 || k > n_modes {
            return Err(Error::domain(format!("mode {k} outside 1..={n_modes}")));
        }
        let mut coeffs = vec![0.0; n_modes];
        coeffs[k - 1] = value;
        Self::new(coeffs, length)
    }

    /// Build from leading coefficients, zero-padding to `n_modes`.
    pub fn from_leading(leading: &[f64], n_modes: usize, length: f64) -> Result<Self> {
        if leading.len() > n_modes {
            return Err(Error::config(format!("{} coefficients given for a {}-mode basis", leading.len(), n_modes)));
        }
        let mut coeffs = vec![0.0; n_modes];
        coeffs[..leading.len()].copy_from_slice(leading);
        Self::new(coeffs, length)
    }

    pub(crate) fn from_raw(coeffs: Vec<f64>, length: f64) -> Self {
        debug_assert!(!coeffs.is_empty());
        Self { coeffs, length }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn domain_length(&self) -> f64 {
        self.length
    }

    pub fn same_basis(&self, other: &Self) -> bool {
        self.n_modes() == other.n_modes() && self.length == other.length
    }

    /// `‖u‖_s = (Σ α_k^s u_k²)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        sobolev_norm_sq(&self.coeffs, self.length, s).sqrt()
    }

    /// Plain `L²` norm, equal to the Euclidean norm of the coefficients.
    pub fn norm(&self) -> f64 {
        norm_sq(&self.coeffs).sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.coeffs, &other.coeffs)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if !self.same_basis(other) {
            return Err(Error::domain("fields live on different bases"));
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(Self::from_raw(coeffs, self.length))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_raw(self.coeffs.iter().map(|c| c * factor).collect(), self.length)
    }

    /// Heat semigroup `G_t`: mode-wise multiplication by `e^{-α_k t}`.
    pub fn apply_heat_semigroup(&self, t: f64) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(Error::domain(format!("heat semigroup needs t >= 0, got {t}")));
        }
        let coeffs = self.coeffs.iter().enumerate().map(|(i, c)| c * (-alpha(i + 1, self.length) * t).exp()).collect();
        Ok(Self::from_raw(coeffs, self.length))
    }

    /// Point values `Σ_k u_k e_k(ξ)` at arbitrary points of `(0, L]`.
    pub fn evaluate(&self, grid: &[f64]) -> Result<Vec<f64>> {
        let scale = (2.0 / self.length).sqrt();
        grid.iter()
            .map(|&xi| {
                if !(xi > 0.0 && xi <= self.length) {
                    return Err(Error::domain(format!("evaluation point {xi} outside (0, {}]", self.length)));
                }
                let theta = PI * xi / self.length;
                Ok(scale * self.coeffs.iter().enumerate().map(|(i, c)| c * ((i + 1) as f64 * theta).sin()).sum::<f64>())
            })
            .collect()
    }

    /// Inverse of [`evaluate`](Self::evaluate) on the collocation grid of
    /// size `samples.len()` (discrete sine transform).
    pub fn project(samples: &[f64], length: f64) -> Result<Self> {
        let basis = Basis::new(samples.len(), length)?;
        Ok(basis.project_field(samples))
    }
}

pub(crate) fn norm_sq(u: &[f64]) -> f64 {
    u.iter().map(|c| c * c).sum()
}

pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub(crate) fn sobolev_norm_sq(u: &[f64], length: f64, s: f64) -> f64 {
    u.iter().enumerate().map(|(i, c)| alpha(i + 1, length).powf(s) * c * c).sum()
}

/// Precomputed tables for one truncation level `(L, N)`.
#[derive(Debug, Clone)]
pub struct Basis {
    length: f64,
    alpha: Vec<f64>,
    omega: Vec<f64>,
    // e_k(ξ_j), row-major by mode
    modes_on_grid: Vec<f64>,
}

impl Basis {
    pub fn new(n_modes: usize, length: f64) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::domain("basis needs at least one mode"));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::domain(format!("domain length must be positive, got {length}")));
        }
        let alpha: Vec<f64> = (1..=n_modes).map(|k| alpha(k, length)).collect();
        let omega = alpha.iter().map(|a| a.sqrt()).collect();
        let scale = (2.0 / length).sqrt();
        let denom = n_modes as f64 + 1.0;
        let mut modes_on_grid = Vec::with_capacity(n_modes * n_modes);
        for k in 1..=n_modes {
            for j in 1..=n_modes {
                modes_on_grid.push(scale * (PI * (k * j) as f64 / denom).sin());
            }
        }
        Ok(Self { length, alpha, omega, modes_on_grid })
    }

    pub fn n_modes(&self) -> usize {
        self.alpha.len()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// `α_k` for `k = 1..N`.
    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    /// Wave frequencies `ω_k = √α_k`.
    pub fn omegas(&self) -> &[f64] {
        &self.omega
    }

    pub fn grid(&self) -> Vec<f64> {
        collocation_grid(self.n_modes(), self.length)
    }

    pub fn zeros(&self) -> SpectralField {
        SpectralField::from_raw(vec![0.0; self.n_modes()], self.length)
    }

    pub fn field(&self, coeffs: Vec<f64>) -> Result<SpectralField> {
        if coeffs.len() != self.n_modes() {
            return Err(Error::config(format!("expected {} coefficients, got {}", self.n_modes(), coeffs.len())));
        }
        SpectralField::new(coeffs, self.length)
    }

    /// Coefficients to collocation-grid samples.
    pub fn synthesize(&self, coeffs: &[f64], out: &mut [f64]) {
        let n = self.n_modes();
        out.iter_mut().for_each(|v| *v = 0.0);
        for (k, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let row = &self.modes_on_grid[k * n..(k + 1) * n];
            for (o, e) in out.iter_mut().zip(row) {
                *o += c * e;
            }
        }
    }

    /// Collocation-grid samples to coefficients; exact inverse of
    /// [`synthesize`](Self::synthesize).
    pub fn project(&self, samples: &[f64], out: &mut [f64]) {
        let n = self.n_modes();
        let w = self.length / (n as f64 + 1.0);
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.modes_on_grid[k * n..(k + 1) * n];
            *o = w * dot(row, samples);
        }
    }

    pub fn project_field(&self, samples: &[f64]) -> SpectralField {
        let mut out = vec![0.0; self.n_modes()];
        self.project(samples, &mut out);
        SpectralField::from_raw(out, self.length)
    }

    pub(crate) fn sobolev_norm_sq(&self, u: &[f64], s: f64) -> f64 {
        if s == 0.0 {
            return norm_sq(u);
        }
        if s == 1.0 {
            return u.iter().zip(&self.alpha).map(|(c, a)| a * c * c).sum();
        }
        u.iter().zip(&self.alpha).map(|(c, a)| a.powf(s) * c * c).sum()
    }
}

/// Displacement and velocity of the slow wave component.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub position: SpectralField,
    pub velocity: SpectralField,
}

impl WaveState {
    pub fn new(position: SpectralField, velocity: SpectralField) -> Result<Self> {
        if !position.same_basis(&velocity) {
            return Err(Error::domain("position and velocity live on different bases"));
        }
        Ok(Self { position, velocity })
    }

    pub fn at_rest(position: SpectralField) -> Self {
        let velocity = SpectralField::from_raw(vec![0.0; position.n_modes()], position.length);
        Self { position, velocity }
    }

    /// `‖Ẋ‖² + ‖X‖₁²`.
    pub fn energy(&self) -> f64 {
        self.velocity.norm().powi(2) + self.position.sobolev_norm(1.0).powi(2)
    }

    /// Homogeneous wave flow `S'_t X₀ + S_t Ẋ₀` and its time derivative.
    pub fn apply_wave_propagator(&self, t: f64) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(Error::domain(format!("wave propagator needs t >= 0, got {t}")));
        }
        Ok(self.rotate(t))
    }

    /// Per-mode rotation by `ω_k t`; negative `t` gives the inverse flow.
    pub fn rotate(&self, t: f64) -> Self {
        let length = self.position.length;
        let n = self.position.n_modes();
        let mut x = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            let w = alpha(i + 1, length).sqrt();
            let (s, c) = (w * t).sin_cos();
            let (x0, v0) = (self.position.coeffs[i], self.velocity.coeffs[i]);
            x.push(c * x0 + s / w * v0);
            v.push(-w * s * x0 + c * v0);
        }
        Self { position: SpectralField::from_raw(x, length), velocity: SpectralField::from_raw(v, length) }
    }
}
