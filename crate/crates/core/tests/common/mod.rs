#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use slowfast_core::*;

pub fn basis(n: usize) -> Arc<Basis> {
    Arc::new(Basis::new(n, PI).unwrap())
}

pub fn fixture(name: &str, params: &[(&str, f64)], basis: &Arc<Basis>) -> (CoefficientSet, NoiseSpec) {
    let noise = make_noise_spec(&SpectrumFamily::default(), basis.n_modes()).unwrap();
    let c = make_fixture(&FixtureSpec::new(name, params), basis, &noise).unwrap();
    (c, noise)
}

/// `X₀ = e₁`, `Ẋ₀ = 0`, `Y₀ = 0` on `(0, π)`.
pub fn system(name: &str, params: &[(&str, f64)], n: usize, epsilon: f64, horizon: f64, dt: f64) -> SystemConfig {
    let basis = basis(n);
    let (coefficients, noise) = fixture(name, params, &basis);
    let mut initial = InitialData::zero(&basis);
    initial.position = SpectralField::single_mode(1, 1.0, n, PI).unwrap();
    SystemConfig { basis, coefficients, noise, epsilon, horizon, dt, initial, scheme: SchemeOptions::default() }
}

pub fn frozen(name: &str, params: &[(&str, f64)], n: usize) -> FrozenSystem {
    let basis = basis(n);
    let (c, noise) = fixture(name, params, &basis);
    FrozenSystem::new(basis, c, noise).unwrap()
}

pub fn mode(k: usize, v: f64, n: usize) -> SpectralField {
    SpectralField::single_mode(k, v, n, PI).unwrap()
}

pub fn drift_stream(seed: u64, point: u64) -> NoiseStream {
    NoiseStream::new(seed, StreamId::new(point, 0, Channel::Drift))
}

pub fn mean(v: &[f64]) -> f64 {
    stats::pairwise_sum(v) / v.len() as f64
}
