//! The averaged wave equation `∂²X̄ = ΔX̄ + f̄(X̄) + σ(X̄)Ẇ¹` with a
//! pluggable provider for `f̄`.

use std::collections::HashMap;
use std::fmt;

use parking_lot::RwLock;

use crate::coupled::SystemConfig;
use crate::error::{Error, Result};
use crate::frozen::{closed_form_avg_drift, estimate_avg_drift, AvgDriftMethod, FrozenSystem};
use crate::kernels::{all_finite, WaveKernel};
use crate::model::CoefficientSet;
use crate::noise::{BrownianPath, Channel, NoiseStream, StreamId};
use crate::spectral::{norm_sq, SpectralField, WaveState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftSource {
    ClosedForm,
    MonteCarlo(AvgDriftMethod),
    Custom,
}

/// Supplies `f̄(x)` to the averaged integrator.
pub trait DriftProvider: Send + Sync {
    fn drift(&self, x: &[f64], out: &mut [f64]) -> Result<()>;
    fn source(&self) -> DriftSource;
}

/// Exact averaged drift of the linear Ornstein–Uhlenbeck fixture.
#[derive(Debug, Clone)]
pub struct ClosedFormDrift {
    coefficients: CoefficientSet,
    length: f64,
}

impl ClosedFormDrift {
    pub fn new(coefficients: CoefficientSet, length: f64) -> Result<Self> {
        if coefficients.linear_ou().is_none() {
            return Err(Error::Usage(format!("no closed-form averaged drift for fixture {}", coefficients.name)));
        }
        Ok(Self { coefficients, length })
    }
}

impl DriftProvider for ClosedFormDrift {
    fn drift(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let field = SpectralField::from_raw(x.to_vec(), self.length);
        out.copy_from_slice(closed_form_avg_drift(&field, &self.coefficients)?.coeffs());
        Ok(())
    }

    fn source(&self) -> DriftSource {
        DriftSource::ClosedForm
    }
}

/// Resolution of the memo key, per mode.
pub const MEMO_RESOLUTION: f64 = 1e-6;

/// Monte Carlo `f̄` with a memo on quantized `x`.
///
/// Each evaluation runs at the quantized point with a stream labelled by
/// that point on the drift channel, so a value does not depend on call order,
/// on the cache, or on the slow and fast driving noises.
pub struct MonteCarloDrift {
    system: FrozenSystem,
    method: AvgDriftMethod,
    seed: u64,
    /// Reject estimates with `stderr > rel·‖value‖ + abs`.
    quality: Option<(f64, f64)>,
    memo: RwLock<HashMap<Vec<i64>, Vec<f64>>>,
}

impl fmt::Debug for MonteCarloDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MonteCarloDrift")
            .field("method", &self.method)
            .field("seed", &self.seed)
            .field("quality", &self.quality)
            .field("cached", &self.memo.read().len())
            .finish()
    }
}

impl MonteCarloDrift {
    pub fn new(system: FrozenSystem, method: AvgDriftMethod, seed: u64) -> Self {
        Self { system, method, seed, quality: Some((0.05, 1e-4)), memo: RwLock::new(HashMap::new()) }
    }

    /// Replace the acceptance threshold; `None` accepts every estimate.
    pub fn with_quality(mut self, quality: Option<(f64, f64)>) -> Self {
        self.quality = quality;
        self
    }

    pub fn cached(&self) -> usize {
        self.memo.read().len()
    }

    fn key(x: &[f64]) -> Vec<i64> {
        x.iter().map(|v| (v / MEMO_RESOLUTION).round() as i64).collect()
    }

    fn key_stream(&self, key: &[i64]) -> NoiseStream {
        // FNV-1a over the key bytes: stable across platforms and releases
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in key.iter().flat_map(|k| k.to_le_bytes()) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        NoiseStream::new(self.seed, StreamId::new(h, 0, Channel::Drift))
    }
}

impl DriftProvider for MonteCarloDrift {
    fn drift(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let key = Self::key(x);
        if let Some(v) = self.memo.read().get(&key) {
            out.copy_from_slice(v);
            return Ok(());
        }
        let point: Vec<f64> = key.iter().map(|k| *k as f64 * MEMO_RESOLUTION).collect();
        let field = SpectralField::from_raw(point, self.system.basis.length());
        let est = estimate_avg_drift(&self.system, &field, self.method, self.key_stream(&key))?;
        if let Some((rel, abs)) = self.quality {
            let limit = rel * est.value.norm() + abs;
            if est.stderr > limit {
                return Err(Error::Estimation(format!(
                    "averaged drift stderr {:.3e} exceeds {:.3e}",
                    est.stderr, limit
                )));
            }
        }
        out.copy_from_slice(est.value.coeffs());
        self.memo.write().insert(key, est.value.into_coeffs());
        Ok(())
    }

    fn source(&self) -> DriftSource {
        DriftSource::MonteCarlo(self.method)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedSample {
    pub step: usize,
    pub time: f64,
    pub slow: WaveState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedRun {
    pub trajectory: Vec<AveragedSample>,
    pub drift_source: DriftSource,
    /// Label of the `W¹` stream that drove the run.
    pub shared_noise_id: StreamId,
}

/// Integrate the averaged equation with the slow step of the full solver.
/// `ε` and the fast initial datum of `cfg` are ignored.
pub fn integrate_averaged(cfg: &SystemConfig, provider: &dyn DriftProvider, w1: NoiseStream) -> Result<AveragedRun> {
    integrate_averaged_path(cfg, provider, &mut BrownianPath::new(w1))
}

/// As [`integrate_averaged`], for an explicitly constructed Brownian path.
pub fn integrate_averaged_path(
    cfg: &SystemConfig,
    provider: &dyn DriftProvider,
    w1: &mut BrownianPath,
) -> Result<AveragedRun> {
    if w1.id().channel != Channel::Slow {
        return Err(Error::config("the averaged equation is driven by the slow W1 stream"));
    }
    cfg.validate()?;
    let n_steps = cfg.n_steps()?;
    let n = cfg.basis.n_modes();
    let length = cfg.basis.length();
    let wave = WaveKernel::new(&cfg.basis, cfg.dt, cfg.scheme.exact_variance);
    let maps = &cfg.coefficients.maps;
    let stride = cfg.scheme.stride.max(1);
    let mut x = cfg.initial.position.coeffs().to_vec();
    let mut v = cfg.initial.velocity.coeffs().to_vec();
    let (mut drift, mut sigma, mut dw) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let sample = |step: usize, x: &[f64], v: &[f64]| AveragedSample {
        step,
        time: step as f64 * cfg.dt,
        slow: WaveState {
            position: SpectralField::from_raw(x.to_vec(), length),
            velocity: SpectralField::from_raw(v.to_vec(), length),
        },
    };
    let mut trajectory = vec![sample(0, &x, &v)];
    for step in 1..=n_steps {
        w1.next(&cfg.noise.lambda1, cfg.dt, &mut dw);
        provider.drift(&x, &mut drift)?;
        maps.slow_diffusion(&x, &mut sigma);
        wave.step(&mut x, &mut v, &drift, &sigma, &dw, None);
        if !all_finite(&[&x, &v]) {
            return Err(Error::Blowup { step, time: step as f64 * cfg.dt });
        }
        if step % stride == 0 || step == n_steps {
            trajectory.push(sample(step, &x, &v));
        }
    }
    Ok(AveragedRun { trajectory, drift_source: provider.source(), shared_noise_id: w1.id() })
}

/// `‖X − X̄‖₁² + ‖Ẋ − X̄̇‖²` between two slow states.
pub fn slow_error(a: &WaveState, b: &WaveState) -> f64 {
    let length = a.position.domain_length();
    let dx: Vec<f64> = a.position.coeffs().iter().zip(b.position.coeffs()).map(|(p, q)| p - q).collect();
    let dv: Vec<f64> = a.velocity.coeffs().iter().zip(b.velocity.coeffs()).map(|(p, q)| p - q).collect();
    crate::spectral::sobolev_norm_sq(&dx, length, 1.0) + norm_sq(&dv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupled::{InitialData, SchemeOptions};
    use crate::model::{make_fixture, FixtureSpec};
    use crate::noise::{make_noise_spec, SpectrumFamily, StreamFactory};
    use crate::spectral::Basis;
    use std::f64::consts::PI;
    use std::sync::Arc;

    #[derive(Debug)]
    struct NoDrift;
    impl DriftProvider for NoDrift {
        fn drift(&self, _: &[f64], out: &mut [f64]) -> Result<()> {
            out.fill(0.0);
            Ok(())
        }
        fn source(&self) -> DriftSource {
            DriftSource::Custom
        }
    }

    fn config(fixture: &str, params: &[(&str, f64)]) -> SystemConfig {
        let basis = Arc::new(Basis::new(4, PI).unwrap());
        let noise = make_noise_spec(&SpectrumFamily::default(), 4).unwrap();
        let coefficients = make_fixture(&FixtureSpec::new(fixture, params), &basis, &noise).unwrap();
        let mut initial = InitialData::zero(&basis);
        initial.position = basis.field(vec![1.0, 0.5, 0.0, 0.0]).unwrap();
        SystemConfig {
            basis,
            coefficients,
            noise,
            epsilon: 0.1,
            horizon: 1.0,
            dt: 0.01,
            initial,
            scheme: SchemeOptions::default(),
        }
    }

    #[test]
    fn zero_drift_zero_noise_conserves_energy() {
        let cfg = config("linear_ou", &[("sigma1", 0.0)]);
        let run = integrate_averaged(&cfg, &NoDrift, StreamFactory::new(1).pair(0, 0).0).unwrap();
        let e0 = run.trajectory[0].slow.energy();
        for s in &run.trajectory {
            assert!((s.slow.energy() - e0).abs() <= 1e-12 * e0);
        }
        assert_eq!(run.drift_source, DriftSource::Custom);
    }

    #[test]
    fn shared_noise_label_and_bit_identity() {
        let cfg = config("linear_ou", &[]);
        let cf = ClosedFormDrift::new(cfg.coefficients.clone(), PI).unwrap();
        let (w1, w2) = StreamFactory::new(5).pair(3, 7);
        let a = integrate_averaged(&cfg, &cf, w1.clone()).unwrap();
        let b = integrate_averaged(&cfg, &cf, w1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shared_noise_id, StreamId::new(3, 7, Channel::Slow));
        assert!(matches!(integrate_averaged(&cfg, &cf, w2), Err(Error::Config(_))));
    }

    #[test]
    fn closed_form_requires_ou() {
        let cfg = config("bounded_nonlinear", &[]);
        assert!(matches!(ClosedFormDrift::new(cfg.coefficients, PI), Err(Error::Usage(_))));
    }

    #[test]
    fn memo_is_transparent_and_quality_gate_fires() {
        let cfg = config("linear_ou", &[]);
        let sys = FrozenSystem::new(cfg.basis.clone(), cfg.coefficients.clone(), cfg.noise.clone()).unwrap();
        let method = AvgDriftMethod::Ensemble { replicas: 16, terminal_time: 2.0, dt: 0.05 };
        let mc = MonteCarloDrift::new(sys.clone(), method, 1).with_quality(None);
        let x = [0.3, 0.0, -0.1, 0.0];
        let (mut a, mut b) = ([0.0; 4], [0.0; 4]);
        mc.drift(&x, &mut a).unwrap();
        mc.drift(&[0.3 + 1e-9, 0.0, -0.1, 0.0], &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(mc.cached(), 1);
        let fresh = MonteCarloDrift::new(sys.clone(), method, 1).with_quality(None);
        fresh.drift(&x, &mut b).unwrap();
        assert_eq!(a, b);
        let strict = MonteCarloDrift::new(sys, method, 1);
        assert!(matches!(strict.drift(&x, &mut b), Err(Error::Estimation(_))));
    }
}
