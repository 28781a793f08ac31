//! Time integration of the full slow-fast system and of the auxiliary
//! (frozen-on-δ-blocks) system driven by the same noise.
//!
//! Each macro step of length `dt`:
//! 1. the wave modes rotate exactly and receive the kick `f(X_n, Y_n)dt + σ(X_n)ΔW¹`;
//! 2. the heat modes take `n_sub` exponential-Euler substeps of length
//!    `dt/n_sub ≤ c_fast·ε` with the slow state frozen at `X_n`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernels::{all_finite, HeatKernel, WaveKernel};
use crate::model::CoefficientSet;
use crate::noise::{BrownianPath, Channel, NoiseSpec, NoiseStream};
use crate::spectral::{Basis, SpectralField, WaveState};

pub use crate::kernels::EnergyLedger;

#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub position: SpectralField,
    pub velocity: SpectralField,
    pub fast: SpectralField,
}

impl InitialData {
    pub fn zero(basis: &Basis) -> Self {
        Self { position: basis.zeros(), velocity: basis.zeros(), fast: basis.zeros() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeOptions {
    /// Fast substeps satisfy `dt_fast ≤ c_fast·ε`.
    pub c_fast: f64,
    /// Match the exact per-step variance of the wave stochastic convolution
    /// instead of freezing its kernel at the left endpoint.
    pub exact_variance: bool,
    /// Keep every `stride`-th macro step (the final step is always kept).
    pub stride: usize,
    /// Accumulate the energy-identity ledgers.
    pub record_energy: bool,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self { c_fast: 0.1, exact_variance: false, stride: 1, record_energy: false }
    }
}

#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub basis: Arc<Basis>,
    pub coefficients: CoefficientSet,
    pub noise: NoiseSpec,
    pub epsilon: f64,
    pub horizon: f64,
    pub dt: f64,
    pub initial: InitialData,
    pub scheme: SchemeOptions,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.basis.n_modes();
        self.noise.check_modes(n)?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon && self.horizon.is_finite()) {
            return Err(Error::config(format!(
                "need 0 < dt <= horizon, got dt = {}, horizon = {}",
                self.dt, self.horizon
            )));
        }
        self.n_steps()?;
        if !(self.scheme.c_fast > 0.0) {
            return Err(Error::config("c_fast must be positive"));
        }
        let init = &self.initial;
        for (name, f) in [("position", &init.position), ("velocity", &init.velocity), ("fast", &init.fast)] {
            if f.n_modes() != n || f.domain_length() != self.basis.length() {
                return Err(Error::config(format!("initial {name} does not match the basis")));
            }
        }
        Ok(())
    }

    /// Number of macro steps; `horizon/dt` must be an integer.
    pub fn n_steps(&self) -> Result<usize> {
        let ratio = self.horizon / self.dt;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::config(format!(
                "horizon {} is not an integer multiple of dt {}",
                self.horizon, self.dt
            )));
        }
        Ok(n as usize)
    }

    /// Fast substeps per macro step.
    pub fn fast_substeps(&self) -> usize {
        let ratio = self.dt / (self.scheme.c_fast * self.epsilon);
        // tolerate rounding when dt is exactly c_fast·ε
        (ratio * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    pub fn fast_dt(&self) -> f64 {
        self.dt / self.fast_substeps() as f64
    }
}

/// Snapshot of a trajectory at a macro grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub step: usize,
    pub time: f64,
    pub slow: WaveState,
    pub fast: SpectralField,
    pub diagnostics: Option<EnergyLedger>,
}

/// Full and auxiliary trajectories computed from one set of increments.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryRun {
    pub full: Vec<TrajectorySample>,
    pub auxiliary: Vec<TrajectorySample>,
}

fn check_stream_pair(w1: &NoiseStream, w2: &NoiseStream) -> Result<()> {
    let (a, b) = (w1.id(), w2.id());
    if a.channel != Channel::Slow || b.channel != Channel::Fast {
        return Err(Error::config("streams must be (slow W1, fast W2)"));
    }
    if (a.point, a.replica) != (b.point, b.replica) || w1.seed() != w2.seed() {
        return Err(Error::config("W1 and W2 streams belong to different replicas"));
    }
    Ok(())
}

/// Mutable state of one slow-fast pair.
#[derive(Debug, Clone)]
struct PairState {
    x: Vec<f64>,
    v: Vec<f64>,
    y: Vec<f64>,
    ledger: EnergyLedger,
}

impl PairState {
    fn new(init: &InitialData, basis: &Basis) -> Self {
        let x = init.position.coeffs().to_vec();
        let v = init.velocity.coeffs().to_vec();
        let y = init.fast.coeffs().to_vec();
        let ledger = EnergyLedger {
            slow_initial: basis.sobolev_norm_sq(&v, 0.0) + basis.sobolev_norm_sq(&x, 1.0),
            fast_initial: basis.sobolev_norm_sq(&y, 0.0),
            ..Default::default()
        };
        Self { x, v, y, ledger }
    }

    fn sample(&self, step: usize, time: f64, length: f64, record: bool) -> TrajectorySample {
        TrajectorySample {
            step,
            time,
            slow: WaveState {
                position: SpectralField::from_raw(self.x.clone(), length),
                velocity: SpectralField::from_raw(self.v.clone(), length),
            },
            fast: SpectralField::from_raw(self.y.clone(), length),
            diagnostics: record.then_some(self.ledger),
        }
    }

    fn finite(&self) -> bool {
        all_finite(&[&self.x, &self.v, &self.y])
    }
}

struct Workspace {
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    dw1: Vec<f64>,
    dw2: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self { drift: vec![0.0; n], diffusion: vec![0.0; n], dw1: vec![0.0; n], dw2: vec![0.0; n] }
    }
}

pub(crate) struct Engine<'a> {
    cfg: &'a SystemConfig,
    wave: WaveKernel,
    heat: HeatKernel,
    n_sub: usize,
    dt_fast: f64,
}

impl<'a> Engine<'a> {
    pub fn new(cfg: &'a SystemConfig) -> Result<Self> {
        cfg.validate()?;
        let n_sub = cfg.fast_substeps();
        let dt_fast = cfg.dt / n_sub as f64;
        Ok(Self {
            cfg,
            wave: WaveKernel::new(&cfg.basis, cfg.dt, cfg.scheme.exact_variance),
            heat: HeatKernel::new(&cfg.basis, dt_fast, cfg.epsilon),
            n_sub,
            dt_fast,
        })
    }

    /// Slow step of `state` with the drift evaluated at `(x_frozen, state.y)`
    /// and diffusion at `x_frozen`.
    fn slow_step(&self, state: &mut PairState, x_frozen: &[f64], ws: &mut Workspace, record: bool) {
        let maps = &self.cfg.coefficients.maps;
        maps.slow_drift(x_frozen, &state.y, &mut ws.drift);
        maps.slow_diffusion(x_frozen, &mut ws.diffusion);
        let ledger = record.then_some(&mut state.ledger);
        self.wave.step(&mut state.x, &mut state.v, &ws.drift, &ws.diffusion, &ws.dw1, ledger);
    }

    fn fast_substep(&self, state: &mut PairState, x_frozen: &[f64], ws: &mut Workspace, record: bool) {
        let maps = &self.cfg.coefficients.maps;
        maps.fast_drift(x_frozen, &state.y, &mut ws.drift);
        maps.fast_diffusion(x_frozen, &state.y, &mut ws.diffusion);
        let ledger = record.then_some(&mut state.ledger);
        self.heat.step(&mut state.y, &ws.drift, &ws.diffusion, &ws.dw2, ledger);
    }

    fn keep(&self, step: usize, n_steps: usize) -> bool {
        step.is_multiple_of(self.cfg.scheme.stride.max(1)) || step == n_steps
    }

    pub fn run_full(&self, w1: &mut BrownianPath, w2: &mut BrownianPath) -> Result<Vec<TrajectorySample>> {
        let cfg = self.cfg;
        let n = cfg.basis.n_modes();
        let n_steps = cfg.n_steps()?;
        let record = cfg.scheme.record_energy;
        let length = cfg.basis.length();
        let mut ws = Workspace::new(n);
        let mut state = PairState::new(&cfg.initial, &cfg.basis);
        let mut x_frozen = vec![0.0; n];
        let mut out = vec![state.sample(0, 0.0, length, record)];
        for step in 1..=n_steps {
            x_frozen.copy_from_slice(&state.x);
            w1.next(&cfg.noise.lambda1, cfg.dt, &mut ws.dw1);
            self.slow_step(&mut state, &x_frozen, &mut ws, record);
            for _ in 0..self.n_sub {
                w2.next(&cfg.noise.lambda2, self.dt_fast, &mut ws.dw2);
                self.fast_substep(&mut state, &x_frozen, &mut ws, record);
            }
            if !state.finite() {
                return Err(Error::Blowup { step, time: step as f64 * cfg.dt });
            }
            if self.keep(step, n_steps) {
                out.push(state.sample(step, step as f64 * cfg.dt, length, record));
            }
        }
        Ok(out)
    }

    pub fn run_auxiliary(&self, block: usize, w1: &mut BrownianPath, w2: &mut BrownianPath) -> Result<AuxiliaryRun> {
        let cfg = self.cfg;
        let n = cfg.basis.n_modes();
        let n_steps = cfg.n_steps()?;
        let record = cfg.scheme.record_energy;
        let length = cfg.basis.length();
        let mut ws = Workspace::new(n);
        let mut full = PairState::new(&cfg.initial, &cfg.basis);
        let mut aux = full.clone();
        let mut x_step = vec![0.0; n];
        let mut x_block = vec![0.0; n];
        let mut run = AuxiliaryRun {
            full: vec![full.sample(0, 0.0, length, record)],
            auxiliary: vec![aux.sample(0, 0.0, length, record)],
        };
        for step in 1..=n_steps {
            x_step.copy_from_slice(&full.x);
            if (step - 1) % block == 0 {
                x_block.copy_from_slice(&full.x);
            }
            w1.next(&cfg.noise.lambda1, cfg.dt, &mut ws.dw1);
            self.slow_step(&mut full, &x_step, &mut ws, record);
            self.slow_step(&mut aux, &x_block, &mut ws, record);
            for _ in 0..self.n_sub {
                w2.next(&cfg.noise.lambda2, self.dt_fast, &mut ws.dw2);
                self.fast_substep(&mut full, &x_step, &mut ws, record);
                self.fast_substep(&mut aux, &x_block, &mut ws, record);
            }
            if !full.finite() || !aux.finite() {
                return Err(Error::Blowup { step, time: step as f64 * cfg.dt });
            }
            if self.keep(step, n_steps) {
                let t = step as f64 * cfg.dt;
                run.full.push(full.sample(step, t, length, record));
                run.auxiliary.push(aux.sample(step, t, length, record));
            }
        }
        Ok(run)
    }
}

/// Integrate the full system with the given `(W¹, W²)` streams.
pub fn integrate_full(cfg: &SystemConfig, streams: (NoiseStream, NoiseStream)) -> Result<Vec<TrajectorySample>> {
    check_stream_pair(&streams.0, &streams.1)?;
    let mut w1 = BrownianPath::new(streams.0);
    let mut w2 = BrownianPath::new(streams.1);
    integrate_full_paths(cfg, &mut w1, &mut w2)
}

/// As [`integrate_full`], for explicitly constructed (possibly refined)
/// Brownian paths.
pub fn integrate_full_paths(
    cfg: &SystemConfig,
    w1: &mut BrownianPath,
    w2: &mut BrownianPath,
) -> Result<Vec<TrajectorySample>> {
    Engine::new(cfg)?.run_full(w1, w2)
}

/// Run the auxiliary process `(X̂, Ŷ)` alongside the full system. The
/// auxiliary fast equation is frozen at the full slow state of the last
/// `δ`-breakpoint; both systems consume identical increments.
pub fn integrate_auxiliary(
    cfg: &SystemConfig,
    delta: f64,
    streams: (NoiseStream, NoiseStream),
) -> Result<AuxiliaryRun> {
    check_stream_pair(&streams.0, &streams.1)?;
    let ratio = delta / cfg.dt;
    let block = ratio.round();
    if !(block >= 1.0) || (ratio - block).abs() > 1e-9 * ratio {
        return Err(Error::config(format!("delta {delta} is not a positive integer multiple of dt {}", cfg.dt)));
    }
    let mut w1 = BrownianPath::new(streams.0);
    let mut w2 = BrownianPath::new(streams.1);
    Engine::new(cfg)?.run_auxiliary(block as usize, &mut w1, &mut w2)
}

/// Relative residual series of the slow and fast energy identities.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyResiduals {
    pub times: Vec<f64>,
    pub slow: Vec<f64>,
    pub fast: Vec<f64>,
}

impl EnergyResiduals {
    pub fn max_slow(&self) -> f64 {
        self.slow.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_fast(&self) -> f64 {
        self.fast.iter().copied().fold(0.0, f64::max)
    }
}

/// Compare `‖Ẋ_t‖² + ‖X_t‖₁²` and `‖Y_t‖²` against the accumulated
/// right-hand sides of their energy identities. Every residual is relative
/// to the initial energy plus the absolute size of all terms accumulated
/// over the whole trajectory.
pub fn energy_residual(traj: &[TrajectorySample], cfg: &SystemConfig) -> Result<EnergyResiduals> {
    let missing = || Error::Usage("trajectory has no energy ledger (enable record_energy)".into());
    let mut out = EnergyResiduals { times: Vec::new(), slow: Vec::new(), fast: Vec::new() };
    let last = traj.last().ok_or_else(missing)?.diagnostics.ok_or_else(missing)?;
    let slow_scale = last.slow_initial + last.slow_scale;
    let fast_scale = last.fast_initial + last.fast_scale;
    for s in traj {
        let led = s.diagnostics.ok_or_else(missing)?;
        let slow_lhs = s.slow.energy();
        let fast_lhs = cfg.basis.sobolev_norm_sq(s.fast.coeffs(), 0.0);
        out.times.push(s.time);
        out.slow.push(relative(slow_lhs - led.slow_initial - led.slow_rhs, slow_scale));
        out.fast.push(relative(fast_lhs - led.fast_initial - led.fast_rhs, fast_scale));
    }
    Ok(out)
}

fn relative(diff: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        diff.abs() / scale
    } else {
        diff.abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_fixture, CoefficientSet, Coefficients, DeclaredConstants, FixtureSpec};
    use crate::noise::{make_noise_spec, SpectrumFamily, StreamFactory};
    use std::f64::consts::PI;

    #[derive(Debug)]
    struct Zero;
    impl Coefficients for Zero {
        fn slow_drift(&self, _: &[f64], _: &[f64], o: &mut [f64]) {
            o.fill(0.0)
        }
        fn fast_drift(&self, _: &[f64], _: &[f64], o: &mut [f64]) {
            o.fill(0.0)
        }
        fn slow_diffusion(&self, _: &[f64], o: &mut [f64]) {
            o.fill(0.0)
        }
        fn fast_diffusion(&self, _: &[f64], _: &[f64], o: &mut [f64]) {
            o.fill(0.0)
        }
    }

    pub(crate) fn zero_coefficients() -> CoefficientSet {
        let c = DeclaredConstants { l_f: 0.0, m_f: Some(0.0), c_g: 0.0, l_g: 0.0, l_sigma: 0.0, c_b: 0.0, l_b: 0.0 };
        CoefficientSet::new("zero", Arc::new(Zero), c).unwrap()
    }

    fn config(coefficients: CoefficientSet, n: usize, horizon: f64, dt: f64) -> SystemConfig {
        let basis = Arc::new(Basis::new(n, PI).unwrap());
        SystemConfig {
            initial: InitialData {
                position: SpectralField::single_mode(1, 1.0, n, PI).unwrap(),
                velocity: basis.zeros(),
                fast: SpectralField::single_mode(1, 1.0, n, PI).unwrap(),
            },
            basis,
            coefficients,
            noise: make_noise_spec(&SpectrumFamily::default(), n).unwrap(),
            epsilon: 0.1,
            horizon,
            dt,
            scheme: SchemeOptions::default(),
        }
    }

    #[test]
    fn homogeneous_wave_is_exact() {
        let cfg = config(zero_coefficients(), 4, PI / 2.0, PI / 2.0 / 1000.0);
        let traj = integrate_full(&cfg, StreamFactory::new(1).pair(0, 0)).unwrap();
        let last = traj.last().unwrap();
        assert!((last.time - PI / 2.0).abs() < 1e-12);
        assert!(last.slow.position.coeffs()[0].abs() < 1e-12);
        assert!((last.slow.velocity.coeffs()[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_coefficient_energy_residual_vanishes() {
        let mut cfg = config(zero_coefficients(), 8, 1.0, 0.01);
        cfg.scheme.record_energy = true;
        let traj = integrate_full(&cfg, StreamFactory::new(1).pair(0, 0)).unwrap();
        let r = energy_residual(&traj, &cfg).unwrap();
        assert!(r.max_slow() <= 1e-10, "{}", r.max_slow());
        assert!(r.max_fast() <= 1e-10, "{}", r.max_fast());
    }

    #[test]
    fn residual_requires_ledger() {
        let cfg = config(zero_coefficients(), 4, 0.1, 0.01);
        let traj = integrate_full(&cfg, StreamFactory::new(1).pair(0, 0)).unwrap();
        assert!(matches!(energy_residual(&traj, &cfg), Err(Error::Usage(_))));
    }

    #[test]
    fn stride_keeps_initial_and_final() {
        let mut cfg = config(zero_coefficients(), 4, 1.0, 0.01);
        cfg.scheme.stride = 30;
        let traj = integrate_full(&cfg, StreamFactory::new(1).pair(0, 0)).unwrap();
        let steps: Vec<usize> = traj.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![0, 30, 60, 90, 100]);
    }

    #[test]
    fn config_errors() {
        let basis = Arc::new(Basis::new(4, PI).unwrap());
        let noise = make_noise_spec(&SpectrumFamily::default(), 4).unwrap();
        let ou = make_fixture(&FixtureSpec::new("linear_ou", &[]), &basis, &noise).unwrap();
        let mut cfg = config(ou, 4, 1.0, 0.3);
        assert!(matches!(integrate_full(&cfg, StreamFactory::new(1).pair(0, 0)), Err(Error::Config(_))));
        cfg.dt = 0.1;
        let f = StreamFactory::new(1);
        assert!(matches!(integrate_full(&cfg, (f.pair(0, 0).0, f.pair(0, 1).1)), Err(Error::Config(_))));
        let (a, b) = f.pair(0, 0);
        assert!(matches!(integrate_full(&cfg, (b, a)), Err(Error::Config(_))));
        assert!(matches!(integrate_auxiliary(&cfg, 0.15, f.pair(0, 0)), Err(Error::Config(_))));
        assert!(matches!(integrate_auxiliary(&cfg, 0.05, f.pair(0, 0)), Err(Error::Config(_))));
        cfg.epsilon = 0.0;
        assert!(matches!(integrate_full(&cfg, f.pair(0, 0)), Err(Error::Config(_))));
    }

    #[test]
    fn blowup_is_reported() {
        let basis = Arc::new(Basis::new(2, PI).unwrap());
        let noise = make_noise_spec(&SpectrumFamily::default(), 2).unwrap();
        // strongly anti-dissipative fast drift overflows quickly
        let ou = make_fixture(&FixtureSpec::new("linear_ou", &[("gamma", -1e4)]), &basis, &noise).unwrap();
        let cfg = config(ou, 2, 10.0, 0.01);
        match integrate_full(&cfg, StreamFactory::new(1).pair(0, 0)) {
            Err(Error::Blowup { step, .. }) => assert!(step >= 1),
            other => panic!("expected blowup, got {other:?}"),
        }
    }

    #[test]
    fn substep_count() {
        let mut cfg = config(zero_coefficients(), 2, 1.0, 0.01);
        cfg.epsilon = 0.1;
        assert_eq!(cfg.fast_substeps(), 1);
        cfg.epsilon = 0.01;
        assert_eq!(cfg.fast_substeps(), 10);
        cfg.epsilon = 0.03;
        assert_eq!(cfg.fast_substeps(), 4);
        assert!(cfg.fast_dt() <= 0.1 * cfg.epsilon);
    }

    #[test]
    fn auxiliary_companion_equals_full_run() {
        let basis = Arc::new(Basis::new(6, PI).unwrap());
        let noise = make_noise_spec(&SpectrumFamily::default(), 6).unwrap();
        let c = make_fixture(&FixtureSpec::new("bounded_nonlinear", &[]), &basis, &noise).unwrap();
        let mut cfg = config(c, 6, 0.5, 0.005);
        cfg.epsilon = 0.05;
        let f = StreamFactory::new(11);
        let full = integrate_full(&cfg, f.pair(2, 3)).unwrap();
        let aux = integrate_auxiliary(&cfg, 0.02, f.pair(2, 3)).unwrap();
        assert_eq!(full, aux.full);
        // with δ = dt the auxiliary system is the full system
        let same = integrate_auxiliary(&cfg, cfg.dt, f.pair(2, 3)).unwrap();
        assert_eq!(same.full, same.auxiliary);
    }
}
