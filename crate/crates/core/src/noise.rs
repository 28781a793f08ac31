//! Trace-class `Q`-Wiener processes diagonal in the sine basis.
//!
//! `W^i_t = Σ_k λ_{i,k}^{1/2} β_{i,k}(t) e_k` with independent scalar
//! Brownian motions. Random numbers come from counter-based ChaCha streams:
//! a run seed plus a structured [`StreamId`] selects an independent
//! substream, so replica `r` of two different runs can be driven by the
//! very same path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spectral::SpectralField;

/// Which of the two driving processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseIndex {
    /// `W¹`, forcing the slow wave equation.
    Slow,
    /// `W²`, forcing the fast heat equation.
    Fast,
}

/// Decay profile of a covariance spectrum `λ_k`.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumFamily {
    /// `λ_k = c·k^{-p}`, `p > 1`.
    Polynomial { c: f64, p: f64 },
    /// `λ_k = c·ρ^k`, `0 ≤ ρ < 1`.
    Exponential { c: f64, rho: f64 },
    /// `λ_k = c` for `k ≤ m`, zero afterwards.
    FlatTruncated { c: f64, m: usize },
}

impl Default for SpectrumFamily {
    fn default() -> Self {
        SpectrumFamily::Polynomial { c: 1.0, p: 2.0 }
    }
}

impl SpectrumFamily {
    /// First `n` eigenvalues and the closed-form trace of the full sequence.
    pub fn spectrum(&self, n: usize) -> Result<(Vec<f64>, f64)> {
        match *self {
            SpectrumFamily::Polynomial { c, p } => {
                check_scale(c)?;
                if !(p > 1.0) {
                    return Err(Error::TraceDivergent(format!(
                        "polynomial spectrum k^-{p} is not summable (need p > 1)"
                    )));
                }
                let lambda = (1..=n).map(|k| c * (k as f64).powf(-p)).collect();
                Ok((lambda, c * riemann_zeta(p)))
            }
            SpectrumFamily::Exponential { c, rho } => {
                check_scale(c)?;
                if !(0.0..1.0).contains(&rho) {
                    return Err(Error::TraceDivergent(format!("exponential spectrum needs 0 <= rho < 1, got {rho}")));
                }
                let lambda = (1..=n).map(|k| c * rho.powi(k as i32)).collect();
                Ok((lambda, c * rho / (1.0 - rho)))
            }
            SpectrumFamily::FlatTruncated { c, m } => {
                check_scale(c)?;
                let lambda = (1..=n).map(|k| if k <= m { c } else { 0.0 }).collect();
                Ok((lambda, c * m as f64))
            }
        }
    }
}

fn check_scale(c: f64) -> Result<()> {
    if c >= 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("spectrum scale must be finite and nonnegative, got {c}")))
    }
}

/// `ζ(s)` for real `s > 1` by Euler–Maclaurin summation.
pub(crate) fn riemann_zeta(s: f64) -> f64 {
    const HEAD: usize = 32;
    let n = HEAD as f64;
    let head: f64 = (1..HEAD).map(|k| (k as f64).powf(-s)).sum();
    // tail Σ_{k≥N} k^{-s} ≈ ∫_N^∞ + f(N)/2 - Σ B_2j/(2j)! f^{(2j-1)}(N)
    let f = n.powf(-s);
    let mut tail = n.powf(1.0 - s) / (s - 1.0) + 0.5 * f;
    tail += s / 12.0 * n.powf(-s - 1.0);
    tail -= s * (s + 1.0) * (s + 2.0) / 720.0 * n.powf(-s - 3.0);
    tail += s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) / 30240.0 * n.powf(-s - 5.0);
    head + tail
}

/// Covariance spectra of `Q₁` and `Q₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub trace1: f64,
    pub trace2: f64,
}

impl NoiseSpec {
    pub fn new(lambda1: Vec<f64>, lambda2: Vec<f64>, trace1: f64, trace2: f64) -> Result<Self> {
        let spec = Self { lambda1, lambda2, trace1, trace2 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_families(slow: &SpectrumFamily, fast: &SpectrumFamily, n: usize) -> Result<Self> {
        let (lambda1, trace1) = slow.spectrum(n)?;
        let (lambda2, trace2) = fast.spectrum(n)?;
        Self::new(lambda1, lambda2, trace1, trace2)
    }

    /// No noise at all.
    pub fn silent(n: usize) -> Self {
        Self { lambda1: vec![0.0; n], lambda2: vec![0.0; n], trace1: 0.0, trace2: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, lambda, trace) in [("Q1", &self.lambda1, self.trace1), ("Q2", &self.lambda2, self.trace2)] {
            if let Some(k) = lambda.iter().position(|l| !(*l >= 0.0 && l.is_finite())) {
                return Err(Error::config(format!("{name}: eigenvalue {} is negative", k + 1)));
            }
            if !trace.is_finite() {
                return Err(Error::TraceDivergent(format!("{name}: declared trace is infinite")));
            }
            let partial: f64 = lambda.iter().sum();
            if partial > trace * (1.0 + 1e-12) + 1e-300 {
                return Err(Error::config(format!("{name}: truncated trace {partial} exceeds declared trace {trace}")));
            }
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.lambda1.len()
    }

    pub fn lambda(&self, which: NoiseIndex) -> &[f64] {
        match which {
            NoiseIndex::Slow => &self.lambda1,
            NoiseIndex::Fast => &self.lambda2,
        }
    }

    pub(crate) fn check_modes(&self, n: usize) -> Result<()> {
        if self.lambda1.len() != n || self.lambda2.len() != n {
            return Err(Error::config(format!(
                "noise spectra have {}/{} modes, system has {n}",
                self.lambda1.len(),
                self.lambda2.len()
            )));
        }
        Ok(())
    }
}

/// Same decay profile for both noises.
pub fn make_noise_spec(family: &SpectrumFamily, n: usize) -> Result<NoiseSpec> {
    NoiseSpec::from_families(family, family, n)
}

/// Purpose of a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Slow,
    Fast,
    /// Frozen-equation noise used to estimate averaged drifts.
    Drift,
    /// Random probe points (assumption checks, random inputs).
    Probe,
}

impl From<NoiseIndex> for Channel {
    fn from(i: NoiseIndex) -> Self {
        match i {
            NoiseIndex::Slow => Channel::Slow,
            NoiseIndex::Fast => Channel::Fast,
        }
    }
}

/// Structured label of an independent substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    /// Experiment or grid point (e.g. the ε index of a rate study).
    pub point: u64,
    pub replica: u64,
    pub channel: Channel,
}

impl StreamId {
    pub fn new(point: u64, replica: u64, channel: Channel) -> Self {
        Self { point, replica, channel }
    }

    fn word(&self) -> u64 {
        let channel = match self.channel {
            Channel::Slow => 1,
            Channel::Fast => 2,
            Channel::Drift => 3,
            Channel::Probe => 4,
        };
        let mut h = splitmix(0x5157_4e4f_4953_4531 ^ channel);
        h = splitmix(h ^ self.point);
        splitmix(h ^ self.replica)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A reproducible Gaussian source owned by exactly one consumer.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    id: StreamId,
    word: u64,
    rng: ChaCha12Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, id: StreamId) -> Self {
        Self::with_word(seed, id, id.word())
    }

    fn with_word(seed: u64, id: StreamId, word: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(word);
        Self { seed, id, word, rng }
    }

    /// Independent child stream number `index`, starting at position zero.
    /// The child keeps the parent's label.
    pub fn fork(&self, index: u64) -> Self {
        let word = splitmix(splitmix(self.word ^ 0x666f_726b) ^ index);
        Self::with_word(self.seed, self.id, word)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// `out_k = √(λ_k dt) z_k`. One normal is drawn per mode, including
    /// modes with `λ_k = 0`, so the stream position depends only on `N`.
    pub fn increment_into(&mut self, lambda: &[f64], dt: f64, out: &mut [f64]) {
        for (o, l) in out.iter_mut().zip(lambda) {
            let z: f64 = self.rng.sample(StandardNormal);
            *o = (l * dt).sqrt() * z;
        }
    }
}

/// Hands out streams for one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFactory {
    pub seed: u64,
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn stream(&self, id: StreamId) -> NoiseStream {
        NoiseStream::new(self.seed, id)
    }

    pub fn pair(&self, point: u64, replica: u64) -> (NoiseStream, NoiseStream) {
        (
            self.stream(StreamId::new(point, replica, Channel::Slow)),
            self.stream(StreamId::new(point, replica, Channel::Fast)),
        )
    }
}

/// One increment of `W^i` over `dt` in mode space.
pub fn sample_increment(
    spec: &NoiseSpec,
    which: NoiseIndex,
    dt: f64,
    n_modes: usize,
    length: f64,
    stream: &mut NoiseStream,
) -> Result<SpectralField> {
    if !(dt > 0.0) {
        return Err(Error::domain(format!("increment needs dt > 0, got {dt}")));
    }
    spec.check_modes(n_modes)?;
    let mut out = vec![0.0; n_modes];
    stream.increment_into(spec.lambda(which), dt, &mut out);
    SpectralField::new(out, length)
}

/// Brownian increments on a step grid, optionally assembled from `refine`
/// finer increments. A path sampled with step `dt` and `refine = 2` is the
/// same Brownian path as the one sampled with step `dt/2` and `refine = 1`
/// from an identical stream.
#[derive(Debug, Clone)]
pub struct BrownianPath {
    stream: NoiseStream,
    refine: u32,
    scratch: Vec<f64>,
}

impl BrownianPath {
    pub fn new(stream: NoiseStream) -> Self {
        Self::refined(stream, 1)
    }

    pub fn refined(stream: NoiseStream, refine: u32) -> Self {
        Self { stream, refine: refine.max(1), scratch: Vec::new() }
    }

    pub fn id(&self) -> StreamId {
        self.stream.id()
    }

    pub fn next(&mut self, lambda: &[f64], dt: f64, out: &mut [f64]) {
        if self.refine == 1 {
            self.stream.increment_into(lambda, dt, out);
            return;
        }
        let fine = dt / self.refine as f64;
        self.scratch.resize(out.len(), 0.0);
        out.iter_mut().for_each(|o| *o = 0.0);
        for _ in 0..self.refine {
            self.stream.increment_into(lambda, fine, &mut self.scratch);
            for (o, s) in out.iter_mut().zip(&self.scratch) {
                *o += s;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn forks_are_distinct_and_reproducible() {
        let s = NoiseStream::new(3, StreamId::new(0, 0, Channel::Drift));
        let mut a = s.fork(0);
        let mut b = s.fork(1);
        let mut a2 = s.fork(0);
        let mut root = s.clone();
        let x = a.standard_normal();
        assert_eq!(x, a2.standard_normal());
        assert_ne!(x, b.standard_normal());
        assert_ne!(x, root.standard_normal());
    }

    #[test]
    fn zeta_values() {
        assert_relative_eq!(riemann_zeta(2.0), PI * PI / 6.0, epsilon = 1e-13);
        assert_relative_eq!(riemann_zeta(4.0), PI.powi(4) / 90.0, epsilon = 1e-13);
        assert_relative_eq!(riemann_zeta(1.5), 2.612_375_348_685_488, epsilon = 1e-11);
    }

    #[test]
    fn polynomial_family() {
        let (l, tr) = SpectrumFamily::Polynomial { c: 1.0, p: 2.0 }.spectrum(4).unwrap();
        let want = [1.0, 0.25, 1.0 / 9.0, 1.0 / 16.0];
        for (a, b) in l.iter().zip(want) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        assert_relative_eq!(tr, PI * PI / 6.0, epsilon = 1e-13);
        let err = SpectrumFamily::Polynomial { c: 1.0, p: 1.0 }.spectrum(4).unwrap_err();
        assert!(matches!(err, Error::TraceDivergent(_)));
        assert!(err.to_string().contains("trace divergent"));
    }

    #[test]
    fn flat_and_exponential_families() {
        let (l, tr) = SpectrumFamily::FlatTruncated { c: 0.5, m: 2 }.spectrum(8).unwrap();
        assert_eq!(l, vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(tr, 1.0);
        let (l, tr) = SpectrumFamily::Exponential { c: 2.0, rho: 0.5 }.spectrum(3).unwrap();
        assert_eq!(l, vec![1.0, 0.5, 0.25]);
        assert_relative_eq!(tr, 2.0, epsilon = 1e-15);
        assert!(SpectrumFamily::Exponential { c: 1.0, rho: 1.0 }.spectrum(3).is_err());
    }

    #[test]
    fn spec_rejects_negative_and_overfull_spectra() {
        assert!(NoiseSpec::new(vec![-1.0], vec![0.0], 1.0, 1.0).is_err());
        assert!(NoiseSpec::new(vec![1.0, 1.0], vec![0.0, 0.0], 1.5, 0.0).is_err());
        assert!(NoiseSpec::new(vec![1.0], vec![0.0], f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn degenerate_spectrum_gives_zero_increment() {
        let spec = NoiseSpec::silent(6);
        let mut s = StreamFactory::new(1).stream(StreamId::new(0, 0, Channel::Slow));
        let dw = sample_increment(&spec, NoiseIndex::Slow, 0.1, 6, PI, &mut s).unwrap();
        assert!(dw.coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn increment_errors() {
        let spec = NoiseSpec::silent(4);
        let mut s = StreamFactory::new(1).stream(StreamId::new(0, 0, Channel::Slow));
        assert!(matches!(sample_increment(&spec, NoiseIndex::Slow, 0.0, 4, PI, &mut s), Err(Error::Domain(_))));
        assert!(matches!(sample_increment(&spec, NoiseIndex::Slow, 0.1, 5, PI, &mut s), Err(Error::Config(_))));
    }

    #[test]
    fn replay_is_bit_identical() {
        let f = StreamFactory::new(99);
        let id = StreamId::new(3, 17, Channel::Fast);
        let mut a = f.stream(id);
        let mut b = f.stream(id);
        let lambda = [1.0, 0.5, 0.1];
        let (mut x, mut y) = ([0.0; 3], [0.0; 3]);
        for _ in 0..1000 {
            a.increment_into(&lambda, 0.01, &mut x);
            b.increment_into(&lambda, 0.01, &mut y);
            assert_eq!(x, y);
        }
        assert_eq!(a.position(), b.position());
        assert!(a.position() > 0);
    }

    #[test]
    fn refined_path_matches_fine_path() {
        let f = StreamFactory::new(5);
        let id = StreamId::new(0, 0, Channel::Slow);
        let lambda = [1.0, 0.25];
        let mut coarse = BrownianPath::refined(f.stream(id), 2);
        let mut fine = BrownianPath::new(f.stream(id));
        let (mut c, mut a, mut b) = ([0.0; 2], [0.0; 2], [0.0; 2]);
        for _ in 0..50 {
            coarse.next(&lambda, 0.02, &mut c);
            fine.next(&lambda, 0.01, &mut a);
            fine.next(&lambda, 0.01, &mut b);
            for k in 0..2 {
                assert_relative_eq!(c[k], a[k] + b[k], epsilon = 1e-15);
            }
        }
    }
}
