//! Experiment configuration: a TOML document with dotted sections. Every
//! key has a default, so an empty file describes the reference experiment
//! (linear Ornstein–Uhlenbeck fixture on `(0, π)` with 16 modes).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use slowfast_core::{
    make_fixture, AvgDriftMethod, Basis, FixtureSpec, FrozenSystem, InitialData, NoiseSpec, SchemeOptions,
    SpectralField, SpectrumFamily, SystemConfig,
};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub domain: DomainConfig,
    pub fixture: FixtureConfig,
    pub noise: NoiseConfig,
    pub system: SystemSection,
    pub avg_drift: AvgDriftConfig,
    pub mixing: MixingConfig,
    pub rate_study: RateStudyConfig,
    pub lemma_checks: LemmaConfig,
    pub validate: ValidateConfig,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    pub length: f64,
    pub modes: usize,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self { length: PI, modes: 16 }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FixtureConfig {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self { name: "linear_ou".into(), params: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub slow: FamilyConfig,
    pub fast: FamilyConfig,
}

/// `family` is one of `polynomial` (`c`, `p`), `exponential` (`c`, `rho`)
/// or `flat_truncated` (`c`, `m`).
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FamilyConfig {
    pub family: String,
    pub c: f64,
    pub p: Option<f64>,
    pub rho: Option<f64>,
    pub m: Option<usize>,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self { family: "polynomial".into(), c: 1.0, p: None, rho: None, m: None }
    }
}

impl FamilyConfig {
    fn build(&self, path: &str) -> Result<SpectrumFamily> {
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| HarnessError::config(format!("{path}.{key}"), "required for this family"))
        };
        let unused = |present: bool, key: &str| {
            if present {
                Err(HarnessError::config(
                    format!("{path}.{key}"),
                    format!("not a parameter of family `{}`", self.family),
                ))
            } else {
                Ok(())
            }
        };
        match self.family.as_str() {
            "polynomial" => {
                unused(self.rho.is_some(), "rho")?;
                unused(self.m.is_some(), "m")?;
                Ok(SpectrumFamily::Polynomial { c: self.c, p: self.p.unwrap_or(2.0) })
            }
            "exponential" => {
                unused(self.p.is_some(), "p")?;
                unused(self.m.is_some(), "m")?;
                Ok(SpectrumFamily::Exponential { c: self.c, rho: need(self.rho, "rho")? })
            }
            "flat_truncated" => {
                unused(self.p.is_some(), "p")?;
                unused(self.rho.is_some(), "rho")?;
                let m = self.m.ok_or_else(|| HarnessError::config(format!("{path}.m"), "required for this family"))?;
                Ok(SpectrumFamily::FlatTruncated { c: self.c, m })
            }
            other => Err(HarnessError::config(
                format!("{path}.family"),
                format!("unknown family `{other}` (polynomial, exponential, flat_truncated)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub epsilon: f64,
    pub horizon: f64,
    pub dt: f64,
    pub c_fast: f64,
    pub exact_variance: bool,
    pub stride: usize,
    pub initial: InitialConfig,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            horizon: 1.0,
            dt: 0.001,
            c_fast: 0.1,
            exact_variance: false,
            stride: 1,
            initial: InitialConfig::default(),
        }
    }
}

/// Leading mode coefficients; missing modes are zero.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub fast: Vec<f64>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { position: vec![1.0], velocity: Vec::new(), fast: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    TimeAverage,
    Ensemble,
}

/// Averaged-drift budget. Unset times default to burn-in `10/κ`, horizon
/// `200/κ` (time average) and terminal time `20/κ` (ensemble).
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AvgDriftConfig {
    pub x: Vec<f64>,
    pub method: MethodKind,
    pub burn_in: Option<f64>,
    pub horizon: Option<f64>,
    pub dt: f64,
    pub batches: usize,
    pub replicas: usize,
    pub terminal_time: Option<f64>,
    /// Reject estimates with `stderr > quality_rel·‖value‖ + quality_abs`
    /// when the drift feeds the averaged equation.
    pub quality_rel: f64,
    pub quality_abs: f64,
}

impl Default for AvgDriftConfig {
    fn default() -> Self {
        Self {
            x: vec![1.0],
            method: MethodKind::TimeAverage,
            burn_in: None,
            horizon: None,
            dt: 0.01,
            batches: 20,
            replicas: 256,
            terminal_time: None,
            quality_rel: 0.05,
            quality_abs: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MixingConfig {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_other: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub replicas: usize,
}

impl Default for MixingConfig {
    fn default() -> Self {
        Self { x: Vec::new(), y: vec![1.0], y_other: Vec::new(), horizon: 4.0, dt: 0.01, replicas: 8 }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RateStudyConfig {
    pub epsilons: Vec<f64>,
    pub replicas: usize,
    pub dt_base: f64,
    pub horizon: f64,
    pub drift: DriftKind,
    /// Repeat the smallest ε at half the step on the same Brownian paths.
    pub self_check: bool,
    /// Largest acceptable `stderr/mean` per ε before the report is flagged.
    pub stderr_target: f64,
}

impl Default for RateStudyConfig {
    fn default() -> Self {
        Self {
            epsilons: (4..=9).map(|k| 0.5f64.powi(k)).collect(),
            replicas: 256,
            dt_base: 0.01,
            horizon: 1.0,
            drift: DriftKind::ClosedForm,
            self_check: true,
            stderr_target: 0.1,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LemmaConfig {
    pub replicas: usize,
    pub dt: f64,
    pub horizon: f64,
    /// ε and block lengths of the auxiliary-process sweep.
    pub epsilon: f64,
    pub deltas: Vec<f64>,
    /// Lags of the time-regularity check, measured from `horizon/2`.
    pub lags: Vec<f64>,
    pub lag_epsilons: Vec<f64>,
    pub a_priori_epsilons: Vec<f64>,
    pub energy_dt: f64,
    pub energy_epsilon: f64,
    pub energy_halvings: u32,
    /// Frozen-equation step and the amplitudes `s` of the points `x = s·e₁`.
    pub frozen_dt: f64,
    pub moment_amplitudes: Vec<f64>,
    pub variation_scales: Vec<f64>,
    pub variation_horizon: f64,
    pub variation_replicas: usize,
    pub drift_points: usize,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        Self {
            replicas: 256,
            dt: 0.001,
            horizon: 1.0,
            epsilon: 0.01,
            deltas: vec![0.02, 0.04, 0.08],
            lags: vec![0.02, 0.04, 0.08],
            lag_epsilons: vec![0.1, 0.01],
            a_priori_epsilons: vec![0.0625, 0.015625, 0.00390625],
            energy_dt: 0.01,
            energy_epsilon: 0.1,
            energy_halvings: 3,
            frozen_dt: 0.01,
            moment_amplitudes: vec![0.0, 1.0, 2.0, 4.0],
            variation_scales: vec![0.1, 1.0, 10.0],
            variation_horizon: 20.0,
            variation_replicas: 64,
            drift_points: 5,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    pub probes: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self { probes: 1000 }
    }
}

impl Config {
    /// Parse TOML text; errors name the offending key path.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| HarnessError::config("<document>", e.to_string().trim().to_string()))?;
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            HarnessError::config(path, e.into_inner().message().trim().to_string())
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    fn check(&self) -> Result<()> {
        let positive = |v: f64, path: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(HarnessError::config(path, format!("must be positive, got {v}")))
            }
        };
        positive(self.domain.length, "domain.length")?;
        if self.domain.modes == 0 {
            return Err(HarnessError::config("domain.modes", "must be at least 1"));
        }
        positive(self.system.epsilon, "system.epsilon")?;
        positive(self.system.horizon, "system.horizon")?;
        positive(self.system.dt, "system.dt")?;
        positive(self.system.c_fast, "system.c_fast")?;
        let n = self.domain.modes;
        for (name, v) in [
            ("system.initial.position", &self.system.initial.position),
            ("system.initial.velocity", &self.system.initial.velocity),
            ("system.initial.fast", &self.system.initial.fast),
            ("avg_drift.x", &self.avg_drift.x),
            ("mixing.x", &self.mixing.x),
            ("mixing.y", &self.mixing.y),
            ("mixing.y_other", &self.mixing.y_other),
        ] {
            if v.len() > n {
                return Err(HarnessError::config(name, format!("{} coefficients for {n} modes", v.len())));
            }
        }
        let rs = &self.rate_study;
        if rs.epsilons.len() < 4 {
            return Err(HarnessError::config("rate_study.epsilons", "need at least four values"));
        }
        for (i, e) in rs.epsilons.iter().enumerate() {
            positive(*e, &format!("rate_study.epsilons[{i}]"))?;
        }
        if rs.replicas < 2 {
            return Err(HarnessError::config("rate_study.replicas", "need at least two replicas"));
        }
        positive(rs.dt_base, "rate_study.dt_base")?;
        positive(rs.horizon, "rate_study.horizon")?;
        Ok(())
    }

    pub fn basis(&self) -> Result<Arc<Basis>> {
        Ok(Arc::new(Basis::new(self.domain.modes, self.domain.length)?))
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        let slow = self.noise.slow.build("noise.slow")?;
        let fast = self.noise.fast.build("noise.fast")?;
        NoiseSpec::from_families(&slow, &fast, self.domain.modes)
            .map_err(|e| HarnessError::config("noise", e.to_string()))
    }

    pub fn fixture_spec(&self) -> FixtureSpec {
        FixtureSpec { name: self.fixture.name.clone(), params: self.fixture.params.clone() }
    }

    /// Coefficient set, basis and noise, with fixture problems reported
    /// under the `fixture` key.
    pub fn model(&self) -> Result<Model> {
        let basis = self.basis()?;
        let noise = self.noise_spec()?;
        let coefficients = make_fixture(&self.fixture_spec(), &basis, &noise)
            .map_err(|e| HarnessError::config("fixture", e.to_string()))?;
        Ok(Model { basis, noise, coefficients })
    }

    pub fn field(&self, basis: &Basis, leading: &[f64]) -> Result<SpectralField> {
        Ok(SpectralField::from_leading(leading, basis.n_modes(), basis.length())?)
    }

    pub fn system_config(&self, model: &Model) -> Result<SystemConfig> {
        let s = &self.system;
        let b = &model.basis;
        Ok(SystemConfig {
            basis: b.clone(),
            coefficients: model.coefficients.clone(),
            noise: model.noise.clone(),
            epsilon: s.epsilon,
            horizon: s.horizon,
            dt: s.dt,
            initial: InitialData {
                position: self.field(b, &s.initial.position)?,
                velocity: self.field(b, &s.initial.velocity)?,
                fast: self.field(b, &s.initial.fast)?,
            },
            scheme: SchemeOptions {
                c_fast: s.c_fast,
                exact_variance: s.exact_variance,
                stride: s.stride.max(1),
                record_energy: false,
            },
        })
    }

    /// The configured averaged-drift budget for dissipativity margin `kappa`.
    pub fn avg_drift_method(&self, kappa: f64) -> Result<AvgDriftMethod> {
        let a = &self.avg_drift;
        let dt = a.dt;
        let snap = |t: f64| (t / dt).ceil() * dt;
        let need_kappa = |what: &str| {
            if kappa > 0.0 {
                Ok(())
            } else {
                Err(HarnessError::config(
                    format!("avg_drift.{what}"),
                    format!("kappa nonpositive ({kappa}); set the budget explicitly"),
                ))
            }
        };
        match a.method {
            MethodKind::TimeAverage => {
                let burn_in = match a.burn_in {
                    Some(b) => b,
                    None => {
                        need_kappa("burn_in")?;
                        snap(10.0 / kappa)
                    }
                };
                let horizon = match a.horizon {
                    Some(h) => h,
                    None => {
                        need_kappa("horizon")?;
                        snap(200.0 / kappa)
                    }
                };
                Ok(AvgDriftMethod::TimeAverage { burn_in, horizon, dt, batches: a.batches })
            }
            MethodKind::Ensemble => {
                let terminal_time = match a.terminal_time {
                    Some(t) => t,
                    None => {
                        need_kappa("terminal_time")?;
                        snap(20.0 / kappa)
                    }
                };
                Ok(AvgDriftMethod::Ensemble { replicas: a.replicas, terminal_time, dt })
            }
        }
    }
}

/// The model objects shared by every experiment.
#[derive(Debug, Clone)]
pub struct Model {
    pub basis: Arc<Basis>,
    pub noise: NoiseSpec,
    pub coefficients: slowfast_core::CoefficientSet,
}

impl Model {
    pub fn kappa(&self) -> f64 {
        self.coefficients.kappa(self.basis.length())
    }

    pub fn frozen(&self) -> Result<FrozenSystem> {
        Ok(FrozenSystem::new(self.basis.clone(), self.coefficients.clone(), self.noise.clone())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_reference_experiment() {
        let cfg = Config::from_toml("").unwrap();
        assert_eq!(cfg, Config::default());
        let model = cfg.model().unwrap();
        assert!((model.kappa() - 0.75).abs() < 1e-12);
        assert_eq!(cfg.rate_study.epsilons.len(), 6);
    }

    #[test]
    fn unknown_key_reports_path() {
        let err = Config::from_toml("[system]\nepsilon = 0.1\nepsilonn = 2\n").unwrap_err();
        match err {
            HarnessError::Config { path, message } => {
                assert_eq!(path, "system.epsilonn");
                assert!(message.contains("unknown field"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let err = Config::from_toml("[noise.fast]\nfamily = \"polynomial\"\nrho = 0.5\n").unwrap();
        assert!(matches!(err.model(), Err(HarnessError::Config { path, .. }) if path == "noise.fast.rho"));
    }

    #[test]
    fn bad_values_report_path() {
        let err = Config::from_toml("[system]\ndt = \"fast\"\n").unwrap_err();
        assert!(matches!(err, HarnessError::Config { path, .. } if path == "system.dt"));
        let err = Config::from_toml("[rate_study]\nepsilons = [0.1, 0.05]\n").unwrap_err();
        assert!(matches!(err, HarnessError::Config { path, .. } if path == "rate_study.epsilons"));
        let cfg = Config::from_toml("[fixture]\nname = \"cubic\"\n").unwrap();
        assert!(matches!(cfg.model(), Err(HarnessError::Config { path, .. }) if path == "fixture"));
        let cfg = Config::from_toml("[noise.slow]\np = 1.0\n").unwrap();
        assert!(matches!(cfg.model(), Err(HarnessError::Config { path, .. }) if path == "noise"));
    }

    #[test]
    fn default_budget_follows_kappa() {
        let cfg = Config::default();
        match cfg.avg_drift_method(0.75).unwrap() {
            AvgDriftMethod::TimeAverage { burn_in, horizon, .. } => {
                assert!((burn_in - 13.34).abs() < 1e-9);
                assert!((horizon - 266.67).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
        assert!(cfg.avg_drift_method(-0.25).is_err());
    }
}
