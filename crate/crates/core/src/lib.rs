//! Spectral Galerkin simulation of a stochastic wave equation coupled to a
//! fast stochastic heat equation on `(0, L)` with Dirichlet conditions,
//! together with the frozen fast process, its averaged drift and the
//! averaged (effective) slow equation.

// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
mod kernels;

pub mod averaged;
pub mod coupled;
pub mod frozen;
pub mod model;
pub mod noise;
pub mod spectral;
pub mod stats;

pub use averaged::{
    integrate_averaged, integrate_averaged_path, slow_error, AveragedRun, AveragedSample, ClosedFormDrift,
    DriftProvider, DriftSource, MonteCarloDrift,
};
pub use coupled::{
    energy_residual, integrate_auxiliary, integrate_full, integrate_full_paths, AuxiliaryRun, EnergyLedger,
    EnergyResiduals, InitialData, SchemeOptions, SystemConfig, TrajectorySample,
};
pub use error::{Error, Result};
pub use frozen::{
    closed_form_avg_drift, estimate_avg_drift, estimate_mixing, first_variation, integrate_frozen,
    AveragedDriftEstimate, AvgDriftMethod, FirstVariation, FrozenPath, FrozenSystem, MixingReport,
};
pub use model::{
    make_fixture, validate_assumptions, AssumptionReport, CoefficientSet, Coefficients, DeclaredConstants,
    FastJacobian, FixtureSpec, OuParams,
};
pub use noise::{
    make_noise_spec, sample_increment, BrownianPath, Channel, NoiseIndex, NoiseSpec, NoiseStream, SpectrumFamily,
    StreamFactory, StreamId,
};
pub use spectral::{collocation_grid, eigenvalue, Basis, SpectralField, WaveState};
