//! Simulation of driven atomic systems conditioned on the absence of decay
//! events: the nonlinear no-decay Schrödinger evolution, quantum-jump
//! trajectories, no-decay probabilities and CZ gate analysis.
//!
//! Units throughout: time in µs, frequencies and rates in rad/µs
//! (a value quoted as "2π × 1 MHz" is `TAU * 1.0`).
//!
//! ```
//! use second_lab_core::{decay_statistics, integrate, preset, uniform_grid, IntegrationConfig, RhsKind};
//!
//! let model = preset("raman-pi2")?;
//! let grid = uniform_grid(0.0, model.duration(), 101);
//! let cfg = IntegrationConfig::default().with_grid(grid.clone());
//! let span = (0.0, model.duration());
//! let unitary = integrate(RhsKind::Unitary, &model, model.initial_state(), span, &cfg)?;
//! let conditioned = integrate(RhsKind::Second, &model, model.initial_state(), span, &cfg)?;
//! let stats = decay_statistics(&model, model.initial_state(), model.duration(), &grid, &cfg)?;
//! println!("{:?} {:?} p0(T) = {}", unitary.states.last(), conditioned.states.last(), stats.p0.last().unwrap());
//! # Ok::<(), second_lab_core::Error>(())
//! ```

#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod integrate;
pub mod mcwf;
pub mod models;
pub mod stats;
pub mod waveform;

pub use num_complex::Complex64;

pub use analysis::{
    compare_evolutions, cz_amplitudes, cz_fidelity, endpoint_vanishing_check, gamma_scan, ComparisonCurves,
    CzAmplitudes, EndpointReport, GateErrorGrid,
};
pub use dynamics::{
    decay_diagonal, effective_rhs, renorm_scalar, second_rhs, unitary_rhs, Branch, DecayChannel, ModelBuilder,
    ModelSpec, RhsKind, StateVector, C64,
};
pub use error::{Error, Result};
pub use integrate::{integrate, integrate_model, uniform_grid, IntegrationConfig, Trajectory};
pub use mcwf::{
    collapse_after_jump, phase_of, run_ensemble, run_trajectory, Conditioning, DetectorModel, EnsembleStats, Fate,
    McwfConfig, PhaseReference, TrajectoryOutcome,
};
pub use models::{
    cz_single_body_model, cz_two_body_model, preset, raman_model, readout_model, two_level_model, PresetInfo,
    RamanParams, RydbergCZParams, SingleBody, TwoLevelParams, PRESETS,
};
pub use stats::{
    decay_statistics, first_event_channel_probability, no_decay_probability, norm_squared_oracle, DecayStatistics,
};
pub use waveform::{FourierSeries, Waveform, WaveformSpec};
