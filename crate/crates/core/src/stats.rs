//! No-decay probability and first-event statistics.
//!
//! `p₀` and the per-channel first-event probabilities are carried as extra
//! components of the conditioned evolution, so they share its step control:
//!
//! ```text
//! dp₀/dt  = −(Σ γ |C|²) p₀
//! dq_m/dt = p₀ γ_m |C_src(m)|²
//! ```
//!
//! with `|C|²` taken relative to `‖C‖²`, which is 1 up to integration error.

use crate::dynamics::{ModelSpec, RhsKind, StateVector, C64, NORM_TOLERANCE};
use crate::error::{invalid, Error, Result};
use crate::integrate::{integrate, integrate_system, output_times, IntegrationConfig, OdeSystem, StepStats};

#[derive(Debug, Clone, PartialEq)]
pub struct DecayStatistics {
    pub grid: Vec<f64>,
    pub p0: Vec<f64>,
    pub channel_names: Vec<String>,
    /// `channel_event_prob[m][k]`: probability that the first event happens
    /// in channel `m` before `grid[k]`.
    pub channel_event_prob: Vec<Vec<f64>>,
    /// Conditioned state at each grid time.
    pub states: Vec<StateVector>,
    pub stats: StepStats,
}

impl DecayStatistics {
    pub fn final_p0(&self) -> f64 {
        *self.p0.last().expect("grid is never empty")
    }

    /// First-event probability per channel over the whole window.
    pub fn final_channel_probs(&self) -> Vec<f64> {
        self.channel_event_prob.iter().map(|q| *q.last().expect("grid is never empty")).collect()
    }

    /// `p₀ + Σ q_m − 1` at each grid time.
    pub fn completeness_defect(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|k| self.p0[k] + self.channel_event_prob.iter().map(|q| q[k]).sum::<f64>() - 1.0)
            .collect()
    }
}

struct Augmented<'a> {
    model: &'a ModelSpec,
}

impl OdeSystem for Augmented<'_> {
    fn dim(&self) -> usize {
        self.model.dim() + 1 + self.model.channels().len()
    }

    fn derivative(&self, t: f64, y: &[C64], dy: &mut [C64]) -> Result<()> {
        let n = self.model.dim();
        self.model.derivative(RhsKind::Second, t, &y[..n], &mut dy[..n])?;
        let p0 = y[n].re;
        let norm: f64 = y[..n].iter().map(|a| a.norm_sqr()).sum();
        dy[n] = C64::new(-self.model.jump_rate(&y[..n]) / norm * p0, 0.0);
        for (m, ch) in self.model.channels().iter().enumerate() {
            dy[n + 1 + m] = C64::new(p0 * ch.rate * y[ch.source].norm_sqr() / norm, 0.0);
        }
        Ok(())
    }
}

fn check_start(model: &ModelSpec, state0: &StateVector) -> Result<()> {
    if state0.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: state0.dim() });
    }
    if (state0.norm_sqr() - 1.0).abs() > NORM_TOLERANCE {
        return Err(invalid("decay statistics need a normalised initial state"));
    }
    Ok(())
}

/// Integrate the conditioned evolution with `p₀` and the first-event
/// probabilities over `[0, t_end]`, sampled at `grid` plus the endpoints.
pub fn decay_statistics(
    model: &ModelSpec,
    state0: &StateVector,
    t_end: f64,
    grid: &[f64],
    cfg: &IntegrationConfig,
) -> Result<DecayStatistics> {
    check_start(model, state0)?;
    let times = output_times((0.0, t_end), grid)?;
    let n = model.dim();
    let nc = model.channels().len();
    let mut y0 = state0.amplitudes().to_vec();
    y0.push(C64::new(1.0, 0.0));
    y0.extend(std::iter::repeat_n(C64::new(0.0, 0.0), nc));
    let (raw, stats) = integrate_system(&Augmented { model }, &y0, &times, cfg)?;

    let p0 = raw.iter().map(|y| y[n].re).collect();
    let channel_event_prob = (0..nc).map(|m| raw.iter().map(|y| y[n + 1 + m].re).collect()).collect();
    let states = raw.iter().map(|y| StateVector::from_raw(y[..n].to_vec())).collect();
    Ok(DecayStatistics {
        grid: times,
        p0,
        channel_names: model.channels().iter().map(|c| c.name.clone()).collect(),
        channel_event_prob,
        states,
        stats,
    })
}

/// `p₀(t)` on `grid` (plus endpoints) over `[0, t_end]`.
pub fn no_decay_probability(
    model: &ModelSpec,
    state0: &StateVector,
    t_end: f64,
    grid: &[f64],
    cfg: &IntegrationConfig,
) -> Result<Vec<f64>> {
    decay_statistics(model, state0, t_end, grid, cfg).map(|s| s.p0)
}

/// `q_m = ∫₀ᵀ p₀ γ_m |C_src|² dt` for each channel, in channel order.
pub fn first_event_channel_probability(
    model: &ModelSpec,
    state0: &StateVector,
    t_end: f64,
    cfg: &IntegrationConfig,
) -> Result<Vec<(String, f64)>> {
    let s = decay_statistics(model, state0, t_end, &[], cfg)?;
    Ok(s.channel_names.iter().cloned().zip(s.final_channel_probs()).collect())
}

/// `‖C_eff(t)‖²` from the linear no-jump evolution.
pub fn norm_squared_oracle(
    model: &ModelSpec,
    state0: &StateVector,
    t_end: f64,
    grid: &[f64],
    cfg: &IntegrationConfig,
) -> Result<Vec<f64>> {
    check_start(model, state0)?;
    let cfg = IntegrationConfig { sample_grid: grid.to_vec(), ..cfg.clone() };
    let tr = integrate(RhsKind::Effective, model, state0, (0.0, t_end), &cfg)?;
    Ok(tr.states.iter().map(StateVector::norm_sqr).collect())
}
