//! Model description and the three right-hand sides built from it.
//!
//! A model is a basis, a Hermitian drive `H_U(t)/ħ` stored as a sparse entry
//! list, and a set of population-decay channels. From these three generators
//! are assembled, all in rad/µs:
//!
//! * unitary:   `dC/dt = -i H_U C`
//! * effective: `dC/dt = -i H_U C - D C` with `D = diag(γ/2)` on decaying states
//! * no-decay conditioned: `dC/dt = -i H_U C - D C + (Σ_m γ_m/2 |C_m|²) C`
//!
//! The last one conserves the norm exactly: with `ξ = ‖C‖² - 1` it gives
//! `dξ/dt = 2 (Σ γ/2 |C_m|²) ξ`, so `ξ(0) = 0` stays zero.

use std::fmt;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::waveform::Waveform;

pub type C64 = Complex64;

/// Normalisation tolerance enforced when a state is constructed.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Complex amplitudes over a model basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<C64>);

impl StateVector {
    /// Wrap amplitudes that are already unit-norm (within [`NORM_TOLERANCE`]).
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(invalid("state vector must have at least one amplitude"));
        }
        if amplitudes.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
            return Err(invalid("state vector has non-finite amplitudes"));
        }
        let n = norm_sqr(&amplitudes);
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(invalid(format!("state vector norm² = {n}, expected 1")));
        }
        Ok(Self(amplitudes))
    }

    /// Normalise arbitrary (nonzero) amplitudes.
    pub fn normalized(mut amplitudes: Vec<C64>) -> Result<Self> {
        let n = norm_sqr(&amplitudes).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(invalid("cannot normalise a zero or non-finite vector"));
        }
        amplitudes.iter_mut().for_each(|a| *a /= n);
        Self::new(amplitudes)
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(invalid(format!("basis index {index} out of range for dimension {dim}")));
        }
        let mut v = vec![C64::new(0.0, 0.0); dim];
        v[index] = C64::new(1.0, 0.0);
        Ok(Self(v))
    }

    /// No normalisation check; used for integrator output where the norm is
    /// the quantity under study.
    pub(crate) fn from_raw(amplitudes: Vec<C64>) -> Self {
        Self(amplitudes)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.0
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.0)
    }

    pub fn populations(&self) -> Vec<f64> {
        self.0.iter().map(|a| a.norm_sqr()).collect()
    }
}

pub(crate) fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum()
}

/// Destination of a quantum jump out of a decaying state.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub target: usize,
    pub weight: f64,
}

/// Population decay out of one basis state at a fixed rate (rad/µs).
#[derive(Debug, Clone, PartialEq)]
pub struct DecayChannel {
    pub name: String,
    pub source: usize,
    pub rate: f64,
    /// Jump destinations; only the trajectory engine needs them.
    pub branches: Option<Vec<Branch>>,
}

impl DecayChannel {
    pub fn new(name: impl Into<String>, source: usize, rate: f64) -> Self {
        Self { name: name.into(), source, rate, branches: None }
    }

    pub fn with_branches(mut self, branches: Vec<Branch>) -> Self {
        self.branches = Some(branches);
        self
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.source >= dim {
            return Err(invalid(format!(
                "channel `{}` source {} out of range for dimension {dim}",
                self.name, self.source
            )));
        }
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(invalid(format!("channel `{}` rate must be >= 0", self.name)));
        }
        if let Some(branches) = &self.branches {
            if branches.is_empty() {
                return Err(invalid(format!("channel `{}` has an empty branch list", self.name)));
            }
            let mut total = 0.0;
            for b in branches {
                if b.target >= dim || b.target == self.source {
                    return Err(invalid(format!(
                        "channel `{}` branch target {} is invalid",
                        self.name, b.target
                    )));
                }
                if !(b.weight.is_finite() && b.weight > 0.0) {
                    return Err(invalid(format!("channel `{}` branch weights must be > 0", self.name)));
                }
                total += b.weight;
            }
            if (total - 1.0).abs() > 1e-12 {
                return Err(invalid(format!(
                    "channel `{}` branch weights sum to {total}, expected 1",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Off-diagonal drive entry: `H[row][col] = factor · w(t)`, and the conjugate
/// entry `H[col][row]` implied.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub row: usize,
    pub col: usize,
    pub waveform: Waveform,
    pub factor: C64,
}

/// Diagonal entry `H[index][index] = scale · w(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Detuning {
    pub index: usize,
    pub waveform: Waveform,
    pub scale: f64,
}

/// Which generator to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RhsKind {
    Unitary,
    Effective,
    Second,
}

impl fmt::Display for RhsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RhsKind::Unitary => "unitary",
            RhsKind::Effective => "effective",
            RhsKind::Second => "second",
        })
    }
}

/// A driven system with decay channels; immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    name: String,
    labels: Vec<String>,
    couplings: Vec<Coupling>,
    detunings: Vec<Detuning>,
    channels: Vec<DecayChannel>,
    initial_state: StateVector,
    duration: f64,
    // (index, γ/2) for every state with nonzero loss
    lossy: Vec<(usize, f64)>,
}

/// Incremental construction of a [`ModelSpec`].
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    name: String,
    labels: Vec<String>,
    couplings: Vec<Coupling>,
    detunings: Vec<Detuning>,
    channels: Vec<DecayChannel>,
    initial_state: Option<StateVector>,
    duration: f64,
}

impl ModelBuilder {
    pub fn new<S: Into<String>>(name: impl Into<String>, labels: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            labels: labels.into_iter().map(Into::into).collect(),
            couplings: Vec::new(),
            detunings: Vec::new(),
            channels: Vec::new(),
            initial_state: None,
            duration: 1.0,
        }
    }

    pub fn coupling(mut self, row: usize, col: usize, waveform: Waveform, factor: f64) -> Self {
        self.couplings.push(Coupling { row, col, waveform, factor: C64::new(factor, 0.0) });
        self
    }

    pub fn complex_coupling(mut self, row: usize, col: usize, waveform: Waveform, factor: C64) -> Self {
        self.couplings.push(Coupling { row, col, waveform, factor });
        self
    }

    pub fn detuning(mut self, index: usize, waveform: Waveform) -> Self {
        self.detunings.push(Detuning { index, waveform, scale: 1.0 });
        self
    }

    pub fn scaled_detuning(mut self, index: usize, waveform: Waveform, scale: f64) -> Self {
        self.detunings.push(Detuning { index, waveform, scale });
        self
    }

    /// Add a channel; zero-rate channels are dropped.
    pub fn channel(mut self, channel: DecayChannel) -> Self {
        if channel.rate != 0.0 {
            self.channels.push(channel);
        }
        self
    }

    pub fn initial_state(mut self, state: StateVector) -> Self {
        self.initial_state = Some(state);
        self
    }

    pub fn duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    pub fn build(self) -> Result<ModelSpec> {
        let dim = self.labels.len();
        let initial_state = match self.initial_state {
            Some(s) => s,
            None => StateVector::basis(dim, 0)?,
        };
        ModelSpec::new(
            self.name,
            self.labels,
            self.couplings,
            self.detunings,
            self.channels,
            initial_state,
            self.duration,
        )
    }
}

/// Number of random times at which the assembled Hamiltonian is checked.
pub const HERMITICITY_SAMPLES: usize = 16;

impl ModelSpec {
    pub fn new(
        name: String,
        labels: Vec<String>,
        couplings: Vec<Coupling>,
        detunings: Vec<Detuning>,
        channels: Vec<DecayChannel>,
        initial_state: StateVector,
        duration: f64,
    ) -> Result<Self> {
        let dim = labels.len();
        if dim == 0 {
            return Err(invalid("model needs at least one basis state"));
        }
        if initial_state.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: initial_state.dim() });
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(invalid(format!("model duration must be > 0, got {duration}")));
        }
        for c in &couplings {
            if c.row >= dim || c.col >= dim {
                return Err(invalid(format!("coupling ({}, {}) out of range", c.row, c.col)));
            }
            if c.row == c.col {
                return Err(invalid("couplings must be off-diagonal; use a detuning entry"));
            }
        }
        for d in &detunings {
            if d.index >= dim {
                return Err(invalid(format!("detuning index {} out of range", d.index)));
            }
        }
        for ch in &channels {
            ch.validate(dim)?;
        }
        let half = decay_diagonal(&channels, dim)?;
        let lossy = half.iter().copied().enumerate().filter(|&(_, d)| d != 0.0).collect();
        let model = Self { name, labels, couplings, detunings, channels, initial_state, duration, lossy };

        let defect = (0..HERMITICITY_SAMPLES)
            .map(|k| model.hermiticity_defect(model.duration * (k as f64 + 0.5) / HERMITICITY_SAMPLES as f64))
            .fold(0.0, f64::max);
        if !(defect < 1e-12) {
            return Err(invalid(format!("drive Hamiltonian is not Hermitian (defect {defect})")));
        }
        Ok(model)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn detunings(&self) -> &[Detuning] {
        &self.detunings
    }

    pub fn channels(&self) -> &[DecayChannel] {
        &self.channels
    }

    pub fn initial_state(&self) -> &StateVector {
        &self.initial_state
    }

    /// Natural evolution span `[0, duration]` in µs.
    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Sum of channel rates leaving basis state `index`.
    pub fn total_rate(&self, index: usize) -> f64 {
        self.channels.iter().filter(|c| c.source == index).map(|c| c.rate).sum()
    }

    pub fn has_decay(&self) -> bool {
        !self.lossy.is_empty()
    }

    pub fn with_initial_state(&self, state: StateVector) -> Result<Self> {
        if state.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: state.dim() });
        }
        let mut m = self.clone();
        m.initial_state = state;
        Ok(m)
    }

    /// Same drive, all channels removed.
    pub fn without_decay(&self) -> Self {
        let mut m = self.clone();
        m.channels.clear();
        m.lossy.clear();
        m
    }

    /// Same drive with every decay rate multiplied by `factor` (≥ 0).
    pub fn with_scaled_rates(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(invalid("rate scale factor must be >= 0"));
        }
        let channels = self
            .channels
            .iter()
            .filter(|_| factor != 0.0)
            .map(|c| DecayChannel { rate: c.rate * factor, ..c.clone() })
            .collect();
        Self::new(
            self.name.clone(),
            self.labels.clone(),
            self.couplings.clone(),
            self.detunings.clone(),
            channels,
            self.initial_state.clone(),
            self.duration,
        )
    }

    /// Dense `H_U(t)/ħ`, row-major.
    pub fn hamiltonian(&self, t: f64) -> Vec<Vec<C64>> {
        let n = self.dim();
        let mut h = vec![vec![C64::new(0.0, 0.0); n]; n];
        for d in &self.detunings {
            h[d.index][d.index] += d.scale * d.waveform.value(t);
        }
        for c in &self.couplings {
            let v = c.factor * c.waveform.value(t);
            h[c.row][c.col] += v;
            h[c.col][c.row] += v.conj();
        }
        h
    }

    /// max |H - H†| over all entries at time `t`.
    pub fn hermiticity_defect(&self, t: f64) -> f64 {
        let h = self.hamiltonian(t);
        let mut worst: f64 = 0.0;
        for (j, row) in h.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                let d = (v - h[k][j].conj()).norm();
                worst = if d.is_nan() { f64::INFINITY } else { worst.max(d) };
            }
        }
        worst
    }

    /// `γ/2` per basis state.
    pub fn decay_diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim()];
        for &(i, g) in &self.lossy {
            d[i] = g;
        }
        d
    }

    /// Total instantaneous jump rate `Σ_m γ_m |C_m|²` of (possibly unnormalised) amplitudes.
    #[inline]
    pub fn jump_rate(&self, y: &[C64]) -> f64 {
        2.0 * self.lossy.iter().map(|&(i, g)| g * y[i].norm_sqr()).sum::<f64>()
    }

    /// Non-allocating derivative used by the integrators. Only the first
    /// `dim()` entries of `y` and `dy` are touched.
    #[inline]
    pub fn derivative(&self, kind: RhsKind, t: f64, y: &[C64], dy: &mut [C64]) -> Result<()> {
        let n = self.dim();
        let (y, dy) = (&y[..n], &mut dy[..n]);
        dy.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for d in &self.detunings {
            let w = d.scale * d.waveform.value(t);
            if !w.is_finite() {
                return Err(Error::NumericalDomain { t });
            }
            dy[d.index] += mul_neg_i(y[d.index] * w);
        }
        for c in &self.couplings {
            let w = c.waveform.value(t);
            if !w.is_finite() {
                return Err(Error::NumericalDomain { t });
            }
            let h = c.factor * w;
            dy[c.row] += mul_neg_i(h * y[c.col]);
            dy[c.col] += mul_neg_i(h.conj() * y[c.row]);
        }
        match kind {
            RhsKind::Unitary => {}
            RhsKind::Effective => {
                for &(i, g) in &self.lossy {
                    dy[i] -= y[i] * g;
                }
            }
            RhsKind::Second => {
                // Σ(γ/2)|C|² / ‖C‖²: equal to the plain sum on the unit sphere,
                // and d‖C‖²/dt vanishes off it as well.
                let norm: f64 = y.iter().map(|a| a.norm_sqr()).sum();
                let s: f64 = self.lossy.iter().map(|&(i, g)| g * y[i].norm_sqr()).sum::<f64>() / norm;
                if s != 0.0 && s.is_finite() {
                    for (d, a) in dy.iter_mut().zip(y) {
                        *d += a * s;
                    }
                }
                for &(i, g) in &self.lossy {
                    dy[i] -= y[i] * g;
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn mul_neg_i(z: C64) -> C64 {
    C64::new(z.im, -z.re)
}

/// Half-rates `γ/2` summed per source state; `H_D/ħ = -i·diag(d)`.
pub fn decay_diagonal(channels: &[DecayChannel], dim: usize) -> Result<Vec<f64>> {
    let mut d = vec![0.0; dim];
    for ch in channels {
        if ch.source >= dim {
            return Err(invalid(format!("channel source {} out of range for dimension {dim}", ch.source)));
        }
        d[ch.source] += ch.rate / 2.0;
    }
    Ok(d)
}

/// `Σ_m (γ_m/2)|C_m|²`; `H_R/ħ = +i·(this)·I`.
pub fn renorm_scalar(channels: &[DecayChannel], state: &StateVector) -> Result<f64> {
    let d = decay_diagonal(channels, state.dim())?;
    Ok(d.iter().zip(state.amplitudes()).map(|(g, a)| g * a.norm_sqr()).sum())
}

fn check_dim(model: &ModelSpec, state: &StateVector) -> Result<()> {
    if state.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: state.dim() });
    }
    Ok(())
}

fn eval_rhs(kind: RhsKind, model: &ModelSpec, t: f64, state: &StateVector) -> Result<Vec<C64>> {
    check_dim(model, state)?;
    let mut dy = vec![C64::new(0.0, 0.0); model.dim()];
    model.derivative(kind, t, state.amplitudes(), &mut dy)?;
    Ok(dy)
}

/// Derivative of the no-decay conditioned evolution.
///
/// The renormalisation term is divided by `‖C‖²`, so the norm of the input is
/// carried along unchanged; drift beyond 1e-6 is logged.
pub fn second_rhs(model: &ModelSpec, t: f64, state: &StateVector) -> Result<Vec<C64>> {
    let n = state.norm_sqr();
    if (n - 1.0).abs() > 1e-6 {
        log::warn!("second_rhs called with norm² = {n} at t = {t}");
    }
    eval_rhs(RhsKind::Second, model, t, state)
}

pub fn effective_rhs(model: &ModelSpec, t: f64, state: &StateVector) -> Result<Vec<C64>> {
    eval_rhs(RhsKind::Effective, model, t, state)
}

pub fn unitary_rhs(model: &ModelSpec, t: f64, state: &StateVector) -> Result<Vec<C64>> {
    eval_rhs(RhsKind::Unitary, model, t, state)
}
