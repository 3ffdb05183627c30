//! Monte-Carlo wave-function trajectories with jump collapse, imperfect
//! detection and post-selection.
//!
//! A trajectory advances in sub-steps `dt ≤ max_dt`, shortened so that the
//! first-order jump probability `p = Σ γ |C|² dt` stays at or below
//! `max_jump_prob`. Each sub-step draws `ξ, η ∈ [0, 1)`: a decay happens iff
//! `ξ ≤ p`; `η` decides detection (against `1 − η0`) after a decay and false
//! alarms (against `η1`) otherwise. Without a decay the state follows the
//! conditioned evolution over `[t, t + dt]`.
//!
//! All trajectories of an ensemble start from the same state, so until their
//! first jump they share one deterministic path. That path is integrated once
//! and reused; results are bit-identical to integrating every trajectory.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{ModelSpec, RhsKind, StateVector, C64};
use crate::error::{invalid, Error, Result};
use crate::integrate::{output_times, IntegrationConfig, ModelRhs, Stepper};

/// Amplitudes below this magnitude have no defined phase.
pub const PHASE_FLOOR: f64 = 1e-12;

/// Detector with a constant miss probability and a dark-count rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    /// η0: probability that a real decay goes unnoticed.
    pub miss: f64,
    /// False-alarm rate in 1/µs; η1(dt) = rate·dt, clipped to [0, 1].
    pub dark_rate: f64,
}

impl DetectorModel {
    pub fn perfect() -> Self {
        Self { miss: 0.0, dark_rate: 0.0 }
    }

    pub fn miss_fraction(m: f64) -> Self {
        Self { miss: m, dark_rate: 0.0 }
    }

    pub fn dark_rate(r: f64) -> Self {
        Self { miss: 0.0, dark_rate: r }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.miss) {
            return Err(invalid(format!("detector miss probability {} outside [0, 1]", self.miss)));
        }
        if !(self.dark_rate.is_finite() && self.dark_rate >= 0.0) {
            return Err(invalid("detector dark rate must be >= 0"));
        }
        Ok(())
    }

    pub fn eta0(&self, _dt: f64) -> f64 {
        self.miss
    }

    pub fn eta1(&self, dt: f64) -> f64 {
        (self.dark_rate * dt).clamp(0.0, 1.0)
    }
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self::perfect()
    }
}

/// Which trajectories enter the ensemble average.
#[derive(Debug, Clone, PartialEq)]
pub enum Conditioning {
    /// Every trajectory, jumps included.
    None,
    /// Only trajectories without any decay.
    IdealNoDecay,
    /// Trajectories the detector never flagged.
    Detector(DetectorModel),
    /// Projective measurement onto the listed basis states at the end.
    EndPostselect(Vec<usize>),
}

impl fmt::Display for Conditioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Conditioning::None => f.write_str("none"),
            Conditioning::IdealNoDecay => f.write_str("ideal_no_decay"),
            Conditioning::Detector(d) => write!(f, "detector(miss={}, dark_rate={})", d.miss, d.dark_rate),
            Conditioning::EndPostselect(s) => write!(f, "end_postselect({s:?})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fate {
    Survived,
    StoppedDetectedDecay,
    StoppedFalseAlarm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpRecord {
    /// Time at which the collapsed state takes over (end of the sub-step).
    pub t: f64,
    pub channel: usize,
    pub target: usize,
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryOutcome {
    pub fate: Fate,
    /// State at the horizon; `None` if the trajectory stopped or was
    /// abandoned after a jump under `IdealNoDecay`.
    pub final_state: Option<StateVector>,
    pub jump_log: Vec<JumpRecord>,
    /// States on the output grid up to where the trajectory stopped.
    pub samples: Vec<StateVector>,
    /// Set by end post-selection.
    pub postselected: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McwfConfig {
    pub n: usize,
    pub master_seed: u64,
    pub conditioning: Conditioning,
    /// Horizon in µs.
    pub t_end: f64,
    /// Output times inside `[0, t_end]`; both endpoints are always added.
    pub grid: Vec<f64>,
    pub max_dt: f64,
    pub max_jump_prob: f64,
    pub integration: IntegrationConfig,
    pub use_prefix_cache: bool,
    /// Trajectories per reduction batch; fixed so the result does not depend
    /// on the number of workers.
    pub batch_size: usize,
}

impl McwfConfig {
    pub fn new(n: usize, master_seed: u64, conditioning: Conditioning, t_end: f64) -> Self {
        Self {
            n,
            master_seed,
            conditioning,
            t_end,
            grid: Vec::new(),
            max_dt: 1e-3,
            max_jump_prob: 0.01,
            integration: IntegrationConfig::default(),
            use_prefix_cache: true,
            batch_size: 256,
        }
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Self {
        self.grid = grid;
        self
    }

    fn detector(&self) -> DetectorModel {
        match &self.conditioning {
            Conditioning::Detector(d) => *d,
            _ => DetectorModel::perfect(),
        }
    }

    fn validate(&self, model: &ModelSpec) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("ensemble size must be >= 1"));
        }
        if !(self.max_dt > 0.0 && self.max_dt.is_finite()) {
            return Err(invalid("max_dt must be > 0"));
        }
        if !(self.max_jump_prob > 0.0 && self.max_jump_prob < 1.0) {
            return Err(invalid("max_jump_prob must lie in (0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be >= 1"));
        }
        self.integration.validate()?;
        if let Conditioning::Detector(d) = &self.conditioning {
            d.validate()?;
        }
        if let Conditioning::EndPostselect(sub) = &self.conditioning {
            if sub.is_empty() || sub.iter().any(|&i| i >= model.dim()) {
                return Err(invalid("post-selection subspace must list valid basis indices"));
            }
        }
        for ch in model.channels() {
            if ch.branches.is_none() {
                return Err(Error::Configuration(format!(
                    "decay channel `{}` has no branch targets; trajectories cannot collapse",
                    ch.name
                )));
            }
        }
        if (model.initial_state().norm_sqr() - 1.0).abs() > crate::dynamics::NORM_TOLERANCE {
            return Err(invalid("trajectories must start from a normalised state"));
        }
        Ok(())
    }
}

/// Result of one sub-step decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepEvent {
    /// No decay: evolve without a jump.
    Evolve,
    /// Decay in `channel`, collapsing onto `target`.
    Jump { channel: usize, target: usize, detected: bool },
    /// The detector reported a decay that did not happen.
    FalseAlarm,
}

/// Draw the random decisions for one sub-step of length `dt` from state `y`.
fn decide<R: Rng>(model: &ModelSpec, y: &[C64], rate: f64, dt: f64, det: &DetectorModel, rng: &mut R) -> Result<StepEvent> {
    let xi: f64 = rng.gen();
    let eta: f64 = rng.gen();
    let p = rate * dt;
    if rate > 0.0 && xi <= p {
        let u_channel: f64 = rng.gen();
        let u_branch: f64 = rng.gen();
        let channel = pick_channel(model, y, rate, u_channel);
        let target = pick_branch(model, channel, u_branch)?;
        let detected = eta < 1.0 - det.eta0(dt);
        Ok(StepEvent::Jump { channel, target, detected })
    } else if eta < det.eta1(dt) {
        Ok(StepEvent::FalseAlarm)
    } else {
        Ok(StepEvent::Evolve)
    }
}

fn pick_channel(model: &ModelSpec, y: &[C64], rate: f64, u: f64) -> usize {
    let threshold = u * rate;
    let mut acc = 0.0;
    let mut last = 0;
    for (m, ch) in model.channels().iter().enumerate() {
        let w = ch.rate * y[ch.source].norm_sqr();
        if w > 0.0 {
            acc += w;
            last = m;
            if threshold < acc {
                return m;
            }
        }
    }
    last
}

fn pick_branch(model: &ModelSpec, channel: usize, u: f64) -> Result<usize> {
    let ch = &model.channels()[channel];
    let branches = ch.branches.as_ref().ok_or_else(|| {
        Error::Configuration(format!("decay channel `{}` has no branch targets", ch.name))
    })?;
    let mut acc = 0.0;
    for b in branches {
        acc += b.weight;
        if u < acc {
            return Ok(b.target);
        }
    }
    Ok(branches.last().expect("validated non-empty").target)
}

/// Basis state reached after a decay of `channel` into the branch chosen by
/// `branch_pick` ∈ [0, 1).
pub fn collapse_after_jump(model: &ModelSpec, channel: usize, branch_pick: f64) -> Result<StateVector> {
    if channel >= model.channels().len() {
        return Err(invalid(format!("channel index {channel} out of range")));
    }
    let target = pick_branch(model, channel, branch_pick)?;
    StateVector::basis(model.dim(), target)
}

/// Advance one sub-step of length `dt` from `(t, y)` in place. On a jump `y`
/// becomes the branch target; on a false alarm `y` is left untouched. The
/// stepper carries step-size history between calls and is reset after a jump.
pub fn step_trajectory<R: Rng>(
    model: &ModelSpec,
    stepper: &mut Stepper,
    t: f64,
    y: &mut Vec<C64>,
    dt: f64,
    detector: &DetectorModel,
    rng: &mut R,
) -> Result<StepEvent> {
    let rate = model.jump_rate(y);
    let event = decide(model, y, rate, dt, detector, rng)?;
    match event {
        StepEvent::Evolve => {
            let mut tt = t;
            stepper.advance(&ModelRhs { model, kind: RhsKind::Second }, &mut tt, y, t + dt)?;
        }
        StepEvent::Jump { target, .. } => {
            *y = StateVector::basis(model.dim(), target)?.into_amplitudes();
            stepper.reset();
        }
        StepEvent::FalseAlarm => {}
    }
    Ok(event)
}

/// Reference for [`phase_of`].
#[derive(Debug, Clone, Copy)]
pub enum PhaseReference<'a> {
    Raw,
    RelativeTo(&'a StateVector),
}

/// Wrap an angle into (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

pub fn phase_of(state: &StateVector, index: usize, reference: PhaseReference<'_>) -> Result<f64> {
    let a = *state
        .amplitudes()
        .get(index)
        .ok_or(Error::DimensionMismatch { expected: index + 1, found: state.dim() })?;
    if a.norm() < PHASE_FLOOR {
        return Err(Error::UndefinedPhase { index });
    }
    match reference {
        PhaseReference::Raw => Ok(a.arg()),
        PhaseReference::RelativeTo(r) => {
            let phi_ref = phase_of(r, index, PhaseReference::Raw)?;
            Ok(wrap_phase(a.arg() - phi_ref))
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.comp += other.comp;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub conditioning: String,
    pub n_total: usize,
    pub n_accepted: usize,
    pub n_with_jumps: usize,
    pub n_detected: usize,
    pub n_false_alarm: usize,
    pub grid: Vec<f64>,
    /// `[time][state]`
    pub mean_populations: Vec<Vec<f64>>,
    /// Circular mean of arg(C); NaN where no accepted sample had a defined phase.
    pub mean_phases: Vec<Vec<f64>>,
    pub population_std_err: Vec<Vec<f64>>,
    pub phase_std_err: Vec<Vec<f64>>,
}

impl EnsembleStats {
    pub fn acceptance(&self) -> f64 {
        self.n_accepted as f64 / self.n_total as f64
    }

    /// Binomial standard error of the acceptance fraction.
    pub fn acceptance_std_err(&self) -> f64 {
        let p = self.acceptance();
        (p * (1.0 - p) / self.n_total as f64).sqrt()
    }
}

#[derive(Debug, Clone)]
struct Accumulator {
    n_total: usize,
    n_accepted: usize,
    n_with_jumps: usize,
    n_detected: usize,
    n_false_alarm: usize,
    pop: Vec<CompensatedSum>,
    pop2: Vec<CompensatedSum>,
    cos: Vec<CompensatedSum>,
    sin: Vec<CompensatedSum>,
    n_phase: Vec<u64>,
}

impl Accumulator {
    fn new(len: usize) -> Self {
        Self {
            n_total: 0,
            n_accepted: 0,
            n_with_jumps: 0,
            n_detected: 0,
            n_false_alarm: 0,
            pop: vec![CompensatedSum::default(); len],
            pop2: vec![CompensatedSum::default(); len],
            cos: vec![CompensatedSum::default(); len],
            sin: vec![CompensatedSum::default(); len],
            n_phase: vec![0; len],
        }
    }

    fn record(&mut self, k: usize, dim: usize, state: &[C64]) {
        for (i, a) in state.iter().enumerate() {
            let j = k * dim + i;
            let p = a.norm_sqr();
            self.pop[j].add(p);
            self.pop2[j].add(p * p);
            let r = a.norm();
            if r >= PHASE_FLOOR {
                self.cos[j].add(a.re / r);
                self.sin[j].add(a.im / r);
                self.n_phase[j] += 1;
            }
        }
    }

    fn merge(&mut self, o: &Accumulator) {
        self.n_total += o.n_total;
        self.n_accepted += o.n_accepted;
        self.n_with_jumps += o.n_with_jumps;
        self.n_detected += o.n_detected;
        self.n_false_alarm += o.n_false_alarm;
        for j in 0..self.pop.len() {
            self.pop[j].merge(&o.pop[j]);
            self.pop2[j].merge(&o.pop2[j]);
            self.cos[j].merge(&o.cos[j]);
            self.sin[j].merge(&o.sin[j]);
            self.n_phase[j] += o.n_phase[j];
        }
    }
}

/// The shared no-jump path: per sub-step start time, length, jump rate and
/// the state at the start of the step.
#[derive(Debug)]
struct Prefix {
    t: Vec<f64>,
    dt: Vec<f64>,
    rate: Vec<f64>,
    states: Vec<Vec<C64>>,
    /// Index in `states` of each output time.
    sample_at: Vec<usize>,
    /// State at the horizon.
    last: Vec<C64>,
}

fn sub_step(t: f64, next_out: f64, rate: f64, cfg: &McwfConfig) -> (f64, f64) {
    let mut dt = cfg.max_dt;
    if rate > 0.0 {
        dt = dt.min(cfg.max_jump_prob / rate);
    }
    let remaining = next_out - t;
    if dt >= remaining * (1.0 - 1e-12) {
        (remaining, next_out)
    } else {
        (dt, t + dt)
    }
}

fn build_prefix(model: &ModelSpec, times: &[f64], cfg: &McwfConfig) -> Result<Prefix> {
    let sys = ModelRhs { model, kind: RhsKind::Second };
    let mut stepper = Stepper::new(model.dim(), &cfg.integration);
    let mut y = model.initial_state().amplitudes().to_vec();
    let mut t = times[0];
    let mut out = Prefix { t: vec![], dt: vec![], rate: vec![], states: vec![], sample_at: vec![0], last: vec![] };
    for &next_out in &times[1..] {
        while t < next_out {
            let rate = model.jump_rate(&y);
            let (dt, t_next) = sub_step(t, next_out, rate, cfg);
            out.t.push(t);
            out.dt.push(dt);
            out.rate.push(rate);
            out.states.push(y.clone());
            let mut tt = t;
            stepper.advance(&sys, &mut tt, &mut y, t_next)?;
            t = t_next;
        }
        out.sample_at.push(out.states.len());
    }
    out.last = y;
    Ok(out)
}

struct Runner<'a> {
    model: &'a ModelSpec,
    cfg: &'a McwfConfig,
    times: Vec<f64>,
    detector: DetectorModel,
    prefix: Option<Prefix>,
}

/// Per-trajectory work product before acceptance is known.
struct Walk {
    fate: Fate,
    jumps: Vec<JumpRecord>,
    /// Number of output samples taken from the shared prefix.
    from_prefix: usize,
    own: Vec<Vec<C64>>,
    last: Vec<C64>,
    postselected: Option<bool>,
}

impl<'a> Runner<'a> {
    fn new(model: &'a ModelSpec, cfg: &'a McwfConfig) -> Result<Self> {
        cfg.validate(model)?;
        let times = output_times((0.0, cfg.t_end), &cfg.grid)?;
        let prefix = if cfg.use_prefix_cache { Some(build_prefix(model, &times, cfg)?) } else { None };
        Ok(Self { model, cfg, times, detector: cfg.detector(), prefix })
    }

    fn prefix_sample(&self, k: usize) -> &[C64] {
        let p = self.prefix.as_ref().expect("prefix present");
        if k + 1 == self.times.len() {
            &p.last
        } else {
            &p.states[p.sample_at[k]]
        }
    }

    fn rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.master_seed);
        rng.set_stream(index as u64);
        rng
    }

    fn stop_on_jump(&self) -> bool {
        matches!(self.cfg.conditioning, Conditioning::IdealNoDecay)
    }

    fn walk(&self, index: usize) -> Result<Walk> {
        let model = self.model;
        let mut rng = self.rng(index);
        let mut jumps = Vec::new();
        let mut own: Vec<Vec<C64>> = Vec::new();
        let mut from_prefix = 0;
        let mut t = self.times[0];
        let mut y: Vec<C64>;
        let mut k_out = 1;
        let mut stepper = Stepper::new(model.dim(), &self.cfg.integration);

        // Shared no-jump prefix.
        match &self.prefix {
            Some(p) => {
                from_prefix = 1;
                let mut s = 0;
                let mut left_at = None;
                while s < p.t.len() {
                    let event = decide(model, &p.states[s], p.rate[s], p.dt[s], &self.detector, &mut rng)?;
                    let t_next = if s + 1 < p.t.len() { p.t[s + 1] } else { self.times[self.times.len() - 1] };
                    match event {
                        StepEvent::Evolve => {}
                        StepEvent::FalseAlarm => {
                            return Ok(Walk { fate: Fate::StoppedFalseAlarm, jumps, from_prefix, own, last: vec![], postselected: None });
                        }
                        StepEvent::Jump { channel, target, detected } => {
                            jumps.push(JumpRecord { t: t_next, channel, target, detected });
                            if detected && matches!(self.cfg.conditioning, Conditioning::Detector(_)) {
                                return Ok(Walk { fate: Fate::StoppedDetectedDecay, jumps, from_prefix, own, last: vec![], postselected: None });
                            }
                            if self.stop_on_jump() {
                                return Ok(Walk { fate: Fate::Survived, jumps, from_prefix, own, last: vec![], postselected: None });
                            }
                            left_at = Some((s, t_next, target));
                            break;
                        }
                    }
                    s += 1;
                    while k_out < self.times.len() && p.sample_at[k_out] == s {
                        from_prefix += 1;
                        k_out += 1;
                    }
                }
                match left_at {
                    None => {
                        let last = p.last.clone();
                        return self.finish(Walk { fate: Fate::Survived, jumps, from_prefix, own, last, postselected: None }, &mut rng);
                    }
                    Some((_, t_next, target)) => {
                        t = t_next;
                        y = StateVector::basis(model.dim(), target)?.into_amplitudes();
                        // a jump that lands on an output time is recorded there
                        while k_out < self.times.len() && self.times[k_out] == t {
                            own.push(y.clone());
                            k_out += 1;
                        }
                    }
                }
            }
            None => {
                y = model.initial_state().amplitudes().to_vec();
                own.push(y.clone());
            }
        }

        // Individual evolution.
        while k_out < self.times.len() {
            let next_out = self.times[k_out];
            while t < next_out {
                let rate = model.jump_rate(&y);
                let (dt, t_next) = sub_step(t, next_out, rate, self.cfg);
                let event = decide(model, &y, rate, dt, &self.detector, &mut rng)?;
                match event {
                    StepEvent::Evolve => {
                        let mut tt = t;
                        stepper.advance(&ModelRhs { model, kind: RhsKind::Second }, &mut tt, &mut y, t_next)?;
                    }
                    StepEvent::FalseAlarm => {
                        return Ok(Walk { fate: Fate::StoppedFalseAlarm, jumps, from_prefix, own, last: vec![], postselected: None });
                    }
                    StepEvent::Jump { channel, target, detected } => {
                        jumps.push(JumpRecord { t: t_next, channel, target, detected });
                        if detected && matches!(self.cfg.conditioning, Conditioning::Detector(_)) {
                            return Ok(Walk { fate: Fate::StoppedDetectedDecay, jumps, from_prefix, own, last: vec![], postselected: None });
                        }
                        if self.stop_on_jump() {
                            return Ok(Walk { fate: Fate::Survived, jumps, from_prefix, own, last: vec![], postselected: None });
                        }
                        y = StateVector::basis(model.dim(), target)?.into_amplitudes();
                        stepper.reset();
                    }
                }
                t = t_next;
            }
            own.push(y.clone());
            k_out += 1;
        }
        self.finish(Walk { fate: Fate::Survived, jumps, from_prefix, own, last: y, postselected: None }, &mut rng)
    }

    fn finish(&self, mut w: Walk, rng: &mut ChaCha8Rng) -> Result<Walk> {
        if let Conditioning::EndPostselect(sub) = &self.cfg.conditioning {
            let weight: f64 = sub.iter().map(|&i| w.last[i].norm_sqr()).sum();
            let total: f64 = w.last.iter().map(|a| a.norm_sqr()).sum();
            let u: f64 = rng.gen();
            let keep = weight > 0.0 && u * total < weight;
            if keep {
                let scale = 1.0 / weight.sqrt();
                let mut projected = vec![C64::new(0.0, 0.0); w.last.len()];
                for &i in sub {
                    projected[i] = w.last[i] * scale;
                }
                // the final output sample is the post-measurement state
                if w.own.is_empty() {
                    w.from_prefix -= 1;
                } else {
                    w.own.pop();
                }
                w.own.push(projected.clone());
                w.last = projected;
            }
            w.postselected = Some(keep);
        }
        Ok(w)
    }

    fn accepted(&self, w: &Walk) -> bool {
        match &self.cfg.conditioning {
            Conditioning::None => true,
            Conditioning::IdealNoDecay => w.jumps.is_empty(),
            Conditioning::Detector(_) => w.fate == Fate::Survived,
            Conditioning::EndPostselect(_) => w.postselected == Some(true),
        }
    }

    fn sample(&self, w: &'_ Walk, k: usize) -> Vec<C64> {
        if k < w.from_prefix {
            self.prefix_sample(k).to_vec()
        } else {
            w.own[k - w.from_prefix].clone()
        }
    }

    fn outcome(&self, index: usize) -> Result<TrajectoryOutcome> {
        let w = self.walk(index)?;
        let reached = w.fate == Fate::Survived && (!w.last.is_empty());
        let n_samples = w.from_prefix + w.own.len();
        let samples = (0..n_samples).map(|k| StateVector::from_raw(self.sample(&w, k))).collect();
        Ok(TrajectoryOutcome {
            fate: w.fate,
            final_state: if reached { Some(StateVector::from_raw(w.last.clone())) } else { None },
            jump_log: w.jumps,
            samples,
            postselected: w.postselected,
        })
    }

    fn batch(&self, b: usize) -> Result<Accumulator> {
        let dim = self.model.dim();
        let n_times = self.times.len();
        let mut acc = Accumulator::new(n_times * dim);
        let lo = b * self.cfg.batch_size;
        let hi = (lo + self.cfg.batch_size).min(self.cfg.n);
        for index in lo..hi {
            let w = self.walk(index)?;
            acc.n_total += 1;
            if !w.jumps.is_empty() {
                acc.n_with_jumps += 1;
            }
            match w.fate {
                Fate::StoppedDetectedDecay => acc.n_detected += 1,
                Fate::StoppedFalseAlarm => acc.n_false_alarm += 1,
                Fate::Survived => {}
            }
            if self.accepted(&w) {
                acc.n_accepted += 1;
                for k in 0..n_times {
                    if k < w.from_prefix {
                        acc.record(k, dim, self.prefix_sample(k));
                    } else {
                        acc.record(k, dim, &w.own[k - w.from_prefix]);
                    }
                }
            }
        }
        Ok(acc)
    }
}

/// A single trajectory of an ensemble, for inspection.
pub fn run_trajectory(model: &ModelSpec, cfg: &McwfConfig, index: usize) -> Result<TrajectoryOutcome> {
    Runner::new(model, cfg)?.outcome(index)
}

/// Run `cfg.n` trajectories and average the accepted ones on the grid.
///
/// Trajectory `i` draws from stream `i` of a ChaCha8 generator keyed by the
/// master seed, and partial sums are formed in fixed batches merged in index
/// order, so the result is independent of the thread pool size.
pub fn run_ensemble(model: &ModelSpec, cfg: &McwfConfig) -> Result<EnsembleStats> {
    let runner = Runner::new(model, cfg)?;
    let n_batches = cfg.n.div_ceil(cfg.batch_size);
    let parts: Vec<Accumulator> = (0..n_batches).into_par_iter().map(|b| runner.batch(b)).collect::<Result<_>>()?;
    let dim = model.dim();
    let n_times = runner.times.len();
    let mut acc = Accumulator::new(n_times * dim);
    for p in &parts {
        acc.merge(p);
    }
    if acc.n_accepted == 0 {
        return Err(Error::EmptyEnsemble { mode: cfg.conditioning.to_string() });
    }

    let n = acc.n_accepted as f64;
    let table = |f: &dyn Fn(usize) -> f64| -> Vec<Vec<f64>> {
        (0..n_times).map(|k| (0..dim).map(|i| f(k * dim + i)).collect()).collect()
    };
    let mean_populations = table(&|j| acc.pop[j].value() / n);
    let population_std_err = table(&|j| {
        if acc.n_accepted < 2 {
            return 0.0;
        }
        let m = acc.pop[j].value() / n;
        let var = ((acc.pop2[j].value() - n * m * m) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    });
    let mean_phases = table(&|j| {
        if acc.n_phase[j] == 0 {
            f64::NAN
        } else {
            acc.sin[j].value().atan2(acc.cos[j].value())
        }
    });
    let phase_std_err = table(&|j| {
        let np = acc.n_phase[j] as f64;
        if np == 0.0 {
            return f64::NAN;
        }
        let r = (acc.sin[j].value().hypot(acc.cos[j].value()) / np).min(1.0);
        (-2.0 * r.ln()).max(0.0).sqrt() / np.sqrt()
    });

    Ok(EnsembleStats {
        conditioning: cfg.conditioning.to_string(),
        n_total: acc.n_total,
        n_accepted: acc.n_accepted,
        n_with_jumps: acc.n_with_jumps,
        n_detected: acc.n_detected,
        n_false_alarm: acc.n_false_alarm,
        grid: runner.times,
        mean_populations,
        mean_phases,
        population_std_err,
        phase_std_err,
    })
}
