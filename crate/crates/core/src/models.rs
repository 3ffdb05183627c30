//! Concrete atomic systems: two-level atom, Raman Λ system, readout and the
//! Rydberg-blockade CZ gate, with the reference pulse parameters as presets.
//!
//! Rates and frequencies are angular (rad/µs), times in µs.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use crate::dynamics::{Branch, DecayChannel, ModelBuilder, ModelSpec, StateVector, C64};
use crate::error::{invalid, Result};
use crate::waveform::Waveform;

/// Raman π/2 pulse, reference time 1 µs.
pub const SINGLE_QUBIT_COEFFS: [f64; 6] = [208.05, -92.59, -3.66, -3.35, -2.38, -2.03];
/// CZ probe pulse Ω_p, reference time 0.25 µs.
pub const CZ_PROBE_COEFFS: [f64; 6] = [2338.8, -1082.4, 230.9, -176.6, -138.9, -2.3];

pub const SINGLE_QUBIT_TAU_US: f64 = 1.0;
pub const CZ_TAU_US: f64 = 0.25;

/// Amplitude scale applied to the π/2 pulse to obtain a π light-shift phase
/// on |1⟩ at the default one-photon detuning.
pub const PHASE_GATE_SCALE: f64 = 2.0;

fn mhz(x: f64) -> f64 {
    TAU * x
}

fn check_rate(name: &str, r: f64) -> Result<()> {
    if r.is_finite() && r >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be a finite rate >= 0, got {r}")))
    }
}

fn check_duration(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("duration must be > 0, got {t}")))
    }
}

/// (|0⟩ + |1⟩)/√2 embedded in a `dim`-state basis.
pub fn equal_superposition(dim: usize) -> Result<StateVector> {
    if dim < 2 {
        return Err(invalid("superposition needs at least two states"));
    }
    let mut v = vec![C64::new(0.0, 0.0); dim];
    v[0] = C64::new(FRAC_1_SQRT_2, 0.0);
    v[1] = C64::new(FRAC_1_SQRT_2, 0.0);
    StateVector::new(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLevelParams {
    pub omega: Waveform,
    pub delta: Waveform,
    pub gamma_x: f64,
    pub gamma_y: f64,
    /// Jump targets for |g⟩ decay; none exist inside a two-level basis.
    pub x_branches: Option<Vec<Branch>>,
    pub y_branches: Option<Vec<Branch>>,
    pub duration: f64,
}

impl Default for TwoLevelParams {
    fn default() -> Self {
        Self {
            omega: Waveform::constant_mhz(1.0),
            delta: Waveform::zero(),
            gamma_x: 0.0,
            gamma_y: mhz(1.0),
            x_branches: None,
            y_branches: Some(vec![Branch { target: 0, weight: 1.0 }]),
            duration: 1.0,
        }
    }
}

pub fn two_level_model(p: &TwoLevelParams) -> Result<ModelSpec> {
    check_rate("gamma_x", p.gamma_x)?;
    check_rate("gamma_y", p.gamma_y)?;
    check_duration(p.duration)?;
    let mut x = DecayChannel::new("g", 0, p.gamma_x);
    x.branches = p.x_branches.clone();
    let mut y = DecayChannel::new("e", 1, p.gamma_y);
    y.branches = p.y_branches.clone();
    ModelBuilder::new("two-level", ["g", "e"])
        .coupling(0, 1, p.omega.clone(), 0.5)
        .detuning(1, p.delta.clone())
        .channel(x)
        .channel(y)
        .duration(p.duration)
        .build()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RamanParams {
    pub omega0: Waveform,
    pub omega1: Waveform,
    /// One-photon detuning Δ on |e⟩.
    pub delta_one: Waveform,
    /// Two-photon detuning δ on |1⟩.
    pub delta_two: Waveform,
    pub gamma: f64,
    /// Branching of |e⟩ decay into (|0⟩, |1⟩).
    pub branch_weights: [f64; 2],
    pub duration: f64,
    pub initial_state: Option<StateVector>,
}

impl Default for RamanParams {
    fn default() -> Self {
        let pulse = Waveform::fourier(SINGLE_QUBIT_COEFFS.to_vec(), SINGLE_QUBIT_TAU_US)
            .expect("reference coefficients are valid");
        Self {
            omega0: pulse.clone(),
            omega1: pulse,
            delta_one: Waveform::constant_mhz(1000.0),
            delta_two: Waveform::zero(),
            gamma: mhz(1.0),
            branch_weights: [0.5, 0.5],
            duration: SINGLE_QUBIT_TAU_US,
            initial_state: None,
        }
    }
}

impl RamanParams {
    /// Phase-gate configuration: Ω0 = 0 and a stronger Ω1.
    pub fn phase_gate() -> Self {
        let base = Self::default();
        Self {
            omega0: Waveform::zero(),
            omega1: base.omega1.scaled(PHASE_GATE_SCALE),
            initial_state: Some(equal_superposition(3).expect("dimension 3")),
            ..base
        }
    }
}

pub fn raman_model(p: &RamanParams) -> Result<ModelSpec> {
    raman_named("raman", p)
}

/// Raman model with an explicit model name.
pub fn raman_named(name: &str, p: &RamanParams) -> Result<ModelSpec> {
    check_rate("gamma", p.gamma)?;
    check_duration(p.duration)?;
    let [w0, w1] = p.branch_weights;
    let branches: Vec<Branch> = [(0, w0), (1, w1)]
        .into_iter()
        .filter(|&(_, w)| w != 0.0)
        .map(|(target, weight)| Branch { target, weight })
        .collect();
    let mut b = ModelBuilder::new(name, ["0", "1", "e"])
        .coupling(0, 2, p.omega0.clone(), 0.5)
        .coupling(1, 2, p.omega1.clone(), 0.5)
        .detuning(1, p.delta_two.clone())
        .detuning(2, p.delta_one.clone())
        .channel(DecayChannel::new("e", 2, p.gamma).with_branches(branches))
        .duration(p.duration);
    if let Some(s) = &p.initial_state {
        b = b.initial_state(s.clone());
    }
    b.build()
}

/// Λ system with only |1⟩ driven, starting from (|0⟩ + |1⟩)/√2.
pub fn readout_model(omega1: Waveform, delta: Waveform, gamma: f64, duration: f64) -> Result<ModelSpec> {
    let p = RamanParams {
        omega0: Waveform::zero(),
        omega1,
        delta_one: delta,
        delta_two: Waveform::zero(),
        gamma,
        branch_weights: [0.5, 0.5],
        duration,
        initial_state: Some(equal_superposition(3)?),
    };
    raman_named("readout", &p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RydbergCZParams {
    pub omega_p: Waveform,
    pub omega_s: Waveform,
    /// One-photon detuning Δ of the intermediate state.
    pub delta_one: f64,
    /// Two-photon detuning δ of the Rydberg state.
    pub delta_two: f64,
    /// Förster coupling B between |rr⟩ and |qq'⟩.
    pub b: f64,
    /// Energy offset of |qq'⟩ relative to 2δ.
    pub delta_q: f64,
    pub gamma_e: f64,
    pub gamma_r: f64,
    pub gate_time: f64,
}

impl Default for RydbergCZParams {
    fn default() -> Self {
        Self {
            omega_p: Waveform::fourier(CZ_PROBE_COEFFS.to_vec(), CZ_TAU_US).expect("reference coefficients are valid"),
            omega_s: Waveform::constant_mhz(350.0),
            delta_one: mhz(5000.0),
            delta_two: mhz(-0.53),
            b: mhz(100.0),
            delta_q: 0.0,
            gamma_e: mhz(5.0),
            gamma_r: mhz(0.01),
            gate_time: CZ_TAU_US,
        }
    }
}

impl RydbergCZParams {
    fn validate(&self) -> Result<()> {
        check_rate("gamma_e", self.gamma_e)?;
        check_rate("gamma_r", self.gamma_r)?;
        check_duration(self.gate_time)?;
        for (name, v) in [("delta_one", self.delta_one), ("delta_two", self.delta_two), ("b", self.b), ("delta_q", self.delta_q)] {
            if !v.is_finite() {
                return Err(invalid(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    pub fn with_rates(&self, gamma_e: f64, gamma_r: f64) -> Self {
        Self { gamma_e, gamma_r, ..self.clone() }
    }
}

/// Which single-body CZ process: only the first or only the second atom is in |1⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingleBody {
    TenState,
    ZeroOne,
}

impl SingleBody {
    pub fn label(self) -> &'static str {
        match self {
            SingleBody::TenState => "10",
            SingleBody::ZeroOne => "01",
        }
    }
}

impl std::str::FromStr for SingleBody {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "10" => Ok(SingleBody::TenState),
            "01" => Ok(SingleBody::ZeroOne),
            other => Err(invalid(format!("single-body process must be \"10\" or \"01\", got {other:?}"))),
        }
    }
}

fn ground_branches(sink0: usize, sink1: usize) -> Vec<Branch> {
    vec![Branch { target: sink0, weight: 0.5 }, Branch { target: sink1, weight: 0.5 }]
}

fn lost(target: usize) -> Vec<Branch> {
    vec![Branch { target, weight: 1.0 }]
}

/// Three-state ladder |q⟩ → |e⟩ → |r⟩ plus the sinks `sink0`, `sink1`, `lost`.
pub fn cz_single_body_model(p: &RydbergCZParams, which: SingleBody) -> Result<ModelSpec> {
    p.validate()?;
    let labels = match which {
        SingleBody::TenState => ["10", "e0", "r0"],
        SingleBody::ZeroOne => ["01", "0e", "0r"],
    };
    let (s0, s1, sl) = (3, 4, 5);
    let all = labels.iter().copied().chain(["sink0", "sink1", "lost"]);
    ModelBuilder::new(format!("cz-single-{}", which.label()), all)
        .coupling(0, 1, p.omega_p.clone(), 0.5)
        .coupling(1, 2, p.omega_s.clone(), 0.5)
        .detuning(1, Waveform::constant(p.delta_one))
        .detuning(2, Waveform::constant(p.delta_two))
        .channel(DecayChannel::new("e", 1, p.gamma_e).with_branches(ground_branches(s0, s1)))
        .channel(DecayChannel::new("r", 2, p.gamma_r).with_branches(lost(sl)))
        .duration(p.gate_time)
        .build()
}

/// Symmetric two-atom ladder from |11⟩ up to the Förster pair, plus sinks.
pub fn cz_two_body_model(p: &RydbergCZParams) -> Result<ModelSpec> {
    p.validate()?;
    let (s0, s1, sl) = (6, 7, 8);
    ModelBuilder::new("cz-two-body", ["11", "e~", "r~", "R~", "rr", "qq'", "sink0", "sink1", "lost"])
        .coupling(0, 1, p.omega_p.clone(), FRAC_1_SQRT_2)
        .coupling(1, 2, p.omega_s.clone(), 0.5)
        .coupling(2, 3, p.omega_p.clone(), 0.5)
        .coupling(3, 4, p.omega_s.clone(), FRAC_1_SQRT_2)
        .coupling(4, 5, Waveform::constant(p.b), 1.0)
        .detuning(1, Waveform::constant(p.delta_one))
        .detuning(2, Waveform::constant(p.delta_two))
        .detuning(3, Waveform::constant(p.delta_one + p.delta_two))
        .detuning(4, Waveform::constant(2.0 * p.delta_two))
        .detuning(5, Waveform::constant(2.0 * p.delta_two + p.delta_q))
        .channel(DecayChannel::new("e~", 1, p.gamma_e).with_branches(ground_branches(s0, s1)))
        .channel(DecayChannel::new("r~", 2, p.gamma_r).with_branches(lost(sl)))
        .channel(DecayChannel::new("R~:e", 3, p.gamma_e).with_branches(ground_branches(s0, s1)))
        .channel(DecayChannel::new("R~:r", 3, p.gamma_r).with_branches(lost(sl)))
        .channel(DecayChannel::new("rr", 4, 2.0 * p.gamma_r).with_branches(lost(sl)))
        .channel(DecayChannel::new("qq'", 5, 2.0 * p.gamma_r).with_branches(lost(sl)))
        .duration(p.gate_time)
        .build()
}

/// All three CZ processes for one parameter set, ordered (01, 10, 11).
pub fn cz_models(p: &RydbergCZParams) -> Result<[ModelSpec; 3]> {
    Ok([
        cz_single_body_model(p, SingleBody::ZeroOne)?,
        cz_single_body_model(p, SingleBody::TenState)?,
        cz_two_body_model(p)?,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PresetInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub figures: &'static str,
}

pub const PRESETS: &[PresetInfo] = &[
    PresetInfo {
        name: "two-level",
        description: "resonantly driven two-level atom, 1 MHz Rabi, 1 MHz decay",
        figures: "-",
    },
    PresetInfo {
        name: "raman-pi2",
        description: "Raman pi/2 pulse on |0>,|1>,|e>, detuning 1 GHz, decay 1 MHz",
        figures: "fig2",
    },
    PresetInfo {
        name: "raman-phase",
        description: "light-shift pi phase on |1> (Omega0 = 0), from (|0>+|1>)/sqrt2",
        figures: "supp1",
    },
    PresetInfo {
        name: "readout",
        description: "resonant readout of (|0>+|1>)/sqrt2 with only |1> driven",
        figures: "fig5, supp2",
    },
    PresetInfo {
        name: "cz-single-10",
        description: "CZ single-body ladder from |10>",
        figures: "fig3, supp3",
    },
    PresetInfo {
        name: "cz-single-01",
        description: "CZ single-body ladder from |01>",
        figures: "fig3, supp3",
    },
    PresetInfo {
        name: "cz-two-body",
        description: "CZ two-body ladder from |11> with Forster pair state",
        figures: "fig3, fig4, supp3",
    },
];

/// Default readout drive (rad/µs) and window (µs).
pub const READOUT_OMEGA_MHZ: f64 = 1.0;
pub const READOUT_DURATION_US: f64 = 10.0;

pub fn preset(name: &str) -> Result<ModelSpec> {
    match name {
        "two-level" => two_level_model(&TwoLevelParams::default()),
        "raman-pi2" => raman_named("raman-pi2", &RamanParams::default()),
        "raman-phase" => raman_named("raman-phase", &RamanParams::phase_gate()),
        "readout" => readout_model(
            Waveform::constant_mhz(READOUT_OMEGA_MHZ),
            Waveform::zero(),
            mhz(1.0),
            READOUT_DURATION_US,
        ),
        "cz-single-10" => cz_single_body_model(&RydbergCZParams::default(), SingleBody::TenState),
        "cz-single-01" => cz_single_body_model(&RydbergCZParams::default(), SingleBody::ZeroOne),
        "cz-two-body" => cz_two_body_model(&RydbergCZParams::default()),
        other => Err(invalid(format!("unknown preset `{other}`"))),
    }
}
