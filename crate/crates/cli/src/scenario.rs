//! Turn a scenario file into core models with every default made explicit.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use second_lab_core::models::{
    raman_named, CZ_PROBE_COEFFS, CZ_TAU_US, PHASE_GATE_SCALE, READOUT_DURATION_US, READOUT_OMEGA_MHZ,
    SINGLE_QUBIT_COEFFS, SINGLE_QUBIT_TAU_US,
};
use second_lab_core::{
    cz_single_body_model, cz_two_body_model, two_level_model, uniform_grid, Branch, DecayChannel, ModelBuilder,
    ModelSpec, RamanParams, RydbergCZParams, SingleBody, StateVector, TwoLevelParams, Waveform, WaveformSpec, C64,
    PRESETS,
};

use crate::config::{GridSection, InitialStateSpec, ModelSection, RunKind, ScenarioConfig, DEFAULT_GRID_POINTS};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    TwoLevel,
    Raman,
    Cz(Option<SingleBody>),
    Custom,
}

const SHARED_KEYS: &[&str] = &["duration_us", "initial_state"];
const TWO_LEVEL_KEYS: &[&str] = &["omega", "delta", "gamma_x_mhz", "gamma_y_mhz"];
const RAMAN_KEYS: &[&str] = &["omega0", "omega1", "delta_one", "delta_two", "gamma_mhz", "branch_weights"];
const CZ_KEYS: &[&str] = &[
    "omega_p",
    "omega_s",
    "delta_one_mhz",
    "delta_two_mhz",
    "b_mhz",
    "delta_q_mhz",
    "gamma_e_mhz",
    "gamma_r_mhz",
];
const CUSTOM_KEYS: &[&str] = &["labels", "couplings", "detunings", "channels"];

impl Family {
    pub fn of(scenario: &str) -> Result<Family, CliError> {
        Ok(match scenario {
            "two-level" => Family::TwoLevel,
            "raman-pi2" | "raman-phase" | "readout" => Family::Raman,
            "cz-single-10" => Family::Cz(Some(SingleBody::TenState)),
            "cz-single-01" => Family::Cz(Some(SingleBody::ZeroOne)),
            "cz-two-body" => Family::Cz(None),
            "custom" => Family::Custom,
            other => {
                let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
                return Err(CliError::Schema(format!(
                    "scenario: unknown preset `{other}` (expected one of {}, or custom)",
                    names.join(", ")
                )));
            }
        })
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Family::TwoLevel => TWO_LEVEL_KEYS,
            Family::Raman => RAMAN_KEYS,
            Family::Cz(_) => CZ_KEYS,
            Family::Custom => CUSTOM_KEYS,
        }
    }
}

fn constant(mhz: f64) -> Option<WaveformSpec> {
    Some(WaveformSpec::Constant { mhz })
}

fn fourier(coeffs: &[f64], tau_us: f64) -> Option<WaveformSpec> {
    Some(WaveformSpec::Fourier { coeffs: coeffs.to_vec(), tau_us })
}

fn label(l: &str) -> Option<InitialStateSpec> {
    Some(InitialStateSpec { label: Some(l.to_string()), amplitudes: None })
}

fn superposition() -> Option<InitialStateSpec> {
    let a = [FRAC_1_SQRT_2, 0.0];
    Some(InitialStateSpec { label: None, amplitudes: Some(vec![a, a, [0.0, 0.0]]) })
}

/// Parameters of a preset in scenario-file units.
pub fn preset_defaults(scenario: &str) -> Result<ModelSection, CliError> {
    let m = match scenario {
        "two-level" => ModelSection {
            duration_us: Some(1.0),
            initial_state: label("g"),
            omega: constant(1.0),
            delta: constant(0.0),
            gamma_x_mhz: Some(0.0),
            gamma_y_mhz: Some(1.0),
            ..Default::default()
        },
        "raman-pi2" => ModelSection {
            duration_us: Some(SINGLE_QUBIT_TAU_US),
            initial_state: label("0"),
            omega0: fourier(&SINGLE_QUBIT_COEFFS, SINGLE_QUBIT_TAU_US),
            omega1: fourier(&SINGLE_QUBIT_COEFFS, SINGLE_QUBIT_TAU_US),
            delta_one: constant(1000.0),
            delta_two: constant(0.0),
            gamma_mhz: Some(1.0),
            branch_weights: Some([0.5, 0.5]),
            ..Default::default()
        },
        "raman-phase" => {
            let scaled: Vec<f64> = SINGLE_QUBIT_COEFFS.iter().map(|c| c * PHASE_GATE_SCALE).collect();
            ModelSection {
                initial_state: superposition(),
                omega0: constant(0.0),
                omega1: fourier(&scaled, SINGLE_QUBIT_TAU_US),
                ..preset_defaults("raman-pi2")?
            }
        }
        "readout" => ModelSection {
            duration_us: Some(READOUT_DURATION_US),
            initial_state: superposition(),
            omega0: constant(0.0),
            omega1: constant(READOUT_OMEGA_MHZ),
            delta_one: constant(0.0),
            delta_two: constant(0.0),
            gamma_mhz: Some(1.0),
            branch_weights: Some([0.5, 0.5]),
            ..Default::default()
        },
        "cz-single-10" | "cz-single-01" | "cz-two-body" => ModelSection {
            duration_us: Some(CZ_TAU_US),
            initial_state: label(match scenario {
                "cz-single-10" => "10",
                "cz-single-01" => "01",
                _ => "11",
            }),
            omega_p: fourier(&CZ_PROBE_COEFFS, CZ_TAU_US),
            omega_s: constant(350.0),
            delta_one_mhz: Some(5000.0),
            delta_two_mhz: Some(-0.53),
            b_mhz: Some(100.0),
            delta_q_mhz: Some(0.0),
            gamma_e_mhz: Some(5.0),
            gamma_r_mhz: Some(0.01),
            ..Default::default()
        },
        "custom" => ModelSection::default(),
        other => return Err(CliError::Schema(format!("scenario: unknown preset `{other}`"))),
    };
    Ok(m)
}

fn schema(msg: impl Into<String>) -> CliError {
    CliError::Schema(msg.into())
}

fn need<T: Clone>(v: &Option<T>, field: &str) -> Result<T, CliError> {
    v.clone().ok_or_else(|| schema(format!("model.{field} is required")))
}

fn waveform(spec: &Option<WaveformSpec>, field: &str) -> Result<Waveform, CliError> {
    let spec = need(spec, field)?;
    Waveform::try_from(&spec).map_err(|e| schema(format!("model.{field}: {e}")))
}

fn rate(v: &Option<f64>, field: &str) -> Result<f64, CliError> {
    let x = need(v, field)?;
    if !(x.is_finite() && x >= 0.0) {
        return Err(schema(format!("model.{field} must be a finite rate >= 0, got {x}")));
    }
    Ok(TAU * x)
}

fn finite(v: &Option<f64>, field: &str) -> Result<f64, CliError> {
    let x = need(v, field)?;
    if !x.is_finite() {
        return Err(schema(format!("model.{field} must be finite")));
    }
    Ok(x)
}

fn field_err(field: &str) -> impl Fn(second_lab_core::Error) -> CliError + '_ {
    move |e| schema(format!("model.{field}: {e}"))
}

fn initial_state(spec: &InitialStateSpec, model: &ModelSpec) -> Result<StateVector, CliError> {
    match (&spec.label, &spec.amplitudes) {
        (Some(l), None) => {
            let i = model.index_of(l).ok_or_else(|| {
                schema(format!("model.initial_state.label: `{l}` is not a basis state of {}", model.name()))
            })?;
            StateVector::basis(model.dim(), i).map_err(field_err("initial_state"))
        }
        (None, Some(a)) => {
            let v = a.iter().map(|&[re, im]| C64::new(re, im)).collect();
            StateVector::new(v).map_err(field_err("initial_state.amplitudes"))
        }
        _ => Err(schema("model.initial_state needs exactly one of `label` or `amplitudes`")),
    }
}

fn check_keys(scenario: &str, family: Family, m: &ModelSection, prefix: &str) -> Result<(), CliError> {
    for key in m.present_keys() {
        if !SHARED_KEYS.contains(&key) && !family.keys().contains(&key) {
            return Err(schema(format!("{prefix}.{key} does not apply to scenario `{scenario}`")));
        }
    }
    Ok(())
}

fn cz_params(m: &ModelSection) -> Result<RydbergCZParams, CliError> {
    Ok(RydbergCZParams {
        omega_p: waveform(&m.omega_p, "omega_p")?,
        omega_s: waveform(&m.omega_s, "omega_s")?,
        delta_one: TAU * finite(&m.delta_one_mhz, "delta_one_mhz")?,
        delta_two: TAU * finite(&m.delta_two_mhz, "delta_two_mhz")?,
        b: TAU * finite(&m.b_mhz, "b_mhz")?,
        delta_q: TAU * finite(&m.delta_q_mhz, "delta_q_mhz")?,
        gamma_e: rate(&m.gamma_e_mhz, "gamma_e_mhz")?,
        gamma_r: rate(&m.gamma_r_mhz, "gamma_r_mhz")?,
        gate_time: finite(&m.duration_us, "duration_us")?,
    })
}

fn custom_model(m: &ModelSection) -> Result<ModelSpec, CliError> {
    let labels = need(&m.labels, "labels")?;
    if let Some(bad) = labels.iter().find(|l| l.contains([',', '"']) || l.is_empty()) {
        return Err(schema(format!("model.labels: `{bad}` must be non-empty without commas or quotes")));
    }
    let idx = |field: &str, l: &str| {
        labels.iter().position(|x| x == l).ok_or_else(|| schema(format!("model.{field}: unknown state `{l}`")))
    };
    let mut b = ModelBuilder::new("custom", labels.iter().cloned());
    for c in m.couplings.iter().flatten() {
        let w = Waveform::try_from(&c.waveform).map_err(field_err("couplings.waveform"))?;
        b = b.coupling(idx("couplings.from", &c.from)?, idx("couplings.to", &c.to)?, w, c.factor);
    }
    for d in m.detunings.iter().flatten() {
        let w = Waveform::try_from(&d.waveform).map_err(field_err("detunings.waveform"))?;
        b = b.scaled_detuning(idx("detunings.state", &d.state)?, w, d.scale);
    }
    for c in m.channels.iter().flatten() {
        let r = rate(&Some(c.rate_mhz), "channels.rate_mhz")?;
        let mut ch = DecayChannel::new(c.name.clone(), idx("channels.source", &c.source)?, r);
        if let Some(br) = &c.branches {
            let mut out = Vec::with_capacity(br.len());
            for x in br {
                out.push(Branch { target: idx("channels.branches.target", &x.target)?, weight: x.weight });
            }
            ch = ch.with_branches(out);
        }
        b = b.channel(ch);
    }
    b.duration(finite(&m.duration_us, "duration_us")?).build().map_err(field_err("custom"))
}

/// Build the model for `scenario` from a fully populated section.
fn build_model(scenario: &str, family: Family, m: &ModelSection) -> Result<(ModelSpec, Option<RydbergCZParams>), CliError> {
    let (model, cz) = match family {
        Family::TwoLevel => {
            let p = TwoLevelParams {
                omega: waveform(&m.omega, "omega")?,
                delta: waveform(&m.delta, "delta")?,
                gamma_x: rate(&m.gamma_x_mhz, "gamma_x_mhz")?,
                gamma_y: rate(&m.gamma_y_mhz, "gamma_y_mhz")?,
                duration: finite(&m.duration_us, "duration_us")?,
                ..TwoLevelParams::default()
            };
            (two_level_model(&p).map_err(field_err("two-level"))?, None)
        }
        Family::Raman => {
            let w = need(&m.branch_weights, "branch_weights")?;
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w[0] + w[1] <= 0.0 {
                return Err(schema("model.branch_weights must be non-negative with a positive sum"));
            }
            let p = RamanParams {
                omega0: waveform(&m.omega0, "omega0")?,
                omega1: waveform(&m.omega1, "omega1")?,
                delta_one: waveform(&m.delta_one, "delta_one")?,
                delta_two: waveform(&m.delta_two, "delta_two")?,
                gamma: rate(&m.gamma_mhz, "gamma_mhz")?,
                branch_weights: w,
                duration: finite(&m.duration_us, "duration_us")?,
                initial_state: None,
            };
            (raman_named(scenario, &p).map_err(field_err("raman"))?, None)
        }
        Family::Cz(which) => {
            let p = cz_params(m)?;
            let model = match which {
                Some(w) => cz_single_body_model(&p, w),
                None => cz_two_body_model(&p),
            }
            .map_err(field_err("cz"))?;
            (model, Some(p))
        }
        Family::Custom => (custom_model(m)?, None),
    };
    let model = match &m.initial_state {
        Some(spec) => {
            let s = initial_state(spec, &model)?;
            model.with_initial_state(s).map_err(field_err("initial_state"))?
        }
        None => model,
    };
    Ok((model, cz))
}

#[derive(Debug, Clone)]
pub struct SweepModel {
    pub label: String,
    pub model: ModelSpec,
}

#[derive(Debug, Clone)]
pub struct Resolved {
    /// The input with every default written out.
    pub config: ScenarioConfig,
    pub model: ModelSpec,
    pub cz: Option<RydbergCZParams>,
    /// Interior output times; the endpoints are added by the runners.
    pub grid: Vec<f64>,
    pub sweep: Vec<SweepModel>,
}

fn resolve_grid(g: &GridSection, t_end: f64) -> Result<(GridSection, Vec<f64>), CliError> {
    match (g.points, &g.times_us) {
        (Some(_), Some(_)) => Err(schema("grid: set either `points` or `times_us`, not both")),
        (None, Some(times)) => {
            if times.iter().any(|t| !t.is_finite() || *t < 0.0 || *t > t_end) {
                return Err(schema(format!("grid.times_us must lie inside [0, {t_end}]")));
            }
            if times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(schema("grid.times_us must be strictly increasing"));
            }
            Ok((g.clone(), times.clone()))
        }
        (points, None) => {
            let n = points.unwrap_or(DEFAULT_GRID_POINTS);
            if n < 2 {
                return Err(schema("grid.points must be at least 2"));
            }
            Ok((GridSection { points: Some(n), times_us: None }, uniform_grid(0.0, t_end, n)))
        }
    }
}

pub fn resolve(cfg: &ScenarioConfig) -> Result<Resolved, CliError> {
    let family = Family::of(&cfg.scenario)?;
    check_keys(&cfg.scenario, family, &cfg.model, "model")?;
    let model_section = preset_defaults(&cfg.scenario)?.merged(&cfg.model);
    let (model, cz) = build_model(&cfg.scenario, family, &model_section)?;

    if matches!(cfg.run, RunKind::Scan | RunKind::Fidelity) && cz.is_none() {
        return Err(schema(format!("run: `{:?}` needs a cz-* scenario, got `{}`", cfg.run, cfg.scenario).to_lowercase()));
    }
    if !cfg.sweep.is_empty() && cfg.run != RunKind::P0 {
        return Err(schema("sweep: only used by run = \"p0\""));
    }

    let mut sweep = Vec::with_capacity(cfg.sweep.len());
    let mut sweep_cfg = Vec::with_capacity(cfg.sweep.len());
    for (k, entry) in cfg.sweep.iter().enumerate() {
        if entry.label.is_empty() || entry.label.contains([',', '"']) {
            return Err(schema(format!("sweep[{k}].label must be non-empty without commas or quotes")));
        }
        let scenario = entry.scenario.clone().unwrap_or_else(|| cfg.scenario.clone());
        let f = Family::of(&scenario).map_err(|e| schema(format!("sweep[{k}].{e}")))?;
        check_keys(&scenario, f, &entry.model, &format!("sweep[{k}].model"))?;
        let base = if scenario == cfg.scenario { model_section.clone() } else { preset_defaults(&scenario)? };
        let section = base.merged(&entry.model);
        let (m, _) = build_model(&scenario, f, &section)?;
        if m.duration() != model.duration() {
            return Err(schema(format!("sweep[{k}].model.duration_us must match model.duration_us")));
        }
        sweep.push(SweepModel { label: entry.label.clone(), model: m });
        let mut e = entry.clone();
        e.scenario = Some(scenario);
        e.model = section;
        sweep_cfg.push(e);
    }

    let (grid_section, grid) = resolve_grid(&cfg.grid, model.duration())?;
    if cfg.mcwf.postselect.iter().any(|l| model.index_of(l).is_none()) {
        return Err(schema("mcwf.postselect names a state that is not in the model"));
    }

    let mut config = cfg.clone();
    config.model = model_section;
    config.grid = grid_section;
    config.sweep = sweep_cfg;
    Ok(Resolved { config, model, cz, grid, sweep })
}
