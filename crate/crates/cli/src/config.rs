//! Scenario file schema. Frequencies are given in MHz and multiplied by 2π on
//! use; times are in µs. Key names carry their unit.

use serde::{Deserialize, Serialize};

use second_lab_core::WaveformSpec;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Trajectory,
    Mcwf,
    P0,
    Compare,
    Scan,
    Fidelity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Preset name or `custom`.
    pub scenario: String,
    pub run: RunKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub integration: IntegrationSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub mcwf: McwfSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepEntry>,
}

/// Basis label or explicit amplitudes `[[re, im], ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub target: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    pub from: String,
    pub to: String,
    pub waveform: WaveformSpec,
    /// Real prefactor; the Hamiltonian entry is `factor · w(t)`.
    #[serde(default = "half")]
    pub factor: f64,
}

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetuningSpec {
    pub state: String,
    pub waveform: WaveformSpec,
    #[serde(default = "one")]
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub name: String,
    pub source: String,
    pub rate_mhz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branches: Option<Vec<BranchSpec>>,
}

/// Model parameters. Which keys apply depends on the scenario family; keys
/// that do not apply are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<InitialStateSpec>,

    // two-level
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<WaveformSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<WaveformSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_x_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_y_mhz: Option<f64>,

    // Raman, phase gate and readout
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega0: Option<WaveformSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega1: Option<WaveformSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_one: Option<WaveformSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_two: Option<WaveformSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch_weights: Option<[f64; 2]>,

    // Rydberg CZ
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_p: Option<WaveformSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_s: Option<WaveformSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_one_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_two_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_q_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_e_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_r_mhz: Option<f64>,

    // custom
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couplings: Option<Vec<CouplingSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detunings: Option<Vec<DetuningSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<ChannelSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSection {
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step_us: Option<f64>,
}

fn default_rel_tol() -> f64 {
    1e-10
}

fn default_abs_tol() -> f64 {
    1e-12
}

impl Default for IntegrationSection {
    fn default() -> Self {
        Self { rel_tol: default_rel_tol(), abs_tol: default_abs_tol(), max_step_us: None }
    }
}

/// Output times: a uniform point count over the model duration or an
/// explicit list. The endpoints are always included.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times_us: Option<Vec<f64>>,
}

pub const DEFAULT_GRID_POINTS: usize = 201;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningKind {
    None,
    IdealNoDecay,
    Detector,
    EndPostselect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McwfSection {
    /// Add an ensemble to `compare` runs.
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Ensemble size selected by `--paper-scale`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paper_n: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_conditioning")]
    pub conditioning: ConditioningKind,
    /// Detector miss probability η0.
    #[serde(default)]
    pub miss: f64,
    /// False-alarm rate r (1/µs, no 2π); η1 = r·dt.
    #[serde(default)]
    pub dark_rate_per_us: f64,
    /// Basis labels kept by end post-selection.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub postselect: Vec<String>,
    #[serde(default = "default_max_dt")]
    pub max_dt_us: f64,
    #[serde(default = "default_max_jump_prob")]
    pub max_jump_prob: f64,
}

fn default_n() -> usize {
    20_000
}

fn default_conditioning() -> ConditioningKind {
    ConditioningKind::IdealNoDecay
}

fn default_max_dt() -> f64 {
    1e-3
}

fn default_max_jump_prob() -> f64 {
    0.01
}

impl Default for McwfSection {
    fn default() -> Self {
        Self {
            enabled: false,
            n: default_n(),
            paper_n: None,
            seed: 0,
            conditioning: default_conditioning(),
            miss: 0.0,
            dark_rate_per_us: 0.0,
            postselect: Vec::new(),
            max_dt_us: default_max_dt(),
            max_jump_prob: default_max_jump_prob(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    #[serde(default = "default_scan_e")]
    pub gamma_e_mhz: Vec<f64>,
    #[serde(default = "default_scan_r")]
    pub gamma_r_mhz: Vec<f64>,
}

fn default_scan_e() -> Vec<f64> {
    vec![0.0, 2.5, 5.0, 7.5, 10.0]
}

fn default_scan_r() -> Vec<f64> {
    vec![0.0, 0.0125, 0.025, 0.0375, 0.05]
}

impl Default for ScanSection {
    fn default() -> Self {
        Self { gamma_e_mhz: default_scan_e(), gamma_r_mhz: default_scan_r() }
    }
}

/// One curve of a `p0` run: model overrides on top of `[model]`, optionally
/// for a different preset of the same duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default)]
    pub model: ModelSection,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Schema(format!("cannot serialise config: {e}")))
    }
}

impl ModelSection {
    /// Overlay `other` on `self`, field by field.
    pub fn merged(&self, other: &ModelSection) -> ModelSection {
        macro_rules! pick {
            ($($f:ident),*) => { ModelSection { $($f: other.$f.clone().or_else(|| self.$f.clone())),* } };
        }
        pick!(
            duration_us, initial_state, omega, delta, gamma_x_mhz, gamma_y_mhz, omega0, omega1, delta_one, delta_two,
            gamma_mhz, branch_weights, omega_p, omega_s, delta_one_mhz, delta_two_mhz, b_mhz, delta_q_mhz,
            gamma_e_mhz, gamma_r_mhz, labels, couplings, detunings, channels
        )
    }

    /// Names of the keys that are set.
    pub fn present_keys(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        macro_rules! check {
            ($($f:ident),*) => { $( if self.$f.is_some() { keys.push(stringify!($f)); } )* };
        }
        check!(
            duration_us, initial_state, omega, delta, gamma_x_mhz, gamma_y_mhz, omega0, omega1, delta_one, delta_two,
            gamma_mhz, branch_weights, omega_p, omega_s, delta_one_mhz, delta_two_mhz, b_mhz, delta_q_mhz,
            gamma_e_mhz, gamma_r_mhz, labels, couplings, detunings, channels
        );
        keys
    }
}
