//! Execute a resolved scenario and collect its output table.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use second_lab_core::mcwf::PHASE_FLOOR;
use second_lab_core::{
    compare_evolutions, cz_amplitudes, decay_statistics, gamma_scan, integrate, run_ensemble, Conditioning,
    DetectorModel, EnsembleStats, IntegrationConfig, McwfConfig, ModelSpec, RhsKind, StateVector, C64,
};

use crate::config::{ConditioningKind, RunKind, ScenarioConfig};
use crate::output::{write_outputs, Cell, PlotKind, Table};
use crate::scenario::{resolve, Resolved};
use crate::CliError;

/// Ensemble size selected by `--paper-scale` when the file gives none.
pub const PAPER_SCALE_N: usize = 250_000;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub paper_scale: bool,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    /// Human-readable result lines, also written as comments into meta.txt.
    pub summary: Vec<String>,
}

/// Result of a run before anything is written.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub resolved: Resolved,
    pub table: Table,
    pub plot: PlotKind,
    pub summary: Vec<String>,
}

pub fn apply_options(mut cfg: ScenarioConfig, opts: &RunOptions) -> ScenarioConfig {
    if let Some(seed) = opts.seed {
        cfg.mcwf.seed = seed;
    }
    if opts.paper_scale {
        cfg.mcwf.n = cfg.mcwf.paper_n.unwrap_or(PAPER_SCALE_N);
    }
    cfg
}

fn integration(cfg: &ScenarioConfig) -> IntegrationConfig {
    let s = &cfg.integration;
    IntegrationConfig {
        rel_tol: s.rel_tol,
        abs_tol: s.abs_tol,
        max_step: s.max_step_us.unwrap_or(f64::INFINITY),
        ..IntegrationConfig::default()
    }
}

fn mcwf_config(r: &Resolved) -> McwfConfig {
    let s = &r.config.mcwf;
    let conditioning = match s.conditioning {
        ConditioningKind::None => Conditioning::None,
        ConditioningKind::IdealNoDecay => Conditioning::IdealNoDecay,
        ConditioningKind::Detector => Conditioning::Detector(DetectorModel { miss: s.miss, dark_rate: s.dark_rate_per_us }),
        ConditioningKind::EndPostselect => Conditioning::EndPostselect(
            s.postselect.iter().map(|l| r.model.index_of(l).expect("checked during resolution")).collect(),
        ),
    };
    let mut c = McwfConfig::new(s.n, s.seed, conditioning, r.model.duration()).with_grid(r.grid.clone());
    c.max_dt = s.max_dt_us;
    c.max_jump_prob = s.max_jump_prob;
    c.integration = integration(&r.config);
    c
}

fn phase(a: C64) -> f64 {
    if a.norm() < PHASE_FLOOR {
        f64::NAN
    } else {
        a.arg()
    }
}

fn state_columns(header: &mut Vec<String>, labels: &[String], tag: &str) {
    for l in labels {
        header.push(format!("P_{tag}_{l}"));
        header.push(format!("phi_{tag}_{l}"));
    }
}

fn state_cells(row: &mut Vec<Cell>, s: &StateVector) {
    for a in s.amplitudes() {
        row.push(Cell::F(a.norm_sqr()));
        row.push(Cell::F(phase(*a)));
    }
}

fn ensemble_columns(header: &mut Vec<String>, labels: &[String]) {
    state_columns(header, labels, "M");
}

fn ensemble_cells(row: &mut Vec<Cell>, e: &EnsembleStats, k: usize) {
    for (p, phi) in e.mean_populations[k].iter().zip(&e.mean_phases[k]) {
        row.push(Cell::F(*p));
        row.push(Cell::F(*phi));
    }
}

fn std_err_columns(header: &mut Vec<String>, labels: &[String]) {
    for l in labels {
        header.push(format!("P_M_{l}_se"));
        header.push(format!("phi_M_{l}_se"));
    }
}

fn std_err_cells(row: &mut Vec<Cell>, e: &EnsembleStats, k: usize) {
    for (p, phi) in e.population_std_err[k].iter().zip(&e.phase_std_err[k]) {
        row.push(Cell::F(*p));
        row.push(Cell::F(*phi));
    }
}

fn ensemble_summary(e: &EnsembleStats) -> Vec<String> {
    vec![
        format!("mcwf conditioning: {}", e.conditioning),
        format!(
            "mcwf trajectories: {} total, {} accepted, {} with jumps, {} detected decays, {} false alarms",
            e.n_total, e.n_accepted, e.n_with_jumps, e.n_detected, e.n_false_alarm
        ),
        format!("mcwf acceptance: {:.6e} +- {:.2e}", e.acceptance(), e.acceptance_std_err()),
    ]
}

fn run_trajectory(r: &Resolved, cfg: &IntegrationConfig) -> Result<RunResult, CliError> {
    let m = &r.model;
    let s = decay_statistics(m, m.initial_state(), m.duration(), &r.grid, cfg)?;
    let ucfg = IntegrationConfig { sample_grid: r.grid.clone(), ..cfg.clone() };
    let u = integrate(RhsKind::Unitary, m, m.initial_state(), (0.0, m.duration()), &ucfg)?;

    let mut header = vec!["t_us".to_string()];
    state_columns(&mut header, m.labels(), "S");
    state_columns(&mut header, m.labels(), "U");
    header.push("p0".into());
    header.extend(s.channel_names.iter().map(|c| format!("q_{c}")));
    let rows = (0..s.grid.len())
        .map(|k| {
            let mut row = vec![Cell::F(s.grid[k])];
            state_cells(&mut row, &s.states[k]);
            state_cells(&mut row, &u.states[k]);
            row.push(Cell::F(s.p0[k]));
            row.extend(s.channel_event_prob.iter().map(|q| Cell::F(q[k])));
            row
        })
        .collect();
    let summary = vec![format!("p0(T) = {:.10e}", s.final_p0())];
    Ok(RunResult { resolved: r.clone(), table: Table { header, rows }, plot: PlotKind::Curves, summary })
}

fn run_mcwf(r: &Resolved) -> Result<RunResult, CliError> {
    let m = &r.model;
    let e = run_ensemble(m, &mcwf_config(r))?;
    let mut header = vec!["t_us".to_string()];
    ensemble_columns(&mut header, m.labels());
    std_err_columns(&mut header, m.labels());
    let rows = (0..e.grid.len())
        .map(|k| {
            let mut row = vec![Cell::F(e.grid[k])];
            ensemble_cells(&mut row, &e, k);
            std_err_cells(&mut row, &e, k);
            row
        })
        .collect();
    Ok(RunResult {
        resolved: r.clone(),
        table: Table { header, rows },
        plot: PlotKind::Curves,
        summary: ensemble_summary(&e),
    })
}

fn run_compare(r: &Resolved, cfg: &IntegrationConfig) -> Result<RunResult, CliError> {
    let m = &r.model;
    let mut c = compare_evolutions(m, m.initial_state(), &r.grid, cfg)?;
    let p0 = decay_statistics(m, m.initial_state(), m.duration(), &r.grid, cfg)?.p0;
    let ensemble = if r.config.mcwf.enabled { Some(run_ensemble(m, &mcwf_config(r))?) } else { None };
    if let Some(e) = &ensemble {
        c = c.with_ensemble(e)?;
    }

    let mut header = vec!["t_us".to_string()];
    state_columns(&mut header, m.labels(), "U");
    state_columns(&mut header, m.labels(), "S");
    for l in m.labels() {
        header.push(format!("dP_S_{l}"));
        header.push(format!("dphi_S_{l}"));
    }
    if ensemble.is_some() {
        ensemble_columns(&mut header, m.labels());
        for l in m.labels() {
            header.push(format!("dP_M_{l}"));
            header.push(format!("dphi_M_{l}"));
        }
    }
    header.push("p0".into());
    if ensemble.is_some() {
        std_err_columns(&mut header, m.labels());
    }

    let rows = (0..c.grid.len())
        .map(|k| {
            let mut row = vec![Cell::F(c.grid[k])];
            state_cells(&mut row, &c.unitary[k]);
            state_cells(&mut row, &c.second[k]);
            for (dp, dphi) in c.d_pop[k].iter().zip(&c.d_phase[k]) {
                row.push(Cell::F(*dp));
                row.push(Cell::F(*dphi));
            }
            if let Some(e) = &ensemble {
                ensemble_cells(&mut row, e, k);
                let dp = &c.d_pop_mcwf.as_ref().expect("attached")[k];
                let dphi = &c.d_phase_mcwf.as_ref().expect("attached")[k];
                for (a, b) in dp.iter().zip(dphi) {
                    row.push(Cell::F(*a));
                    row.push(Cell::F(*b));
                }
            }
            row.push(Cell::F(p0[k]));
            if let Some(e) = &ensemble {
                std_err_cells(&mut row, e, k);
            }
            row
        })
        .collect();

    let mut summary = vec![
        format!("max |P_S - P_U| = {:.6e}", c.max_abs_pop_diff()),
        format!("p0(T) = {:.10e}", p0.last().expect("non-empty")),
    ];
    if let Some(e) = &ensemble {
        summary.extend(ensemble_summary(e));
    }
    Ok(RunResult { resolved: r.clone(), table: Table { header, rows }, plot: PlotKind::Curves, summary })
}

fn run_p0(r: &Resolved, cfg: &IntegrationConfig) -> Result<RunResult, CliError> {
    let m = &r.model;
    if r.sweep.is_empty() {
        let s = decay_statistics(m, m.initial_state(), m.duration(), &r.grid, cfg)?;
        let mut header = vec!["t_us".to_string()];
        state_columns(&mut header, m.labels(), "S");
        header.push("p0".into());
        header.extend(s.channel_names.iter().map(|c| format!("q_{c}")));
        let rows = (0..s.grid.len())
            .map(|k| {
                let mut row = vec![Cell::F(s.grid[k])];
                state_cells(&mut row, &s.states[k]);
                row.push(Cell::F(s.p0[k]));
                row.extend(s.channel_event_prob.iter().map(|q| Cell::F(q[k])));
                row
            })
            .collect();
        let summary = vec![format!("p0(T) = {:.10e}", s.final_p0())];
        return Ok(RunResult { resolved: r.clone(), table: Table { header, rows }, plot: PlotKind::P0, summary });
    }

    let curves: Vec<(String, Vec<f64>, Vec<f64>)> = r
        .sweep
        .iter()
        .map(|e| {
            let m = &e.model;
            let s = decay_statistics(m, m.initial_state(), m.duration(), &r.grid, cfg)?;
            Ok((e.label.clone(), s.grid, s.p0))
        })
        .collect::<Result<_, CliError>>()?;
    let grid = curves[0].1.clone();
    let mut header = vec!["t_us".to_string()];
    header.extend(curves.iter().map(|(l, _, _)| format!("p0_{l}")));
    let rows = (0..grid.len())
        .map(|k| {
            let mut row = vec![Cell::F(grid[k])];
            row.extend(curves.iter().map(|(_, _, p)| Cell::F(p[k])));
            row
        })
        .collect();
    let summary = curves.iter().map(|(l, _, p)| format!("p0_{l}(T) = {:.10e}", p.last().expect("non-empty"))).collect();
    Ok(RunResult { resolved: r.clone(), table: Table { header, rows }, plot: PlotKind::P0, summary })
}

fn run_scan(r: &Resolved, cfg: &IntegrationConfig) -> Result<RunResult, CliError> {
    let p = r.cz.as_ref().expect("checked during resolution");
    let s = &r.config.scan;
    for (name, v) in [("scan.gamma_e_mhz", &s.gamma_e_mhz), ("scan.gamma_r_mhz", &s.gamma_r_mhz)] {
        if v.is_empty() || v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(CliError::Schema(format!("{name} must be a non-empty list of rates >= 0")));
        }
    }
    let ge: Vec<f64> = s.gamma_e_mhz.iter().map(|x| TAU * x).collect();
    let gr: Vec<f64> = s.gamma_r_mhz.iter().map(|x| TAU * x).collect();
    let base = 1.0 - cz_amplitudes(&p.with_rates(0.0, 0.0), RhsKind::Second, cfg, false)?.fidelity()?;
    let grid = gamma_scan(p, &ge, &gr, cfg)?;

    let header = ["gamma_e_mhz", "gamma_r_mhz", "epsilon", "delta_epsilon"].map(String::from).to_vec();
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, &e_mhz) in s.gamma_e_mhz.iter().enumerate() {
        for (j, &r_mhz) in s.gamma_r_mhz.iter().enumerate() {
            let eps = grid.error[i][j];
            worst = worst.max((eps - base).abs());
            rows.push(vec![Cell::F(e_mhz), Cell::F(r_mhz), Cell::F(eps), Cell::F(eps - base)]);
        }
    }
    let summary = vec![
        format!("epsilon(0, 0) = {base:.6e}"),
        format!("max |epsilon - epsilon(0, 0)| = {worst:.6e}"),
    ];
    let plot = PlotKind::Scan { n_e: s.gamma_e_mhz.len(), n_r: s.gamma_r_mhz.len() };
    Ok(RunResult { resolved: r.clone(), table: Table { header, rows }, plot, summary })
}

fn run_fidelity(r: &Resolved, cfg: &IntegrationConfig) -> Result<RunResult, CliError> {
    let p = r.cz.as_ref().expect("checked during resolution");
    let header = [
        "evolution",
        "gamma_e_mhz",
        "gamma_r_mhz",
        "fidelity",
        "epsilon",
        "conditional_phase",
        "min_population",
        "a01_re",
        "a01_im",
        "a10_re",
        "a10_im",
        "a11_re",
        "a11_im",
    ]
    .map(String::from)
    .to_vec();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for kind in [RhsKind::Unitary, RhsKind::Second] {
        let a = cz_amplitudes(p, kind, cfg, true)?;
        let f = a.fidelity()?;
        summary.push(format!(
            "{kind}: fidelity {f:.10e}, conditional phase {:.6}, min population {:.6}",
            a.conditional_phase(),
            a.min_population()
        ));
        let mut row = vec![
            Cell::S(kind.to_string()),
            Cell::F(r.config.model.gamma_e_mhz.expect("resolved")),
            Cell::F(r.config.model.gamma_r_mhz.expect("resolved")),
            Cell::F(f),
            Cell::F(1.0 - f),
            Cell::F(a.conditional_phase()),
            Cell::F(a.min_population()),
        ];
        for z in [a.a01, a.a10, a.a11] {
            row.push(Cell::F(z.re));
            row.push(Cell::F(z.im));
        }
        rows.push(row);
    }
    Ok(RunResult { resolved: r.clone(), table: Table { header, rows }, plot: PlotKind::None, summary })
}

/// Resolve and compute without touching the filesystem.
pub fn compute(cfg: &ScenarioConfig) -> Result<RunResult, CliError> {
    let r = resolve(cfg)?;
    let icfg = integration(&r.config);
    icfg.validate()?;
    match r.config.run {
        RunKind::Trajectory => run_trajectory(&r, &icfg),
        RunKind::Mcwf => run_mcwf(&r),
        RunKind::P0 => run_p0(&r, &icfg),
        RunKind::Compare => run_compare(&r, &icfg),
        RunKind::Scan => run_scan(&r, &icfg),
        RunKind::Fidelity => run_fidelity(&r, &icfg),
    }
}

/// Output directory: `--out`, else the file's `out`, else `out/<stem>`.
pub fn out_dir(cfg: &ScenarioConfig, opts: &RunOptions, source: Option<&Path>) -> PathBuf {
    if let Some(o) = &opts.out {
        return o.clone();
    }
    if let Some(o) = &cfg.out {
        return PathBuf::from(o);
    }
    let stem = source.and_then(|p| p.file_stem()).map(|s| s.to_string_lossy().into_owned());
    PathBuf::from("out").join(stem.unwrap_or_else(|| cfg.scenario.clone()))
}

/// Parse, run and write `curves.csv`, `meta.txt` and `plot.gp`.
pub fn run_config_text(text: &str, source: Option<&Path>, opts: &RunOptions) -> Result<RunReport, CliError> {
    let cfg = apply_options(ScenarioConfig::parse(text)?, opts);
    let dir = out_dir(&cfg, opts, source);
    let result = compute(&cfg)?;
    let files = write_outputs(&dir, &result)?;
    Ok(RunReport { out_dir: dir, files, summary: result.summary })
}

/// Model used by a run, for callers that want to inspect it.
pub fn model_of(cfg: &ScenarioConfig) -> Result<ModelSpec, CliError> {
    Ok(resolve(cfg)?.model)
}
