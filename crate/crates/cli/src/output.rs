//! CSV, resolved-parameter and plot-script writers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::run::RunResult;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    S(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Time series of populations and phases.
    Curves,
    /// Time series of no-decay probabilities.
    P0,
    /// Gate-error map over (γ_e, γ_r).
    Scan { n_e: usize, n_r: usize },
    None,
}

pub const CURVES_FILE: &str = "curves.csv";
pub const META_FILE: &str = "meta.txt";
pub const PLOT_FILE: &str = "plot.gp";

/// 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::F(x) => format_float(*x),
                    Cell::S(t) => t.clone(),
                })
                .collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

const CONVENTIONS: &[&str] = &[
    "units: times in us; frequencies and rates in MHz, multiplied by 2*pi on use",
    "conditioned evolution: dC/dt = -i H C - (Gamma/2) C + (sum_m gamma_m |C_src(m)|^2 / 2) C",
    "no-decay probability: dp0/dt = -(sum_m gamma_m |C_src(m)|^2) p0 along the conditioned state",
    "phi_X_j = arg C_j in (-pi, pi], NaN where |C_j| < 1e-12",
    "dP_X_j = P_X_j - P_U_j and dphi_X_j = wrap(phi_X_j - phi_U_j); X is S (conditioned) or M (ensemble)",
    "ensemble phases are circular means; their std errors are sqrt(-2 ln R)/sqrt(n)",
    "jump rule: a jump happens when the uniform draw xi <= p = dt * sum_m gamma_m |C_src(m)|^2",
    "fidelity: max over phases f1, f2 of (|1 + a01 e^(i f1) + a10 e^(i f2) - a11 e^(i (f1 + f2))|^2 + 1 + |a01|^2 + |a10|^2 + |a11|^2) / 20",
];

pub fn meta_text(result: &RunResult) -> Result<String, CliError> {
    let mut s = String::new();
    let _ = writeln!(s, "# second-lab {} resolved scenario", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "# run this file as a config to reproduce {CURVES_FILE}");
    let c = &result.resolved.config;
    let _ = writeln!(s, "# seed: {}  trajectories: {}", c.mcwf.seed, c.mcwf.n);
    for line in CONVENTIONS {
        let _ = writeln!(s, "# {line}");
    }
    for line in &result.summary {
        let _ = writeln!(s, "# result: {line}");
    }
    s.push('\n');
    s.push_str(&c.to_toml()?);
    Ok(s)
}

fn gp_columns(table: &Table, prefix: &str) -> Vec<usize> {
    table
        .header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with(prefix) && !h.ends_with("_se"))
        .map(|(i, _)| i + 1)
        .collect()
}

fn plot_panel(s: &mut String, ylabel: &str, cols: &[usize]) {
    let _ = writeln!(s, "set ylabel '{ylabel}'");
    let parts: Vec<String> = cols.iter().map(|c| format!("'{CURVES_FILE}' using 1:{c} with lines")).collect();
    let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
}

pub fn plot_script(result: &RunResult) -> String {
    let t = &result.table;
    let mut s = String::new();
    s.push_str("set datafile separator ','\nset key autotitle columnhead outside right\n");
    s.push_str("set terminal pngcairo size 1000,800\n");
    let _ = writeln!(s, "set output 'plot.png'");
    match result.plot {
        PlotKind::Curves => {
            let has_diff = t.column("t_us").is_some() && !gp_columns(t, "dP_").is_empty();
            let panels: Vec<(&str, Vec<usize>)> = if has_diff {
                vec![
                    ("population", gp_columns(t, "P_")),
                    ("population difference", gp_columns(t, "dP_")),
                    ("phase difference (rad)", gp_columns(t, "dphi_")),
                ]
            } else {
                vec![("population", gp_columns(t, "P_")), ("phase (rad)", gp_columns(t, "phi_"))]
            };
            let _ = writeln!(s, "set multiplot layout {},1", panels.len());
            s.push_str("set xlabel 't (us)'\n");
            for (label, cols) in &panels {
                plot_panel(&mut s, label, cols);
            }
            s.push_str("unset multiplot\n");
        }
        PlotKind::P0 => {
            s.push_str("set xlabel 't (us)'\n");
            plot_panel(&mut s, "p0", &gp_columns(t, "p0"));
        }
        PlotKind::Scan { n_e, n_r } => {
            let _ = writeln!(s, "# {n_e} x {n_r} cells, gamma_r varies fastest");
            s.push_str("set xlabel 'gamma_e / 2pi (MHz)'\nset ylabel 'gamma_r / 2pi (MHz)'\n");
            s.push_str("set view map\nset pm3d map\nset format cb '%.1e'\n");
            let _ = writeln!(s, "set dgrid3d {n_r},{n_e}");
            let _ = writeln!(s, "splot '{CURVES_FILE}' using 1:2:4 with pm3d title 'epsilon - epsilon(0,0)'");
        }
        PlotKind::None => {
            s.push_str("# single-row table; nothing to plot\n");
        }
    }
    s
}

fn write(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub fn write_outputs(dir: &Path, result: &RunResult) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    let files = [
        (dir.join(CURVES_FILE), result.table.to_csv()),
        (dir.join(META_FILE), meta_text(result)?),
        (dir.join(PLOT_FILE), plot_script(result)),
    ];
    for (p, c) in &files {
        write(p, c)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
