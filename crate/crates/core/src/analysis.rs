//! Gate-level post-processing: conditioned-vs-unitary difference curves,
//! endpoint behaviour of the difference, CZ fidelity and decay-rate scans.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::dynamics::{ModelSpec, RhsKind, StateVector, C64};
use crate::error::{invalid, Error, Result};
use crate::integrate::{integrate, uniform_grid, IntegrationConfig, Trajectory};
use crate::mcwf::{wrap_phase, EnsembleStats, PHASE_FLOOR};
use crate::models::{cz_single_body_model, cz_two_body_model, RydbergCZParams, SingleBody};
use crate::waveform::Waveform;

/// Phase differences are only meaningful where the reference population is
/// at least this large.
pub const PHASE_POPULATION_FLOOR: f64 = 1e-2;

/// Sample count used to locate the mid-pulse maximum of the difference.
pub const ENDPOINT_SCAN_POINTS: usize = 401;

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonCurves {
    pub grid: Vec<f64>,
    pub labels: Vec<String>,
    pub unitary: Vec<StateVector>,
    pub second: Vec<StateVector>,
    /// `P_S − P_U`, `[time][state]`.
    pub d_pop: Vec<Vec<f64>>,
    /// `φ_S − φ_U` wrapped to (−π, π]; NaN where either amplitude vanishes.
    pub d_phase: Vec<Vec<f64>>,
    /// `P_M − P_U` if an ensemble was attached.
    pub d_pop_mcwf: Option<Vec<Vec<f64>>>,
    /// `φ_M − φ_U` if an ensemble was attached.
    pub d_phase_mcwf: Option<Vec<Vec<f64>>>,
}

fn phase_diff(a: C64, b: C64) -> f64 {
    if a.norm() < PHASE_FLOOR || b.norm() < PHASE_FLOOR {
        f64::NAN
    } else {
        wrap_phase(a.arg() - b.arg())
    }
}

impl ComparisonCurves {
    /// Attach ensemble means sampled on the same grid.
    pub fn with_ensemble(mut self, e: &EnsembleStats) -> Result<Self> {
        if e.grid != self.grid {
            return Err(invalid("ensemble grid differs from the comparison grid"));
        }
        let mut dp = Vec::with_capacity(self.grid.len());
        let mut dphi = Vec::with_capacity(self.grid.len());
        for (k, u) in self.unitary.iter().enumerate() {
            let pu = u.populations();
            dp.push(pu.iter().zip(&e.mean_populations[k]).map(|(pu, pm)| pm - pu).collect());
            dphi.push(
                u.amplitudes()
                    .iter()
                    .zip(&e.mean_phases[k])
                    .map(|(a, &pm)| {
                        if a.norm() < PHASE_FLOOR || pm.is_nan() {
                            f64::NAN
                        } else {
                            wrap_phase(pm - a.arg())
                        }
                    })
                    .collect(),
            );
        }
        self.d_pop_mcwf = Some(dp);
        self.d_phase_mcwf = Some(dphi);
        Ok(self)
    }

    pub fn max_abs_pop_diff(&self) -> f64 {
        self.d_pop.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Integrate the unitary and conditioned evolutions from `state0` over the
/// model duration and difference them on `grid` (plus the endpoints).
pub fn compare_evolutions(
    model: &ModelSpec,
    state0: &StateVector,
    grid: &[f64],
    cfg: &IntegrationConfig,
) -> Result<ComparisonCurves> {
    let cfg = IntegrationConfig { sample_grid: grid.to_vec(), ..cfg.clone() };
    let span = (0.0, model.duration());
    let u = integrate(RhsKind::Unitary, model, state0, span, &cfg)?;
    let s = integrate(RhsKind::Second, model, state0, span, &cfg)?;
    Ok(curves(model, u, s))
}

fn curves(model: &ModelSpec, u: Trajectory, s: Trajectory) -> ComparisonCurves {
    let d_pop = u
        .states
        .iter()
        .zip(&s.states)
        .map(|(a, b)| a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| y.norm_sqr() - x.norm_sqr()).collect())
        .collect();
    let d_phase = u
        .states
        .iter()
        .zip(&s.states)
        .map(|(a, b)| a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| phase_diff(*y, *x)).collect())
        .collect();
    ComparisonCurves {
        grid: u.times,
        labels: model.labels().to_vec(),
        unitary: u.states,
        second: s.states,
        d_pop,
        d_phase,
        d_pop_mcwf: None,
        d_phase_mcwf: None,
    }
}

/// Difference between two states as seen in population and phase plots:
/// the largest population difference, or the largest phase difference of a
/// state that holds at least [`PHASE_POPULATION_FLOOR`] of the population.
pub fn observable_difference(second: &StateVector, unitary: &StateVector) -> f64 {
    let mut d: f64 = 0.0;
    for (s, u) in second.amplitudes().iter().zip(unitary.amplitudes()) {
        d = d.max((s.norm_sqr() - u.norm_sqr()).abs());
        if u.norm_sqr() >= PHASE_POPULATION_FLOOR && s.norm() >= PHASE_FLOOR {
            d = d.max(wrap_phase(s.arg() - u.arg()).abs());
        }
    }
    d
}

fn amplitude_difference(second: &StateVector, unitary: &StateVector) -> f64 {
    second
        .amplitudes()
        .iter()
        .zip(unitary.amplitudes())
        .map(|(s, u)| (s - u).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointReport {
    /// False when the drive or the lossy populations do not switch off at the
    /// pulse edges; the numbers are still filled in.
    pub applicable: bool,
    pub note: Option<String>,
    /// Observable difference at the end of the pulse.
    pub end_diff: f64,
    /// Maximum observable difference over the pulse.
    pub mid_max: f64,
    pub ratio: f64,
    /// `‖C_S(T) − C_U(T)‖`.
    pub amplitude_end_diff: f64,
    /// `max_t ‖C_S(t) − C_U(t)‖`.
    pub amplitude_mid_max: f64,
    pub amplitude_ratio: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// Compare unitary and conditioned evolution at the end of the pulse against
/// their largest deviation during it.
pub fn endpoint_vanishing_check(model: &ModelSpec, state0: &StateVector, cfg: &IntegrationConfig) -> Result<EndpointReport> {
    let t_end = model.duration();
    let grid = uniform_grid(0.0, t_end, ENDPOINT_SCAN_POINTS);
    let c = compare_evolutions(model, state0, &grid, cfg)?;

    let mut notes = Vec::new();
    let mut shaped = 0;
    for cp in model.couplings() {
        if let Waveform::Fourier(_) = &cp.waveform {
            shaped += 1;
            let r = cp.waveform.endpoint_residual()?;
            if r >= 1e-2 {
                notes.push(format!("drive ({}, {}) endpoint residual {r:.3e} >= 1e-2", cp.row, cp.col));
            }
        }
    }
    if shaped == 0 {
        notes.push("no shaped drive switches off at the pulse edges".to_string());
    }
    let lossy: Vec<usize> = (0..model.dim()).filter(|&i| model.total_rate(i) > 0.0).collect();
    for (label, s) in [("start", c.unitary.first()), ("end", c.unitary.last())] {
        let s = s.expect("at least two samples");
        let p: f64 = lossy.iter().map(|&i| s.amplitudes()[i].norm_sqr()).sum();
        if p >= 1e-2 {
            notes.push(format!("lossy population {p:.3e} at the {label} of the pulse"));
        }
    }

    let obs: Vec<f64> = c.second.iter().zip(&c.unitary).map(|(s, u)| observable_difference(s, u)).collect();
    let amp: Vec<f64> = c.second.iter().zip(&c.unitary).map(|(s, u)| amplitude_difference(s, u)).collect();
    let end_diff = *obs.last().expect("non-empty");
    let mid_max = obs.iter().copied().fold(0.0, f64::max);
    let amplitude_end_diff = *amp.last().expect("non-empty");
    let amplitude_mid_max = amp.iter().copied().fold(0.0, f64::max);
    Ok(EndpointReport {
        applicable: notes.is_empty(),
        note: if notes.is_empty() { None } else { Some(format!("property not applicable: {}", notes.join("; "))) },
        end_diff,
        mid_max,
        ratio: ratio(end_diff, mid_max),
        amplitude_end_diff,
        amplitude_mid_max,
        amplitude_ratio: ratio(amplitude_end_diff, amplitude_mid_max),
    })
}

fn fidelity_at(a01: C64, a10: C64, a11: C64, f1: f64, f2: f64) -> f64 {
    let e1 = C64::from_polar(1.0, f1);
    let e2 = C64::from_polar(1.0, f2);
    let tr = C64::new(1.0, 0.0) + a01 * e1 + a10 * e2 - a11 * e1 * e2;
    let mm = 1.0 + a01.norm_sqr() + a10.norm_sqr() + a11.norm_sqr();
    (tr.norm_sqr() + mm) / 20.0
}

/// Grid resolution of the phase-compensation search.
pub const FIDELITY_GRID: usize = 64;

/// Average CZ gate fidelity of `diag(1, a01, a10, a11)` with the best local
/// Z-phase compensation on each qubit.
pub fn cz_fidelity(a01: C64, a10: C64, a11: C64) -> Result<f64> {
    for (name, a) in [("a01", a01), ("a10", a10), ("a11", a11)] {
        if !(a.re.is_finite() && a.im.is_finite()) || a.norm() > 1.0 + 1e-6 {
            return Err(invalid(format!("{name} must have magnitude <= 1, got {}", a.norm())));
        }
    }
    let f = |x: f64, y: f64| fidelity_at(a01, a10, a11, x, y);
    let step0 = TAU / FIDELITY_GRID as f64;
    let (mut bx, mut by, mut best) = (0.0, 0.0, f64::NEG_INFINITY);
    for i in 0..FIDELITY_GRID {
        for j in 0..FIDELITY_GRID {
            let (x, y) = (i as f64 * step0, j as f64 * step0);
            let v = f(x, y);
            if v > best {
                (bx, by, best) = (x, y, v);
            }
        }
    }
    // compass search from the best cell
    let mut step = step0 / 2.0;
    while step > 1e-10 {
        let mut moved = false;
        for (dx, dy) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let v = f(bx + dx, by + dy);
            if v > best {
                (bx, by, best) = (bx + dx, by + dy, v);
                moved = true;
                break;
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    Ok(best.clamp(0.0, 1.0))
}

/// Final computational amplitudes of the three driven CZ processes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CzAmplitudes {
    pub a01: C64,
    pub a10: C64,
    pub a11: C64,
}

impl CzAmplitudes {
    /// θ₁₁ − θ₀₁ − θ₁₀ wrapped to (−π, π].
    pub fn conditional_phase(&self) -> f64 {
        wrap_phase(self.a11.arg() - self.a01.arg() - self.a10.arg())
    }

    pub fn min_population(&self) -> f64 {
        self.a01.norm_sqr().min(self.a10.norm_sqr()).min(self.a11.norm_sqr())
    }

    pub fn fidelity(&self) -> Result<f64> {
        cz_fidelity(self.a01, self.a10, self.a11)
    }
}

fn final_amplitude(kind: RhsKind, model: &ModelSpec, cfg: &IntegrationConfig) -> Result<C64> {
    let tr = integrate(kind, model, model.initial_state(), (0.0, model.duration()), cfg)?;
    Ok(tr.last().amplitudes()[0])
}

/// Integrate all three processes. With `mirror = false` the |10⟩ amplitude is
/// taken equal to the |01⟩ one instead of being integrated separately.
pub fn cz_amplitudes(p: &RydbergCZParams, kind: RhsKind, cfg: &IntegrationConfig, mirror: bool) -> Result<CzAmplitudes> {
    let cfg = IntegrationConfig { sample_grid: Vec::new(), ..cfg.clone() };
    let a01 = final_amplitude(kind, &cz_single_body_model(p, SingleBody::ZeroOne)?, &cfg)?;
    let a10 = if mirror { final_amplitude(kind, &cz_single_body_model(p, SingleBody::TenState)?, &cfg)? } else { a01 };
    let a11 = final_amplitude(kind, &cz_two_body_model(p)?, &cfg)?;
    Ok(CzAmplitudes { a01, a10, a11 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateErrorGrid {
    pub gamma_e_values: Vec<f64>,
    pub gamma_r_values: Vec<f64>,
    /// `error[i][j]` at `(gamma_e_values[i], gamma_r_values[j])`.
    pub error: Vec<Vec<f64>>,
}

impl GateErrorGrid {
    /// Row-major `(γ_e, γ_r, ε)` triples.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.gamma_e_values.iter().enumerate().flat_map(move |(i, &ge)| {
            self.gamma_r_values.iter().enumerate().map(move |(j, &gr)| (ge, gr, self.error[i][j]))
        })
    }
}

/// Conditioned CZ gate error over a grid of decay rates (rad/µs).
pub fn gamma_scan(p: &RydbergCZParams, gamma_e: &[f64], gamma_r: &[f64], cfg: &IntegrationConfig) -> Result<GateErrorGrid> {
    if gamma_e.is_empty() || gamma_r.is_empty() {
        return Err(invalid("scan needs at least one value per axis"));
    }
    let nr = gamma_r.len();
    let flat: Vec<f64> = (0..gamma_e.len() * nr)
        .into_par_iter()
        .map(|idx| {
            let (ge, gr) = (gamma_e[idx / nr], gamma_r[idx % nr]);
            let cell = || -> Result<f64> {
                let amps = cz_amplitudes(&p.with_rates(ge, gr), RhsKind::Second, cfg, false)?;
                Ok(1.0 - amps.fidelity()?)
            };
            cell().map_err(|e| Error::ScanCell { gamma_e: ge, gamma_r: gr, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    Ok(GateErrorGrid {
        gamma_e_values: gamma_e.to_vec(),
        gamma_r_values: gamma_r.to_vec(),
        error: flat.chunks(nr).map(<[f64]>::to_vec).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::preset;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn fidelity_closed_forms() {
        assert!((cz_fidelity(c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)).unwrap() - 1.0).abs() < 1e-15);
        // identity: 0.4 without compensation, 0.6 at the optimum φ1 = φ2 = π/2
        assert!((fidelity_at(c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), 0.0, 0.0) - 0.4).abs() < 1e-15);
        assert!((cz_fidelity(c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)).unwrap() - 0.6).abs() < 1e-12);
        assert!((cz_fidelity(c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)).unwrap() - 0.1).abs() < 1e-15);
        assert!(cz_fidelity(c(1.1, 0.0), c(1.0, 0.0), c(1.0, 0.0)).is_err());
    }

    #[test]
    fn fidelity_finds_compensating_phases() {
        let (x, y) = (0.77, -2.1);
        let a01 = C64::from_polar(1.0, x);
        let a10 = C64::from_polar(1.0, y);
        let a11 = -C64::from_polar(1.0, x + y);
        assert!((cz_fidelity(a01, a10, a11).unwrap() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn fidelity_is_gauge_invariant(
            r in prop::array::uniform3(0.0..1.0f64),
            ph in prop::array::uniform3(-PI..PI),
            alpha in -PI..PI,
            beta in -PI..PI,
        ) {
            let a01 = C64::from_polar(r[0], ph[0]);
            let a10 = C64::from_polar(r[1], ph[1]);
            let a11 = C64::from_polar(r[2], ph[2]);
            let f = cz_fidelity(a01, a10, a11).unwrap();
            let ea = C64::from_polar(1.0, alpha);
            let eb = C64::from_polar(1.0, beta);
            let g = cz_fidelity(a01 * ea, a10 * eb, a11 * ea * eb).unwrap();
            prop_assert!((f - g).abs() < 1e-9, "{} vs {}", f, g);
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }

    #[test]
    fn no_decay_means_no_difference() {
        let m = preset("raman-pi2").unwrap().without_decay();
        let c = compare_evolutions(&m, m.initial_state(), &uniform_grid(0.0, 1.0, 11), &IntegrationConfig::default()).unwrap();
        assert_eq!(c.max_abs_pop_diff(), 0.0);
        assert!(c.d_phase.iter().flatten().all(|v| v.is_nan() || *v == 0.0));
        let r = endpoint_vanishing_check(&m, m.initial_state(), &IntegrationConfig::default()).unwrap();
        assert_eq!(r.end_diff, 0.0);
        assert_eq!(r.ratio, 0.0);
    }

    #[test]
    fn differences_shrink_with_rate() {
        let m = preset("raman-pi2").unwrap();
        let cfg = IntegrationConfig::default();
        let grid = uniform_grid(0.0, 1.0, 41);
        let mut last = f64::INFINITY;
        for f in [1e-1, 1e-2, 1e-3] {
            let scaled = m.with_scaled_rates(f).unwrap();
            let c = compare_evolutions(&scaled, scaled.initial_state(), &grid, &cfg).unwrap();
            let d = c
                .d_phase
                .iter()
                .flatten()
                .filter(|v| !v.is_nan())
                .fold(c.max_abs_pop_diff(), |a, v| a.max(v.abs()));
            assert!(d < last, "{f}: {d} !< {last}");
            last = d;
        }
    }

    #[test]
    fn mirrored_single_body_amplitudes_agree() {
        let p = RydbergCZParams::default();
        let a = cz_amplitudes(&p, RhsKind::Second, &IntegrationConfig::default(), true).unwrap();
        assert!((a.a01 - a.a10).norm() < 1e-10);
    }

    #[test]
    fn zero_rate_scan_matches_unitary_design_error() {
        let p = RydbergCZParams::default();
        let cfg = IntegrationConfig::default();
        let g = gamma_scan(&p, &[0.0], &[0.0], &cfg).unwrap();
        let u = cz_amplitudes(&p.with_rates(0.0, 0.0), RhsKind::Unitary, &cfg, false).unwrap();
        assert!((g.error[0][0] - (1.0 - u.fidelity().unwrap())).abs() < 1e-12);
        assert!(g.error[0][0] < 1e-4);
    }

    #[test]
    fn scan_cells_are_row_major() {
        let g = GateErrorGrid { gamma_e_values: vec![1.0, 2.0], gamma_r_values: vec![3.0, 4.0, 5.0], error: vec![vec![0.1, 0.2, 0.3], vec![0.4, 0.5, 0.6]] };
        let cells: Vec<_> = g.cells().collect();
        assert_eq!(cells[1], (1.0, 4.0, 0.2));
        assert_eq!(cells[3], (2.0, 3.0, 0.4));
    }

    #[test]
    fn scan_failure_names_cell() {
        let p = RydbergCZParams::default();
        let err = gamma_scan(&p, &[-1.0], &[0.0], &IntegrationConfig::default()).unwrap_err();
        assert!(matches!(err, Error::ScanCell { gamma_e, .. } if gamma_e == -1.0));
    }

    #[test]
    fn observable_difference_ignores_empty_state_phases() {
        let a = StateVector::new(vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let b = StateVector::new(vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert_eq!(observable_difference(&a, &b), 0.0);
        let z = C64::from_polar(1.0, 0.1);
        let d = StateVector::new(vec![z, c(0.0, 0.0)]).unwrap();
        assert!((observable_difference(&d, &a) - 0.1).abs() < 1e-12);
    }
}
