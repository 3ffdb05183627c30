//! Unconditioned and end-post-selected ensembles against the Lindblad master
//! equation, integrated here with fixed-step RK4.

use std::f64::consts::TAU;

use second_lab_core::{
    run_ensemble, uniform_grid, Branch, Conditioning, DecayChannel, McwfConfig, ModelBuilder, ModelSpec, Waveform,
    C64,
};

type Rho = Vec<Vec<C64>>;

fn lindblad_rhs(m: &ModelSpec, t: f64, rho: &Rho) -> Rho {
    let n = m.dim();
    let h = m.hamiltonian(t);
    let mut d = vec![vec![C64::new(0.0, 0.0); n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut c = C64::new(0.0, 0.0);
            for k in 0..n {
                c += h[i][k] * rho[k][j] - rho[i][k] * h[k][j];
            }
            d[i][j] = C64::new(0.0, -1.0) * c;
        }
    }
    for ch in m.channels() {
        let s = ch.source;
        let branches = ch.branches.as_ref().expect("jump targets");
        let total: f64 = branches.iter().map(|b| b.weight).sum();
        for b in branches {
            d[b.target][b.target] += rho[s][s] * (ch.rate * b.weight / total);
        }
        for j in 0..n {
            d[s][j] -= rho[s][j] * (ch.rate / 2.0);
            d[j][s] -= rho[j][s] * (ch.rate / 2.0);
        }
    }
    d
}

fn axpy(a: &Rho, b: &Rho, h: f64) -> Rho {
    a.iter().zip(b).map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y * h).collect()).collect()
}

fn master_populations(m: &ModelSpec, grid: &[f64]) -> Vec<Vec<f64>> {
    let n = m.dim();
    let psi = m.initial_state().amplitudes();
    let mut rho: Rho = (0..n).map(|i| (0..n).map(|j| psi[i] * psi[j].conj()).collect()).collect();
    let mut out = vec![(0..n).map(|i| rho[i][i].re).collect::<Vec<_>>()];
    for w in grid.windows(2) {
        let steps = 200;
        let h = (w[1] - w[0]) / steps as f64;
        for s in 0..steps {
            let t = w[0] + s as f64 * h;
            let k1 = lindblad_rhs(m, t, &rho);
            let k2 = lindblad_rhs(m, t + h / 2.0, &axpy(&rho, &k1, h / 2.0));
            let k3 = lindblad_rhs(m, t + h / 2.0, &axpy(&rho, &k2, h / 2.0));
            let k4 = lindblad_rhs(m, t + h, &axpy(&rho, &k3, h));
            for i in 0..n {
                for j in 0..n {
                    rho[i][j] += (k1[i][j] + k2[i][j] * 2.0 + k3[i][j] * 2.0 + k4[i][j]) * (h / 6.0);
                }
            }
        }
        out.push((0..n).map(|i| rho[i][i].re).collect());
    }
    out
}

fn lambda() -> ModelSpec {
    let branches = vec![Branch { target: 0, weight: 0.5 }, Branch { target: 1, weight: 0.5 }];
    ModelBuilder::new("lambda", ["0", "1", "e"])
        .coupling(0, 2, Waveform::constant_mhz(1.5), 0.5)
        .coupling(1, 2, Waveform::constant_mhz(1.0), 0.5)
        .detuning(2, Waveform::constant_mhz(0.3))
        .channel(DecayChannel::new("e", 2, TAU * 2.0).with_branches(branches))
        .duration(1.0)
        .build()
        .unwrap()
}

fn two_level() -> ModelSpec {
    ModelBuilder::new("tl", ["g", "e"])
        .coupling(0, 1, Waveform::constant_mhz(1.0), 0.5)
        .channel(DecayChannel::new("e", 1, TAU).with_branches(vec![Branch { target: 0, weight: 1.0 }]))
        .duration(1.0)
        .build()
        .unwrap()
}

#[test]
fn unconditioned_ensemble_follows_master_equation() {
    for m in [two_level(), lambda()] {
        let grid = uniform_grid(0.0, 1.0, 11);
        let rho = master_populations(&m, &grid);
        let cfg = McwfConfig::new(8000, 21, Conditioning::None, 1.0).with_grid(grid);
        let e = run_ensemble(&m, &cfg).unwrap();
        assert_eq!(e.n_accepted, 8000);
        assert!(e.n_with_jumps > 1000, "{}", e.n_with_jumps);
        for (k, row) in rho.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                let dev = (e.mean_populations[k][j] - p).abs();
                assert!(dev <= 4.0 * e.population_std_err[k][j] + 1e-3, "{} t[{k}] state {j}: {dev}", m.name());
            }
        }
    }
}

#[test]
fn end_postselection_projects_the_master_state() {
    let m = lambda();
    let rho = master_populations(&m, &[0.0, 1.0]);
    let last = rho.last().unwrap();
    let kept = last[0] + last[1];
    let n = 8000;
    let cfg = McwfConfig::new(n, 22, Conditioning::EndPostselect(vec![0, 1]), 1.0);
    let e = run_ensemble(&m, &cfg).unwrap();
    let sigma = (kept * (1.0 - kept) / n as f64).sqrt();
    assert!((e.acceptance() - kept).abs() <= 4.0 * sigma, "{} vs {kept}", e.acceptance());
    let fin = e.mean_populations.last().unwrap();
    assert!(fin[2].abs() < 1e-15);
    assert!((fin[0] - last[0] / kept).abs() <= 4.0 * e.population_std_err.last().unwrap()[0] + 1e-3);
}
