//! Adaptive explicit integration of complex state vectors.
//!
//! The stepper is the Dormand–Prince 8(5,3) pair with the usual combined
//! 5th/3rd-order error estimate. Output is produced by landing steps exactly
//! on the requested sample times; no interpolation is involved.

use crate::dynamics::{ModelSpec, RhsKind, StateVector, C64};
use crate::error::{invalid, Error, Result};

/// Anything that can produce `dy/dt`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn derivative(&self, t: f64, y: &[C64], dy: &mut [C64]) -> Result<()>;
}

/// One of the model generators as an [`OdeSystem`].
#[derive(Debug, Clone, Copy)]
pub struct ModelRhs<'a> {
    pub model: &'a ModelSpec,
    pub kind: RhsKind,
}

impl OdeSystem for ModelRhs<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    #[inline]
    fn derivative(&self, t: f64, y: &[C64], dy: &mut [C64]) -> Result<()> {
        self.model.derivative(self.kind, t, y, dy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on any single step (µs).
    pub max_step: f64,
    /// Output times in µs, strictly increasing, inside the integration span.
    pub sample_grid: Vec<f64>,
    /// Hard limit on attempted steps per integration.
    pub max_steps: u64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            sample_grid: Vec::new(),
            max_steps: 50_000_000,
        }
    }
}

impl IntegrationConfig {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        Self { rel_tol, abs_tol, ..Self::default() }
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Self {
        self.sample_grid = grid;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(invalid("integration tolerances must be > 0"));
        }
        if !(self.max_step > 0.0) {
            return Err(invalid("max_step must be > 0"));
        }
        if self.sample_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("sample grid must be strictly increasing"));
        }
        if self.sample_grid.iter().any(|t| !t.is_finite()) {
            return Err(invalid("sample grid contains non-finite times"));
        }
        Ok(())
    }
}

/// `n` uniformly spaced times covering `[t0, t1]` inclusive.
pub fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![t1],
        _ => (0..n)
            .map(|k| if k == n - 1 { t1 } else { t0 + (t1 - t0) * k as f64 / (n - 1) as f64 })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: u64,
    pub rejected: u64,
    pub evaluations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMeta {
    pub kind: RhsKind,
    pub model: String,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub stats: StepStats,
}

/// States sampled at strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn last(&self) -> &StateVector {
        self.states.last().expect("trajectory always holds the initial state")
    }

    /// State at a sample time that is exactly in `times`.
    pub fn at(&self, t: f64) -> Option<&StateVector> {
        self.times.iter().position(|&s| s == t).map(|k| &self.states[k])
    }
}

// Dormand–Prince 8(5,3) tableau.
const C: [f64; 12] = [
    0.0,
    0.526001519587677318785587544488e-01,
    0.789002279381515978178381316732e-01,
    0.118350341907227396726757197510,
    0.281649658092772603273242802490,
    0.333333333333333333333333333333,
    0.25,
    0.307692307692307692307692307692,
    0.651282051282051282051282051282,
    0.6,
    0.857142857142857142857142857142,
    1.0,
];

const A: [[f64; 12]; 12] = [
    [0.0; 12],
    [5.26001519587677318785587544488e-2, 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0.],
    [1.97250569845378994544595329183e-2, 5.91751709536136983633785987549e-2, 0., 0., 0., 0., 0., 0., 0., 0., 0., 0.],
    [2.95875854768068491816892993775e-2, 0., 8.87627564304205475450678981324e-2, 0., 0., 0., 0., 0., 0., 0., 0., 0.],
    [
        2.41365134159266685502369798665e-1, 0., -8.84549479328286085344864962717e-1,
        9.24834003261792003115737966543e-1, 0., 0., 0., 0., 0., 0., 0., 0.,
    ],
    [
        3.7037037037037037037037037037e-2, 0., 0., 1.70828608729473871279604482173e-1,
        1.25467687566822425016691814123e-1, 0., 0., 0., 0., 0., 0., 0.,
    ],
    [
        3.7109375e-2, 0., 0., 1.70252211019544039314978060272e-1, 6.02165389804559606850219397283e-2,
        -1.7578125e-2, 0., 0., 0., 0., 0., 0.,
    ],
    [
        3.70920001185047927108779319836e-2, 0., 0., 1.70383925712239993810214054705e-1,
        1.07262030446373284651809199168e-1, -1.53194377486244017527936158236e-2,
        8.27378916381402288758473766002e-3, 0., 0., 0., 0., 0.,
    ],
    [
        6.24110958716075717114429577812e-1, 0., 0., -3.36089262944694129406857109825,
        -8.68219346841726006818189891453e-1, 2.75920996994467083049415600797e1,
        2.01540675504778934086186788979e1, -4.34898841810699588477366255144e1, 0., 0., 0., 0.,
    ],
    [
        4.77662536438264365890433908527e-1, 0., 0., -2.48811461997166764192642586468,
        -5.90290826836842996371446475743e-1, 2.12300514481811942347288949897e1,
        1.52792336328824235832596922938e1, -3.32882109689848629194453265587e1,
        -2.03312017085086261358222928593e-2, 0., 0., 0.,
    ],
    [
        -9.3714243008598732571704021658e-1, 0., 0., 5.18637242884406370830023853209,
        1.09143734899672957818500254654, -8.14978701074692612513997267357,
        -1.85200656599969598641566180701e1, 2.27394870993505042818970056734e1,
        2.49360555267965238987089396762, -3.0467644718982195003823669022, 0., 0.,
    ],
    [
        2.27331014751653820792359768449, 0., 0., -1.05344954667372501984066689879e1,
        -2.00087205822486249909675718444, -1.79589318631187989172765950534e1,
        2.79488845294199600508499808837e1, -2.85899827713502369474065508674,
        -8.87285693353062954433549289258, 1.23605671757943030647266201528e1,
        6.43392746015763530355970484046e-1, 0.,
    ],
];

const B: [f64; 12] = [
    5.42937341165687622380535766363e-2,
    0.,
    0.,
    0.,
    0.,
    4.45031289275240888144113950566,
    1.89151789931450038304281599044,
    -5.8012039600105847814672114227,
    3.1116436695781989440891606237e-1,
    -1.52160949662516078556178806805e-1,
    2.01365400804030348374776537501e-1,
    4.47106157277725905176885569043e-2,
];

// 5th-order error weights over the 12 stages plus the FSAL stage (zero).
const E5: [f64; 13] = [
    0.1312004499419488073250102996e-1,
    0.,
    0.,
    0.,
    0.,
    -0.1225156446376204440720569753e+1,
    -0.4957589496572501915214079952,
    0.1664377182454986536961530415e+1,
    -0.3503288487499736816886487290,
    0.3341791187130174790297318841,
    0.8192320648511571246570742613e-1,
    -0.2235530786388629525884427845e-1,
    0.,
];

// 3rd-order error weights: B minus the embedded 3rd-order solution.
const E3: [f64; 13] = [
    B[0] - 0.244094488188976377952755905512,
    0.,
    0.,
    0.,
    0.,
    B[5],
    B[6],
    B[7],
    B[8] - 0.733846688281611857341361741547,
    B[9],
    B[10],
    B[11] - 0.220588235294117647058823529412e-1,
    0.,
];

const ERROR_EXPONENT: f64 = -1.0 / 8.0;
const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// Reusable DOP853 stepper. Carries its step-size proposal across calls so a
/// long integration split into many short `advance` calls pays the start-up
/// cost only once.
#[derive(Debug, Clone)]
pub struct Stepper {
    n: usize,
    rel_tol: f64,
    abs_tol: f64,
    max_step: f64,
    max_steps: u64,
    k: Vec<Vec<C64>>,
    y_stage: Vec<C64>,
    y_new: Vec<C64>,
    // point at which k[0] = f(t, y) was last evaluated
    fsal: Option<(f64, Vec<C64>)>,
    h: Option<f64>,
    pub stats: StepStats,
}

impl Stepper {
    pub fn new(n: usize, cfg: &IntegrationConfig) -> Self {
        Self {
            n,
            rel_tol: cfg.rel_tol,
            abs_tol: cfg.abs_tol,
            max_step: cfg.max_step,
            max_steps: cfg.max_steps,
            k: vec![vec![C64::new(0.0, 0.0); n]; 13],
            y_stage: vec![C64::new(0.0, 0.0); n],
            y_new: vec![C64::new(0.0, 0.0); n],
            fsal: None,
            h: None,
            stats: StepStats::default(),
        }
    }

    /// Forget the step-size history; the next call selects a fresh initial step.
    pub fn reset(&mut self) {
        self.h = None;
        self.fsal = None;
    }

    fn eval<S: OdeSystem>(&mut self, sys: &S, t: f64, stage: usize, from_stage_buffer: bool, y: &[C64]) -> Result<()> {
        self.stats.evaluations += 1;
        let src = if from_stage_buffer { &self.y_stage[..] } else { y };
        sys.derivative(t, src, &mut self.k[stage])
    }

    fn initial_step<S: OdeSystem>(&mut self, sys: &S, t: f64, y: &[C64], span: f64) -> Result<f64> {
        let n = self.n as f64;
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for (yi, fi) in y.iter().zip(&self.k[0]) {
            let sc = self.abs_tol + yi.norm() * self.rel_tol;
            d0 += (yi.norm() / sc).powi(2);
            d1 += (fi.norm() / sc).powi(2);
        }
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        for i in 0..self.n {
            self.y_stage[i] = y[i] + self.k[0][i] * h0;
        }
        self.stats.evaluations += 1;
        sys.derivative(t + h0, &self.y_stage, &mut self.k[1])?;
        let mut d2 = 0.0;
        for (i, yi) in y.iter().enumerate() {
            let sc = self.abs_tol + yi.norm() * self.rel_tol;
            d2 += ((self.k[1][i] - self.k[0][i]).norm() / sc).powi(2);
        }
        let d2 = (d2 / n).sqrt() / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 8.0)
        };
        Ok((100.0 * h0).min(h1).min(span))
    }

    /// Integrate from `*t` to `t_end`, updating `t` and `y` in place. On
    /// return `*t == t_end` exactly.
    pub fn advance<S: OdeSystem>(&mut self, sys: &S, t: &mut f64, y: &mut [C64], t_end: f64) -> Result<()> {
        debug_assert_eq!(y.len(), self.n);
        if t_end < *t {
            return Err(invalid("cannot integrate backwards"));
        }
        if t_end == *t {
            return Ok(());
        }
        let n = self.n;

        let fsal_valid = self.fsal_matches(*t, y);
        self.fsal = None;
        if !fsal_valid {
            self.eval(sys, *t, 0, false, y)?;
        }
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(sys, *t, y, t_end - *t)?,
        };

        while *t < t_end {
            if self.stats.accepted + self.stats.rejected >= self.max_steps {
                return Err(Error::IntegrationFailure { t: *t, reason: "step limit exceeded".into() });
            }
            let min_step = 16.0 * f64::EPSILON * t.abs().max(t_end.abs()).max(1e-300);
            let proposal = h.min(self.max_step);
            let remaining = t_end - *t;
            // land exactly on t_end; absorb a sliver rather than leaving one
            let (step, lands) = if proposal >= remaining * (1.0 - 1e-12) {
                (remaining, true)
            } else {
                (proposal, false)
            };
            if step < min_step && !lands {
                return Err(Error::IntegrationFailure {
                    t: *t,
                    reason: format!("step size underflow (h = {step:e})"),
                });
            }

            // stages 2..12
            for s in 1..12 {
                for i in 0..n {
                    let mut acc = C64::new(0.0, 0.0);
                    for (j, &a) in A[s][..s].iter().enumerate() {
                        if a != 0.0 {
                            acc += self.k[j][i] * a;
                        }
                    }
                    self.y_stage[i] = y[i] + acc * step;
                }
                self.eval(sys, *t + C[s] * step, s, true, y)?;
            }
            for i in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for (j, &b) in B.iter().enumerate() {
                    if b != 0.0 {
                        acc += self.k[j][i] * b;
                    }
                }
                self.y_new[i] = y[i] + acc * step;
            }
            let t_new = if lands { t_end } else { *t + step };
            self.stats.evaluations += 1;
            {
                let (head, tail) = self.k.split_at_mut(12);
                let _ = head;
                sys.derivative(t_new, &self.y_new, &mut tail[0])?;
            }

            let mut err5 = 0.0;
            let mut err3 = 0.0;
            for i in 0..n {
                let sc = self.abs_tol + self.rel_tol * y[i].norm().max(self.y_new[i].norm());
                let mut e5 = C64::new(0.0, 0.0);
                let mut e3 = C64::new(0.0, 0.0);
                for j in 0..13 {
                    if E5[j] != 0.0 {
                        e5 += self.k[j][i] * E5[j];
                    }
                    if E3[j] != 0.0 {
                        e3 += self.k[j][i] * E3[j];
                    }
                }
                err5 += (e5.norm() / sc).powi(2);
                err3 += (e3.norm() / sc).powi(2);
            }
            let error = if err5 == 0.0 && err3 == 0.0 {
                0.0
            } else {
                step * err5 / ((err5 + 0.01 * err3) * n as f64).sqrt()
            };

            if error.is_finite() && error < 1.0 {
                self.stats.accepted += 1;
                let factor = if error == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * error.powf(ERROR_EXPONENT)).min(MAX_FACTOR)
                };
                y.copy_from_slice(&self.y_new);
                self.k.swap(0, 12);
                *t = t_new;
                // a landing step is usually shortened; keep the unclipped proposal
                h = if lands { (step * factor).max(proposal.min(h)) } else { step * factor };
            } else {
                self.stats.rejected += 1;
                let factor = if error.is_finite() {
                    (SAFETY * error.powf(ERROR_EXPONENT)).max(MIN_FACTOR)
                } else {
                    MIN_FACTOR
                };
                h = step * factor;
                if h < min_step {
                    return Err(Error::IntegrationFailure {
                        t: *t,
                        reason: format!("step size underflow (h = {h:e})"),
                    });
                }
            }
        }
        if y.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NumericalDomain { t: *t });
        }
        self.h = Some(h);
        // k[0] now holds f(t, y); remember which point it belongs to
        self.fsal = Some((*t, y.to_vec()));
        Ok(())
    }

    /// Current FSAL derivative if positioned at `(t, y)`.
    fn fsal_matches(&self, t: f64, y: &[C64]) -> bool {
        matches!(&self.fsal, Some((tf, yf)) if *tf == t && yf[..] == y[..])
    }
}

/// Integrate an arbitrary system, returning the state at every time in
/// `times` (the first entry is the start time and is returned unchanged).
pub fn integrate_system<S: OdeSystem>(
    sys: &S,
    y0: &[C64],
    times: &[f64],
    cfg: &IntegrationConfig,
) -> Result<(Vec<Vec<C64>>, StepStats)> {
    cfg.validate()?;
    if y0.len() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), found: y0.len() });
    }
    if times.is_empty() {
        return Err(invalid("integration needs at least one output time"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("output times must be strictly increasing"));
    }
    let mut stepper = Stepper::new(sys.dim(), cfg);
    let mut t = times[0];
    let mut y = y0.to_vec();
    let mut out = Vec::with_capacity(times.len());
    out.push(y.clone());
    for &target in &times[1..] {
        stepper.advance(sys, &mut t, &mut y, target)?;
        out.push(y.clone());
    }
    Ok((out, stepper.stats))
}

/// Output times for a span and sample grid: endpoints plus every grid time.
pub fn output_times(span: (f64, f64), grid: &[f64]) -> Result<Vec<f64>> {
    let (t0, t1) = span;
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(invalid(format!("integration span [{t0}, {t1}] must satisfy t1 > t0")));
    }
    if let (Some(&first), Some(&last)) = (grid.first(), grid.last()) {
        if first < t0 || last > t1 {
            return Err(invalid("sample grid extends outside the integration span"));
        }
    }
    let mut times = Vec::with_capacity(grid.len() + 2);
    times.push(t0);
    times.extend(grid.iter().copied().filter(|&s| s > t0 && s < t1));
    times.push(t1);
    Ok(times)
}

/// Integrate one of the model generators over `span`, sampling at the
/// configured grid plus both endpoints.
pub fn integrate(
    kind: RhsKind,
    model: &ModelSpec,
    state0: &StateVector,
    span: (f64, f64),
    cfg: &IntegrationConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if state0.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: state0.dim() });
    }
    if kind == RhsKind::Second && (state0.norm_sqr() - 1.0).abs() > crate::dynamics::NORM_TOLERANCE {
        return Err(invalid("no-decay evolution must start from a normalised state"));
    }
    let times = output_times(span, &cfg.sample_grid)?;
    let sys = ModelRhs { model, kind };
    let (raw, stats) = integrate_system(&sys, state0.amplitudes(), &times, cfg)?;
    Ok(Trajectory {
        times,
        states: raw.into_iter().map(StateVector::from_raw).collect(),
        meta: TrajectoryMeta {
            kind,
            model: model.name().to_string(),
            rel_tol: cfg.rel_tol,
            abs_tol: cfg.abs_tol,
            stats,
        },
    })
}

/// Integrate over the model's own span `[0, duration]`.
pub fn integrate_model(kind: RhsKind, model: &ModelSpec, cfg: &IntegrationConfig) -> Result<Trajectory> {
    integrate(kind, model, model.initial_state(), (0.0, model.duration()), cfg)
}

/// Classical fixed-step integration with the same tableau (no error control);
/// used to verify the convergence order.
pub fn fixed_step<S: OdeSystem>(sys: &S, y0: &[C64], t0: f64, t1: f64, steps: usize) -> Result<Vec<C64>> {
    let n = sys.dim();
    let h = (t1 - t0) / steps as f64;
    let mut y = y0.to_vec();
    let mut k = vec![vec![C64::new(0.0, 0.0); n]; 12];
    let mut ys = vec![C64::new(0.0, 0.0); n];
    for step in 0..steps {
        let t = t0 + h * step as f64;
        sys.derivative(t, &y, &mut k[0])?;
        for s in 1..12 {
            for i in 0..n {
                let acc: C64 = (0..s).map(|j| k[j][i] * A[s][j]).sum();
                ys[i] = y[i] + acc * h;
            }
            let (done, rest) = k.split_at_mut(s);
            let _ = done;
            sys.derivative(t + C[s] * h, &ys, &mut rest[0])?;
        }
        for i in 0..n {
            let acc: C64 = (0..12).map(|j| k[j][i] * B[j]).sum();
            y[i] += acc * h;
        }
    }
    Ok(y)
}
