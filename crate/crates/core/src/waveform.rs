//! Pulse shapes for the drive and detuning entries of a model.
//!
//! All values returned here are angular frequencies in rad/µs; times are µs.
//! Fourier coefficients are given on the MHz scale and converted on evaluation,
//! so a series `[a0, a1, .., aN]` evaluates to
//! `2π · (a0 + Σ 2·aₙ·cos(2πnt/τ)) / (2N + 1)`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Number of uniform samples used when locating the peak of a series.
pub const PEAK_SEARCH_POINTS: usize = 4096;

/// A real, time-dependent angular frequency.
#[derive(Debug, Clone, PartialEq)]
pub enum Waveform {
    /// Fixed value in rad/µs.
    Constant(f64),
    /// Truncated cosine series with real coefficients.
    Fourier(FourierSeries),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierSeries {
    coeffs: Vec<f64>,
    tau: f64,
}

impl FourierSeries {
    pub fn new(coeffs: Vec<f64>, tau: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("fourier waveform needs at least one coefficient"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("fourier coefficients must be finite"));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(invalid(format!("fourier reference time must be > 0, got {tau}")));
        }
        Ok(Self { coeffs, tau })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Highest harmonic N.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    #[inline]
    fn value(&self, t: f64) -> f64 {
        let phase = (t / self.tau).rem_euclid(1.0);
        let c1 = (TAU * phase).cos();
        // cos(nθ) by the Chebyshev recurrence: one trig call per evaluation.
        let (mut prev, mut cur) = (1.0, c1);
        let mut sum = self.coeffs[0];
        for &a in &self.coeffs[1..] {
            sum += 2.0 * a * cur;
            let next = 2.0 * c1 * cur - prev;
            prev = cur;
            cur = next;
        }
        TAU * sum / (2 * self.order() + 1) as f64
    }
}

impl Waveform {
    pub fn zero() -> Self {
        Waveform::Constant(0.0)
    }

    /// Constant waveform given in rad/µs.
    pub fn constant(omega: f64) -> Self {
        Waveform::Constant(omega)
    }

    /// Constant waveform given in MHz (multiplied by 2π).
    pub fn constant_mhz(mhz: f64) -> Self {
        Waveform::Constant(TAU * mhz)
    }

    pub fn fourier(coeffs: Vec<f64>, tau: f64) -> Result<Self> {
        FourierSeries::new(coeffs, tau).map(Waveform::Fourier)
    }

    /// Evaluate at `t` (µs), returning rad/µs.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(invalid(format!("waveform evaluated at non-finite time {t}")));
        }
        Ok(self.value(t))
    }

    /// Unchecked evaluation for the integrator hot path.
    #[inline]
    pub(crate) fn value(&self, t: f64) -> f64 {
        match self {
            Waveform::Constant(v) => *v,
            Waveform::Fourier(series) => series.value(t),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Waveform::Constant(v) => *v == 0.0,
            Waveform::Fourier(s) => s.coeffs.iter().all(|&c| c == 0.0),
        }
    }

    /// Same shape with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            Waveform::Constant(v) => Waveform::Constant(v * factor),
            Waveform::Fourier(s) => Waveform::Fourier(FourierSeries {
                coeffs: s.coeffs.iter().map(|c| c * factor).collect(),
                tau: s.tau,
            }),
        }
    }

    /// Largest |f(t)| over one period, sampled on a uniform grid.
    pub fn peak(&self) -> f64 {
        match self {
            Waveform::Constant(v) => v.abs(),
            Waveform::Fourier(s) => (0..PEAK_SEARCH_POINTS)
                .map(|k| s.value(s.tau * k as f64 / PEAK_SEARCH_POINTS as f64).abs())
                .fold(0.0, f64::max),
        }
    }

    /// |f(0)| / max_t |f(t)|; how well the series switches off at the pulse edges.
    pub fn endpoint_residual(&self) -> Result<f64> {
        match self {
            Waveform::Constant(_) => {
                Err(invalid("endpoint residual is only defined for fourier waveforms"))
            }
            Waveform::Fourier(s) => {
                let peak = self.peak();
                if peak == 0.0 {
                    return Err(invalid("endpoint residual of an all-zero series"));
                }
                Ok(s.value(0.0).abs() / peak)
            }
        }
    }
}

/// Serialized form used in scenario files. Constants are quoted in MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum WaveformSpec {
    Constant { mhz: f64 },
    Fourier { coeffs: Vec<f64>, tau_us: f64 },
}

impl TryFrom<&WaveformSpec> for Waveform {
    type Error = Error;

    fn try_from(spec: &WaveformSpec) -> Result<Self> {
        match spec {
            WaveformSpec::Constant { mhz } => {
                if !mhz.is_finite() {
                    return Err(invalid("constant waveform must be finite"));
                }
                Ok(Waveform::constant_mhz(*mhz))
            }
            WaveformSpec::Fourier { coeffs, tau_us } => Waveform::fourier(coeffs.clone(), *tau_us),
        }
    }
}

impl From<&Waveform> for WaveformSpec {
    fn from(w: &Waveform) -> Self {
        match w {
            Waveform::Constant(v) => WaveformSpec::Constant { mhz: v / TAU },
            Waveform::Fourier(s) => WaveformSpec::Fourier {
                coeffs: s.coeffs.clone(),
                tau_us: s.tau,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CZ_PROBE_COEFFS, SINGLE_QUBIT_COEFFS};
    use proptest::prelude::*;

    #[test]
    fn constant_returns_stored_value() {
        let w = Waveform::constant_mhz(350.0);
        for t in [0.0, 0.1, 7.3] {
            assert_eq!(w.eval(t).unwrap(), TAU * 350.0);
        }
    }

    #[test]
    fn single_term_series_is_flat() {
        let w = Waveform::fourier(vec![5.0], 1.0).unwrap();
        for t in [0.0, 0.25, 0.9] {
            assert!((w.eval(t).unwrap() - TAU * 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_qubit_pulse_at_half_period() {
        let w = Waveform::fourier(SINGLE_QUBIT_COEFFS.to_vec(), 1.0).unwrap();
        // a0 + Σ 2aₙ(-1)ⁿ = 391.91, divided by 2N+1 = 11
        let expected = TAU * 391.91 / 11.0;
        assert!((w.eval(0.5).unwrap() - expected).abs() < 1e-10);
        assert!((expected / TAU - 35.6282).abs() < 1e-4);
    }

    #[test]
    fn endpoint_residuals_of_reference_pulses() {
        let w = Waveform::fourier(SINGLE_QUBIT_COEFFS.to_vec(), 1.0).unwrap();
        let r = w.endpoint_residual().unwrap();
        let expected = (0.03 / 11.0) / (391.91 / 11.0);
        assert!((r - expected).abs() < 1e-8, "{r} vs {expected}");
        assert!(r < 1e-3);

        let w = Waveform::fourier(CZ_PROBE_COEFFS.to_vec(), 0.25).unwrap();
        let r = w.endpoint_residual().unwrap();
        let f0 = TAU * 0.2 / 11.0;
        assert!((w.eval(0.0).unwrap() - f0).abs() < 1e-9);
        assert!((r - f0 / w.peak()).abs() < 1e-12);
        assert!(r < 1e-3);
    }

    #[test]
    fn flat_series_residual_is_one() {
        let w = Waveform::fourier(vec![1.0, 0.0], 1.0).unwrap();
        assert!((w.endpoint_residual().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Waveform::fourier(vec![], 1.0).is_err());
        assert!(Waveform::fourier(vec![1.0], 0.0).is_err());
        assert!(Waveform::constant(1.0).eval(f64::NAN).is_err());
        assert!(Waveform::constant(1.0).eval(f64::INFINITY).is_err());
        assert!(Waveform::constant(1.0).endpoint_residual().is_err());
    }

    #[test]
    fn spec_rejects_complex_coefficients() {
        let ok: WaveformSpec =
            serde_json::from_str(r#"{"kind":"fourier","coeffs":[1.0,2.0],"tau_us":1.0}"#).unwrap();
        assert!(matches!(ok, WaveformSpec::Fourier { .. }));
        let complex = r#"{"kind":"fourier","coeffs":[[1.0,0.5]],"tau_us":1.0}"#;
        assert!(serde_json::from_str::<WaveformSpec>(complex).is_err());
        let c: WaveformSpec = serde_json::from_str(r#"{"kind":"constant","mhz":350.0}"#).unwrap();
        let w = Waveform::try_from(&c).unwrap();
        assert_eq!(w, Waveform::constant_mhz(350.0));
        match WaveformSpec::from(&w) {
            WaveformSpec::Constant { mhz } => assert!((mhz - 350.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    fn series() -> impl Strategy<Value = (Vec<f64>, f64)> {
        (prop::collection::vec(-500.0..500.0f64, 1..8), 0.05..3.0f64)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn periodic((coeffs, tau) in series(), t in -5.0..5.0f64) {
            let scale: f64 = TAU * coeffs.iter().map(|c| c.abs()).sum::<f64>().max(1.0);
            let w = Waveform::fourier(coeffs, tau).unwrap();
            let a = w.eval(t).unwrap();
            let b = w.eval(t + tau).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }

        #[test]
        fn even_about_half_period((coeffs, tau) in series(), frac in 0.0..1.0f64) {
            let scale: f64 = TAU * coeffs.iter().map(|c| c.abs()).sum::<f64>().max(1.0);
            let w = Waveform::fourier(coeffs, tau).unwrap();
            let t = frac * tau;
            prop_assert!((w.eval(t).unwrap() - w.eval(tau - t).unwrap()).abs() <= 1e-12 * scale);
        }

        #[test]
        fn matches_direct_cosine_sum((coeffs, tau) in series(), t in 0.0..3.0f64) {
            let n = coeffs.len() - 1;
            let direct = TAU * (coeffs[0]
                + (1..=n).map(|k| 2.0 * coeffs[k] * (TAU * k as f64 * t / tau).cos()).sum::<f64>())
                / (2 * n + 1) as f64;
            let scale: f64 = TAU * coeffs.iter().map(|c| c.abs()).sum::<f64>().max(1.0);
            let w = Waveform::fourier(coeffs, tau).unwrap();
            prop_assert!((w.eval(t).unwrap() - direct).abs() <= 1e-11 * scale);
        }
    }
}
