//! Transmitted intensity waveforms and their cross-energy matrices.
//!
//! A waveform is supported on `[0, T_s]` and is zero elsewhere. The cross
//! energies are
//!
//! ```text
//! E[i][l]   = ∫ s_i(t) s_l(t) dt
//! E'[i][l]  = ∫ s_i(t) s_l'(t) dt
//! E''[i][l] = ∫ s_i'(t) s_l'(t) dt
//! ```

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::geometry::{Color, Mat3};
use crate::quadrature::{integrate_adaptive, kronrod_nodes, AdaptiveOptions, Integrand};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveformError {
    #[error("invalid waveform {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("waveform table line {line}: {reason}")]
    InvalidTable { line: usize, reason: String },
    #[error("cannot read waveform table {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("closed-form cross energies need the raised-cosine kind")]
    UnsupportedKind,
    #[error("quadrature did not converge for {entry}: error {estimated_error:.3e} > tolerance {tolerance:.3e}")]
    Quadrature {
        entry: String,
        estimated_error: f64,
        tolerance: f64,
    },
}

/// A per-color transmitted intensity waveform.
#[derive(Debug, Clone, PartialEq)]
pub enum Waveform {
    /// `P (1 - cos(2πt/T)) (1 + cos(2πft))` on `[0, T]`.
    RaisedCosineCarrier { power: f64, duration: f64, carrier_hz: f64 },
    /// Cubic-spline interpolation of user samples. Approximate by construction.
    Tabulated(Arc<TabulatedWaveform>),
}

impl Waveform {
    pub fn raised_cosine(power: f64, duration: f64, carrier_hz: f64) -> Result<Self, WaveformError> {
        positive("power", power)?;
        positive("duration", duration)?;
        if !(carrier_hz >= 0.0 && carrier_hz.is_finite()) {
            return Err(WaveformError::InvalidParameter {
                field: "carrier_hz",
                reason: format!("{carrier_hz} must be finite and non-negative"),
            });
        }
        Ok(Waveform::RaisedCosineCarrier {
            power,
            duration,
            carrier_hz,
        })
    }

    pub fn tabulated(times: Vec<f64>, values: Vec<f64>) -> Result<Self, WaveformError> {
        Ok(Waveform::Tabulated(Arc::new(TabulatedWaveform::new(times, values)?)))
    }

    pub fn from_table_file(path: impl AsRef<Path>) -> Result<Self, WaveformError> {
        Ok(Waveform::Tabulated(Arc::new(TabulatedWaveform::from_file(path)?)))
    }

    /// Support length T_s.
    pub fn duration(&self) -> f64 {
        match self {
            Waveform::RaisedCosineCarrier { duration, .. } => *duration,
            Waveform::Tabulated(tab) => tab.duration(),
        }
    }

    /// Average power over the support.
    pub fn average_power(&self) -> f64 {
        match self {
            Waveform::RaisedCosineCarrier {
                power,
                duration,
                carrier_hz,
            } => {
                // Mean of (1 - cos bt)(1 + cos at) over [0, T], exact for any f.
                let t = *duration;
                let mean_cos = |hz: f64| sinc_cycles(hz * t);
                power
                    * (1.0 + mean_cos(*carrier_hz)
                        - mean_cos(1.0 / t)
                        - 0.5 * mean_cos(carrier_hz + 1.0 / t)
                        - 0.5 * mean_cos(carrier_hz - 1.0 / t))
            }
            Waveform::Tabulated(tab) => tab.integral() / tab.duration(),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Waveform::RaisedCosineCarrier {
                power,
                duration,
                carrier_hz,
            } => {
                if !(0.0..=*duration).contains(&t) {
                    return 0.0;
                }
                let b = 2.0 * PI / duration;
                let a = 2.0 * PI * carrier_hz;
                power * (1.0 - (b * t).cos()) * (1.0 + (a * t).cos())
            }
            Waveform::Tabulated(tab) => tab.eval(t),
        }
    }

    pub fn eval_derivative(&self, t: f64) -> f64 {
        self.eval_with_derivative(t).1
    }

    /// `(s(t), s'(t))`.
    pub fn eval_with_derivative(&self, t: f64) -> (f64, f64) {
        match self {
            Waveform::RaisedCosineCarrier {
                power,
                duration,
                carrier_hz,
            } => {
                if !(0.0..=*duration).contains(&t) {
                    return (0.0, 0.0);
                }
                let b = 2.0 * PI / duration;
                let a = 2.0 * PI * carrier_hz;
                let (sb, cb) = (b * t).sin_cos();
                let (sa, ca) = (a * t).sin_cos();
                (
                    power * (1.0 - cb) * (1.0 + ca),
                    power * (b * sb * (1.0 + ca) - a * (1.0 - cb) * sa),
                )
            }
            Waveform::Tabulated(tab) => tab.eval_with_derivative(t),
        }
    }

    /// Values at `t0 + k·dt` for `k = 0..n`.
    pub fn sample(&self, dt: f64, t0: f64, n: usize) -> Vec<f64> {
        assert!(dt > 0.0, "sampling interval must be positive");
        (0..n).map(|k| self.eval(t0 + k as f64 * dt)).collect()
    }

    /// Highest frequency present in the waveform, used to size quadrature panels.
    fn top_frequency(&self) -> f64 {
        match self {
            Waveform::RaisedCosineCarrier {
                duration, carrier_hz, ..
            } => carrier_hz + 1.0 / duration,
            Waveform::Tabulated(_) => 0.0,
        }
    }

    fn cosine_terms(&self) -> Option<(f64, [CosTerm; 5])> {
        match self {
            Waveform::RaisedCosineCarrier {
                power,
                duration,
                carrier_hz,
            } => {
                let p = *power;
                let f = *carrier_hz;
                Some((
                    *duration,
                    [
                        CosTerm {
                            coef: p,
                            carrier: 0.0,
                            envelope: 0,
                        },
                        CosTerm {
                            coef: p,
                            carrier: f,
                            envelope: 0,
                        },
                        CosTerm {
                            coef: -p,
                            carrier: 0.0,
                            envelope: 1,
                        },
                        CosTerm {
                            coef: -0.5 * p,
                            carrier: f,
                            envelope: 1,
                        },
                        CosTerm {
                            coef: -0.5 * p,
                            carrier: f,
                            envelope: -1,
                        },
                    ],
                ))
            }
            Waveform::Tabulated(_) => None,
        }
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), WaveformError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(WaveformError::InvalidParameter {
            field,
            reason: format!("{v} must be positive and finite"),
        })
    }
}

/// Clamped cubic spline (zero end slopes) through `(t_k, y_k)` with `t_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedWaveform {
    times: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
}

impl TabulatedWaveform {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self, WaveformError> {
        if times.len() != values.len() {
            return Err(WaveformError::InvalidParameter {
                field: "table",
                reason: format!("{} times but {} values", times.len(), values.len()),
            });
        }
        if times.len() < 2 {
            return Err(WaveformError::InvalidParameter {
                field: "table",
                reason: "need at least two samples".into(),
            });
        }
        for (k, (&t, &v)) in times.iter().zip(&values).enumerate() {
            if !t.is_finite() || !v.is_finite() {
                return Err(WaveformError::InvalidTable {
                    line: k + 1,
                    reason: "non-finite entry".into(),
                });
            }
            if v < 0.0 {
                return Err(WaveformError::InvalidTable {
                    line: k + 1,
                    reason: format!("negative intensity {v}"),
                });
            }
            if k > 0 && t <= times[k - 1] {
                return Err(WaveformError::InvalidTable {
                    line: k + 1,
                    reason: "times must be strictly increasing".into(),
                });
            }
        }
        if times[0] != 0.0 {
            return Err(WaveformError::InvalidTable {
                line: 1,
                reason: format!("support must start at t = 0, got {}", times[0]),
            });
        }
        let second = clamped_second_derivatives(&times, &values);
        Ok(TabulatedWaveform { times, values, second })
    }

    /// Reads whitespace- or comma-separated `t value` rows; `#` starts a comment.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, WaveformError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| WaveformError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, WaveformError> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if fields.len() != 2 {
                return Err(WaveformError::InvalidTable {
                    line: n + 1,
                    reason: format!("expected 2 columns, found {}", fields.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| WaveformError::InvalidTable {
                    line: n + 1,
                    reason: format!("{s:?}: {e}"),
                })
            };
            times.push(parse(fields[0])?);
            values.push(parse(fields[1])?);
        }
        Self::new(times, values)
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().expect("non-empty table")
    }

    pub fn knots(&self) -> &[f64] {
        &self.times
    }

    fn segment(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&x| x <= t);
        k.clamp(1, self.times.len() - 1) - 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_with_derivative(t).0
    }

    pub fn eval_with_derivative(&self, t: f64) -> (f64, f64) {
        if !(0.0..=self.duration()).contains(&t) {
            return (0.0, 0.0);
        }
        let k = self.segment(t);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.second[k], self.second[k + 1]);
        let h = t1 - t0;
        let a = (t1 - t) / h;
        let b = (t - t0) / h;
        let v = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d = (y1 - y0) / h - (3.0 * a * a - 1.0) / 6.0 * h * m0 + (3.0 * b * b - 1.0) / 6.0 * h * m1;
        (v, d)
    }

    /// Exact integral of the spline over its support.
    pub fn integral(&self) -> f64 {
        (0..self.times.len() - 1)
            .map(|k| {
                let h = self.times[k + 1] - self.times[k];
                0.5 * h * (self.values[k] + self.values[k + 1])
                    - h * h * h * (self.second[k] + self.second[k + 1]) / 24.0
            })
            .sum()
    }
}

/// Second derivatives of the clamped spline with zero end slopes (Thomas algorithm).
fn clamped_second_derivatives(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let slope: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    diag[0] = 2.0 * h[0];
    sup[0] = h[0];
    rhs[0] = 6.0 * slope[0];
    for k in 1..n - 1 {
        sub[k] = h[k - 1];
        diag[k] = 2.0 * (h[k - 1] + h[k]);
        sup[k] = h[k];
        rhs[k] = 6.0 * (slope[k] - slope[k - 1]);
    }
    sub[n - 1] = h[n - 2];
    diag[n - 1] = 2.0 * h[n - 2];
    rhs[n - 1] = -6.0 * slope[n - 2];

    for k in 1..n {
        let w = sub[k] / diag[k - 1];
        diag[k] -= w * sup[k - 1];
        rhs[k] -= w * rhs[k - 1];
    }
    let mut m = vec![0.0; n];
    m[n - 1] = rhs[n - 1] / diag[n - 1];
    for k in (0..n - 1).rev() {
        m[k] = (rhs[k] - sup[k] * m[k + 1]) / diag[k];
    }
    m
}

/// `sin(2πν)/(2πν)`, the mean of `cos(2πνt/T)` over `[0, T]`.
fn sinc_cycles(nu: f64) -> f64 {
    if nu == 0.0 {
        return 1.0;
    }
    let x = 2.0 * PI * nu;
    sin_2pi(nu) / x
}

/// `sin(2πν)` with the argument reduced modulo one cycle first.
fn sin_2pi(nu: f64) -> f64 {
    (2.0 * PI * (nu - nu.round())).sin()
}

/// `1 - cos(2πν) = 2 sin²(πν)`.
fn one_minus_cos_2pi(nu: f64) -> f64 {
    let r = nu - 2.0 * (0.5 * nu).round();
    let s = (PI * r).sin();
    2.0 * s * s
}

/// One term `coef · cos(2π (carrier + envelope/T) t)`.
#[derive(Debug, Clone, Copy)]
struct CosTerm {
    coef: f64,
    carrier: f64,
    envelope: i32,
}

impl CosTerm {
    fn angular(&self, duration: f64) -> f64 {
        2.0 * PI * (self.carrier + self.envelope as f64 / duration)
    }
}

/// Frequency `f1 ± f2` expressed in cycles over `[0, T]`, keeping carrier and
/// envelope parts apart so that near-cancellations stay exact.
fn combined_cycles(a: &CosTerm, b: &CosTerm, sign: f64, duration: f64) -> (f64, f64) {
    let carrier = a.carrier + sign * b.carrier;
    let envelope = a.envelope as f64 + sign * b.envelope as f64;
    let nu = carrier * duration + envelope;
    (nu, 2.0 * PI * (carrier + envelope / duration))
}

/// ∫₀ᵀ cos(w t) dt.
fn int_cos(nu: f64, w: f64, duration: f64) -> f64 {
    if nu == 0.0 {
        duration
    } else {
        sin_2pi(nu) / w
    }
}

/// ∫₀ᵀ sin(w t) dt.
fn int_sin(nu: f64, w: f64) -> f64 {
    if nu == 0.0 {
        0.0
    } else {
        one_minus_cos_2pi(nu) / w
    }
}

/// The three 3×3 cross-energy matrices, indexed `[i][l]` by color.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossEnergies {
    pub e: Mat3,
    pub e_prime: Mat3,
    pub e_dprime: Mat3,
}

impl CrossEnergies {
    pub fn zeros() -> Self {
        CrossEnergies {
            e: [[0.0; 3]; 3],
            e_prime: [[0.0; 3]; 3],
            e_dprime: [[0.0; 3]; 3],
        }
    }

    /// Every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let s = |m: &Mat3| m.map(|row| row.map(|v| v * factor));
        CrossEnergies {
            e: s(&self.e),
            e_prime: s(&self.e_prime),
            e_dprime: s(&self.e_dprime),
        }
    }

    /// Same energies with E' replaced by zeros.
    pub fn without_first_derivative(&self) -> Self {
        CrossEnergies {
            e_prime: [[0.0; 3]; 3],
            ..*self
        }
    }

    /// Largest entrywise relative difference, normalised per matrix by the
    /// largest diagonal magnitude (E, E'') or by sqrt(max E · max E'') for E'.
    pub fn max_relative_difference(&self, other: &CrossEnergies) -> f64 {
        let scales = energy_scales(&self.e, &self.e_dprime);
        let mats = [
            (&self.e, &other.e, scales[0]),
            (&self.e_prime, &other.e_prime, scales[1]),
            (&self.e_dprime, &other.e_dprime, scales[2]),
        ];
        let mut worst: f64 = 0.0;
        for (a, b, s) in mats {
            for i in 0..3 {
                for l in 0..3 {
                    let d = (a[i][l] - b[i][l]).abs();
                    worst = worst.max(if s > 0.0 { d / s } else { d });
                }
            }
        }
        worst
    }
}

fn energy_scales(e: &Mat3, e_dprime: &Mat3) -> [f64; 3] {
    let max_e = (0..3).map(|i| e[i][i].abs()).fold(0.0, f64::max);
    let max_d = (0..3).map(|i| e_dprime[i][i].abs()).fold(0.0, f64::max);
    [max_e, (max_e * max_d).sqrt(), max_d]
}

/// Exact cross energies for raised-cosine waveforms by term-by-term integration.
pub fn closed_form_cross_energies(waveforms: &[Waveform; 3]) -> Result<CrossEnergies, WaveformError> {
    let mut terms = Vec::with_capacity(3);
    for w in waveforms {
        terms.push(w.cosine_terms().ok_or(WaveformError::UnsupportedKind)?);
    }
    let duration = terms[0].0;
    if terms.iter().any(|(d, _)| *d != duration) {
        return Err(WaveformError::InvalidParameter {
            field: "duration",
            reason: "closed form needs a common support length".into(),
        });
    }
    let mut out = CrossEnergies::zeros();
    for i in 0..3 {
        for l in 0..3 {
            let (mut e, mut ep, mut edp) = (0.0, 0.0, 0.0);
            for p in &terms[i].1 {
                for q in &terms[l].1 {
                    let (nu_d, w_d) = combined_cycles(p, q, -1.0, duration);
                    let (nu_s, w_s) = combined_cycles(p, q, 1.0, duration);
                    let wp = p.angular(duration);
                    let wq = q.angular(duration);
                    let cd = int_cos(nu_d, w_d, duration);
                    let cs = int_cos(nu_s, w_s, duration);
                    e += 0.5 * p.coef * q.coef * (cd + cs);
                    edp += 0.5 * p.coef * q.coef * wp * wq * (cd - cs);
                    // cos(wp t) · (-wq sin(wq t)); sin(wq t) cos(wp t) = ½[sin((wq+wp)t) + sin((wq-wp)t)]
                    let (nu_qd, w_qd) = combined_cycles(q, p, -1.0, duration);
                    ep += -p.coef * q.coef * wq * 0.5 * (int_sin(nu_s, w_s) + int_sin(nu_qd, w_qd));
                }
            }
            out.e[i][l] = e;
            out.e_prime[i][l] = ep;
            out.e_dprime[i][l] = edp;
        }
    }
    Ok(out)
}

const PANELS_PER_TOP_CYCLE: f64 = 2.5;

/// Adaptive-quadrature cross energies for arbitrary waveforms.
pub fn cross_energies(
    waveforms: &[Waveform; 3],
    opts: AdaptiveOptions,
    exec: Exec,
) -> Result<CrossEnergies, WaveformError> {
    let end = waveforms.iter().map(Waveform::duration).fold(0.0, f64::max);
    let f_top = waveforms.iter().map(Waveform::top_frequency).fold(0.0, f64::max);
    let mut breaks: Vec<f64> = Vec::new();
    if f_top > 0.0 {
        let panel = 1.0 / (PANELS_PER_TOP_CYCLE * f_top);
        let n = (end / panel).ceil().max(1.0) as usize;
        breaks.extend((0..=n).map(|k| end * k as f64 / n as f64));
    } else {
        breaks.extend([0.0, end]);
    }
    for w in waveforms {
        breaks.push(w.duration());
        if let Waveform::Tabulated(tab) = w {
            breaks.extend_from_slice(tab.knots());
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * end);

    let integrand = EnergyIntegrand(Sampler::new(waveforms));
    // First-pass ∫|f| on diagonals equals the diagonal energies themselves.
    let scale = |abs: &[f64; 21]| -> [f64; 21] {
        let max_e = [0, 3, 5].iter().map(|&n| abs[n]).fold(0.0, f64::max);
        let max_d = [15, 18, 20].iter().map(|&n| abs[n]).fold(0.0, f64::max);
        let mixed = (max_e * max_d).sqrt();
        std::array::from_fn(|n| match n {
            0..=5 => max_e,
            6..=14 => mixed,
            _ => max_d,
        })
    };
    let out = integrate_adaptive(&integrand, &breaks, scale, opts, exec).map_err(|f| WaveformError::Quadrature {
        entry: entry_name(f.component),
        estimated_error: f.estimated_error,
        tolerance: f.tolerance,
    })?;
    let v = out.value;
    let mut ce = CrossEnergies::zeros();
    for (n, &(i, l)) in UPPER.iter().enumerate() {
        ce.e[i][l] = v[n];
        ce.e[l][i] = v[n];
        ce.e_dprime[i][l] = v[15 + n];
        ce.e_dprime[l][i] = v[15 + n];
    }
    for i in 0..3 {
        for l in 0..3 {
            ce.e_prime[i][l] = v[6 + 3 * i + l];
        }
    }
    Ok(ce)
}

const UPPER: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

fn entry_name(component: usize) -> String {
    let (name, i, l) = match component {
        0..=5 => ("E", UPPER[component].0, UPPER[component].1),
        6..=14 => ("E'", (component - 6) / 3, (component - 6) % 3),
        _ => ("E''", UPPER[component - 15].0, UPPER[component - 15].1),
    };
    format!(
        "{name}[{},{}]",
        Color::from_index(i).label(),
        Color::from_index(l).label()
    )
}

/// Evaluates `(s_i(t), s_i'(t))` for the three colors, sharing the envelope
/// term when all three are raised cosines of one duration.
enum Sampler<'a> {
    SharedEnvelope {
        power: [f64; 3],
        duration: f64,
        envelope: f64,
        carriers: [f64; 3],
    },
    General(&'a [Waveform; 3]),
}

impl<'a> Sampler<'a> {
    fn new(waveforms: &'a [Waveform; 3]) -> Self {
        let mut power = [0.0; 3];
        let mut carriers = [0.0; 3];
        let mut common = None;
        for (i, w) in waveforms.iter().enumerate() {
            match w {
                Waveform::RaisedCosineCarrier {
                    power: p,
                    duration,
                    carrier_hz,
                } if common.is_none_or(|d| d == *duration) => {
                    common = Some(*duration);
                    power[i] = *p;
                    carriers[i] = 2.0 * PI * carrier_hz;
                }
                _ => return Sampler::General(waveforms),
            }
        }
        let duration = common.expect("three waveforms");
        Sampler::SharedEnvelope {
            power,
            duration,
            envelope: 2.0 * PI / duration,
            carriers,
        }
    }

    #[inline]
    fn eval(&self, t: f64) -> [(f64, f64); 3] {
        match self {
            Sampler::SharedEnvelope {
                power,
                duration,
                envelope,
                carriers,
            } => {
                if !(0.0..=*duration).contains(&t) {
                    return [(0.0, 0.0); 3];
                }
                let (sb, cb) = (envelope * t).sin_cos();
                std::array::from_fn(|i| {
                    let (sa, ca) = (carriers[i] * t).sin_cos();
                    let p = power[i];
                    (
                        p * (1.0 - cb) * (1.0 + ca),
                        p * (envelope * sb * (1.0 + ca) - carriers[i] * (1.0 - cb) * sa),
                    )
                })
            }
            Sampler::General(w) => std::array::from_fn(|i| w[i].eval_with_derivative(t)),
        }
    }
}

struct EnergyIntegrand<'a>(Sampler<'a>);

/// Unique entries: E upper triangle, E' in full, E'' upper triangle.
fn energy_products(sd: &[(f64, f64); 3]) -> [f64; 21] {
    let mut v = [0.0; 21];
    for (n, &(i, l)) in UPPER.iter().enumerate() {
        v[n] = sd[i].0 * sd[l].0;
        v[15 + n] = sd[i].1 * sd[l].1;
    }
    for i in 0..3 {
        for l in 0..3 {
            v[6 + 3 * i + l] = sd[i].0 * sd[l].1;
        }
    }
    v
}

impl Integrand<21> for EnergyIntegrand<'_> {
    fn eval(&self, t: f64) -> [f64; 21] {
        energy_products(&self.0.eval(t))
    }

    fn nodes(&self, center: f64, half: f64) -> [[f64; 21]; 15] {
        let Sampler::SharedEnvelope {
            power,
            envelope,
            carriers,
            ..
        } = &self.0
        else {
            return std::array::from_fn(|k| match k {
                0..=6 => self.eval(center - half * kronrod_nodes()[k]),
                7 => self.eval(center),
                _ => self.eval(center + half * kronrod_nodes()[14 - k]),
            });
        };
        // sin/cos at center ± d_k by angle addition.
        let xk = kronrod_nodes();
        let rot = |w: f64| -> [(f64, f64); 15] {
            let (sc, cc) = (w * center).sin_cos();
            let mut out = [(sc, cc); 15];
            for k in 0..7 {
                let (sd, cd) = (w * half * xk[k]).sin_cos();
                out[k] = (sc * cd - cc * sd, cc * cd + sc * sd);
                out[14 - k] = (sc * cd + cc * sd, cc * cd - sc * sd);
            }
            out
        };
        let env = rot(*envelope);
        let car = [rot(carriers[0]), rot(carriers[1]), rot(carriers[2])];
        std::array::from_fn(|k| {
            let (sb, cb) = env[k];
            let sd: [(f64, f64); 3] = std::array::from_fn(|i| {
                let (sa, ca) = car[i][k];
                let p = power[i];
                (
                    p * (1.0 - cb) * (1.0 + ca),
                    p * (envelope * sb * (1.0 + ca) - carriers[i] * (1.0 - cb) * sa),
                )
            });
            energy_products(&sd)
        })
    }
}

/// How cross energies are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyMethod {
    /// Closed form when every waveform is a raised cosine, quadrature otherwise.
    #[default]
    Auto,
    ClosedForm,
    Quadrature,
}

pub fn compute_cross_energies(
    waveforms: &[Waveform; 3],
    method: EnergyMethod,
    exec: Exec,
) -> Result<CrossEnergies, WaveformError> {
    match method {
        EnergyMethod::ClosedForm => closed_form_cross_energies(waveforms),
        EnergyMethod::Quadrature => cross_energies(waveforms, AdaptiveOptions::default(), exec),
        EnergyMethod::Auto => match closed_form_cross_energies(waveforms) {
            Ok(ce) => Ok(ce),
            Err(WaveformError::UnsupportedKind) | Err(WaveformError::InvalidParameter { .. }) => {
                cross_energies(waveforms, AdaptiveOptions::default(), exec)
            }
            Err(e) => Err(e),
        },
    }
}

/// Carrier frequency assignment `f_i^k = k^p · factor_i · f_c`, with `p = 1`
/// when `scale_by_led_index` is set and `p = 0` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMap {
    pub color_factors: [f64; 3],
    pub scale_by_led_index: bool,
}

impl Default for FrequencyMap {
    fn default() -> Self {
        FrequencyMap {
            color_factors: [0.9, 1.0, 1.1],
            scale_by_led_index: true,
        }
    }
}

impl FrequencyMap {
    /// Carrier for color `color` of LED number `led` (1-based).
    pub fn carrier(&self, led: usize, color: Color, center_hz: f64) -> f64 {
        let k = if self.scale_by_led_index { led as f64 } else { 1.0 };
        k * self.color_factors[color.index()] * center_hz
    }

    /// The three raised-cosine waveforms of LED number `led` (1-based).
    pub fn waveforms(
        &self,
        led: usize,
        power: f64,
        duration: f64,
        center_hz: f64,
    ) -> Result<[Waveform; 3], WaveformError> {
        let make = |c: Color| Waveform::raised_cosine(power, duration, self.carrier(led, c, center_hz));
        Ok([make(Color::Red)?, make(Color::Green)?, make(Color::Blue)?])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rc(p: f64, t: f64, f: f64) -> Waveform {
        Waveform::raised_cosine(p, t, f).unwrap()
    }

    #[test]
    fn endpoints_and_midpoint() {
        let w = rc(0.1, 1e-4, 1e7);
        assert_eq!(w.eval(0.0), 0.0);
        assert!(w.eval(1e-4).abs() < 1e-15);
        assert!((w.eval(0.5e-4) - 0.4).abs() < 1e-9);
        assert_eq!(w.eval(-1e-9), 0.0);
        assert_eq!(w.eval_derivative(2e-4), 0.0);
    }

    #[test]
    fn average_power_matches_parameter() {
        let w = rc(0.25, 1e-4, 1e7);
        assert!((w.average_power() - 0.25).abs() < 1e-10 * 0.25);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let w = rc(1.0, 1e-6, 1.3e7);
        let h = 1e-6 * 1e-7;
        for k in 1..50 {
            let t = k as f64 * 1e-6 / 50.0 + 1.7e-9;
            let fd = (w.eval(t + h) - w.eval(t - h)) / (2.0 * h);
            let d = w.eval_derivative(t);
            assert!((fd - d).abs() <= 1e-5 * d.abs().max(1e5), "t={t}: {fd} vs {d}");
        }
    }

    #[test]
    fn identical_colors_make_uniform_energy() {
        let w = rc(0.1, 1e-5, 1e7);
        let ce = closed_form_cross_energies(&[w.clone(), w.clone(), w]).unwrap();
        for i in 0..3 {
            for l in 0..3 {
                assert!((ce.e[i][l] - ce.e[0][0]).abs() < 1e-15 * ce.e[0][0]);
                assert!(ce.e_prime[i][l].abs() < 1e-12 * ce.e[0][0] * 1e7);
            }
        }
        assert!((ce.e[0][0] - 2.25 * 0.01 * 1e-5).abs() < 1e-9 * ce.e[0][0]);
    }

    #[test]
    fn spline_reproduces_knots_and_has_flat_ends() {
        let times = vec![0.0, 1.0, 2.5, 3.0, 4.0];
        let values = vec![0.0, 2.0, 1.0, 3.0, 0.5];
        let tab = TabulatedWaveform::new(times.clone(), values.clone()).unwrap();
        for (t, v) in times.iter().zip(&values) {
            assert!((tab.eval(*t) - v).abs() < 1e-12);
        }
        assert!(tab.eval_with_derivative(0.0).1.abs() < 1e-12);
        assert!(tab.eval_with_derivative(4.0).1.abs() < 1e-12);
        // Spline integral against a fine trapezoid rule.
        let n = 200_000;
        let trap: f64 = (0..n)
            .map(|k| {
                let a = 4.0 * k as f64 / n as f64;
                let b = 4.0 * (k + 1) as f64 / n as f64;
                0.5 * (b - a) * (tab.eval(a) + tab.eval(b))
            })
            .sum();
        assert!((trap - tab.integral()).abs() < 1e-8);
    }

    #[test]
    fn table_parsing_reports_lines() {
        let ok = TabulatedWaveform::parse("# t v\n0 0\n1e-6, 1.5\n2e-6 0\n").unwrap();
        assert_eq!(ok.knots().len(), 3);
        let err = TabulatedWaveform::parse("0 0\n1 1\n1 2\n").unwrap_err();
        assert!(matches!(err, WaveformError::InvalidTable { line: 3, .. }));
        let err = TabulatedWaveform::parse("0 0\n1\n").unwrap_err();
        assert!(matches!(err, WaveformError::InvalidTable { line: 2, .. }));
    }

    #[test]
    fn frequency_map_defaults() {
        let fm = FrequencyMap::default();
        assert!((fm.carrier(3, Color::Blue, 1e7) - 3.3e7).abs() < 1e-3);
        assert!((fm.carrier(1, Color::Red, 1e7) - 9e6).abs() < 1e-6);
    }
}
