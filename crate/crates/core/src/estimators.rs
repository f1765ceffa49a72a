//! Matched-filter correlators and maximum-likelihood estimators for distance
//! and position.
//!
//! Frames live on an absolute sample grid: sample `n` of a frame sits at time
//! `(first_index + n)·dt`. Templates are shifted by whole samples, so a delay
//! `τ` is rounded to the index `round(τ/dt)` before correlating.

use std::sync::OnceLock;

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::Serialize;
use thiserror::Error;

use crate::bounds::{equilibrated_condition, kappas, SINGULAR_CONDITION};
use crate::exec::Exec;
use crate::geometry::{GeometryError, LedTransmitter, Link, Mat3, Vec3, VlcReceiver, SPEED_OF_LIGHT};
use crate::search::{search_box, search_indices, GridError, SearchGrid};
use crate::waveform::{CrossEnergies, Waveform};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("template at delay index {delay} leaves the observation window")]
    TemplateOutsideWindow { delay: i64 },
    #[error("non-positive RSS statistic {0:e}")]
    NonPositiveStatistic(f64),
    #[error("energy matrix{} is ill-conditioned (condition number {condition:e})", led.map(|k| format!(" of LED {k}")).unwrap_or_default())]
    IllConditioned { led: Option<usize>, condition: f64 },
    #[error("objective is identically zero; the frame carries no signal")]
    NonIdentifiable,
    #[error("no finite objective value on the search grid")]
    NoCandidate,
    #[error("invalid {field}: {reason}")]
    InvalidInput { field: &'static str, reason: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Sampled output of the three photodetectors for one LED.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub samples: [Vec<f64>; 3],
    pub dt: f64,
    /// Absolute sample index of the first sample.
    pub first_index: i64,
}

impl ReceivedFrame {
    pub fn new(samples: [Vec<f64>; 3], dt: f64, first_index: i64) -> Result<Self, EstimatorError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(EstimatorError::InvalidInput {
                field: "dt",
                reason: format!("{dt} must be positive"),
            });
        }
        if samples[1].len() != samples[0].len() || samples[2].len() != samples[0].len() {
            return Err(EstimatorError::InvalidInput {
                field: "samples",
                reason: "photodetector sample vectors differ in length".into(),
            });
        }
        Ok(ReceivedFrame {
            samples,
            dt,
            first_index,
        })
    }

    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Time of the first sample (`T₁`).
    pub fn start_time(&self) -> f64 {
        self.first_index as f64 * self.dt
    }

    /// Time of the last sample (`T₂`).
    pub fn end_time(&self) -> f64 {
        (self.first_index + self.len() as i64 - 1) as f64 * self.dt
    }
}

/// Observation window on the absolute sample grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub first_index: i64,
    pub len: usize,
}

impl Window {
    /// Window spanning `[tau_min, tau_max + duration]`, large enough that
    /// every delay in `[tau_min, tau_max]` (rounded or exact) keeps the
    /// template support inside it.
    pub fn covering(tau_min: f64, tau_max: f64, duration: f64, dt: f64) -> Window {
        let d_min = (tau_min / dt).round() as i64;
        let d_max = (tau_max / dt).round() as i64;
        Window {
            first_index: d_min,
            len: (d_max - d_min) as usize + template_len(duration, dt) + 1,
        }
    }

    pub fn times(&self, dt: f64) -> impl Iterator<Item = f64> + '_ {
        let first = self.first_index;
        (0..self.len).map(move |n| (first + n as i64) as f64 * dt)
    }
}

fn template_len(duration: f64, dt: f64) -> usize {
    (duration / dt + 1e-9).floor() as usize + 1
}

/// The three transmitted waveforms sampled at `m·dt`, `m = 0, 1, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct Templates {
    pub dt: f64,
    pub samples: [Vec<f64>; 3],
}

impl Templates {
    pub fn new(waveforms: &[Waveform; 3], dt: f64) -> Self {
        let n = waveforms.iter().map(|w| template_len(w.duration(), dt)).max().unwrap();
        Templates {
            dt,
            samples: std::array::from_fn(|i| waveforms[i].sample(dt, 0.0, n)),
        }
    }

    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `R_{y_j, s}(τ) = dt·Σ y_j(t_n) s(t_n − τ)` for one photodetector, with
/// `τ` rounded to the nearest sample.
pub fn correlate(frame: &ReceivedFrame, pd: usize, waveform: &Waveform, tau: f64) -> Result<f64, EstimatorError> {
    let dt = frame.dt;
    let d = (tau / dt).round() as i64;
    let tmpl = waveform.sample(dt, 0.0, template_len(waveform.duration(), dt));
    let off = d - frame.first_index;
    if off < 0 || off as usize + tmpl.len() > frame.len() {
        return Err(EstimatorError::TemplateOutsideWindow { delay: d });
    }
    let off = off as usize;
    Ok(dt * dot(&frame.samples[pd][off..off + tmpl.len()], &tmpl))
}

/// Lazily cached correlation matrices `R[j][i]` of one frame, indexed by
/// absolute delay index. Safe to query from several threads.
pub struct Correlator<'a> {
    frame: &'a ReceivedFrame,
    templates: &'a Templates,
    slots: Vec<OnceLock<Mat3>>,
}

impl<'a> Correlator<'a> {
    pub fn new(frame: &'a ReceivedFrame, templates: &'a Templates) -> Result<Self, EstimatorError> {
        if (frame.dt - templates.dt).abs() > 1e-12 * frame.dt {
            return Err(EstimatorError::InvalidInput {
                field: "dt",
                reason: format!(
                    "frame step {:e} differs from template step {:e}",
                    frame.dt, templates.dt
                ),
            });
        }
        if frame.len() < templates.len() {
            return Err(EstimatorError::InvalidInput {
                field: "frame",
                reason: "window shorter than the transmitted support".into(),
            });
        }
        let n = frame.len() - templates.len() + 1;
        Ok(Correlator {
            frame,
            templates,
            slots: (0..n).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.frame.dt
    }

    /// Smallest and largest admissible delay index.
    pub fn delay_bounds(&self) -> (i64, i64) {
        let lo = self.frame.first_index;
        (lo, lo + self.slots.len() as i64 - 1)
    }

    pub fn delay_index(&self, tau: f64) -> i64 {
        (tau / self.frame.dt).round() as i64
    }

    pub fn at(&self, d: i64) -> Result<Mat3, EstimatorError> {
        let off = d - self.frame.first_index;
        if off < 0 || off as usize >= self.slots.len() {
            return Err(EstimatorError::TemplateOutsideWindow { delay: d });
        }
        let off = off as usize;
        Ok(*self.slots[off].get_or_init(|| {
            let n = self.templates.len();
            let dt = self.frame.dt;
            std::array::from_fn(|j| {
                let y = &self.frame.samples[j][off..off + n];
                std::array::from_fn(|i| dt * dot(y, &self.templates.samples[i]))
            })
        }))
    }

    pub fn at_time(&self, tau: f64) -> Result<Mat3, EstimatorError> {
        self.at(self.delay_index(tau))
    }
}

/// Auxiliary estimates returned next to the estimand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Auxiliary {
    None,
    /// Estimated delay, seconds.
    Delay(f64),
    /// Estimated delay per LED, seconds.
    Delays(Vec<f64>),
    /// Profiled channel gains `ĥ[j][i]` per LED.
    Gains(Vec<Mat3>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceEstimate {
    pub value: f64,
    pub objective: f64,
    pub boundary_flag: bool,
    pub auxiliary: Auxiliary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionEstimate {
    pub value: [f64; 3],
    pub objective: f64,
    pub boundary_flag: bool,
    pub auxiliary: Auxiliary,
}

/// What the receiver knows about a single axial link.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceModel {
    pub lambertian_order: f64,
    /// `h_{j,i} = γ_{j,i} x^{−m−3}`.
    pub gammas: Mat3,
    pub noise_psd: [f64; 3],
    pub energies: CrossEnergies,
}

impl DistanceModel {
    pub fn kappa(&self) -> f64 {
        kappas(&self.gammas, &self.noise_psd, &self.energies).kappa
    }

    /// `Σ_j σ_j⁻² Σ_i γ_{j,i} R_{j,i}`.
    pub fn statistic(&self, r: &Mat3) -> f64 {
        (0..3)
            .map(|j| (0..3).map(|i| self.gammas[j][i] * r[j][i]).sum::<f64>() / self.noise_psd[j])
            .sum()
    }

    /// Inverts `statistic = κ x^{−m−3}` for `x`.
    pub fn invert_statistic(&self, statistic: f64) -> Result<f64, EstimatorError> {
        if !(statistic > 0.0) {
            return Err(EstimatorError::NonPositiveStatistic(statistic));
        }
        Ok((statistic / self.kappa()).powf(-1.0 / (self.lambertian_order + 3.0)))
    }

    /// Known-channel objective `a·S − a²κ/2` with `a = x^{−m−3}`.
    pub fn known_channel_objective(&self, x: f64, statistic: f64) -> f64 {
        let a = x.powf(-self.lambertian_order - 3.0);
        a * statistic - 0.5 * a * a * self.kappa()
    }
}

fn distance_index_grid(corr: &Correlator, grid: &SearchGrid) -> Result<crate::search::IndexGrid, EstimatorError> {
    if grid.dims() != 1 || !(grid.lower[0] > 0.0) {
        return Err(EstimatorError::InvalidInput {
            field: "distance grid",
            reason: "must be one-dimensional with a positive lower bound".into(),
        });
    }
    let ig = grid.to_indices(SPEED_OF_LIGHT * corr.dt())?;
    check_delays(corr, ig.lower, ig.upper)?;
    Ok(ig)
}

fn check_delays(corr: &Correlator, lo: i64, hi: i64) -> Result<(), EstimatorError> {
    let (a, b) = corr.delay_bounds();
    if lo < a {
        return Err(EstimatorError::TemplateOutsideWindow { delay: lo });
    }
    if hi > b {
        return Err(EstimatorError::TemplateOutsideWindow { delay: hi });
    }
    Ok(())
}

/// Synchronous, known channel: maximizes `a·S(x/c) − a²κ/2`.
pub fn ml_distance_s1(
    corr: &Correlator,
    model: &DistanceModel,
    grid: &SearchGrid,
    exec: Exec,
) -> Result<DistanceEstimate, EstimatorError> {
    let ig = distance_index_grid(corr, grid)?;
    let unit = SPEED_OF_LIGHT * corr.dt();
    let out = search_indices::<EstimatorError, _>(
        &ig,
        |&d| Ok(model.known_channel_objective(d as f64 * unit, model.statistic(&corr.at(d)?))),
        exec,
    )?
    .ok_or(EstimatorError::NoCandidate)?;
    Ok(DistanceEstimate {
        value: out.point as f64 * unit,
        objective: out.value,
        boundary_flag: out.boundary,
        auxiliary: Auxiliary::None,
    })
}

/// Asynchronous, known channel: delay search on `S(τ)`, then power-law
/// inversion of the statistic at the estimated delay.
pub fn ml_distance_s2(
    corr: &Correlator,
    model: &DistanceModel,
    tau_grid: &SearchGrid,
    exec: Exec,
) -> Result<DistanceEstimate, EstimatorError> {
    let ig = tau_grid.to_indices(corr.dt())?;
    check_delays(corr, ig.lower, ig.upper)?;
    let out = search_indices::<EstimatorError, _>(&ig, |&d| Ok(model.statistic(&corr.at(d)?)), exec)?
        .ok_or(EstimatorError::NoCandidate)?;
    let x = model.invert_statistic(out.value)?;
    Ok(DistanceEstimate {
        value: x,
        objective: model.known_channel_objective(x, out.value),
        boundary_flag: out.boundary,
        auxiliary: Auxiliary::Delay(out.point as f64 * corr.dt()),
    })
}

fn energy_inverse(e: &Mat3, led: Option<usize>) -> Result<Matrix3<f64>, EstimatorError> {
    let m = Matrix3::from_fn(|r, c| e[r][c]);
    let condition = equilibrated_condition(&DMatrix::from_fn(3, 3, |r, c| e[r][c]));
    if !(condition <= SINGULAR_CONDITION) {
        return Err(EstimatorError::IllConditioned { led, condition });
    }
    m.try_inverse().ok_or(EstimatorError::IllConditioned { led, condition })
}

fn row(r: &Mat3, j: usize) -> Vector3<f64> {
    Vector3::new(r[j][0], r[j][1], r[j][2])
}

/// `Σ_j w_j R_jᵀE⁻¹R_j`.
fn profiled(r: &Mat3, e_inv: &Matrix3<f64>, weights: [f64; 3]) -> f64 {
    (0..3).map(|j| weights[j] * row(r, j).dot(&(e_inv * row(r, j)))).sum()
}

fn profiled_gains(r: &Mat3, e_inv: &Matrix3<f64>) -> Mat3 {
    std::array::from_fn(|j| {
        let h = e_inv * row(r, j);
        [h[0], h[1], h[2]]
    })
}

/// Synchronous, unknown channel: maximizes `Σ_j σ_j⁻² R_jᵀE⁻¹R_j` with the
/// gains profiled out as `ĥ_j = E⁻¹R_j`.
pub fn ml_distance_s3(
    corr: &Correlator,
    model: &DistanceModel,
    grid: &SearchGrid,
    exec: Exec,
) -> Result<DistanceEstimate, EstimatorError> {
    let e_inv = energy_inverse(&model.energies.e, None)?;
    let ig = distance_index_grid(corr, grid)?;
    let unit = SPEED_OF_LIGHT * corr.dt();
    let w = model.noise_psd.map(|s| 1.0 / s);
    let out = search_indices::<EstimatorError, _>(&ig, |&d| Ok(profiled(&corr.at(d)?, &e_inv, w)), exec)?
        .ok_or(EstimatorError::NoCandidate)?;
    if !(out.value > 0.0) {
        return Err(EstimatorError::NonIdentifiable);
    }
    Ok(DistanceEstimate {
        value: out.point as f64 * unit,
        objective: out.value,
        boundary_flag: out.boundary,
        auxiliary: Auxiliary::Gains(vec![profiled_gains(&corr.at(out.point)?, &e_inv)]),
    })
}

/// Known-channel estimator made robust to delay quantization: the
/// synchronous estimate only selects the delay, and the distance comes from
/// inverting the statistic there.
pub fn ml_distance_s1_modified(
    corr: &Correlator,
    model: &DistanceModel,
    grid: &SearchGrid,
    exec: Exec,
) -> Result<DistanceEstimate, EstimatorError> {
    let first = ml_distance_s1(corr, model, grid, exec)?;
    let tau = first.value / SPEED_OF_LIGHT;
    let stat = model.statistic(&corr.at_time(tau)?);
    let x = model.invert_statistic(stat)?;
    Ok(DistanceEstimate {
        value: x,
        objective: model.known_channel_objective(x, stat),
        boundary_flag: first.boundary_flag,
        auxiliary: Auxiliary::Delay(corr.delay_index(tau) as f64 * corr.dt()),
    })
}

/// What the receiver knows for positioning: LED placements and waveforms,
/// its own orientation, photodetector parameters and the cross-energies.
#[derive(Debug, Clone, Copy)]
pub struct PositionModel<'a> {
    pub leds: &'a [LedTransmitter],
    pub receiver: &'a VlcReceiver,
    pub energies: &'a [CrossEnergies],
}

impl PositionModel<'_> {
    fn check(&self, correlators: &[Correlator]) -> Result<(), EstimatorError> {
        if self.leds.is_empty() || self.energies.len() != self.leds.len() || correlators.len() != self.leds.len() {
            return Err(EstimatorError::InvalidInput {
                field: "position model",
                reason: format!(
                    "{} LEDs, {} energy sets and {} frames",
                    self.leds.len(),
                    self.energies.len(),
                    correlators.len()
                ),
            });
        }
        Ok(())
    }

    /// Known-channel log-likelihood term of LED `k` at location `l` given
    /// the correlations `r`: `Σ_j σ_j⁻²(Σ_i h R − ½Σ_{i,l} h h E)`.
    fn known_channel_term(&self, k: usize, h: &Mat3, r: &Mat3) -> f64 {
        let e = &self.energies[k].e;
        (0..3)
            .map(|j| {
                let lin: f64 = (0..3).map(|i| h[j][i] * r[j][i]).sum();
                let quad: f64 = (0..3)
                    .map(|i| (0..3).map(|l| h[j][i] * h[j][l] * e[i][l]).sum::<f64>())
                    .sum();
                (lin - 0.5 * quad) / self.receiver.noise_psd[j]
            })
            .sum()
    }
}

fn as_point(p: &[f64]) -> Vec3 {
    Vec3::new(p[0], p[1], p[2])
}

fn check_box(grid: &SearchGrid) -> Result<(), EstimatorError> {
    grid.validate()?;
    if grid.dims() != 3 {
        return Err(EstimatorError::InvalidInput {
            field: "position grid",
            reason: "must be three-dimensional".into(),
        });
    }
    Ok(())
}

/// Known gains at `l` for LED `led`, or `None` without line of sight or at
/// the LED itself.
fn gains_at(led: &LedTransmitter, rx: &VlcReceiver, l: &Vec3) -> Result<Option<Mat3>, EstimatorError> {
    if *l == led.location {
        return Ok(None);
    }
    let (h, los) = Link::new(led, l, &rx.orientation).gains(rx)?;
    Ok(los.then_some(h))
}

/// Synchronous, known channel: three-dimensional search with gains and
/// delays recomputed at every candidate.
pub fn ml_position_s1(
    correlators: &[Correlator],
    model: &PositionModel,
    grid: &SearchGrid,
    exec: Exec,
) -> Result<PositionEstimate, EstimatorError> {
    model.check(correlators)?;
    check_box(grid)?;
    let objective = |p: &Vec<f64>| -> Result<f64, EstimatorError> {
        let l = as_point(p);
        let mut total = 0.0;
        for (k, led) in model.leds.iter().enumerate() {
            if l == led.location {
                return Ok(f64::NEG_INFINITY);
            }
            let Some(h) = gains_at(led, model.receiver, &l)? else {
                continue;
            };
            let tau = (l - led.location).norm() / SPEED_OF_LIGHT + led.clock_offset;
            total += model.known_channel_term(k, &h, &correlators[k].at_time(tau)?);
        }
        Ok(total)
    };
    let out = search_box::<EstimatorError, _>(grid, objective, exec)?.ok_or(EstimatorError::NoCandidate)?;
    Ok(PositionEstimate {
        value: [out.point[0], out.point[1], out.point[2]],
        objective: out.value,
        boundary_flag: out.boundary,
        auxiliary: Auxiliary::None,
    })
}

/// Per-LED delay maximizing `Σ_j σ_j⁻² Σ_i h_{j,i} R_{j,i}(τ)`.
///
/// Every gain of one LED is the same non-negative geometric factor times
/// `A_j R̃_{j,i}` (up to a constant), so the maximizer does not depend on the
/// candidate location and one search per LED serves every candidate.
fn delay_estimates(
    correlators: &[Correlator],
    model: &PositionModel,
    tau_grids: &[SearchGrid],
    exec: Exec,
) -> Result<(Vec<i64>, bool), EstimatorError> {
    if tau_grids.len() != correlators.len() {
        return Err(EstimatorError::InvalidInput {
            field: "delay grids",
            reason: format!("{} grids for {} LEDs", tau_grids.len(), correlators.len()),
        });
    }
    let rx = model.receiver;
    let weights: Mat3 =
        std::array::from_fn(|j| std::array::from_fn(|i| rx.pd_areas[j] * rx.responsivity[j][i] / rx.noise_psd[j]));
    let mut delays = Vec::with_capacity(correlators.len());
    let mut boundary = false;
    for (corr, grid) in correlators.iter().zip(tau_grids) {
        let ig = grid.to_indices(corr.dt())?;
        check_delays(corr, ig.lower, ig.upper)?;
        let out = search_indices::<EstimatorError, _>(
            &ig,
            |&d| {
                let r = corr.at(d)?;
                Ok((0..3)
                    .map(|j| (0..3).map(|i| weights[j][i] * r[j][i]).sum::<f64>())
                    .sum())
            },
            exec,
        )?
        .ok_or(EstimatorError::NoCandidate)?;
        boundary |= out.boundary;
        delays.push(out.point);
    }
    Ok((delays, boundary))
}

/// Asynchronous, known channel: per-LED delay estimates, then a
/// three-dimensional search of the known-channel objective at those delays.
pub fn ml_position_s2(
    correlators: &[Correlator],
    model: &PositionModel,
    grid: &SearchGrid,
    tau_grids: &[SearchGrid],
    exec: Exec,
) -> Result<PositionEstimate, EstimatorError> {
    model.check(correlators)?;
    check_box(grid)?;
    let (delays, tau_boundary) = delay_estimates(correlators, model, tau_grids, exec)?;
    let r: Vec<Mat3> = correlators
        .iter()
        .zip(&delays)
        .map(|(c, &d)| c.at(d))
        .collect::<Result<_, _>>()?;
    let objective = |p: &Vec<f64>| -> Result<f64, EstimatorError> {
        let l = as_point(p);
        let mut total = 0.0;
        for (k, led) in model.leds.iter().enumerate() {
            if l == led.location {
                return Ok(f64::NEG_INFINITY);
            }
            if let Some(h) = gains_at(led, model.receiver, &l)? {
                total += model.known_channel_term(k, &h, &r[k]);
            }
        }
        Ok(total)
    };
    let out = search_box::<EstimatorError, _>(grid, objective, exec)?.ok_or(EstimatorError::NoCandidate)?;
    let dt = correlators[0].dt();
    Ok(PositionEstimate {
        value: [out.point[0], out.point[1], out.point[2]],
        objective: out.value,
        boundary_flag: out.boundary || tau_boundary,
        auxiliary: Auxiliary::Delays(delays.iter().map(|&d| d as f64 * dt).collect()),
    })
}

/// Synchronous, unknown channel: maximizes `Σ_k Σ_j (2σ_j²)⁻¹ R_jᵀ(E^k)⁻¹R_j`
/// at the candidate delays, with gains profiled out.
pub fn ml_position_s3(
    correlators: &[Correlator],
    model: &PositionModel,
    grid: &SearchGrid,
    exec: Exec,
) -> Result<PositionEstimate, EstimatorError> {
    model.check(correlators)?;
    check_box(grid)?;
    let inverses: Vec<Matrix3<f64>> = model
        .energies
        .iter()
        .enumerate()
        .map(|(k, ce)| energy_inverse(&ce.e, Some(k + 1)))
        .collect::<Result<_, _>>()?;
    let w = model.receiver.noise_psd.map(|s| 0.5 / s);
    let delay = |l: &Vec3, led: &LedTransmitter| (l - led.location).norm() / SPEED_OF_LIGHT + led.clock_offset;
    let objective = |p: &Vec<f64>| -> Result<f64, EstimatorError> {
        let l = as_point(p);
        let mut total = 0.0;
        for (k, led) in model.leds.iter().enumerate() {
            total += profiled(&correlators[k].at_time(delay(&l, led))?, &inverses[k], w);
        }
        Ok(total)
    };
    let out = search_box::<EstimatorError, _>(grid, objective, exec)?.ok_or(EstimatorError::NoCandidate)?;
    if !(out.value > 0.0) {
        return Err(EstimatorError::NonIdentifiable);
    }
    let l = as_point(&out.point);
    let gains = model
        .leds
        .iter()
        .enumerate()
        .map(|(k, led)| Ok(profiled_gains(&correlators[k].at_time(delay(&l, led))?, &inverses[k])))
        .collect::<Result<_, EstimatorError>>()?;
    Ok(PositionEstimate {
        value: [out.point[0], out.point[1], out.point[2]],
        objective: out.value,
        boundary_flag: out.boundary,
        auxiliary: Auxiliary::Gains(gains),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_covers_support() {
        let w = Window::covering(10e-9, 20e-9, 1e-6, 0.5e-9);
        assert_eq!(w.first_index, 20);
        assert_eq!(w.len, 20 + 2001 + 1);
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..37).map(|k| (k as f64).sin()).collect();
        let b: Vec<f64> = (0..37).map(|k| (k as f64 * 0.3).cos()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn correlate_zero_frame_and_bounds() {
        let w = Waveform::raised_cosine(0.1, 1e-7, 1e8).unwrap();
        let f = ReceivedFrame::new([vec![0.0; 500], vec![0.0; 500], vec![0.0; 500]], 1e-9, 10).unwrap();
        assert_eq!(correlate(&f, 0, &w, 20e-9).unwrap(), 0.0);
        assert!(matches!(
            correlate(&f, 0, &w, 5e-9),
            Err(EstimatorError::TemplateOutsideWindow { delay: 5 })
        ));
        assert!(correlate(&f, 0, &w, 500e-9).is_err());
    }

    #[test]
    fn invert_statistic_identity() {
        let m = DistanceModel {
            lambertian_order: 1.0,
            gammas: [[1e-4; 3]; 3],
            noise_psd: [1e-22; 3],
            energies: crate::waveform::closed_form_cross_energies(
                &crate::waveform::FrequencyMap::default()
                    .waveforms(1, 0.1, 1e-6, 1e7)
                    .unwrap(),
            )
            .unwrap(),
        };
        let x = 4.2f64;
        let s = m.kappa() * x.powf(-4.0);
        assert!((m.invert_statistic(s).unwrap() - x).abs() < 1e-12 * x);
        assert!(matches!(
            m.invert_statistic(-1.0),
            Err(EstimatorError::NonPositiveStatistic(_))
        ));
    }
}
