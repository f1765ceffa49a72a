//! Frame synthesis, Monte Carlo trials and bound sweeps.
//!
//! Noise is white Gaussian with spectral level `σ_j²`, discretized as
//! independent samples of variance `σ_j²/dt` so that `dt·Σ y s` reproduces the
//! continuous matched-filter statistics. Each Monte Carlo trial draws from its
//! own ChaCha8 stream keyed by the sweep-value index and the trial index, and
//! all estimators of a trial see the same frames.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{
    crlb_distance_s1, crlb_distance_s2, crlb_distance_s3, crlb_position, kappas, BoundsError, CrlbResult,
    PositionProblem, Scenario,
};
use crate::estimators::{
    ml_distance_s1, ml_distance_s1_modified, ml_distance_s2, ml_distance_s3, ml_position_s1, ml_position_s2,
    ml_position_s3, Correlator, DistanceModel, EstimatorError, PositionModel, ReceivedFrame, Templates, Window,
};
use crate::exec::{CompensatedSum, Exec};
use crate::geometry::{gamma_matrix, GeometryError, LedTransmitter, Link, Mat3, Vec3, VlcReceiver, SPEED_OF_LIGHT};
use crate::scene;
use crate::search::{GridError, SearchGrid};
use crate::waveform::{compute_cross_energies, CrossEnergies, EnergyMethod, FrequencyMap, Waveform, WaveformError};

/// Recorded in output metadata so runs can be reproduced elsewhere.
pub const RNG_ALGORITHM: &str =
    "rand_chacha::ChaCha8Rng::seed_from_u64(seed), stream (value_index << 32) | trial, rand_distr::StandardNormal";

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid sweep: {0}")]
    Sweep(String),
    #[error("invalid scene: {0}")]
    Scene(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "P_o")]
    Power,
    #[serde(rename = "f_c")]
    CenterFrequency,
    #[serde(rename = "T_s")]
    Duration,
    #[serde(rename = "x")]
    Distance,
    /// Values index into the scene's list of receiver positions.
    #[serde(rename = "position-grid")]
    PositionGrid,
}

impl SweepVariable {
    pub fn label(self) -> &'static str {
        match self {
            SweepVariable::Power => "P_o",
            SweepVariable::CenterFrequency => "f_c",
            SweepVariable::Duration => "T_s",
            SweepVariable::Distance => "x",
            SweepVariable::PositionGrid => "position-grid",
        }
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SweepVariable {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "P_o" => Ok(SweepVariable::Power),
            "f_c" => Ok(SweepVariable::CenterFrequency),
            "T_s" => Ok(SweepVariable::Duration),
            "x" => Ok(SweepVariable::Distance),
            "position-grid" => Ok(SweepVariable::PositionGrid),
            other => Err(SimError::Sweep(format!("unknown variable {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.values.is_empty() {
            return Err(SimError::Sweep("values must be non-empty".into()));
        }
        if self.trials == 0 {
            return Err(SimError::Sweep("trials must be at least 1".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(SimError::Sweep(format!("non-finite value {v}")));
        }
        Ok(())
    }
}

/// Monte Carlo summary of one estimator at one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McStats {
    pub estimator: String,
    pub rmse_m: f64,
    pub stderr_m: f64,
    pub trials: usize,
    pub boundary_hits: usize,
    pub error_trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub variable: SweepVariable,
    pub value: f64,
    pub scenario: Scenario,
    pub crlb_rmse_m: f64,
    pub crlb_singular: bool,
    pub mc: Option<McStats>,
}

/// Transmitted waveform family.
#[derive(Debug, Clone, PartialEq)]
pub enum WaveformSource {
    /// Raised-cosine carriers with frequencies from the frequency map.
    RaisedCosine { frequency_map: FrequencyMap },
    /// Fixed user waveforms shared by every LED; power, duration and
    /// frequency sweeps do not apply.
    Fixed([Waveform; 3]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub power: f64,
    pub duration: f64,
    pub center_hz: f64,
    pub source: WaveformSource,
    pub energy_method: EnergyMethod,
}

impl SignalSpec {
    pub fn reference(power: f64, duration: f64, center_hz: f64) -> Self {
        SignalSpec {
            power,
            duration,
            center_hz,
            source: WaveformSource::RaisedCosine {
                frequency_map: FrequencyMap::default(),
            },
            energy_method: EnergyMethod::Auto,
        }
    }

    /// Waveforms of LED number `led` (1-based).
    pub fn waveforms(&self, led: usize) -> Result<[Waveform; 3], SimError> {
        match &self.source {
            WaveformSource::RaisedCosine { frequency_map } => {
                Ok(frequency_map.waveforms(led, self.power, self.duration, self.center_hz)?)
            }
            WaveformSource::Fixed(w) => Ok(w.clone()),
        }
    }

    fn support(&self) -> f64 {
        match &self.source {
            WaveformSource::RaisedCosine { .. } => self.duration,
            WaveformSource::Fixed(w) => w.iter().map(Waveform::duration).fold(0.0, f64::max),
        }
    }

    fn apply(&mut self, variable: SweepVariable, value: f64) -> Result<bool, SimError> {
        let target = match variable {
            SweepVariable::Power => &mut self.power,
            SweepVariable::CenterFrequency => &mut self.center_hz,
            SweepVariable::Duration => &mut self.duration,
            _ => return Ok(false),
        };
        if matches!(self.source, WaveformSource::Fixed(_)) {
            return Err(SimError::Sweep(format!(
                "{variable} cannot be swept with fixed user waveforms"
            )));
        }
        *target = value;
        Ok(true)
    }
}

/// Placement of one luminaire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedPlacement {
    pub location: Vec3,
    pub orientation: Vec3,
    pub lambertian_order: f64,
    pub clock_offset: f64,
}

/// Single LED pointing down at an upward-facing receiver a known height
/// below it, at distance `distance`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceScene {
    pub receiver: VlcReceiver,
    pub lambertian_order: f64,
    pub led_height: f64,
    pub distance: f64,
    pub signal: SignalSpec,
    pub dt: f64,
    pub distance_grid: SearchGrid,
    /// Coarse delay step of the asynchronous search, in samples.
    pub delay_step_samples: usize,
}

impl DistanceScene {
    pub fn reference() -> Self {
        DistanceScene {
            receiver: scene::receiver(),
            lambertian_order: scene::LAMBERTIAN_ORDER,
            led_height: scene::LED_HEIGHT,
            distance: 5.0,
            signal: SignalSpec::reference(0.1, 0.01, 1e7),
            dt: 0.5e-9,
            distance_grid: SearchGrid::interval(scene::LED_HEIGHT, 10.0, 0.05, 3, 0.2).expect("valid grid"),
            delay_step_samples: 4,
        }
    }

    pub fn with_value(&self, variable: SweepVariable, value: f64) -> Result<Self, SimError> {
        let mut s = self.clone();
        if !s.signal.apply(variable, value)? {
            match variable {
                SweepVariable::Distance => s.distance = value,
                _ => {
                    return Err(SimError::Sweep(format!(
                        "{variable} does not apply to distance estimation"
                    )))
                }
            }
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.receiver.validate()?;
        self.distance_grid.validate()?;
        if !(self.dt > 0.0) {
            return Err(SimError::Scene(format!("dt {} must be positive", self.dt)));
        }
        if !(self.distance >= self.led_height) {
            return Err(SimError::Scene(format!(
                "distance {} is below the LED height {}",
                self.distance, self.led_height
            )));
        }
        if self.delay_step_samples == 0 {
            return Err(SimError::Scene("delay_step_samples must be at least 1".into()));
        }
        Ok(())
    }

    pub fn gammas(&self) -> Result<Mat3, SimError> {
        Ok(gamma_matrix(&self.receiver, self.lambertian_order, self.led_height)?)
    }

    pub fn model(&self, exec: Exec) -> Result<(DistanceModel, [Waveform; 3]), SimError> {
        let waveforms = self.signal.waveforms(1)?;
        let energies = compute_cross_energies(&waveforms, self.signal.energy_method, exec)?;
        Ok((
            DistanceModel {
                lambertian_order: self.lambertian_order,
                gammas: self.gammas()?,
                noise_psd: self.receiver.noise_psd,
                energies,
            },
            waveforms,
        ))
    }

    /// Delay search grid of the asynchronous estimator, spanning the delays
    /// of the distance grid.
    pub fn delay_grid(&self) -> Result<SearchGrid, SimError> {
        let g = &self.distance_grid;
        Ok(SearchGrid::interval(
            g.lower[0] / SPEED_OF_LIGHT,
            g.upper[0] / SPEED_OF_LIGHT,
            self.delay_step_samples as f64 * self.dt,
            g.levels,
            g.shrink,
        )?)
    }

    pub fn window(&self) -> Window {
        let g = &self.distance_grid;
        Window::covering(
            g.lower[0] / SPEED_OF_LIGHT,
            g.upper[0] / SPEED_OF_LIGHT,
            self.signal.support(),
            self.dt,
        )
    }

    pub fn crlbs(&self, exec: Exec) -> Result<[CrlbResult; 3], SimError> {
        let (model, _) = self.model(exec)?;
        let x = self.distance;
        let m = self.lambertian_order;
        let k = kappas(&model.gammas, &model.noise_psd, &model.energies);
        let h = model.gammas.map(|r| r.map(|g| g * x.powf(-m - 3.0)));
        Ok([
            crlb_distance_s1(x, m, &k)?,
            crlb_distance_s2(x, m, &k)?,
            crlb_distance_s3(x, &h, &model.noise_psd, &model.energies)?,
        ])
    }
}

/// Several LEDs and a receiver whose location is to be estimated.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionScene {
    pub leds: Vec<LedPlacement>,
    pub receiver: VlcReceiver,
    pub signal: SignalSpec,
    pub dt: f64,
    pub grid: SearchGrid,
    pub delay_step_samples: usize,
    /// Extra delay range searched on both sides by the asynchronous
    /// estimator, seconds.
    pub delay_margin: f64,
    /// Receiver locations addressed by the `position-grid` sweep variable.
    pub positions: Vec<Vec3>,
}

impl PositionScene {
    pub fn reference() -> Self {
        let leds = scene::led_layout()
            .iter()
            .map(|(loc, (theta, phi))| LedPlacement {
                location: *loc,
                orientation: crate::geometry::orientation_from_angles(*theta, *phi),
                lambertian_order: scene::LAMBERTIAN_ORDER,
                clock_offset: 0.0,
            })
            .collect();
        PositionScene {
            leds,
            receiver: scene::receiver(),
            signal: SignalSpec::reference(0.1, 1e-6, 1e7),
            dt: 0.5e-9,
            grid: SearchGrid::new(vec![0.0; 3], scene::ROOM.to_vec(), 0.25, 3, 0.2).expect("valid grid"),
            delay_step_samples: 4,
            delay_margin: 0.0,
            positions: vec![scene::receiver_location()],
        }
    }

    pub fn with_value(&self, variable: SweepVariable, value: f64) -> Result<Self, SimError> {
        let mut s = self.clone();
        if !s.signal.apply(variable, value)? {
            match variable {
                SweepVariable::PositionGrid => {
                    let idx = value as usize;
                    if value < 0.0 || value.fract() != 0.0 || idx >= s.positions.len() {
                        return Err(SimError::Sweep(format!(
                            "position index {value} out of range 0..{}",
                            s.positions.len()
                        )));
                    }
                    s.receiver.location = s.positions[idx];
                }
                _ => {
                    return Err(SimError::Sweep(format!(
                        "{variable} does not apply to position estimation"
                    )))
                }
            }
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.receiver.validate()?;
        self.grid.validate()?;
        if self.grid.dims() != 3 {
            return Err(SimError::Scene("position grid must be three-dimensional".into()));
        }
        if self.leds.is_empty() {
            return Err(SimError::Scene("at least one LED is required".into()));
        }
        if !(self.dt > 0.0) {
            return Err(SimError::Scene(format!("dt {} must be positive", self.dt)));
        }
        if !(self.delay_margin >= 0.0) {
            return Err(SimError::Scene("delay_margin must be non-negative".into()));
        }
        if self.delay_step_samples == 0 {
            return Err(SimError::Scene("delay_step_samples must be at least 1".into()));
        }
        Ok(())
    }

    pub fn transmitters(&self) -> Result<Vec<LedTransmitter>, SimError> {
        self.leds
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let led = LedTransmitter {
                    location: p.location,
                    orientation: p.orientation,
                    lambertian_order: p.lambertian_order,
                    clock_offset: p.clock_offset,
                    waveforms: self.signal.waveforms(k + 1)?,
                };
                led.validate()?;
                Ok(led)
            })
            .collect()
    }

    pub fn energies(&self, leds: &[LedTransmitter], exec: Exec) -> Result<Vec<CrossEnergies>, SimError> {
        leds.iter()
            .map(|l| Ok(compute_cross_energies(&l.waveforms, self.signal.energy_method, exec)?))
            .collect()
    }

    /// Synchronous delay range from LED `led` over the search box, seconds.
    pub fn delay_range(&self, led: &LedPlacement) -> (f64, f64) {
        let g = &self.grid;
        let near = Vec3::from_fn(|a, _| led.location[a].clamp(g.lower[a], g.upper[a]));
        let far = Vec3::from_fn(|a, _| {
            if (led.location[a] - g.lower[a]).abs() > (led.location[a] - g.upper[a]).abs() {
                g.lower[a]
            } else {
                g.upper[a]
            }
        });
        (
            (near - led.location).norm() / SPEED_OF_LIGHT + led.clock_offset,
            (far - led.location).norm() / SPEED_OF_LIGHT + led.clock_offset,
        )
    }

    pub fn windows(&self) -> Vec<Window> {
        self.leds
            .iter()
            .map(|l| {
                let (a, b) = self.delay_range(l);
                Window::covering(
                    a - self.delay_margin,
                    b + self.delay_margin,
                    self.signal.support(),
                    self.dt,
                )
            })
            .collect()
    }

    pub fn delay_grids(&self) -> Result<Vec<SearchGrid>, SimError> {
        self.leds
            .iter()
            .map(|l| {
                let (a, b) = self.delay_range(l);
                Ok(SearchGrid::interval(
                    a - self.delay_margin,
                    b + self.delay_margin,
                    self.delay_step_samples as f64 * self.dt,
                    self.grid.levels,
                    self.grid.shrink,
                )?)
            })
            .collect()
    }

    pub fn crlbs(&self, exec: Exec) -> Result<[CrlbResult; 3], SimError> {
        let leds = self.transmitters()?;
        let energies = self.energies(&leds, exec)?;
        let p = PositionProblem::new(&leds, &self.receiver, &energies);
        Ok([
            crlb_position(&p, Scenario::S1)?,
            crlb_position(&p, Scenario::S2)?,
            crlb_position(&p, Scenario::S3)?,
        ])
    }
}

/// Noise-free received samples of one LED on a window.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFrame {
    pub samples: [Vec<f64>; 3],
    pub dt: f64,
    pub first_index: i64,
}

impl MeanFrame {
    /// `Σ_i h_{j,i} s_i(t_n − τ)` at the window samples, with the exact delay.
    pub fn new(waveforms: &[Waveform; 3], gains: &Mat3, tau: f64, window: Window, dt: f64) -> Result<Self, SimError> {
        let support = waveforms.iter().map(Waveform::duration).fold(0.0, f64::max);
        let t_first = window.first_index as f64 * dt;
        let t_last = (window.first_index + window.len as i64 - 1) as f64 * dt;
        if tau < t_first - 0.5 * dt || tau + support > t_last + dt {
            return Err(SimError::Estimator(EstimatorError::InvalidInput {
                field: "window",
                reason: format!(
                    "delayed support [{tau:e}, {:e}] leaves the observation window",
                    tau + support
                ),
            }));
        }
        let mut samples: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; window.len]);
        let n_lo = ((tau / dt).floor() as i64 - window.first_index).max(0) as usize;
        let n_hi = ((((tau + support) / dt).ceil() as i64 - window.first_index) as usize).min(window.len - 1);
        for n in n_lo..=n_hi {
            let t = (window.first_index + n as i64) as f64 * dt - tau;
            let s = [waveforms[0].eval(t), waveforms[1].eval(t), waveforms[2].eval(t)];
            for j in 0..3 {
                samples[j][n] = gains[j][0] * s[0] + gains[j][1] * s[1] + gains[j][2] * s[2];
            }
        }
        Ok(MeanFrame {
            samples,
            dt,
            first_index: window.first_index,
        })
    }

    /// The mean plus white noise of level `noise_psd[j]`.
    pub fn draw<R: Rng>(&self, noise_psd: &[f64; 3], rng: &mut R) -> ReceivedFrame {
        let samples = std::array::from_fn(|j| {
            let sd = (noise_psd[j] / self.dt).sqrt();
            self.samples[j]
                .iter()
                .map(|&m| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + sd * z
                })
                .collect()
        });
        ReceivedFrame {
            samples,
            dt: self.dt,
            first_index: self.first_index,
        }
    }

    pub fn noiseless(&self) -> ReceivedFrame {
        ReceivedFrame {
            samples: self.samples.clone(),
            dt: self.dt,
            first_index: self.first_index,
        }
    }
}

/// RNG stream for one trial at one sweep value.
pub fn trial_rng(seed: u64, value_index: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((value_index as u64) << 32) | trial as u64);
    rng
}

/// Noisy frames for every LED of a position scene at the receiver location.
pub fn synthesize_frames<R: Rng>(scene: &PositionScene, rng: &mut R) -> Result<Vec<ReceivedFrame>, SimError> {
    let leds = scene.transmitters()?;
    let means = position_means(scene, &leds)?;
    Ok(means.iter().map(|m| m.draw(&scene.receiver.noise_psd, rng)).collect())
}

fn position_means(scene: &PositionScene, leds: &[LedTransmitter]) -> Result<Vec<MeanFrame>, SimError> {
    let rx = &scene.receiver;
    leds.iter()
        .zip(scene.windows())
        .map(|(led, w)| {
            let (h, _) = Link::new(led, &rx.location, &rx.orientation).gains(rx)?;
            let tau = (rx.location - led.location).norm() / SPEED_OF_LIGHT + led.clock_offset;
            MeanFrame::new(&led.waveforms, &h, tau, w, scene.dt)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceEstimator {
    MlS1,
    MlS2,
    MlS3,
    MlS1Modified,
}

impl DistanceEstimator {
    pub const ALL: [DistanceEstimator; 4] = [
        DistanceEstimator::MlS1,
        DistanceEstimator::MlS2,
        DistanceEstimator::MlS3,
        DistanceEstimator::MlS1Modified,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DistanceEstimator::MlS1 => "ml-s1",
            DistanceEstimator::MlS2 => "ml-s2",
            DistanceEstimator::MlS3 => "ml-s3",
            DistanceEstimator::MlS1Modified => "ml-s1-modified",
        }
    }

    /// Scenario whose bound the estimator is compared with.
    pub fn scenario(self) -> Scenario {
        match self {
            DistanceEstimator::MlS1 | DistanceEstimator::MlS1Modified => Scenario::S1,
            DistanceEstimator::MlS2 => Scenario::S2,
            DistanceEstimator::MlS3 => Scenario::S3,
        }
    }
}

/// Per-trial outcome of one estimator: squared error and boundary flag.
type TrialOutcome = Result<(f64, bool), EstimatorError>;

fn summarize(label: &str, outcomes: impl Iterator<Item = TrialOutcome>, seed: u64) -> McStats {
    let mut sum = CompensatedSum::default();
    let mut sq: Vec<f64> = Vec::new();
    let (mut boundary_hits, mut error_trials, mut trials) = (0, 0, 0);
    for o in outcomes {
        trials += 1;
        match o {
            Ok((e2, b)) => {
                sum.add(e2);
                sq.push(e2);
                boundary_hits += b as usize;
            }
            Err(_) => error_trials += 1,
        }
    }
    let n = sq.len();
    let (rmse, stderr) = if n == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let mse = sum.value() / n as f64;
        let rmse = mse.sqrt();
        let stderr = if n > 1 && rmse > 0.0 {
            let mut var = CompensatedSum::default();
            for e2 in &sq {
                var.add((e2 - mse).powi(2));
            }
            // Delta method: se(√m) = se(m) / (2√m).
            (var.value() / (n - 1) as f64 / n as f64).sqrt() / (2.0 * rmse)
        } else {
            0.0
        };
        (rmse, stderr)
    };
    McStats {
        estimator: label.to_string(),
        rmse_m: rmse,
        stderr_m: stderr,
        trials,
        boundary_hits,
        error_trials,
        seed,
    }
}

fn bound_row(variable: SweepVariable, value: f64, scenario: Scenario, b: &CrlbResult, mc: Option<McStats>) -> SweepRow {
    SweepRow {
        variable,
        value,
        scenario,
        crlb_rmse_m: b.rmse_bound,
        crlb_singular: b.singular_flag,
        mc,
    }
}

/// Distance bounds for every scenario at every sweep value.
pub fn crlb_sweep_distance(spec: &SweepSpec, scene: &DistanceScene, exec: Exec) -> Result<Vec<SweepRow>, SimError> {
    spec.validate()?;
    let per_value = exec.map(&spec.values, |&v| -> Result<Vec<SweepRow>, SimError> {
        let s = scene.with_value(spec.variable, v)?;
        s.validate()?;
        let b = s.crlbs(Exec::Sequential)?;
        Ok(Scenario::ALL
            .iter()
            .zip(&b)
            .map(|(sc, r)| bound_row(spec.variable, v, *sc, r, None))
            .collect())
    });
    Ok(per_value.into_iter().collect::<Result<Vec<_>, _>>()?.concat())
}

/// Position bounds for every scenario at every sweep value.
pub fn crlb_sweep_position(spec: &SweepSpec, scene: &PositionScene, exec: Exec) -> Result<Vec<SweepRow>, SimError> {
    spec.validate()?;
    let per_value = exec.map(&spec.values, |&v| -> Result<Vec<SweepRow>, SimError> {
        let s = scene.with_value(spec.variable, v)?;
        s.validate()?;
        let b = s.crlbs(Exec::Sequential)?;
        Ok(Scenario::ALL
            .iter()
            .zip(&b)
            .map(|(sc, r)| bound_row(spec.variable, v, *sc, r, None))
            .collect())
    });
    Ok(per_value.into_iter().collect::<Result<Vec<_>, _>>()?.concat())
}

/// Monte Carlo distance estimation: one row per (sweep value, estimator).
pub fn run_mc_distance(
    spec: &SweepSpec,
    scene: &DistanceScene,
    estimators: &[DistanceEstimator],
    exec: Exec,
) -> Result<Vec<SweepRow>, SimError> {
    spec.validate()?;
    let mut rows = Vec::new();
    for (vi, &v) in spec.values.iter().enumerate() {
        let s = scene.with_value(spec.variable, v)?;
        s.validate()?;
        let (model, waveforms) = s.model(exec)?;
        let bounds = s.crlbs(exec)?;
        let x = s.distance;
        let h = model.gammas.map(|r| r.map(|g| g * x.powf(-s.lambertian_order - 3.0)));
        let mean = MeanFrame::new(&waveforms, &h, x / SPEED_OF_LIGHT, s.window(), s.dt)?;
        let templates = Templates::new(&waveforms, s.dt);
        let delay_grid = s.delay_grid()?;
        let outcomes: Vec<Vec<TrialOutcome>> = exec.map_range(spec.trials, |t| {
            let frame = mean.draw(&model.noise_psd, &mut trial_rng(spec.seed, vi, t));
            let corr = match Correlator::new(&frame, &templates) {
                Ok(c) => c,
                Err(e) => return vec![Err(e); estimators.len()],
            };
            estimators
                .iter()
                .map(|est| {
                    let r = match est {
                        DistanceEstimator::MlS1 => ml_distance_s1(&corr, &model, &s.distance_grid, Exec::Sequential),
                        DistanceEstimator::MlS2 => ml_distance_s2(&corr, &model, &delay_grid, Exec::Sequential),
                        DistanceEstimator::MlS3 => ml_distance_s3(&corr, &model, &s.distance_grid, Exec::Sequential),
                        DistanceEstimator::MlS1Modified => {
                            ml_distance_s1_modified(&corr, &model, &s.distance_grid, Exec::Sequential)
                        }
                    };
                    r.map(|e| ((e.value - x).powi(2), e.boundary_flag))
                })
                .collect()
        });
        for (ei, est) in estimators.iter().enumerate() {
            let stats = summarize(est.label(), outcomes.iter().map(|o| o[ei].clone()), spec.seed);
            let sc = est.scenario();
            rows.push(bound_row(spec.variable, v, sc, &bounds[sc as usize], Some(stats)));
        }
    }
    Ok(rows)
}

/// Monte Carlo position estimation: one row per (sweep value, scenario).
pub fn run_mc_position(
    spec: &SweepSpec,
    scene: &PositionScene,
    estimators: &[Scenario],
    exec: Exec,
) -> Result<Vec<SweepRow>, SimError> {
    spec.validate()?;
    let mut rows = Vec::new();
    for (vi, &v) in spec.values.iter().enumerate() {
        let s = scene.with_value(spec.variable, v)?;
        s.validate()?;
        let leds = s.transmitters()?;
        let energies = s.energies(&leds, exec)?;
        let bounds = s.crlbs(exec)?;
        let means = position_means(&s, &leds)?;
        let templates: Vec<Templates> = leds.iter().map(|l| Templates::new(&l.waveforms, s.dt)).collect();
        let tau_grids = s.delay_grids()?;
        let model = PositionModel {
            leds: &leds,
            receiver: &s.receiver,
            energies: &energies,
        };
        let truth = s.receiver.location;
        let outcomes: Vec<Vec<TrialOutcome>> = exec.map_range(spec.trials, |t| {
            let mut rng = trial_rng(spec.seed, vi, t);
            let frames: Vec<ReceivedFrame> = means.iter().map(|m| m.draw(&s.receiver.noise_psd, &mut rng)).collect();
            let corrs: Result<Vec<Correlator>, _> = frames
                .iter()
                .zip(&templates)
                .map(|(f, tm)| Correlator::new(f, tm))
                .collect();
            let corrs = match corrs {
                Ok(c) => c,
                Err(e) => return vec![Err(e); estimators.len()],
            };
            estimators
                .iter()
                .map(|sc| {
                    let r = match sc {
                        Scenario::S1 => ml_position_s1(&corrs, &model, &s.grid, Exec::Sequential),
                        Scenario::S2 => ml_position_s2(&corrs, &model, &s.grid, &tau_grids, Exec::Sequential),
                        Scenario::S3 => ml_position_s3(&corrs, &model, &s.grid, Exec::Sequential),
                    };
                    r.map(|e| ((Vec3::from(e.value) - truth).norm_squared(), e.boundary_flag))
                })
                .collect()
        });
        for (ei, sc) in estimators.iter().enumerate() {
            let label = format!("ml-{}", sc.label());
            let stats = summarize(&label, outcomes.iter().map(|o| o[ei].clone()), spec.seed);
            rows.push(bound_row(spec.variable, v, *sc, &bounds[*sc as usize], Some(stats)));
        }
    }
    Ok(rows)
}

/// Sample covariance of the numerical synchronous known-channel score at
/// the true receiver location, over `draws` noise realizations.
///
/// The score is the central difference (step `step`, metres) of the
/// discrete log-likelihood `−Σ dt (y − μ(l))² / (2σ²)` with exact, unrounded
/// delays.
pub fn empirical_fim_position(
    scene: &PositionScene,
    draws: usize,
    seed: u64,
    step: f64,
    exec: Exec,
) -> Result<DMatrix<f64>, SimError> {
    scene.validate()?;
    if draws < 2 {
        return Err(SimError::Sweep("at least two draws are required".into()));
    }
    let leds = scene.transmitters()?;
    let rx = &scene.receiver;
    let l0 = rx.location;
    let support = scene.signal.support();
    let dt = scene.dt;
    // Means at the truth and at ±step along each axis, per LED.
    let mut means: Vec<[MeanFrame; 7]> = Vec::with_capacity(leds.len());
    for led in &leds {
        let tau0 = (l0 - led.location).norm() / SPEED_OF_LIGHT + led.clock_offset;
        let margin = 2.0 * step / SPEED_OF_LIGHT + dt;
        let w = Window::covering(tau0 - margin, tau0 + margin, support, dt);
        let at = |l: Vec3| -> Result<MeanFrame, SimError> {
            let (h, _) = Link::new(led, &l, &rx.orientation).gains(rx)?;
            let tau = (l - led.location).norm() / SPEED_OF_LIGHT + led.clock_offset;
            MeanFrame::new(&led.waveforms, &h, tau, w, dt)
        };
        let mut shifted = Vec::with_capacity(7);
        shifted.push(at(l0)?);
        for a in 0..3 {
            for sign in [1.0, -1.0] {
                let mut l = l0;
                l[a] += sign * step;
                shifted.push(at(l)?);
            }
        }
        means.push(shifted.try_into().expect("seven means"));
    }
    let scores: Vec<[f64; 3]> = exec.map_range(draws, |d| {
        let mut rng = trial_rng(seed, 0, d);
        let mut score = [0.0; 3];
        for m in &means {
            let base = &m[0];
            for j in 0..3 {
                let sd = (rx.noise_psd[j] / dt).sqrt();
                let c = dt / (2.0 * rx.noise_psd[j]);
                let noise: Vec<f64> = (0..base.samples[j].len())
                    .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                // log L(l') − log L(l0) = −c Σ (μ0 − μ')(2n + μ0 − μ').
                let delta = |other: &MeanFrame| -> f64 {
                    base.samples[j]
                        .iter()
                        .zip(&other.samples[j])
                        .zip(&noise)
                        .map(|((&m0, &m1), &n)| (m0 - m1) * (2.0 * n + m0 - m1))
                        .sum::<f64>()
                        * -c
                };
                for (a, s) in score.iter_mut().enumerate() {
                    *s += (delta(&m[1 + 2 * a]) - delta(&m[2 + 2 * a])) / (2.0 * step);
                }
            }
        }
        score
    });
    let n = draws as f64;
    let mean: [f64; 3] = std::array::from_fn(|a| scores.iter().map(|s| s[a]).sum::<f64>() / n);
    Ok(DMatrix::from_fn(3, 3, |a, b| {
        scores.iter().map(|s| (s[a] - mean[a]) * (s[b] - mean[b])).sum::<f64>() / (n - 1.0)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_variable_round_trip() {
        for v in [
            SweepVariable::Power,
            SweepVariable::CenterFrequency,
            SweepVariable::Duration,
            SweepVariable::Distance,
            SweepVariable::PositionGrid,
        ] {
            assert_eq!(v.label().parse::<SweepVariable>().unwrap(), v);
        }
        assert!("nope".parse::<SweepVariable>().is_err());
    }

    #[test]
    fn summarize_counts_and_delta_method() {
        let outcomes = vec![Ok((1.0, false)), Ok((4.0, true)), Err(EstimatorError::NonIdentifiable)];
        let s = summarize("e", outcomes.into_iter(), 7);
        assert_eq!((s.trials, s.boundary_hits, s.error_trials), (3, 1, 1));
        assert!((s.rmse_m - 2.5f64.sqrt()).abs() < 1e-15);
        // var of {1, 4} = 4.5; se(mse) = sqrt(4.5/2) = 1.5.
        assert!((s.stderr_m - 1.5 / (2.0 * 2.5f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn streams_differ_and_repeat() {
        let a: f64 = trial_rng(1, 0, 0).sample(StandardNormal);
        let b: f64 = trial_rng(1, 0, 1).sample(StandardNormal);
        let c: f64 = trial_rng(1, 1, 0).sample(StandardNormal);
        let a2: f64 = trial_rng(1, 0, 0).sample(StandardNormal);
        assert_eq!(a, a2);
        assert!(a != b && a != c && b != c);
    }

    #[test]
    fn sweep_rejects_empty_values() {
        let spec = SweepSpec {
            variable: SweepVariable::Power,
            values: vec![],
            trials: 1,
            seed: 0,
        };
        assert!(crlb_sweep_distance(&spec, &DistanceScene::reference(), Exec::Sequential).is_err());
    }

    #[test]
    fn delay_range_spans_room() {
        let s = PositionScene::reference();
        let (a, b) = s.delay_range(&s.leds[0]);
        assert_eq!(a, 0.0);
        let far = (Vec3::new(8.0, 8.0, 0.0) - s.leds[0].location).norm() / SPEED_OF_LIGHT;
        assert!((b - far).abs() < 1e-20);
    }
}
