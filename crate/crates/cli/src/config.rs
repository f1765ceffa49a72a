//! Experiment configuration: a TOML file with `scene`, `waveform`, `sweep`,
//! `grids` and `output` tables. Every field has a default, so an empty file
//! describes the reference room.

// Negated comparisons make NaN fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use vlp_core::geometry::orientation_from_angles;
use vlp_core::scene;
use vlp_core::search::SearchGrid;
use vlp_core::simulator::{
    DistanceEstimator, DistanceScene, LedPlacement, PositionScene, SignalSpec, SweepSpec, SweepVariable, WaveformSource,
};
use vlp_core::{EnergyMethod, FrequencyMap, Mat3, Scenario, Vec3, VlcReceiver, Waveform};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {reason}")]
    Field { field: String, reason: String },
}

fn field_err(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scene: SceneConfig,
    pub waveform: WaveformConfig,
    pub sweep: SweepConfig,
    pub grids: GridsConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    /// Lambertian order m of every LED unless overridden per LED.
    pub lambertian_order: f64,
    /// Height of the LED above the receiver plane in the distance problem, m.
    pub led_height: f64,
    /// True LED-receiver distance in the distance problem, m.
    pub distance: f64,
    pub leds: Vec<LedConfig>,
    pub receiver: ReceiverConfig,
    /// Receiver locations addressed by the `position-grid` sweep (by index).
    pub positions: Option<Vec<Vec<f64>>>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            lambertian_order: scene::LAMBERTIAN_ORDER,
            led_height: scene::LED_HEIGHT,
            distance: 5.0,
            leds: scene::led_layout()
                .iter()
                .map(|(loc, (theta, phi))| LedConfig {
                    location: vec![loc.x, loc.y, loc.z],
                    angles_deg: Some(vec![*theta, *phi]),
                    orientation: None,
                    lambertian_order: None,
                    clock_offset: 0.0,
                })
                .collect(),
            receiver: ReceiverConfig::default(),
            positions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedConfig {
    pub location: Vec<f64>,
    /// Polar and azimuth pointing angles `[θ, φ]` in degrees.
    pub angles_deg: Option<Vec<f64>>,
    /// Unit pointing vector; use either this or `angles_deg`.
    pub orientation: Option<Vec<f64>>,
    pub lambertian_order: Option<f64>,
    /// Clock offset Δ of this transmitter relative to the receiver, s.
    #[serde(default)]
    pub clock_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReceiverConfig {
    pub location: Vec<f64>,
    pub orientation: Vec<f64>,
    /// PD areas, m².
    pub pd_areas: Vec<f64>,
    /// Rows by PD, columns by color.
    pub responsivity: Vec<Vec<f64>>,
    /// Noise spectral level per PD, W/Hz.
    pub noise_psd: Vec<f64>,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        let rx = scene::receiver();
        ReceiverConfig {
            location: rx.location.iter().copied().collect(),
            orientation: rx.orientation.iter().copied().collect(),
            pd_areas: rx.pd_areas.to_vec(),
            responsivity: rx.responsivity.iter().map(|r| r.to_vec()).collect(),
            noise_psd: rx.noise_psd.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveformConfig {
    /// P_o, W.
    pub power: f64,
    /// T_s, s.
    pub duration: f64,
    /// f_c, Hz.
    pub center_hz: f64,
    /// Carrier of color i of LED k is `k · color_factors[i] · f_c` (or
    /// without the `k` factor when `scale_by_led_index` is false).
    pub color_factors: Vec<f64>,
    pub scale_by_led_index: bool,
    /// Optional `time,value` tables for the red, green and blue waveforms,
    /// used by every LED instead of raised cosines. Relative paths are
    /// resolved against the config file.
    pub tables: Option<Vec<PathBuf>>,
    pub energy_method: EnergyMethod,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        let f = FrequencyMap::default();
        WaveformConfig {
            power: 0.1,
            duration: 0.01,
            center_hz: 1e7,
            color_factors: f.color_factors.to_vec(),
            scale_by_led_index: f.scale_by_led_index,
            tables: None,
            energy_method: EnergyMethod::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    /// Trials per sweep value; 200 for distance and 100 for position when unset.
    pub trials: Option<usize>,
    pub seed: u64,
    /// Estimators to run; all when unset. Distance: `ml-s1`, `ml-s2`,
    /// `ml-s3`, `ml-s1-modified`. Position: `ml-s1`, `ml-s2`, `ml-s3`.
    pub estimators: Option<Vec<String>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            variable: SweepVariable::Power,
            values: vec![0.01, 0.1, 1.0],
            trials: None,
            seed: 1,
            estimators: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridsConfig {
    /// Sampling step, s.
    pub dt: f64,
    pub distance: IntervalConfig,
    pub position: BoxConfig,
    /// Coarse step of delay searches, in samples.
    pub delay_step_samples: usize,
    /// Extra delay range searched on both sides by asynchronous position
    /// estimation, s.
    pub delay_margin: f64,
}

impl Default for GridsConfig {
    fn default() -> Self {
        GridsConfig {
            dt: 0.5e-9,
            distance: IntervalConfig::default(),
            position: BoxConfig::default(),
            delay_step_samples: 4,
            delay_margin: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntervalConfig {
    pub lower: f64,
    pub upper: f64,
    pub step: f64,
    pub levels: usize,
    pub shrink: f64,
}

impl Default for IntervalConfig {
    fn default() -> Self {
        IntervalConfig {
            lower: scene::LED_HEIGHT,
            upper: 10.0,
            step: 0.05,
            levels: 3,
            shrink: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub step: f64,
    pub levels: usize,
    pub shrink: f64,
}

impl Default for BoxConfig {
    fn default() -> Self {
        BoxConfig {
            lower: vec![0.0; 3],
            upper: scene::ROOM.to_vec(),
            step: 0.25,
            levels: 3,
            shrink: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub path: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            path: PathBuf::from("results.csv"),
        }
    }
}

fn vec3(field: &str, v: &[f64]) -> Result<Vec3, ConfigError> {
    if v.len() != 3 {
        return Err(field_err(field, format!("expected 3 values, found {}", v.len())));
    }
    if let Some(k) = v.iter().position(|x| !x.is_finite()) {
        return Err(field_err(format!("{field}[{k}]"), "must be finite"));
    }
    Ok(Vec3::new(v[0], v[1], v[2]))
}

fn unit3(field: &str, v: &[f64]) -> Result<Vec3, ConfigError> {
    let u = vec3(field, v)?;
    if (u.norm() - 1.0).abs() > 1e-9 {
        return Err(field_err(field, format!("must be a unit vector (norm {})", u.norm())));
    }
    Ok(u)
}

fn positive3(field: &str, v: &[f64]) -> Result<[f64; 3], ConfigError> {
    if v.len() != 3 {
        return Err(field_err(field, format!("expected 3 values, found {}", v.len())));
    }
    for (k, x) in v.iter().enumerate() {
        if !(*x > 0.0 && x.is_finite()) {
            return Err(field_err(format!("{field}[{k}]"), format!("{x} must be positive")));
        }
    }
    Ok([v[0], v[1], v[2]])
}

fn positive(field: &str, x: f64) -> Result<f64, ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(field_err(field, format!("{x} must be positive")))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads and parses a config file; relative table paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        if let (Some(tables), Some(dir)) = (cfg.waveform.tables.as_mut(), path.parent()) {
            for t in tables.iter_mut() {
                if t.is_relative() {
                    *t = dir.join(&*t);
                }
            }
        }
        Ok(cfg)
    }

    /// Checks every invariant that does not depend on the command.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.receiver()?;
        self.led_placements()?;
        self.signal()?;
        let s = &self.scene;
        if !(s.lambertian_order >= 1.0) {
            return Err(field_err(
                "scene.lambertian_order",
                format!("{} must be at least 1", s.lambertian_order),
            ));
        }
        positive("scene.led_height", s.led_height)?;
        positive("scene.distance", s.distance)?;
        self.positions()?;
        let sw = &self.sweep;
        if sw.values.is_empty() {
            return Err(field_err("sweep.values", "must not be empty"));
        }
        if let Some(k) = sw.values.iter().position(|v| !v.is_finite()) {
            return Err(field_err(format!("sweep.values[{k}]"), "must be finite"));
        }
        if sw.trials == Some(0) {
            return Err(field_err("sweep.trials", "must be at least 1"));
        }
        positive("grids.dt", self.grids.dt)?;
        if self.grids.delay_step_samples == 0 {
            return Err(field_err("grids.delay_step_samples", "must be at least 1"));
        }
        if !(self.grids.delay_margin >= 0.0) {
            return Err(field_err("grids.delay_margin", "must be non-negative"));
        }
        self.distance_grid()?;
        self.position_grid()?;
        Ok(())
    }

    pub fn receiver(&self) -> Result<VlcReceiver, ConfigError> {
        let r = &self.scene.receiver;
        let p = "scene.receiver";
        if r.responsivity.len() != 3 {
            return Err(field_err(
                format!("{p}.responsivity"),
                format!("expected 3 rows (one per PD), found {}", r.responsivity.len()),
            ));
        }
        let mut resp: Mat3 = [[0.0; 3]; 3];
        for (j, row) in r.responsivity.iter().enumerate() {
            if row.len() != 3 {
                return Err(field_err(
                    format!("{p}.responsivity[{j}]"),
                    format!("expected 3 columns (one per color), found {}", row.len()),
                ));
            }
            for (i, v) in row.iter().enumerate() {
                if !(*v >= 0.0 && v.is_finite()) {
                    return Err(field_err(
                        format!("{p}.responsivity[{j}][{i}]"),
                        format!("{v} must be non-negative"),
                    ));
                }
                resp[j][i] = *v;
            }
            if !(resp[j][j] > 0.0) {
                return Err(field_err(
                    format!("{p}.responsivity[{j}][{j}]"),
                    "diagonal entries must be positive",
                ));
            }
        }
        Ok(VlcReceiver {
            location: vec3(&format!("{p}.location"), &r.location)?,
            orientation: unit3(&format!("{p}.orientation"), &r.orientation)?,
            pd_areas: positive3(&format!("{p}.pd_areas"), &r.pd_areas)?,
            responsivity: resp,
            noise_psd: positive3(&format!("{p}.noise_psd"), &r.noise_psd)?,
        })
    }

    pub fn led_placements(&self) -> Result<Vec<LedPlacement>, ConfigError> {
        if self.scene.leds.is_empty() {
            return Err(field_err("scene.leds", "at least one LED is required"));
        }
        self.scene
            .leds
            .iter()
            .enumerate()
            .map(|(k, l)| {
                let p = format!("scene.leds[{k}]");
                let orientation = match (&l.angles_deg, &l.orientation) {
                    (Some(a), None) => {
                        if a.len() != 2 || a.iter().any(|x| !x.is_finite()) {
                            return Err(field_err(
                                format!("{p}.angles_deg"),
                                "expected two finite angles [theta, phi]",
                            ));
                        }
                        orientation_from_angles(a[0], a[1])
                    }
                    (None, Some(o)) => unit3(&format!("{p}.orientation"), o)?,
                    _ => {
                        return Err(field_err(p, "give exactly one of angles_deg or orientation"));
                    }
                };
                let m = l.lambertian_order.unwrap_or(self.scene.lambertian_order);
                if !(m >= 1.0) {
                    return Err(field_err(
                        format!("{p}.lambertian_order"),
                        format!("{m} must be at least 1"),
                    ));
                }
                if !l.clock_offset.is_finite() {
                    return Err(field_err(format!("{p}.clock_offset"), "must be finite"));
                }
                Ok(LedPlacement {
                    location: vec3(&format!("{p}.location"), &l.location)?,
                    orientation,
                    lambertian_order: m,
                    clock_offset: l.clock_offset,
                })
            })
            .collect()
    }

    pub fn signal(&self) -> Result<SignalSpec, ConfigError> {
        let w = &self.waveform;
        positive("waveform.power", w.power)?;
        positive("waveform.duration", w.duration)?;
        if !(w.center_hz >= 0.0 && w.center_hz.is_finite()) {
            return Err(field_err("waveform.center_hz", "must be non-negative"));
        }
        if w.color_factors.len() != 3 || w.color_factors.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
            return Err(field_err("waveform.color_factors", "expected 3 non-negative values"));
        }
        let source = match &w.tables {
            None => WaveformSource::RaisedCosine {
                frequency_map: FrequencyMap {
                    color_factors: [w.color_factors[0], w.color_factors[1], w.color_factors[2]],
                    scale_by_led_index: w.scale_by_led_index,
                },
            },
            Some(paths) => {
                if paths.len() != 3 {
                    return Err(field_err(
                        "waveform.tables",
                        format!("expected 3 files, found {}", paths.len()),
                    ));
                }
                let mut ws = Vec::with_capacity(3);
                for (i, p) in paths.iter().enumerate() {
                    ws.push(
                        Waveform::from_table_file(p)
                            .map_err(|e| field_err(format!("waveform.tables[{i}]"), format!("{}: {e}", p.display())))?,
                    );
                }
                WaveformSource::Fixed(ws.try_into().expect("three waveforms"))
            }
        };
        Ok(SignalSpec {
            power: w.power,
            duration: w.duration,
            center_hz: w.center_hz,
            source,
            energy_method: w.energy_method,
        })
    }

    fn positions(&self) -> Result<Vec<Vec3>, ConfigError> {
        match &self.scene.positions {
            None => Ok(vec![vec3("scene.receiver.location", &self.scene.receiver.location)?]),
            Some(ps) if ps.is_empty() => Err(field_err("scene.positions", "must not be empty")),
            Some(ps) => ps
                .iter()
                .enumerate()
                .map(|(k, p)| vec3(&format!("scene.positions[{k}]"), p))
                .collect(),
        }
    }

    pub fn distance_grid(&self) -> Result<SearchGrid, ConfigError> {
        let g = &self.grids.distance;
        if !(g.lower > 0.0) {
            return Err(field_err("grids.distance.lower", "must be positive"));
        }
        SearchGrid::interval(g.lower, g.upper, g.step, g.levels, g.shrink).map_err(|e| field_err("grids.distance", e.0))
    }

    pub fn position_grid(&self) -> Result<SearchGrid, ConfigError> {
        let g = &self.grids.position;
        let lo = vec3("grids.position.lower", &g.lower)?;
        let hi = vec3("grids.position.upper", &g.upper)?;
        SearchGrid::new(
            lo.iter().copied().collect(),
            hi.iter().copied().collect(),
            g.step,
            g.levels,
            g.shrink,
        )
        .map_err(|e| field_err("grids.position", e.0))
    }

    pub fn distance_scene(&self) -> Result<DistanceScene, ConfigError> {
        self.validate()?;
        Ok(DistanceScene {
            receiver: self.receiver()?,
            lambertian_order: self.scene.lambertian_order,
            led_height: self.scene.led_height,
            distance: self.scene.distance,
            signal: self.signal()?,
            dt: self.grids.dt,
            distance_grid: self.distance_grid()?,
            delay_step_samples: self.grids.delay_step_samples,
        })
    }

    pub fn position_scene(&self) -> Result<PositionScene, ConfigError> {
        self.validate()?;
        Ok(PositionScene {
            leds: self.led_placements()?,
            receiver: self.receiver()?,
            signal: self.signal()?,
            dt: self.grids.dt,
            grid: self.position_grid()?,
            delay_step_samples: self.grids.delay_step_samples,
            delay_margin: self.grids.delay_margin,
            positions: self.positions()?,
        })
    }

    pub fn sweep_spec(&self, default_trials: usize) -> SweepSpec {
        SweepSpec {
            variable: self.sweep.variable,
            values: self.sweep.values.clone(),
            trials: self.sweep.trials.unwrap_or(default_trials),
            seed: self.sweep.seed,
        }
    }

    pub fn distance_estimators(&self) -> Result<Vec<DistanceEstimator>, ConfigError> {
        match &self.sweep.estimators {
            None => Ok(DistanceEstimator::ALL.to_vec()),
            Some(names) => names
                .iter()
                .enumerate()
                .map(|(k, n)| {
                    DistanceEstimator::ALL
                        .into_iter()
                        .find(|e| e.label() == n)
                        .ok_or_else(|| {
                            field_err(
                                format!("sweep.estimators[{k}]"),
                                format!("unknown distance estimator {n:?}"),
                            )
                        })
                })
                .collect(),
        }
    }

    pub fn position_estimators(&self) -> Result<Vec<Scenario>, ConfigError> {
        match &self.sweep.estimators {
            None => Ok(Scenario::ALL.to_vec()),
            Some(names) => names
                .iter()
                .enumerate()
                .map(|(k, n)| {
                    n.strip_prefix("ml-").unwrap_or(n).parse::<Scenario>().map_err(|_| {
                        field_err(
                            format!("sweep.estimators[{k}]"),
                            format!("unknown position estimator {n:?}"),
                        )
                    })
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_reference_scene() {
        let cfg = ExperimentConfig::parse("").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.receiver().unwrap(), scene::receiver());
        let s = cfg.position_scene().unwrap();
        assert_eq!(s.leds, PositionScene::reference().leds);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = ExperimentConfig::parse("[sweep]\nvalue = [1.0]\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("value") && err.contains("line 2"), "{err}");
    }

    #[test]
    fn named_field_errors() {
        let cfg = ExperimentConfig::parse("[scene.receiver]\nnoise_psd = [1e-22, -1e-22, 1e-22]\n").unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.starts_with("scene.receiver.noise_psd[1]"), "{err}");

        let cfg =
            ExperimentConfig::parse("[scene.receiver]\nresponsivity = [[0.4, 0.0, 0.0], [0.0, 0.3, 0.0]]\n").unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.starts_with("scene.receiver.responsivity"), "{err}");

        let cfg = ExperimentConfig::parse("[sweep]\nvalues = []\n").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().starts_with("sweep.values"));
    }

    #[test]
    fn estimator_names() {
        let cfg = ExperimentConfig::parse("[sweep]\nestimators = [\"ml-s3\", \"s1\"]\n").unwrap();
        assert_eq!(cfg.position_estimators().unwrap(), vec![Scenario::S3, Scenario::S1]);
        assert!(cfg.distance_estimators().is_err());
    }
}
