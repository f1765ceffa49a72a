//! Fisher information matrices and Cramér-Rao bounds for distance and
//! three-dimensional position.
//!
//! Each bound is computed from an explicitly assembled block information
//! matrix, reducing nuisance parameters with a Schur complement. The full
//! matrices are also exposed so that callers can invert them directly.

mod matrix;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{grad_toa, Color, GeometryError, LedTransmitter, Link, Mat3, VlcReceiver, SPEED_OF_LIGHT};
use crate::waveform::CrossEnergies;

use matrix::spd_inverse;
pub use matrix::{
    equilibrated_condition, leading_inverse_trace, trace_inverse, CrlbResult, FisherMatrix, SINGULAR_CONDITION,
    SYMMETRY_TOL,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("information matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("singular energy block for {block}")]
    SingularBlock { block: String },
    #[error("invalid {field}: {reason}")]
    InvalidInput { field: &'static str, reason: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Synchronisation / channel-knowledge scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Synchronous, known channel attenuation formula.
    S1,
    /// Asynchronous, known channel attenuation formula.
    S2,
    /// Synchronous, unknown channel attenuation.
    S3,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::S1, Scenario::S2, Scenario::S3];

    pub fn label(self) -> &'static str {
        match self {
            Scenario::S1 => "s1",
            Scenario::S2 => "s2",
            Scenario::S3 => "s3",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "1" => Ok(Scenario::S1),
            "s2" | "2" => Ok(Scenario::S2),
            "s3" | "3" => Ok(Scenario::S3),
            other => Err(format!("unknown scenario {other:?} (expected s1, s2 or s3)")),
        }
    }
}

/// Noise-weighted energy sums of a single link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kappas {
    pub kappa: f64,
    pub kappa_prime: f64,
    pub kappa_dprime: f64,
}

/// `Σ_j σ_j⁻² Σ_{i,l} γ_{j,i} γ_{j,l} E•_{i,l}` for each of the three energies.
pub fn kappas(gammas: &Mat3, sigma2: &[f64; 3], ce: &CrossEnergies) -> Kappas {
    let mut k = Kappas {
        kappa: 0.0,
        kappa_prime: 0.0,
        kappa_dprime: 0.0,
    };
    for j in 0..3 {
        let w = 1.0 / sigma2[j];
        for i in 0..3 {
            for l in 0..3 {
                let gg = w * gammas[j][i] * gammas[j][l];
                k.kappa += gg * ce.e[i][l];
                k.kappa_prime += gg * ce.e_prime[i][l];
                k.kappa_dprime += gg * ce.e_dprime[i][l];
            }
        }
    }
    k
}

fn check_distance(x: f64) -> Result<(), BoundsError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(BoundsError::InvalidInput {
            field: "distance",
            reason: format!("{x} must be positive"),
        })
    }
}

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Distance information with known gains and synchronised clocks (1×1).
pub fn fim_distance_s1(x: f64, m: f64, k: &Kappas) -> Result<FisherMatrix, BoundsError> {
    check_distance(x)?;
    let c = SPEED_OF_LIGHT;
    let info = (m + 3.0).powi(2) * x.powf(-2.0 * m - 8.0) * k.kappa
        + x.powf(-2.0 * m - 6.0) / (c * c) * k.kappa_dprime
        + 2.0 * (m + 3.0) / c * x.powf(-2.0 * m - 7.0) * k.kappa_prime;
    Ok(FisherMatrix::new(labels(&["x"]), DMatrix::from_element(1, 1, info)))
}

pub fn crlb_distance_s1(x: f64, m: f64, k: &Kappas) -> Result<CrlbResult, BoundsError> {
    let info = fim_distance_s1(x, m, k)?.get(0, 0);
    Ok(CrlbResult::from_variance(1.0 / info, 1.0))
}

/// Joint information on `(x, τ)` with an unknown clock offset.
pub fn fim_distance_s2(x: f64, m: f64, k: &Kappas) -> Result<FisherMatrix, BoundsError> {
    check_distance(x)?;
    let a = (m + 3.0).powi(2) * x.powf(-2.0 * m - 8.0) * k.kappa;
    let b = (m + 3.0) * x.powf(-2.0 * m - 7.0) * k.kappa_prime;
    let d = x.powf(-2.0 * m - 6.0) * k.kappa_dprime;
    Ok(FisherMatrix::new(
        labels(&["x", "tau"]),
        DMatrix::from_row_slice(2, 2, &[a, b, b, d]),
    ))
}

pub fn crlb_distance_s2(x: f64, m: f64, k: &Kappas) -> Result<CrlbResult, BoundsError> {
    let f = fim_distance_s2(x, m, k)?;
    let cond = equilibrated_condition(&f.matrix);
    if !(cond <= SINGULAR_CONDITION) {
        return Ok(CrlbResult::singular(cond));
    }
    let (a, b, d) = (f.get(0, 0), f.get(0, 1), f.get(1, 1));
    Ok(CrlbResult::from_variance(1.0 / (a - b * b / d), cond))
}

/// The distance variance bound with unknown clock offset, written out in closed form.
pub fn crlb_distance_s2_closed_form(x: f64, m: f64, k: &Kappas) -> f64 {
    k.kappa_dprime * x.powf(2.0 * m + 8.0)
        / ((m + 3.0).powi(2) * (k.kappa * k.kappa_dprime - k.kappa_prime * k.kappa_prime))
}

fn gain_label(led: Option<usize>, j: usize, i: usize) -> String {
    let (j, i) = (Color::from_index(j).label(), Color::from_index(i).label());
    match led {
        Some(k) => format!("h{k}[{j},{i}]"),
        None => format!("h[{j},{i}]"),
    }
}

struct DistanceS3Blocks {
    a: f64,
    /// `b[j][k]` couples x with h_{j,k}.
    b: Mat3,
}

fn distance_s3_blocks(h: &Mat3, sigma2: &[f64; 3], ce: &CrossEnergies) -> DistanceS3Blocks {
    let c = SPEED_OF_LIGHT;
    let mut a = 0.0;
    let mut b = [[0.0; 3]; 3];
    for j in 0..3 {
        let w = 1.0 / sigma2[j];
        for i in 0..3 {
            for l in 0..3 {
                a += w * h[j][i] * h[j][l] * ce.e_dprime[i][l] / (c * c);
            }
        }
        for k in 0..3 {
            b[j][k] = -(w / c) * (0..3).map(|i| h[j][i] * ce.e_prime[k][i]).sum::<f64>();
        }
    }
    DistanceS3Blocks { a, b }
}

/// Full 10×10 information on `(x, h_{r,r}, h_{r,g}, …, h_{b,b})` with unknown gains.
pub fn fim_distance_s3(x: f64, h: &Mat3, sigma2: &[f64; 3], ce: &CrossEnergies) -> Result<FisherMatrix, BoundsError> {
    check_distance(x)?;
    let blk = distance_s3_blocks(h, sigma2, ce);
    let mut j = DMatrix::zeros(10, 10);
    j[(0, 0)] = blk.a;
    for pd in 0..3 {
        for k in 0..3 {
            let r = 1 + 3 * pd + k;
            j[(0, r)] = blk.b[pd][k];
            j[(r, 0)] = blk.b[pd][k];
            for m in 0..3 {
                j[(r, 1 + 3 * pd + m)] = ce.e[k][m] / sigma2[pd];
            }
        }
    }
    let mut names = vec!["x".to_string()];
    for pd in 0..3 {
        for k in 0..3 {
            names.push(gain_label(None, pd, k));
        }
    }
    Ok(FisherMatrix::new(names, j))
}

/// Distance bound with unknown gains: `(A − B D⁻¹ Bᵀ)⁻¹` using the three
/// per-PD 3×3 blocks of `D`.
pub fn crlb_distance_s3(x: f64, h: &Mat3, sigma2: &[f64; 3], ce: &CrossEnergies) -> Result<CrlbResult, BoundsError> {
    let full = fim_distance_s3(x, h, sigma2, ce)?;
    let blk = distance_s3_blocks(h, sigma2, ce);
    let mut correction = 0.0;
    for pd in 0..3 {
        let d = DMatrix::from_fn(3, 3, |k, m| ce.e[k][m] / sigma2[pd]);
        let d_inv = spd_inverse(&d).ok_or_else(|| BoundsError::SingularBlock {
            block: format!("PD {}", Color::from_index(pd).label()),
        })?;
        let b = nalgebra::DVector::from_fn(3, |k, _| blk.b[pd][k]);
        correction += b.dot(&(&d_inv * &b));
    }
    let cond = equilibrated_condition(&full.matrix);
    if !(cond <= SINGULAR_CONDITION) {
        return Ok(CrlbResult::singular(cond));
    }
    Ok(CrlbResult::from_variance(1.0 / (blk.a - correction), cond))
}

/// Which colors are transmitted and which photodetectors are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub colors: [bool; 3],
    pub pds: [bool; 3],
}

impl Default for ChannelSet {
    fn default() -> Self {
        ChannelSet {
            colors: [true; 3],
            pds: [true; 3],
        }
    }
}

impl ChannelSet {
    /// One color emitted and only the matching photodetector read.
    pub fn single(color: Color) -> Self {
        let mut mask = [false; 3];
        mask[color.index()] = true;
        ChannelSet {
            colors: mask,
            pds: mask,
        }
    }

    pub fn colors(&self) -> Vec<usize> {
        (0..3).filter(|&i| self.colors[i]).collect()
    }

    pub fn pds(&self) -> Vec<usize> {
        (0..3).filter(|&j| self.pds[j]).collect()
    }
}

/// Gains, gain gradients and delay gradient of one LED-receiver link.
#[derive(Debug, Clone, Copy)]
pub struct LinkTerms {
    pub gains: Mat3,
    pub gain_gradients: [[Vector3<f64>; 3]; 3],
    pub delay_gradient: Vector3<f64>,
    pub line_of_sight: bool,
}

/// LEDs, receiver and per-LED cross energies for a position bound.
#[derive(Debug, Clone, Copy)]
pub struct PositionProblem<'a> {
    pub leds: &'a [LedTransmitter],
    pub receiver: &'a VlcReceiver,
    pub energies: &'a [CrossEnergies],
    pub channels: ChannelSet,
}

impl<'a> PositionProblem<'a> {
    pub fn new(leds: &'a [LedTransmitter], receiver: &'a VlcReceiver, energies: &'a [CrossEnergies]) -> Self {
        PositionProblem {
            leds,
            receiver,
            energies,
            channels: ChannelSet::default(),
        }
    }

    pub fn with_channels(self, channels: ChannelSet) -> Self {
        PositionProblem { channels, ..self }
    }

    pub fn links(&self) -> Result<Vec<LinkTerms>, BoundsError> {
        if self.leds.is_empty() {
            return Err(BoundsError::InvalidInput {
                field: "leds",
                reason: "at least one LED is required".into(),
            });
        }
        if self.energies.len() != self.leds.len() {
            return Err(BoundsError::InvalidInput {
                field: "energies",
                reason: format!("{} energy sets for {} LEDs", self.energies.len(), self.leds.len()),
            });
        }
        self.receiver.validate()?;
        let rx = self.receiver;
        self.leds
            .iter()
            .map(|led| {
                led.validate()?;
                let link = Link::new(led, &rx.location, &rx.orientation);
                let (gains, los) = link.gains(rx)?;
                Ok(LinkTerms {
                    gains,
                    gain_gradients: link.gain_gradients(rx)?,
                    delay_gradient: grad_toa(&rx.location, &led.location)?,
                    line_of_sight: los,
                })
            })
            .collect()
    }
}

fn position_labels() -> Vec<String> {
    labels(&["x", "y", "z"])
}

fn to_dmatrix(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |r, c| m[(r, c)])
}

/// Position information with known gains and synchronised clocks.
pub fn fim_position_s1(p: &PositionProblem) -> Result<FisherMatrix, BoundsError> {
    let links = p.links()?;
    let (colors, pds) = (p.channels.colors(), p.channels.pds());
    let sigma2 = &p.receiver.noise_psd;
    let mut j_mat = Matrix3::zeros();
    for (lk, ce) in links.iter().zip(p.energies) {
        let dt = lk.delay_gradient;
        for &j in &pds {
            let w = 1.0 / sigma2[j];
            let h = &lk.gains[j];
            let dh = &lk.gain_gradients[j];
            for &i in &colors {
                for &l in &colors {
                    j_mat += w
                        * (dh[i] * dh[l].transpose() * ce.e[i][l]
                            - dh[i] * dt.transpose() * (h[l] * ce.e_prime[i][l])
                            - dt * dh[l].transpose() * (h[i] * ce.e_prime[l][i])
                            + dt * dt.transpose() * (h[l] * h[i] * ce.e_dprime[i][l]));
                }
            }
        }
    }
    Ok(FisherMatrix::new(position_labels(), to_dmatrix(&j_mat)))
}

pub fn crlb_position_s1(p: &PositionProblem) -> Result<CrlbResult, BoundsError> {
    trace_inverse(&fim_position_s1(p)?)
}

/// Blocks of the position information with one unknown delay per LED.
#[derive(Debug, Clone)]
pub struct PositionS2Blocks {
    /// 3×3 location block.
    pub j_a: Matrix3<f64>,
    /// 3×N location-delay coupling, one column per LED.
    pub j_b: DMatrix<f64>,
    /// Diagonal delay block.
    pub j_d: Vec<f64>,
}

pub fn position_s2_blocks(p: &PositionProblem) -> Result<PositionS2Blocks, BoundsError> {
    let links = p.links()?;
    let (colors, pds) = (p.channels.colors(), p.channels.pds());
    let sigma2 = &p.receiver.noise_psd;
    let n = links.len();
    let mut j_a = Matrix3::zeros();
    let mut j_b = DMatrix::zeros(3, n);
    let mut j_d = vec![0.0; n];
    for (k, (lk, ce)) in links.iter().zip(p.energies).enumerate() {
        for &j in &pds {
            let w = 1.0 / sigma2[j];
            let h = &lk.gains[j];
            let dh = &lk.gain_gradients[j];
            for &i in &colors {
                for &l in &colors {
                    j_a += w * ce.e[i][l] * dh[i] * dh[l].transpose();
                    let col = -w * h[l] * ce.e_prime[i][l] * dh[i];
                    for r in 0..3 {
                        j_b[(r, k)] += col[r];
                    }
                    j_d[k] += w * h[i] * h[l] * ce.e_dprime[i][l];
                }
            }
        }
    }
    Ok(PositionS2Blocks { j_a, j_b, j_d })
}

/// Full information on `(x, y, z, τ^1, …)`. LEDs whose delay carries no
/// information (no light reaches the receiver) are left out.
pub fn fim_position_s2(p: &PositionProblem) -> Result<FisherMatrix, BoundsError> {
    let blk = position_s2_blocks(p)?;
    let kept: Vec<usize> = (0..blk.j_d.len()).filter(|&k| blk.j_d[k] > 0.0).collect();
    let dim = 3 + kept.len();
    let mut j = DMatrix::zeros(dim, dim);
    j.view_mut((0, 0), (3, 3)).copy_from(&to_dmatrix(&blk.j_a));
    for (q, &k) in kept.iter().enumerate() {
        for r in 0..3 {
            j[(r, 3 + q)] = blk.j_b[(r, k)];
            j[(3 + q, r)] = blk.j_b[(r, k)];
        }
        j[(3 + q, 3 + q)] = blk.j_d[k];
    }
    let mut names = position_labels();
    names.extend(kept.iter().map(|k| format!("tau{}", k + 1)));
    Ok(FisherMatrix::new(names, j))
}

fn reduced_result(effective: Matrix3<f64>, full: &FisherMatrix) -> Result<CrlbResult, BoundsError> {
    let cond = equilibrated_condition(&full.matrix);
    if !(cond <= SINGULAR_CONDITION) {
        return Ok(CrlbResult::singular(cond));
    }
    let eff = FisherMatrix::new(
        position_labels(),
        to_dmatrix(&(0.5 * (effective + effective.transpose()))),
    );
    let r = trace_inverse(&eff)?;
    if r.singular_flag {
        return Ok(CrlbResult::singular(cond));
    }
    Ok(CrlbResult::from_variance(r.variance_bound, cond))
}

/// Position bound with unknown clock offsets: trace of `(J_A − J_B J_D⁻¹ J_Bᵀ)⁻¹`.
pub fn crlb_position_s2(p: &PositionProblem) -> Result<CrlbResult, BoundsError> {
    let blk = position_s2_blocks(p)?;
    let mut eff = blk.j_a;
    for k in 0..blk.j_d.len() {
        if blk.j_d[k] > 0.0 {
            let col = Vector3::new(blk.j_b[(0, k)], blk.j_b[(1, k)], blk.j_b[(2, k)]);
            eff -= col * col.transpose() / blk.j_d[k];
        }
    }
    reduced_result(eff, &fim_position_s2(p)?)
}

/// The same bound assembled entry by entry from per-LED ratio terms.
pub fn fim_position_s2_elementwise(p: &PositionProblem) -> Result<FisherMatrix, BoundsError> {
    let links = p.links()?;
    let (colors, pds) = (p.channels.colors(), p.channels.pds());
    let sigma2 = &p.receiver.noise_psd;
    let mut out = DMatrix::zeros(3, 3);
    for n1 in 0..3 {
        for n2 in 0..3 {
            let mut total = 0.0;
            for (lk, ce) in links.iter().zip(p.energies) {
                let (mut rss, mut cross1, mut cross2, mut timing) = (0.0, 0.0, 0.0, 0.0);
                for &j in &pds {
                    for &i in &colors {
                        for &l in &colors {
                            let dh_i = &lk.gain_gradients[j][i];
                            let dh_l = &lk.gain_gradients[j][l];
                            rss += dh_i[n1] * dh_l[n2] * ce.e[i][l] / sigma2[j];
                            cross1 += dh_i[n1] * lk.gains[j][l] * ce.e_prime[i][l] / sigma2[j];
                            cross2 += dh_i[n2] * lk.gains[j][l] * ce.e_prime[i][l] / sigma2[j];
                            timing += lk.gains[j][i] * lk.gains[j][l] * ce.e_dprime[i][l] / sigma2[j];
                        }
                    }
                }
                total += rss;
                if timing > 0.0 {
                    total -= cross1 * cross2 / timing;
                }
            }
            out[(n1, n2)] = total;
        }
    }
    Ok(FisherMatrix::new(position_labels(), out))
}

/// Blocks of the position information with all gains unknown.
#[derive(Debug, Clone)]
pub struct PositionS3Blocks {
    pub j_a: Matrix3<f64>,
    /// 3 × (number of gain parameters).
    pub j_b: DMatrix<f64>,
    /// Diagonal blocks of J_D, one per (LED, PD), each over the active colors.
    pub j_d: Vec<DMatrix<f64>>,
    /// `(led, pd)` for each block of J_D, in column order of J_B.
    pub block_index: Vec<(usize, usize)>,
}

pub fn position_s3_blocks(p: &PositionProblem) -> Result<PositionS3Blocks, BoundsError> {
    let links = p.links()?;
    let (colors, pds) = (p.channels.colors(), p.channels.pds());
    let sigma2 = &p.receiver.noise_psd;
    let nc = colors.len();
    let nblocks = links.len() * pds.len();
    let mut j_a = Matrix3::zeros();
    let mut j_b = DMatrix::zeros(3, nblocks * nc);
    let mut j_d = Vec::with_capacity(nblocks);
    let mut block_index = Vec::with_capacity(nblocks);
    for (k, (lk, ce)) in links.iter().zip(p.energies).enumerate() {
        let dt = lk.delay_gradient;
        for &j in &pds {
            let w = 1.0 / sigma2[j];
            let h = &lk.gains[j];
            let mut timing = 0.0;
            for &i in &colors {
                for &l in &colors {
                    timing += h[l] * h[i] * ce.e_dprime[i][l];
                }
            }
            j_a += w * timing * dt * dt.transpose();
            let base = block_index.len() * nc;
            for (q, &i) in colors.iter().enumerate() {
                let s: f64 = colors.iter().map(|&l| h[l] * ce.e_prime[i][l]).sum();
                for r in 0..3 {
                    j_b[(r, base + q)] = -w * dt[r] * s;
                }
            }
            j_d.push(DMatrix::from_fn(nc, nc, |a, b| w * ce.e[colors[a]][colors[b]]));
            block_index.push((k, j));
        }
    }
    Ok(PositionS3Blocks {
        j_a,
        j_b,
        j_d,
        block_index,
    })
}

/// Full information on the location and every active gain `h^k_{j,i}`.
pub fn fim_position_s3(p: &PositionProblem) -> Result<FisherMatrix, BoundsError> {
    let blk = position_s3_blocks(p)?;
    let colors = p.channels.colors();
    let nc = colors.len();
    let dim = 3 + blk.j_b.ncols();
    let mut j = DMatrix::zeros(dim, dim);
    j.view_mut((0, 0), (3, 3)).copy_from(&to_dmatrix(&blk.j_a));
    j.view_mut((0, 3), (3, dim - 3)).copy_from(&blk.j_b);
    j.view_mut((3, 0), (dim - 3, 3)).copy_from(&blk.j_b.transpose());
    let mut names = position_labels();
    for (b, d) in blk.j_d.iter().enumerate() {
        let off = 3 + b * nc;
        j.view_mut((off, off), (nc, nc)).copy_from(d);
        let (k, pd) = blk.block_index[b];
        names.extend(colors.iter().map(|&i| gain_label(Some(k + 1), pd, i)));
    }
    Ok(FisherMatrix::new(names, j))
}

/// Position bound with unknown gains, reducing each (LED, PD) block of J̃_D separately.
pub fn crlb_position_s3(p: &PositionProblem) -> Result<CrlbResult, BoundsError> {
    let blk = position_s3_blocks(p)?;
    let nc = p.channels.colors().len();
    let mut eff = blk.j_a;
    for (b, d) in blk.j_d.iter().enumerate() {
        let d_inv = spd_inverse(d).ok_or_else(|| {
            let (k, j) = blk.block_index[b];
            BoundsError::SingularBlock {
                block: format!("LED {} PD {}", k + 1, Color::from_index(j).label()),
            }
        })?;
        let jb = blk.j_b.columns(b * nc, nc);
        let corr = jb * &d_inv * jb.transpose();
        eff -= Matrix3::from_fn(|r, c| corr[(r, c)]);
    }
    reduced_result(eff, &fim_position_s3(p)?)
}

/// One color per LED and the matching photodetector only: the per-LED timing
/// information is `(E'' − E'²/E) h² / σ²` along the delay gradient.
pub fn crlb_position_s3_single_color(p: &PositionProblem, color: Color) -> Result<CrlbResult, BoundsError> {
    let links = p.links()?;
    let c = color.index();
    let sigma2 = p.receiver.noise_psd[c];
    let mut j = Matrix3::zeros();
    for (k, (lk, ce)) in links.iter().zip(p.energies).enumerate() {
        let e = ce.e[c][c];
        if !(e > 0.0) {
            return Err(BoundsError::SingularBlock {
                block: format!("LED {} PD {}", k + 1, color.label()),
            });
        }
        let h = lk.gains[c][c];
        let info = (ce.e_dprime[c][c] - ce.e_prime[c][c].powi(2) / e) * h * h / sigma2;
        j += info * lk.delay_gradient * lk.delay_gradient.transpose();
    }
    trace_inverse(&FisherMatrix::new(position_labels(), to_dmatrix(&j)))
}

pub fn crlb_position(p: &PositionProblem, scenario: Scenario) -> Result<CrlbResult, BoundsError> {
    match scenario {
        Scenario::S1 => crlb_position_s1(p),
        Scenario::S2 => crlb_position_s2(p),
        Scenario::S3 => crlb_position_s3(p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_s1_trivial_value() {
        let k = Kappas {
            kappa: 1.0,
            kappa_prime: 0.0,
            kappa_dprime: 0.0,
        };
        let r = crlb_distance_s1(1.0, 1.0, &k).unwrap();
        assert!((r.variance_bound - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn distance_s2_ignores_timing_when_uncoupled() {
        let base = Kappas {
            kappa: 3.0,
            kappa_prime: 0.0,
            kappa_dprime: 5.0,
        };
        let a = crlb_distance_s2(2.0, 1.0, &base).unwrap().variance_bound;
        let b = crlb_distance_s2(
            2.0,
            1.0,
            &Kappas {
                kappa_dprime: 50.0,
                ..base
            },
        )
        .unwrap()
        .variance_bound;
        assert!((a - b).abs() < 1e-12 * a);
        let direct = 1.0 / (16.0 * 2f64.powf(-10.0) * 3.0);
        assert!((a - direct).abs() < 1e-12 * a);
    }

    #[test]
    fn distance_s2_fully_coupled_is_singular() {
        let k = Kappas {
            kappa: 4.0,
            kappa_prime: 2.0,
            kappa_dprime: 1.0,
        };
        assert!(crlb_distance_s2(1.0, 1.0, &k).unwrap().singular_flag);
    }

    #[test]
    fn scenario_parsing() {
        assert_eq!("S2".parse::<Scenario>().unwrap(), Scenario::S2);
        assert!("s4".parse::<Scenario>().is_err());
    }
}
