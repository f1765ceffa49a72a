//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::DMatrix;
use rand::Rng;
use vlp_core::geometry::{orientation_from_angles, Link};
use vlp_core::{CrossEnergies, LedTransmitter, Mat3, Vec3, VlcReceiver, Waveform, SPEED_OF_LIGHT};

/// Derivative of one noise-free PD output with respect to one parameter,
/// written as `Σ_i α_i s_i(t − τ) + β_i s_i'(t − τ)`.
#[derive(Clone, Copy, Default)]
pub struct Deriv {
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
}

/// `∫ ∂_a μ ∂_b μ dt` from the cross energies, with `E'[i][l] = ∫ s_i s_l'`.
pub fn inner(a: &Deriv, b: &Deriv, ce: &CrossEnergies) -> f64 {
    let mut acc = 0.0;
    for i in 0..3 {
        for l in 0..3 {
            acc += a.alpha[i] * b.alpha[l] * ce.e[i][l]
                + a.alpha[i] * b.beta[l] * ce.e_prime[i][l]
                + a.beta[i] * b.alpha[l] * ce.e_prime[l][i]
                + a.beta[i] * b.beta[l] * ce.e_dprime[i][l];
        }
    }
    acc
}

/// One independent observation channel (an LED seen by one PD): the
/// derivatives for every parameter, the cross energies and the noise level.
pub struct Channel {
    pub derivs: Vec<Deriv>,
    pub energies: CrossEnergies,
    pub sigma2: f64,
}

/// Dense Fisher information as a Gram matrix summed over channels.
pub fn gram_fim(channels: &[Channel], dim: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(dim, dim);
    for ch in channels {
        for a in 0..dim {
            for b in 0..dim {
                j[(a, b)] += inner(&ch.derivs[a], &ch.derivs[b], &ch.energies) / ch.sigma2;
            }
        }
    }
    j
}

/// Trace of the leading `p×p` block of `J⁻¹`, by symmetric equilibration and
/// a full LU inverse.
pub fn dense_leading_trace(j: &DMatrix<f64>, p: usize) -> f64 {
    let n = j.nrows();
    let d: Vec<f64> = (0..n).map(|k| 1.0 / j[(k, k)].sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |r, c| j[(r, c)] * d[r] * d[c]);
    let inv = scaled
        .lu()
        .try_inverse()
        .expect("dense information matrix is invertible");
    (0..p).map(|k| inv[(k, k)] * d[k] * d[k]).sum()
}

/// Dense information for distance with unknown gains: `(x, h_{j,i})`.
pub fn distance_s3_dense(x: f64, h: &Mat3, sigma2: &[f64; 3], ce: &CrossEnergies) -> DMatrix<f64> {
    let _ = x;
    let channels: Vec<Channel> = (0..3)
        .map(|j| {
            let mut derivs = vec![Deriv::default(); 10];
            for i in 0..3 {
                derivs[0].beta[i] = -h[j][i] / SPEED_OF_LIGHT;
                derivs[1 + 3 * j + i].alpha[i] = 1.0;
            }
            Channel {
                derivs,
                energies: *ce,
                sigma2: sigma2[j],
            }
        })
        .collect();
    gram_fim(&channels, 10)
}

/// Dense information for distance with known gains `γ x^{−m−3}`, optionally
/// with the delay as a second free parameter.
pub fn distance_known_dense(
    x: f64,
    m: f64,
    gammas: &Mat3,
    sigma2: &[f64; 3],
    ce: &CrossEnergies,
    free_delay: bool,
) -> DMatrix<f64> {
    let dim = if free_delay { 2 } else { 1 };
    let channels: Vec<Channel> = (0..3)
        .map(|j| {
            let mut derivs = vec![Deriv::default(); dim];
            for i in 0..3 {
                let h = gammas[j][i] * x.powf(-m - 3.0);
                let dh = -(m + 3.0) * gammas[j][i] * x.powf(-m - 4.0);
                derivs[0].alpha[i] = dh;
                if free_delay {
                    derivs[1].beta[i] = -h;
                } else {
                    derivs[0].beta[i] = -h / SPEED_OF_LIGHT;
                }
            }
            Channel {
                derivs,
                energies: *ce,
                sigma2: sigma2[j],
            }
        })
        .collect();
    gram_fim(&channels, dim)
}

/// Per-LED link terms computed through the public geometry API.
pub struct LinkData {
    pub gains: Mat3,
    pub gain_grads: [[Vec3; 3]; 3],
    pub delay_grad: Vec3,
}

pub fn link_data(led: &LedTransmitter, rx: &VlcReceiver) -> LinkData {
    let link = Link::new(led, &rx.location, &rx.orientation);
    let (gains, _) = link.gains(rx).unwrap();
    let d = rx.location - led.location;
    LinkData {
        gains,
        gain_grads: link.gain_gradients(rx).unwrap(),
        delay_grad: d / (d.norm() * SPEED_OF_LIGHT),
    }
}

#[derive(Clone, Copy, PartialEq)]
pub enum PositionCase {
    KnownSync,
    UnknownDelays,
    UnknownGains,
}

/// Dense position information for one of the three observation models.
/// Parameters are `(x, y, z)` followed by per-LED delays or per-LED gains
/// `h^k_{j,i}` in `(k, j, i)` order.
pub fn position_dense(
    leds: &[LedTransmitter],
    rx: &VlcReceiver,
    energies: &[CrossEnergies],
    case: PositionCase,
) -> DMatrix<f64> {
    let n = leds.len();
    let dim = match case {
        PositionCase::KnownSync => 3,
        PositionCase::UnknownDelays => 3 + n,
        PositionCase::UnknownGains => 3 + 9 * n,
    };
    let mut channels = Vec::new();
    for (k, led) in leds.iter().enumerate() {
        let ld = link_data(led, rx);
        for j in 0..3 {
            let mut derivs = vec![Deriv::default(); dim];
            for a in 0..3 {
                for i in 0..3 {
                    let g = ld.gain_grads[j][i][a];
                    let t = -ld.gains[j][i] * ld.delay_grad[a];
                    match case {
                        PositionCase::KnownSync => {
                            derivs[a].alpha[i] = g;
                            derivs[a].beta[i] = t;
                        }
                        PositionCase::UnknownDelays => derivs[a].alpha[i] = g,
                        PositionCase::UnknownGains => derivs[a].beta[i] = t,
                    }
                }
            }
            match case {
                PositionCase::KnownSync => {}
                PositionCase::UnknownDelays => {
                    for i in 0..3 {
                        derivs[3 + k].beta[i] = -ld.gains[j][i];
                    }
                }
                PositionCase::UnknownGains => {
                    for i in 0..3 {
                        derivs[3 + 9 * k + 3 * j + i].alpha[i] = 1.0;
                    }
                }
            }
            channels.push(Channel {
                derivs,
                energies: energies[k],
                sigma2: rx.noise_psd[j],
            });
        }
    }
    gram_fim(&channels, dim)
}

/// Central finite-difference gradient of `f` at `p`.
pub fn fd_gradient(f: impl Fn(&Vec3) -> f64, p: &Vec3, h: f64) -> Vec3 {
    Vec3::from_fn(|a, _| {
        let mut plus = *p;
        let mut minus = *p;
        plus[a] += h;
        minus[a] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    })
}

/// A random LED on the upper part of the room pointing at a random receiver
/// in the lower part, both tilted away from the connecting line by up to
/// 40°, so that the link has line of sight.
pub struct RandomLink {
    pub led_location: Vec3,
    pub led_orientation: Vec3,
    pub rx_location: Vec3,
    pub rx_orientation: Vec3,
    pub lambertian_order: f64,
}

fn tilted(axis: Vec3, max_deg: f64, rng: &mut impl Rng) -> Vec3 {
    loop {
        let theta: f64 = rng.random_range(0.0..max_deg);
        let phi: f64 = rng.random_range(-180.0..180.0);
        let local = orientation_from_angles(theta, phi);
        // Rotate `local` (about +z) onto `axis`.
        let z = Vec3::new(0.0, 0.0, 1.0);
        let v = z.cross(&axis);
        let c = z.dot(&axis);
        let out = if v.norm() < 1e-12 {
            if c > 0.0 {
                local
            } else {
                -local
            }
        } else {
            let rot = nalgebra::Rotation3::rotation_between(&z, &axis).unwrap();
            rot * local
        };
        if out.dot(&axis) > 0.3 {
            return out.normalize();
        }
    }
}

pub fn random_link(rng: &mut impl Rng) -> RandomLink {
    loop {
        let led = Vec3::new(
            rng.random_range(0.0..8.0),
            rng.random_range(0.0..8.0),
            rng.random_range(3.5..5.0),
        );
        let rx = Vec3::new(
            rng.random_range(0.0..8.0),
            rng.random_range(0.0..8.0),
            rng.random_range(0.0..2.5),
        );
        let d = rx - led;
        if d.norm() < 1.0 {
            continue;
        }
        let u = d.normalize();
        return RandomLink {
            led_location: led,
            led_orientation: tilted(u, 40.0, rng),
            rx_location: rx,
            rx_orientation: tilted(-u, 40.0, rng),
            lambertian_order: rng.random_range(1.0..3.0),
        };
    }
}

/// Direct discrete log-likelihood `−Σ_j Σ_n dt (y_j[n] − μ_j[n])² / (2σ_j²)`
/// of a frame given its mean samples, both on the same window.
pub fn discrete_log_likelihood(y: &[Vec<f64>; 3], mu: &[Vec<f64>; 3], dt: f64, sigma2: &[f64; 3]) -> f64 {
    (0..3)
        .map(|j| -dt * y[j].iter().zip(&mu[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (2.0 * sigma2[j]))
        .sum()
}

/// Samples of `Σ_i h_{j,i} s_i(t_n − τ)` for `t_n = (first + n)·dt`.
pub fn mean_samples(waveforms: &[Waveform; 3], h: &Mat3, tau: f64, first: i64, len: usize, dt: f64) -> [Vec<f64>; 3] {
    std::array::from_fn(|j| {
        (0..len)
            .map(|n| {
                let t = (first + n as i64) as f64 * dt - tau;
                (0..3).map(|i| h[j][i] * waveforms[i].eval(t)).sum()
            })
            .collect()
    })
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
