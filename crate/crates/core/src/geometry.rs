//! Spatial configuration of LED transmitters and the VLC receiver.
//!
//! Holds the time-of-arrival model `τ = ‖l_r − l_t‖/c + Δ`, the line-of-sight
//! Lambertian channel gain and the analytic gradients of both with respect to
//! the receiver location.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::waveform::Waveform;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Tolerance on the Euclidean norm of orientation vectors.
pub const UNIT_NORM_TOL: f64 = 1e-12;

pub type Vec3 = Vector3<f64>;

/// 3×3 matrix indexed `[pd j][color i]`.
pub type Mat3 = [[f64; 3]; 3];

/// The three colors / photodetectors, in `r, g, b` order.
pub const COLORS: [Color; 3] = [Color::Red, Color::Green, Color::Blue];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Color {
    Red,
    Green,
    Blue,
}

impl Color {
    pub fn index(self) -> usize {
        match self {
            Color::Red => 0,
            Color::Green => 1,
            Color::Blue => 2,
        }
    }

    pub fn from_index(i: usize) -> Color {
        COLORS[i]
    }

    pub fn label(self) -> &'static str {
        match self {
            Color::Red => "r",
            Color::Green => "g",
            Color::Blue => "b",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("receiver and transmitter locations coincide")]
    CoincidentPoints,
    #[error("orientation vector has norm {0}, expected 1")]
    NotUnit(f64),
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
}

/// One RGB luminaire.
#[derive(Debug, Clone)]
pub struct LedTransmitter {
    pub location: Vec3,
    pub orientation: Vec3,
    pub lambertian_order: f64,
    /// Clock offset Δ between this transmitter and the receiver, seconds.
    pub clock_offset: f64,
    /// Per-color transmitted waveforms in `r, g, b` order.
    pub waveforms: [Waveform; 3],
}

impl LedTransmitter {
    pub fn validate(&self) -> Result<(), GeometryError> {
        check_unit(&self.orientation)?;
        if !(self.lambertian_order >= 1.0) {
            return Err(GeometryError::InvalidParameter {
                field: "lambertian_order",
                reason: format!("{} < 1", self.lambertian_order),
            });
        }
        Ok(())
    }
}

/// Receiver with three color-filtered photodetectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VlcReceiver {
    pub location: Vec3,
    pub orientation: Vec3,
    /// PD areas A_j, m².
    pub pd_areas: [f64; 3],
    /// Responsivity R̃_{j,i} of PD j to color i.
    pub responsivity: Mat3,
    /// White-noise spectral density σ_j² per PD.
    pub noise_psd: [f64; 3],
}

impl VlcReceiver {
    pub fn validate(&self) -> Result<(), GeometryError> {
        check_unit(&self.orientation)?;
        for j in 0..3 {
            if !(self.pd_areas[j] > 0.0) {
                return Err(GeometryError::InvalidParameter {
                    field: "pd_areas",
                    reason: format!("area of PD {} must be positive", COLORS[j].label()),
                });
            }
            if !(self.noise_psd[j] > 0.0) {
                return Err(GeometryError::InvalidParameter {
                    field: "noise_psd",
                    reason: format!("noise PSD of PD {} must be positive", COLORS[j].label()),
                });
            }
            for i in 0..3 {
                if !(self.responsivity[j][i] >= 0.0) {
                    return Err(GeometryError::InvalidParameter {
                        field: "responsivity",
                        reason: format!("entry ({j},{i}) is negative"),
                    });
                }
            }
            if !(self.responsivity[j][j] > 0.0) {
                return Err(GeometryError::InvalidParameter {
                    field: "responsivity",
                    reason: format!("diagonal entry ({j},{j}) must be positive"),
                });
            }
        }
        Ok(())
    }

    /// Receiver copy moved to `location`.
    pub fn at(&self, location: Vec3) -> VlcReceiver {
        VlcReceiver {
            location,
            ..self.clone()
        }
    }
}

fn check_unit(v: &Vec3) -> Result<(), GeometryError> {
    let n = v.norm();
    if (n - 1.0).abs() > UNIT_NORM_TOL {
        return Err(GeometryError::NotUnit(n));
    }
    Ok(())
}

/// Time of arrival `‖lr − lt‖/c + delta`.
pub fn toa(lr: &Vec3, lt: &Vec3, delta: f64) -> Result<f64, GeometryError> {
    let d = (lr - lt).norm();
    if d == 0.0 {
        return Err(GeometryError::CoincidentPoints);
    }
    Ok(d / SPEED_OF_LIGHT + delta)
}

/// Gradient of the time of arrival with respect to the receiver location, s/m.
pub fn grad_toa(lr: &Vec3, lt: &Vec3) -> Result<Vec3, GeometryError> {
    let d = lr - lt;
    let n = d.norm();
    if n == 0.0 {
        return Err(GeometryError::CoincidentPoints);
    }
    Ok(d / (SPEED_OF_LIGHT * n))
}

/// Channel gain with its line-of-sight status.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGain {
    pub value: f64,
    pub line_of_sight: bool,
}

/// Line-of-sight link between one LED and the receiver.
///
/// The gain is `−(m+1)A R̃/(2π) · (dᵀn_t)^m (dᵀn_r) / ‖d‖^{m+3}` with
/// `d = l_r − l_t`. It is positive only when the receiver lies in the LED's
/// forward half-space (`dᵀn_t > 0`) and the LED lies in the receiver's field
/// (`dᵀn_r < 0`); outside that region the link carries no light and the gain
/// is reported as zero with `line_of_sight = false`.
#[derive(Debug, Clone, Copy)]
pub struct Link<'a> {
    pub receiver_location: &'a Vec3,
    pub receiver_orientation: &'a Vec3,
    pub led_location: &'a Vec3,
    pub led_orientation: &'a Vec3,
    pub lambertian_order: f64,
}

impl<'a> Link<'a> {
    pub fn new(led: &'a LedTransmitter, rx_location: &'a Vec3, rx_orientation: &'a Vec3) -> Self {
        Link {
            receiver_location: rx_location,
            receiver_orientation: rx_orientation,
            led_location: &led.location,
            led_orientation: &led.orientation,
            lambertian_order: led.lambertian_order,
        }
    }

    fn offsets(&self) -> Result<(Vec3, f64, f64, f64), GeometryError> {
        let d = self.receiver_location - self.led_location;
        let dist = d.norm();
        if dist == 0.0 {
            return Err(GeometryError::CoincidentPoints);
        }
        let cos_t = d.dot(self.led_orientation);
        let cos_r = d.dot(self.receiver_orientation);
        Ok((d, dist, cos_t, cos_r))
    }

    /// The area/responsivity-free part of the gain, `h / ((m+1) A R̃ / 2π)`.
    pub fn geometric_factor(&self) -> Result<ChannelGain, GeometryError> {
        let (_, dist, cos_t, cos_r) = self.offsets()?;
        if !(cos_t > 0.0 && cos_r < 0.0) {
            return Ok(ChannelGain {
                value: 0.0,
                line_of_sight: false,
            });
        }
        let m = self.lambertian_order;
        Ok(ChannelGain {
            value: -cos_t.powf(m) * cos_r / dist.powf(m + 3.0),
            line_of_sight: true,
        })
    }

    /// Gradient of [`Link::geometric_factor`] with respect to the receiver location.
    pub fn geometric_factor_gradient(&self) -> Result<(Vec3, bool), GeometryError> {
        let (d, dist, cos_t, cos_r) = self.offsets()?;
        if !(cos_t > 0.0 && cos_r < 0.0) {
            return Ok((Vec3::zeros(), false));
        }
        let m = self.lambertian_order;
        let p3 = dist.powf(m + 3.0);
        let first = cos_t.powf(m - 1.0) / p3 * (m * cos_r * self.led_orientation + cos_t * self.receiver_orientation);
        let second = (m + 3.0) * cos_t.powf(m) * cos_r / (p3 * dist * dist) * d;
        Ok((-(first - second), true))
    }

    pub fn gain(&self, area: f64, responsivity: f64) -> Result<ChannelGain, GeometryError> {
        let g = self.geometric_factor()?;
        Ok(ChannelGain {
            value: gain_prefactor(self.lambertian_order, area, responsivity) * g.value,
            line_of_sight: g.line_of_sight,
        })
    }

    pub fn gain_gradient(&self, area: f64, responsivity: f64) -> Result<(Vec3, bool), GeometryError> {
        let (g, los) = self.geometric_factor_gradient()?;
        Ok((gain_prefactor(self.lambertian_order, area, responsivity) * g, los))
    }

    /// All nine gains `h_{j,i}` of this link for a receiver.
    pub fn gains(&self, rx: &VlcReceiver) -> Result<(Mat3, bool), GeometryError> {
        let g = self.geometric_factor()?;
        let mut h = [[0.0; 3]; 3];
        for (j, row) in h.iter_mut().enumerate() {
            for (i, hji) in row.iter_mut().enumerate() {
                *hji = gain_prefactor(self.lambertian_order, rx.pd_areas[j], rx.responsivity[j][i]) * g.value;
            }
        }
        Ok((h, g.line_of_sight))
    }

    /// Gradients `∂h_{j,i}/∂l_r` of all nine gains.
    pub fn gain_gradients(&self, rx: &VlcReceiver) -> Result<[[Vec3; 3]; 3], GeometryError> {
        let (g, _) = self.geometric_factor_gradient()?;
        let mut out = [[Vec3::zeros(); 3]; 3];
        for (j, row) in out.iter_mut().enumerate() {
            for (i, dh) in row.iter_mut().enumerate() {
                *dh = gain_prefactor(self.lambertian_order, rx.pd_areas[j], rx.responsivity[j][i]) * g;
            }
        }
        Ok(out)
    }
}

fn gain_prefactor(m: f64, area: f64, responsivity: f64) -> f64 {
    (m + 1.0) * area * responsivity / (2.0 * std::f64::consts::PI)
}

/// Lambertian line-of-sight gain of one (PD, color) pair.
pub fn channel_gain(
    lr: &Vec3,
    nr: &Vec3,
    lt: &Vec3,
    nt: &Vec3,
    m: f64,
    area: f64,
    responsivity: f64,
) -> Result<ChannelGain, GeometryError> {
    Link {
        receiver_location: lr,
        receiver_orientation: nr,
        led_location: lt,
        led_orientation: nt,
        lambertian_order: m,
    }
    .gain(area, responsivity)
}

/// Gradient of [`channel_gain`] with respect to `lr`; zero without line of sight.
pub fn grad_channel_gain(
    lr: &Vec3,
    nr: &Vec3,
    lt: &Vec3,
    nt: &Vec3,
    m: f64,
    area: f64,
    responsivity: f64,
) -> Result<(Vec3, bool), GeometryError> {
    Link {
        receiver_location: lr,
        receiver_orientation: nr,
        led_location: lt,
        led_orientation: nt,
        lambertian_order: m,
    }
    .gain_gradient(area, responsivity)
}

/// Coefficient γ such that the axial-geometry gain is `γ x^{−m−3}`.
pub fn gamma_coeff(area: f64, m: f64, height: f64, responsivity: f64) -> Result<f64, GeometryError> {
    if !(area > 0.0) {
        return Err(GeometryError::InvalidParameter {
            field: "area",
            reason: "must be positive".into(),
        });
    }
    if !(height > 0.0) {
        return Err(GeometryError::InvalidParameter {
            field: "height",
            reason: "must be positive".into(),
        });
    }
    if !(m >= 1.0) {
        return Err(GeometryError::InvalidParameter {
            field: "lambertian_order",
            reason: format!("{m} < 1"),
        });
    }
    Ok(area * (m + 1.0) * height.powf(m + 1.0) * responsivity / (2.0 * std::f64::consts::PI))
}

/// γ_{j,i} for every (PD, color) pair of a receiver.
pub fn gamma_matrix(rx: &VlcReceiver, m: f64, height: f64) -> Result<Mat3, GeometryError> {
    let mut g = [[0.0; 3]; 3];
    for j in 0..3 {
        for i in 0..3 {
            g[j][i] = gamma_coeff(rx.pd_areas[j], m, height, rx.responsivity[j][i])?;
        }
    }
    Ok(g)
}

/// Unit vector from polar angle `theta` and azimuth `phi`, both in degrees.
pub fn orientation_from_angles(theta_deg: f64, phi_deg: f64) -> Vec3 {
    let (st, ct) = theta_deg.to_radians().sin_cos();
    let (sp, cp) = phi_deg.to_radians().sin_cos();
    Vec3::new(st * cp, st * sp, ct)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn down() -> Vec3 {
        Vec3::new(0.0, 0.0, -1.0)
    }

    fn up() -> Vec3 {
        Vec3::new(0.0, 0.0, 1.0)
    }

    #[test]
    fn toa_of_three_meters() {
        let t = toa(&Vec3::zeros(), &Vec3::new(0.0, 0.0, 3.0), 0.0).unwrap();
        assert_relative_eq!(t, 3.0 / SPEED_OF_LIGHT, max_relative = 1e-15);
        assert_relative_eq!(t, 1.000692e-8, max_relative = 1e-6);
    }

    #[test]
    fn toa_with_offset() {
        let t = toa(&Vec3::new(4.0, 4.0, 1.0), &Vec3::new(2.0, 2.0, 5.0), 1e-9).unwrap();
        assert_relative_eq!(t, 24f64.sqrt() / 299_792_458.0 + 1e-9, max_relative = 1e-15);
    }

    #[test]
    fn coincident_points_are_errors() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(toa(&p, &p, 0.0), Err(GeometryError::CoincidentPoints));
        assert_eq!(grad_toa(&p, &p), Err(GeometryError::CoincidentPoints));
        assert!(channel_gain(&p, &up(), &p, &down(), 1.0, 1e-4, 0.4).is_err());
    }

    #[test]
    fn axial_gain_matches_gamma_law() {
        let lt = Vec3::new(0.0, 0.0, 2.5);
        let h = channel_gain(&Vec3::zeros(), &up(), &lt, &down(), 1.0, 1e-4, 0.4).unwrap();
        assert!(h.line_of_sight);
        assert_relative_eq!(h.value, 2.0372e-6, max_relative = 1e-4);
        let gamma = gamma_coeff(1e-4, 1.0, 2.5, 0.4).unwrap();
        assert_relative_eq!(gamma, 7.9577e-5, max_relative = 1e-4);
        assert_relative_eq!(h.value, gamma * 2.5f64.powi(-4), max_relative = 1e-12);
    }

    #[test]
    fn equatorial_receiver_has_no_light() {
        let h = channel_gain(
            &Vec3::new(1.0, 0.0, 0.0),
            &Vec3::new(-1.0, 0.0, 0.0),
            &Vec3::zeros(),
            &down(),
            1.0,
            1e-4,
            0.4,
        )
        .unwrap();
        assert_eq!(h.value, 0.0);
        assert!(!h.line_of_sight);
    }

    #[test]
    fn gain_is_linear_in_responsivity() {
        let lr = Vec3::new(1.0, 0.5, 0.0);
        let lt = Vec3::new(0.0, 0.0, 3.0);
        let a = channel_gain(&lr, &up(), &lt, &down(), 1.0, 1e-4, 0.2).unwrap().value;
        let b = channel_gain(&lr, &up(), &lt, &down(), 1.0, 1e-4, 0.4).unwrap().value;
        assert_relative_eq!(b, 2.0 * a, max_relative = 1e-15);
        let (ga, _) = grad_channel_gain(&lr, &up(), &lt, &down(), 1.0, 1e-4, 0.2).unwrap();
        let (gb, _) = grad_channel_gain(&lr, &up(), &lt, &down(), 1.0, 1e-4, 0.4).unwrap();
        assert_relative_eq!(gb, 2.0 * ga, max_relative = 1e-15);
    }

    #[test]
    fn gamma_zero_responsivity() {
        assert_eq!(gamma_coeff(1e-4, 1.0, 2.5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn grad_toa_axis_aligned() {
        let g = grad_toa(&Vec3::new(0.0, 0.0, 1.0), &Vec3::zeros()).unwrap();
        assert_relative_eq!(g, Vec3::new(0.0, 0.0, 1.0 / SPEED_OF_LIGHT), max_relative = 1e-15);
    }

    #[test]
    fn lateral_gradient_matches_radial_derivative() {
        // In the plane at fixed height h̃ the gain is γ x^{−m−3}; a lateral move
        // dr changes the distance by (r/x) dr.
        let m = 2.0;
        let height = 2.5;
        let lt = Vec3::new(0.0, 0.0, height);
        for r in [0.0, 0.7, 3.0] {
            let lr = Vec3::new(r * 0.6, r * 0.8, 0.0);
            let x = (r * r + height * height).sqrt();
            let (g, los) = grad_channel_gain(&lr, &up(), &lt, &down(), m, 1e-4, 0.4).unwrap();
            assert!(los);
            let gamma = gamma_coeff(1e-4, m, height, 0.4).unwrap();
            let radial = -(m + 3.0) * gamma * x.powf(-m - 4.0);
            assert_relative_eq!(g.x, radial * r / x * 0.6, epsilon = 1e-18, max_relative = 1e-12);
            assert_relative_eq!(g.y, radial * r / x * 0.8, epsilon = 1e-18, max_relative = 1e-12);
        }
    }

    #[test]
    fn orientations() {
        assert_relative_eq!(orientation_from_angles(0.0, 77.0), up(), epsilon = 1e-15);
        assert_relative_eq!(
            orientation_from_angles(90.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            epsilon = 1e-15
        );
        let n = orientation_from_angles(150.0, 45.0);
        assert_relative_eq!(n, Vec3::new(0.35355, 0.35355, -0.86603), epsilon = 1e-5);
        assert!((n.norm() - 1.0).abs() < UNIT_NORM_TOL);
    }

    #[test]
    fn receiver_validation_names_fields() {
        let mut rx = VlcReceiver {
            location: Vec3::zeros(),
            orientation: up(),
            pd_areas: [1e-4; 3],
            responsivity: [[0.4, 0.0, 0.0], [0.0, 0.4, 0.0], [0.0, 0.0, 0.4]],
            noise_psd: [1e-22; 3],
        };
        assert!(rx.validate().is_ok());
        rx.noise_psd[1] = -1.0;
        match rx.validate() {
            Err(GeometryError::InvalidParameter { field, .. }) => assert_eq!(field, "noise_psd"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
