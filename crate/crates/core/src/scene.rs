//! Reference room, transmitter layout and receiver parameters used as
//! defaults throughout the toolkit.

use crate::geometry::{gamma_matrix, orientation_from_angles, GeometryError, LedTransmitter, Mat3, Vec3, VlcReceiver};
use crate::waveform::{FrequencyMap, WaveformError};

pub const LAMBERTIAN_ORDER: f64 = 1.0;
/// LED height above the receiver plane for the distance problem, m.
pub const LED_HEIGHT: f64 = 2.5;
/// Photodetector area, m².
pub const PD_AREA: f64 = 1e-4;
/// Noise spectral density level per photodetector, W/Hz.
pub const NOISE_PSD: f64 = 1.336e-22;
/// Room extent `[x, y, z]`, m; the room spans `[0, extent]` on each axis.
pub const ROOM: [f64; 3] = [8.0, 8.0, 5.0];

/// `0.4 · crosstalk` with rows indexed by PD and columns by color.
pub fn responsivity() -> Mat3 {
    let base = [[1.0, 0.042, 0.03], [0.194, 0.665, 0.277], [0.009, 0.084, 0.421]];
    base.map(|row| row.map(|v| 0.4 * v))
}

pub fn receiver_location() -> Vec3 {
    Vec3::new(4.0, 4.0, 1.0)
}

pub fn receiver() -> VlcReceiver {
    VlcReceiver {
        location: receiver_location(),
        orientation: Vec3::new(0.0, 0.0, 1.0),
        pd_areas: [PD_AREA; 3],
        responsivity: responsivity(),
        noise_psd: [NOISE_PSD; 3],
    }
}

/// Ceiling positions and `(θ, φ)` pointing angles in degrees.
pub fn led_layout() -> [(Vec3, (f64, f64)); 4] {
    [
        (Vec3::new(2.0, 2.0, 5.0), (150.0, 45.0)),
        (Vec3::new(6.0, 2.0, 5.0), (150.0, 135.0)),
        (Vec3::new(2.0, 6.0, 5.0), (150.0, -45.0)),
        (Vec3::new(6.0, 6.0, 5.0), (150.0, -135.0)),
    ]
}

/// The four reference LEDs carrying raised-cosine waveforms assigned by `fmap`.
pub fn leds(
    power: f64,
    duration: f64,
    center_hz: f64,
    fmap: &FrequencyMap,
) -> Result<Vec<LedTransmitter>, WaveformError> {
    led_layout()
        .iter()
        .enumerate()
        .map(|(k, (loc, (theta, phi)))| {
            Ok(LedTransmitter {
                location: *loc,
                orientation: orientation_from_angles(*theta, *phi),
                lambertian_order: LAMBERTIAN_ORDER,
                clock_offset: 0.0,
                waveforms: fmap.waveforms(k + 1, power, duration, center_hz)?,
            })
        })
        .collect()
}

/// γ matrix of the reference receiver for the axial distance geometry.
pub fn distance_gammas() -> Result<Mat3, GeometryError> {
    gamma_matrix(&receiver(), LAMBERTIAN_ORDER, LED_HEIGHT)
}

/// Whether `p` lies inside the closed room box.
pub fn in_room(p: &Vec3) -> bool {
    (0..3).all(|a| p[a] >= 0.0 && p[a] <= ROOM[a])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_scene_is_valid() {
        receiver().validate().unwrap();
        for led in leds(0.1, 1e-6, 1e7, &FrequencyMap::default()).unwrap() {
            led.validate().unwrap();
            // Every LED tilts toward the room center.
            let to_center = (receiver_location() - led.location).normalize();
            assert!(led.orientation.dot(&to_center) > 0.9);
        }
    }

    #[test]
    fn gamma_red_red() {
        let g = distance_gammas().unwrap();
        assert!((g[0][0] - 7.9577e-5).abs() < 1e-9);
    }
}
