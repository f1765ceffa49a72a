//! Cramér-Rao bounds, maximum-likelihood estimators and Monte Carlo tooling
//! for visible-light positioning with RGB LEDs and three color-filtered
//! photodetectors.

// `!(x <= y)` is used on purpose so that NaN fails validation, and fixed
// 3×3 index loops mirror the summation formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bounds;
pub mod estimators;
pub mod exec;
pub mod geometry;
pub mod quadrature;
pub mod scene;
pub mod search;
pub mod simulator;
pub mod waveform;

pub use bounds::{CrlbResult, FisherMatrix, Scenario};
pub use exec::Exec;
pub use geometry::{Color, LedTransmitter, Mat3, Vec3, VlcReceiver, SPEED_OF_LIGHT};
pub use waveform::{CrossEnergies, EnergyMethod, FrequencyMap, Waveform};
