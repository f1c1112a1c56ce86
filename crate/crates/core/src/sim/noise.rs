use std::f64::consts::{FRAC_2_SQRT_PI, SQRT_2};

use serde::{Deserialize, Serialize};

use super::SimError;

/// `E|N(0, 1)| = sqrt(2/π)`.
pub const HALF_NORMAL_MEAN: f64 = FRAC_2_SQRT_PI / SQRT_2;

/// Mean norm of an isotropic 3-D Gaussian with unit per-axis sigma: `2·sqrt(2/π)`.
pub const MAXWELL_MEAN: f64 = 2.0 * HALF_NORMAL_MEAN;

/// Noise parameters of the simulated sensors.
///
/// Defaults are calibrated so that the simulated desk-scale setup reproduces
/// the headline accuracy and latency figures of the measured system:
/// optical resolution errors average 0.02 m / 0.03 rad, UWB localization
/// settles after about 25 s, and reference poses of independent sessions
/// disagree by about 0.04 m / 0.11 rad on average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Per-axis sigma of the offset a settled UWB stream carries, metres.
    pub uwb_post_transient_sigma: f64,
    /// Per-sample jitter around that offset once settled, metres.
    pub uwb_jitter_sigma: f64,
    /// Per-axis sigma while the ranging is still unsettled, metres.
    pub uwb_transient_sigma: f64,
    /// Mean length of the unsettled phase, seconds.
    pub uwb_transient_mean_duration: f64,
    pub uwb_transient_jitter: f64,
    /// Per-reading compass noise, radians.
    pub heading_sigma: f64,
    /// Magnetic interference offset, drawn once per trial, radians.
    pub heading_site_bias_sigma: f64,
    pub ble_rssi_sigma: f64,
    /// Per-axis sigma of optical anchor resolution, metres.
    pub optical_pos_sigma: f64,
    /// Sigma of the optical rotation error magnitude, radians.
    pub optical_rot_sigma: f64,
    /// Environment change level at which optical relocalization always fails.
    pub optical_fail_level: f64,
    /// Optical relocalization time in an unchanged scene, seconds.
    pub optical_base_delay: f64,
    pub optical_delay_jitter: f64,
    /// Extra time to fetch and load a room map, seconds.
    pub map_transfer_delay: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            // pairwise mean of independent offsets = sigma · sqrt(2) · MAXWELL_MEAN ≈ 0.04
            uwb_post_transient_sigma: 0.04 / (SQRT_2 * MAXWELL_MEAN),
            uwb_jitter_sigma: 0.004,
            uwb_transient_sigma: 0.5,
            uwb_transient_mean_duration: 23.0,
            uwb_transient_jitter: 2.0,
            heading_sigma: 0.06,
            // total per-session sigma ≈ 0.096 → pairwise mean ≈ 0.11
            heading_site_bias_sigma: 0.075,
            ble_rssi_sigma: 2.0,
            optical_pos_sigma: 0.02 / MAXWELL_MEAN,
            optical_rot_sigma: 0.03 / HALF_NORMAL_MEAN,
            optical_fail_level: 0.6,
            optical_base_delay: 3.0,
            optical_delay_jitter: 1.0,
            map_transfer_delay: 1.5,
        }
    }
}

impl NoiseConfig {
    /// Every noise source off; the transient phase has zero length.
    pub fn noiseless() -> Self {
        Self {
            uwb_post_transient_sigma: 0.0,
            uwb_jitter_sigma: 0.0,
            uwb_transient_sigma: 0.0,
            uwb_transient_mean_duration: 0.0,
            uwb_transient_jitter: 0.0,
            heading_sigma: 0.0,
            heading_site_bias_sigma: 0.0,
            ble_rssi_sigma: 0.0,
            optical_pos_sigma: 0.0,
            optical_rot_sigma: 0.0,
            optical_delay_jitter: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let non_negative = [
            ("uwb_post_transient_sigma", self.uwb_post_transient_sigma),
            ("uwb_jitter_sigma", self.uwb_jitter_sigma),
            ("uwb_transient_sigma", self.uwb_transient_sigma),
            ("uwb_transient_mean_duration", self.uwb_transient_mean_duration),
            ("uwb_transient_jitter", self.uwb_transient_jitter),
            ("heading_sigma", self.heading_sigma),
            ("heading_site_bias_sigma", self.heading_site_bias_sigma),
            ("ble_rssi_sigma", self.ble_rssi_sigma),
            ("optical_pos_sigma", self.optical_pos_sigma),
            ("optical_rot_sigma", self.optical_rot_sigma),
            ("optical_base_delay", self.optical_base_delay),
            ("optical_delay_jitter", self.optical_delay_jitter),
            ("map_transfer_delay", self.map_transfer_delay),
        ];
        for (key, value) in non_negative {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(SimError::ConfigInvalid(format!(
                    "noise.{key}: must be a finite value >= 0, got {value}"
                )));
            }
        }
        if !(self.optical_fail_level > 0.0 && self.optical_fail_level <= 1.0) {
            return Err(SimError::ConfigInvalid(format!(
                "noise.optical_fail_level: must be in (0, 1], got {}",
                self.optical_fail_level
            )));
        }
        Ok(())
    }

    /// Probability that optical relocalization succeeds at change level `c`.
    pub fn optical_success_probability(&self, c: f64) -> f64 {
        (1.0 - c / self.optical_fail_level).clamp(0.0, 1.0)
    }
}
