//! Sensor models: BLE scans, UWB ranging positions, compass heading, and
//! optical relocalization.

use rand::Rng;

use super::noise::NoiseConfig;
use super::rng::{gauss, SimRng};
use super::slots::RangingSlots;
use super::trial::Approach;
use super::world::{Beacon, BeaconKind, DeviceSession, WorldModel};
use super::SimError;
use crate::pose::{rotation_about_axis, HeadingReading, Rot3, Vec3};
use crate::room::{BeaconAdvertisement, ProximityCalibration, MAX_RSSI, MIN_RSSI};
use crate::stabilizer::RangingSample;

/// BLE advertisements are heard up to this distance, metres.
pub const BLE_RANGE: f64 = 30.0;

/// Shortest distance fed to the path-loss model, metres.
const MIN_BLE_DISTANCE: f64 = 0.01;

/// One advertisement per BLE beacon within [`BLE_RANGE`], in world order.
pub fn sample_ble_scan(
    device: &DeviceSession,
    t: f64,
    world: &WorldModel,
    noise: &NoiseConfig,
    calibration: &ProximityCalibration,
    rng: &mut SimRng,
) -> Vec<BeaconAdvertisement> {
    let position = device.position_at(t);
    world
        .beacons_of(BeaconKind::Ble)
        .filter_map(|b| {
            let d = (b.position() - position).norm();
            if d > BLE_RANGE {
                return None;
            }
            let rssi = calibration.rssi_at(d.max(MIN_BLE_DISTANCE))
                + gauss(rng, noise.ble_rssi_sigma);
            Some(BeaconAdvertisement::new(
                b.id.clone(),
                rssi.clamp(MIN_RSSI, MAX_RSSI),
                t,
            ))
        })
        .collect()
}

/// Per-stream draws of the UWB error model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UwbStream {
    /// Length of the unsettled phase, seconds.
    pub transient_duration: f64,
    /// Offset carried by every settled sample, metres.
    pub settled_offset: Vec3,
}

impl UwbStream {
    pub fn draw(noise: &NoiseConfig, rng: &mut SimRng) -> Self {
        let transient_duration = (noise.uwb_transient_mean_duration
            + gauss(rng, noise.uwb_transient_jitter))
        .max(0.0);
        let s = noise.uwb_post_transient_sigma;
        let settled_offset = Vec3::new(gauss(rng, s), gauss(rng, s), gauss(rng, s));
        Self {
            transient_duration,
            settled_offset,
        }
    }

    pub fn in_transient(&self, elapsed: f64) -> bool {
        elapsed < self.transient_duration
    }
}

/// Beacon position as the device's session sees it through UWB ranging.
#[allow(clippy::too_many_arguments)]
pub fn sample_uwb_position(
    slots: &RangingSlots,
    device: &DeviceSession,
    beacon: &Beacon,
    stream: &UwbStream,
    elapsed: f64,
    now: f64,
    noise: &NoiseConfig,
    rng: &mut SimRng,
) -> Result<RangingSample, SimError> {
    if !slots.holds(&beacon.id, &device.device_id) {
        return Err(SimError::NoRangingSlot {
            beacon: beacon.id.clone(),
            device: device.device_id.clone(),
        });
    }
    let truth = device.session_frame.transform_point(&beacon.position());
    let error = if stream.in_transient(elapsed) {
        let s = noise.uwb_transient_sigma;
        Vec3::new(gauss(rng, s), gauss(rng, s), gauss(rng, s))
    } else {
        let s = noise.uwb_jitter_sigma;
        stream.settled_offset + Vec3::new(gauss(rng, s), gauss(rng, s), gauss(rng, s))
    };
    Ok(RangingSample::new(truth + error, now))
}

/// Draws the trial's magnetic interference offset.
pub fn draw_site_bias(noise: &NoiseConfig, rng: &mut SimRng) -> f64 {
    gauss(rng, noise.heading_site_bias_sigma)
}

pub fn sample_heading(
    device: &DeviceSession,
    t: f64,
    world: &WorldModel,
    noise: &NoiseConfig,
    rng: &mut SimRng,
) -> HeadingReading {
    let heading = device.true_azimuth() + world.heading_site_bias + gauss(rng, noise.heading_sigma);
    HeadingReading::new(heading, t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpticalOutcome {
    /// Resolution error: world-frame position offset and a rotation applied
    /// on the right of the true orientation.
    Success {
        position_offset: Vec3,
        rotation_offset: Rot3,
    },
    Failure,
}

/// Draws a resolution error of the optical model.
pub fn draw_optical_error(noise: &NoiseConfig, rng: &mut SimRng) -> (Vec3, Rot3) {
    let s = noise.optical_pos_sigma;
    let position_offset = Vec3::new(gauss(rng, s), gauss(rng, s), gauss(rng, s));
    let axis = loop {
        let v = Vec3::new(gauss(rng, 1.0), gauss(rng, 1.0), gauss(rng, 1.0));
        if v.norm() > 1e-9 {
            break v;
        }
    };
    let angle = gauss(rng, noise.optical_rot_sigma).abs();
    (position_offset, rotation_about_axis(&axis, angle))
}

/// Optical relocalization against stored visual data.
///
/// Succeeds with probability `clamp(1 - c / c_fail, 0, 1)`. The uniform draw
/// comes first so that, for a fixed seed, success is monotone in `c`.
pub fn attempt_optical_localization(
    approach: Approach,
    world: &WorldModel,
    noise: &NoiseConfig,
    rng: &mut SimRng,
) -> Result<OpticalOutcome, SimError> {
    if !approach.is_optical() {
        return Err(SimError::ConfigInvalid(format!(
            "approach: optical localization does not apply to {approach}"
        )));
    }
    let u: f64 = rng.random();
    if u >= noise.optical_success_probability(world.environment_change) {
        return Ok(OpticalOutcome::Failure);
    }
    let (position_offset, rotation_offset) = draw_optical_error(noise, rng);
    Ok(OpticalOutcome::Success {
        position_offset,
        rotation_offset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{rotation_angle_between, RigidPose};
    use crate::room::classify_proximity;
    use crate::sim::rng::{stream, Subsystem};
    use crate::sim::slots::SlotGrant;

    fn device_at(p: Vec3) -> DeviceSession {
        DeviceSession::new("dev", p, 0.7, Rot3::identity())
    }

    #[test]
    fn noiseless_scan_inverts_path_loss() {
        let world = WorldModel::two_rooms();
        let cal = ProximityCalibration::default();
        let noise = NoiseConfig::noiseless();
        let mut rng = stream(1, Subsystem::Rssi, 0);
        // 1 m straight below ble-a1
        let device = device_at(Vec3::new(1.0, 1.5, 1.0));
        let scan = sample_ble_scan(&device, 0.0, &world, &noise, &cal, &mut rng);
        assert_eq!(scan.len(), 4);
        assert_eq!(scan[0].beacon_id, "ble-a1");
        assert_eq!(scan[0].rssi, cal.measured_power);

        for (ad, beacon) in scan.iter().zip(world.beacons_of(BeaconKind::Ble)) {
            let truth = (beacon.position() - device.position_at(0.0)).norm();
            let (_, d) = classify_proximity(ad.rssi, &cal);
            assert!((d - truth).abs() < 1e-9, "{d} vs {truth}");
        }
    }

    #[test]
    fn scans_are_reproducible() {
        let world = WorldModel::two_rooms();
        let cal = ProximityCalibration::default();
        let noise = NoiseConfig::default();
        let device = device_at(Vec3::new(3.0, 1.4, 2.0));
        let run = || {
            let mut rng = stream(42, Subsystem::Rssi, 0);
            (0..20)
                .map(|i| sample_ble_scan(&device, i as f64, &world, &noise, &cal, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn ranging_requires_a_slot() {
        let world = WorldModel::two_rooms();
        let beacon = world.beacon("uwb-a").unwrap();
        let device = device_at(Vec3::new(2.0, 1.4, 2.0));
        let mut slots = RangingSlots::default();
        let noise = NoiseConfig::noiseless();
        let mut rng = stream(1, Subsystem::Ranging, 0);
        let uwb = UwbStream::draw(&noise, &mut rng);
        let err = sample_uwb_position(&slots, &device, beacon, &uwb, 0.0, 0.0, &noise, &mut rng);
        assert!(matches!(err, Err(SimError::NoRangingSlot { .. })));

        assert_eq!(slots.acquire("uwb-a", "dev", 0.0), SlotGrant::Granted);
        let s = sample_uwb_position(&slots, &device, beacon, &uwb, 0.0, 0.0, &noise, &mut rng)
            .unwrap();
        let truth = device.session_frame.transform_point(&beacon.position());
        assert_eq!(s.position, truth);
    }

    #[test]
    fn heading_convention() {
        let world = WorldModel::two_rooms();
        let noise = NoiseConfig::noiseless();
        let mut rng = stream(1, Subsystem::Heading, 0);
        let north = DeviceSession::new(
            "d",
            Vec3::zeros(),
            1.0,
            crate::pose::rotation_about_up(-std::f64::consts::FRAC_PI_2),
        );
        let h = sample_heading(&north, 0.0, &world, &noise, &mut rng);
        assert!(h.heading() < 1e-12 || h.heading() > std::f64::consts::TAU - 1e-12);
        let east = DeviceSession::new(
            "d",
            Vec3::zeros(),
            1.0,
            crate::pose::rotation_about_up(std::f64::consts::PI),
        );
        let h = sample_heading(&east, 0.0, &world, &noise, &mut rng);
        assert!((h.heading() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn optical_boundaries() {
        let noise = NoiseConfig::default();
        let mut world = WorldModel::two_rooms();
        let mut rng = stream(5, Subsystem::Optical, 0);
        for _ in 0..200 {
            let o = attempt_optical_localization(Approach::BleCloudAnchor, &world, &noise, &mut rng)
                .unwrap();
            assert!(matches!(o, OpticalOutcome::Success { .. }));
        }
        world.environment_change = 0.6;
        for _ in 0..200 {
            let o = attempt_optical_localization(Approach::BleWorldmap, &world, &noise, &mut rng)
                .unwrap();
            assert_eq!(o, OpticalOutcome::Failure);
        }
        assert!(attempt_optical_localization(Approach::Uwb, &world, &noise, &mut rng).is_err());
    }

    #[test]
    fn optical_error_rotation_is_proper() {
        let noise = NoiseConfig::default();
        let mut rng = stream(8, Subsystem::Optical, 0);
        for _ in 0..100 {
            let (_, r) = draw_optical_error(&noise, &mut rng);
            RigidPose::new(r, Vec3::zeros()).unwrap();
            assert!(rotation_angle_between(&Rot3::identity(), &r) < 0.5);
        }
    }
}
