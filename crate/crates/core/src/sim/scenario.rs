//! Scenario config files (TOML).
//!
//! Every key is optional; an empty file runs one default UWB trial in the
//! built-in two-room venue. See `docs/config.md` for the full key list.

use std::path::Path;

use serde::Deserialize;

use super::noise::NoiseConfig;
use super::trial::{Approach, Scenario};
use super::world::{AnchorTruth, Beacon, BeaconKind, RoomRegion, WorldModel};
use super::SimError;
use crate::pose::{rotation_about_up, RigidPose, Vec3};
use crate::room::{Hysteresis, ProximityCalibration, ResolverParams};
use crate::stabilizer::StabilizerConfig;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub approach: Approach,
    pub trials: u64,
    pub seed: u64,
    /// Devices sharing one world per group.
    pub devices: u32,
    pub environment_levels: Vec<f64>,
    pub device_room: String,
    pub dt: f64,
    pub ble_scan_interval: f64,
    pub nearby_radius: f64,
    pub anchor_ttl_seconds: u64,
    pub max_session_time: f64,
    pub ranging_capacity: usize,
    pub noise: NoiseConfig,
    pub stabilizer: StabilizerSection,
    pub calibration: CalibrationSection,
    pub hysteresis: HysteresisSection,
    pub rooms: Vec<RoomSection>,
    pub beacons: Vec<BeaconSection>,
    pub anchors: Vec<AnchorSection>,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        let sc = Scenario::default();
        Self {
            approach: Approach::Uwb,
            trials: 1,
            seed: 0,
            devices: 1,
            environment_levels: vec![0.0],
            device_room: sc.device_room,
            dt: sc.dt,
            ble_scan_interval: sc.ble_scan_interval,
            nearby_radius: sc.nearby_radius,
            anchor_ttl_seconds: sc.anchor_ttl_seconds,
            max_session_time: sc.max_session_time,
            ranging_capacity: sc.ranging_capacity,
            noise: sc.noise,
            stabilizer: StabilizerSection::default(),
            calibration: CalibrationSection::default(),
            hysteresis: HysteresisSection::default(),
            rooms: Vec::new(),
            beacons: Vec::new(),
            anchors: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilizerSection {
    pub disparity_threshold: f64,
    pub stable_duration: f64,
    pub timeout: f64,
}

impl Default for StabilizerSection {
    fn default() -> Self {
        let c = StabilizerConfig::default();
        Self {
            disparity_threshold: c.disparity_threshold,
            stable_duration: c.stable_duration,
            timeout: c.timeout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub measured_power: f64,
    pub path_loss_exponent: f64,
    pub immediate_radius: f64,
    pub near_radius: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        let c = ProximityCalibration::default();
        Self {
            measured_power: c.measured_power,
            path_loss_exponent: c.path_loss_exponent,
            immediate_radius: c.immediate_radius,
            near_radius: c.near_radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HysteresisSection {
    pub confirm_scans: u32,
    pub margin: f64,
}

impl Default for HysteresisSection {
    fn default() -> Self {
        let h = Hysteresis::default();
        Self {
            confirm_scans: h.confirm_scans,
            margin: h.margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSection {
    pub id: String,
    /// `[x, z]` corners.
    pub min: [f64; 2],
    pub max: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeaconKindName {
    Ble,
    Uwb,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeaconSection {
    pub id: String,
    pub kind: BeaconKindName,
    pub room: String,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSection {
    #[serde(default)]
    pub id: Option<String>,
    pub room: String,
    pub position: [f64; 3],
    /// Rotation about the up axis, radians.
    #[serde(default)]
    pub yaw: f64,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
        file.scenario()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Validated simulation scenario described by the file.
    pub fn scenario(&self) -> Result<Scenario, SimError> {
        let invalid = |msg: &str| Err(SimError::ConfigInvalid(msg.to_owned()));
        if self.trials == 0 {
            return invalid("trials: must be >= 1");
        }
        if self.devices == 0 {
            return invalid("devices: must be >= 1");
        }
        if self.environment_levels.is_empty() {
            return invalid("environment_levels: at least one level is required");
        }
        if self.environment_levels.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return invalid("environment_levels: levels must be in [0, 1]");
        }
        let world = if self.rooms.is_empty() {
            if !self.beacons.is_empty() || !self.anchors.is_empty() {
                return invalid("rooms: beacons and anchors need explicit rooms");
            }
            WorldModel::two_rooms()
        } else {
            self.world()?
        };
        let s = &self.stabilizer;
        let c = &self.calibration;
        let scenario = Scenario {
            world,
            noise: self.noise,
            stabilizer: StabilizerConfig {
                disparity_threshold: s.disparity_threshold,
                stable_duration: s.stable_duration,
                timeout: s.timeout,
            },
            resolver: ResolverParams {
                calibration: ProximityCalibration {
                    measured_power: c.measured_power,
                    path_loss_exponent: c.path_loss_exponent,
                    immediate_radius: c.immediate_radius,
                    near_radius: c.near_radius,
                },
                hysteresis: Hysteresis {
                    confirm_scans: self.hysteresis.confirm_scans,
                    margin: self.hysteresis.margin,
                },
            },
            device_room: self.device_room.clone(),
            dt: self.dt,
            ble_scan_interval: self.ble_scan_interval,
            nearby_radius: self.nearby_radius,
            anchor_ttl_seconds: self.anchor_ttl_seconds,
            max_session_time: self.max_session_time,
            ranging_capacity: self.ranging_capacity,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    fn world(&self) -> Result<WorldModel, SimError> {
        let rooms = self
            .rooms
            .iter()
            .map(|r| RoomRegion::new(r.id.clone(), r.min, r.max))
            .collect();
        let beacons = self
            .beacons
            .iter()
            .map(|b| Beacon {
                id: b.id.clone(),
                kind: match b.kind {
                    BeaconKindName::Ble => BeaconKind::Ble,
                    BeaconKindName::Uwb => BeaconKind::Uwb,
                },
                true_pose: RigidPose::from_translation(Vec3::from(b.position)),
                room_id: b.room.clone(),
            })
            .collect();
        let anchors = self
            .anchors
            .iter()
            .map(|a| {
                Ok(AnchorTruth {
                    anchor_id: a.id.clone(),
                    room_id: a.room.clone(),
                    true_pose: RigidPose::new(rotation_about_up(a.yaw), Vec3::from(a.position))?,
                })
            })
            .collect::<Result<_, SimError>>()?;
        Ok(WorldModel {
            rooms,
            beacons,
            anchors,
            environment_change: 0.0,
            heading_site_bias: 0.0,
        })
    }
}
