//! Simulated venue and device sessions.
//!
//! World axes: `x` = magnetic north, `y` = up, `z` = east. Rooms are
//! axis-aligned rectangles on the floor (`x`/`z`).

use rand::Rng;

use super::rng::SimRng;
use super::SimError;
use crate::pose::{
    compose, invert, rotation_about_axis, rotation_about_up, RigidPose, Rot3, Vec3,
};
use crate::room::{BeaconRegistry, RoomError};

/// Height of a hand-held device above the floor, metres.
pub const DEVICE_HEIGHT: f64 = 1.4;

#[derive(Debug, Clone, PartialEq)]
pub struct RoomRegion {
    pub id: String,
    /// `(x, z)` corner with the smaller coordinates.
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl RoomRegion {
    pub fn new(id: impl Into<String>, min: [f64; 2], max: [f64; 2]) -> Self {
        Self {
            id: id.into(),
            min,
            max,
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (self.min[0]..=self.max[0]).contains(&p.x) && (self.min[1]..=self.max[1]).contains(&p.z)
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(
            (self.min[0] + self.max[0]) / 2.0,
            DEVICE_HEIGHT,
            (self.min[1] + self.max[1]) / 2.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeaconKind {
    Ble,
    Uwb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beacon {
    pub id: String,
    pub kind: BeaconKind,
    pub true_pose: RigidPose,
    pub room_id: String,
}

impl Beacon {
    pub fn position(&self) -> Vec3 {
        *self.true_pose.translation()
    }

    /// North-aligned reference pose at the beacon, in world coordinates.
    pub fn reference_pose(&self) -> RigidPose {
        RigidPose::from_translation(self.position())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorTruth {
    pub anchor_id: Option<String>,
    pub room_id: String,
    pub true_pose: RigidPose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    pub rooms: Vec<RoomRegion>,
    pub beacons: Vec<Beacon>,
    pub anchors: Vec<AnchorTruth>,
    /// Fraction of the scene altered since anchors were hosted.
    pub environment_change: f64,
    /// Magnetic interference offset for this trial, radians.
    pub heading_site_bias: f64,
}

impl WorldModel {
    /// Two 6 m × 5 m rooms side by side, each with two ceiling BLE beacons,
    /// one desk-height UWB beacon, and one anchor placed on the UWB beacon.
    pub fn two_rooms() -> Self {
        let ble = |id: &str, room: &str, x: f64, z: f64| Beacon {
            id: id.into(),
            kind: BeaconKind::Ble,
            true_pose: RigidPose::from_translation(Vec3::new(x, 2.5, z)),
            room_id: room.into(),
        };
        let uwb = |id: &str, room: &str, x: f64, z: f64| Beacon {
            id: id.into(),
            kind: BeaconKind::Uwb,
            true_pose: RigidPose::from_translation(Vec3::new(x, 1.0, z)),
            room_id: room.into(),
        };
        let beacons = vec![
            ble("ble-a1", "A", 1.0, 1.0),
            ble("ble-a2", "A", 5.0, 4.0),
            ble("ble-b1", "B", 7.0, 1.0),
            ble("ble-b2", "B", 11.0, 4.0),
            uwb("uwb-a", "A", 3.0, 2.5),
            uwb("uwb-b", "B", 9.0, 2.5),
        ];
        let anchors = beacons
            .iter()
            .filter(|b| b.kind == BeaconKind::Uwb)
            .map(|b| AnchorTruth {
                anchor_id: Some(format!("anchor-{}", b.room_id.to_lowercase())),
                room_id: b.room_id.clone(),
                true_pose: b.reference_pose(),
            })
            .collect();
        Self {
            rooms: vec![
                RoomRegion::new("A", [0.0, 0.0], [6.0, 5.0]),
                RoomRegion::new("B", [6.0, 0.0], [12.0, 5.0]),
            ],
            beacons,
            anchors,
            environment_change: 0.0,
            heading_site_bias: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |msg: String| Err(SimError::ConfigInvalid(msg));
        if self.rooms.is_empty() {
            return invalid("rooms: at least one room is required".into());
        }
        for room in &self.rooms {
            // ids end up inside CSV cells that use these as separators
            if room.id.is_empty() || room.id.contains([';', ':', '>', ',', '"', '\n']) {
                return invalid(format!(
                    "rooms.id: {:?} must be non-empty without ; : > , or quotes",
                    room.id
                ));
            }
            if !(room.min[0] < room.max[0] && room.min[1] < room.max[1]) {
                return invalid(format!("rooms.{}: min must be below max", room.id));
            }
        }
        for (i, a) in self.rooms.iter().enumerate() {
            if self.rooms[..i].iter().any(|b| b.id == a.id) {
                return invalid(format!("rooms.{}: duplicate room id", a.id));
            }
        }
        for (i, b) in self.beacons.iter().enumerate() {
            if self.room(&b.room_id).is_none() {
                return invalid(format!("beacons.{}.room: unknown room {}", b.id, b.room_id));
            }
            if self.beacons[..i].iter().any(|o| o.id == b.id) {
                return invalid(format!("beacons.{}: duplicate beacon id", b.id));
            }
        }
        for a in &self.anchors {
            if self.room(&a.room_id).is_none() {
                return invalid(format!("anchors.room: unknown room {}", a.room_id));
            }
        }
        if !(0.0..=1.0).contains(&self.environment_change) {
            return invalid(format!(
                "environment_levels: {} is outside [0, 1]",
                self.environment_change
            ));
        }
        Ok(())
    }

    pub fn room(&self, id: &str) -> Option<&RoomRegion> {
        self.rooms.iter().find(|r| r.id == id)
    }

    pub fn room_at(&self, p: &Vec3) -> Option<&RoomRegion> {
        self.rooms.iter().find(|r| r.contains(p))
    }

    pub fn beacons_of(&self, kind: BeaconKind) -> impl Iterator<Item = &Beacon> {
        self.beacons.iter().filter(move |b| b.kind == kind)
    }

    pub fn beacon(&self, id: &str) -> Option<&Beacon> {
        self.beacons.iter().find(|b| b.id == id)
    }

    /// Nearest UWB beacon in the room containing `p`, falling back to the
    /// nearest UWB beacon anywhere.
    pub fn uwb_beacon_for(&self, p: &Vec3) -> Option<&Beacon> {
        let room = self.room_at(p).map(|r| r.id.as_str());
        let dist = |b: &&Beacon| (b.position() - p).norm();
        let in_room = self
            .beacons_of(BeaconKind::Uwb)
            .filter(|b| Some(b.room_id.as_str()) == room)
            .min_by(|a, b| dist(a).total_cmp(&dist(b)));
        in_room.or_else(|| {
            self.beacons_of(BeaconKind::Uwb)
                .min_by(|a, b| dist(a).total_cmp(&dist(b)))
        })
    }

    pub fn ble_registry(&self) -> Result<BeaconRegistry, RoomError> {
        let mut registry = BeaconRegistry::new();
        for b in self.beacons_of(BeaconKind::Ble) {
            registry.register(b.id.clone(), b.room_id.clone())?;
        }
        Ok(registry)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub time: f64,
    pub position: Vec3,
}

/// One device running one AR session.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSession {
    pub device_id: String,
    /// Maps world coordinates into this session's coordinates.
    pub session_frame: RigidPose,
    pub trajectory: Vec<Waypoint>,
    /// Camera orientation in world coordinates.
    pub camera_rotation: Rot3,
    pub clock: f64,
}

impl DeviceSession {
    /// A session whose origin is where the app launched, with an arbitrary yaw.
    pub fn new(
        device_id: impl Into<String>,
        launch_position: Vec3,
        session_yaw: f64,
        camera_rotation: Rot3,
    ) -> Self {
        let session_to_world =
            RigidPose::from_parts(rotation_about_up(session_yaw), launch_position);
        Self {
            device_id: device_id.into(),
            session_frame: invert(&session_to_world),
            trajectory: vec![Waypoint {
                time: 0.0,
                position: launch_position,
            }],
            camera_rotation,
            clock: 0.0,
        }
    }

    /// Random stationary device inside `room`, hand-held with some tilt.
    pub fn spawn(
        device_id: impl Into<String>,
        room: &RoomRegion,
        rng: &mut SimRng,
    ) -> Self {
        let inset = 0.5;
        let x = rng.random_range(room.min[0] + inset..room.max[0] - inset);
        let z = rng.random_range(room.min[1] + inset..room.max[1] - inset);
        let session_yaw = rng.random_range(0.0..std::f64::consts::TAU);
        let camera_yaw = rng.random_range(0.0..std::f64::consts::TAU);
        let pitch = rng.random_range(-0.4..0.4);
        let roll = rng.random_range(-0.2..0.2);
        let camera = rotation_about_up(camera_yaw)
            * rotation_about_axis(&Vec3::x(), pitch)
            * rotation_about_axis(&Vec3::z(), roll);
        Self::new(device_id, Vec3::new(x, DEVICE_HEIGHT, z), session_yaw, camera)
    }

    pub fn with_trajectory(mut self, trajectory: Vec<Waypoint>) -> Self {
        self.trajectory = trajectory;
        self
    }

    /// Linear interpolation along the trajectory, clamped at both ends.
    pub fn position_at(&self, t: f64) -> Vec3 {
        let path = &self.trajectory;
        let first = path.first().expect("trajectory is never empty");
        if t <= first.time {
            return first.position;
        }
        for pair in path.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if t <= b.time {
                let span = b.time - a.time;
                if span <= 0.0 {
                    return b.position;
                }
                let f = (t - a.time) / span;
                return a.position + (b.position - a.position) * f;
            }
        }
        path.last().unwrap().position
    }

    pub fn camera_pose_world(&self, t: f64) -> RigidPose {
        RigidPose::from_parts(self.camera_rotation, self.position_at(t))
    }

    pub fn camera_pose_session(&self, t: f64) -> RigidPose {
        compose(&self.session_frame, &self.camera_pose_world(t))
    }

    pub fn world_to_session(&self, pose: &RigidPose) -> RigidPose {
        compose(&self.session_frame, pose)
    }

    pub fn session_to_world(&self, pose: &RigidPose) -> RigidPose {
        compose(&invert(&self.session_frame), pose)
    }

    /// Azimuth of the camera's forward axis, clockwise from north.
    pub fn true_azimuth(&self) -> f64 {
        let forward = -self.camera_rotation.column(2);
        forward.z.atan2(forward.x)
    }
}
