//! Deterministic multi-device simulation of the sensing layer.

pub mod noise;
pub mod rng;
pub mod scenario;
pub mod sensors;
pub mod slots;
pub mod trial;
pub mod world;

use thiserror::Error;

use crate::pose::PoseError;
use crate::room::RoomError;
use crate::store::StoreError;

pub use noise::NoiseConfig;
pub use scenario::ScenarioFile;
pub use slots::{RangingSlots, SlotGrant, UWB_CONCURRENT_LIMIT};
pub use trial::{
    run_batch, run_group, run_trial, simulate_room_walk, Approach, RoomSwitchEvent, Scenario,
    TrialRecord,
};
pub use world::{Beacon, BeaconKind, DeviceSession, RoomRegion, Waypoint, WorldModel};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("device {device} holds no ranging slot on beacon {beacon}")]
    NoRangingSlot { beacon: String, device: String },
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Room(#[from] RoomError),
}
