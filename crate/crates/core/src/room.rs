//! BLE room context.
//!
//! RSSI readings are converted to distance with a log-distance path-loss
//! model and bucketed into iBeacon-style proximity classes. The room a device
//! is in follows the nearest registered beacon, with a streak-plus-margin
//! hysteresis so that standing on a boundary does not flap between rooms.

use std::collections::BTreeMap;

use thiserror::Error;

pub const MIN_RSSI: f64 = -120.0;
pub const MAX_RSSI: f64 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BeaconAdvertisement {
    pub beacon_id: String,
    /// dBm
    pub rssi: f64,
    pub timestamp: f64,
}

impl BeaconAdvertisement {
    pub fn new(beacon_id: impl Into<String>, rssi: f64, timestamp: f64) -> Self {
        Self {
            beacon_id: beacon_id.into(),
            rssi,
            timestamp,
        }
    }

    pub fn has_valid_rssi(&self) -> bool {
        (MIN_RSSI..=MAX_RSSI).contains(&self.rssi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Proximity {
    Immediate,
    Near,
    Far,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProximityCalibration {
    /// RSSI at 1 m, dBm.
    pub measured_power: f64,
    pub path_loss_exponent: f64,
    pub immediate_radius: f64,
    pub near_radius: f64,
}

impl Default for ProximityCalibration {
    fn default() -> Self {
        Self {
            measured_power: -59.0,
            path_loss_exponent: 2.0,
            immediate_radius: 0.5,
            near_radius: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoomError {
    #[error("invalid proximity calibration: {0}")]
    InvalidCalibration(&'static str),
    #[error("invalid hysteresis: {0}")]
    InvalidHysteresis(&'static str),
    #[error("beacon {beacon} is already registered to room {existing}")]
    BeaconAlreadyRegistered { beacon: String, existing: String },
}

impl ProximityCalibration {
    pub fn validate(&self) -> Result<(), RoomError> {
        if !(self.path_loss_exponent > 0.0) {
            return Err(RoomError::InvalidCalibration("path_loss_exponent must be > 0"));
        }
        if !(self.immediate_radius > 0.0 && self.immediate_radius < self.near_radius) {
            return Err(RoomError::InvalidCalibration(
                "require 0 < immediate_radius < near_radius",
            ));
        }
        Ok(())
    }

    /// Distance implied by an RSSI reading: `10^((P - rssi) / (10 n))`.
    pub fn distance_for(&self, rssi: f64) -> f64 {
        10f64.powf((self.measured_power - rssi) / (10.0 * self.path_loss_exponent))
    }

    /// Noise-free RSSI at `distance` metres: `P - 10 n log10(d)`.
    pub fn rssi_at(&self, distance: f64) -> f64 {
        self.measured_power - 10.0 * self.path_loss_exponent * distance.log10()
    }
}

pub fn classify_proximity(rssi: f64, cal: &ProximityCalibration) -> (Proximity, f64) {
    let d = cal.distance_for(rssi);
    let class = if d < cal.immediate_radius {
        Proximity::Immediate
    } else if d < cal.near_radius {
        Proximity::Near
    } else {
        Proximity::Far
    };
    (class, d)
}

/// Many-to-one map from beacon id to room id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BeaconRegistry {
    rooms: BTreeMap<String, String>,
}

impl BeaconRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        beacon_id: impl Into<String>,
        room_id: impl Into<String>,
    ) -> Result<(), RoomError> {
        let beacon_id = beacon_id.into();
        let room_id = room_id.into();
        match self.rooms.get(&beacon_id) {
            Some(existing) if *existing != room_id => Err(RoomError::BeaconAlreadyRegistered {
                beacon: beacon_id,
                existing: existing.clone(),
            }),
            _ => {
                self.rooms.insert(beacon_id, room_id);
                Ok(())
            }
        }
    }

    pub fn room_of(&self, beacon_id: &str) -> Option<&str> {
        self.rooms.get(beacon_id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.rooms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rooms.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hysteresis {
    /// Consecutive winning scans needed before switching.
    pub confirm_scans: u32,
    /// Distance, metres, by which the candidate must beat the current room.
    pub margin: f64,
}

impl Default for Hysteresis {
    fn default() -> Self {
        Self {
            confirm_scans: 3,
            margin: 0.5,
        }
    }
}

impl Hysteresis {
    /// Plain nearest-beacon behaviour.
    pub fn none() -> Self {
        Self {
            confirm_scans: 1,
            margin: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), RoomError> {
        if self.confirm_scans == 0 {
            return Err(RoomError::InvalidHysteresis("confirm_scans must be >= 1"));
        }
        if !(self.margin >= 0.0) {
            return Err(RoomError::InvalidHysteresis("margin must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResolverParams {
    pub calibration: ProximityCalibration,
    pub hysteresis: Hysteresis,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoomDecision {
    pub current_room: Option<String>,
    pub candidate_room: Option<String>,
    pub candidate_streak: u32,
    /// This update changed `current_room`.
    pub switched: bool,
    /// Advertisements ignored in this update (unregistered beacon or RSSI out of range).
    pub dropped: usize,
}

/// Nearest registered beacon in a scan: `(beacon_id, room_id, distance)`.
/// Equal distances go to the lexicographically smallest beacon id.
pub fn nearest_beacon<'a>(
    scan: &'a [BeaconAdvertisement],
    registry: &'a BeaconRegistry,
    cal: &ProximityCalibration,
) -> Option<(&'a str, &'a str, f64)> {
    scan.iter()
        .filter(|ad| ad.has_valid_rssi())
        .filter_map(|ad| {
            registry
                .room_of(&ad.beacon_id)
                .map(|room| (ad.beacon_id.as_str(), room, cal.distance_for(ad.rssi)))
        })
        .min_by(|a, b| a.2.total_cmp(&b.2).then_with(|| a.0.cmp(b.0)))
}

/// Advances the room decision by one scan.
pub fn update(
    scan: &[BeaconAdvertisement],
    registry: &BeaconRegistry,
    state: &RoomDecision,
    params: &ResolverParams,
) -> RoomDecision {
    let mut best_per_room: BTreeMap<&str, f64> = BTreeMap::new();
    let mut dropped = 0;
    for ad in scan {
        match registry.room_of(&ad.beacon_id) {
            Some(room) if ad.has_valid_rssi() => {
                let d = params.calibration.distance_for(ad.rssi);
                best_per_room
                    .entry(room)
                    .and_modify(|best| *best = best.min(d))
                    .or_insert(d);
            }
            _ => dropped += 1,
        }
    }

    let mut next = RoomDecision {
        switched: false,
        dropped,
        ..state.clone()
    };
    let Some((_, winner_room, winner_distance)) =
        nearest_beacon(scan, registry, &params.calibration)
    else {
        return next;
    };

    let current = match &state.current_room {
        None => {
            next.current_room = Some(winner_room.to_owned());
            next.candidate_room = None;
            next.candidate_streak = 0;
            next.switched = true;
            return next;
        }
        Some(current) => current.as_str(),
    };

    if current == winner_room {
        next.candidate_room = None;
        next.candidate_streak = 0;
        return next;
    }

    let current_best = best_per_room
        .get(current)
        .copied()
        .unwrap_or(f64::INFINITY);
    let margin_ok = winner_distance + params.hysteresis.margin <= current_best;
    let continuing = state.candidate_room.as_deref() == Some(winner_room);
    next.candidate_streak = match (margin_ok, continuing) {
        (false, _) => 0,
        (true, true) => state.candidate_streak + 1,
        (true, false) => 1,
    };
    next.candidate_room = Some(winner_room.to_owned());

    if next.candidate_streak >= params.hysteresis.confirm_scans {
        next.current_room = Some(winner_room.to_owned());
        next.candidate_room = None;
        next.candidate_streak = 0;
        next.switched = true;
    }
    next
}
