//! End-to-end trials of both synchronization approaches.
//!
//! A trial is one AR session on one device. Devices that share a trial seed
//! also share a world (site bias, hosted anchors, UWB ranging capacity).
//! Ground truth is only consulted to score results: every resolved pose is
//! produced in the device's session frame and mapped back to the world.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::noise::NoiseConfig;
use super::rng::{gauss, stream, SimRng, Subsystem};
use super::sensors::{
    attempt_optical_localization, draw_optical_error, draw_site_bias, sample_ble_scan,
    sample_heading, sample_uwb_position, OpticalOutcome, UwbStream,
};
use super::slots::{RangingSlots, UWB_CONCURRENT_LIMIT};
use super::world::{Beacon, BeaconKind, DeviceSession, Waypoint, WorldModel};
use super::SimError;
use crate::pose::{
    host_relative, make_reference_pose, north_aligned_orientation, resolve_anchor,
    rotation_angle_between, RelativeTransform, RigidPose, Vec3,
};
use crate::room::{self, nearest_beacon, BeaconRegistry, ResolverParams, RoomDecision};
use crate::stabilizer::{Stabilizer, StabilizerConfig, StabilizerState};
use crate::store::{AnchorScope, AnchorStore, NearFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    BleWorldmap,
    BleCloudAnchor,
    Uwb,
}

impl Approach {
    pub const ALL: [Approach; 3] = [Approach::BleWorldmap, Approach::BleCloudAnchor, Approach::Uwb];

    pub fn as_str(&self) -> &'static str {
        match self {
            Approach::BleWorldmap => "ble_worldmap",
            Approach::BleCloudAnchor => "ble_cloud_anchor",
            Approach::Uwb => "uwb",
        }
    }

    pub fn is_optical(&self) -> bool {
        !matches!(self, Approach::Uwb)
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Approach {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Approach::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown approach {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub world: WorldModel,
    pub noise: NoiseConfig,
    pub stabilizer: StabilizerConfig,
    pub resolver: ResolverParams,
    /// Room the devices start in.
    pub device_room: String,
    /// Simulation step, seconds.
    pub dt: f64,
    pub ble_scan_interval: f64,
    /// Radius of the "nearby anchors" query around the nearest BLE beacon, metres.
    pub nearby_radius: f64,
    pub anchor_ttl_seconds: u64,
    /// Sessions that have not localized by then count as failures, seconds.
    pub max_session_time: f64,
    pub ranging_capacity: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            world: WorldModel::two_rooms(),
            noise: NoiseConfig::default(),
            stabilizer: StabilizerConfig::default(),
            resolver: ResolverParams::default(),
            device_room: "A".into(),
            dt: 0.1,
            ble_scan_interval: 1.0,
            nearby_radius: 10.0,
            anchor_ttl_seconds: 30 * 24 * 3600,
            max_session_time: 300.0,
            ranging_capacity: UWB_CONCURRENT_LIMIT,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |msg: &str| Err(SimError::ConfigInvalid(msg.to_owned()));
        self.world.validate()?;
        self.noise.validate()?;
        self.stabilizer
            .validate()
            .map_err(|e| SimError::ConfigInvalid(format!("stabilizer: {e}")))?;
        self.resolver
            .calibration
            .validate()
            .map_err(|e| SimError::ConfigInvalid(format!("calibration: {e}")))?;
        self.resolver
            .hysteresis
            .validate()
            .map_err(|e| SimError::ConfigInvalid(format!("hysteresis: {e}")))?;
        if self.world.room(&self.device_room).is_none() {
            return Err(SimError::ConfigInvalid(format!(
                "device_room: unknown room {}",
                self.device_room
            )));
        }
        if !(self.dt > 0.0) {
            return invalid("dt: must be > 0");
        }
        if !(self.ble_scan_interval > 0.0) {
            return invalid("ble_scan_interval: must be > 0");
        }
        if !(self.nearby_radius > 0.0) {
            return invalid("nearby_radius: must be > 0");
        }
        if self.anchor_ttl_seconds == 0 || self.anchor_ttl_seconds > crate::store::MAX_TTL_SECONDS
        {
            return invalid("anchor_ttl_seconds: must be in (0, 31536000]");
        }
        if !(self.max_session_time > 0.0) {
            return invalid("max_session_time: must be > 0");
        }
        if self.ranging_capacity == 0 {
            return invalid("ranging_capacity: must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomSwitchEvent {
    pub timestamp: f64,
    pub from: Option<String>,
    pub to: String,
}

/// Outcome of one session.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// Row index within a batch.
    pub trial: u64,
    pub group: u64,
    pub device: u32,
    pub seed: u64,
    pub approach: Approach,
    pub environment_change: f64,
    pub success: bool,
    /// Launch to first anchor resolution, seconds.
    pub localization_delay: Option<f64>,
    /// Ranging start to stabilization (UWB only), seconds.
    pub time_to_stable: Option<f64>,
    pub room: Option<String>,
    pub position_errors: Vec<f64>,
    pub orientation_errors: Vec<f64>,
    /// North-aligned reference pose mapped to the world frame (UWB only).
    pub reference_pose: Option<RigidPose>,
    pub room_switch_events: Vec<RoomSwitchEvent>,
}

impl TrialRecord {
    fn failed(approach: Approach, world: &WorldModel, seed: u64, device: u32) -> Self {
        Self {
            trial: 0,
            group: 0,
            device,
            seed,
            approach,
            environment_change: world.environment_change,
            success: false,
            localization_delay: None,
            time_to_stable: None,
            room: None,
            position_errors: Vec::new(),
            orientation_errors: Vec::new(),
            reference_pose: None,
            room_switch_events: Vec::new(),
        }
    }
}

/// Anchor store populated the way hosting sessions would have left it,
/// plus the world truth behind each stored id.
struct Hosted {
    store: AnchorStore,
    truth: BTreeMap<String, RigidPose>,
}

#[derive(Serialize, Deserialize)]
struct MapAnchor {
    anchor_id: String,
    pose: [f64; 12],
}

fn host_world(world: &WorldModel, scenario: &Scenario, seed: u64) -> Result<Hosted, SimError> {
    let store = AnchorStore::with_seed(seed);
    let mut truth = BTreeMap::new();
    let ttl = scenario.anchor_ttl_seconds;
    let mut room_maps: BTreeMap<&str, Vec<MapAnchor>> = BTreeMap::new();
    for anchor in &world.anchors {
        let pose = anchor.true_pose;
        let position = Some(*pose.translation());
        let id = store.host_anchor(
            AnchorScope::Room(anchor.room_id.clone()),
            &pose.to_row_major(),
            position,
            ttl,
            0.0,
        )?;
        truth.insert(id.clone(), pose);
        room_maps.entry(&anchor.room_id).or_default().push(MapAnchor {
            anchor_id: id,
            pose: pose.to_row_major(),
        });

        let beacon = world
            .beacons_of(BeaconKind::Uwb)
            .filter(|b| b.room_id == anchor.room_id)
            .min_by(|a, b| {
                let da = (a.position() - pose.translation()).norm();
                let db = (b.position() - pose.translation()).norm();
                da.total_cmp(&db)
            });
        if let Some(beacon) = beacon {
            let rel = host_relative(&beacon.reference_pose(), &pose);
            let id = store.host_anchor(
                AnchorScope::Beacon(beacon.id.clone()),
                &rel.to_row_major(),
                position,
                ttl,
                0.0,
            )?;
            truth.insert(id, pose);
        }
    }
    for (room_id, anchors) in room_maps {
        let bytes = serde_json::to_vec(&anchors).expect("map anchors serialize");
        store.upload_map(room_id, bytes, 0, 0.0)?;
    }
    Ok(Hosted { store, truth })
}

fn score(truth: &RigidPose, estimate: &RigidPose) -> (f64, f64) {
    (
        (estimate.translation() - truth.translation()).norm(),
        rotation_angle_between(truth.rotation(), estimate.rotation()),
    )
}

/// Runs one session with its own world.
pub fn run_trial(approach: Approach, scenario: &Scenario, seed: u64) -> Result<TrialRecord, SimError> {
    Ok(run_group(approach, scenario, seed, 1)?.remove(0))
}

/// Runs `devices` concurrent sessions that share one world.
pub fn run_group(
    approach: Approach,
    scenario: &Scenario,
    seed: u64,
    devices: u32,
) -> Result<Vec<TrialRecord>, SimError> {
    scenario.validate()?;
    if devices == 0 {
        return Err(SimError::ConfigInvalid("devices: must be >= 1".into()));
    }
    let mut world = scenario.world.clone();
    let mut world_rng = stream(seed, Subsystem::World, 0);
    world.heading_site_bias = draw_site_bias(&scenario.noise, &mut world_rng);
    let room = world
        .room(&scenario.device_room)
        .expect("validated device room");
    let sessions: Vec<DeviceSession> = (0..devices)
        .map(|i| {
            let mut rng = stream(seed, Subsystem::World, i + 1);
            DeviceSession::spawn(format!("device-{i}"), room, &mut rng)
        })
        .collect();
    let hosted = host_world(&world, scenario, seed)?;

    let mut records = match approach {
        Approach::Uwb => run_uwb_group(scenario, &world, &hosted, &sessions, seed)?,
        _ => sessions
            .iter()
            .enumerate()
            .map(|(i, s)| run_ble_session(approach, scenario, &world, &hosted, s, seed, i as u32))
            .collect::<Result<Vec<_>, _>>()?,
    };
    for (i, r) in records.iter_mut().enumerate() {
        r.device = i as u32;
    }
    Ok(records)
}

fn run_ble_session(
    approach: Approach,
    scenario: &Scenario,
    world: &WorldModel,
    hosted: &Hosted,
    session: &DeviceSession,
    seed: u64,
    device: u32,
) -> Result<TrialRecord, SimError> {
    let mut record = TrialRecord::failed(approach, world, seed, device);
    let registry = world.ble_registry()?;
    let mut rssi_rng = stream(seed, Subsystem::Rssi, device);
    let mut optical_rng = stream(seed, Subsystem::Optical, device);
    let noise = &scenario.noise;

    // Scan until a room context exists.
    let mut decision = RoomDecision::default();
    let mut scan_index = 0u32;
    let (t_room, scan) = loop {
        let t = f64::from(scan_index) * scenario.ble_scan_interval;
        if t > scenario.max_session_time {
            return Ok(record);
        }
        let scan = sample_ble_scan(
            session,
            t,
            world,
            noise,
            &scenario.resolver.calibration,
            &mut rssi_rng,
        );
        let next = room::update(&scan, &registry, &decision, &scenario.resolver);
        if next.switched {
            record.room_switch_events.push(RoomSwitchEvent {
                timestamp: t,
                from: decision.current_room.clone(),
                to: next.current_room.clone().expect("switched into a room"),
            });
        }
        decision = next;
        if decision.current_room.is_some() {
            break (t, scan);
        }
        scan_index += 1;
    };
    let room_id = decision.current_room.expect("room decided");
    record.room = Some(room_id.clone());

    let anchors: Vec<(String, RigidPose)> = match approach {
        Approach::BleCloudAnchor => {
            let near = nearby_filter(&scan, &registry, world, scenario);
            hosted
                .store
                .list_anchors(&AnchorScope::Room(room_id.clone()), near.as_ref(), t_room)
                .into_iter()
                .map(|id| {
                    let rec = hosted.store.get_anchor(&id, t_room)?;
                    Ok((id, rec.pose()))
                })
                .collect::<Result<_, SimError>>()?
        }
        Approach::BleWorldmap => match hosted.store.download_map(&room_id) {
            Ok((bytes, _version)) => {
                let stored: Vec<MapAnchor> = serde_json::from_slice(&bytes).map_err(|e| {
                    SimError::ConfigInvalid(format!("stored map for {room_id} is corrupt: {e}"))
                })?;
                stored
                    .into_iter()
                    .map(|a| Ok((a.anchor_id, RigidPose::from_row_major(&a.pose)?)))
                    .collect::<Result<_, SimError>>()?
            }
            Err(crate::store::StoreError::NoMap(_)) => Vec::new(),
            Err(e) => return Err(e.into()),
        },
        Approach::Uwb => unreachable!("UWB sessions are run by run_uwb_group"),
    };
    if anchors.is_empty() {
        return Ok(record);
    }

    let OpticalOutcome::Success {
        position_offset,
        rotation_offset,
    } = attempt_optical_localization(approach, world, noise, &mut optical_rng)?
    else {
        return Ok(record);
    };

    for (i, (id, stored)) in anchors.iter().enumerate() {
        // A world map relocalizes once for all of its anchors; cloud anchors
        // resolve one by one.
        let (dp, dr) = if i == 0 || approach == Approach::BleWorldmap {
            (position_offset, rotation_offset)
        } else {
            draw_optical_error(noise, &mut optical_rng)
        };
        let estimate_world =
            RigidPose::from_parts(stored.rotation() * dr, stored.translation() + dp);
        let in_session = session.world_to_session(&estimate_world);
        let truth = hosted.truth.get(id).copied().unwrap_or(*stored);
        let (pos, rot) = score(&truth, &session.session_to_world(&in_session));
        record.position_errors.push(pos);
        record.orientation_errors.push(rot);
    }

    let c = world.environment_change;
    let mut delay = t_room
        + noise.optical_base_delay * (1.0 + c)
        + gauss(&mut optical_rng, noise.optical_delay_jitter).abs();
    if approach == Approach::BleWorldmap {
        delay += noise.map_transfer_delay;
    }
    record.success = true;
    record.localization_delay = Some(delay);
    Ok(record)
}

/// Nearby-anchor query centred on the nearest BLE beacon of the last scan.
fn nearby_filter(
    scan: &[room::BeaconAdvertisement],
    registry: &BeaconRegistry,
    world: &WorldModel,
    scenario: &Scenario,
) -> Option<NearFilter> {
    let (beacon_id, _, _) = nearest_beacon(scan, registry, &scenario.resolver.calibration)?;
    let p = world.beacon(beacon_id)?.position();
    Some(NearFilter {
        center: [p.x, p.y, p.z],
        radius: scenario.nearby_radius,
    })
}

struct UwbDevice<'a> {
    session: &'a DeviceSession,
    beacon: &'a Beacon,
    stream: UwbStream,
    stabilizer: Stabilizer,
    ranging_rng: SimRng,
    heading_rng: SimRng,
    done: bool,
    record: TrialRecord,
}

fn run_uwb_group(
    scenario: &Scenario,
    world: &WorldModel,
    hosted: &Hosted,
    sessions: &[DeviceSession],
    seed: u64,
) -> Result<Vec<TrialRecord>, SimError> {
    let noise = &scenario.noise;
    let mut slots = RangingSlots::new(scenario.ranging_capacity);
    let mut devices = Vec::with_capacity(sessions.len());
    for (i, session) in sessions.iter().enumerate() {
        let i = i as u32;
        let mut record = TrialRecord::failed(Approach::Uwb, world, seed, i);
        let launch = session.position_at(0.0);
        record.room = world.room_at(&launch).map(|r| r.id.clone());
        let beacon = world.uwb_beacon_for(&launch).ok_or_else(|| {
            SimError::ConfigInvalid("beacons: the uwb approach needs a uwb beacon".into())
        })?;
        let mut ranging_rng = stream(seed, Subsystem::Ranging, i);
        let stream = UwbStream::draw(noise, &mut ranging_rng);
        slots.acquire(&beacon.id, &session.device_id, 0.0);
        devices.push(UwbDevice {
            session,
            beacon,
            stream,
            stabilizer: Stabilizer::new(scenario.stabilizer)
                .map_err(|e| SimError::ConfigInvalid(format!("stabilizer: {e}")))?,
            ranging_rng,
            heading_rng: stream_for_heading(seed, i),
            done: false,
            record,
        });
    }

    let mut step: u64 = 0;
    loop {
        let t = step as f64 * scenario.dt;
        if t > scenario.max_session_time {
            break;
        }
        let mut sampled = vec![false; devices.len()];
        // Devices promoted during this step start ranging in the same step.
        loop {
            let mut progressed = false;
            for i in 0..devices.len() {
                let dev = &devices[i];
                if dev.done || sampled[i] {
                    continue;
                }
                let Some(start) = slots.granted_at(&dev.beacon.id, &dev.session.device_id) else {
                    continue;
                };
                sampled[i] = true;
                progressed = true;
                let dev = &mut devices[i];
                let sample = sample_uwb_position(
                    &slots,
                    dev.session,
                    dev.beacon,
                    &dev.stream,
                    t - start,
                    t,
                    noise,
                    &mut dev.ranging_rng,
                )?;
                let state = dev
                    .stabilizer
                    .push(sample)
                    .map_err(|e| SimError::ConfigInvalid(format!("ranging stream: {e}")))?;
                match state {
                    StabilizerState::Collecting => continue,
                    StabilizerState::Stable { position, .. } => {
                        finish_uwb_device(dev, world, hosted, noise, position, t, t - start)?;
                    }
                    StabilizerState::TimedOut => {}
                }
                dev.done = true;
                slots.release(&dev.beacon.id, &dev.session.device_id, t);
            }
            if !progressed {
                break;
            }
        }
        if devices.iter().all(|d| d.done) {
            break;
        }
        step += 1;
    }
    Ok(devices.into_iter().map(|d| d.record).collect())
}

fn stream_for_heading(seed: u64, device: u32) -> SimRng {
    stream(seed, Subsystem::Heading, device)
}

fn finish_uwb_device(
    dev: &mut UwbDevice<'_>,
    world: &WorldModel,
    hosted: &Hosted,
    noise: &NoiseConfig,
    stable_position: Vec3,
    t: f64,
    time_to_stable: f64,
) -> Result<(), SimError> {
    let heading = sample_heading(dev.session, t, world, noise, &mut dev.heading_rng);
    let camera = dev.session.camera_pose_session(t);
    let north = north_aligned_orientation(&camera, &heading)?;
    let reference = make_reference_pose(stable_position, north);

    let ids = hosted
        .store
        .list_anchors(&AnchorScope::Beacon(dev.beacon.id.clone()), None, t);
    for id in &ids {
        let rec = hosted.store.get_anchor(id, t)?;
        let rel = RelativeTransform::from_row_major(&rec.payload)?;
        let resolved = dev.session.session_to_world(&resolve_anchor(&reference, &rel));
        let truth = hosted.truth[id];
        let (pos, rot) = score(&truth, &resolved);
        dev.record.position_errors.push(pos);
        dev.record.orientation_errors.push(rot);
    }
    dev.record.reference_pose = Some(dev.session.session_to_world(&reference));
    dev.record.time_to_stable = Some(time_to_stable);
    if !ids.is_empty() {
        dev.record.success = true;
        dev.record.localization_delay = Some(t);
    }
    Ok(())
}

/// Runs a batch: `trials` sessions at each environment change level.
///
/// Sessions are grouped `devices` at a time into shared worlds; group `g`
/// uses seed `base_seed + g` at every level, so levels differ only in the
/// environment. Rows come back in (level, group, device) order no matter
/// how many worker threads ran them.
pub fn run_batch(
    approach: Approach,
    scenario: &Scenario,
    levels: &[f64],
    trials: u64,
    devices: u32,
    base_seed: u64,
) -> Result<Vec<TrialRecord>, SimError> {
    scenario.validate()?;
    if devices == 0 {
        return Err(SimError::ConfigInvalid("devices: must be >= 1".into()));
    }
    let per_group = u64::from(devices);
    let groups = trials.div_ceil(per_group);
    let mut jobs = Vec::new();
    for &level in levels {
        for g in 0..groups {
            let size = per_group.min(trials - g * per_group) as u32;
            jobs.push((level, g, size));
        }
    }

    let results: Vec<Mutex<Option<Result<Vec<TrialRecord>, SimError>>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(level, g, size)) = jobs.get(i) else {
                    break;
                };
                let mut sc = scenario.clone();
                sc.world.environment_change = level;
                let out = run_group(approach, &sc, base_seed.wrapping_add(g), size);
                *results[i].lock().unwrap() = Some(out);
            });
        }
    });

    let mut rows = Vec::new();
    for (slot, &(_, g, _)) in results.into_iter().zip(&jobs) {
        let group = slot.into_inner().unwrap().expect("every job ran")?;
        for mut r in group {
            r.trial = rows.len() as u64;
            r.group = g;
            rows.push(r);
        }
    }
    Ok(rows)
}

/// Walks one device along `trajectory`, scanning at the scenario's BLE
/// interval until `duration`, and returns every room switch.
pub fn simulate_room_walk(
    scenario: &Scenario,
    trajectory: Vec<Waypoint>,
    duration: f64,
    seed: u64,
) -> Result<Vec<RoomSwitchEvent>, SimError> {
    scenario.validate()?;
    let start = trajectory
        .first()
        .ok_or_else(|| SimError::ConfigInvalid("trajectory: empty".into()))?
        .position;
    let device = DeviceSession::new("walker", start, 0.0, crate::pose::Rot3::identity())
        .with_trajectory(trajectory);
    let registry = scenario.world.ble_registry()?;
    let mut rng = stream(seed, Subsystem::Rssi, 0);
    let mut state = RoomDecision::default();
    let mut events = Vec::new();
    let mut k = 0u32;
    loop {
        let t = f64::from(k) * scenario.ble_scan_interval;
        if t > duration {
            break;
        }
        let scan = sample_ble_scan(
            &device,
            t,
            &scenario.world,
            &scenario.noise,
            &scenario.resolver.calibration,
            &mut rng,
        );
        let next = room::update(&scan, &registry, &state, &scenario.resolver);
        if next.switched {
            events.push(RoomSwitchEvent {
                timestamp: t,
                from: state.current_room.clone(),
                to: next.current_room.clone().expect("switched into a room"),
            });
        }
        state = next;
        k += 1;
    }
    Ok(events)
}
