//! Shared anchor and map persistence.
//!
//! Three kinds of records live here:
//! - room-scoped anchors with a time-to-live (hosted-anchor style),
//! - beacon-scoped anchors whose payload is a pose relative to the beacon,
//! - one opaque map blob per room, replaced with optimistic versioning.
//!
//! All TTL-dependent calls take the current time explicitly. Mutations are
//! serialized behind per-collection write locks; reads share the lock.

pub mod protocol;
pub mod server;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{RigidPose, Vec3};

/// One year.
pub const MAX_TTL_SECONDS: u64 = 31_536_000;
pub const MAX_MAP_BYTES: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorScope {
    Room(String),
    Beacon(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRecord {
    pub anchor_id: String,
    pub scope: AnchorScope,
    /// Row-major rotation followed by translation.
    pub payload: [f64; 12],
    pub approx_position: Option<[f64; 3]>,
    pub created_at: f64,
    pub ttl_seconds: u64,
}

impl AnchorRecord {
    pub fn expires_at(&self) -> f64 {
        self.created_at + self.ttl_seconds as f64
    }

    pub fn is_expired(&self, now: f64) -> bool {
        self.expires_at() <= now
    }

    pub fn pose(&self) -> RigidPose {
        RigidPose::from_row_major(&self.payload).expect("payload validated on insert")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapBlob {
    pub room_id: String,
    pub version: u64,
    #[serde(with = "base64_bytes")]
    pub bytes: Vec<u8>,
    pub updated_at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearFilter {
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StoreSnapshot {
    pub anchors: Vec<AnchorRecord>,
    pub maps: Vec<MapBlob>,
    pub versions: BTreeMap<String, u64>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("ttl {0}s exceeds the one-year cap")]
    TtlExceedsCap(u64),
    #[error("ttl must be positive")]
    InvalidTtl,
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("anchor {0} not found")]
    NotFound(String),
    #[error("anchor {0} has expired")]
    Expired(String),
    #[error("version conflict: current version is {current_version}")]
    VersionConflict { current_version: u64 },
    #[error("no map stored for room {0}")]
    NoMap(String),
    #[error("map of {size} bytes exceeds the {MAX_MAP_BYTES} byte cap")]
    MapTooLarge { size: usize },
    #[error("snapshot io: {0}")]
    Io(#[from] io::Error),
    #[error("snapshot format: {0}")]
    Format(#[from] serde_json::Error),
}

impl StoreError {
    /// Stable code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::TtlExceedsCap(_) => "ttl_exceeds_cap",
            StoreError::InvalidTtl => "invalid_ttl",
            StoreError::InvalidPayload(_) => "invalid_payload",
            StoreError::NotFound(_) => "not_found",
            StoreError::Expired(_) => "expired",
            StoreError::VersionConflict { .. } => "version_conflict",
            StoreError::NoMap(_) => "no_map",
            StoreError::MapTooLarge { .. } => "map_too_large",
            StoreError::Io(_) => "io",
            StoreError::Format(_) => "format",
        }
    }
}

fn check_ttl(ttl_seconds: u64) -> Result<(), StoreError> {
    if ttl_seconds == 0 {
        Err(StoreError::InvalidTtl)
    } else if ttl_seconds > MAX_TTL_SECONDS {
        Err(StoreError::TtlExceedsCap(ttl_seconds))
    } else {
        Ok(())
    }
}

fn order_key(r: &AnchorRecord) -> (f64, &str) {
    (r.created_at, r.anchor_id.as_str())
}

pub struct AnchorStore {
    anchors: RwLock<BTreeMap<String, AnchorRecord>>,
    maps: RwLock<BTreeMap<String, MapBlob>>,
    ids: Mutex<ChaCha8Rng>,
}

impl Default for AnchorStore {
    fn default() -> Self {
        Self::new()
    }
}

impl AnchorStore {
    pub fn new() -> Self {
        Self::with_id_rng(ChaCha8Rng::from_os_rng())
    }

    /// Store whose anchor ids are drawn from a seeded generator.
    pub fn with_seed(seed: u64) -> Self {
        Self::with_id_rng(ChaCha8Rng::seed_from_u64(seed))
    }

    fn with_id_rng(rng: ChaCha8Rng) -> Self {
        Self {
            anchors: RwLock::new(BTreeMap::new()),
            maps: RwLock::new(BTreeMap::new()),
            ids: Mutex::new(rng),
        }
    }

    pub fn host_anchor(
        &self,
        scope: AnchorScope,
        payload: &[f64],
        approx_position: Option<Vec3>,
        ttl_seconds: u64,
        now: f64,
    ) -> Result<String, StoreError> {
        check_ttl(ttl_seconds)?;
        let pose = RigidPose::from_row_major(payload)
            .map_err(|e| StoreError::InvalidPayload(e.to_string()))?;
        if let Some(p) = &approx_position {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(StoreError::InvalidPayload(
                    "approx_position must be finite".into(),
                ));
            }
        }
        let mut anchors = self.anchors.write().unwrap();
        let anchor_id = loop {
            let id = format!("{:032x}", self.ids.lock().unwrap().random::<u128>());
            if !anchors.contains_key(&id) {
                break id;
            }
        };
        anchors.insert(
            anchor_id.clone(),
            AnchorRecord {
                anchor_id: anchor_id.clone(),
                scope,
                payload: pose.to_row_major(),
                approx_position: approx_position.map(|p| [p.x, p.y, p.z]),
                created_at: now,
                ttl_seconds,
            },
        );
        Ok(anchor_id)
    }

    pub fn get_anchor(&self, anchor_id: &str, now: f64) -> Result<AnchorRecord, StoreError> {
        let anchors = self.anchors.read().unwrap();
        let record = anchors
            .get(anchor_id)
            .ok_or_else(|| StoreError::NotFound(anchor_id.to_owned()))?;
        if record.is_expired(now) {
            return Err(StoreError::Expired(anchor_id.to_owned()));
        }
        Ok(record.clone())
    }

    /// Live anchor ids in `scope`, oldest first (ties by id).
    pub fn list_anchors(
        &self,
        scope: &AnchorScope,
        near: Option<&NearFilter>,
        now: f64,
    ) -> Vec<String> {
        let anchors = self.anchors.read().unwrap();
        let mut hits: Vec<&AnchorRecord> = anchors
            .values()
            .filter(|r| r.scope == *scope && !r.is_expired(now))
            .filter(|r| match near {
                None => true,
                Some(f) => r.approx_position.is_some_and(|p| {
                    (Vec3::from(p) - Vec3::from(f.center)).norm() <= f.radius
                }),
            })
            .collect();
        hits.sort_by(|a, b| {
            let (ta, ia) = order_key(a);
            let (tb, ib) = order_key(b);
            ta.total_cmp(&tb).then_with(|| ia.cmp(ib))
        });
        hits.into_iter().map(|r| r.anchor_id.clone()).collect()
    }

    pub fn extend_ttl(
        &self,
        anchor_id: &str,
        new_ttl_seconds: u64,
        now: f64,
    ) -> Result<(), StoreError> {
        let mut anchors = self.anchors.write().unwrap();
        let record = anchors
            .get_mut(anchor_id)
            .ok_or_else(|| StoreError::NotFound(anchor_id.to_owned()))?;
        if record.is_expired(now) {
            return Err(StoreError::Expired(anchor_id.to_owned()));
        }
        check_ttl(new_ttl_seconds)?;
        record.ttl_seconds = new_ttl_seconds;
        Ok(())
    }

    pub fn purge_expired(&self, now: f64) -> usize {
        let mut anchors = self.anchors.write().unwrap();
        let before = anchors.len();
        anchors.retain(|_, r| !r.is_expired(now));
        before - anchors.len()
    }

    /// Replaces the room's map if `expected_version` is still current
    /// (0 when the room has no map yet) and returns the new version.
    pub fn upload_map(
        &self,
        room_id: &str,
        bytes: Vec<u8>,
        expected_version: u64,
        now: f64,
    ) -> Result<u64, StoreError> {
        if bytes.len() > MAX_MAP_BYTES {
            return Err(StoreError::MapTooLarge { size: bytes.len() });
        }
        let mut maps = self.maps.write().unwrap();
        let current_version = maps.get(room_id).map_or(0, |m| m.version);
        if current_version != expected_version {
            return Err(StoreError::VersionConflict { current_version });
        }
        let version = current_version + 1;
        maps.insert(
            room_id.to_owned(),
            MapBlob {
                room_id: room_id.to_owned(),
                version,
                bytes,
                updated_at: now,
            },
        );
        Ok(version)
    }

    pub fn download_map(&self, room_id: &str) -> Result<(Vec<u8>, u64), StoreError> {
        let maps = self.maps.read().unwrap();
        maps.get(room_id)
            .map(|m| (m.bytes.clone(), m.version))
            .ok_or_else(|| StoreError::NoMap(room_id.to_owned()))
    }

    pub fn map_version(&self, room_id: &str) -> u64 {
        self.maps.read().unwrap().get(room_id).map_or(0, |m| m.version)
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        let anchors = self.anchors.read().unwrap();
        let maps = self.maps.read().unwrap();
        StoreSnapshot {
            anchors: anchors.values().cloned().collect(),
            maps: maps.values().cloned().collect(),
            versions: maps
                .iter()
                .map(|(room, m)| (room.clone(), m.version))
                .collect(),
        }
    }

    pub fn from_snapshot(snapshot: StoreSnapshot) -> Result<Self, StoreError> {
        let store = Self::new();
        {
            let mut anchors = store.anchors.write().unwrap();
            for record in snapshot.anchors {
                RigidPose::from_row_major(&record.payload)
                    .map_err(|e| StoreError::InvalidPayload(e.to_string()))?;
                anchors.insert(record.anchor_id.clone(), record);
            }
            let mut maps = store.maps.write().unwrap();
            for blob in snapshot.maps {
                maps.insert(blob.room_id.clone(), blob);
            }
        }
        Ok(store)
    }

    /// Writes the snapshot to a sibling temp file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        static COUNTER: AtomicU64 = AtomicU64::new(0);
        let json = serde_json::to_vec_pretty(&self.snapshot())?;
        let n = COUNTER.fetch_add(1, Ordering::Relaxed);
        let tmp = path.with_extension(format!("tmp-{}-{n}", std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&json)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let bytes = fs::read(path)?;
        Self::from_snapshot(serde_json::from_slice(&bytes)?)
    }
}

pub(crate) mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}
