//! Concurrent ranging capacity of UWB beacons.
//!
//! A beacon ranges with a bounded number of devices at once; the rest wait
//! in FIFO order and are promoted as slots free up.

use std::collections::{BTreeMap, VecDeque};

/// Concurrent ranging sessions one beacon supports.
pub const UWB_CONCURRENT_LIMIT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotGrant {
    Granted,
    /// 1-based position in the beacon's wait queue.
    Queued(usize),
}

#[derive(Debug, Clone, Default)]
struct BeaconSlots {
    active: Vec<(String, f64)>,
    waiting: VecDeque<String>,
}

#[derive(Debug, Clone)]
pub struct RangingSlots {
    capacity: usize,
    beacons: BTreeMap<String, BeaconSlots>,
}

impl Default for RangingSlots {
    fn default() -> Self {
        Self::new(UWB_CONCURRENT_LIMIT)
    }
}

impl RangingSlots {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "ranging capacity must be positive");
        Self {
            capacity,
            beacons: BTreeMap::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Grants a slot or enqueues the device. Repeated calls report the
    /// device's current standing without changing it.
    pub fn acquire(&mut self, beacon_id: &str, device_id: &str, now: f64) -> SlotGrant {
        let slots = self.beacons.entry(beacon_id.to_owned()).or_default();
        if slots.active.iter().any(|(d, _)| d == device_id) {
            return SlotGrant::Granted;
        }
        if let Some(i) = slots.waiting.iter().position(|d| d == device_id) {
            return SlotGrant::Queued(i + 1);
        }
        if slots.active.len() < self.capacity && slots.waiting.is_empty() {
            slots.active.push((device_id.to_owned(), now));
            SlotGrant::Granted
        } else {
            slots.waiting.push_back(device_id.to_owned());
            SlotGrant::Queued(slots.waiting.len())
        }
    }

    /// Frees the device's slot (or leaves the queue). Returns the device
    /// promoted into the freed slot, if any.
    pub fn release(&mut self, beacon_id: &str, device_id: &str, now: f64) -> Option<String> {
        let slots = self.beacons.get_mut(beacon_id)?;
        if let Some(i) = slots.waiting.iter().position(|d| d == device_id) {
            slots.waiting.remove(i);
            return None;
        }
        let i = slots.active.iter().position(|(d, _)| d == device_id)?;
        slots.active.remove(i);
        let next = slots.waiting.pop_front()?;
        slots.active.push((next.clone(), now));
        Some(next)
    }

    pub fn holds(&self, beacon_id: &str, device_id: &str) -> bool {
        self.granted_at(beacon_id, device_id).is_some()
    }

    pub fn granted_at(&self, beacon_id: &str, device_id: &str) -> Option<f64> {
        self.beacons
            .get(beacon_id)?
            .active
            .iter()
            .find(|(d, _)| d == device_id)
            .map(|&(_, t)| t)
    }

    pub fn active_count(&self, beacon_id: &str) -> usize {
        self.beacons.get(beacon_id).map_or(0, |s| s.active.len())
    }

    pub fn queue_len(&self, beacon_id: &str) -> usize {
        self.beacons.get(beacon_id).map_or(0, |s| s.waiting.len())
    }
}
