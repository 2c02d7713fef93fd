//! Standalone selection-policy cache.
//!
//! The cache alternates between two phases. While selecting, each newly seen
//! distinct packet claims the next free slot; when the last slot is claimed the
//! contents freeze for a fixed period and misses are only forwarded. When the
//! frozen timer fires the slots are released and a new selection cycle starts.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::model::PacketId;

/// Frozen period used when none is configured, in seconds.
pub const DEFAULT_FROZEN_PERIOD: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Selecting,
    Frozen,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelOutcome {
    Hit,
    /// Miss; a slot has been reserved and the returning data will be stored.
    MissAndFetch,
    /// Miss; the request is passed on and the data will not be stored.
    MissForward,
}

#[derive(Clone, Copy, Debug)]
struct Slot {
    packet: PacketId,
    filled: bool,
}

#[derive(Clone, Debug)]
pub struct SelectionCache {
    capacity: usize,
    phase: Phase,
    slots: Vec<Slot>,
    index: FxHashMap<PacketId, usize>,
    // What physically sits in each slot, kept across cycles so overwrites
    // can be counted as evictions.
    physical: Vec<Option<PacketId>>,
    frozen_period: f64,
    frozen_until: f64,
    writes: u64,
    evictions: u64,
    cycles: u64,
}

impl SelectionCache {
    pub fn new(capacity: usize, frozen_period: f64) -> Self {
        SelectionCache {
            capacity,
            phase: Phase::Selecting,
            slots: Vec::with_capacity(capacity),
            index: FxHashMap::with_capacity_and_hasher(capacity, Default::default()),
            physical: vec![None; capacity],
            frozen_period,
            frozen_until: f64::INFINITY,
            writes: 0,
            evictions: 0,
            cycles: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn frozen_until(&self) -> f64 {
        self.frozen_until
    }

    pub fn writes(&self) -> u64 {
        self.writes
    }

    pub fn evictions(&self) -> u64 {
        self.evictions
    }

    /// Number of completed freezes.
    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    pub fn is_resident(&self, p: &PacketId) -> bool {
        self.index.get(p).is_some_and(|&i| self.slots[i].filled)
    }

    /// Resident packets in selection order.
    pub fn resident(&self) -> Vec<PacketId> {
        self.slots.iter().filter(|s| s.filled).map(|s| s.packet).collect()
    }

    pub fn on_request(&mut self, p: PacketId, now: f64) -> SelOutcome {
        if let Some(&i) = self.index.get(&p) {
            // A reserved slot whose data has not arrived yet still misses.
            return if self.slots[i].filled { SelOutcome::Hit } else { SelOutcome::MissForward };
        }
        if self.phase == Phase::Frozen || self.slots.len() >= self.capacity {
            return SelOutcome::MissForward;
        }
        self.index.insert(p, self.slots.len());
        self.slots.push(Slot { packet: p, filled: false });
        if self.slots.len() == self.capacity {
            self.phase = Phase::Frozen;
            self.frozen_until = now + self.frozen_period;
            self.cycles += 1;
        }
        SelOutcome::MissAndFetch
    }

    /// Data for `p` passes the cache; stores it if a slot was reserved for it.
    pub fn on_data(&mut self, p: PacketId) -> bool {
        let Some(&i) = self.index.get(&p) else {
            return false;
        };
        if self.slots[i].filled {
            return false;
        }
        self.slots[i].filled = true;
        self.writes += 1;
        if let Some(old) = self.physical[i].replace(p) {
            if old != p {
                self.evictions += 1;
            }
        }
        true
    }

    /// Frozen timer. Returns whether the cache went back to selecting; a stale
    /// firing (not frozen, or before the deadline) is ignored.
    pub fn on_timer(&mut self, now: f64) -> bool {
        if self.phase != Phase::Frozen || now < self.frozen_until {
            return false;
        }
        self.phase = Phase::Selecting;
        self.frozen_until = f64::INFINITY;
        self.slots.clear();
        self.index.clear();
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use SelOutcome::*;

    fn p(c: u32) -> PacketId {
        PacketId::new(c, 1)
    }

    fn request_and_fill(cache: &mut SelectionCache, c: u32, now: f64) -> SelOutcome {
        let out = cache.on_request(p(c), now);
        if out == MissAndFetch {
            assert!(cache.on_data(p(c)));
        }
        out
    }

    #[test]
    fn first_c_distinct_are_selected() {
        let mut cache = SelectionCache::new(2, 60.0);
        let outcomes: Vec<_> = [5, 3, 5, 9, 3].iter().map(|&c| request_and_fill(&mut cache, c, 0.0)).collect();
        assert_eq!(outcomes, vec![MissAndFetch, MissAndFetch, Hit, MissForward, Hit]);
        assert_eq!(cache.phase(), Phase::Frozen);
        assert_eq!(cache.resident(), vec![p(5), p(3)]);
    }

    #[test]
    fn single_slot_repeats_hit() {
        let mut cache = SelectionCache::new(1, 60.0);
        assert_eq!(request_and_fill(&mut cache, 1, 0.0), MissAndFetch);
        assert_eq!(cache.phase(), Phase::Frozen);
        assert_eq!(request_and_fill(&mut cache, 1, 0.0), Hit);
        assert_eq!(request_and_fill(&mut cache, 1, 0.0), Hit);
    }

    #[test]
    fn frozen_contents_are_immutable() {
        let mut cache = SelectionCache::new(2, 60.0);
        request_and_fill(&mut cache, 1, 0.0);
        request_and_fill(&mut cache, 2, 0.0);
        for c in 3..20 {
            assert_eq!(cache.on_request(p(c), 1.0), MissForward);
            assert!(!cache.on_data(p(c)));
        }
        assert_eq!(cache.resident(), vec![p(1), p(2)]);
    }

    #[test]
    fn reserved_slot_misses_until_data_arrives() {
        let mut cache = SelectionCache::new(2, 60.0);
        assert_eq!(cache.on_request(p(1), 0.0), MissAndFetch);
        assert_eq!(cache.on_request(p(1), 0.1), MissForward);
        assert!(cache.on_data(p(1)));
        assert_eq!(cache.on_request(p(1), 0.2), Hit);
    }

    #[test]
    fn timer_resets_exactly_after_frozen_period() {
        let mut cache = SelectionCache::new(1, DEFAULT_FROZEN_PERIOD);
        request_and_fill(&mut cache, 4, 10.0);
        assert_eq!(cache.frozen_until(), 70.0);
        assert!(!cache.on_timer(69.999));
        assert!(cache.on_timer(70.0));
        assert_eq!(cache.phase(), Phase::Selecting);
        assert!(cache.resident().is_empty());
        // stale second firing
        assert!(!cache.on_timer(70.0));
        assert_eq!(cache.phase(), Phase::Selecting);
    }

    #[test]
    fn evictions_bounded_by_capacity_per_cycle() {
        let mut cache = SelectionCache::new(3, 1.0);
        let mut t = 0.0;
        for cycle in 0..5u32 {
            for c in 0..10 {
                request_and_fill(&mut cache, 1 + (c + cycle * 2) % 7, t);
                t += 0.01;
            }
            t += 1.0;
            cache.on_timer(t);
            assert!(cache.evictions() <= 3 * u64::from(cycle + 1));
        }
        assert!(cache.evictions() > 0);
    }

    #[test]
    fn zero_capacity_always_forwards() {
        let mut cache = SelectionCache::new(0, 60.0);
        assert_eq!(cache.on_request(p(1), 0.0), MissForward);
        assert!(!cache.on_data(p(1)));
    }
}
