//! Coordinated selection cache.
//!
//! Caches on a route coordinate only through the nomination field (NF) that
//! requests and data packets carry. A cache that wants a packet nominates a
//! passing unnominated request (NF −1 → 0); every router further up the route
//! counts itself into the NF, the serving node copies it into the data packet,
//! and the data counts back down so that exactly the nominating router sees
//! NF 0 and stores it. A router that already holds a protected copy and sees a
//! nominated request has detected a collision with a closer cache: it clears
//! the slot's protection bit and will reuse the slot.
//!
//! Slot bookkeeping:
//!
//! * `US`: number of slots with the protection bit clear; always equal to the
//!   count of unprotected slots.
//! * `RS`: selections still owed in the current selecting phase. While
//!   selecting this equals the number of unprotected slots at or after the
//!   pointer; collisions behind the pointer are left for the frozen phase.
//! * `NW`: nominations whose data has not come back yet, capped by `NW_th`.
//! * pointer: next write target while selecting; it only moves forward,
//!   skipping protected slots, and parks at `capacity` once nothing is left
//!   ahead of it. Frozen-phase writes go to the lowest unprotected slot.
//!
//! Slot indices are 0-based.

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DataPacket, PacketId, RequestPacket, NOT_NOMINATED};
use crate::selection::{Phase, DEFAULT_FROZEN_PERIOD};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordConfig {
    pub nw_threshold: u32,
    pub frozen_period: f64,
    pub nw_timeout: f64,
}

impl Default for CoordConfig {
    fn default() -> Self {
        CoordConfig { nw_threshold: 1, frozen_period: DEFAULT_FROZEN_PERIOD, nw_timeout: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CoordSlot {
    pub packet: Option<PacketId>,
    pub pb: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoordAction {
    Serve(DataPacket),
    Forward(RequestPacket),
}

/// What a request did to the cache, for accounting and invariant checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RequestEffect {
    ProtectedHit,
    /// Nominated request hit a protected slot; the slot lost its protection.
    Collision {
        slot: usize,
    },
    /// Unnominated request hit an unprotected slot, which is protected again.
    Reselected {
        slot: usize,
    },
    UnprotectedHit,
    Nominated,
    /// Miss on an already nominated request; NF incremented.
    Counted,
    Passed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataEffect {
    Written { slot: usize, evicted: Option<PacketId> },
    Counted,
    Passed,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordStats {
    pub hits: u64,
    pub misses: u64,
    pub nominations: u64,
    pub writes: u64,
    pub evictions: u64,
    pub collisions: u64,
    pub reselections: u64,
    pub freezes: u64,
    pub nw_timeouts: u64,
}

#[derive(Clone, Debug)]
pub struct CoordCache {
    router: u32,
    config: CoordConfig,
    slots: Vec<CoordSlot>,
    index: FxHashMap<PacketId, usize>,
    pending: FxHashSet<PacketId>,
    phase: Phase,
    us: usize,
    // maintained by `set_pb` alone, audited against `us`
    clear_bits: usize,
    rs: usize,
    nw: u32,
    pointer: usize,
    frozen_until: f64,
    nw_deadline: Option<f64>,
    timer_requests: TimerRequests,
    stats: CoordStats,
}

/// Timers the engine has to schedule after the last handler call.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TimerRequests {
    pub frozen: Option<f64>,
    pub nw: Option<f64>,
}

impl CoordCache {
    /// Cold cache: selecting, every slot empty and unprotected.
    pub fn new(capacity: usize, router: u32, config: CoordConfig) -> Self {
        assert!(config.nw_threshold >= 1, "NW threshold must be at least 1");
        CoordCache {
            router,
            config,
            slots: vec![CoordSlot::default(); capacity],
            index: FxHashMap::with_capacity_and_hasher(capacity, Default::default()),
            pending: FxHashSet::default(),
            phase: Phase::Selecting,
            us: capacity,
            clear_bits: capacity,
            rs: capacity,
            nw: 0,
            pointer: 0,
            frozen_until: f64::INFINITY,
            nw_deadline: None,
            timer_requests: TimerRequests::default(),
            stats: CoordStats::default(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }
    pub fn phase(&self) -> Phase {
        self.phase
    }
    pub fn unprotected(&self) -> usize {
        self.us
    }
    pub fn remaining_selections(&self) -> usize {
        self.rs
    }
    pub fn nomination_window(&self) -> u32 {
        self.nw
    }
    pub fn pointer(&self) -> usize {
        self.pointer
    }
    pub fn frozen_until(&self) -> f64 {
        self.frozen_until
    }
    pub fn nw_deadline(&self) -> Option<f64> {
        self.nw_deadline
    }
    pub fn slots(&self) -> &[CoordSlot] {
        &self.slots
    }
    pub fn stats(&self) -> &CoordStats {
        &self.stats
    }
    pub fn config(&self) -> &CoordConfig {
        &self.config
    }

    pub fn is_resident(&self, p: &PacketId) -> bool {
        self.index.contains_key(p)
    }

    pub fn take_timer_requests(&mut self) -> TimerRequests {
        std::mem::take(&mut self.timer_requests)
    }

    fn violation(&self, now: f64, message: impl Into<String>) -> Error {
        Error::Protocol { router: self.router, time: now, message: message.into() }
    }

    /// Whether a miss with NF −1 may be nominated right now.
    fn may_select(&self) -> bool {
        let th = self.config.nw_threshold;
        match self.phase {
            Phase::Selecting => (self.nw as usize) < self.rs.min(th as usize),
            Phase::Frozen => self.us > self.nw as usize && self.nw < th,
        }
    }

    fn set_pb(&mut self, i: usize, pb: bool) {
        if self.slots[i].pb != pb {
            if pb {
                self.clear_bits -= 1;
            } else {
                self.clear_bits += 1;
            }
            self.slots[i].pb = pb;
        }
    }

    fn advance_pointer(&mut self) {
        let c = self.slots.len();
        let mut i = self.pointer + 1;
        while i < c && self.slots[i].pb {
            i += 1;
        }
        self.pointer = i.min(c);
    }

    fn freeze(&mut self, now: f64) {
        self.phase = Phase::Frozen;
        self.frozen_until = now + self.config.frozen_period;
        self.timer_requests.frozen = Some(self.frozen_until);
        self.stats.freezes += 1;
    }

    fn arm_nw_timer(&mut self, now: f64) {
        if self.nw > 0 {
            let d = now + self.config.nw_timeout;
            self.nw_deadline = Some(d);
            self.timer_requests.nw = Some(d);
        } else {
            self.nw_deadline = None;
        }
    }

    pub fn on_request(&mut self, mut req: RequestPacket, now: f64) -> (CoordAction, RequestEffect) {
        if let Some(&i) = self.index.get(&req.packet) {
            self.stats.hits += 1;
            let nominated = req.is_nominated();
            let effect = match (self.slots[i].pb, nominated) {
                (true, false) => RequestEffect::ProtectedHit,
                (true, true) => {
                    // A closer cache wants this packet; it keeps priority.
                    self.set_pb(i, false);
                    self.us += 1;
                    if self.phase == Phase::Selecting && i > self.pointer {
                        self.rs += 1;
                    }
                    self.stats.collisions += 1;
                    RequestEffect::Collision { slot: i }
                }
                // Keep one unprotected slot per outstanding nomination.
                (false, false) if self.us > self.nw as usize => {
                    self.set_pb(i, true);
                    self.us -= 1;
                    if self.phase == Phase::Selecting && i >= self.pointer {
                        self.rs -= 1;
                    }
                    if i == self.pointer {
                        self.advance_pointer();
                    }
                    self.stats.reselections += 1;
                    if self.phase == Phase::Selecting && self.rs == 0 {
                        self.freeze(now);
                    }
                    RequestEffect::Reselected { slot: i }
                }
                (false, _) => RequestEffect::UnprotectedHit,
            };
            let mut data = DataPacket::answering(&req);
            if matches!(effect, RequestEffect::Reselected { .. } | RequestEffect::ProtectedHit) {
                data.nf = NOT_NOMINATED;
            }
            return (CoordAction::Serve(data), effect);
        }

        self.stats.misses += 1;
        let effect = if req.is_nominated() {
            req.nf += 1;
            RequestEffect::Counted
        } else if self.may_select() && !self.pending.contains(&req.packet) {
            req.nf = 0;
            self.nw += 1;
            self.pending.insert(req.packet);
            self.stats.nominations += 1;
            self.arm_nw_timer(now);
            RequestEffect::Nominated
        } else {
            RequestEffect::Passed
        };
        (CoordAction::Forward(req), effect)
    }

    pub fn on_data(&mut self, mut data: DataPacket, now: f64) -> Result<(DataPacket, DataEffect)> {
        match data.nf {
            nf if nf < NOT_NOMINATED => Err(self.violation(now, format!("data NF {nf} below -1"))),
            NOT_NOMINATED => Ok((data, DataEffect::Passed)),
            nf if nf > 0 => {
                data.nf -= 1;
                Ok((data, DataEffect::Counted))
            }
            _ => {
                let (slot, evicted) = self.write(data.packet, now)?;
                data.nf = NOT_NOMINATED;
                Ok((data, DataEffect::Written { slot, evicted }))
            }
        }
    }

    fn write(&mut self, p: PacketId, now: f64) -> Result<(usize, Option<PacketId>)> {
        if self.index.contains_key(&p) {
            return Err(self.violation(now, format!("selected packet {p} already resident")));
        }
        let c = self.slots.len();
        let at_pointer = self.pointer < c;
        let target = if at_pointer {
            self.pointer
        } else {
            match self.slots.iter().position(|s| !s.pb) {
                Some(i) => i,
                None => {
                    return Err(self.violation(now, format!("selected packet {p} arrived with every slot protected")))
                }
            }
        };
        let evicted = self.slots[target].packet.replace(p);
        if let Some(old) = evicted {
            self.index.remove(&old);
            self.stats.evictions += 1;
        }
        self.set_pb(target, true);
        self.index.insert(p, target);
        self.pending.remove(&p);
        self.us -= 1;
        if at_pointer {
            self.rs -= 1;
            self.advance_pointer();
        }
        self.nw = self.nw.saturating_sub(1);
        self.arm_nw_timer(now);
        self.stats.writes += 1;
        if self.phase == Phase::Selecting && self.rs == 0 {
            self.freeze(now);
        }
        Ok((target, evicted))
    }

    /// Frozen timer. Every slot becomes stale but stays resident. Returns
    /// whether the timer was live.
    pub fn on_frozen_timer(&mut self, now: f64) -> bool {
        if self.phase != Phase::Frozen || now < self.frozen_until {
            return false;
        }
        for s in &mut self.slots {
            s.pb = false;
        }
        let c = self.slots.len();
        self.clear_bits = c;
        self.phase = Phase::Selecting;
        self.frozen_until = f64::INFINITY;
        self.us = c;
        self.rs = c;
        self.pointer = 0;
        true
    }

    /// Nomination-window timer: halves NW when nothing came back in time.
    pub fn on_nw_timer(&mut self, now: f64) -> bool {
        match self.nw_deadline {
            Some(d) if now >= d && self.nw > 0 => {
                self.nw /= 2;
                // The halved nominations are treated as lost.
                self.pending.clear();
                self.stats.nw_timeouts += 1;
                self.arm_nw_timer(now);
                true
            }
            _ => false,
        }
    }

    /// Constant-time subset of [`Self::check_invariants`].
    pub fn check_counts(&self, now: f64) -> Result<()> {
        let c = self.slots.len();
        if self.clear_bits != self.us {
            return Err(self.violation(now, format!("US={} but {} unprotected slots", self.us, self.clear_bits)));
        }
        if self.rs > c || self.pointer > c || self.rs > self.us {
            return Err(
                self.violation(now, format!("RS={} US={} pointer={} capacity={c}", self.rs, self.us, self.pointer))
            );
        }
        if self.pointer < c && self.slots[self.pointer].pb {
            return Err(self.violation(now, format!("pointer {} at protected slot", self.pointer)));
        }
        if self.nw > self.config.nw_threshold || self.nw as usize > self.us {
            return Err(
                self.violation(now, format!("NW={} with US={} NW_th={}", self.nw, self.us, self.config.nw_threshold))
            );
        }
        Ok(())
    }

    /// Full audit of the slot bookkeeping.
    pub fn check_invariants(&self, now: f64) -> Result<()> {
        let c = self.slots.len();
        let unprotected = self.slots.iter().filter(|s| !s.pb).count();
        if unprotected != self.us {
            return Err(self.violation(now, format!("US={} but {unprotected} unprotected slots", self.us)));
        }
        if self.slots.iter().any(|s| s.pb && s.packet.is_none()) {
            return Err(self.violation(now, "protected empty slot"));
        }
        if self.rs > c || self.pointer > c {
            return Err(self.violation(now, format!("RS={} pointer={} capacity={c}", self.rs, self.pointer)));
        }
        if self.pointer < c && self.slots[self.pointer].pb {
            return Err(self.violation(now, format!("pointer {} at protected slot", self.pointer)));
        }
        if self.phase == Phase::Selecting {
            let ahead = self.slots[self.pointer.min(c)..].iter().filter(|s| !s.pb).count();
            if ahead != self.rs {
                return Err(self.violation(now, format!("RS={} but {ahead} unprotected ahead of pointer", self.rs)));
            }
        }
        if self.nw > self.config.nw_threshold {
            return Err(self.violation(now, format!("NW={} above threshold", self.nw)));
        }
        if self.nw as usize > self.us {
            return Err(self.violation(now, format!("NW={} exceeds US={}", self.nw, self.us)));
        }
        Ok(())
    }
}
