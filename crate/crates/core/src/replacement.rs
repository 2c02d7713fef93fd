//! Classical replacement-policy caches: LRU, FIFO and uniform random.
//!
//! All three write on every miss the caller reports via [`ReplacementCache::insert`];
//! they differ only in victim choice and in whether a hit refreshes recency.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{derive_seed, Lookup, PacketId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Policy {
    Lru,
    Fifo,
    Rnd,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Lru, Policy::Fifo, Policy::Rnd];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Lru => "LRU",
            Policy::Fifo => "FIFO",
            Policy::Rnd => "RND",
        }
    }
}

const NIL: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct Node {
    packet: PacketId,
    prev: u32,
    next: u32,
}

/// Doubly linked recency list over a slab; head is most recently used.
#[derive(Clone, Debug, Default)]
struct RecencyList {
    nodes: Vec<Node>,
    index: FxHashMap<PacketId, u32>,
    head: u32,
    tail: u32,
}

impl RecencyList {
    fn new(capacity: usize) -> Self {
        RecencyList {
            nodes: Vec::with_capacity(capacity),
            index: FxHashMap::with_capacity_and_hasher(capacity, Default::default()),
            head: NIL,
            tail: NIL,
        }
    }

    fn unlink(&mut self, i: u32) {
        let (prev, next) = {
            let n = &self.nodes[i as usize];
            (n.prev, n.next)
        };
        if prev != NIL {
            self.nodes[prev as usize].next = next;
        } else {
            self.head = next;
        }
        if next != NIL {
            self.nodes[next as usize].prev = prev;
        } else {
            self.tail = prev;
        }
    }

    fn push_front(&mut self, i: u32) {
        self.nodes[i as usize].prev = NIL;
        self.nodes[i as usize].next = self.head;
        if self.head != NIL {
            self.nodes[self.head as usize].prev = i;
        }
        self.head = i;
        if self.tail == NIL {
            self.tail = i;
        }
    }

    fn touch(&mut self, p: &PacketId) -> bool {
        match self.index.get(p) {
            Some(&i) => {
                if self.head != i {
                    self.unlink(i);
                    self.push_front(i);
                }
                true
            }
            None => false,
        }
    }

    /// Inserts at the front; when `full`, recycles the tail node and returns its packet.
    fn insert(&mut self, p: PacketId, full: bool) -> Option<PacketId> {
        if full {
            let t = self.tail;
            self.unlink(t);
            let victim = std::mem::replace(&mut self.nodes[t as usize].packet, p);
            self.index.remove(&victim);
            self.index.insert(p, t);
            self.push_front(t);
            Some(victim)
        } else {
            let i = self.nodes.len() as u32;
            self.nodes.push(Node { packet: p, prev: NIL, next: NIL });
            self.index.insert(p, i);
            self.push_front(i);
            None
        }
    }

    fn iter(&self) -> impl Iterator<Item = PacketId> + '_ {
        let mut cur = self.head;
        std::iter::from_fn(move || {
            if cur == NIL {
                return None;
            }
            let n = &self.nodes[cur as usize];
            cur = n.next;
            Some(n.packet)
        })
    }
}

#[derive(Clone, Debug)]
enum Store {
    Lru(RecencyList),
    Fifo { queue: VecDeque<PacketId>, members: FxHashSet<PacketId> },
    Rnd { slots: Vec<PacketId>, index: FxHashMap<PacketId, usize>, rng: ChaCha8Rng },
}

#[derive(Clone, Debug)]
pub struct ReplacementCache {
    policy: Policy,
    capacity: usize,
    router: u32,
    store: Store,
    writes: u64,
    evictions: u64,
}

impl ReplacementCache {
    /// `seed` is the run seed; random victim choice is drawn from a stream
    /// derived from `(seed, router)` so caches in one run are decorrelated.
    pub fn new(policy: Policy, capacity: usize, router: u32, seed: u64) -> Self {
        let store = match policy {
            Policy::Lru => Store::Lru(RecencyList::new(capacity)),
            Policy::Fifo => Store::Fifo {
                queue: VecDeque::with_capacity(capacity),
                members: FxHashSet::with_capacity_and_hasher(capacity, Default::default()),
            },
            Policy::Rnd => Store::Rnd {
                slots: Vec::with_capacity(capacity),
                index: FxHashMap::with_capacity_and_hasher(capacity, Default::default()),
                rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::from(router))),
            },
        };
        ReplacementCache { policy, capacity, router, store, writes: 0, evictions: 0 }
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        match &self.store {
            Store::Lru(l) => l.index.len(),
            Store::Fifo { members, .. } => members.len(),
            Store::Rnd { slots, .. } => slots.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn writes(&self) -> u64 {
        self.writes
    }

    pub fn evictions(&self) -> u64 {
        self.evictions
    }

    pub fn contains(&self, p: &PacketId) -> bool {
        match &self.store {
            Store::Lru(l) => l.index.contains_key(p),
            Store::Fifo { members, .. } => members.contains(p),
            Store::Rnd { index, .. } => index.contains_key(p),
        }
    }

    /// Hit iff `p` is resident. Only LRU reorders on a hit.
    pub fn lookup(&mut self, p: &PacketId) -> Lookup {
        let hit = match &mut self.store {
            Store::Lru(l) => l.touch(p),
            Store::Fifo { members, .. } => members.contains(p),
            Store::Rnd { index, .. } => index.contains_key(p),
        };
        if hit {
            Lookup::Hit
        } else {
            Lookup::Miss
        }
    }

    /// Stores `p` and returns the evicted victim, if the cache was full.
    pub fn insert(&mut self, p: PacketId) -> Result<Option<PacketId>> {
        if self.capacity == 0 {
            return Ok(None);
        }
        if self.contains(&p) {
            return Err(Error::AlreadyResident(p, self.router));
        }
        let full = self.len() == self.capacity;
        let victim = match &mut self.store {
            Store::Lru(l) => l.insert(p, full),
            Store::Fifo { queue, members } => {
                let victim = if full {
                    let v = queue.pop_front().expect("full queue");
                    members.remove(&v);
                    Some(v)
                } else {
                    None
                };
                queue.push_back(p);
                members.insert(p);
                victim
            }
            Store::Rnd { slots, index, rng } => {
                if full {
                    let at = rng.random_range(0..slots.len());
                    let v = std::mem::replace(&mut slots[at], p);
                    index.remove(&v);
                    index.insert(p, at);
                    Some(v)
                } else {
                    index.insert(p, slots.len());
                    slots.push(p);
                    None
                }
            }
        };
        self.writes += 1;
        if victim.is_some() {
            self.evictions += 1;
        }
        Ok(victim)
    }

    /// Resident packets; for LRU in recency order (most recent first),
    /// for FIFO in insertion order (oldest first).
    pub fn resident(&self) -> Vec<PacketId> {
        match &self.store {
            Store::Lru(l) => l.iter().collect(),
            Store::Fifo { queue, .. } => queue.iter().copied().collect(),
            Store::Rnd { slots, .. } => slots.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: u32) -> PacketId {
        PacketId::new(c, 1)
    }

    #[test]
    fn lru_hit_refreshes_recency() {
        let mut c = ReplacementCache::new(Policy::Lru, 2, 0, 1);
        c.insert(p(1)).unwrap();
        c.insert(p(2)).unwrap();
        assert_eq!(c.lookup(&p(1)), Lookup::Hit);
        assert_eq!(c.insert(p(3)).unwrap(), Some(p(2)));
        assert_eq!(c.resident(), vec![p(3), p(1)]);
    }

    #[test]
    fn fifo_ignores_hits() {
        let mut c = ReplacementCache::new(Policy::Fifo, 2, 0, 1);
        c.insert(p(1)).unwrap();
        c.insert(p(2)).unwrap();
        assert_eq!(c.lookup(&p(1)), Lookup::Hit);
        assert_eq!(c.insert(p(3)).unwrap(), Some(p(1)));
    }

    #[test]
    fn fifo_evicts_oldest() {
        let mut c = ReplacementCache::new(Policy::Fifo, 3, 0, 1);
        for i in 1..=3 {
            assert_eq!(c.insert(p(i)).unwrap(), None);
        }
        assert_eq!(c.insert(p(4)).unwrap(), Some(p(1)));
        assert_eq!(c.evictions(), 1);
        assert_eq!(c.writes(), 4);
    }

    #[test]
    fn zero_capacity_never_stores() {
        for policy in Policy::ALL {
            let mut c = ReplacementCache::new(policy, 0, 0, 1);
            assert_eq!(c.lookup(&p(1)), Lookup::Miss);
            assert_eq!(c.insert(p(1)).unwrap(), None);
            assert_eq!(c.lookup(&p(1)), Lookup::Miss);
            assert!(c.is_empty());
        }
    }

    #[test]
    fn single_slot_lru() {
        let mut c = ReplacementCache::new(Policy::Lru, 1, 0, 1);
        c.insert(p(7)).unwrap();
        assert_eq!(c.insert(p(9)).unwrap(), Some(p(7)));
    }

    #[test]
    fn inserting_resident_packet_is_an_error() {
        for policy in Policy::ALL {
            let mut c = ReplacementCache::new(policy, 2, 4, 1);
            c.insert(p(1)).unwrap();
            assert!(matches!(c.insert(p(1)), Err(Error::AlreadyResident(_, 4))));
        }
    }

    #[test]
    fn rnd_victim_is_uniform() {
        let trials = 10_000;
        let mut first = 0;
        for t in 0..trials {
            let mut c = ReplacementCache::new(Policy::Rnd, 2, 0, t);
            c.insert(p(1)).unwrap();
            c.insert(p(2)).unwrap();
            match c.insert(p(3)).unwrap() {
                Some(v) if v == p(1) => first += 1,
                Some(v) => assert_eq!(v, p(2)),
                None => panic!("full cache must evict"),
            }
        }
        let freq = first as f64 / trials as f64;
        assert!((freq - 0.5).abs() <= 0.02, "victim frequency {freq}");
    }

    #[test]
    fn rnd_is_reproducible_for_a_seed() {
        let run = |seed| {
            let mut c = ReplacementCache::new(Policy::Rnd, 4, 3, seed);
            (1..200).filter_map(|i| c.insert(p(i)).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }
}
