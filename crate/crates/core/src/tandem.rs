//! Two caches back to back under an IRM request stream: the first cache
//! serves what it can and forwards its misses to the second.
//!
//! Requests are replayed back to back with no network timing; the selection
//! policy in front runs a single cycle (frozen forever once full).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irm::Popularity;
use crate::metrics::{sd_stats, stack_distances, SDStats};
use crate::model::{ContentId, Lookup, PacketId};
use crate::replacement::{Policy, ReplacementCache};
use crate::selection::{SelOutcome, SelectionCache};
use crate::traffic::sample_content;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FrontPolicy {
    Lru,
    Fifo,
    Rnd,
    Sel,
}

impl FrontPolicy {
    pub const ALL: [FrontPolicy; 4] = [FrontPolicy::Lru, FrontPolicy::Fifo, FrontPolicy::Rnd, FrontPolicy::Sel];

    pub fn name(self) -> &'static str {
        match self {
            FrontPolicy::Lru => "LRU",
            FrontPolicy::Fifo => "FIFO",
            FrontPolicy::Rnd => "RND",
            FrontPolicy::Sel => "SEL",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TandemConfig {
    pub front: FrontPolicy,
    pub back: Policy,
    pub capacity: usize,
    pub requests: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TandemResult {
    pub config: TandemConfig,
    pub front_hit_ratio: f64,
    /// Hits of the second cache over requests reaching it; absent when the
    /// first cache forwarded nothing.
    pub back_hit_ratio: Option<f64>,
    pub input_sd: SDStats,
    pub miss_sd: SDStats,
}

enum Front {
    Replacement(ReplacementCache),
    Sel(SelectionCache),
}

impl Front {
    /// Whether the request was served, filling on a miss.
    fn serve(&mut self, p: PacketId) -> Result<bool> {
        match self {
            Front::Replacement(c) => {
                if c.lookup(&p) == Lookup::Hit {
                    return Ok(true);
                }
                if c.capacity() > 0 {
                    c.insert(p)?;
                }
                Ok(false)
            }
            Front::Sel(c) => match c.on_request(p, 0.0) {
                SelOutcome::Hit => Ok(true),
                SelOutcome::MissAndFetch => {
                    c.on_data(p);
                    Ok(false)
                }
                SelOutcome::MissForward => Ok(false),
            },
        }
    }
}

fn serve_back(cache: &mut ReplacementCache, p: PacketId) -> Result<bool> {
    if cache.lookup(&p) == Lookup::Hit {
        return Ok(true);
    }
    if cache.capacity() > 0 {
        cache.insert(p)?;
    }
    Ok(false)
}

/// Runs one tandem experiment over contents of one packet each.
pub fn run_tandem(q: &Popularity, config: TandemConfig) -> Result<TandemResult> {
    if config.requests == 0 {
        return Err(Error::Scenario("tandem needs at least one request".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut front = match config.front {
        FrontPolicy::Lru => Front::Replacement(ReplacementCache::new(Policy::Lru, config.capacity, 0, config.seed)),
        FrontPolicy::Fifo => Front::Replacement(ReplacementCache::new(Policy::Fifo, config.capacity, 0, config.seed)),
        FrontPolicy::Rnd => Front::Replacement(ReplacementCache::new(Policy::Rnd, config.capacity, 0, config.seed)),
        FrontPolicy::Sel => Front::Sel(SelectionCache::new(config.capacity, f64::INFINITY)),
    };
    let mut back = ReplacementCache::new(config.back, config.capacity, 1, config.seed);

    let mut input: Vec<ContentId> = Vec::with_capacity(config.requests as usize);
    let mut misses: Vec<ContentId> = Vec::new();
    let (mut front_hits, mut back_hits) = (0u64, 0u64);
    for _ in 0..config.requests {
        let id = sample_content(q, &mut rng);
        input.push(id);
        let p = PacketId::whole(id);
        if front.serve(p)? {
            front_hits += 1;
        } else {
            misses.push(id);
            if serve_back(&mut back, p)? {
                back_hits += 1;
            }
        }
    }
    let back_hit_ratio = (!misses.is_empty()).then(|| back_hits as f64 / misses.len() as f64);
    Ok(TandemResult {
        config,
        front_hit_ratio: front_hits as f64 / config.requests as f64,
        back_hit_ratio,
        input_sd: sd_stats(&stack_distances(&input)),
        miss_sd: sd_stats(&stack_distances(&misses)),
    })
}
