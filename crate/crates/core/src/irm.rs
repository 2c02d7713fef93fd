//! Independent-reference-model analytics: the product-form stationary law of
//! LRU, the frozen-state law of the selection policy, exact hit ratios by
//! enumeration, a brute-force Markov-chain oracle, and IRM simulation.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ContentId, Lookup, PacketId};
use crate::replacement::{Policy, ReplacementCache};
use crate::selection::{Phase, SelOutcome, SelectionCache};
use crate::traffic::sample_content;

/// Largest catalog for which ordered-state enumeration is attempted.
pub const ENUMERATION_LIMIT: usize = 10;

/// Popularity vector over contents 1..=n, sorted non-increasing and summing to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Popularity {
    q: Vec<f64>,
    cdf: Vec<f64>,
}

impl Popularity {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::Popularity("empty catalog".into()));
        }
        if q.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::Popularity("negative or non-finite entry".into()));
        }
        if q.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Popularity("not sorted non-increasing".into()));
        }
        let total: f64 = q.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Popularity(format!("sums to {total}")));
        }
        let mut acc = 0.0;
        let cdf = q
            .iter()
            .map(|&x| {
                acc += x;
                acc
            })
            .collect();
        Ok(Popularity { q, cdf })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.q
    }

    /// Probability of content `id` (1-based).
    pub fn prob(&self, id: ContentId) -> f64 {
        self.q[id.0 as usize - 1]
    }

    pub(crate) fn cdf(&self) -> &[f64] {
        &self.cdf
    }
}

/// `q_i = i^-alpha / sum_j j^-alpha`.
pub fn zipf_popularity(alpha: f64, n: usize) -> Result<Popularity> {
    if n == 0 {
        return Err(Error::Popularity("catalog size must be at least 1".into()));
    }
    if !(alpha >= 0.0) {
        return Err(Error::Popularity(format!("alpha {alpha} must be >= 0")));
    }
    let weights: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-alpha)).collect();
    let norm: f64 = weights.iter().sum();
    let mut q: Vec<f64> = weights.iter().map(|w| w / norm).collect();
    // Push the rounding residue onto the head so the sum is within 1e-12.
    let residue = 1.0 - q.iter().sum::<f64>();
    q[0] += residue;
    Popularity::new(q)
}

/// Ordered cache state: slot i holds `sigma[i]`. Entries are 1-based content ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheVector(Vec<u32>);

impl CacheVector {
    pub fn new(sigma: Vec<u32>, n: usize) -> Result<Self> {
        if sigma.len() > n {
            return Err(Error::Popularity(format!("state of {} slots over {n} contents", sigma.len())));
        }
        for (i, &s) in sigma.iter().enumerate() {
            if s == 0 || s as usize > n {
                return Err(Error::Popularity(format!("content {s} outside 1..={n}")));
            }
            if sigma[..i].contains(&s) {
                return Err(Error::Popularity(format!("content {s} repeated")));
            }
        }
        Ok(CacheVector(sigma))
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.0.contains(&id)
    }
}

/// Product-form stationary probability of LRU state `sigma` (slot 1 most recent).
pub fn pi_lru(q: &Popularity, sigma: &CacheVector) -> f64 {
    let mut prefix = 0.0;
    let mut pi = 1.0;
    for &s in sigma.as_slice() {
        let qs = q.prob(ContentId(s));
        pi *= qs / (1.0 - prefix);
        prefix += qs;
    }
    pi
}

/// Probability that a selection cycle freezes in state `sigma`: the i-th
/// distinct content drawn is `sigma[i]`, given the earlier ones, with the
/// remaining contents' popularity renormalised over what is left.
pub fn pi_sel(q: &Popularity, sigma: &CacheVector) -> f64 {
    let ids = sigma.as_slice();
    let mut pi = 1.0;
    for (i, &s) in ids.iter().enumerate() {
        let chosen = &ids[..i];
        let remaining: f64 = (1..=q.len() as u32).filter(|j| !chosen.contains(j)).map(|j| q.prob(ContentId(j))).sum();
        pi *= q.prob(ContentId(s)) / remaining;
    }
    pi
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum IrmPolicy {
    Lru,
    Sel,
}

/// Every ordered `c`-tuple of distinct ids from 1..=n, in lexicographic order.
pub fn ordered_states(n: usize, c: usize) -> Vec<CacheVector> {
    fn extend(n: u32, c: usize, cur: &mut Vec<u32>, out: &mut Vec<CacheVector>) {
        if cur.len() == c {
            out.push(CacheVector(cur.clone()));
            return;
        }
        for id in 1..=n {
            if !cur.contains(&id) {
                cur.push(id);
                extend(n, c, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    extend(n as u32, c, &mut Vec::with_capacity(c), &mut out);
    out
}

/// `h = sum_i q_i * P(i resident)` with residency taken from the closed-form law.
pub fn hit_ratio_closed_form(q: &Popularity, c: usize, policy: IrmPolicy) -> Result<f64> {
    let n = q.len();
    if n > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge { n, c, limit: ENUMERATION_LIMIT });
    }
    if c > n {
        return Err(Error::Popularity(format!("cache of {c} slots over {n} contents")));
    }
    let law = match policy {
        IrmPolicy::Lru => pi_lru,
        IrmPolicy::Sel => pi_sel,
    };
    let states = ordered_states(n, c);
    Ok(hit_ratio_from_law(q, states.iter().map(|s| (s, law(q, s)))))
}

/// Hit ratio under an arbitrary law over cache states.
pub fn hit_ratio_from_law<'a>(q: &Popularity, law: impl IntoIterator<Item = (&'a CacheVector, f64)>) -> f64 {
    let mut residency = vec![0.0; q.len()];
    for (sigma, pi) in law {
        for &s in sigma.as_slice() {
            residency[s as usize - 1] += pi;
        }
    }
    q.probs().iter().zip(&residency).map(|(qi, r)| qi * r).sum()
}

/// Stationary law of the exact LRU move-to-front chain over full ordered
/// states, by power iteration. Independent of the product form.
pub fn lru_stationary_oracle(q: &Popularity, c: usize) -> Result<HashMap<CacheVector, f64>> {
    const MAX_N: usize = 7;
    const MAX_C: usize = 3;
    const TOL: f64 = 1e-10;
    const MAX_ITER: usize = 1_000_000;
    let n = q.len();
    if n > MAX_N || c > MAX_C || c > n {
        return Err(Error::EnumerationTooLarge { n, c, limit: MAX_N });
    }
    let states = ordered_states(n, c);
    let index: HashMap<&[u32], usize> = states.iter().enumerate().map(|(i, s)| (s.as_slice(), i)).collect();
    // transitions[s] = list of (next state, probability)
    let transitions: Vec<Vec<(usize, f64)>> = states
        .iter()
        .map(|s| {
            (1..=n as u32)
                .map(|id| {
                    let mut next = Vec::with_capacity(c);
                    next.push(id);
                    next.extend(s.as_slice().iter().copied().filter(|&x| x != id));
                    next.truncate(c);
                    (index[next.as_slice()], q.prob(ContentId(id)))
                })
                .collect()
        })
        .collect();

    let m = states.len();
    let mut pi = vec![1.0 / m as f64; m];
    let mut next = vec![0.0; m];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITER {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (s, out) in transitions.iter().enumerate() {
            for &(t, p) in out {
                next[t] += pi[s] * p;
            }
        }
        residual = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if residual < TOL {
            return Ok(states.into_iter().zip(pi).collect());
        }
    }
    Err(Error::NoConvergence { iterations: MAX_ITER, residual })
}

/// Parameters of an IRM hit-ratio simulation.
#[derive(Clone, Copy, Debug)]
pub struct IrmSimulation {
    pub capacity: usize,
    pub policy: IrmPolicy,
    pub requests: u64,
    pub seed: u64,
    /// Frozen period of the selection cache, in requests.
    pub frozen_requests: u64,
}

impl IrmSimulation {
    pub fn new(capacity: usize, policy: IrmPolicy, requests: u64, seed: u64) -> Self {
        IrmSimulation { capacity, policy, requests, seed, frozen_requests: 100 }
    }
}

/// Draws i.i.d. requests from `q` and measures the hit ratio. LRU is measured
/// once the cache is full; the selection cache is measured only over its frozen
/// intervals, so compulsory misses of each selecting phase are excluded.
pub fn simulate_irm_hit_ratio(q: &Popularity, sim: IrmSimulation) -> f64 {
    if sim.capacity == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    let (mut hits, mut measured) = (0u64, 0u64);
    match sim.policy {
        IrmPolicy::Lru => {
            let mut cache = ReplacementCache::new(Policy::Lru, sim.capacity, 0, sim.seed);
            for _ in 0..sim.requests {
                let p = PacketId::whole(sample_content(q, &mut rng));
                let warm = cache.len() == cache.capacity();
                match cache.lookup(&p) {
                    Lookup::Hit => hits += u64::from(warm),
                    Lookup::Miss => {
                        cache.insert(p).expect("miss implies not resident");
                    }
                }
                measured += u64::from(warm);
            }
        }
        IrmPolicy::Sel => {
            let mut cache = SelectionCache::new(sim.capacity, sim.frozen_requests as f64);
            for t in 0..sim.requests {
                let now = t as f64;
                cache.on_timer(now);
                let p = PacketId::whole(sample_content(q, &mut rng));
                let frozen = cache.phase() == Phase::Frozen;
                match cache.on_request(p, now) {
                    SelOutcome::Hit => hits += u64::from(frozen),
                    SelOutcome::MissAndFetch => {
                        cache.on_data(p);
                    }
                    SelOutcome::MissForward => {}
                }
                measured += u64::from(frozen);
            }
        }
    }
    if measured == 0 {
        0.0
    } else {
        hits as f64 / measured as f64
    }
}
