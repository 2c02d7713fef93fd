//! Stack-distance analysis of request streams and the network-level report:
//! overall hit ratio, hop and traffic reduction ratios, evictions per slot.

use std::collections::BTreeMap;
use std::hash::Hash;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

/// Per-request stack distance: the number of distinct ids requested strictly
/// between this request and the previous request for the same id. First
/// occurrences have none.
pub fn stack_distances<T: Hash + Eq + Copy>(stream: &[T]) -> Vec<Option<u64>> {
    // Fenwick tree over positions; a 1 marks the latest occurrence of some id,
    // so a range sum counts distinct ids whose last request lies in the range.
    let n = stream.len();
    let mut tree = vec![0i64; n + 1];
    let add = |tree: &mut Vec<i64>, pos: usize, v: i64| {
        let mut i = pos + 1;
        while i <= n {
            tree[i] += v;
            i += i & i.wrapping_neg();
        }
    };
    let prefix = |tree: &Vec<i64>, pos: usize| -> i64 {
        // sum over positions [0, pos)
        let mut i = pos;
        let mut s = 0;
        while i > 0 {
            s += tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    };
    let mut last: FxHashMap<T, usize> = FxHashMap::default();
    let mut out = Vec::with_capacity(n);
    for (j, id) in stream.iter().enumerate() {
        match last.insert(*id, j) {
            Some(prev) => {
                let between = prefix(&tree, j) - prefix(&tree, prev + 1);
                out.push(Some(between as u64));
                add(&mut tree, prev, -1);
            }
            None => out.push(None),
        }
        add(&mut tree, j, 1);
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SDStats {
    pub min_sd: Option<u64>,
    pub max_sd: Option<u64>,
    /// Histogram-weighted mean stack distance.
    pub avg_sd: Option<f64>,
    pub histogram: BTreeMap<u64, u64>,
    pub undefined_count: u64,
}

impl SDStats {
    pub fn defined_count(&self) -> u64 {
        self.histogram.values().sum()
    }
}

pub fn sd_stats(sds: &[Option<u64>]) -> SDStats {
    let mut stats = SDStats::default();
    for sd in sds {
        match sd {
            Some(d) => *stats.histogram.entry(*d).or_insert(0) += 1,
            None => stats.undefined_count += 1,
        }
    }
    if !stats.histogram.is_empty() {
        let (weighted, count) =
            stats.histogram.iter().fold((0.0, 0u64), |(w, c), (&d, &k)| (w + d as f64 * k as f64, c + k));
        stats.avg_sd = Some(weighted / count as f64);
        stats.min_sd = stats.histogram.keys().next().copied();
        stats.max_sd = stats.histogram.keys().next_back().copied();
    }
    stats
}

/// Per-router counters collected by the engine.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RouterCounters {
    pub capacity: u64,
    pub requests: u64,
    pub hits: u64,
    pub forwarded: u64,
    pub writes: u64,
    pub evictions: u64,
}

/// Raw counters of one simulation run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunCounters {
    /// Packet requests that entered the network at an edge router.
    pub requests_entered: u64,
    pub served_by_producer: u64,
    /// Requests answered by a data packet back at the consumer.
    pub delivered: u64,
    /// Sum over requests of links from the consumer to the serving node.
    pub hop_total: u64,
    /// Data-packet link traversals, excluding consumer links.
    pub traffic_total: u64,
    /// Request count and router count per route (routing-table order).
    pub route_requests: Vec<u64>,
    pub route_lengths: Vec<u32>,
    pub routers: Vec<RouterCounters>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub requests: u64,
    pub producer_requests: u64,
    pub hit_net: Option<f64>,
    pub h_red: Option<f64>,
    pub t_red: Option<f64>,
    pub e_avg: Option<f64>,
    pub evictions: u64,
    pub slots: u64,
    /// Hit ratio of every router that saw at least one request.
    pub per_cache_hits: BTreeMap<u32, f64>,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

/// Derives the four network metrics. The no-cache reference is computed from
/// route lengths: without caches a request on a route of L routers travels
/// L + 1 links (consumer link included) and its data crosses L links below the
/// producer.
pub fn compute_report(c: &RunCounters) -> MetricsReport {
    let (hop_nc, traffic_nc) = c
        .route_requests
        .iter()
        .zip(&c.route_lengths)
        .fold((0u64, 0u64), |(h, t), (&n, &len)| (h + n * (u64::from(len) + 1), t + n * u64::from(len)));
    let evictions: u64 = c.routers.iter().map(|r| r.evictions).sum();
    let slots: u64 = c.routers.iter().map(|r| r.capacity).sum();
    let entered = c.requests_entered as f64;
    let per_cache_hits = c
        .routers
        .iter()
        .enumerate()
        .filter(|(_, r)| r.requests > 0)
        .map(|(i, r)| (i as u32, r.hits as f64 / r.requests as f64))
        .collect();
    MetricsReport {
        requests: c.requests_entered,
        producer_requests: c.served_by_producer,
        hit_net: ratio(entered - c.served_by_producer as f64, entered),
        h_red: ratio(c.hop_total as f64, hop_nc as f64),
        t_red: ratio(c.traffic_total as f64, traffic_nc as f64),
        e_avg: ratio(evictions as f64, slots as f64),
        evictions,
        slots,
        per_cache_hits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct definition, quadratic.
    fn brute_force<T: Eq + Copy + Hash>(stream: &[T]) -> Vec<Option<u64>> {
        (0..stream.len())
            .map(|j| {
                let prev = (0..j).rev().find(|&k| stream[k] == stream[j])?;
                let distinct: std::collections::HashSet<T> = stream[prev + 1..j].iter().copied().collect();
                Some(distinct.len() as u64)
            })
            .collect()
    }

    const EXAMPLE: [u32; 10] = [4, 5, 1, 3, 2, 7, 2, 3, 1, 6];

    #[test]
    fn worked_example() {
        let sds = stack_distances(&EXAMPLE);
        assert_eq!(sds[8], Some(3)); // second request of content 1
        assert_eq!(sds[6], Some(1)); // second request of content 2
        assert_eq!(sds[7], Some(2)); // second request of content 3
        assert_eq!(sds, brute_force(&EXAMPLE));
        let stats = sd_stats(&sds);
        assert_eq!(stats.avg_sd, Some(2.0));
        assert_eq!(stats.min_sd, Some(1));
        assert_eq!(stats.max_sd, Some(3));
        assert_eq!(stats.undefined_count, 7);
    }

    #[test]
    fn adjacent_and_identical() {
        assert_eq!(stack_distances(&['x', 'x']), vec![None, Some(0)]);
        let stats = sd_stats(&stack_distances(&[9u8; 6]));
        assert_eq!((stats.min_sd, stats.max_sd, stats.avg_sd), (Some(0), Some(0), Some(0.0)));
    }

    #[test]
    fn round_robin() {
        let m = 7u32;
        let stream: Vec<u32> = (0..70).map(|i| i % m).collect();
        let sds = stack_distances(&stream);
        assert!(sds.iter().skip(m as usize).all(|&d| d == Some(u64::from(m) - 1)));
    }

    #[test]
    fn empty_stats_are_absent() {
        let stats = sd_stats(&stack_distances(&[1, 2, 3]));
        assert_eq!(stats.avg_sd, None);
        assert_eq!(stats.min_sd, None);
        assert_eq!(stats.undefined_count, 3);
    }

    #[test]
    fn report_without_caching() {
        let c = RunCounters {
            requests_entered: 10,
            served_by_producer: 10,
            delivered: 10,
            hop_total: 10 * 4,
            traffic_total: 10 * 3,
            route_requests: vec![10],
            route_lengths: vec![3],
            routers: vec![RouterCounters { requests: 10, forwarded: 10, ..Default::default() }; 3],
        };
        let r = compute_report(&c);
        assert_eq!(r.hit_net, Some(0.0));
        assert_eq!(r.h_red, Some(1.0));
        assert_eq!(r.t_red, Some(1.0));
        assert_eq!(r.e_avg, None);
    }

    #[test]
    fn report_all_edge_hits() {
        let c = RunCounters {
            requests_entered: 8,
            served_by_producer: 0,
            delivered: 8,
            hop_total: 8,
            traffic_total: 0,
            route_requests: vec![4, 4],
            route_lengths: vec![3, 5],
            routers: vec![RouterCounters { capacity: 2, requests: 8, hits: 8, evictions: 1, ..Default::default() }],
        };
        let r = compute_report(&c);
        assert_eq!(r.hit_net, Some(1.0));
        // H_no-cache = mean(4, 6) = 5
        assert_eq!(r.h_red, Some(1.0 / 5.0));
        assert_eq!(r.t_red, Some(0.0));
        assert_eq!(r.e_avg, Some(0.5));
        assert_eq!(r.per_cache_hits[&0], 1.0);
    }

    #[test]
    fn empty_run_reports_absent_ratios() {
        let r = compute_report(&RunCounters::default());
        assert_eq!((r.hit_net, r.h_red, r.t_red, r.e_avg), (None, None, None, None));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn fenwick_matches_definition(stream in proptest::collection::vec(0u8..12, 0..200)) {
                prop_assert_eq!(stack_distances(&stream), brute_force(&stream));
            }

            #[test]
            fn stats_bracket_mean(stream in proptest::collection::vec(0u8..8, 2..200)) {
                let s = sd_stats(&stack_distances(&stream));
                if let (Some(lo), Some(hi), Some(avg)) = (s.min_sd, s.max_sd, s.avg_sd) {
                    prop_assert!(lo as f64 <= avg && avg <= hi as f64);
                }
            }
        }
    }
}
