use proptest::prelude::*;
use sha2::{Digest, Sha256};

use selcache::irm::{ordered_states, pi_lru, pi_sel, Popularity};
use selcache::metrics::stack_distances;
use selcache::model::{Lookup, PacketId};
use selcache::replacement::{Policy, ReplacementCache};
use selcache::topology::{build_abilene, ABILENE_TOPOLOGY};

#[test]
fn bundled_abilene_file_is_pinned() {
    let digest = Sha256::digest(ABILENE_TOPOLOGY.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(hex, "366cb702bd6080c757ee745a2134784a192ade7ef6c32877f833d3a7970478e1");
    let t = build_abilene(100, 100, None).unwrap();
    assert_eq!(t.routers.len(), 22);
    assert_eq!(t.links.len(), 14 + 11);
}

fn replay(policy: Policy, capacity: usize, stream: &[u32]) -> Vec<(bool, Option<PacketId>)> {
    let mut cache = ReplacementCache::new(policy, capacity, 0, 1);
    stream
        .iter()
        .map(|&id| {
            let p = PacketId::new(id, 1);
            if cache.lookup(&p) == Lookup::Hit {
                (true, None)
            } else {
                (false, cache.insert(p).unwrap())
            }
        })
        .collect()
}

proptest! {
    #[test]
    fn lru_hits_exactly_below_capacity(stream in prop::collection::vec(1u32..30, 1..400), c in 1usize..12) {
        let sds = stack_distances(&stream);
        for (sd, (hit, _)) in sds.iter().zip(replay(Policy::Lru, c, &stream)) {
            prop_assert_eq!(hit, sd.is_some_and(|d| d < c as u64));
        }
    }

    #[test]
    fn fifo_miss_stream_keeps_capacity_distance(stream in prop::collection::vec(1u32..40, 1..400), c in 1usize..10) {
        let misses: Vec<u32> = stream.iter().zip(replay(Policy::Fifo, c, &stream)).filter(|(_, (h, _))| !h).map(|(&id, _)| id).collect();
        for sd in stack_distances(&misses).into_iter().flatten() {
            prop_assert!(sd >= c as u64);
        }
    }

    #[test]
    fn selection_law_equals_lru_law(raw in prop::collection::vec(0.01f64..1.0, 2..6), c in 1usize..4) {
        let mut q = raw.clone();
        q.sort_by(|a, b| b.total_cmp(a));
        let total: f64 = q.iter().sum();
        q.iter_mut().for_each(|x| *x /= total);
        let residue = 1.0 - q.iter().sum::<f64>();
        q[0] += residue;
        let c = c.min(q.len());
        let pop = Popularity::new(q.clone()).unwrap();
        let mut mass = 0.0;
        for sigma in ordered_states(q.len(), c) {
            let (l, s) = (pi_lru(&pop, &sigma), pi_sel(&pop, &sigma));
            prop_assert!((l - s).abs() < 1e-12);
            mass += l;
        }
        prop_assert!((mass - 1.0).abs() < 1e-12);
    }
}
