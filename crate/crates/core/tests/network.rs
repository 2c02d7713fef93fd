use selcache::engine::{
    run_simulation, run_simulation_with, scenario_workload, CachePolicy, CacheSpec, CoordSettings, RunOptions, Scenario,
};
use selcache::metrics::compute_report;
use selcache::model::CacheEventKind;
use selcache::topology::{build_abilene, build_binary_tree, Topology};
use selcache::traffic::{read_trace, write_trace, TrafficProfile};

fn profile(first_content: u32, contents: u32, rate: f64) -> TrafficProfile {
    TrafficProfile { alpha: 1.0, first_content, contents, content_rate: rate, mean_size: 5.0, cbr_rate: 100.0, seed: 0 }
}

fn scenario(topology: Topology, policy: CachePolicy, capacity: usize, duration: f64) -> Scenario {
    let profiles = topology.producers.iter().map(|p| profile(p.first_content, p.contents, 4.0)).collect();
    Scenario {
        name: "test".into(),
        caches: vec![CacheSpec { policy, capacity }; topology.routers.len()],
        topology,
        profiles,
        duration,
        coord: CoordSettings::default(),
        catalog_seed: 1,
    }
}

fn tree(policy: CachePolicy, capacity: usize) -> Scenario {
    scenario(build_binary_tree(3, 10, 50, 0.002).unwrap(), policy, capacity, 30.0)
}

#[test]
fn no_caches_degenerate_to_unity() {
    let res = run_simulation(&tree(CachePolicy::None, 0), 1).unwrap();
    let m = compute_report(&res.counters);
    assert!(m.requests > 0);
    assert_eq!(m.hit_net, Some(0.0));
    assert_eq!(m.h_red, Some(1.0));
    assert_eq!(m.t_red, Some(1.0));
    assert_eq!(m.e_avg, None);
}

#[test]
fn every_policy_conserves_requests() {
    for policy in [CachePolicy::Lru, CachePolicy::Fifo, CachePolicy::Rnd, CachePolicy::Sel] {
        let res = run_simulation(&tree(policy, 20), 3).unwrap();
        let c = &res.counters;
        assert_eq!(c.requests_entered, c.delivered, "{policy:?}");
        for r in &c.routers {
            assert_eq!(r.requests, r.hits + r.forwarded, "{policy:?}");
        }
        let m = compute_report(c);
        assert!(m.hit_net.unwrap() > 0.0, "{policy:?} never hit");
        assert!(m.h_red.unwrap() < 1.0 && m.t_red.unwrap() < 1.0, "{policy:?}");
    }
}

#[test]
fn coordinated_writes_match_nominations() {
    let res = run_simulation(&tree(CachePolicy::Sel, 20), 4).unwrap();
    let inv = &res.invariants;
    assert!(inv.nominations > 0);
    assert_eq!(inv.tokens_written, inv.nominations);
    assert!(inv.max_nf <= 2, "three-level tree: at most two routers above a nominator");
    let writes: u64 = res.counters.routers.iter().map(|r| r.writes).sum();
    assert_eq!(writes, inv.nominations);
}

#[test]
fn single_selection_cycle_evicts_at_most_once_per_slot() {
    let mut s = tree(CachePolicy::Sel, 20);
    s.coord.frozen_period = 1e9;
    let m = compute_report(&run_simulation(&s, 5).unwrap().counters);
    assert!(m.e_avg.unwrap() <= 1.0, "e_avg {:?}", m.e_avg);
}

#[test]
fn full_audit_on_every_event_passes() {
    let s = scenario(build_abilene(1, 10, Some(0.002)).unwrap(), CachePolicy::Sel, 8, 5.0);
    let opts = RunOptions { full_audit: true, ..Default::default() };
    let res = run_simulation_with(&s, 2, &opts).unwrap();
    assert!(res.invariants.full_audits > 1000);
    assert_eq!(res.invariants.tokens_written, res.invariants.nominations);
}

#[test]
fn larger_threshold_keeps_window_bounded() {
    let mut s = tree(CachePolicy::Sel, 30);
    s.coord.nw_threshold = 4;
    let res = run_simulation_with(&s, 6, &RunOptions { full_audit: true, ..Default::default() }).unwrap();
    assert_eq!(res.invariants.tokens_written, res.invariants.nominations);
}

#[test]
fn runs_are_deterministic_per_seed() {
    let s = tree(CachePolicy::Rnd, 15);
    let a = run_simulation(&s, 9).unwrap();
    let b = run_simulation(&s, 9).unwrap();
    let c = run_simulation(&s, 10).unwrap();
    assert_eq!(a.counters, b.counters);
    assert_ne!(a.counters, c.counters);
}

#[test]
fn mismatched_cache_list_rejected() {
    let mut s = tree(CachePolicy::Lru, 5);
    s.caches.pop();
    assert!(run_simulation(&s, 1).is_err());
}

#[test]
fn miss_taps_and_event_log_agree_with_counters() {
    let s = tree(CachePolicy::Lru, 10);
    let opts = RunOptions { record_events: true, miss_taps: vec![3], ..Default::default() };
    let res = run_simulation_with(&s, 7, &opts).unwrap();
    let router3 = &res.counters.routers[3];
    assert_eq!(res.miss_streams[0].1.len() as u64, router3.forwarded);
    let logged_hits = res.cache_events.iter().filter(|e| e.kind == CacheEventKind::Hit && e.cache == 3).count() as u64;
    assert_eq!(logged_hits, router3.hits);
    let evictions = res.cache_events.iter().filter(|e| e.kind == CacheEventKind::Eviction).count() as u64;
    assert_eq!(evictions, res.counters.routers.iter().map(|r| r.evictions).sum::<u64>());
}

#[test]
fn workload_matches_engine_input_and_roundtrips() {
    let s = tree(CachePolicy::None, 0);
    let events = scenario_workload(&s, 8).unwrap();
    let res = run_simulation(&s, 8).unwrap();
    assert_eq!(events.len() as u64, res.counters.requests_entered);
    let mut buf = Vec::new();
    write_trace(&mut buf, events.iter().copied()).unwrap();
    let back = read_trace(buf.as_slice()).unwrap();
    assert_eq!(back.len(), events.len());
    assert!(back.iter().zip(&events).all(|(a, b)| a.packet == b.packet && a.group == b.group));
}
