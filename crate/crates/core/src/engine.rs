//! Discrete-event engine moving packet requests up routes and data packets
//! back down the reverse path through each router's cache.
//!
//! One run is single threaded over a global event queue ordered by
//! `(time, sequence number)`, so a scenario and seed always replay identically.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};
use std::fmt::Write as _;
use std::iter::Peekable;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::coordinated::{CoordAction, CoordCache, CoordConfig, CoordStats, DataEffect, RequestEffect};
use crate::error::{Error, Result};
use crate::metrics::{RouterCounters, RunCounters};
use crate::model::{
    derive_seed, CacheEvent, CacheEventKind, DataPacket, Lookup, PacketId, RequestPacket, NOT_NOMINATED,
};
use crate::replacement::{Policy, ReplacementCache};
use crate::topology::{shortest_path_routes, RoutingTable, Topology};
use crate::traffic::{generate_workload, sample_catalog_sizes, TrafficProfile, WorkloadEvent, WorkloadStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CachePolicy {
    None,
    Lru,
    Fifo,
    Rnd,
    /// Coordinated selection.
    Sel,
}

impl CachePolicy {
    pub fn replacement(self) -> Option<Policy> {
        match self {
            CachePolicy::Lru => Some(Policy::Lru),
            CachePolicy::Fifo => Some(Policy::Fifo),
            CachePolicy::Rnd => Some(Policy::Rnd),
            CachePolicy::None | CachePolicy::Sel => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheSpec {
    pub policy: CachePolicy,
    pub capacity: usize,
}

/// Coordination parameters; `nw_timeout` defaults to twice the network
/// diameter plus one hop, times the largest link delay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordSettings {
    pub nw_threshold: u32,
    pub frozen_period: f64,
    pub nw_timeout: Option<f64>,
}

impl Default for CoordSettings {
    fn default() -> Self {
        let d = CoordConfig::default();
        CoordSettings { nw_threshold: d.nw_threshold, frozen_period: d.frozen_period, nw_timeout: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub topology: Topology,
    /// One entry per router.
    pub caches: Vec<CacheSpec>,
    pub profiles: Vec<TrafficProfile>,
    pub duration: f64,
    pub coord: CoordSettings,
    /// Seed of the catalog's content sizes, fixed across run seeds.
    pub catalog_seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        if self.caches.len() != self.topology.routers.len() {
            return Err(Error::Scenario(format!(
                "{} cache specs for {} routers",
                self.caches.len(),
                self.topology.routers.len()
            )));
        }
        if !(self.duration > 0.0) {
            return Err(Error::Scenario("duration must be positive".into()));
        }
        if self.coord.nw_threshold == 0 {
            return Err(Error::Scenario("NW threshold must be >= 1".into()));
        }
        if self.profiles.is_empty() {
            return Err(Error::Scenario("no traffic profiles".into()));
        }
        for p in &self.profiles {
            p.validate()?;
        }
        Ok(())
    }

    pub fn mean_size(&self) -> f64 {
        self.profiles[0].mean_size
    }

    /// Content sizes of the whole catalog, indexed by content id - 1.
    pub fn content_sizes(&self) -> Vec<u32> {
        sample_catalog_sizes(self.topology.total_contents() as usize, self.mean_size(), self.catalog_seed)
    }

    pub fn nw_timeout(&self) -> f64 {
        self.coord
            .nw_timeout
            .unwrap_or_else(|| 2.0 * f64::from(self.topology.diameter() + 1) * self.topology.max_link_delay())
    }

    pub fn total_slots(&self) -> u64 {
        self.caches.iter().map(|c| c.capacity as u64).sum()
    }
}

/// Optional observation hooks.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Keep every cache event (hit, miss, write, eviction).
    pub record_events: bool,
    /// Routers whose forwarded (missed) request stream is recorded.
    pub miss_taps: Vec<u32>,
    /// Run the O(capacity) coordinated-cache audit after every event instead
    /// of only at phase changes.
    pub full_audit: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct InvariantReport {
    pub checks: u64,
    pub full_audits: u64,
    pub nominations: u64,
    pub tokens_written: u64,
    pub max_nf: i32,
}

#[derive(Clone, Debug, Default)]
pub struct RunResult {
    pub counters: RunCounters,
    pub coord_stats: Vec<Option<CoordStats>>,
    pub invariants: InvariantReport,
    pub events_processed: u64,
    pub cache_events: Vec<CacheEvent>,
    pub miss_streams: Vec<(u32, Vec<PacketId>)>,
}

enum NodeCache {
    Passive,
    Replacement(ReplacementCache),
    Coord(CoordCache),
}

#[derive(Clone, Copy, Debug)]
enum Event {
    Request {
        route: u32,
        hop: u16,
        req: RequestPacket,
        token: u64,
    },
    /// Data reaching router `hop` of the route on its way down.
    Data {
        route: u32,
        hop: u16,
        data: DataPacket,
        token: u64,
    },
    FrozenTimer {
        router: u32,
    },
    NwTimer {
        router: u32,
    },
}

#[derive(Clone, Copy, Debug)]
struct Scheduled {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

const NO_TOKEN: u64 = 0;
const TRACE_LEN: usize = 48;

struct Token {
    router: u32,
    hop: u16,
    written: bool,
}

struct Engine<'a> {
    now: f64,
    seq: u64,
    queue: BinaryHeap<Reverse<Scheduled>>,
    workload: Peekable<WorkloadStream<'a>>,
    nodes: Vec<NodeCache>,
    routes: &'a RoutingTable,
    topology: &'a Topology,
    // coordinated routers per route at or above each hop, for NF checks
    coord_above: Vec<Vec<u16>>,
    counters: RunCounters,
    tokens: FxHashMap<u64, Token>,
    next_token: u64,
    invariants: InvariantReport,
    max_route_len: i32,
    trace: VecDeque<(f64, Event)>,
    options: &'a RunOptions,
    cache_events: Vec<CacheEvent>,
    miss_streams: Vec<(u32, Vec<PacketId>)>,
    events: u64,
}

impl<'a> Engine<'a> {
    fn schedule(&mut self, time: f64, event: Event) {
        self.seq += 1;
        self.queue.push(Reverse(Scheduled { time, seq: self.seq, event }));
    }

    fn abort(&self, message: String) -> Error {
        let mut trace = String::new();
        for (t, e) in &self.trace {
            let _ = writeln!(trace, "  t={t:.6} {e:?}");
        }
        Error::Aborted { message, trace }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) -> Result<()> {
        self.invariants.checks += 1;
        if ok {
            Ok(())
        } else {
            Err(self.abort(what()))
        }
    }

    fn log(&mut self, kind: CacheEventKind, packet: PacketId, router: u32) {
        if self.options.record_events {
            self.cache_events.push(CacheEvent { kind, packet, cache: router, time: self.now });
        }
    }

    fn tap_miss(&mut self, router: u32, packet: PacketId) {
        if let Some((_, s)) = self.miss_streams.iter_mut().find(|(r, _)| *r == router) {
            s.push(packet);
        }
    }

    fn run(&mut self) -> Result<()> {
        loop {
            let queued = self.queue.peek().map(|Reverse(s)| s.time);
            let next_load = self.workload.peek().map(|w| w.time);
            match (queued, next_load) {
                (None, None) => return Ok(()),
                (q, Some(w)) if q.is_none_or(|q| w < q) => {
                    let w = self.workload.next().expect("peeked");
                    self.enter(w)?;
                }
                _ => {
                    let Reverse(s) = self.queue.pop().expect("peeked");
                    self.now = s.time;
                    self.dispatch(s.event)?;
                }
            }
        }
    }

    fn enter(&mut self, w: WorkloadEvent) -> Result<()> {
        self.now = w.time;
        let producer = self
            .topology
            .producer_of(w.packet.content.0)
            .ok_or_else(|| self.abort(format!("content {} has no producer", w.packet.content)))?;
        let route = self.routes.route_index(w.group, producer);
        self.counters.requests_entered += 1;
        self.counters.route_requests[route] += 1;
        let req = RequestPacket::new(w.packet, w.group, w.time);
        self.dispatch(Event::Request { route: route as u32, hop: 0, req, token: NO_TOKEN })
    }

    fn dispatch(&mut self, event: Event) -> Result<()> {
        self.events += 1;
        if self.trace.len() == TRACE_LEN {
            self.trace.pop_front();
        }
        self.trace.push_back((self.now, event));
        match event {
            Event::Request { route, hop, req, token } => self.on_request(route, hop, req, token),
            Event::Data { route, hop, data, token } => self.on_data(route, hop, data, token),
            Event::FrozenTimer { router } => {
                if let NodeCache::Coord(c) = &mut self.nodes[router as usize] {
                    if c.on_frozen_timer(self.now) {
                        self.audit(router, true)?;
                    }
                }
                Ok(())
            }
            Event::NwTimer { router } => {
                if let NodeCache::Coord(c) = &mut self.nodes[router as usize] {
                    c.on_nw_timer(self.now);
                }
                self.after_coord(router)
            }
        }
    }

    fn audit(&mut self, router: u32, full: bool) -> Result<()> {
        let NodeCache::Coord(c) = &self.nodes[router as usize] else {
            return Ok(());
        };
        self.invariants.checks += 1;
        let result = if full || self.options.full_audit {
            self.invariants.full_audits += 1;
            c.check_invariants(self.now)
        } else {
            c.check_counts(self.now)
        };
        result.map_err(|e| self.abort(e.to_string()))
    }

    fn after_coord(&mut self, router: u32) -> Result<()> {
        let NodeCache::Coord(c) = &mut self.nodes[router as usize] else {
            return Ok(());
        };
        let timers = c.take_timer_requests();
        let froze = timers.frozen.is_some();
        if let Some(t) = timers.frozen {
            self.schedule(t, Event::FrozenTimer { router });
        }
        if let Some(t) = timers.nw {
            self.schedule(t, Event::NwTimer { router });
        }
        self.audit(router, froze)
    }

    fn on_request(&mut self, route_ix: u32, hop: u16, mut req: RequestPacket, mut token: u64) -> Result<()> {
        let routes = self.routes;
        let route = routes.by_index(route_ix as usize);
        let h = usize::from(hop);
        let router = route.routers[h];
        let incoming_nf = req.nf;
        self.check(incoming_nf >= NOT_NOMINATED && incoming_nf <= self.max_route_len, || {
            format!("request NF {incoming_nf} out of range at router {router}")
        })?;
        let rc = &mut self.counters.routers[router as usize];
        rc.requests += 1;

        let mut served: Option<DataPacket> = None;
        match &mut self.nodes[router as usize] {
            NodeCache::Passive => {}
            NodeCache::Replacement(cache) => {
                if cache.lookup(&req.packet) == Lookup::Hit {
                    served = Some(DataPacket::answering(&req));
                }
            }
            NodeCache::Coord(cache) => {
                let (action, effect) = cache.on_request(req, self.now);
                match action {
                    CoordAction::Serve(d) => served = Some(d),
                    CoordAction::Forward(r) => req = r,
                }
                if effect == RequestEffect::Nominated {
                    let th = cache.config().nw_threshold;
                    let (nw, rs, phase) = (cache.nomination_window(), cache.remaining_selections(), cache.phase());
                    self.check(incoming_nf == NOT_NOMINATED, || {
                        format!("router {router} nominated a request carrying NF {incoming_nf}")
                    })?;
                    let window_ok =
                        nw <= th && (phase == crate::selection::Phase::Frozen || nw as usize <= rs.min(th as usize));
                    self.check(window_ok, || format!("router {router} NW={nw} RS={rs} NW_th={th} after nomination"))?;
                    self.next_token += 1;
                    token = self.next_token;
                    self.tokens.insert(token, Token { router, hop, written: false });
                    self.invariants.nominations += 1;
                }
                self.after_coord(router)?;
            }
        }

        let rc = &mut self.counters.routers[router as usize];
        match served {
            Some(data) => {
                rc.hits += 1;
                self.log(CacheEventKind::Hit, req.packet, router);
                self.counters.hop_total += h as u64 + 1;
                self.counters.traffic_total += h as u64;
                if token != NO_TOKEN {
                    self.check_nf_at_server(route_ix, hop, data.nf, token)?;
                }
                self.send_down(route_ix, hop, data, token);
            }
            None => {
                rc.forwarded += 1;
                self.log(CacheEventKind::Miss, req.packet, router);
                self.tap_miss(router, req.packet);
                if h + 1 < route.len() {
                    let delay = route.delays[h];
                    self.schedule(self.now + delay, Event::Request { route: route_ix, hop: hop + 1, req, token });
                } else {
                    // producer answers with the request's NF
                    self.counters.served_by_producer += 1;
                    self.counters.hop_total += route.len() as u64 + 1;
                    self.counters.traffic_total += route.len() as u64;
                    let data = DataPacket::answering(&req);
                    if token != NO_TOKEN {
                        self.check_nf_at_server(route_ix, route.len() as u16, data.nf, token)?;
                    }
                    let delay = 2.0 * route.delays[h];
                    self.schedule(self.now + delay, Event::Data { route: route_ix, hop, data, token });
                }
            }
        }
        Ok(())
    }

    /// The NF a server copies into the data equals the number of coordinated
    /// routers the request passed after its nominator.
    fn check_nf_at_server(&mut self, route_ix: u32, server_hop: u16, nf: i32, token: u64) -> Result<()> {
        self.invariants.max_nf = self.invariants.max_nf.max(nf);
        let nominator_hop = self.tokens.get(&token).map(|t| t.hop);
        let above = &self.coord_above[route_ix as usize];
        let expected =
            nominator_hop.map(|a| i32::from(above[usize::from(a) + 1]) - i32::from(above[usize::from(server_hop)]));
        self.check(expected == Some(nf), || {
            format!("token {token}: NF {nf} at hop {server_hop}, expected {expected:?}")
        })
    }

    /// Data served at `hop` continues to the router below it.
    fn send_down(&mut self, route_ix: u32, hop: u16, data: DataPacket, token: u64) {
        if hop == 0 {
            self.counters.delivered += 1;
            return;
        }
        let route = self.routes.by_index(route_ix as usize);
        let delay = route.delays[usize::from(hop) - 1];
        self.schedule(self.now + delay, Event::Data { route: route_ix, hop: hop - 1, data, token });
    }

    fn on_data(&mut self, route_ix: u32, hop: u16, mut data: DataPacket, token: u64) -> Result<()> {
        let route = self.routes.by_index(route_ix as usize);
        let router = route.routers[usize::from(hop)];
        let nf = data.nf;
        self.check(nf >= NOT_NOMINATED && nf <= self.max_route_len, || {
            format!("data NF {nf} out of range at router {router}")
        })?;
        match &mut self.nodes[router as usize] {
            NodeCache::Passive => {}
            NodeCache::Replacement(cache) => {
                if cache.capacity() > 0 && !cache.contains(&data.packet) {
                    let evicted = cache.insert(data.packet).map_err(|e| self.abort(e.to_string()))?;
                    let rc = &mut self.counters.routers[router as usize];
                    rc.writes += 1;
                    self.log(CacheEventKind::Write, data.packet, router);
                    if let Some(v) = evicted {
                        self.counters.routers[router as usize].evictions += 1;
                        self.log(CacheEventKind::Eviction, v, router);
                    }
                }
            }
            NodeCache::Coord(cache) => {
                let (fwd, effect) = cache.on_data(data, self.now).map_err(|e| self.abort(e.to_string()))?;
                data = fwd;
                if let DataEffect::Written { evicted, .. } = effect {
                    let rc = &mut self.counters.routers[router as usize];
                    rc.writes += 1;
                    if evicted.is_some() {
                        rc.evictions += 1;
                    }
                    self.log(CacheEventKind::Write, data.packet, router);
                    if let Some(v) = evicted {
                        self.log(CacheEventKind::Eviction, v, router);
                    }
                    let owner = self.tokens.get_mut(&token).map(|t| {
                        let first = !t.written;
                        t.written = true;
                        (t.router, first)
                    });
                    self.check(owner == Some((router, true)), || {
                        format!("router {router} wrote {} for token {token} owned by {owner:?}", data.packet)
                    })?;
                    self.invariants.tokens_written += 1;
                }
                self.after_coord(router)?;
            }
        }
        self.send_down(route_ix, hop, data, token);
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        let entered = self.counters.requests_entered;
        let delivered = self.counters.delivered;
        self.check(entered == delivered, || format!("{entered} requests entered but {delivered} answered"))?;
        for (i, rc) in self.counters.routers.iter().enumerate() {
            if rc.requests != rc.hits + rc.forwarded {
                return Err(self.abort(format!("router {i}: flow conservation broken {rc:?}")));
            }
        }
        if let Some((t, _)) = self.tokens.iter().find(|(_, t)| !t.written) {
            return Err(self.abort(format!("nomination token {t} never written")));
        }
        for r in 0..self.nodes.len() as u32 {
            self.audit(r, true)?;
        }
        Ok(())
    }
}

fn seeded_profiles(scenario: &Scenario, seed: u64) -> Vec<TrafficProfile> {
    scenario
        .profiles
        .iter()
        .enumerate()
        .map(|(i, p)| TrafficProfile { seed: derive_seed(seed, i as u64), ..p.clone() })
        .collect()
}

/// The packet-request stream a run of `scenario` with `seed` replays.
pub fn scenario_workload(scenario: &Scenario, seed: u64) -> Result<Vec<WorkloadEvent>> {
    scenario.validate()?;
    let sizes = scenario.content_sizes();
    let profiles = seeded_profiles(scenario, seed);
    let groups: Vec<u32> = (0..scenario.topology.groups.len() as u32).collect();
    Ok(generate_workload(&profiles, &sizes, &groups, scenario.duration)?.collect())
}

/// Executes one run of `scenario` with `seed`.
pub fn run_simulation(scenario: &Scenario, seed: u64) -> Result<RunResult> {
    run_simulation_with(scenario, seed, &RunOptions::default())
}

pub fn run_simulation_with(scenario: &Scenario, seed: u64, options: &RunOptions) -> Result<RunResult> {
    scenario.validate()?;
    let topology = &scenario.topology;
    let routes = shortest_path_routes(topology)?;
    let sizes = scenario.content_sizes();
    let profiles = seeded_profiles(scenario, seed);
    let groups: Vec<u32> = (0..topology.groups.len() as u32).collect();
    let workload = generate_workload(&profiles, &sizes, &groups, scenario.duration)?.peekable();

    let coord_config = CoordConfig {
        nw_threshold: scenario.coord.nw_threshold,
        frozen_period: scenario.coord.frozen_period,
        nw_timeout: scenario.nw_timeout(),
    };
    let nodes: Vec<NodeCache> = scenario
        .caches
        .iter()
        .enumerate()
        .map(|(r, spec)| match spec.policy {
            CachePolicy::None => NodeCache::Passive,
            CachePolicy::Sel => NodeCache::Coord(CoordCache::new(spec.capacity, r as u32, coord_config)),
            other => NodeCache::Replacement(ReplacementCache::new(
                other.replacement().expect("replacement policy"),
                spec.capacity,
                r as u32,
                seed,
            )),
        })
        .collect();
    let coord_above = routes
        .routes()
        .iter()
        .map(|route| {
            let mut above = vec![0u16; route.len() + 1];
            for h in (0..route.len()).rev() {
                let is_coord = scenario.caches[route.routers[h] as usize].policy == CachePolicy::Sel;
                above[h] = above[h + 1] + u16::from(is_coord);
            }
            above
        })
        .collect();
    let counters = RunCounters {
        route_requests: vec![0; routes.routes().len()],
        route_lengths: routes.routes().iter().map(|r| r.len() as u32).collect(),
        routers: scenario
            .caches
            .iter()
            .map(|c| RouterCounters {
                capacity: if c.policy == CachePolicy::None { 0 } else { c.capacity as u64 },
                ..Default::default()
            })
            .collect(),
        ..Default::default()
    };
    let max_route_len = routes.routes().iter().map(|r| r.len()).max().unwrap_or(0) as i32;

    let mut engine = Engine {
        now: 0.0,
        seq: 0,
        queue: BinaryHeap::new(),
        workload,
        nodes,
        routes: &routes,
        topology,
        coord_above,
        counters,
        tokens: FxHashMap::default(),
        next_token: 0,
        invariants: InvariantReport::default(),
        max_route_len,
        trace: VecDeque::with_capacity(TRACE_LEN),
        options,
        cache_events: Vec::new(),
        miss_streams: options.miss_taps.iter().map(|&r| (r, Vec::new())).collect(),
        events: 0,
    };
    engine.run()?;
    engine.finish()?;

    let coord_stats = engine
        .nodes
        .iter()
        .map(|n| match n {
            NodeCache::Coord(c) => Some(*c.stats()),
            _ => None,
        })
        .collect();
    Ok(RunResult {
        counters: engine.counters,
        coord_stats,
        invariants: engine.invariants,
        events_processed: engine.events,
        cache_events: engine.cache_events,
        miss_streams: engine.miss_streams,
    })
}
