//! Network topology, the topology file format, and shortest-path routing.
//!
//! Topology files are line oriented; `#` starts a comment:
//!
//! ```text
//! router   <name> <edge|core>
//! link     <router> <router> <delay-seconds>
//! producer <name> <router> <contents> <delay-seconds>
//! group    <name> <router> <consumers>
//! ```
//!
//! Ids are assigned in order of appearance. Producer catalogs are laid out
//! consecutively: the first producer owns contents `1..=contents`, and so on.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Propagation delay per link when none is given. Short enough that a cache
/// of several thousand slots completes its first selection cycle well within
/// a 200 s run.
pub const DEFAULT_LINK_DELAY: f64 = 0.002;

pub const ABILENE_TOPOLOGY: &str = include_str!("../data/abilene.topo");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouterRole {
    Edge,
    Core,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Router {
    pub name: String,
    pub role: RouterRole,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Producer {
    pub name: String,
    pub router: u32,
    pub first_content: u32,
    pub contents: u32,
    pub delay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsumerGroup {
    pub name: String,
    pub router: u32,
    pub consumers: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: u32,
    pub b: u32,
    pub delay: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub routers: Vec<Router>,
    pub producers: Vec<Producer>,
    pub groups: Vec<ConsumerGroup>,
    pub links: Vec<Link>,
}

/// Path from a consumer group's edge router to a producer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub group: u32,
    pub producer: u32,
    /// Routers in request order; the first is the group's edge router.
    pub routers: Vec<u32>,
    /// `delays[h]` is the delay from `routers[h]` to the next node up the
    /// route; the last entry is the producer link.
    pub delays: Vec<f64>,
}

impl Route {
    pub fn len(&self) -> usize {
        self.routers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routers.is_empty()
    }
}

/// Routes for every (group, producer) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingTable {
    producers: usize,
    routes: Vec<Route>,
}

impl RoutingTable {
    pub fn route(&self, group: u32, producer: u32) -> &Route {
        &self.routes[group as usize * self.producers + producer as usize]
    }

    pub fn route_index(&self, group: u32, producer: u32) -> usize {
        group as usize * self.producers + producer as usize
    }

    pub fn by_index(&self, i: usize) -> &Route {
        &self.routes[i]
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    /// Mean number of routers a request passes without caching, minus one,
    /// with every (group, producer) pair weighted equally.
    pub fn router_avg(&self) -> f64 {
        let total: usize = self.routes.iter().map(|r| r.len() - 1).sum();
        total as f64 / self.routes.len() as f64
    }
}

impl Topology {
    pub fn router_id(&self, name: &str) -> Option<u32> {
        self.routers.iter().position(|r| r.name == name).map(|i| i as u32)
    }

    pub fn total_contents(&self) -> u32 {
        self.producers.iter().map(|p| p.contents).sum()
    }

    /// Producer owning global content `id`.
    pub fn producer_of(&self, content: u32) -> Option<u32> {
        self.producers
            .iter()
            .position(|p| content >= p.first_content && content < p.first_content + p.contents)
            .map(|i| i as u32)
    }

    pub fn edge_routers(&self) -> impl Iterator<Item = u32> + '_ {
        self.routers.iter().enumerate().filter(|(_, r)| r.role == RouterRole::Edge).map(|(i, _)| i as u32)
    }

    fn adjacency(&self) -> Vec<Vec<(u32, f64)>> {
        let mut adj = vec![Vec::new(); self.routers.len()];
        for l in &self.links {
            adj[l.a as usize].push((l.b, l.delay));
            adj[l.b as usize].push((l.a, l.delay));
        }
        for list in &mut adj {
            list.sort_by_key(|&(n, _)| n);
        }
        adj
    }

    pub fn set_uniform_delay(&mut self, delay: f64) {
        for l in &mut self.links {
            l.delay = delay;
        }
        for p in &mut self.producers {
            p.delay = delay;
        }
    }

    pub fn add_router(&mut self, name: impl Into<String>, role: RouterRole) -> u32 {
        self.routers.push(Router { name: name.into(), role });
        self.routers.len() as u32 - 1
    }

    pub fn add_link(&mut self, a: u32, b: u32, delay: f64) {
        self.links.push(Link { a, b, delay });
    }

    pub fn add_producer(&mut self, name: impl Into<String>, router: u32, contents: u32, delay: f64) -> u32 {
        let first_content = 1 + self.total_contents();
        self.producers.push(Producer { name: name.into(), router, first_content, contents, delay });
        self.producers.len() as u32 - 1
    }

    pub fn add_group(&mut self, name: impl Into<String>, router: u32, consumers: u32) -> u32 {
        self.groups.push(ConsumerGroup { name: name.into(), router, consumers });
        self.groups.len() as u32 - 1
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.routers.len() as u32;
        let bad = |m: String| Err(Error::Topology(m));
        if n == 0 {
            return bad("no routers".into());
        }
        for l in &self.links {
            if l.a >= n || l.b >= n || l.a == l.b {
                return bad(format!("bad link {}-{}", l.a, l.b));
            }
            if !(l.delay >= 0.0) {
                return bad(format!("negative delay on link {}-{}", l.a, l.b));
            }
        }
        for g in &self.groups {
            if g.router >= n {
                return bad(format!("group {} attached to unknown router", g.name));
            }
            if self.routers[g.router as usize].role != RouterRole::Edge {
                return bad(format!("group {} attached to a core router", g.name));
            }
        }
        for p in &self.producers {
            if p.router >= n {
                return bad(format!("producer {} attached to unknown router", p.name));
            }
            if p.contents == 0 {
                return bad(format!("producer {} has no contents", p.name));
            }
        }
        if self.groups.is_empty() || self.producers.is_empty() {
            return bad("need at least one consumer group and one producer".into());
        }
        let dist = self.hops_from(0);
        if dist.iter().any(|d| d.is_none()) {
            return bad("router graph is not connected".into());
        }
        Ok(())
    }

    /// BFS hop counts from `root` over the router graph.
    fn hops_from(&self, root: u32) -> Vec<Option<u32>> {
        let adj = self.adjacency();
        let mut dist = vec![None; self.routers.len()];
        dist[root as usize] = Some(0);
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u as usize].unwrap();
            for &(v, _) in &adj[u as usize] {
                if dist[v as usize].is_none() {
                    dist[v as usize] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Longest shortest path, in hops, over routers and producers.
    pub fn diameter(&self) -> u32 {
        let producer_routers: Vec<u32> = self.producers.iter().map(|p| p.router).collect();
        let mut best = 0;
        for r in 0..self.routers.len() as u32 {
            let dist = self.hops_from(r);
            let to_router = dist.iter().flatten().copied().max().unwrap_or(0);
            let to_producer = producer_routers.iter().filter_map(|&p| dist[p as usize]).max().map_or(0, |d| d + 1);
            best = best.max(to_router).max(to_producer);
            if producer_routers.contains(&r) {
                // producer to anything beyond its router
                best = best.max(to_router + 1).max(to_producer + 1);
            }
        }
        best
    }

    pub fn max_link_delay(&self) -> f64 {
        self.links.iter().map(|l| l.delay).chain(self.producers.iter().map(|p| p.delay)).fold(0.0, f64::max)
    }
}

/// Shortest paths by hop count from every group to every producer. Among
/// equally short paths the one with the lexicographically smallest router-id
/// sequence wins.
pub fn shortest_path_routes(topology: &Topology) -> Result<RoutingTable> {
    topology.validate()?;
    let adj = topology.adjacency();
    let mut routes = Vec::with_capacity(topology.groups.len() * topology.producers.len());
    let to_producer: Vec<Vec<Option<u32>>> = topology.producers.iter().map(|p| topology.hops_from(p.router)).collect();
    for (gi, group) in topology.groups.iter().enumerate() {
        for (pi, producer) in topology.producers.iter().enumerate() {
            let dist = &to_producer[pi];
            let mut cur = group.router;
            let Some(mut d) = dist[cur as usize] else {
                return Err(Error::Topology(format!("producer {} unreachable from {}", producer.name, group.name)));
            };
            let mut routers = vec![cur];
            let mut delays = Vec::new();
            while d > 0 {
                let &(next, delay) = adj[cur as usize]
                    .iter()
                    .find(|&&(v, _)| dist[v as usize] == Some(d - 1))
                    .expect("BFS predecessor exists");
                delays.push(delay);
                routers.push(next);
                cur = next;
                d -= 1;
            }
            delays.push(producer.delay);
            routes.push(Route { group: gi as u32, producer: pi as u32, routers, delays });
        }
    }
    Ok(RoutingTable { producers: topology.producers.len(), routes })
}

/// Full binary tree of `levels` router levels; each leaf is an edge router
/// serving one consumer group, and a single producer hangs off the root.
pub fn build_binary_tree(levels: u32, consumers_per_group: u32, contents: u32, delay: f64) -> Result<Topology> {
    if levels < 2 {
        return Err(Error::Topology(format!("a tree needs at least 2 levels, got {levels}")));
    }
    let total = (1u32 << levels) - 1;
    let first_leaf = (1u32 << (levels - 1)) - 1;
    let mut t = Topology::default();
    for i in 0..total {
        let role = if i >= first_leaf { RouterRole::Edge } else { RouterRole::Core };
        t.add_router(format!("r{i}"), role);
    }
    for i in 1..total {
        t.add_link((i - 1) / 2, i, delay);
    }
    for leaf in first_leaf..total {
        t.add_group(format!("g{}", leaf - first_leaf), leaf, consumers_per_group);
    }
    t.add_producer("p0", 0, contents, delay);
    Ok(t)
}

/// Abilene backbone from the bundled file; every core router gets one edge
/// router with a consumer group and one producer.
pub fn build_abilene(consumers_per_group: u32, contents_per_producer: u32, delay: Option<f64>) -> Result<Topology> {
    let mut t = parse_topology(ABILENE_TOPOLOGY)?;
    let cores: Vec<(u32, String)> = t.routers.iter().enumerate().map(|(i, r)| (i as u32, r.name.clone())).collect();
    let d = delay.unwrap_or(DEFAULT_LINK_DELAY);
    for (id, name) in &cores {
        let edge = t.add_router(format!("{name}-edge"), RouterRole::Edge);
        t.add_link(*id, edge, d);
        t.add_group(format!("{name}-consumers"), edge, consumers_per_group);
    }
    for (id, name) in &cores {
        t.add_producer(format!("{name}-producer"), *id, contents_per_producer, d);
    }
    if let Some(d) = delay {
        t.set_uniform_delay(d);
    }
    t.validate()?;
    Ok(t)
}

pub fn parse_topology(text: &str) -> Result<Topology> {
    let mut t = Topology::default();
    let mut names: BTreeMap<String, u32> = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: &str| Error::Topology(format!("line {}: {m}: `{line}`", n + 1));
        let f: Vec<&str> = line.split_whitespace().collect();
        let router = |name: &str| names.get(name).copied().ok_or_else(|| err("unknown router"));
        let num = |s: &str| s.parse::<f64>().map_err(|_| err("bad number"));
        let int = |s: &str| s.parse::<u32>().map_err(|_| err("bad integer"));
        match (f[0], f.len()) {
            ("router", 3) => {
                let role = match f[2] {
                    "edge" => RouterRole::Edge,
                    "core" => RouterRole::Core,
                    _ => return Err(err("role must be edge or core")),
                };
                if names.contains_key(f[1]) {
                    return Err(err("duplicate router"));
                }
                let id = t.add_router(f[1], role);
                names.insert(f[1].to_string(), id);
            }
            ("link", 4) => {
                let (a, b) = (router(f[1])?, router(f[2])?);
                t.add_link(a, b, num(f[3])?);
            }
            ("producer", 5) => {
                let r = router(f[2])?;
                t.add_producer(f[1], r, int(f[3])?, num(f[4])?);
            }
            ("group", 4) => {
                let r = router(f[2])?;
                t.add_group(f[1], r, int(f[3])?);
            }
            _ => return Err(err("unrecognised line")),
        }
    }
    if t.routers.is_empty() {
        return Err(Error::Topology("no routers defined".into()));
    }
    Ok(t)
}

pub fn format_topology(t: &Topology) -> String {
    let mut out = String::new();
    for r in &t.routers {
        let role = match r.role {
            RouterRole::Edge => "edge",
            RouterRole::Core => "core",
        };
        out.push_str(&format!("router {} {role}\n", r.name));
    }
    let name = |i: u32| &t.routers[i as usize].name;
    for l in &t.links {
        out.push_str(&format!("link {} {} {}\n", name(l.a), name(l.b), l.delay));
    }
    for p in &t.producers {
        out.push_str(&format!("producer {} {} {} {}\n", p.name, name(p.router), p.contents, p.delay));
    }
    for g in &t.groups {
        out.push_str(&format!("group {} {} {}\n", g.name, name(g.router), g.consumers));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_sizes() {
        let t = build_binary_tree(5, 125, 1000, 0.01).unwrap();
        assert_eq!(t.routers.len(), 31);
        assert_eq!(t.edge_routers().count(), 16);
        assert_eq!(t.groups.len(), 16);
        assert!(t.groups.iter().all(|g| g.consumers == 125));
        let t = build_binary_tree(2, 1, 10, 0.01).unwrap();
        assert_eq!(t.routers.len(), 3);
        assert_eq!(t.edge_routers().count(), 2);
        assert!(build_binary_tree(1, 1, 10, 0.01).is_err());
    }

    #[test]
    fn tree_routes_climb_to_root() {
        for levels in 2..=5 {
            let t = build_binary_tree(levels, 1, 10, 0.01).unwrap();
            let rt = shortest_path_routes(&t).unwrap();
            for (g, route) in rt.routes().iter().enumerate() {
                assert_eq!(route.len(), levels as usize);
                assert_eq!(route.routers[0], t.groups[g].router);
                assert_eq!(*route.routers.last().unwrap(), 0);
                assert_eq!(route.delays.len(), route.len());
            }
            assert_eq!(rt.router_avg(), f64::from(levels - 1));
        }
    }

    #[test]
    fn abilene_shape() {
        let t = build_abilene(100, 100, None).unwrap();
        assert_eq!(t.routers.iter().filter(|r| r.role == RouterRole::Core).count(), 11);
        assert_eq!(t.edge_routers().count(), 11);
        assert_eq!(t.producers.len(), 11);
        assert_eq!(t.total_contents(), 1100);
        assert!(t.groups.iter().all(|g| g.consumers == 100));
        assert_eq!(t.links.len(), 14 + 11);
        assert_eq!(t.producer_of(1), Some(0));
        assert_eq!(t.producer_of(1100), Some(10));
        assert_eq!(t.producer_of(1101), None);
        let rt = shortest_path_routes(&t).unwrap();
        assert_eq!(rt.routes().len(), 121);
        for r in rt.routes() {
            assert_eq!(r.routers[0], t.groups[r.group as usize].router);
            assert_eq!(*r.routers.last().unwrap(), t.producers[r.producer as usize].router);
        }
    }

    #[test]
    fn ties_pick_lowest_ids() {
        // square a-b-d, a-c-d: two equal paths from a to d
        let text = "router a edge\nrouter c core\nrouter b core\nrouter d core\n\
                    link a c 0.01\nlink a b 0.01\nlink b d 0.01\nlink c d 0.01\n\
                    producer p d 5 0.01\ngroup g a 10\n";
        let t = parse_topology(text).unwrap();
        let rt = shortest_path_routes(&t).unwrap();
        // c has id 1, b has id 2
        assert_eq!(rt.route(0, 0).routers, vec![0, 1, 3]);
    }

    #[test]
    fn parse_and_format_roundtrip() {
        let t = build_binary_tree(3, 7, 50, 0.002).unwrap();
        let back = parse_topology(&format_topology(&t)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(parse_topology("router a hub\n").is_err());
        assert!(parse_topology("router a core\nlink a b 0.1\n").is_err());
        assert!(parse_topology("router a core\nlink a a x\n").is_err());
        assert!(parse_topology("# nothing\n").is_err());
        let disconnected = "router a edge\nrouter b core\nproducer p b 1 0.01\ngroup g a 1\n";
        let t = parse_topology(disconnected).unwrap();
        assert!(shortest_path_routes(&t).is_err());
    }

    #[test]
    fn diameter_counts_producer_links() {
        let t = build_binary_tree(4, 1, 10, 0.01).unwrap();
        assert_eq!(t.diameter(), 6);
        let t = build_binary_tree(2, 1, 10, 0.01).unwrap();
        assert_eq!(t.diameter(), 2);
    }
}
