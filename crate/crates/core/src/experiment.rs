//! Experiment presets, cache-size sweeps and result files.
//!
//! Result CSVs carry a `schema_version` column. Floats are written in Rust's
//! shortest round-trip form and absent values as empty fields, so reruns are
//! byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coordinated::CoordStats;
use crate::engine::{run_simulation, CachePolicy, CacheSpec, CoordSettings, InvariantReport, Scenario};
use crate::error::{Error, Result};
use crate::irm::{
    hit_ratio_closed_form, lru_stationary_oracle, simulate_irm_hit_ratio, zipf_popularity, IrmPolicy, IrmSimulation,
};
use crate::metrics::{compute_report, MetricsReport, SDStats};
use crate::model::derive_seed;
use crate::replacement::Policy;
use crate::tandem::{run_tandem, FrontPolicy, TandemConfig, TandemResult};
use crate::topology::{
    build_abilene, build_binary_tree, parse_topology, shortest_path_routes, RouterRole, Topology, DEFAULT_LINK_DELAY,
};
use crate::traffic::TrafficProfile;

pub const SCHEMA_VERSION: u32 = 1;

pub const DESK_DURATION: f64 = 200.0;
pub const DESK_SEEDS: [u64; 3] = [1, 2, 3];
pub const FULL_DURATION: f64 = 1000.0;
pub const FULL_SEEDS: [u64; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
pub const DESK_TANDEM_REQUESTS: u64 = 1_000_000;
pub const FULL_TANDEM_REQUESTS: u64 = 15_000_000;

pub const TREE_LEVELS: u32 = 5;
pub const TREE_CONSUMERS: u32 = 125;
pub const TREE_CONTENTS: u32 = 1000;
pub const TREE_CONTENT_RATE: f64 = 12.5;
pub const ABILENE_CONSUMERS: u32 = 100;
pub const ABILENE_CONTENTS: u32 = 100;
pub const ABILENE_CONTENT_RATE: f64 = 22.0;
pub const ABILENE_ALPHAS: [f64; 4] = [0.8, 0.9, 1.0, 1.1];
pub const MEAN_CONTENT_SIZE: f64 = 100.0;
pub const CBR_RATE: f64 = 100.0;
pub const TANDEM_CONTENTS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "tandem-fig3-4")]
    Tandem,
    #[serde(rename = "tree-fig7")]
    Tree,
    #[serde(rename = "abilene-fig8")]
    Abilene,
    #[serde(rename = "irm-theorem1")]
    IrmLaws,
    #[serde(rename = "custom")]
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Tandem, Preset::Tree, Preset::Abilene, Preset::IrmLaws, Preset::Custom];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Tandem => "tandem-fig3-4",
            Preset::Tree => "tree-fig7",
            Preset::Abilene => "abilene-fig8",
            Preset::IrmLaws => "irm-theorem1",
            Preset::Custom => "custom",
        }
    }

    fn default_grid(self) -> Vec<f64> {
        match self {
            Preset::Tandem => vec![1.0, 5.0],
            Preset::IrmLaws => Vec::new(),
            _ => vec![0.1, 0.5, 1.0, 2.5, 5.0],
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Combination {
    /// LRU everywhere, equal sizes.
    #[serde(rename = "LRU-EQU")]
    LruEqu,
    /// Coordinated selection everywhere, equal sizes.
    #[serde(rename = "SEL-EQU")]
    SelEqu,
    /// LRU at edge routers only, each sized EQU x average routers per route.
    #[serde(rename = "LRU-BIG")]
    LruBig,
}

impl Combination {
    pub const ALL: [Combination; 3] = [Combination::LruEqu, Combination::SelEqu, Combination::LruBig];

    pub fn name(self) -> &'static str {
        match self {
            Combination::LruEqu => "LRU-EQU",
            Combination::SelEqu => "SEL-EQU",
            Combination::LruBig => "LRU-BIG",
        }
    }
}

impl FromStr for Combination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Combination::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Scenario(format!("unknown combination `{s}`")))
    }
}

/// Where a custom scenario's topology comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TopologySource {
    Tree {
        #[serde(default = "default_levels")]
        levels: u32,
        #[serde(default = "default_tree_consumers")]
        consumers: u32,
        #[serde(default = "default_tree_contents")]
        contents: u32,
    },
    Abilene {
        #[serde(default = "default_abilene_consumers")]
        consumers: u32,
        #[serde(default = "default_abilene_contents")]
        contents: u32,
    },
    /// Topology file; relative paths resolve against the scenario file.
    File { path: PathBuf },
}

fn default_levels() -> u32 {
    TREE_LEVELS
}
fn default_tree_consumers() -> u32 {
    TREE_CONSUMERS
}
fn default_tree_contents() -> u32 {
    TREE_CONTENTS
}
fn default_abilene_consumers() -> u32 {
    ABILENE_CONSUMERS
}
fn default_abilene_contents() -> u32 {
    ABILENE_CONTENTS
}

/// Traffic of every consumer group; the content rate is split evenly over
/// producers. An empty `alphas` list means Zipf(1) everywhere; otherwise each
/// producer's exponent is drawn from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSettings {
    pub content_rate: f64,
    pub alphas: Vec<f64>,
    pub mean_size: f64,
    pub cbr_rate: f64,
}

impl Default for TrafficSettings {
    fn default() -> Self {
        TrafficSettings {
            content_rate: TREE_CONTENT_RATE,
            alphas: Vec::new(),
            mean_size: MEAN_CONTENT_SIZE,
            cbr_rate: CBR_RATE,
        }
    }
}

/// Scenario file contents (TOML). Fields left out fall back to the
/// experiment configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "default_name")]
    pub name: String,
    pub topology: TopologySource,
    #[serde(default)]
    pub traffic: TrafficSettings,
    #[serde(default)]
    pub coord: Option<CoordSettings>,
    pub link_delay: Option<f64>,
    pub duration: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub combinations: Option<Vec<Combination>>,
    pub cache_size_grid: Option<Vec<f64>>,
    #[serde(default = "default_catalog_seed")]
    pub catalog_seed: u64,
}

fn default_name() -> String {
    "custom".into()
}
fn default_catalog_seed() -> u64 {
    1
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut file: ScenarioFile = toml::from_str(&text)?;
        if let TopologySource::File { path: p } = &mut file.topology {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(file)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: Preset,
    /// Cache sizes in percent of the catalog's packet count (tandem: of its
    /// content count).
    pub cache_size_grid: Vec<f64>,
    pub combinations: Vec<Combination>,
    pub seeds: Vec<u64>,
    pub duration: f64,
    pub tree_levels: u32,
    pub link_delay: f64,
    pub coord: CoordSettings,
    pub tandem_requests: u64,
    pub custom: Option<ScenarioFile>,
}

impl ExperimentConfig {
    /// Desk-scale defaults of a preset.
    pub fn new(preset: Preset) -> Self {
        ExperimentConfig {
            preset,
            cache_size_grid: preset.default_grid(),
            combinations: Combination::ALL.to_vec(),
            seeds: DESK_SEEDS.to_vec(),
            duration: DESK_DURATION,
            tree_levels: TREE_LEVELS,
            link_delay: DEFAULT_LINK_DELAY,
            coord: CoordSettings::default(),
            tandem_requests: DESK_TANDEM_REQUESTS,
            custom: None,
        }
    }

    pub fn full_scale(mut self) -> Self {
        self.seeds = FULL_SEEDS.to_vec();
        self.duration = FULL_DURATION;
        self.tandem_requests = FULL_TANDEM_REQUESTS;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Scenario("at least one seed is required".into()));
        }
        if self.cache_size_grid.iter().any(|&g| !(g > 0.0 && g <= 100.0)) {
            return Err(Error::Scenario("cache sizes must lie in (0, 100] percent".into()));
        }
        if self.preset != Preset::IrmLaws && self.cache_size_grid.is_empty() {
            return Err(Error::Scenario("empty cache size grid".into()));
        }
        if matches!(self.preset, Preset::Tree | Preset::Abilene | Preset::Custom) && self.combinations.is_empty() {
            return Err(Error::Scenario("no combinations selected".into()));
        }
        if !(self.duration > 0.0) {
            return Err(Error::Scenario("duration must be positive".into()));
        }
        if self.preset == Preset::Custom && self.custom.is_none() {
            return Err(Error::Scenario("the custom preset needs a scenario file".into()));
        }
        Ok(())
    }
}

/// One network run of a sweep.
#[derive(Clone, Debug)]
pub struct PlannedRun {
    pub combination: Combination,
    pub cache_pct: f64,
    pub seed: u64,
    pub scenario: Scenario,
}

/// Base network of a preset with its sweep axes; caches still unassigned.
struct Sweep {
    network: Network,
    grid: Vec<f64>,
    combinations: Vec<Combination>,
    seeds: Vec<u64>,
}

/// Base network of a preset, with caches still unassigned.
struct Network {
    name: String,
    topology: Topology,
    profiles: Vec<TrafficProfile>,
    coord: CoordSettings,
    catalog_seed: u64,
    duration: f64,
}

fn profiles_for(topology: &Topology, traffic: &TrafficSettings, catalog_seed: u64) -> Vec<TrafficProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(catalog_seed, 0xa1fa));
    let per_producer = traffic.content_rate / topology.producers.len() as f64;
    topology
        .producers
        .iter()
        .enumerate()
        .map(|(i, p)| TrafficProfile {
            alpha: traffic.alphas.choose(&mut rng).copied().unwrap_or(1.0),
            first_content: p.first_content,
            contents: p.contents,
            content_rate: per_producer,
            mean_size: traffic.mean_size,
            cbr_rate: traffic.cbr_rate,
            seed: i as u64,
        })
        .collect()
}

fn base_network(config: &ExperimentConfig) -> Result<Sweep> {
    let grid = config.cache_size_grid.clone();
    let combos = config.combinations.clone();
    let seeds = config.seeds.clone();
    match config.preset {
        Preset::Tree => {
            let topology = build_binary_tree(config.tree_levels, TREE_CONSUMERS, TREE_CONTENTS, config.link_delay)?;
            let profiles = profiles_for(&topology, &TrafficSettings::default(), 1);
            let name = format!("tree-{}", config.tree_levels);
            let network =
                Network { name, topology, profiles, coord: config.coord, catalog_seed: 1, duration: config.duration };
            Ok(Sweep { network, grid, combinations: combos, seeds })
        }
        Preset::Abilene => {
            let topology = build_abilene(ABILENE_CONSUMERS, ABILENE_CONTENTS, Some(config.link_delay))?;
            let traffic = TrafficSettings {
                content_rate: ABILENE_CONTENT_RATE,
                alphas: ABILENE_ALPHAS.to_vec(),
                ..Default::default()
            };
            let profiles = profiles_for(&topology, &traffic, 1);
            let network = Network {
                name: "abilene".into(),
                topology,
                profiles,
                coord: config.coord,
                catalog_seed: 1,
                duration: config.duration,
            };
            Ok(Sweep { network, grid, combinations: combos, seeds })
        }
        Preset::Custom => {
            let file = config.custom.as_ref().ok_or_else(|| Error::Scenario("missing scenario file".into()))?;
            let delay = file.link_delay.unwrap_or(config.link_delay);
            let topology = match &file.topology {
                TopologySource::Tree { levels, consumers, contents } => {
                    build_binary_tree(*levels, *consumers, *contents, delay)?
                }
                TopologySource::Abilene { consumers, contents } => build_abilene(*consumers, *contents, Some(delay))?,
                TopologySource::File { path } => {
                    let mut t = parse_topology(&fs::read_to_string(path)?)?;
                    if let Some(d) = file.link_delay {
                        t.set_uniform_delay(d);
                    }
                    t
                }
            };
            let profiles = profiles_for(&topology, &file.traffic, file.catalog_seed);
            let network = Network {
                name: file.name.clone(),
                topology,
                profiles,
                coord: file.coord.unwrap_or(config.coord),
                catalog_seed: file.catalog_seed,
                duration: file.duration.unwrap_or(config.duration),
            };
            Ok(Sweep {
                network,
                grid: file.cache_size_grid.clone().unwrap_or(grid),
                combinations: file.combinations.clone().unwrap_or(combos),
                seeds: file.seeds.clone().unwrap_or(seeds),
            })
        }
        Preset::Tandem | Preset::IrmLaws => {
            Err(Error::Scenario(format!("{} has no network scenarios", config.preset.name())))
        }
    }
}

/// Per-router cache size for equal-size combinations.
pub fn equal_capacity(total_packets: u64, pct: f64) -> usize {
    (total_packets as f64 * pct / 100.0).round() as usize
}

fn cache_layout(topology: &Topology, combination: Combination, equ: usize, router_avg: f64) -> Vec<CacheSpec> {
    topology
        .routers
        .iter()
        .map(|r| match combination {
            Combination::LruEqu => CacheSpec { policy: CachePolicy::Lru, capacity: equ },
            Combination::SelEqu => CacheSpec { policy: CachePolicy::Sel, capacity: equ },
            Combination::LruBig => CacheSpec {
                policy: CachePolicy::Lru,
                capacity: if r.role == RouterRole::Edge { (equ as f64 * router_avg).round() as usize } else { 0 },
            },
        })
        .collect()
}

/// Resolves a network preset into one scenario per (combination, size, seed).
pub fn expand_preset(config: &ExperimentConfig) -> Result<Vec<PlannedRun>> {
    config.validate()?;
    let Sweep { network: net, grid, combinations: combos, seeds } = base_network(config)?;
    net.topology.validate()?;
    let router_avg = shortest_path_routes(&net.topology)?.router_avg();
    let probe = Scenario {
        name: net.name.clone(),
        topology: net.topology.clone(),
        caches: Vec::new(),
        profiles: net.profiles.clone(),
        duration: net.duration,
        coord: net.coord,
        catalog_seed: net.catalog_seed,
    };
    let total_packets: u64 = probe.content_sizes().iter().map(|&s| u64::from(s)).sum();
    let mut runs = Vec::new();
    for &combination in &combos {
        for &pct in &grid {
            let equ = equal_capacity(total_packets, pct);
            let caches = cache_layout(&net.topology, combination, equ, router_avg);
            for &seed in &seeds {
                let scenario = Scenario { caches: caches.clone(), ..probe.clone() };
                scenario.validate()?;
                runs.push(PlannedRun { combination, cache_pct: pct, seed, scenario });
            }
        }
    }
    Ok(runs)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultRow {
    pub preset: String,
    pub scenario: String,
    pub combination: Combination,
    pub cache_pct: f64,
    pub seed: u64,
    pub report: MetricsReport,
    pub invariants: InvariantReport,
    pub coord: Option<CoordStats>,
    pub events: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunFailure {
    pub combination: Combination,
    pub cache_pct: f64,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IrmRow {
    pub alpha: f64,
    pub contents: usize,
    pub capacity: usize,
    pub seed: Option<u64>,
    pub lru_closed_form: Option<f64>,
    pub sel_closed_form: Option<f64>,
    pub lru_markov: Option<f64>,
    pub lru_simulated: Option<f64>,
    pub sel_simulated: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<RunFailure>,
    pub tandem: Vec<TandemResult>,
    pub irm: Vec<IrmRow>,
}

fn sum_coord(stats: &[Option<CoordStats>]) -> Option<CoordStats> {
    let mut any = false;
    let mut t = CoordStats::default();
    for s in stats.iter().flatten() {
        any = true;
        t.hits += s.hits;
        t.misses += s.misses;
        t.nominations += s.nominations;
        t.writes += s.writes;
        t.evictions += s.evictions;
        t.collisions += s.collisions;
        t.reselections += s.reselections;
        t.freezes += s.freezes;
        t.nw_timeouts += s.nw_timeouts;
    }
    any.then_some(t)
}

/// Runs the planned network scenarios in parallel; rows come back sorted by
/// (combination, size, seed).
pub fn run_planned(preset: Preset, runs: &[PlannedRun]) -> (Vec<ResultRow>, Vec<RunFailure>) {
    let outcomes: Vec<std::result::Result<ResultRow, RunFailure>> = runs
        .par_iter()
        .map(|r| match run_simulation(&r.scenario, r.seed) {
            Ok(res) => Ok(ResultRow {
                preset: preset.name().into(),
                scenario: r.scenario.name.clone(),
                combination: r.combination,
                cache_pct: r.cache_pct,
                seed: r.seed,
                report: compute_report(&res.counters),
                invariants: res.invariants,
                coord: sum_coord(&res.coord_stats),
                events: res.events_processed,
            }),
            Err(e) => Err(RunFailure {
                combination: r.combination,
                cache_pct: r.cache_pct,
                seed: r.seed,
                error: e.to_string(),
            }),
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => rows.push(r),
            Err(f) => failures.push(f),
        }
    }
    rows.sort_by(|a, b| {
        a.combination.cmp(&b.combination).then(a.cache_pct.total_cmp(&b.cache_pct)).then(a.seed.cmp(&b.seed))
    });
    failures.sort_by(|a, b| {
        a.combination.cmp(&b.combination).then(a.cache_pct.total_cmp(&b.cache_pct)).then(a.seed.cmp(&b.seed))
    });
    (rows, failures)
}

/// Tandem sweep over every (front, back) pair, size and seed.
pub fn run_tandem_sweep(config: &ExperimentConfig) -> Result<Vec<TandemResult>> {
    let q = zipf_popularity(1.0, TANDEM_CONTENTS)?;
    let mut plan = Vec::new();
    for &pct in &config.cache_size_grid {
        let capacity = (TANDEM_CONTENTS as f64 * pct / 100.0).round() as usize;
        for front in FrontPolicy::ALL {
            for back in Policy::ALL {
                for &seed in &config.seeds {
                    plan.push(TandemConfig { front, back, capacity, requests: config.tandem_requests, seed });
                }
            }
        }
    }
    plan.par_iter().map(|c| run_tandem(&q, *c)).collect()
}

/// Closed forms against the Markov oracle on small catalogs, plus simulated
/// hit ratios on Zipf(1, 100).
pub fn run_irm_grid(config: &ExperimentConfig, requests: u64) -> Result<Vec<IrmRow>> {
    let mut rows = Vec::new();
    for alpha in [0.5, 1.0, 1.5] {
        for n in 2..=6usize {
            for c in 1..=3usize.min(n - 1) {
                let q = zipf_popularity(alpha, n)?;
                let law = lru_stationary_oracle(&q, c)?;
                let markov = crate::irm::hit_ratio_from_law(&q, law.iter().map(|(s, p)| (s, *p)));
                rows.push(IrmRow {
                    alpha,
                    contents: n,
                    capacity: c,
                    seed: None,
                    lru_closed_form: Some(hit_ratio_closed_form(&q, c, IrmPolicy::Lru)?),
                    sel_closed_form: Some(hit_ratio_closed_form(&q, c, IrmPolicy::Sel)?),
                    lru_markov: Some(markov),
                    lru_simulated: None,
                    sel_simulated: None,
                });
            }
        }
    }
    let q = zipf_popularity(1.0, 100)?;
    let plan: Vec<(usize, u64)> =
        [5usize, 10, 20].iter().flat_map(|&c| config.seeds.iter().map(move |&s| (c, s))).collect();
    let sims: Vec<IrmRow> = plan
        .par_iter()
        .map(|&(c, seed)| IrmRow {
            alpha: 1.0,
            contents: 100,
            capacity: c,
            seed: Some(seed),
            lru_closed_form: None,
            sel_closed_form: None,
            lru_markov: None,
            lru_simulated: Some(simulate_irm_hit_ratio(&q, IrmSimulation::new(c, IrmPolicy::Lru, requests, seed))),
            sel_simulated: Some(simulate_irm_hit_ratio(&q, IrmSimulation::new(c, IrmPolicy::Sel, requests, seed))),
        })
        .collect();
    rows.extend(sims);
    Ok(rows)
}

/// Runs the whole experiment in memory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let mut table = ResultTable::default();
    match config.preset {
        Preset::Tandem => table.tandem = run_tandem_sweep(config)?,
        Preset::IrmLaws => table.irm = run_irm_grid(config, config.tandem_requests)?,
        preset => {
            let runs = expand_preset(config)?;
            let (rows, failures) = run_planned(preset, &runs);
            table.rows = rows;
            table.failures = failures;
        }
    }
    Ok(table)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_u(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const RESULTS_HEADER: &str =
    "schema_version,preset,scenario,combination,cache_pct,seed,requests,producer_requests,hit_net,h_red,t_red,e_avg,evictions,slots";

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for r in rows {
        let m = &r.report;
        let _ = writeln!(
            s,
            "{SCHEMA_VERSION},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.preset,
            r.scenario,
            r.combination.name(),
            r.cache_pct,
            r.seed,
            m.requests,
            m.producer_requests,
            opt(m.hit_net),
            opt(m.h_red),
            opt(m.t_red),
            opt(m.e_avg),
            m.evictions,
            m.slots
        );
    }
    s
}

/// Mean and sample standard deviation; absent when no value is defined.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Some((mean, var.sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub combination: Combination,
    pub cache_pct: f64,
    pub runs: usize,
    pub hit_net: Option<(f64, f64)>,
    pub h_red: Option<(f64, f64)>,
    pub t_red: Option<(f64, f64)>,
    pub e_avg: Option<(f64, f64)>,
}

/// Aggregates sorted rows per (combination, size).
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let key = (rows[i].combination, rows[i].cache_pct);
        let group: Vec<&ResultRow> = rows[i..].iter().take_while(|r| (r.combination, r.cache_pct) == key).collect();
        let col = |f: fn(&MetricsReport) -> Option<f64>| {
            mean_std(&group.iter().filter_map(|r| f(&r.report)).collect::<Vec<_>>())
        };
        out.push(SummaryRow {
            combination: key.0,
            cache_pct: key.1,
            runs: group.len(),
            hit_net: col(|m| m.hit_net),
            h_red: col(|m| m.h_red),
            t_red: col(|m| m.t_red),
            e_avg: col(|m| m.e_avg),
        });
        i += group.len();
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(
        "schema_version,combination,cache_pct,runs,hit_net_mean,hit_net_std,h_red_mean,h_red_std,t_red_mean,t_red_std,e_avg_mean,e_avg_std\n",
    );
    let pair = |v: Option<(f64, f64)>| match v {
        Some((m, d)) => format!("{m},{d}"),
        None => ",".into(),
    };
    for r in rows {
        let _ = writeln!(
            s,
            "{SCHEMA_VERSION},{},{},{},{},{},{},{}",
            r.combination.name(),
            r.cache_pct,
            r.runs,
            pair(r.hit_net),
            pair(r.h_red),
            pair(r.t_red),
            pair(r.e_avg)
        );
    }
    s
}

fn sd_cols(s: &SDStats) -> String {
    format!("{},{},{},{}", opt_u(s.min_sd), opt_u(s.max_sd), opt(s.avg_sd), s.defined_count())
}

pub fn tandem_csv(rows: &[TandemResult]) -> String {
    let mut s = String::from(
        "schema_version,front,back,capacity,requests,seed,front_hit_ratio,back_hit_ratio,\
         input_min_sd,input_max_sd,input_avg_sd,input_defined,miss_min_sd,miss_max_sd,miss_avg_sd,miss_defined\n",
    );
    for r in rows {
        let c = &r.config;
        let _ = writeln!(
            s,
            "{SCHEMA_VERSION},{},{},{},{},{},{},{},{},{}",
            c.front.name(),
            c.back.name(),
            c.capacity,
            c.requests,
            c.seed,
            r.front_hit_ratio,
            opt(r.back_hit_ratio),
            sd_cols(&r.input_sd),
            sd_cols(&r.miss_sd)
        );
    }
    s
}

/// Stack-distance histograms of the tandem streams; the input stream does not
/// depend on the back cache, so it is written once per (front, size, seed).
pub fn sd_histogram_csv(rows: &[TandemResult]) -> String {
    let mut s = String::from("schema_version,front,capacity,seed,stream,sd,count\n");
    for r in rows.iter().filter(|r| r.config.back == Policy::Lru) {
        let c = &r.config;
        for (stream, stats) in [("input", &r.input_sd), ("miss", &r.miss_sd)] {
            for (sd, count) in &stats.histogram {
                let _ =
                    writeln!(s, "{SCHEMA_VERSION},{},{},{},{stream},{sd},{count}", c.front.name(), c.capacity, c.seed);
            }
        }
    }
    s
}

pub fn irm_csv(rows: &[IrmRow]) -> String {
    let mut s = String::from(
        "schema_version,alpha,contents,capacity,seed,lru_closed_form,sel_closed_form,lru_markov,lru_simulated,sel_simulated\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{SCHEMA_VERSION},{},{},{},{},{},{},{},{},{}",
            r.alpha,
            r.contents,
            r.capacity,
            opt_u(r.seed),
            opt(r.lru_closed_form),
            opt(r.sel_closed_form),
            opt(r.lru_markov),
            opt(r.lru_simulated),
            opt(r.sel_simulated)
        );
    }
    s
}

fn run_file_name(r: &ResultRow) -> String {
    format!("{}_{}_{}.json", r.combination.name(), r.cache_pct, r.seed)
}

/// Writes the table's files into `dir` and returns their paths.
pub fn write_results(table: &ResultTable, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    if !table.rows.is_empty() || !table.failures.is_empty() {
        put("results.csv", results_csv(&table.rows))?;
        put("summary.csv", summary_csv(&summarize(&table.rows)))?;
        if !table.failures.is_empty() {
            put("failures.json", serde_json::to_string_pretty(&table.failures)?)?;
        }
        fs::create_dir_all(dir.join("runs"))?;
        for r in &table.rows {
            put(&format!("runs/{}", run_file_name(r)), serde_json::to_string_pretty(r)?)?;
        }
    }
    if !table.tandem.is_empty() {
        put("tandem.csv", tandem_csv(&table.tandem))?;
        put("sd_histogram.csv", sd_histogram_csv(&table.tandem))?;
    }
    if !table.irm.is_empty() {
        put("irm.csv", irm_csv(&table.irm))?;
    }
    Ok(written)
}
