//! `selcache` command-line experiment runner.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use selcache::engine::scenario_workload;
use selcache::experiment::{
    expand_preset, run_experiment, summarize, summary_csv, write_results, Combination, ExperimentConfig, Preset,
    ScenarioFile,
};
use selcache::irm::{hit_ratio_closed_form, hit_ratio_from_law, lru_stationary_oracle, zipf_popularity, IrmPolicy};
use selcache::metrics::{sd_stats, stack_distances};
use selcache::traffic::{read_trace, write_trace};

#[derive(Parser)]
#[command(name = "selcache", version, about = "Cache network simulator and experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset experiment and write result files.
    Run(RunArgs),
    /// Export the request trace of one network run.
    Trace(TraceArgs),
    /// Stack-distance statistics of a trace file.
    Sd(SdArgs),
    /// Closed-form and Markov-chain hit ratios for a Zipf catalog.
    Irm(IrmArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// tandem-fig3-4, tree-fig7, abilene-fig8, irm-theorem1 or custom.
    #[arg(long, default_value = "tree-fig7")]
    preset: Preset,
    /// Cache sizes in percent of the catalog's packets, comma separated.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Subset of LRU-EQU, SEL-EQU, LRU-BIG.
    #[arg(long, value_delimiter = ',')]
    combinations: Option<Vec<Combination>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Simulated seconds per run.
    #[arg(long)]
    duration: Option<f64>,
    /// Router levels of the tree preset.
    #[arg(long)]
    levels: Option<u32>,
    /// Per-link propagation delay in seconds.
    #[arg(long)]
    delay: Option<f64>,
    /// 1000 s runs, 10 seeds and 15M tandem requests.
    #[arg(long)]
    full_scale: bool,
    /// Scenario file (TOML) for the custom preset.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::new(self.preset);
        if self.full_scale {
            cfg = cfg.full_scale();
        }
        if let Some(g) = &self.grid {
            cfg.cache_size_grid = g.clone();
        }
        if let Some(c) = &self.combinations {
            cfg.combinations = c.clone();
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(d) = self.duration {
            cfg.duration = d;
        }
        if let Some(l) = self.levels {
            cfg.tree_levels = l;
        }
        if let Some(d) = self.delay {
            cfg.link_delay = d;
        }
        if let Some(path) = &self.config {
            if self.preset != Preset::Custom {
                bail!("--config requires --preset custom");
            }
            cfg.custom = Some(ScenarioFile::load(path).with_context(|| format!("reading {}", path.display()))?);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long, env = "SELCACHE_OUT_DIR", default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Seed of the exported run; defaults to the first configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct SdArgs {
    trace: PathBuf,
    /// Only this consumer group's requests.
    #[arg(long)]
    group: Option<u32>,
    /// Analyze content ids instead of packet ids.
    #[arg(long)]
    contents: bool,
}

#[derive(Args)]
struct IrmArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 5)]
    contents: usize,
    #[arg(long, default_value_t = 2)]
    capacity: usize,
}

fn run(args: &RunArgs) -> Result<ExitCode> {
    let cfg = args.experiment.resolve()?;
    let table = run_experiment(&cfg)?;
    let files = write_results(&table, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    if !table.rows.is_empty() {
        print!("{}", summary_csv(&summarize(&table.rows)));
    }
    for f in &files {
        eprintln!("wrote {}", f.display());
    }
    for f in &table.failures {
        eprintln!("run {} {}% seed {} failed: {}", f.combination.name(), f.cache_pct, f.seed, f.error);
    }
    Ok(if table.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn trace(args: &TraceArgs) -> Result<()> {
    let cfg = args.experiment.resolve()?;
    let runs = expand_preset(&cfg)?;
    let seed = args.seed.unwrap_or(cfg.seeds[0]);
    let scenario = &runs.first().context("preset produced no scenarios")?.scenario;
    let events = scenario_workload(scenario, seed)?;
    let out =
        BufWriter::new(File::create(&args.output).with_context(|| format!("creating {}", args.output.display()))?);
    write_trace(out, events.iter().copied())?;
    eprintln!("wrote {} requests to {}", events.len(), args.output.display());
    Ok(())
}

fn sd(args: &SdArgs) -> Result<()> {
    let file = File::open(&args.trace).with_context(|| format!("opening {}", args.trace.display()))?;
    let events = read_trace(BufReader::new(file))?;
    let selected = events.iter().filter(|e| args.group.is_none_or(|g| e.group == g));
    let stats = if args.contents {
        let ids: Vec<u32> = selected.map(|e| e.packet.content.0).collect();
        sd_stats(&stack_distances(&ids))
    } else {
        let ids: Vec<_> = selected.map(|e| e.packet).collect();
        sd_stats(&stack_distances(&ids))
    };
    let mut out = std::io::stdout().lock();
    let show = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_else(|| "-".into());
    writeln!(out, "defined {}", stats.defined_count())?;
    writeln!(out, "undefined {}", stats.undefined_count)?;
    writeln!(out, "min_sd {}", show(stats.min_sd))?;
    writeln!(out, "max_sd {}", show(stats.max_sd))?;
    writeln!(out, "avg_sd {}", stats.avg_sd.map(|x| x.to_string()).unwrap_or_else(|| "-".into()))?;
    Ok(())
}

fn irm(args: &IrmArgs) -> Result<()> {
    let q = zipf_popularity(args.alpha, args.contents)?;
    let lru = hit_ratio_closed_form(&q, args.capacity, IrmPolicy::Lru)?;
    let sel = hit_ratio_closed_form(&q, args.capacity, IrmPolicy::Sel)?;
    println!("lru_closed_form {lru}");
    println!("sel_closed_form {sel}");
    match lru_stationary_oracle(&q, args.capacity) {
        Ok(law) => println!("lru_markov {}", hit_ratio_from_law(&q, law.iter().map(|(s, p)| (s, *p)))),
        Err(e) => println!("lru_markov - ({e})"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Trace(a) => trace(a).map(|_| ExitCode::SUCCESS),
        Command::Sd(a) => sd(a).map(|_| ExitCode::SUCCESS),
        Command::Irm(a) => irm(a).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
