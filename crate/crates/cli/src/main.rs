use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;
use skewagg_core::datagen::{write_replay, ReplayReader};
use skewagg_core::harness::run_stream;
use skewagg_core::{
    preset, run, serial_reference, sweep, write_csv, Backend, DatasetKind, ExperimentReport,
    Policy, RunConfig, SweepAxis, SweepPoint,
};

/// Streaming sliding-window group-by with runtime skew rebalancing.
///
/// Starts from a preset and applies any overrides given on the command line.
/// Per-iteration CSV goes to --out (or stdout); a summary goes to stderr.
#[derive(Parser, Debug)]
#[command(name = "skewagg", version)]
struct Args {
    /// Base configuration (ds1-desk, ds2-desk, ds3-desk, ds1-full, ...).
    #[arg(long, default_value = "ds2-desk")]
    preset: String,
    /// uniform|zipf|pzipf
    #[arg(long, value_parser = parse_dataset)]
    dataset: Option<DatasetKind>,
    /// Stream length.
    #[arg(long)]
    tuples: Option<u64>,
    /// Number of distinct group keys.
    #[arg(long)]
    groups: Option<usize>,
    /// Zipf exponent for zipf and pzipf.
    #[arg(long)]
    zipf_exp: Option<f64>,
    /// Tuples per iteration.
    #[arg(long)]
    batch: Option<usize>,
    /// Sliding window size per group.
    #[arg(long)]
    window: Option<usize>,
    /// Logical threads = grid x block.
    #[arg(long)]
    grid: Option<usize>,
    /// Logical threads per grid unit.
    #[arg(long)]
    block: Option<usize>,
    /// no|first|all|prob|best|shift|shiftlocal
    #[arg(long, value_parser = parse_policy)]
    policy: Option<Policy>,
    /// Load gap (tuples) between the busiest and idlest thread that triggers rebalancing.
    #[arg(long)]
    threshold: Option<u64>,
    /// probCheck scan limit as a fraction of the donor's mean group size.
    #[arg(long)]
    pot: Option<f64>,
    /// Moves per rebalancing call; default 4 per thread.
    #[arg(long)]
    max_moves: Option<usize>,
    /// Window-sum recomputations per tuple.
    #[arg(long)]
    passes: Option<u32>,
    /// sim|parallel
    #[arg(long, value_parser = parse_backend)]
    backend: Option<Backend>,
    /// Worker pool size for the parallel backend.
    #[arg(long)]
    pool: Option<usize>,
    /// Dataset seed.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record the aggregate trace and check it against the serial reference.
    #[arg(long)]
    trace: bool,
    /// Print the final group assignment to stderr.
    #[arg(long)]
    dump_assignment: bool,
    /// Sweep one axis: policy, grid or passes.
    #[arg(long, requires = "values", value_parser = parse_axis)]
    sweep: Option<SweepAxis>,
    /// Comma-separated values for --sweep.
    #[arg(long, requires = "sweep")]
    values: Option<String>,
    /// Write the generated stream to a binary replay file and exit.
    #[arg(long, conflicts_with_all = ["replay", "sweep"])]
    materialize: Option<PathBuf>,
    /// Read tuples from a replay file instead of generating them.
    #[arg(long, conflicts_with = "sweep")]
    replay: Option<PathBuf>,
}

fn parse_dataset(s: &str) -> Result<DatasetKind, String> {
    s.parse().map_err(|e: skewagg_core::Error| e.to_string())
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse().map_err(|e: skewagg_core::Error| e.to_string())
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    s.parse().map_err(|e: skewagg_core::Error| e.to_string())
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    s.parse().map_err(|e: skewagg_core::Error| e.to_string())
}

impl Args {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = preset(&self.preset)?;
        let ds = &mut cfg.dataset;
        set(&mut ds.kind, self.dataset);
        set(&mut ds.n_tuples, self.tuples);
        set(&mut ds.n_groups, self.groups);
        set(&mut ds.zipf_exponent, self.zipf_exp);
        set(&mut ds.seed, self.seed);
        set(&mut cfg.batch_size, self.batch);
        set(&mut cfg.window, self.window);
        set(&mut cfg.grid_size, self.grid);
        set(&mut cfg.block_size, self.block);
        set(&mut cfg.balancer.policy, self.policy);
        set(&mut cfg.balancer.thread_threshold, self.threshold);
        set(&mut cfg.balancer.pot, self.pot);
        if self.max_moves.is_some() {
            cfg.balancer.max_moves = self.max_moves;
        }
        set(&mut cfg.cost.window_passes, self.passes);
        set(&mut cfg.backend, self.backend);
        set(&mut cfg.pool_size, self.pool);
        cfg.trace = self.trace;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn run_one(args: &Args, cfg: &RunConfig) -> Result<Vec<ExperimentReport>> {
    let go = |cfg: &RunConfig| -> Result<ExperimentReport> {
        Ok(match &args.replay {
            Some(path) => run_stream(cfg, ReplayReader::open(path)?)?,
            None => run(cfg)?,
        })
    };
    let mut report = go(cfg)?;
    if cfg.balancer.policy != Policy::NoBalance {
        let baseline = go(&cfg.baseline())?;
        report.normalize_against(&baseline);
    }
    if args.trace {
        check_trace(args, cfg, &report)?;
    }
    Ok(vec![report])
}

fn check_trace(args: &Args, cfg: &RunConfig, report: &ExperimentReport) -> Result<()> {
    let n = cfg.dataset.n_groups;
    let (store, trace) = match &args.replay {
        Some(path) => {
            let tuples = ReplayReader::open(path)?.collect::<skewagg_core::Result<Vec<_>>>()?;
            serial_reference(tuples, n, cfg.window, cfg.cost.window_passes)?
        }
        None => serial_reference(cfg.dataset.stream()?, n, cfg.window, cfg.cost.window_passes)?,
    };
    let ours = report.trace.as_ref().context("trace was not recorded")?;
    if report.final_store != store || ours.per_group(n) != trace.per_group(n) {
        bail!("aggregate trace differs from the serial reference");
    }
    eprintln!(
        "trace: {} aggregates match the serial reference",
        ours.len()
    );
    Ok(())
}

fn summarize(report: &ExperimentReport) {
    let norm = report
        .normalized_throughput
        .map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    eprintln!(
        "{:<12} grid {:<3} iterations {:<6} makespan {:<12} moves {:<8} scanned {:<10} throughput {:.6} normalized {norm}",
        report.policy.name(),
        report.grid_size,
        report.iterations.len(),
        report.total_makespan,
        report.total_moves,
        report.total_scanned,
        report.throughput,
    );
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let cfg = args.config()?;

    if let Some(path) = &args.materialize {
        let n = write_replay(path, cfg.dataset.stream()?)?;
        eprintln!("wrote {n} tuples to {}", path.display());
        return Ok(());
    }

    let reports = match (args.sweep, &args.values) {
        (Some(axis), Some(values)) => {
            let points = SweepPoint::parse_list(axis, values)?;
            if points.is_empty() {
                bail!("--values is empty");
            }
            sweep(&cfg, &points)?
                .into_iter()
                .map(|r| {
                    log::info!("{}: makespan {}", r.point, r.report.total_makespan);
                    r.report
                })
                .collect()
        }
        _ => run_one(&args, &cfg)?,
    };

    match &args.out {
        Some(path) => {
            let file =
                File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(BufWriter::new(file), &reports)?;
        }
        None => write_csv(io::stdout().lock(), &reports)?,
    }
    for report in &reports {
        summarize(report);
    }
    if args.dump_assignment {
        let mut err = io::stderr().lock();
        for report in &reports {
            write!(err, "{}", report.final_assignment)?;
        }
    }
    Ok(())
}
