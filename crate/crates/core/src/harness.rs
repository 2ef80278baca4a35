//! End-to-end pipeline: generate → count → reorder → balance → execute.
//!
//! Moves emitted while processing batch `t` are applied to the assignment
//! after the batch has been reordered, so they first shape batch `t + 1`.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::balance::{rebalance, BalancerConfig, MoveList, Policy};
use crate::datagen::{Batch, DatasetKind, DatasetSpec, Tuple};
use crate::engine::{
    process_batch_sim, AggregateTrace, CostModel, IterationReport, ParallelExecutor, WindowStore,
};
use crate::error::{Error, Result};
use crate::partition::{count_batch, reorder_batch, Assignment, ReorderedBatch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Backend {
    /// Deterministic cost-model execution.
    Sim,
    /// Logical threads on a worker pool, timed in nanoseconds.
    Parallel,
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim" => Ok(Backend::Sim),
            "parallel" => Ok(Backend::Parallel),
            other => Err(Error::InvalidConfig(format!(
                "unknown backend '{other}' (expected sim or parallel)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Also carries the run seed.
    pub dataset: DatasetSpec,
    pub batch_size: usize,
    pub window: usize,
    pub grid_size: usize,
    pub block_size: usize,
    pub balancer: BalancerConfig,
    pub cost: CostModel,
    pub backend: Backend,
    pub pool_size: usize,
    /// Record the per-tuple aggregate trace.
    pub trace: bool,
}

impl RunConfig {
    pub fn n_threads(&self) -> usize {
        self.grid_size * self.block_size
    }

    pub fn seed(&self) -> u64 {
        self.dataset.seed
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        if self.grid_size == 0 || self.block_size == 0 {
            return Err(Error::InvalidConfig(
                "grid and block size must be at least 1".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.window == 0 {
            return Err(Error::InvalidConfig(
                "window size must be at least 1".into(),
            ));
        }
        if self.backend == Backend::Parallel && self.pool_size == 0 {
            return Err(Error::InvalidConfig("pool size must be at least 1".into()));
        }
        self.balancer.validate()?;
        self.cost.validate()
    }

    /// The same run with balancing disabled.
    pub fn baseline(&self) -> Self {
        let mut base = self.clone();
        base.balancer.policy = Policy::NoBalance;
        base
    }
}

pub const PRESET_NAMES: [&str; 6] = [
    "ds1-desk", "ds2-desk", "ds3-desk", "ds1-full", "ds2-full", "ds3-full",
];

const DEFAULT_SEED: u64 = 42;

/// Named configurations. `full` presets use the original experiment scale
/// (100M tuples); `desk` presets shrink every axis to run in seconds.
pub fn preset(name: &str) -> Result<RunConfig> {
    let unknown = || Error::UnknownPreset {
        name: name.to_string(),
        available: PRESET_NAMES.join(", "),
    };
    let (ds, scale) = name.split_once('-').ok_or_else(unknown)?;
    let kind = match ds {
        "ds1" => DatasetKind::Uniform,
        "ds2" => DatasetKind::Zipf,
        "ds3" => DatasetKind::PermutedZipf,
        _ => return Err(unknown()),
    };
    let (n_tuples, n_groups, batch_size, window, grid_size, threshold) = match scale {
        "full" => (100_000_000, 40_000, 50_000, 100, 4, 1000),
        "desk" => (1_000_000, 4096, 5000, 32, 4, 50),
        _ => return Err(unknown()),
    };
    Ok(RunConfig {
        dataset: DatasetSpec {
            kind,
            n_tuples,
            n_groups,
            zipf_exponent: 1.0,
            seed: DEFAULT_SEED,
        },
        batch_size,
        window,
        grid_size,
        block_size: 256,
        balancer: BalancerConfig {
            policy: Policy::NoBalance,
            thread_threshold: threshold,
            pot: 0.5,
            max_moves: None,
        },
        cost: CostModel::default(),
        backend: Backend::Sim,
        pool_size: std::thread::available_parallelism().map_or(1, |n| n.get()),
        trace: false,
    })
}

/// Result of one pipeline step.
#[derive(Debug)]
pub struct StepOutcome {
    pub report: IterationReport,
    pub moves: MoveList,
    pub reordered: ReorderedBatch,
}

/// Coordinator state carried across batches.
pub struct Pipeline {
    balancer: BalancerConfig,
    cost: CostModel,
    assignment: Assignment,
    store: WindowStore,
    executor: Option<ParallelExecutor>,
    trace: Option<AggregateTrace>,
}

impl Pipeline {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let executor = match config.backend {
            Backend::Sim => None,
            Backend::Parallel => Some(ParallelExecutor::new(config.pool_size)?),
        };
        Ok(Self {
            balancer: config.balancer.clone(),
            cost: config.cost,
            assignment: Assignment::initial(config.dataset.n_groups, config.n_threads())?,
            store: WindowStore::new(config.dataset.n_groups, config.window)?,
            executor,
            trace: config.trace.then(AggregateTrace::default),
        })
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    pub fn store(&self) -> &WindowStore {
        &self.store
    }

    pub fn step(&mut self, batch: &Batch) -> Result<StepOutcome> {
        let stats = count_batch(&batch.tuples, &self.assignment)?;
        let reordered = reorder_batch(&batch.tuples, &self.assignment, &stats)?;
        let moves = rebalance(&stats, &self.assignment, &reordered, &self.balancer)?;
        let mut report = match &self.executor {
            None => {
                process_batch_sim(&reordered, &mut self.store, &self.cost, self.trace.as_mut())?
            }
            Some(ex) => {
                ex.process_batch(&reordered, &mut self.store, &self.cost, self.trace.as_mut())?
            }
        };
        report.imbalance = stats.imbalance();
        report.moves = moves.len();
        report.scanned = moves.scanned_tuples;
        // Takes effect from the next batch.
        self.assignment = self.assignment.apply_moves(&moves.moves)?;
        Ok(StepOutcome {
            report,
            moves,
            reordered,
        })
    }

    pub fn finish(self) -> (Assignment, WindowStore, Option<AggregateTrace>) {
        (self.assignment, self.store, self.trace)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub policy: Policy,
    pub grid_size: usize,
    pub backend: Backend,
    pub iterations: Vec<IterationReport>,
    pub total_makespan: u64,
    pub total_moves: u64,
    pub total_scanned: u64,
    pub total_tuples: u64,
    /// Tuples per makespan unit (cost units or nanoseconds); 0 for empty runs.
    pub throughput: f64,
    /// Throughput relative to the matched no-balance run, when known.
    pub normalized_throughput: Option<f64>,
    pub final_assignment: Assignment,
    pub final_store: WindowStore,
    pub trace: Option<AggregateTrace>,
}

impl ExperimentReport {
    pub fn max_imbalance(&self) -> u64 {
        self.iterations
            .iter()
            .map(|r| r.imbalance)
            .max()
            .unwrap_or(0)
    }

    pub fn normalize_against(&mut self, baseline: &ExperimentReport) {
        self.normalized_throughput = Some(if self.policy == Policy::NoBalance {
            1.0
        } else if baseline.throughput > 0.0 {
            self.throughput / baseline.throughput
        } else {
            0.0
        });
    }
}

/// Runs the configured dataset through the pipeline.
pub fn run(config: &RunConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let stream = config.dataset.stream()?;
    run_stream(config, stream.map(Ok))
}

/// Runs an arbitrary tuple source (e.g. a replay file) through the pipeline.
/// `config.dataset` only supplies the group count.
pub fn run_stream<I>(config: &RunConfig, stream: I) -> Result<ExperimentReport>
where
    I: IntoIterator<Item = Result<Tuple>>,
{
    let mut pipeline = Pipeline::new(config)?;
    let mut stream = stream.into_iter();
    let mut iterations = Vec::new();
    let mut total_moves = 0u64;
    let mut total_scanned = 0u64;
    loop {
        let index = iterations.len();
        let at = |source: Error| Error::AtIteration {
            iteration: index,
            source: Box::new(source),
        };
        let tuples: Vec<Tuple> = stream
            .by_ref()
            .take(config.batch_size)
            .collect::<Result<_>>()
            .map_err(at)?;
        if tuples.is_empty() {
            break;
        }
        let outcome = pipeline.step(&Batch::new(index, tuples)).map_err(at)?;
        total_moves += outcome.moves.len() as u64;
        total_scanned += outcome.moves.scanned_tuples;
        log::debug!(
            "iter {index}: makespan {} imbalance {} moves {}",
            outcome.report.makespan,
            outcome.report.imbalance,
            outcome.report.moves
        );
        iterations.push(outcome.report);
    }

    let total_makespan: u64 = iterations.iter().map(|r| r.makespan).sum();
    let total_tuples: u64 = iterations.iter().map(|r| r.tuples as u64).sum();
    let throughput = if total_makespan == 0 {
        0.0
    } else {
        total_tuples as f64 / total_makespan as f64
    };
    let policy = config.balancer.policy;
    let (final_assignment, final_store, trace) = pipeline.finish();
    Ok(ExperimentReport {
        policy,
        grid_size: config.grid_size,
        backend: config.backend,
        iterations,
        total_makespan,
        total_moves,
        total_scanned,
        total_tuples,
        throughput,
        normalized_throughput: (policy == Policy::NoBalance).then_some(1.0),
        final_assignment,
        final_store,
        trace,
    })
}

/// Runs `config` and normalizes it against its no-balance twin.
pub fn run_normalized(config: &RunConfig) -> Result<ExperimentReport> {
    let mut report = run(config)?;
    if config.balancer.policy != Policy::NoBalance {
        let baseline = run(&config.baseline())?;
        report.normalize_against(&baseline);
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    Policy,
    GridSize,
    WindowPasses,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "policy" => Ok(SweepAxis::Policy),
            "grid" | "grid_size" => Ok(SweepAxis::GridSize),
            "passes" | "window_passes" => Ok(SweepAxis::WindowPasses),
            other => Err(Error::InvalidConfig(format!(
                "unknown sweep axis '{other}' (expected policy, grid or passes)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepPoint {
    Policy(Policy),
    GridSize(usize),
    WindowPasses(u32),
}

impl SweepPoint {
    /// Parses a comma-separated value list for `axis`.
    pub fn parse_list(axis: SweepAxis, values: &str) -> Result<Vec<SweepPoint>> {
        values
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| {
                let bad = || Error::InvalidConfig(format!("bad sweep value '{v}'"));
                Ok(match axis {
                    SweepAxis::Policy => SweepPoint::Policy(v.parse()?),
                    SweepAxis::GridSize => SweepPoint::GridSize(v.parse().map_err(|_| bad())?),
                    SweepAxis::WindowPasses => {
                        SweepPoint::WindowPasses(v.parse().map_err(|_| bad())?)
                    }
                })
            })
            .collect()
    }

    pub fn apply(self, config: &mut RunConfig) {
        match self {
            SweepPoint::Policy(p) => config.balancer.policy = p,
            SweepPoint::GridSize(g) => config.grid_size = g,
            SweepPoint::WindowPasses(k) => config.cost.window_passes = k,
        }
    }
}

impl fmt::Display for SweepPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepPoint::Policy(p) => write!(f, "policy={p}"),
            SweepPoint::GridSize(g) => write!(f, "grid={g}"),
            SweepPoint::WindowPasses(k) => write!(f, "passes={k}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub point: SweepPoint,
    pub report: ExperimentReport,
    pub baseline: ExperimentReport,
}

/// One run per point, each normalized against the no-balance run with the
/// same grid size and cost model. Baselines are shared between points that
/// only differ in policy.
pub fn sweep(base: &RunConfig, points: &[SweepPoint]) -> Result<Vec<SweepResult>> {
    let mut baselines: HashMap<(usize, u32), ExperimentReport> = HashMap::new();
    let mut out = Vec::with_capacity(points.len());
    for &point in points {
        let mut config = base.clone();
        point.apply(&mut config);
        let key = (config.grid_size, config.cost.window_passes);
        let baseline = match baselines.entry(key) {
            Entry::Occupied(e) => e.get().clone(),
            Entry::Vacant(e) => e.insert(run(&config.baseline())?).clone(),
        };
        let mut report = if config.balancer.policy == Policy::NoBalance {
            baseline.clone()
        } else {
            run(&config)?
        };
        report.normalize_against(&baseline);
        out.push(SweepResult {
            point,
            report,
            baseline,
        });
    }
    Ok(out)
}

pub const CSV_HEADER: [&str; 10] = [
    "iter",
    "policy",
    "grid",
    "makespan",
    "imbalance",
    "moves",
    "scanned",
    "tuples",
    "throughput",
    "normalized_throughput",
];

/// Writes one row per iteration followed by a `total` summary row per report.
///
/// The summary row carries summed makespan, moves, scanned and tuples, and
/// the largest per-iteration imbalance.
pub fn write_csv<'a, W, I>(out: W, reports: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a ExperimentReport>,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for report in reports {
        let policy = report.policy.name();
        let grid = report.grid_size.to_string();
        for (i, it) in report.iterations.iter().enumerate() {
            w.write_record([
                i.to_string().as_str(),
                policy,
                &grid,
                &it.makespan.to_string(),
                &it.imbalance.to_string(),
                &it.moves.to_string(),
                &it.scanned.to_string(),
                &it.tuples.to_string(),
                "",
                "",
            ])?;
        }
        w.write_record([
            "total",
            policy,
            &grid,
            &report.total_makespan.to_string(),
            &report.max_imbalance().to_string(),
            &report.total_moves.to_string(),
            &report.total_scanned.to_string(),
            &report.total_tuples.to_string(),
            &report.throughput.to_string(),
            &report
                .normalized_throughput
                .map(|v| v.to_string())
                .unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
