//! `tuna` command-line driver.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or parameter
//! error.

pub mod config;

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;
use tuna_core::costmodel::{
    predict_from_trace, size_sweep_csv, sweep_block_count, sweep_radix, SizePoint,
};
use tuna_core::transport::LinkClass;
use tuna_core::workloads::{generate, generate_sizes, mean_block_size};
use tuna_core::{oracle_direct, run_algorithm, Algorithm, DistKind, RunResult};

pub use config::{Layer, RunConfig, Scheduler, SweepKind};

/// Version token in the first column of every `run` CSV row.
pub const RUN_SCHEMA: &str = "tuna-run/1";

pub const RUN_HEADER: &str = "schema,algo,P,Q,N,r,block_count,dist,S,seed,rounds,msgs_meta,\
msgs_data,bytes_intra,bytes_inter,max_outstanding,peak_temp_blocks,predicted_seconds,verified";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] tuna_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if !e.is_parameter_error() => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tuna", version, about = "Verify, run and sweep non-uniform all-to-all algorithms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one algorithm and compare it byte-for-byte with the oracle.
    Verify(CommonArgs),
    /// Run one configuration and emit a CSV metrics row.
    Run(CommonArgs),
    /// Sweep radix, block_count or message size and report the best value.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON file with default settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// direct, spread_out, scattered, pairwise, pairwise_xor, linear, tuna,
    /// htuna_coalesced or htuna_staggered.
    #[arg(long)]
    pub algo: Option<Algorithm>,
    /// Number of ranks.
    #[arg(long = "P")]
    pub processes: Option<usize>,
    /// Ranks per node; defaults to P.
    #[arg(long = "Q")]
    pub ranks_per_node: Option<usize>,
    /// Radix of the TuNA schedules.
    #[arg(long = "r")]
    pub radix: Option<usize>,
    /// Requests or steps per batch; defaults to the largest valid value.
    #[arg(long)]
    pub block_count: Option<usize>,
    /// uniform, normal, powerlaw, fft_n1 or fft_n2.
    #[arg(long)]
    pub dist: Option<DistKind>,
    /// Largest block in bytes.
    #[arg(long = "S")]
    pub max_block: Option<usize>,
    /// Mean of the normal distribution.
    #[arg(long)]
    pub mean: Option<f64>,
    /// Standard deviation of the normal distribution.
    #[arg(long)]
    pub stddev: Option<f64>,
    /// Power-law exponent.
    #[arg(long)]
    pub exponent: Option<f64>,
    /// Workload seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seconds per intra-node message.
    #[arg(long)]
    pub alpha_intra: Option<f64>,
    /// Seconds per inter-node message.
    #[arg(long)]
    pub alpha_inter: Option<f64>,
    /// Seconds per intra-node byte.
    #[arg(long)]
    pub beta_intra: Option<f64>,
    /// Seconds per inter-node byte.
    #[arg(long)]
    pub beta_inter: Option<f64>,
    /// Bytes per metadata length entry.
    #[arg(long)]
    pub meta_entry_bytes: Option<usize>,
    #[arg(long)]
    pub scheduler: Option<Scheduler>,
    /// Write the message trace as JSON lines.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub sweep: Option<SweepKind>,
    /// Worker threads for independent sweep points.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Mean block sizes for a message_size sweep.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<f64>>,
    /// Seconds per byte per additional concurrent message.
    #[arg(long)]
    pub congestion_penalty: Option<f64>,
}

impl CommonArgs {
    fn layer(&self) -> Layer {
        Layer {
            algo: self.algo,
            processes: self.processes,
            ranks_per_node: self.ranks_per_node,
            r: self.radix,
            block_count: self.block_count,
            dist: self.dist,
            max_block: self.max_block,
            mean: self.mean,
            stddev: self.stddev,
            exponent: self.exponent,
            seed: self.seed,
            alpha_intra: self.alpha_intra,
            alpha_inter: self.alpha_inter,
            beta_intra: self.beta_intra,
            beta_inter: self.beta_inter,
            meta_entry_bytes: self.meta_entry_bytes,
            trace_out: self.trace_out.clone(),
            csv_out: self.csv_out.clone(),
            scheduler: self.scheduler,
            ..Layer::default()
        }
    }

    fn resolve(&self, extra: Layer) -> Result<RunConfig, CliError> {
        RunConfig::resolve(self.config.as_deref(), self.layer().under(extra))
    }
}

/// Runs a parsed command, writing reports to `out` and diagnostics to
/// `err`. Returns the exit code.
pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let result = match &cli.command {
        Command::Verify(args) => args.resolve(Layer::default()).and_then(|c| verify(&c, out, err)),
        Command::Run(args) => args.resolve(Layer::default()).and_then(|c| run(&c, out, err)),
        Command::Sweep(args) => {
            let extra = Layer {
                sweep: args.sweep,
                jobs: args.jobs,
                sizes: args.sizes.clone(),
                congestion_penalty: args.congestion_penalty,
                ..Layer::default()
            };
            args.common.resolve(extra).and_then(|c| sweep(&c, out, err))
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let kind = if e.exit_code() == 2 { "error" } else { "failure" };
            let _ = writeln!(err, "{kind}: {e}");
            e.exit_code()
        }
    }
}

fn warn_cost(config: &RunConfig, err: &mut dyn Write) -> Result<(), CliError> {
    for w in config.cost.validate()? {
        writeln!(err, "warning: {w}")?;
    }
    Ok(())
}

fn describe(config: &RunConfig) -> String {
    let s = &config.spec;
    let mut text = format!("algo={} P={} Q={}", s.algo, s.processes, s.ranks_per_node);
    if s.algo.uses_radix() {
        let _ = write!(text, " r={}", s.radix);
    }
    if s.algo.uses_block_count() {
        let _ = write!(text, " block_count={}", s.block_count);
    }
    let _ = write!(
        text,
        " dist={} S={} seed={}",
        config.dist.kind, config.dist.max_block, config.dist.seed
    );
    text
}

/// Simulates the configured run and checks it against the oracle.
fn simulate(config: &RunConfig) -> Result<(RunResult, Option<tuna_core::Divergence>), CliError> {
    config.spec.validate()?;
    let workload = generate(&config.dist, config.spec.processes)?;
    let result = run_algorithm(&config.spec, &workload)?;
    let divergence = result.gathered.first_divergence(&oracle_direct(&workload));
    if let Some(path) = &config.trace_out {
        let mut file = BufWriter::new(File::create(path)?);
        result.trace.write_jsonl(&mut file)?;
        file.flush()?;
    }
    Ok((result, divergence))
}

fn verify(config: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8, CliError> {
    warn_cost(config, err)?;
    let (_, divergence) = simulate(config)?;
    match divergence {
        None => {
            writeln!(out, "verified {}", describe(config))?;
            Ok(0)
        }
        Some(d) => {
            writeln!(
                out,
                "divergence {}: rank {} source {} byte offset {}",
                describe(config),
                d.rank,
                d.source,
                d.offset
            )?;
            Ok(1)
        }
    }
}

/// One CSV data row for a finished run.
pub fn run_row(config: &RunConfig, result: &RunResult, verified: bool) -> String {
    let s = &config.spec;
    let m = result.trace.metrics();
    let predicted = predict_from_trace(&result.trace, &config.cost).total_seconds;
    let opt = |used: bool, v: usize| if used { v.to_string() } else { String::new() };
    format!(
        "{RUN_SCHEMA},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        s.algo,
        s.processes,
        s.ranks_per_node,
        s.nodes(),
        opt(s.algo.uses_radix(), s.radix),
        opt(s.algo.uses_block_count(), s.block_count),
        config.dist.kind,
        config.dist.max_block,
        config.dist.seed,
        m.rounds,
        m.messages.metadata.total(),
        m.messages.data.total(),
        m.bytes.by_link(LinkClass::IntraNode),
        m.bytes.by_link(LinkClass::InterNode),
        m.max_outstanding,
        result.peak_temp_blocks(),
        predicted,
        verified
    )
}

/// Opens `--csv-out` or falls back to `out`. The flag tells whether the
/// CSV goes to `out`.
fn csv_sink<'a>(
    config: &RunConfig,
    out: &'a mut dyn Write,
) -> Result<(Box<dyn Write + 'a>, bool), CliError> {
    Ok(match &config.csv_out {
        Some(path) => (Box::new(BufWriter::new(File::create(path)?)), false),
        None => (Box::new(out), true),
    })
}

fn run(config: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8, CliError> {
    warn_cost(config, err)?;
    let (result, divergence) = simulate(config)?;
    let verified = divergence.is_none();
    {
        let (mut sink, _) = csv_sink(config, out)?;
        writeln!(sink, "{RUN_HEADER}")?;
        writeln!(sink, "{}", run_row(config, &result, verified))?;
        sink.flush()?;
    }
    if let Some(d) = divergence {
        writeln!(
            err,
            "divergence: rank {} source {} byte offset {}",
            d.rank, d.source, d.offset
        )?;
        return Ok(1);
    }
    Ok(0)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} worker threads: {e}")))
}

fn sweep(config: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8, CliError> {
    warn_cost(config, err)?;
    let p = config.spec.processes;
    let (csv, summary) = match config.sweep {
        SweepKind::Radix => {
            let sizes = generate_sizes(&config.dist, p)?;
            let s = mean_block_size(&sizes);
            let sweep = sweep_radix(p, s, &config.cost)?;
            let best = sweep.best();
            let summary = format!(
                "best r={} for P={p} mean_block_bytes={s} predicted_seconds={}",
                sweep.best_radix, best.seconds
            );
            (sweep.to_csv(), summary)
        }
        SweepKind::MessageSize => {
            if config.sizes.is_empty() {
                return Err(CliError::Usage("--sizes is empty".into()));
            }
            let points: Vec<SizePoint> = pool(config.jobs)?.install(|| {
                config
                    .sizes
                    .par_iter()
                    .map(|&s| {
                        tuna_core::costmodel::sweep_message_size(p, &[s], &config.cost)
                            .map(|mut v| v.remove(0))
                    })
                    .collect::<tuna_core::Result<_>>()
            })?;
            let best: Vec<String> = points
                .iter()
                .map(|pt| format!("{}:{}", pt.mean_block_bytes, pt.best_radix))
                .collect();
            let summary = format!("best r by mean_block_bytes for P={p}: {}", best.join(" "));
            (size_sweep_csv(p, &points), summary)
        }
        SweepKind::BlockCount => {
            let algo = config.spec.algo;
            if !algo.uses_block_count() {
                return Err(CliError::Usage(format!(
                    "algorithm {algo} has no block_count to sweep"
                )));
            }
            let max = algo
                .max_block_count(p, config.spec.ranks_per_node)
                .max(1);
            let workload = generate(&config.dist, p)?;
            let traces = pool(config.jobs)?.install(|| {
                (1..=max)
                    .into_par_iter()
                    .map(|bc| {
                        let mut spec = config.spec;
                        spec.block_count = bc;
                        run_algorithm(&spec, &workload).map(|r| r.trace)
                    })
                    .collect::<tuna_core::Result<Vec<_>>>()
            })?;
            let mut traces = traces.into_iter();
            let sweep = sweep_block_count(
                1..=max,
                |_| Ok(traces.next().expect("one trace per block count")),
                &config.cost,
                config.congestion_penalty,
            )?;
            let summary = format!(
                "best block_count={} for algo={algo} P={p} Q={} congestion_penalty={}",
                sweep.best_block_count, config.spec.ranks_per_node, config.congestion_penalty
            );
            (sweep.to_csv(), summary)
        }
    };
    let (mut sink, to_out) = csv_sink(config, out)?;
    sink.write_all(csv.as_bytes())?;
    sink.flush()?;
    drop(sink);
    if to_out {
        writeln!(err, "{summary}")?;
    } else {
        writeln!(out, "{summary}")?;
    }
    Ok(0)
}
