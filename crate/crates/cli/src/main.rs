//! `identity-sim`: runs, sweeps, adjacency tools and plot data export.

mod config;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use identity_core::analysis::{count_clusters, summarize, RunSummary, DEFAULT_GAP};
use identity_core::experiments::{adjacency_seed, sweep};
use identity_core::graphgen::{block_stats, validate_doubly_stochastic, Adjacency};
use identity_core::rng::derive_seed;
use identity_core::{engine, AdjacencySpec, BlockLayout, Trajectory};

use config::ConfigFile;

#[derive(Parser)]
#[command(
    name = "identity-sim",
    version,
    about = "Opinion dynamics in interacting communities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single run: writes trajectory.csv, summary.csv and config.resolved.toml.
    Run(RunArgs),
    /// Monte Carlo sweep over one or two parameters.
    Sweep(SweepArgs),
    /// Generate or inspect interaction matrices.
    #[command(subcommand)]
    Adjacency(AdjacencyCommand),
    /// Convert a trajectory CSV into plot-ready long format.
    Plotdata(PlotArgs),
}

/// Seeds stay below 2^63 so they fit a TOML integer in the config echo.
const MAX_SEED: u64 = i64::MAX as u64;

fn seed_arg(s: &str) -> std::result::Result<u64, String> {
    match s.parse::<u64>() {
        Ok(v) if v <= MAX_SEED => Ok(v),
        _ => Err(format!("expected an integer in 0..={MAX_SEED}")),
    }
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_parser = seed_arg)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Override the horizon, in pairwise interactions.
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    record_every: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Also write per-replicate results to sweep_detail.csv.
    #[arg(long)]
    detail: bool,
}

#[derive(Args)]
struct MatrixSource {
    #[arg(long, default_value_t = 3)]
    n_s: usize,
    #[arg(long, default_value_t = 9)]
    n_p: usize,
    /// Deterministic matrix with this inter-group probability.
    #[arg(long, conflicts_with = "u_b")]
    i_p: Option<f64>,
    /// Random matrix with this off-diagonal bound.
    #[arg(long)]
    u_b: Option<f64>,
    /// Run seed; the matrix equals the one `run --seed` would draw.
    #[arg(long, value_parser = seed_arg)]
    seed: Option<u64>,
}

impl MatrixSource {
    fn layout(&self) -> Result<BlockLayout> {
        Ok(BlockLayout::new(self.n_s, self.n_p)?)
    }

    fn spec(&self) -> Result<AdjacencySpec> {
        match (self.i_p, self.u_b) {
            (Some(i_p), None) => Ok(AdjacencySpec::Deterministic { i_p }),
            (None, Some(u_b)) => Ok(AdjacencySpec::Random { u_b }),
            _ => bail!("give one of --i-p or --u-b"),
        }
    }

    fn seed(&self, spec: &AdjacencySpec) -> Result<u64> {
        match (spec, self.seed) {
            (AdjacencySpec::Deterministic { .. }, s) => Ok(s.unwrap_or(0)),
            (_, Some(s)) => Ok(s),
            (_, None) => bail!("--seed is required for random matrices"),
        }
    }

    fn build(&self) -> Result<Adjacency> {
        let spec = self.spec()?;
        let seed = self.seed(&spec)?;
        let adj = spec.build(self.layout()?, adjacency_seed(seed))?;
        Ok((*adj).clone())
    }
}

#[derive(Subcommand)]
enum AdjacencyCommand {
    /// Write a matrix as CSV (N values per row).
    Gen {
        #[command(flatten)]
        source: MatrixSource,
        /// Output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Block statistics and validation for one file or `--count` generated matrices.
    Stats {
        #[command(flatten)]
        source: MatrixSource,
        #[arg(long, conflicts_with_all = ["i_p", "u_b"])]
        input: Option<PathBuf>,
        /// Number of matrices; matrix r uses replicate seed r of `--seed`.
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// (row, col, value) triples for heat maps.
    Heatmap {
        #[command(flatten)]
        source: MatrixSource,
        #[arg(long, conflicts_with_all = ["i_p", "u_b"])]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    Traj,
    Clusters,
}

#[derive(Args)]
struct PlotArgs {
    /// Trajectory CSV written by `run`.
    input: PathBuf,
    #[arg(long, value_enum)]
    kind: PlotKind,
    #[arg(long, default_value_t = DEFAULT_GAP)]
    gap: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot write {}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("cannot open {}", path.display()))
}

/// Writes through a closure and names the file on failure.
fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut out = create(path)?;
    body(&mut out).with_context(|| format!("cannot write {}", path.display()))?;
    out.flush().with_context(|| format!("cannot write {}", path.display()))
}

fn prepare(common: &Common) -> Result<ConfigFile> {
    let mut cfg = ConfigFile::load(&common.config)?;
    cfg.resolve(common.horizon, common.record_every)
        .with_context(|| format!("invalid config {}", common.config.display()))?;
    fs::create_dir_all(&common.out_dir)
        .with_context(|| format!("cannot create output directory {}", common.out_dir.display()))?;
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let common = &args.common;
    let mut cfg = prepare(common)?;
    let seed = common
        .seed
        .or(cfg.seed)
        .unwrap_or_else(|| rand::random::<u64>() & MAX_SEED);
    cfg.seed = Some(seed);
    let scenario = cfg
        .scenario()
        .with_context(|| format!("invalid config {}", common.config.display()))?;
    let sim = scenario.instantiate(seed)?;
    let out = engine::run(&sim)?;
    let summary = summarize(&out, &sim, scenario.gap);

    let dir = &common.out_dir;
    write_file(&dir.join("trajectory.csv"), |w| Ok(out.trajectory.write_csv(w)?))?;
    write_file(&dir.join("summary.csv"), |w| {
        Ok(RunSummary::write_csv(std::slice::from_ref(&summary), w)?)
    })?;
    write_file(&dir.join("config.resolved.toml"), |w| {
        Ok(w.write_all(cfg.to_toml()?.as_bytes())?)
    })?;
    eprintln!(
        "seed {seed}: {} clusters, collapsed {}",
        summary.final_cluster_count, summary.collapsed
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let common = &args.common;
    let mut cfg = prepare(common)?;
    let Some(seed) = common.seed.or(cfg.seed) else {
        bail!("sweeps need a seed: pass --seed or set `seed` in the config");
    };
    cfg.seed = Some(seed);
    let spec = cfg
        .sweep_spec(seed)
        .with_context(|| format!("invalid config {}", common.config.display()))?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let result = sweep(&spec, workers)?;

    let dir = &common.out_dir;
    write_file(&dir.join("sweep.csv"), |w| Ok(result.write_csv(w)?))?;
    if args.detail {
        write_file(&dir.join("sweep_detail.csv"), |w| Ok(result.write_detail_csv(w)?))?;
    }
    write_file(&dir.join("config.resolved.toml"), |w| {
        Ok(w.write_all(cfg.to_toml()?.as_bytes())?)
    })?;
    let failures: usize = result.points.iter().map(|p| p.aggregate.failures).sum();
    if failures > 0 {
        eprintln!("warning: {failures} replicates failed; see sweep_detail.csv (--detail)");
    }
    Ok(())
}

fn load_matrix(path: &Path, source: &MatrixSource) -> Result<Adjacency> {
    Adjacency::read_csv(open(path)?, source.layout()?).with_context(|| format!("in {}", path.display()))
}

fn cmd_adjacency(cmd: AdjacencyCommand) -> Result<()> {
    match cmd {
        AdjacencyCommand::Gen { source, out } => {
            let adj = source.build()?;
            let mut w = output(out.as_deref())?;
            adj.write_csv(&mut w)?;
            w.flush()?;
        }
        AdjacencyCommand::Stats {
            source,
            input,
            count,
            tol,
            out,
        } => {
            let matrices: Vec<Adjacency> = match &input {
                Some(path) => vec![load_matrix(path, &source)?],
                None => {
                    if count == 0 {
                        bail!("--count must be at least 1");
                    }
                    let spec = source.spec()?;
                    let base = source.seed(&spec)?;
                    let layout = source.layout()?;
                    (0..count as u64)
                        .map(|r| Ok((*spec.build(layout, adjacency_seed(derive_seed(base, r)))?).clone()))
                        .collect::<Result<_>>()?
                }
            };
            let mut w = output(out.as_deref())?;
            writeln!(
                w,
                "matrix,block,mean,std,max_row_deviation,max_col_deviation,max_asymmetry,max_diagonal,passed"
            )?;
            for (m, adj) in matrices.iter().enumerate() {
                let rep = validate_doubly_stochastic(adj, tol);
                for b in block_stats(adj) {
                    writeln!(
                        w,
                        "{m},{},{},{},{},{},{},{},{}",
                        b.block,
                        b.mean,
                        b.std,
                        rep.max_row_deviation,
                        rep.max_col_deviation,
                        rep.max_asymmetry,
                        rep.max_diagonal,
                        rep.passed
                    )?;
                }
            }
            w.flush()?;
        }
        AdjacencyCommand::Heatmap { source, input, out } => {
            let adj = match &input {
                Some(path) => load_matrix(path, &source)?,
                None => source.build()?,
            };
            let mut w = output(out.as_deref())?;
            adj.write_heatmap(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn cmd_plotdata(args: PlotArgs) -> Result<()> {
    let traj = Trajectory::read_csv(open(&args.input)?).with_context(|| format!("in {}", args.input.display()))?;
    let mut w = output(args.out.as_deref())?;
    match args.kind {
        PlotKind::Traj => {
            writeln!(w, "time,agent,opinion")?;
            for (t, sample) in traj.sample_times.iter().zip(&traj.samples) {
                for (agent, x) in sample.iter().enumerate() {
                    writeln!(w, "{t},{agent},{x}")?;
                }
            }
        }
        PlotKind::Clusters => {
            if args.gap.is_nan() || args.gap <= 0.0 {
                bail!("--gap must be positive");
            }
            let mut scratch = Vec::new();
            writeln!(w, "time,cluster_count")?;
            for (t, sample) in traj.sample_times.iter().zip(&traj.samples) {
                writeln!(w, "{t},{}", count_clusters(sample, args.gap, &mut scratch))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Adjacency(c) => cmd_adjacency(c),
        Command::Plotdata(a) => cmd_plotdata(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
