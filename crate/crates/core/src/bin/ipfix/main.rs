//! `ipfix` command-line interface.
//!
//! Exit codes: 0 on success, 2 on validation errors, 3 on I/O errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ipfix::admm::{solve, AdmmParams};
use ipfix::bench::{
    bench_run, delta_sweep, infeasible_trend_non_increasing, BenchConfig, FlipHistogram, FLIP_BIN_WIDTH,
};
use ipfix::earlyfix::{run, Policy, RunConfig};
use ipfix::instances::{generate_auction, generate_grid_mrf, read_instance, write_instance, GeneratorConfig, IpInstance};
use ipfix::policy::{PolicyConfig, PolicyWeights};
use ipfix::rng::child_seed;
use ipfix::training::{collect_dataset, read_dataset, train, write_dataset, TrainConfig};
use ipfix::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "ipfix", version, about = "lp-box ADMM with learned early fixing")]
struct Cli {
    /// Master seed for generation, solver initialisation and training.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Leave wall-clock fields out (zero or empty) so outputs are reproducible.
    #[arg(long, global = true)]
    no_timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write random instances as JSON files.
    Generate(GenerateArgs),
    /// Solve one instance, plainly or with early fixing.
    Solve(SolveArgs),
    /// Record expert traces from plain solves.
    Collect(CollectArgs),
    /// Fit the policy network to a dataset.
    Train(TrainArgs),
    /// Compare modes against the plain solver over an instance set.
    Bench(BenchArgs),
    /// Flip-count histogram of plain solves.
    Flipstats(FlipArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Auction,
    Mrf,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value_t = Kind::Auction)]
    kind: Kind,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Bids (auction).
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    items: usize,
    #[arg(long, default_value_t = 0.05)]
    density: f64,
    #[arg(long, default_value_t = 1.0)]
    price_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    xi: f64,
    /// Grid width (mrf).
    #[arg(long, default_value_t = 16)]
    width: usize,
    #[arg(long, default_value_t = 16)]
    height: usize,
    #[arg(long, default_value_t = 1.0)]
    unary: f64,
    #[arg(long, default_value_t = 0.5)]
    coupling: f64,
    /// File-name prefix; defaults to the kind.
    #[arg(long)]
    prefix: Option<String>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// JSON file with solver parameters.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Iteration budget.
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolveMode {
    Plain,
    Heuristic,
    Learned,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = SolveMode::Plain)]
    mode: SolveMode,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    beta: usize,
    #[arg(long, default_value_t = 0.9)]
    delta: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = "solution.json")]
    out: PathBuf,
    /// Episode log (early-fixing modes only).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CollectArgs {
    /// Instance files or directories of them.
    #[arg(long, num_args = 1.., required = true)]
    instances: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    beta: usize,
    #[arg(long, default_value_t = 10)]
    gamma: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = "dataset.bin")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long)]
    no_attention: bool,
    #[arg(long, default_value = "model.bin")]
    out: PathBuf,
    /// Per-epoch loss log (JSON).
    #[arg(long, default_value = "train_log.json")]
    log: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchMode {
    Plain,
    Heuristic,
    Learned,
    LearnedNoatt,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, num_args = 1.., required = true)]
    instances: Vec<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "plain,heuristic")]
    modes: Vec<BenchMode>,
    /// Model for the `learned` mode.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Model for the `learned-noatt` mode.
    #[arg(long)]
    model_noatt: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    beta: usize,
    #[arg(long, default_value_t = 0.9)]
    delta: f64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Also run a threshold sweep with the heuristic (or the first learned)
    /// policy over these values.
    #[arg(long, value_delimiter = ',')]
    sweep: Vec<f64>,
    /// Include the merged flip histogram of the plain runs in the JSON.
    #[arg(long)]
    flips: bool,
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FlipArgs {
    #[arg(long, num_args = 1.., required = true)]
    instances: Vec<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = "flips.csv")]
    out: PathBuf,
}

struct Ctx {
    seed: u64,
    out_dir: PathBuf,
    timing: bool,
}

impl Ctx {
    fn output(&self, path: &Path) -> Result<PathBuf> {
        let full = if path.is_absolute() { path.to_path_buf() } else { self.out_dir.join(path) };
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        Ok(full)
    }

    fn admm_params(&self, args: &SolverArgs) -> Result<AdmmParams> {
        let mut params = match &args.params {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
                let de = &mut serde_json::Deserializer::from_str(&text);
                serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
                    field: e.path().to_string(),
                    reason: e.inner().to_string(),
                })?
            }
            None => AdmmParams::default(),
        };
        params.seed = self.seed;
        if let Some(t) = args.max_iters {
            params.max_iters = t;
        }
        params.validate()?;
        Ok(params)
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output types serialise");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Expands directories to their `*.json` files, sorted by name.
fn instance_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| io_error(p, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|path| path.extension().is_some_and(|ext| ext == "json"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(Error::Invalid {
            field: "instances".into(),
            reason: "no instance files found".into(),
        });
    }
    Ok(out)
}

fn load_instances(inputs: &[PathBuf]) -> Result<Vec<(String, IpInstance)>> {
    instance_paths(inputs)?
        .into_iter()
        .map(|p| {
            let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
            read_instance(&p).map(|inst| (name, inst))
        })
        .collect()
}

fn load_model(path: Option<&PathBuf>, what: &str) -> Result<Policy> {
    let path = path.ok_or_else(|| Error::Invalid {
        field: what.into(),
        reason: "a model file is required for learned modes".into(),
    })?;
    Ok(Policy::Learned(Box::new(PolicyWeights::load(path)?)))
}

fn generate(ctx: &Ctx, args: &GenerateArgs) -> Result<()> {
    let prefix = args.prefix.clone().unwrap_or_else(|| match args.kind {
        Kind::Auction => "auction".into(),
        Kind::Mrf => "mrf".into(),
    });
    for k in 0..args.count {
        let seed = child_seed(ctx.seed, k as u64);
        let inst = match args.kind {
            Kind::Auction => generate_auction(&GeneratorConfig {
                n: args.n,
                items: args.items,
                xi: args.xi,
                density: args.density,
                price_scale: args.price_scale,
                seed,
            })?,
            Kind::Mrf => generate_grid_mrf(args.width, args.height, args.unary, args.coupling, seed)?,
        };
        let path = ctx.output(Path::new(&format!("{prefix}-{k:03}.json")))?;
        write_instance(&inst, &path)?;
    }
    Ok(())
}

fn solve_cmd(ctx: &Ctx, args: &SolveArgs) -> Result<()> {
    let inst = read_instance(&args.instance)?;
    let params = ctx.admm_params(&args.solver)?;
    let policy = match args.mode {
        SolveMode::Plain => Policy::None,
        SolveMode::Heuristic => Policy::Heuristic,
        SolveMode::Learned => load_model(args.model.as_ref(), "model")?,
    };
    let (solution, log) = if args.mode == SolveMode::Plain {
        (solve(&inst, &params, |_, _| {})?, None)
    } else {
        let cfg = RunConfig { beta: args.beta, delta: args.delta, max_iters: params.max_iters };
        let (sol, log) = run(&inst, &cfg, &policy, &params)?;
        (sol, Some(log))
    };
    write_json(&ctx.output(&args.out)?, &solution.record(ctx.timing))?;
    if let (Some(path), Some(log)) = (&args.log, log) {
        let log = if ctx.timing { log } else { log.without_timing() };
        write_json(&ctx.output(path)?, &log)?;
    }
    println!(
        "objective {} after {} iterations (converged: {})",
        solution.objective, solution.iterations, solution.converged
    );
    Ok(())
}

fn collect_cmd(ctx: &Ctx, args: &CollectArgs) -> Result<()> {
    let params = ctx.admm_params(&args.solver)?;
    let instances: Vec<IpInstance> = load_instances(&args.instances)?.into_iter().map(|(_, i)| i).collect();
    let dataset = collect_dataset(&instances, &params, args.beta, args.gamma)?;
    write_dataset(&dataset, &ctx.output(&args.out)?)?;
    println!("{} samples from {} instances", dataset.len(), instances.len());
    Ok(())
}

#[derive(Serialize)]
struct TrainLog<'a> {
    train: &'a TrainConfig,
    policy: &'a PolicyConfig,
    samples: usize,
    epoch_losses: &'a [f64],
}

fn train_cmd(ctx: &Ctx, args: &TrainArgs) -> Result<()> {
    let dataset = read_dataset(&args.dataset)?;
    let cfg = TrainConfig {
        epochs: args.epochs,
        learning_rate: args.lr,
        batch_size: args.batch_size,
        seed: ctx.seed,
        ..Default::default()
    };
    let policy_cfg = PolicyConfig {
        layers: args.layers,
        use_attention: !args.no_attention,
        seed: ctx.seed,
        ..PolicyConfig::for_beta(dataset.beta)
    };
    let outcome = train(&dataset, &cfg, &policy_cfg)?;
    outcome.weights.save(&ctx.output(&args.out)?)?;
    let log = TrainLog {
        train: &cfg,
        policy: &policy_cfg,
        samples: dataset.len(),
        epoch_losses: &outcome.epoch_losses,
    };
    write_json(&ctx.output(&args.log)?, &log)?;
    if let Some(last) = outcome.epoch_losses.last() {
        println!("final training loss {last:.6}");
    }
    Ok(())
}

fn bench_cmd(ctx: &Ctx, args: &BenchArgs) -> Result<()> {
    let instances = load_instances(&args.instances)?;
    let params = ctx.admm_params(&args.solver)?;
    let mut policies = Vec::new();
    for mode in &args.modes {
        policies.push(match mode {
            BenchMode::Plain => Policy::None,
            BenchMode::Heuristic => Policy::Heuristic,
            BenchMode::Learned => load_model(args.model.as_ref(), "model")?,
            BenchMode::LearnedNoatt => load_model(args.model_noatt.as_ref(), "model-noatt")?,
        });
    }
    let cfg = BenchConfig {
        run: RunConfig { beta: args.beta, delta: args.delta, max_iters: params.max_iters },
        admm: params,
        with_timing: ctx.timing,
    };
    let report = bench_run(&instances, &policies, &cfg, args.flips)?;
    let csv_path = ctx.output(&args.out)?;
    let file = fs::File::create(&csv_path).map_err(|e| io_error(&csv_path, e))?;
    report.write_csv(file)?;
    write_json(&csv_path.with_extension("json"), &report)?;
    for s in &report.summary {
        println!(
            "{:<14} gap {:+.4}%  iter speedup {:.2}  accuracy {:.3}%  infeasible {:.2}",
            s.mode,
            100.0 * s.gap,
            s.iter_speedup,
            s.accuracy,
            s.infeasible
        );
    }

    if !args.sweep.is_empty() {
        let policy = policies
            .iter()
            .find(|p| matches!(p, Policy::Learned(_)))
            .cloned()
            .unwrap_or(Policy::Heuristic);
        let plain: Vec<IpInstance> = instances.into_iter().map(|(_, i)| i).collect();
        let rows = delta_sweep(&plain, &policy, &args.sweep, &cfg)?;
        let path = csv_path.with_file_name(format!(
            "{}_sweep.csv",
            csv_path.file_stem().map_or_else(|| "metrics".into(), |s| s.to_string_lossy().into_owned())
        ));
        let mut text = String::from("delta,infeasible,gap,iter_speedup,fixed,all_fixed_first_block\n");
        for r in &rows {
            text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.delta, r.infeasible, r.gap, r.iter_speedup, r.fixed, r.all_fixed_first_block
            ));
        }
        fs::write(&path, text).map_err(|e| io_error(&path, e))?;
        println!(
            "sweep over {} thresholds; infeasible count non-increasing in delta: {}",
            rows.len(),
            infeasible_trend_non_increasing(&rows)
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct FlipSummary<'a> {
    instances: Vec<String>,
    histogram: &'a FlipHistogram,
    low_bin_percent: f64,
    zero_flip_percent: f64,
    modal_bin: usize,
}

fn flipstats_cmd(ctx: &Ctx, args: &FlipArgs) -> Result<()> {
    let instances = load_instances(&args.instances)?;
    let params = ctx.admm_params(&args.solver)?;
    let mut hist = FlipHistogram::from_counts::<u32>(&[], FLIP_BIN_WIDTH);
    for (_, inst) in &instances {
        let sol = solve(inst, &params, |_, _| {})?;
        hist.merge(&FlipHistogram::from_counts(sol.trace.flips(), FLIP_BIN_WIDTH));
    }
    let path = ctx.output(&args.out)?;
    fs::write(&path, hist.to_csv()).map_err(|e| io_error(&path, e))?;
    let summary = FlipSummary {
        instances: instances.into_iter().map(|(n, _)| n).collect(),
        histogram: &hist,
        low_bin_percent: 100.0 * hist.fraction(0),
        zero_flip_percent: 100.0 * hist.zero_fraction(),
        modal_bin: hist.modal_bin(),
    };
    write_json(&path.with_extension("json"), &summary)?;
    println!(
        "{:.1}% of variables have [0,{}) flips, {:.1}% have none",
        summary.low_bin_percent, FLIP_BIN_WIDTH, summary.zero_flip_percent
    );
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    let ctx = Ctx {
        seed: cli.seed,
        out_dir: cli.out_dir.clone(),
        timing: !cli.no_timing,
    };
    match &cli.command {
        Command::Generate(a) => generate(&ctx, a),
        Command::Solve(a) => solve_cmd(&ctx, a),
        Command::Collect(a) => collect_cmd(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Bench(a) => bench_cmd(&ctx, a),
        Command::Flipstats(a) => flipstats_cmd(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
