use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use xclr_cli::config::{ExperimentConfig, GraphChoice, Objective, OptimizerChoice, ScheduleChoice};
use xclr_cli::dataset::generate_dataset;
use xclr_cli::error::{CliError, Result};
use xclr_cli::pipeline::{
    run_analyze, run_eval, run_sweep, run_train, write_report, SweepAxis, SweepOptions,
    REPORT_FILE,
};

/// Graph-weighted contrastive training on synthetic data.
///
/// All computation runs on a single thread. XCLR_THREADS, when set, caps the
/// worker count; values below 1 are rejected and higher values change
/// nothing. Exit codes: 0 on success, 2 for configuration or usage errors,
/// 1 for runtime failures.
#[derive(Parser)]
#[command(name = "xclr", version, about, long_about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    GenData(GenDataArgs),
    /// Train an encoder against a similarity graph.
    Train(TrainArgs),
    /// Evaluate a checkpoint: probes, KNN sweep, class-pair table.
    Eval(EvalArgs),
    /// Train and evaluate across an axis of settings.
    Sweep(SweepArgs),
    /// Export graph and target diagnostics as CSV files.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// JSON config file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Output directory for the dataset files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of superclasses.
    #[arg(long = "super")]
    superclasses: Option<usize>,
    /// Subclasses per superclass.
    #[arg(long = "sub")]
    subs_per_super: Option<usize>,
    /// Samples per subclass.
    #[arg(long = "per-sub")]
    samples_per_sub: Option<usize>,
    /// Feature dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Caption embedding dimension.
    #[arg(long)]
    caption_dim: Option<usize>,
    /// Caption noise scale.
    #[arg(long)]
    caption_noise: Option<f64>,
    /// Within-subclass feature noise.
    #[arg(long)]
    within_sigma: Option<f64>,
    /// Subclass center spread around the superclass center.
    #[arg(long)]
    sub_spread: Option<f64>,
    /// Superclass center spread.
    #[arg(long)]
    super_spread: Option<f64>,
    /// Generation seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Dataset directory (from gen-data).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for the checkpoint and metrics.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue from this checkpoint directory.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// xclr, simclr, or supcon.
    #[arg(long)]
    objective: Option<Objective>,
    /// Similarity source for the xclr objective.
    #[arg(long)]
    graph: Option<GraphChoice>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Total epochs (a resumed run counts past epochs toward this).
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// sgd or lars.
    #[arg(long)]
    optimizer: Option<OptimizerChoice>,
    /// constant or cosine.
    #[arg(long)]
    schedule: Option<ScheduleChoice>,
    /// Scoring temperature.
    #[arg(long)]
    tau: Option<f64>,
    /// Target temperature.
    #[arg(long = "tau-s")]
    tau_s: Option<f64>,
    /// Augmentation noise scale.
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Augmentation dropout probability.
    #[arg(long)]
    dropout: Option<f64>,
    /// Training seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Checkpoint directory to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Report path (default: report.json inside the checkpoint directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated KNN k values.
    #[arg(long, value_delimiter = ',')]
    knn_ks: Option<Vec<usize>>,
    #[arg(long)]
    probe_iterations: Option<usize>,
    #[arg(long = "probe-lr")]
    probe_learning_rate: Option<f64>,
    #[arg(long)]
    probe_l2: Option<f64>,
    /// Samples per class for the class-pair similarity table.
    #[arg(long)]
    pair_samples: Option<usize>,
    /// Seed for the probe split and class-pair sampling.
    #[arg(long)]
    eval_seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// tau-s or samples-per-class.
    #[arg(long)]
    axis: SweepAxis,
    /// Comma-separated axis values (defaults depend on the axis).
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<String>>,
    /// Comma-separated objectives to compare per value.
    #[arg(long, value_delimiter = ',')]
    objectives: Option<Vec<Objective>>,
    /// Seeds per cell; row seed is base seed + index.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    /// Optimizer-step budget per run; epochs are derived from it.
    #[arg(long, default_value_t = 400)]
    train_steps: usize,
    /// KNN k used for the sweep columns.
    #[arg(long, default_value_t = 10)]
    knn_k: usize,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Base training seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Optional checkpoint; its backbone features feed the class-pair table.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Graph whose similarity histogram is exported.
    #[arg(long)]
    graph: Option<GraphChoice>,
    /// Off-diagonal similarity for the diagonal-mass curves.
    #[arg(long, default_value_t = 0.0)]
    offdiag: f64,
    /// Histogram bin count.
    #[arg(long)]
    bins: Option<usize>,
    /// Output directory for the CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    check_thread_cap()?;
    match cli.command {
        Command::GenData(args) => gen_data(args),
        Command::Train(args) => train(args),
        Command::Eval(args) => eval(args),
        Command::Sweep(args) => sweep(args),
        Command::Analyze(args) => analyze(args),
    }
}

/// The implementation is single-threaded, so any cap of at least one worker
/// is satisfiable; everything else is a configuration mistake.
fn check_thread_cap() -> Result<()> {
    match std::env::var("XCLR_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => match raw.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(()),
            _ => Err(CliError::Config(format!(
                "XCLR_THREADS must be a positive integer, got {raw:?}"
            ))),
        },
    }
}

fn base_config(arg: &ConfigArg) -> Result<ExperimentConfig> {
    match &arg.config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default()),
    }
}

fn set<T>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

/// Directory-valued settings resolve flag first, then config file.
fn required_dir(
    flag: Option<PathBuf>,
    from_config: Option<&PathBuf>,
    name: &str,
) -> Result<PathBuf> {
    flag.or_else(|| from_config.cloned()).ok_or_else(|| {
        CliError::Config(format!("--{name} is required (or set it in the config file)"))
    })
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let mut config = base_config(&args.config)?;
    set(&mut config.superclasses, args.superclasses);
    set(&mut config.subs_per_super, args.subs_per_super);
    set(&mut config.samples_per_sub, args.samples_per_sub);
    set(&mut config.feature_dim, args.dim);
    set(&mut config.caption_dim, args.caption_dim);
    set(&mut config.caption_noise, args.caption_noise);
    set(&mut config.within_sigma, args.within_sigma);
    set(&mut config.sub_spread, args.sub_spread);
    set(&mut config.super_spread, args.super_spread);
    set(&mut config.data_seed, args.seed);
    config.validate()?;
    let out = required_dir(args.out, config.out_dir.as_ref(), "out")?;
    let manifest = generate_dataset(&config, &out)?;
    println!(
        "wrote {} samples ({} superclasses x {} subclasses x {} each, dim {}) to {}",
        manifest.n_samples,
        manifest.superclasses,
        manifest.subs_per_super,
        manifest.samples_per_sub,
        manifest.feature_dim,
        out.display()
    );
    Ok(())
}

fn apply_train_flags(config: &mut ExperimentConfig, args: &TrainArgs) {
    set(&mut config.objective, args.objective);
    set(&mut config.graph, args.graph.clone());
    set(&mut config.batch_size, args.batch_size);
    set(&mut config.epochs, args.epochs);
    set(&mut config.learning_rate, args.learning_rate);
    set(&mut config.momentum, args.momentum);
    set(&mut config.weight_decay, args.weight_decay);
    set(&mut config.optimizer, args.optimizer);
    set(&mut config.schedule, args.schedule);
    set(&mut config.tau, args.tau);
    set(&mut config.tau_s, args.tau_s);
    set(&mut config.noise_sigma, args.noise_sigma);
    set(&mut config.dropout_prob, args.dropout);
    set(&mut config.seed, args.seed);
}

fn train(args: TrainArgs) -> Result<()> {
    let mut config = base_config(&args.config)?;
    apply_train_flags(&mut config, &args);
    let data = required_dir(args.data.clone(), config.data_dir.as_ref(), "data")?;
    let out = required_dir(args.out.clone(), config.out_dir.as_ref(), "out")?;
    let artifacts = run_train(&config, &data, &out, args.resume.as_deref())?;
    for m in &artifacts.history {
        println!("epoch {:>4}  mean_loss {:.6}", m.epoch + 1, m.mean_loss);
    }
    println!(
        "trained {} epoch(s) in {:.2}s, checkpoint at {}",
        artifacts.history.len(),
        artifacts.wall_seconds,
        out.display()
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let mut config = base_config(&args.config)?;
    set(&mut config.probe_iterations, args.probe_iterations);
    set(&mut config.probe_learning_rate, args.probe_learning_rate);
    set(&mut config.probe_l2, args.probe_l2);
    set(&mut config.pair_samples, args.pair_samples);
    set(&mut config.eval_seed, args.eval_seed);
    if let Some(ks) = args.knn_ks {
        config.knn_ks = ks;
    }
    let data = required_dir(args.data.clone(), config.data_dir.as_ref(), "data")?;
    let report = run_eval(&config, &data, &args.checkpoint)?;
    let out = args
        .out
        .unwrap_or_else(|| args.checkpoint.join(REPORT_FILE));
    write_report(&out, &report)?;
    println!(
        "probe accuracy: subclass {:.4}, superclass {:.4}",
        report.probes.subclass.accuracy, report.probes.superclass.accuracy
    );
    for row in &report.knn {
        println!(
            "knn k={:<3} subclass {:.4}, superclass {:.4}",
            row.k, row.subclass_accuracy, row.superclass_accuracy
        );
    }
    println!("report written to {}", out.display());
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut config = base_config(&args.config)?;
    set(&mut config.seed, args.seed);
    set(&mut config.batch_size, args.batch_size);
    set(&mut config.learning_rate, args.learning_rate);
    set(&mut config.tau, args.tau);
    let data = required_dir(args.data.clone(), config.data_dir.as_ref(), "data")?;
    let options = SweepOptions {
        axis: args.axis,
        values: args.values,
        objectives: args.objectives,
        seeds: args.seeds,
        train_steps: args.train_steps,
        knn_k: args.knn_k,
    };
    let rows = run_sweep(&config, &data, &options, &args.out)?;
    for row in &rows {
        println!(
            "{}={} {} seed {}: superclass probe {:.4}, subclass probe {:.4}",
            row.axis, row.value, row.objective, row.seed, row.superclass_probe,
            row.subclass_probe
        );
    }
    println!("{} rows written to {}", rows.len(), args.out.display());
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let mut config = base_config(&args.config)?;
    set(&mut config.graph, args.graph.clone());
    set(&mut config.histogram_bins, args.bins);
    let data = required_dir(args.data.clone(), config.data_dir.as_ref(), "data")?;
    let out = required_dir(args.out.clone(), config.out_dir.as_ref(), "out")?;
    let artifacts = run_analyze(
        &config,
        &data,
        args.checkpoint.as_deref(),
        args.offdiag,
        &out,
    )?;
    let pairs: usize = artifacts.histogram.counts.iter().sum();
    println!(
        "histogram over {} pairs, mean similarity {:.4}",
        pairs, artifacts.histogram.mean
    );
    for file in &artifacts.files {
        println!("wrote {}", file.display());
    }
    Ok(())
}
