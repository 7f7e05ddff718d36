use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use zkzsl::datasets::{generate_synthetic, load_dataset, write_dataset, SynthSpec};
use zkzsl::inference::infer;
use zkzsl::metrics::evaluate;
use zkzsl::model::ModelParams;
use zkzsl::training::{inference_seed, train_with, EpochRecord, TrainConfig};

const CHECKPOINT: &str = "model.json";
const CONFIG: &str = "config.toml";
const TRACE: &str = "trace.csv";
const PRETRAIN_TRACE: &str = "pretrain_trace.csv";

#[derive(Parser)]
#[command(name = "zkzsl", version, about = "Zero-knowledge zero-shot learning by source-guided clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset directory.
    Synth(SynthArgs),
    /// Pretrain, initialize centroids and train; writes a run directory.
    Train(TrainArgs),
    /// Score a trained model against the target ground truth.
    Eval(EvalArgs),
    /// Write per-sample target predictions as CSV.
    Predict(PredictArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    ks: usize,
    #[arg(long, default_value_t = 5)]
    kt: usize,
    /// Attribute dimension (defaults to ks)
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value_t = 32)]
    feature_dim: usize,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Closest pair of class means, in units of the within-class std
    #[arg(long, default_value_t = 10.0)]
    sep: f64,
    #[arg(long, default_value_t = 1.0)]
    within_std: f64,
    #[arg(long, default_value_t = 0.05)]
    attribute_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Run directory to create
    #[arg(long)]
    out: PathBuf,
    /// Key-value file of training settings; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    h: Option<usize>,
    /// Encoder hidden widths, comma separated
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Full-objective training epochs
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    drift: Option<Switch>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Run directory or checkpoint file
    #[arg(long)]
    model: PathBuf,
    /// Also write the report as JSON to this path
    #[arg(long)]
    json: Option<PathBuf>,
    /// Seed for the unseen K-means (defaults to the run's seed)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

/// Defaults, then the config file, then flags.
fn resolve_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut table = toml::Table::try_from(TrainConfig::default())?;
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
        for (key, value) in file {
            if !table.contains_key(&key) {
                bail!("unknown setting `{key}` in {}", path.display());
            }
            table.insert(key, value);
        }
    }
    let mut cfg: TrainConfig = table.try_into().context("invalid training settings")?;
    if let Some(v) = args.h {
        cfg.h = v;
    }
    if let Some(v) = &args.hidden {
        cfg.hidden = v.clone();
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.beta {
        cfg.beta = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.epochs {
        cfg.train_epochs = v;
    }
    if let Some(v) = args.pretrain_epochs {
        cfg.pretrain_epochs = v;
    }
    if let Some(v) = args.batch {
        cfg.batch_size = v;
    }
    if let Some(v) = args.drift {
        cfg.drift_correction = matches!(v, Switch::On);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        k_s: args.ks,
        k_t: args.kt,
        d: args.d.unwrap_or(args.ks),
        feature_dim: args.feature_dim,
        samples_per_class: args.samples,
        separation: args.sep,
        within_std: args.within_std,
        attribute_noise: args.attribute_noise,
        seed: args.seed,
    };
    let ds = generate_synthetic(&spec)?;
    write_dataset(&ds, &args.out)?;
    info!("wrote {} source and {} target samples to {}", ds.source_features.rows(), ds.target_features.rows(), args.out.display());
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let cfg = resolve_config(&args)?;
    let ds = load_dataset(&args.data)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    fs::write(args.out.join(CONFIG), toml::to_string(&cfg)?)?;
    let total = cfg.train_epochs;
    let mut hook = |r: &EpochRecord, _: &ModelParams| {
        if r.epoch.is_multiple_of(50) || r.epoch + 1 == total {
            info!(
                "epoch {:>4}  self {:.4}  reg {:.4}  cent {:.4}  a {:.4}  align {:.4}  lr {:.1e}",
                r.epoch, r.l_self, r.l_reg, r.l_cent, r.l_a, r.l_align, r.lr
            );
        }
        Ok(())
    };
    let out = train_with(&ds, &cfg, &mut hook)?;
    out.params.save(args.out.join(CHECKPOINT))?;
    out.trace.write_csv(args.out.join(TRACE))?;
    out.pretrain_trace.write_csv(args.out.join(PRETRAIN_TRACE))?;
    info!("run written to {}", args.out.display());
    Ok(())
}

/// Checkpoint and inference seed for a run directory or a bare checkpoint.
fn open_model(path: &Path, seed: Option<u64>) -> Result<(ModelParams, u64)> {
    let (checkpoint, config) = if path.is_dir() {
        (path.join(CHECKPOINT), Some(path.join(CONFIG)))
    } else {
        (path.to_path_buf(), path.parent().map(|p| p.join(CONFIG)))
    };
    let params = ModelParams::load(&checkpoint)?;
    let run_seed = match config.filter(|c| c.is_file()) {
        Some(c) => toml::from_str::<TrainConfig>(&fs::read_to_string(&c)?)
            .with_context(|| format!("parsing {}", c.display()))?
            .seed,
        None => 0,
    };
    Ok((params, inference_seed(seed.unwrap_or(run_seed))))
}

fn eval(args: EvalArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let (params, seed) = open_model(&args.model, args.seed)?;
    let inf = infer(&params, &ds.target_features, ds.attributes_full.as_ref(), seed)?;
    let report = evaluate(&ds, &inf)?;
    print!("{}", report.table());
    println!("tau {:.4}", report.tau);
    println!("{:>6} {:>6} {:>6} {:>8} {:>8}", "class", "seen", "count", "acc", "sr");
    for c in &report.per_class {
        println!(
            "{:>6} {:>6} {:>6} {:>8.1} {:>8.1}",
            c.class,
            if c.seen { "yes" } else { "no" },
            c.count,
            100.0 * c.accuracy,
            100.0 * c.semantic_recovery
        );
    }
    if let Some(path) = args.json {
        fs::write(&path, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let (params, seed) = open_model(&args.model, args.seed)?;
    let inf = infer(&params, &ds.target_features, ds.attributes_full.as_ref(), seed)?;
    inf.write_csv(&args.out)?;
    info!("{} predictions written to {}", inf.y_hat.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
