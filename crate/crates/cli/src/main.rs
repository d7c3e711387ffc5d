//! `ase-fd`: synthetic data, ingestion, enhancement-model training, feature
//! extraction, classifier training, LOSO evaluation, sweeps and cost tables.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_alphas, parse_classifiers, AseMode};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error(transparent)]
    Core(#[from] ase_fd::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(e) => e.kind(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ase-fd", version, about = "Low-resolution accelerometer enhancement and fall detection")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand. Flags override the config file.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration; every key is optional
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for all artifacts [default: out]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Base seed for data generation, splits and initialization [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it [default: 1]
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

/// Dataset selection: a manifest of CSV trials, or the synthetic generator.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// JSON manifest listing CSV trials
    #[arg(long, conflicts_with = "dataset")]
    pub manifest: Option<PathBuf>,
    /// Built-in dataset; only `synthetic` is available
    #[arg(long, value_parser = ["synthetic"])]
    pub dataset: Option<String>,
    /// Synthetic subjects [default: 6]
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Synthetic trials per subject [default: 20]
    #[arg(long)]
    pub trials: Option<usize>,
}

/// Enhancement-model training knobs.
#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// L2 penalty on weights [default: 0]
    #[arg(long)]
    pub l2: Option<f64>,
    /// Dropout on hidden dense activations during training [default: 0]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Maximum epochs [default: 300]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Minibatch size [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam step size [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Epochs without validation improvement before stopping [default: 20]
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset as CSV trials plus a manifest
    Synth(DataArgs),
    /// Load a dataset, report its contents, optionally write LR/HR frames
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        /// Also write normalized frame pairs at this downsampling exponent
        #[arg(long)]
        alpha: Option<u32>,
    },
    /// Train an enhancement model on all trials of a dataset
    TrainAse {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        alpha: u32,
    },
    /// Enhance a low-resolution frame file with a trained model
    Enhance {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        frame: PathBuf,
    },
    /// Extract the 54 features per trial into a CSV
    Features {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        alpha: u32,
        /// Enhancement model applied before extraction
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train a standardizer and classifier on a feature CSV
    TrainFd {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "svm")]
        classifier: String,
    },
    /// Leave-one-subject-out evaluation of one or more settings
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Downsampling exponent
        #[arg(long)]
        alpha: u32,
        /// Comma-separated classifiers (svm, knn)
        #[arg(long)]
        classifiers: Option<String>,
        #[arg(long, value_enum)]
        ase: Option<AseMode>,
    },
    /// Evaluate every combination of rates, classifiers and front ends
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Exponents as `0..7`, `3` or `0,2,7`
        #[arg(long)]
        alphas: Option<String>,
        /// Comma-separated classifiers (svm, knn)
        #[arg(long)]
        classifiers: Option<String>,
        #[arg(long, value_enum)]
        ase: Option<AseMode>,
    },
    /// FLOPs, power, battery life and response time per model size
    Cost {
        /// Also evaluate the reference per-rate MFLOPs and compare
        #[arg(long)]
        reference_mflops: bool,
        /// Extra MFLOPs values to evaluate, comma-separated
        #[arg(long, value_delimiter = ',')]
        mflops: Vec<f64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Ingest { .. } => "ingest",
            Command::TrainAse { .. } => "train-ase",
            Command::Enhance { .. } => "enhance",
            Command::Features { .. } => "features",
            Command::TrainFd { .. } => "train-fd",
            Command::Eval { .. } => "eval",
            Command::Sweep { .. } => "sweep",
            Command::Cost { .. } => "cost",
        }
    }
}

/// Applies flag overrides on top of the config file and validates.
fn resolve(cli: &Cli) -> Result<config::RunConfig, CliError> {
    let mut cfg = match &cli.common.config {
        Some(p) => config::RunConfig::load(p)?,
        None => config::RunConfig::default(),
    };
    let c = &cli.common;
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    if let Some(j) = c.jobs {
        cfg.jobs = j;
    }
    let mut errors = Vec::new();
    let (data, train) = match &cli.command {
        Command::Synth(d) => (Some(d), None),
        Command::Ingest { data, .. } | Command::Features { data, .. } => (Some(data), None),
        Command::TrainAse { data, train, .. } => (Some(data), Some(train)),
        Command::Eval { data, train, .. } | Command::Sweep { data, train, .. } => (Some(data), Some(train)),
        _ => (None, None),
    };
    if let Some(d) = data {
        if d.manifest.is_some() {
            cfg.manifest = d.manifest.clone();
        }
        if d.dataset.is_some() {
            cfg.manifest = None;
        }
        if let Some(n) = d.subjects {
            cfg.synthetic.subjects = n;
        }
        if let Some(n) = d.trials {
            cfg.synthetic.trials_per_subject = n;
        }
    }
    if let Some(t) = train {
        if let Some(v) = t.l2 {
            cfg.l2_weight = v;
        }
        if let Some(v) = t.dropout {
            cfg.dropout_p = v;
        }
        if let Some(v) = t.epochs {
            cfg.train.max_epochs = v;
        }
        if let Some(v) = t.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = t.lr {
            cfg.train.step_size = v;
        }
        if let Some(v) = t.patience {
            cfg.train.patience = v;
        }
    }
    match &cli.command {
        Command::Eval { alpha, classifiers, ase, .. } => {
            cfg.alphas = vec![*alpha];
            if let Some(c) = classifiers {
                parse_classifiers(c).map_or_else(|e| errors.push(format!("classifiers: {e}")), |c| cfg.classifiers = c);
            }
            if let Some(a) = ase {
                cfg.ase = *a;
            }
        }
        Command::Sweep { alphas, classifiers, ase, .. } => {
            if let Some(a) = alphas {
                parse_alphas(a).map_or_else(|e| errors.push(format!("alphas: {e}")), |a| cfg.alphas = a);
            }
            if let Some(c) = classifiers {
                parse_classifiers(c).map_or_else(|e| errors.push(format!("classifiers: {e}")), |c| cfg.classifiers = c);
            }
            if let Some(a) = ase {
                cfg.ase = *a;
            }
        }
        Command::TrainAse { alpha, .. } | Command::Features { alpha, .. } => cfg.alphas = vec![*alpha],
        Command::Ingest { alpha: Some(alpha), .. } => cfg.alphas = vec![*alpha],
        _ => {}
    }
    errors.extend(cfg.violations());
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Config(errors))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(&cli).and_then(|cfg| commands::run(&cli, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut line = serde_json::json!({
                "command": cli.command.name(),
                "kind": e.kind(),
                "message": e.to_string(),
            });
            if let CliError::Config(v) = &e {
                line["violations"] = serde_json::json!(v);
            }
            eprintln!("error: {line}");
            ExitCode::from(e.exit_code())
        }
    }
}
