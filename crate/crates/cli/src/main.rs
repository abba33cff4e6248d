//! `infofd` command-line tool.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] infofd::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Parser)]
#[command(name = "infofd", version, about = "Text-guided information bottleneck detector over precomputed features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate, merge and summarize feature files, or write a synthetic set.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Comma-separated feature files to merge.
        #[arg(long)]
        input: Option<String>,
        /// Generate a two-Gaussian synthetic set instead of reading inputs.
        #[arg(long)]
        synthetic: bool,
    },
    /// Train one model per seed.
    Train(Common),
    /// Score a test set with one or more checkpoints.
    Eval(Common),
    /// Cosine bias of image features against pooled random-text features.
    Bias(Common),
    /// Shifted DFT magnitude maps of 16×16 patch grids.
    Dft(Common),
    /// Two-component PCA of features or learned representations.
    Pca(Common),
    /// Mutual-information trajectories over training.
    Mi(Common),
    /// Grid of condition, CGP and text-guidance ablations.
    Ablate(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// key=value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory (output file for ingest).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    layer: Option<u8>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lp: Option<u32>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    no_cgp: bool,
    #[arg(long)]
    no_mmd: bool,
    /// Comma list from n, y, t.
    #[arg(long)]
    conditions: Option<String>,
    /// dto, paired, class-prompt or random.
    #[arg(long)]
    guidance: Option<String>,
    #[arg(long)]
    detach_mu_r: bool,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Checkpoint file(s), comma-separated.
    #[arg(long)]
    checkpoint: Option<String>,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Any other config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut o = Vec::new();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            o.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        put("seed", self.seed.map(|v| v.to_string()));
        put("seeds", self.seeds.clone());
        put("out", path(&self.out));
        put("layer", self.layer.map(|v| v.to_string()));
        put("hidden", self.hidden.map(|v| v.to_string()));
        put("beta", self.beta.map(|v| v.to_string()));
        put("lp", self.lp.map(|v| v.to_string()));
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("cgp", self.no_cgp.then(|| "false".into()));
        put("mmd", self.no_mmd.then(|| "false".into()));
        put("conditions", self.conditions.clone());
        put("guidance", self.guidance.clone());
        put("detach_mu_r", self.detach_mu_r.then(|| "true".into()));
        put("train", path(&self.train));
        put("val", path(&self.val));
        put("test", path(&self.test));
        put("checkpoint", self.checkpoint.clone());
        put("features", path(&self.features));
        Ok(o)
    }

    fn resolve(&self, extra: &[(String, String)]) -> Result<RunConfig, CliError> {
        let mut o = self.overrides()?;
        o.extend(extra.iter().cloned());
        RunConfig::resolve(self.config.as_deref(), &o)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { common, input, synthetic } => {
            let extra: Vec<(String, String)> = input.map(|i| ("input".to_string(), i)).into_iter().collect();
            commands::ingest(&common.resolve(&extra)?, synthetic)
        }
        Command::Train(c) => commands::train(&c.resolve(&[])?),
        Command::Eval(c) => commands::eval(&c.resolve(&[])?),
        Command::Bias(c) => commands::bias(&c.resolve(&[])?),
        Command::Dft(c) => commands::dft(&c.resolve(&[])?),
        Command::Pca(c) => commands::pca(&c.resolve(&[])?),
        Command::Mi(c) => commands::mi(&c.resolve(&[])?),
        Command::Ablate(c) => commands::ablate(&c.resolve(&[])?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Usage(_)) => {
            eprintln!("usage error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
