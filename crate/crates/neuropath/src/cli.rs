//! Command-line interface. Flags override values from `--config`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::Result;
use crate::pipeline::{evaluate_stage, localize_stage, run_pipeline, synthesize_stage, train_stage};

#[derive(Debug, Parser)]
#[command(name = "neuropath", version, about = "Fault localization for feedforward neural networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network on MNIST and write it to <out>/model.
    Train(RunArgs),
    /// Build the hit spectrum and write spectrum.csv.
    Localize(RunArgs),
    /// Synthesize inputs guided by the suspicious neurons.
    Synthesize(RunArgs),
    /// Compute metrics and write report.json and plots/.
    Evaluate(RunArgs),
    /// Run train, localize, synthesize and evaluate.
    Pipeline(RunArgs),
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::Train(a) | Command::Localize(a) | Command::Synthesize(a) | Command::Evaluate(a) | Command::Pipeline(a) => a,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory with the MNIST IDX files.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Model directory (default <out>/model).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Architecture, e.g. "8 * <20>, <10>".
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub train_limit: Option<usize>,
    #[arg(long)]
    pub test_limit: Option<usize>,
    #[arg(long)]
    pub synth_limit: Option<usize>,
    /// Criticality coefficient in (0, 1].
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Activation threshold.
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// Suspicious neurons to select (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// tarantula, ochiai, barinel (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub measure: Option<Vec<String>>,
    /// pathway or neuron.
    #[arg(long)]
    pub mode: Option<String>,
    /// mga, ga (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub synth: Option<Vec<String>>,
    #[arg(long, allow_negative_numbers = true)]
    pub step: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub dmax: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// per-step or ball.
    #[arg(long)]
    pub distance_mode: Option<String>,
    /// Penalize drift of earlier layers' targets during MGA.
    #[arg(long)]
    pub mga_anchor: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for per-input stages (0: one per CPU). Results do not
    /// depend on this value.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

impl RunArgs {
    /// Base configuration from `--config` (or defaults) with flags applied.
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident <- $flag:expr),* $(,)?) => {
                $(if let Some(v) = $flag.clone() { cfg.$field = v; })*
            };
        }
        set!(
            out <- self.out,
            data_dir <- self.data_dir,
            architecture <- self.arch,
            epochs <- self.epochs,
            batch_size <- self.batch_size,
            learning_rate <- self.learning_rate,
            synth_limit <- self.synth_limit,
            alpha <- self.alpha,
            beta <- self.beta,
            k <- self.k,
            measures <- self.measure,
            mode <- self.mode,
            synth <- self.synth,
            step <- self.step,
            d_max <- self.dmax,
            iterations <- self.iterations,
            distance_mode <- self.distance_mode,
            seed <- self.seed,
        );
        if self.model.is_some() {
            cfg.model = self.model.clone();
        }
        if self.train_limit.is_some() {
            cfg.train_limit = self.train_limit;
        }
        if self.test_limit.is_some() {
            cfg.test_limit = self.test_limit;
        }
        if self.mga_anchor {
            cfg.mga_anchor = true;
        }
        Ok(cfg)
    }
}

/// Executes one subcommand.
pub fn run(cli: &Cli) -> Result<()> {
    let args = cli.command.args();
    let cfg = args.resolve_config()?;
    let r = cfg.resolve()?;
    match &cli.command {
        Command::Train(_) => {
            let s = train_stage(&cfg, &r)?;
            println!(
                "wrote {} ({} parameters, test accuracy {:.2}%)",
                s.model_dir.display(),
                s.parameters,
                s.test_accuracy
            );
        }
        Command::Localize(_) => {
            let m = localize_stage(&cfg, &r, args.jobs)?;
            println!(
                "wrote {} ({} inputs analyzed, {} degenerate)",
                cfg.out.join(crate::artifacts::SPECTRUM_CSV).display(),
                m.analyzed,
                m.degenerate
            );
        }
        Command::Synthesize(_) => {
            let dirs = synthesize_stage(&cfg, &r, args.jobs)?;
            println!("wrote {} synthesized sets under {}", dirs.len(), cfg.out.join("synth").display());
        }
        Command::Evaluate(_) => {
            evaluate_stage(&cfg, &r)?;
            println!("wrote {}", cfg.out.join(crate::artifacts::REPORT_JSON).display());
        }
        Command::Pipeline(_) => {
            let report = run_pipeline(&cfg, args.jobs)?;
            println!(
                "wrote {} (test accuracy {:.2}%, {} synthesized sets)",
                cfg.out.join(crate::artifacts::REPORT_JSON).display(),
                report.model.test_accuracy,
                report.runs.len()
            );
        }
    }
    Ok(())
}
