//! `lifelog`: ingest → graphs → model → analysis, one subcommand per stage.

mod config;
mod error;
mod pipeline;

use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use config::PipelineConfig;
use error::CliError;
use pipeline::Run;

#[derive(Debug, Parser)]
#[command(name = "lifelog", version, about = "Daily lifelog graphs, constant-curvature adversarial autoencoder, latent analysis")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Every flag overrides the config key of the same name.
#[derive(Debug, Args)]
struct Common {
    /// Master seed (`seed`). Required here or in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (`out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `graph.n_max`
    #[arg(long, global = true)]
    n_max: Option<usize>,
    /// `ccm.d`
    #[arg(long, global = true)]
    d: Option<usize>,
    /// `ccm.kappa`
    #[arg(long, global = true, allow_hyphen_values = true)]
    kappa: Option<f64>,
    /// `train.epochs`
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// `train.batch_size`
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    /// `analysis.runs`
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// `analysis.perplexity`
    #[arg(long, global = true)]
    perplexity: Option<f64>,
    /// `analysis.tsne_iterations`
    #[arg(long, global = true)]
    tsne_iterations: Option<usize>,
    /// `analysis.cluster.k`
    #[arg(long, global = true)]
    k: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a lifelog dataset into events.tsv, users.tsv, rejects.txt.
    Ingest {
        /// `ingest.dataset`
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// `ingest.min_days`
        #[arg(long)]
        min_days: Option<usize>,
    },
    /// Generate the synthetic archetype suite in the same event format.
    Synth {
        /// `synth.users_per_archetype`
        #[arg(long)]
        users_per_archetype: Option<usize>,
        /// `synth.days`
        #[arg(long)]
        days: Option<usize>,
    },
    /// Build one semantic graph per user-day.
    Build,
    /// Train the adversarial model, or the plain autoencoder with --baseline.
    Train {
        /// `train.baseline_mode`
        #[arg(long)]
        baseline: bool,
    },
    /// Encode every graph with each trained checkpoint.
    Embed {
        /// Only this model (ae or ccm-aae).
        #[arg(long)]
        model: Option<String>,
    },
    /// Classification table, t-SNE projection and cluster report.
    Analyze {
        /// `analysis.per_user`
        #[arg(long)]
        per_user: bool,
    },
    /// Export one user-day graph.
    Viz {
        #[arg(long)]
        user: String,
        #[arg(long)]
        date: NaiveDate,
        /// dot, nodelink, or both (comma separated).
        #[arg(long, default_value = "dot")]
        format: String,
    },
}

fn resolve(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    macro_rules! set {
        ($flag:expr, $key:expr) => {
            if let Some(v) = $flag.clone() {
                $key = v;
            }
        };
    }
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    set!(c.out, cfg.out);
    set!(c.n_max, cfg.graph.n_max);
    set!(c.d, cfg.ccm.d);
    set!(c.kappa, cfg.ccm.kappa);
    set!(c.epochs, cfg.train.epochs);
    set!(c.batch_size, cfg.train.batch_size);
    set!(c.runs, cfg.analysis.runs);
    set!(c.perplexity, cfg.analysis.perplexity);
    set!(c.tsne_iterations, cfg.analysis.tsne_iterations);
    set!(c.k, cfg.analysis.cluster.k);
    match &cli.command {
        Command::Ingest { dataset, min_days } => {
            if dataset.is_some() {
                cfg.ingest.dataset = dataset.clone();
            }
            set!(min_days, cfg.ingest.min_days);
        }
        Command::Synth { users_per_archetype, days } => {
            set!(users_per_archetype, cfg.synth.users_per_archetype);
            set!(days, cfg.synth.days);
        }
        Command::Train { baseline: true } => cfg.train.baseline_mode = true,
        Command::Analyze { per_user: true } => cfg.analysis.per_user = true,
        _ => {}
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let run = Run::new(resolve(&cli)?)?;
    match &cli.command {
        Command::Ingest { .. } => run.ingest(),
        Command::Synth { .. } => run.synth(),
        Command::Build => run.build(),
        Command::Train { .. } => run.train(),
        Command::Embed { model } => run.embed(model.as_deref()),
        Command::Analyze { .. } => run.analyze(),
        Command::Viz { user, date, format } => {
            let formats: Vec<&str> = if format == "both" {
                vec!["dot", "nodelink"]
            } else {
                format.split(',').map(str::trim).collect()
            };
            for p in run.viz(user, *date, &formats)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            let err = CliError::Usage(first.to_string());
            eprintln!("{}", err.line());
            std::process::exit(err.exit_code());
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("{}", e.line());
        std::process::exit(e.exit_code());
    }
}
