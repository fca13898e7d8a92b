use std::path::PathBuf;
use std::str::FromStr;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use numex_cli::config::RunConfig;
use numex_cli::{cmd_alias, cmd_annotate, cmd_eval, cmd_pipeline, cmd_synth, cmd_train};

/// Distant-supervision pipeline for numeric attribute extraction.
#[derive(Parser)]
#[command(name = "numex", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flag overrides applied on top of the (optional) config file.
#[derive(Args, Default)]
struct Overrides {
    /// JSON run config supplying defaults; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory to re-root all default file names under.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    aliases: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Matching regime: exact, canonical or auto.
    #[arg(long)]
    regime: Option<String>,
    /// Head arrangement: mast or mamt.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    dev_fraction: Option<f64>,
    /// Drop products with any missing attribute value before annotation.
    #[arg(long)]
    drop_incomplete: bool,
    #[arg(long)]
    synth_config: Option<PathBuf>,
    #[arg(long)]
    min_support: Option<usize>,
    #[arg(long)]
    similarity_threshold: Option<f64>,
    #[arg(long)]
    exclusive_precision_threshold: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    train_seed: Option<u64>,
    /// Run the full epoch budget and keep the last epoch's parameters.
    #[arg(long)]
    no_early_stopping: bool,
}

impl Overrides {
    fn into_config(self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(dir) = &self.out_dir {
            config.paths = numex_cli::StagePaths::under(dir);
        }
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        set!(config.paths.catalog, self.catalog);
        set!(config.paths.embeddings, self.embeddings);
        set!(config.paths.aliases, self.aliases);
        set!(config.paths.annotations, self.annotations);
        set!(config.paths.model, self.model);
        set!(config.paths.gold, self.gold);
        set!(config.paths.report, self.report);
        set!(config.paths.manifest, self.manifest);
        if let Some(regime) = &self.regime {
            config.regime = numex::annotation::Regime::from_str(regime)?;
        }
        if let Some(mode) = &self.mode {
            config.mode = numex::tagger::Mode::from_str(mode)?;
        }
        set!(config.seed, self.seed);
        set!(config.threads, self.threads);
        set!(config.train_fraction, self.train_fraction);
        set!(config.dev_fraction, self.dev_fraction);
        if self.drop_incomplete {
            config.drop_incomplete = true;
        }
        if self.synth_config.is_some() {
            config.synth_config = self.synth_config;
        }
        set!(config.alias.min_support, self.min_support);
        set!(config.alias.similarity_threshold, self.similarity_threshold);
        set!(
            config.alias.exclusive_precision_threshold,
            self.exclusive_precision_threshold
        );
        set!(config.train.learning_rate, self.learning_rate);
        set!(config.train.epochs, self.epochs);
        set!(config.train.batch_size, self.batch_size);
        set!(config.train.l2, self.l2);
        set!(config.train.clip_norm, self.clip_norm);
        set!(config.train.patience, self.patience);
        if self.train_seed.is_some() {
            config.train.seed = self.train_seed;
        }
        if self.no_early_stopping {
            config.train.early_stopping = false;
        }
        config.resolve_attributes()?;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic catalog, gold labels and embeddings.
    Synth {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Mine alias sets and exclusive flags from the training slice.
    Alias {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Generate BIO training annotations by distant supervision.
    Annotate {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train the CRF tagger on the annotation file.
    Train {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score the trained model on the held-out test slice.
    Eval {
        #[command(flatten)]
        overrides: Overrides,
        /// Earlier report to compute relative F1 against.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Run synth (when configured), alias, annotate, train and eval.
    Pipeline {
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Synth { overrides } => cmd_synth(&overrides.into_config()?)?,
        Command::Alias { overrides } => cmd_alias(&overrides.into_config()?)?,
        Command::Annotate { overrides } => cmd_annotate(&overrides.into_config()?)?,
        Command::Train { overrides } => cmd_train(&overrides.into_config()?)?,
        Command::Eval {
            overrides,
            baseline,
        } => {
            cmd_eval(&overrides.into_config()?, baseline.as_deref())?;
        }
        Command::Pipeline { overrides } => cmd_pipeline(&overrides.into_config()?)?,
    }
    Ok(())
}
