//! Run configuration shared by all pipeline stages.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use numex::aliasing::AliasConfig;
use numex::annotation::Regime;
use numex::corpus::ProductRecord;
use numex::evaluation::GoldMention;
use numex::tagger::{EncoderConfig, Mode, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::util::{derive_seed, file_digest, sha256_hex};

/// One attribute under extraction: its name and canonical unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub canonical_unit: String,
}

/// Input and output locations of the pipeline stages.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StagePaths {
    pub catalog: PathBuf,
    pub embeddings: PathBuf,
    pub aliases: PathBuf,
    pub annotations: PathBuf,
    pub model: PathBuf,
    pub gold: PathBuf,
    pub report: PathBuf,
    pub manifest: PathBuf,
}

impl Default for StagePaths {
    fn default() -> Self {
        StagePaths {
            catalog: "catalog.jsonl".into(),
            embeddings: "embeddings.txt".into(),
            aliases: "aliases.json".into(),
            annotations: "annotations.jsonl".into(),
            model: "model.json".into(),
            gold: "gold.jsonl".into(),
            report: "report.json".into(),
            manifest: "manifest.json".into(),
        }
    }
}

impl StagePaths {
    /// Re-roots every relative path under `dir`.
    pub fn under(dir: &Path) -> StagePaths {
        let base = StagePaths::default();
        StagePaths {
            catalog: dir.join(base.catalog),
            embeddings: dir.join(base.embeddings),
            aliases: dir.join(base.aliases),
            annotations: dir.join(base.annotations),
            model: dir.join(base.model),
            gold: dir.join(base.gold),
            report: dir.join(base.report),
            manifest: dir.join(base.manifest),
        }
    }
}

/// [`TrainConfig`] with the seed optional; a missing seed derives from the
/// run seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub clip_norm: f64,
    pub seed: Option<u64>,
    pub patience: usize,
    /// Snapshot the best dev-F1 epoch and stop when it stops improving.
    /// When false, training runs the full epoch budget and keeps the last
    /// parameters, the protocol used for the regime comparisons.
    pub early_stopping: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let base = TrainConfig::default();
        TrainSettings {
            learning_rate: base.learning_rate,
            epochs: base.epochs,
            batch_size: base.batch_size,
            l2: base.l2,
            clip_norm: base.clip_norm,
            seed: None,
            patience: base.patience,
            early_stopping: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: StagePaths,
    /// Attributes in priority order; filled from the synthetic-benchmark
    /// config when left empty and `synth_config` is set.
    pub attributes: Vec<AttributeDef>,
    pub alias: AliasConfig,
    pub train: TrainSettings,
    pub regime: Regime,
    pub mode: Mode,
    pub seed: u64,
    pub train_fraction: f64,
    /// Fraction of the train part carved off as the labelled dev set used
    /// for exclusive flags and early stopping.
    pub dev_fraction: f64,
    /// Drop products with any missing attribute value before annotation.
    pub drop_incomplete: bool,
    pub threads: usize,
    pub encoder: EncoderConfig,
    /// Synthetic-benchmark config consumed by the synth stage.
    pub synth_config: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: StagePaths::default(),
            attributes: Vec::new(),
            alias: AliasConfig::default(),
            train: TrainSettings::default(),
            regime: Regime::Auto,
            mode: Mode::Mamt,
            seed: 7,
            train_fraction: 0.8,
            dev_fraction: 0.1,
            drop_incomplete: false,
            threads: 1,
            encoder: EncoderConfig::default(),
            synth_config: None,
        }
    }
}

/// The experiment-defining fields, hashed into every document output.
/// Paths and thread counts are excluded: they locate files without
/// changing results.
#[derive(Serialize)]
struct SemanticView<'a> {
    attributes: &'a [AttributeDef],
    alias: &'a AliasConfig,
    train: TrainConfig,
    regime: Regime,
    mode: Mode,
    seed: u64,
    train_fraction: f64,
    dev_fraction: f64,
    drop_incomplete: bool,
    encoder: &'a EncoderConfig,
    early_stopping: bool,
    synth_digest: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let bytes =
            fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = serde_json::from_slice(&bytes)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.attributes.is_empty() {
            anyhow::bail!("config field `attributes` is empty and no synth_config supplies it");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            anyhow::bail!("config field `train_fraction` must lie in (0, 1)");
        }
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            anyhow::bail!("config field `dev_fraction` must lie in (0, 1)");
        }
        if self.threads == 0 {
            anyhow::bail!("config field `threads` must be positive");
        }
        self.alias
            .validate()
            .map_err(|e| anyhow::anyhow!("config field `alias`: {e}"))?;
        self.resolved_train_config()
            .validate()
            .map_err(|e| anyhow::anyhow!("config field `train`: {e}"))?;
        Ok(())
    }

    /// Fills the attribute list from the synth config when absent.
    pub fn resolve_attributes(&mut self) -> Result<()> {
        if !self.attributes.is_empty() {
            return Ok(());
        }
        let Some(synth_path) = &self.synth_config else {
            return Ok(());
        };
        let synth = load_synth_config(synth_path)?;
        self.attributes = synth
            .attributes
            .iter()
            .map(|a| AttributeDef {
                name: a.name.clone(),
                canonical_unit: a.canonical_unit.clone(),
            })
            .collect();
        Ok(())
    }

    pub fn resolved_train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            l2: self.train.l2,
            clip_norm: self.train.clip_norm,
            seed: self.train.seed.unwrap_or_else(|| derive_seed(self.seed, "train")),
            patience: self.train.patience,
        }
    }

    /// Hash of the experiment parameters (not file locations).
    pub fn semantic_hash(&self) -> Result<String> {
        let synth_digest = match &self.synth_config {
            Some(path) => Some(file_digest(path)?),
            None => None,
        };
        let view = SemanticView {
            attributes: &self.attributes,
            alias: &self.alias,
            train: self.resolved_train_config(),
            regime: self.regime,
            mode: self.mode,
            seed: self.seed,
            train_fraction: self.train_fraction,
            dev_fraction: self.dev_fraction,
            drop_incomplete: self.drop_incomplete,
            encoder: &self.encoder,
            early_stopping: self.train.early_stopping,
            synth_digest,
        };
        let json = serde_json::to_vec(&view).context("serializing config view")?;
        Ok(sha256_hex(&json))
    }

    pub fn attribute_names(&self) -> Vec<String> {
        self.attributes.iter().map(|a| a.name.clone()).collect()
    }
}

pub fn load_synth_config(path: &Path) -> Result<numex::synth::SynthConfig> {
    let bytes =
        fs::read(path).with_context(|| format!("reading synth config {}", path.display()))?;
    let config = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing synth config {}", path.display()))?;
    Ok(config)
}

/// Catalog slices every stage derives identically from the run seed.
pub struct Splits {
    pub train_core: Vec<ProductRecord>,
    pub dev: Vec<ProductRecord>,
    pub test: Vec<ProductRecord>,
}

pub fn compute_splits(config: &RunConfig, records: &[ProductRecord]) -> Result<Splits> {
    let (train_part, test) = numex::corpus::split_train_test(
        records,
        derive_seed(config.seed, "split"),
        config.train_fraction,
    )?;
    let (train_core, dev) = numex::corpus::split_train_test(
        &train_part,
        derive_seed(config.seed, "dev"),
        1.0 - config.dev_fraction,
    )?;
    Ok(Splits {
        train_core,
        dev,
        test,
    })
}

/// Keeps gold mentions whose product belongs to the given slice.
pub fn gold_for(gold: &[GoldMention], records: &[ProductRecord]) -> Vec<GoldMention> {
    let ids: std::collections::BTreeSet<&str> =
        records.iter().map(|r| r.id.as_str()).collect();
    gold.iter()
        .filter(|g| ids.contains(g.product_id.as_str()))
        .cloned()
        .collect()
}
