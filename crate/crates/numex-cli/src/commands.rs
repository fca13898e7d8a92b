//! The pipeline stages behind the CLI subcommands.
//!
//! Each stage reads its inputs from the configured paths, writes its
//! outputs atomically, and embeds (or records in the manifest) the
//! semantic config hash so runs remain traceable and comparable.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use numex::aliasing::{build_attribute_specs, AliasConfig};
use numex::annotation::{annotate, has_complete_values, MultiTaskAnnotation, Regime};
use numex::corpus::{load_catalog, tokenize, AttributeSpec, ProductRecord};
use numex::embeddings::EmbeddingTable;
use numex::evaluation::{evaluate, EvalReport, Predictions};
use numex::synth::generate;
use numex::tagger::{load_model, save_model, train, CrfModel, DevSet, ModelSetup, TrainConfig};

use crate::config::{compute_splits, gold_for, load_synth_config, RunConfig};
use crate::util::{file_digest, require_input, sha256_hex, write_atomic, write_atomic_with};

/// Persisted alias sets: one entry per attribute plus the thresholds that
/// produced them.
#[derive(Debug, Serialize, Deserialize)]
pub struct AliasFile {
    pub config_hash: String,
    pub thresholds: AliasConfig,
    pub attributes: BTreeMap<String, AliasEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AliasEntry {
    pub canonical_unit: String,
    pub alias_dw: Vec<String>,
    pub alias_bp_filter: Vec<String>,
    pub alias_combined: Vec<String>,
    pub exclusive: bool,
}

/// Persisted evaluation output.
#[derive(Debug, Serialize, Deserialize)]
pub struct SavedReport {
    pub config_hash: String,
    pub gold_digest: String,
    pub regime: String,
    pub mode: String,
    pub alias_fingerprint: String,
    pub report: EvalReport,
}

/// Generates the synthetic catalog, gold labels and companion embeddings.
pub fn cmd_synth(config: &RunConfig) -> Result<()> {
    let synth_path = config
        .synth_config
        .as_deref()
        .context("synth requires `synth_config` to be set")?;
    let synth = load_synth_config(synth_path)?;
    let out = generate(&synth).context("generating synthetic corpus")?;
    write_atomic_with(&config.paths.catalog, |p| {
        numex::corpus::write_catalog(p, &out.catalog)
    })?;
    write_atomic_with(&config.paths.gold, |p| {
        numex::evaluation::write_gold(p, &out.gold)
    })?;
    write_atomic_with(&config.paths.embeddings, |p| out.embeddings.write(p))?;
    log::info!(
        "synth: {} products, {} gold records, {} vectors",
        out.catalog.len(),
        out.gold.len(),
        out.embeddings.len()
    );
    Ok(())
}

/// Mines alias sets on the training slice and computes exclusive flags on
/// the dev slice.
pub fn cmd_alias(config: &RunConfig) -> Result<()> {
    require_input(&config.paths.catalog, "synth")?;
    require_input(&config.paths.embeddings, "synth")?;
    require_input(&config.paths.gold, "synth")?;
    let names = config.attribute_names();
    let records = load_catalog(&config.paths.catalog, &names)?;
    let splits = compute_splits(config, &records)?;
    let table = EmbeddingTable::load(&config.paths.embeddings)?;
    let gold = numex::evaluation::read_gold(&config.paths.gold)?;
    let dev_gold = gold_for(&gold, &splits.dev);

    let pairs: Vec<(String, String)> = config
        .attributes
        .iter()
        .map(|a| (a.name.clone(), a.canonical_unit.to_lowercase()))
        .collect();
    let specs = build_attribute_specs(
        &splits.train_core,
        &pairs,
        &table,
        &config.alias,
        &splits.dev,
        &dev_gold,
    )?;

    let file = AliasFile {
        config_hash: config.semantic_hash()?,
        thresholds: config.alias,
        attributes: specs
            .iter()
            .map(|s| {
                (
                    s.name.clone(),
                    AliasEntry {
                        canonical_unit: s.canonical_unit.clone(),
                        alias_dw: s.alias_dw.clone(),
                        alias_bp_filter: s.alias_bp_filter.clone(),
                        alias_combined: s.alias_combined.clone(),
                        exclusive: s.exclusive,
                    },
                )
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file)?;
    write_atomic(&config.paths.aliases, json.as_bytes())?;
    for spec in &specs {
        log::info!(
            "alias {}: combined {:?} exclusive {}",
            spec.name,
            spec.alias_combined,
            spec.exclusive
        );
    }
    Ok(())
}

/// The attribute specs a stage should annotate or fingerprint with:
/// mined aliases in the auto regime, canonical-only otherwise.
pub fn load_attribute_specs(config: &RunConfig) -> Result<Vec<AttributeSpec>> {
    match config.regime {
        Regime::Auto => {
            require_input(&config.paths.aliases, "alias")?;
            let bytes = std::fs::read(&config.paths.aliases)?;
            let file: AliasFile = serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing {}", config.paths.aliases.display()))?;
            config
                .attributes
                .iter()
                .map(|a| {
                    let entry = file.attributes.get(&a.name).with_context(|| {
                        format!("alias file lacks attribute `{}`; rerun the alias stage", a.name)
                    })?;
                    Ok(AttributeSpec {
                        name: a.name.clone(),
                        canonical_unit: entry.canonical_unit.clone(),
                        alias_dw: entry.alias_dw.clone(),
                        alias_bp_filter: entry.alias_bp_filter.clone(),
                        alias_combined: entry.alias_combined.clone(),
                        exclusive: entry.exclusive,
                    })
                })
                .collect()
        }
        _ => Ok(config
            .attributes
            .iter()
            .map(|a| AttributeSpec::canonical_only(&a.name, &a.canonical_unit))
            .collect()),
    }
}

/// Stable identifier of the alias sets a model was trained against.
pub fn alias_fingerprint(specs: &[AttributeSpec]) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(specs)?))
}

fn annotate_records(
    records: &[ProductRecord],
    specs: &[AttributeSpec],
    regime: Regime,
    threads: usize,
) -> Result<Vec<MultiTaskAnnotation>> {
    if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .context("building thread pool")?;
        use rayon::prelude::*;
        Ok(pool.install(|| {
            records
                .par_iter()
                .map(|r| annotate(r, specs, regime))
                .collect()
        }))
    } else {
        Ok(records.iter().map(|r| annotate(r, specs, regime)).collect())
    }
}

/// Generates the distant-supervision training annotations.
pub fn cmd_annotate(config: &RunConfig) -> Result<()> {
    require_input(&config.paths.catalog, "synth")?;
    let names = config.attribute_names();
    let records = load_catalog(&config.paths.catalog, &names)?;
    let splits = compute_splits(config, &records)?;
    let specs = load_attribute_specs(config)?;

    let mut train_records = splits.train_core;
    if config.drop_incomplete {
        train_records.retain(|r| has_complete_values(r, &specs));
    }
    let annotations =
        annotate_records(&train_records, &specs, config.regime, config.threads)?;
    write_atomic_with(&config.paths.annotations, |p| {
        numex::annotation::write_annotations(p, &annotations)
    })?;
    let b_tags: usize = annotations.iter().map(|a| a.b_tag_count()).sum();
    log::info!(
        "annotate[{}]: {} products, {} B tags",
        config.regime,
        annotations.len(),
        b_tags
    );
    Ok(())
}

/// Trains the tagger on the annotation file, early-stopping on the dev
/// slice, and saves the model document.
pub fn cmd_train(config: &RunConfig) -> Result<()> {
    require_input(&config.paths.annotations, "annotate")?;
    require_input(&config.paths.embeddings, "synth")?;
    require_input(&config.paths.catalog, "synth")?;
    require_input(&config.paths.gold, "synth")?;
    let annotations = numex::annotation::read_annotations(&config.paths.annotations)?;
    let names = config.attribute_names();
    let records = load_catalog(&config.paths.catalog, &names)?;
    let splits = compute_splits(config, &records)?;
    let gold = numex::evaluation::read_gold(&config.paths.gold)?;
    let dev_gold = gold_for(&gold, &splits.dev);
    let table = Arc::new(EmbeddingTable::load(&config.paths.embeddings)?);
    let specs = load_attribute_specs(config)?;

    let setup = ModelSetup {
        mode: config.mode,
        attributes: names,
        encoder: config.encoder,
        table,
        alias_fingerprint: alias_fingerprint(&specs)?,
    };
    let train_config: TrainConfig = config.resolved_train_config();
    let dev = if config.train.early_stopping {
        DevSet {
            records: &splits.dev,
            gold: &dev_gold,
        }
    } else {
        DevSet::empty()
    };
    let (model, report) = train(&annotations, dev, &setup, &train_config)?;
    log::info!(
        "train[{} {}]: {} epochs, best epoch {:?}, best dev F1 {:?}",
        config.regime,
        config.mode,
        report.epochs_run,
        report.best_epoch,
        report.best_dev_f1
    );
    let hash = config.semantic_hash()?;
    write_atomic_with(&config.paths.model, |p| {
        save_model(&model, p, Some(&hash))
    })?;
    Ok(())
}

/// Decodes every record, in parallel when configured.
pub fn decode_records(
    records: &[ProductRecord],
    model: &CrfModel,
    threads: usize,
) -> Result<Predictions> {
    let decoded: Vec<(String, BTreeMap<String, Vec<String>>)> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .context("building thread pool")?;
        use rayon::prelude::*;
        pool.install(|| {
            records
                .par_iter()
                .map(|r| (r.id.clone(), model.decode(&tokenize(&r.text))))
                .collect()
        })
    } else {
        records
            .iter()
            .map(|r| (r.id.clone(), model.decode(&tokenize(&r.text))))
            .collect()
    };
    let mut predictions = Predictions::default();
    for (id, by_attr) in decoded {
        for (attr, values) in by_attr {
            predictions.insert(&id, &attr, values);
        }
    }
    Ok(predictions)
}

/// Scores the model on the held-out test slice and writes the report.
pub fn cmd_eval(config: &RunConfig, baseline: Option<&Path>) -> Result<SavedReport> {
    require_input(&config.paths.model, "train")?;
    require_input(&config.paths.embeddings, "synth")?;
    require_input(&config.paths.catalog, "synth")?;
    require_input(&config.paths.gold, "synth")?;
    let names = config.attribute_names();
    let records = load_catalog(&config.paths.catalog, &names)?;
    let splits = compute_splits(config, &records)?;
    let gold = numex::evaluation::read_gold(&config.paths.gold)?;
    let test_gold = gold_for(&gold, &splits.test);
    let gold_digest = file_digest(&config.paths.gold)?;

    let table = Arc::new(EmbeddingTable::load(&config.paths.embeddings)?);
    let model = load_model(&config.paths.model, table)?;
    if model.attributes != names {
        anyhow::bail!(
            "model was trained for attributes {:?}, config names {:?}",
            model.attributes,
            names
        );
    }
    let predictions = decode_records(&splits.test, &model, config.threads)?;

    let baseline_report = match baseline {
        Some(path) => {
            let bytes = std::fs::read(path)
                .with_context(|| format!("reading baseline report {}", path.display()))?;
            let saved: SavedReport = serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing baseline report {}", path.display()))?;
            if saved.gold_digest != gold_digest {
                anyhow::bail!(
                    "baseline report was produced from a different gold file \
                     (digest {} vs {gold_digest})",
                    saved.gold_digest
                );
            }
            Some(saved)
        }
        None => None,
    };
    let report = evaluate(
        &test_gold,
        &predictions,
        baseline_report.as_ref().map(|b| &b.report),
    )?;
    let saved = SavedReport {
        config_hash: config.semantic_hash()?,
        gold_digest,
        regime: config.regime.to_string(),
        mode: config.mode.to_string(),
        alias_fingerprint: model.alias_fingerprint.clone(),
        report,
    };
    let json = serde_json::to_string_pretty(&saved)?;
    write_atomic(&config.paths.report, json.as_bytes())?;
    println!("{}", saved.report.to_table());
    Ok(saved)
}

/// Per-run manifest: config hash, derived seeds, thresholds and output
/// digests.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub stage_seeds: BTreeMap<String, u64>,
    pub alias_thresholds: AliasConfig,
    pub train: TrainConfig,
    pub regime: String,
    pub mode: String,
    pub outputs: BTreeMap<String, String>,
}

/// Runs every stage in order and writes the manifest.
pub fn cmd_pipeline(config: &RunConfig) -> Result<()> {
    if config.synth_config.is_some() {
        cmd_synth(config)?;
    }
    cmd_alias(config)?;
    cmd_annotate(config)?;
    cmd_train(config)?;
    cmd_eval(config, None)?;

    let mut outputs = BTreeMap::new();
    for path in [
        &config.paths.catalog,
        &config.paths.gold,
        &config.paths.embeddings,
        &config.paths.aliases,
        &config.paths.annotations,
        &config.paths.model,
        &config.paths.report,
    ] {
        if path.exists() {
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            outputs.insert(name, file_digest(path)?);
        }
    }
    let manifest = Manifest {
        config_hash: config.semantic_hash()?,
        seed: config.seed,
        stage_seeds: ["split", "dev", "train"]
            .iter()
            .map(|s| (s.to_string(), crate::util::derive_seed(config.seed, s)))
            .collect(),
        alias_thresholds: config.alias,
        train: config.resolved_train_config(),
        regime: config.regime.to_string(),
        mode: config.mode.to_string(),
        outputs,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    write_atomic(&config.paths.manifest, json.as_bytes())?;
    Ok(())
}
