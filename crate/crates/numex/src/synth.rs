//! Seeded synthetic catalog generator with exact gold labels.
//!
//! The generator plants the phenomena the pipeline must survive: diverse
//! surface forms for each unit, structured values deleted while the text
//! mention remains, attribute pairs sharing a unit, converted-unit
//! mentions whose numeric value differs from the structured value, and
//! distractor numbers. Gold labels are derived from the generator's own
//! text placements, never from the (possibly deleted) structured values,
//! which is what makes missing-value damage measurable.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ProductRecord;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::evaluation::GoldMention;

/// One way an attribute mention is written in text. `factor` converts the
/// structured (canonical-unit) value into the value printed next to this
/// form; forms with factor != 1 are unreachable by value matching.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceForm {
    pub unit: String,
    pub weight: f64,
    #[serde(default = "default_factor")]
    pub factor: f64,
}

fn default_factor() -> f64 {
    1.0
}

/// Range and formatting of an attribute's sampled values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: f64,
    pub max: f64,
    /// Decimal places in the formatted value.
    pub decimals: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthAttribute {
    pub name: String,
    pub canonical_unit: String,
    pub value_range: ValueRange,
    pub surface_forms: Vec<SurfaceForm>,
    /// Probability that the attribute is mentioned in the text.
    pub mention_rate: f64,
    /// Probability that a mentioned attribute's structured value is
    /// deleted, planting a missing-value annotation gap.
    pub missing_rate: f64,
    /// Sentence templates with `{v}` and `{u}` placeholders.
    pub templates: Vec<String>,
    /// Optional pool of discrete values; overrides uniform range sampling.
    #[serde(default)]
    pub value_pool: Vec<f64>,
    /// Template words characteristic of this attribute; the companion
    /// table gives them vectors so context is visible to an encoder, the
    /// way a real pretrained table would.
    #[serde(default)]
    pub context_words: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub product_count: usize,
    pub attributes: Vec<SynthAttribute>,
    /// Attribute pairs expected to share a unit (documentation of intent;
    /// the shared unit itself comes from the attribute definitions).
    pub confusion_pairs: Vec<(String, String)>,
    /// Probability of appending each distractor phrase slot.
    pub distractor_rate: f64,
    /// Embedding dimension of the companion table.
    pub embedding_dimension: usize,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.product_count == 0 {
            return Err(Error::InvalidConfig("product_count must be positive".into()));
        }
        if self.attributes.is_empty() {
            return Err(Error::InvalidConfig("no attributes defined".into()));
        }
        if !(0.0..=1.0).contains(&self.distractor_rate) {
            return Err(Error::InvalidConfig("distractor_rate must lie in [0,1]".into()));
        }
        for attr in &self.attributes {
            if attr.surface_forms.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "attribute {} has an empty surface-form pool",
                    attr.name
                )));
            }
            if attr.templates.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "attribute {} has no templates",
                    attr.name
                )));
            }
            for rate in [attr.mention_rate, attr.missing_rate] {
                if !(0.0..=1.0).contains(&rate) {
                    return Err(Error::InvalidConfig(format!(
                        "attribute {} has a rate outside [0,1]",
                        attr.name
                    )));
                }
            }
            if attr.value_range.min <= 0.0 || attr.value_range.max < attr.value_range.min {
                return Err(Error::InvalidConfig(format!(
                    "attribute {} has an invalid value range",
                    attr.name
                )));
            }
        }
        Ok(())
    }

    pub fn attribute_names(&self) -> Vec<String> {
        self.attributes.iter().map(|a| a.name.clone()).collect()
    }
}

fn format_value(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

fn sample_value(attr: &SynthAttribute, rng: &mut ChaCha8Rng) -> String {
    if !attr.value_pool.is_empty() {
        let v = attr.value_pool[rng.gen_range(0..attr.value_pool.len())];
        format_value(v, attr.value_range.decimals)
    } else {
        let v = rng.gen_range(attr.value_range.min..attr.value_range.max);
        format_value(v, attr.value_range.decimals)
    }
}

fn sample_form<'a>(attr: &'a SynthAttribute, rng: &mut ChaCha8Rng) -> &'a SurfaceForm {
    let total: f64 = attr.surface_forms.iter().map(|f| f.weight).sum();
    let mut pick = rng.gen_range(0.0..total);
    for form in &attr.surface_forms {
        if pick < form.weight {
            return form;
        }
        pick -= form.weight;
    }
    attr.surface_forms.last().expect("non-empty pool")
}

/// Distractor phrase pools. The kg-denominated packaging phrase spoils the
/// alias-extraction precision of the weight attribute (so it cannot be
/// flagged exclusive); the hour/color counts and chassis dimensions collide
/// with plausible attribute values to poison bare value matching the way
/// out-of-context numbers do in real product text.
const DISTRACTOR_HOURS: &[&str] = &["8", "10", "12", "15", "16"];
const DISTRACTOR_COLORS: &[&str] = &["4", "8", "16", "32"];
const DISTRACTOR_GEN: &[&str] = &["7", "10", "11", "12", "13"];
const DISTRACTOR_BOX_KG: &[&str] = &["2", "3", "5"];
const DISTRACTOR_DEGREE: &[&str] = &["180", "360"];
const DIMS_WIDTH: &[&str] = &["11.6", "12.3", "13.3", "14.0", "15.6", "17.3"];
const DIMS_DEPTH: &[&str] = &["16", "20", "24", "32"];
const DIMS_HEIGHT: &[&str] = &["1", "2"];

const OPENERS: &[&str] = &[
    "The high performance laptop everyone talks about",
    "A dependable workhorse for daily use",
    "Built for creators on the move",
    "The compact companion for busy commutes",
    "An office allrounder with a premium finish",
    "Engineered for smooth everyday computing",
];

fn distractor_phrases(
    rng: &mut ChaCha8Rng,
    rate: f64,
    display_text_value: Option<&str>,
) -> Vec<String> {
    let mut phrases = Vec::new();
    let mut maybe = |rng: &mut ChaCha8Rng, text: String| {
        if rng.gen_bool(rate) {
            phrases.push(text);
        }
    };
    let hours = DISTRACTOR_HOURS[rng.gen_range(0..DISTRACTOR_HOURS.len())];
    maybe(rng, format!("enjoy up to {hours} hours of battery life"));
    let colors = DISTRACTOR_COLORS[rng.gen_range(0..DISTRACTOR_COLORS.len())];
    maybe(rng, format!("available in {colors} colors"));
    let gen = DISTRACTOR_GEN[rng.gen_range(0..DISTRACTOR_GEN.len())];
    maybe(rng, format!("powered by a {gen}th gen processor"));
    let box_kg = DISTRACTOR_BOX_KG[rng.gen_range(0..DISTRACTOR_BOX_KG.len())];
    maybe(rng, format!("ships in a sturdy {box_kg} kg box"));
    let degree = DISTRACTOR_DEGREE[rng.gen_range(0..DISTRACTOR_DEGREE.len())];
    maybe(rng, format!("with a {degree} degree hinge"));
    // Chassis dimensions: the width often repeats the screen size, the
    // rest collide with other attributes' number ranges.
    let width = match display_text_value {
        Some(v) if rng.gen_bool(0.9) => v.to_string(),
        _ => DIMS_WIDTH[rng.gen_range(0..DIMS_WIDTH.len())].to_string(),
    };
    let depth = DIMS_DEPTH[rng.gen_range(0..DIMS_DEPTH.len())];
    let height = DIMS_HEIGHT[rng.gen_range(0..DIMS_HEIGHT.len())];
    maybe(rng, format!("measures {width} x {depth} x {height}"));
    phrases
}

/// Deterministic companion embeddings. Each distinct canonical unit
/// anchors one basis axis; a surface form is its unit's anchor tilted into
/// a shared residual axis, so cosine(form, own unit) lands in (0.65, 0.85)
/// while cosine(form, any other unit) is exactly zero. Distractor words
/// get axes of their own so similarity filtering has something to reject.
fn companion_embeddings(config: &SynthConfig, rng: &mut ChaCha8Rng) -> EmbeddingTable {
    let dim = config.embedding_dimension;
    let mut table = EmbeddingTable::new(dim);
    let mut unit_axis: BTreeMap<String, usize> = BTreeMap::new();
    for attr in &config.attributes {
        let next = unit_axis.len();
        unit_axis.entry(attr.canonical_unit.clone()).or_insert(next);
    }
    let residual_axis = unit_axis.len();
    assert!(
        residual_axis < dim,
        "embedding dimension too small for unit axes"
    );
    for (unit, &axis) in &unit_axis {
        let mut anchor = vec![0.0; dim];
        anchor[axis] = 1.0;
        table.insert(unit, anchor);
    }
    for attr in &config.attributes {
        let axis = unit_axis[&attr.canonical_unit];
        for form in &attr.surface_forms {
            if table.contains(&form.unit) {
                continue;
            }
            let tilt: f64 = 0.65 + rng.gen_range(0.0..0.2);
            let ortho = (1.0 - tilt * tilt).sqrt();
            let mut v = vec![0.0; dim];
            v[axis] = tilt;
            v[residual_axis] = ortho;
            table.insert(&form.unit, v);
        }
    }
    // Words frequently mined as candidates but alien to every unit.
    let mut next_axis = residual_axis + 1;
    for noise in ["hours", "colors", "degree", "th", "box", "minutes"] {
        if next_axis < dim {
            let mut v = vec![0.0; dim];
            v[next_axis] = 1.0;
            table.insert(noise, v);
            next_axis += 1;
        }
    }
    // One context axis per attribute; its template words cluster there.
    for attr in &config.attributes {
        if attr.context_words.is_empty() {
            continue;
        }
        let axis = next_axis;
        next_axis += 1;
        assert!(axis < dim, "embedding dimension too small for context axes");
        for word in &attr.context_words {
            if table.contains(word) {
                continue;
            }
            let main: f64 = 0.9 + rng.gen_range(0.0..0.08);
            let jitter = (1.0 - main * main).sqrt();
            let mut v = vec![0.0; dim];
            v[axis] = main;
            v[residual_axis] = jitter;
            table.insert(word, v);
        }
    }
    table
}

/// The generator's output: catalog records, gold mention labels for every
/// (product, attribute) pair, and the companion embedding table.
pub struct SynthOutput {
    pub catalog: Vec<ProductRecord>,
    pub gold: Vec<GoldMention>,
    pub embeddings: EmbeddingTable,
}

/// Generates the corpus. Deterministic for a fixed config.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut embed_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let embeddings = companion_embeddings(config, &mut embed_rng);

    let mut catalog = Vec::with_capacity(config.product_count);
    let mut gold = Vec::new();
    for index in 0..config.product_count {
        let id = format!("p{index:05}");
        let mut phrases: Vec<String> = Vec::new();
        phrases.push(OPENERS[rng.gen_range(0..OPENERS.len())].to_string());
        let mut values = BTreeMap::new();
        let mut display_text_value: Option<String> = None;

        for attr in &config.attributes {
            let mentioned = rng.gen_bool(attr.mention_rate);
            if !mentioned {
                gold.push(GoldMention {
                    product_id: id.clone(),
                    attribute: attr.name.clone(),
                    value: None,
                    present: false,
                });
                continue;
            }
            let canonical_value = sample_value(attr, &mut rng);
            let form = sample_form(attr, &mut rng);
            let text_value = if form.factor == 1.0 {
                canonical_value.clone()
            } else {
                let converted = canonical_value.parse::<f64>().unwrap() * form.factor;
                format_value(converted, attr.value_range.decimals)
            };
            let template = &attr.templates[rng.gen_range(0..attr.templates.len())];
            phrases.push(
                template
                    .replace("{v}", &text_value)
                    .replace("{u}", &form.unit),
            );
            let missing = rng.gen_bool(attr.missing_rate);
            if !missing {
                values.insert(attr.name.clone(), canonical_value);
            }
            if attr.name == "display" {
                display_text_value = Some(text_value.clone());
            }
            gold.push(GoldMention {
                product_id: id.clone(),
                attribute: attr.name.clone(),
                value: Some(text_value),
                present: true,
            });
        }

        phrases.extend(distractor_phrases(
            &mut rng,
            config.distractor_rate,
            display_text_value.as_deref(),
        ));
        // Shuffle everything after the opener so attribute order carries no
        // positional signal.
        phrases[1..].shuffle(&mut rng);
        let text = phrases.join(". ") + ".";
        catalog.push(ProductRecord { id, text, values });
    }
    Ok(SynthOutput {
        catalog,
        gold,
        embeddings,
    })
}

/// The repository's canonical desk-scale benchmark: five laptop-style
/// attributes with a shared-unit pair (ram and hard_disk both in gb), a
/// half-missing weight attribute with pound-denominated mentions, and an
/// exclusive-unit refresh rate.
pub fn default_benchmark() -> SynthConfig {
    let attr = |name: &str,
                unit: &str,
                range: (f64, f64, usize),
                pool: &[f64],
                forms: &[(&str, f64, f64)],
                mention: f64,
                missing: f64,
                templates: &[&str],
                context: &[&str]| SynthAttribute {
        name: name.to_string(),
        canonical_unit: unit.to_string(),
        value_range: ValueRange {
            min: range.0,
            max: range.1,
            decimals: range.2,
        },
        surface_forms: forms
            .iter()
            .map(|(u, w, f)| SurfaceForm {
                unit: u.to_string(),
                weight: *w,
                factor: *f,
            })
            .collect(),
        mention_rate: mention,
        missing_rate: missing,
        templates: templates.iter().map(|t| t.to_string()).collect(),
        value_pool: pool.to_vec(),
        context_words: context.iter().map(|c| c.to_string()).collect(),
    };
    SynthConfig {
        seed: 7,
        product_count: 2000,
        attributes: vec![
            attr(
                "display",
                "inches",
                (11.0, 17.5, 1),
                &[11.6, 12.3, 13.3, 14.0, 15.6, 17.3],
                &[("inches", 0.9, 1.0), ("inch", 0.05, 1.0), ("in", 0.05, 1.0)],
                0.75,
                0.1,
                &[
                    "features a {v} {u} touchscreen display",
                    "a stunning {v} {u} screen",
                    "crisp {v} {u} panel up front",
                ],
                &["display", "screen", "panel", "touchscreen", "crisp", "stunning"],
            ),
            attr(
                "ram",
                "gb",
                (4.0, 64.0, 0),
                &[4.0, 8.0, 16.0, 32.0],
                &[
                    ("gb", 0.85, 1.0),
                    ("gigabyte", 0.075, 1.0),
                    ("gigabytes", 0.075, 1.0),
                ],
                0.8,
                0.15,
                &[
                    "{v} {u} of memory keep things snappy",
                    "comes with {v} {u} memory",
                    "multitask freely on {v} {u} of memory",
                ],
                &["memory", "multitask", "snappy"],
            ),
            attr(
                "hard_disk",
                "gb",
                (16.0, 1024.0, 0),
                &[16.0, 32.0, 64.0, 128.0, 256.0, 512.0],
                &[
                    ("gb", 0.85, 1.0),
                    ("gigabyte", 0.075, 1.0),
                    ("gigabytes", 0.075, 1.0),
                ],
                0.8,
                0.15,
                &[
                    "{v} {u} of storage for your files",
                    "a spacious {v} {u} drive",
                    "store everything on {v} {u} of storage",
                ],
                &["storage", "drive", "spacious", "files", "store"],
            ),
            attr(
                "weight",
                "kg",
                (0.9, 2.6, 1),
                &[],
                &[
                    ("kg", 0.62, 1.0),
                    ("kilograms", 0.05, 1.0),
                    ("kgs", 0.03, 1.0),
                    ("lbs", 0.15, 2.2),
                    ("pounds", 0.15, 2.2),
                ],
                0.7,
                0.5,
                &[
                    "weighs just {v} {u}",
                    "lightweight at {v} {u}",
                    "tips the scale at {v} {u}",
                ],
                &["weighs", "lightweight", "scale", "tips"],
            ),
            attr(
                "refresh_rate",
                "hz",
                (60.0, 240.0, 0),
                &[60.0, 75.0, 90.0, 120.0, 144.0, 180.0, 240.0],
                &[("hz", 0.9, 1.0), ("hertz", 0.05, 1.0), ("herz", 0.05, 1.0)],
                0.6,
                0.4,
                &[
                    "silky {v} {u} refresh rate",
                    "a buttery smooth {v} {u} response",
                    "refresh rate of {v} {u}",
                ],
                &["refresh", "rate", "silky", "smooth", "buttery", "response"],
            ),
        ],
        confusion_pairs: vec![("ram".to_string(), "hard_disk".to_string())],
        distractor_rate: 0.5,
        embedding_dimension: 16,
    }
}
