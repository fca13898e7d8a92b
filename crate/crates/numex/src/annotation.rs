//! Distant-supervision BIO annotation under three matching regimes.
//!
//! A product's structured values are matched against its tokenized text.
//! Each attribute is a separate task with its own B/I/O sequence plus an
//! activation flag: a task whose structured value is missing stays all-O
//! and inactive, so downstream training can mask it instead of learning
//! from mislabelled O tokens. Exclusive attributes are the exception:
//! their unit is unambiguous, so every (number, alias) adjacency is tagged
//! irrespective of the structured value and the task is always active.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, AttributeSpec, ProductRecord, TokenizedText};
use crate::error::{Error, Result};
use crate::numeric::{is_numeric_token, numeric_equal};

/// Per-token tag in a single task's sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BioTag {
    B,
    I,
    O,
}

/// True iff the sequence has no leading I and no O→I transition.
pub fn is_well_formed_bio(tags: &[BioTag]) -> bool {
    let mut prev = BioTag::O;
    for (i, &tag) in tags.iter().enumerate() {
        if tag == BioTag::I && (i == 0 || prev == BioTag::O) {
            return false;
        }
        prev = tag;
    }
    true
}

/// Maximal B I* spans as (start, end) token ranges, end exclusive.
pub fn bio_spans(tags: &[BioTag]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < tags.len() {
        if tags[i] == BioTag::B {
            let start = i;
            i += 1;
            while i < tags.len() && tags[i] == BioTag::I {
                i += 1;
            }
            spans.push((start, i));
        } else {
            i += 1;
        }
    }
    spans
}

/// One product's annotation: a tag sequence and an activation flag per
/// attribute task.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MultiTaskAnnotation {
    pub product_id: String,
    pub tokens: TokenizedText,
    pub per_task: BTreeMap<String, Vec<BioTag>>,
    pub active: BTreeMap<String, bool>,
}

impl MultiTaskAnnotation {
    pub fn active_tasks(&self) -> impl Iterator<Item = &str> {
        self.active
            .iter()
            .filter(|(_, &a)| a)
            .map(|(name, _)| name.as_str())
    }

    pub fn has_active_task(&self) -> bool {
        self.active.values().any(|&a| a)
    }

    pub fn b_tag_count(&self) -> usize {
        self.per_task
            .values()
            .flat_map(|tags| tags.iter())
            .filter(|&&t| t == BioTag::B)
            .count()
    }
}

/// Which matching rule generates the training annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Token-wise value matching with no unit context.
    Exact,
    /// Value followed by the canonical unit.
    Canonical,
    /// Value followed by any combined alias; exclusive attributes tagged
    /// value-free.
    Auto,
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Regime> {
        match s {
            "exact" => Ok(Regime::Exact),
            "canonical" => Ok(Regime::Canonical),
            "auto" => Ok(Regime::Auto),
            other => Err(Error::InvalidConfig(format!(
                "unknown regime `{other}` (expected exact|canonical|auto)"
            ))),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Exact => "exact",
            Regime::Canonical => "canonical",
            Regime::Auto => "auto",
        })
    }
}

/// Tags every token numerically equal to the attribute's value as a
/// single-token B mention. A task is active iff its value is present.
pub fn annotate_exact(
    product: &ProductRecord,
    attributes: &[AttributeSpec],
) -> MultiTaskAnnotation {
    let tokens = tokenize(&product.text);
    let mut per_task = BTreeMap::new();
    let mut active = BTreeMap::new();
    for spec in attributes {
        let mut tags = vec![BioTag::O; tokens.len()];
        let is_active = match product.value(&spec.name) {
            Some(value) => {
                for (i, token) in tokens.tokens.iter().enumerate() {
                    if numeric_equal(&token.surface, value) {
                        tags[i] = BioTag::B;
                    }
                }
                true
            }
            None => false,
        };
        per_task.insert(spec.name.clone(), tags);
        active.insert(spec.name.clone(), is_active);
    }
    MultiTaskAnnotation {
        product_id: product.id.clone(),
        tokens,
        per_task,
        active,
    }
}

fn alias_set(spec: &AttributeSpec, regime: Regime) -> BTreeSet<&str> {
    match regime {
        Regime::Canonical => BTreeSet::from([spec.canonical_unit.as_str()]),
        Regime::Auto => spec.alias_combined.iter().map(String::as_str).collect(),
        Regime::Exact => BTreeSet::new(),
    }
}

/// Tags (value, alias) adjacencies as B,I spans. Non-exclusive tasks
/// require a present structured value and numeric equality with the B
/// token; exclusive tasks (auto regime only) tag every (number, alias)
/// adjacency and stay active regardless of the structured value.
pub fn annotate_with_aliases(
    product: &ProductRecord,
    attributes: &[AttributeSpec],
    regime: Regime,
) -> MultiTaskAnnotation {
    assert!(
        regime != Regime::Exact,
        "annotate_with_aliases requires the canonical or auto regime"
    );
    let tokens = tokenize(&product.text);
    let mut per_task = BTreeMap::new();
    let mut active = BTreeMap::new();
    for spec in attributes {
        let aliases = alias_set(spec, regime);
        let mut tags = vec![BioTag::O; tokens.len()];
        let exclusive = spec.exclusive && regime == Regime::Auto;
        let value = product.value(&spec.name);
        let is_active = if exclusive {
            tag_adjacencies(&tokens, &aliases, &mut tags, None);
            true
        } else {
            match value {
                Some(v) => {
                    tag_adjacencies(&tokens, &aliases, &mut tags, Some(v));
                    true
                }
                None => false,
            }
        };
        per_task.insert(spec.name.clone(), tags);
        active.insert(spec.name.clone(), is_active);
    }
    MultiTaskAnnotation {
        product_id: product.id.clone(),
        tokens,
        per_task,
        active,
    }
}

fn tag_adjacencies(
    tokens: &TokenizedText,
    aliases: &BTreeSet<&str>,
    tags: &mut [BioTag],
    required_value: Option<&str>,
) {
    if tokens.len() < 2 {
        return;
    }
    for t in 0..tokens.len() - 1 {
        let number = &tokens.tokens[t].surface;
        let unit = tokens.tokens[t + 1].surface.to_lowercase();
        if !aliases.contains(unit.as_str()) {
            continue;
        }
        let number_ok = match required_value {
            Some(value) => numeric_equal(number, value),
            None => is_numeric_token(number),
        };
        if number_ok {
            tags[t] = BioTag::B;
            tags[t + 1] = BioTag::I;
        }
    }
}

/// Annotates under any regime.
pub fn annotate(
    product: &ProductRecord,
    attributes: &[AttributeSpec],
    regime: Regime,
) -> MultiTaskAnnotation {
    match regime {
        Regime::Exact => annotate_exact(product, attributes),
        _ => annotate_with_aliases(product, attributes, regime),
    }
}

/// Reverts spans that collide with an earlier attribute's claim, where
/// "earlier" is position in `priority` (the run's attribute input order).
/// The result has at most one attribute claiming any token, as required
/// for flattening into the single-task tag space.
pub fn resolve_conflicts(
    annotation: &MultiTaskAnnotation,
    priority: &[String],
) -> MultiTaskAnnotation {
    let mut resolved = annotation.clone();
    let mut claimed = vec![false; annotation.tokens.len()];
    for name in priority {
        let Some(tags) = resolved.per_task.get_mut(name) else {
            continue;
        };
        for (start, end) in bio_spans(&tags.clone()) {
            if (start..end).any(|i| claimed[i]) {
                for tag in &mut tags[start..end] {
                    *tag = BioTag::O;
                }
            } else {
                for flag in &mut claimed[start..end] {
                    *flag = true;
                }
            }
        }
    }
    resolved
}

/// The flattened tag space over K attributes: O at index 0, then one B/I
/// pair per attribute, 2K+1 tags in total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MastTagSet {
    pub attributes: Vec<String>,
}

impl MastTagSet {
    pub fn new(attributes: Vec<String>) -> MastTagSet {
        MastTagSet { attributes }
    }

    pub const O: usize = 0;

    pub fn tag_count(&self) -> usize {
        2 * self.attributes.len() + 1
    }

    pub fn b_tag(&self, attr_index: usize) -> usize {
        1 + 2 * attr_index
    }

    pub fn i_tag(&self, attr_index: usize) -> usize {
        2 + 2 * attr_index
    }

    /// Attribute index and B-ness for a non-O tag.
    pub fn split(&self, tag: usize) -> Option<(usize, bool)> {
        if tag == Self::O || tag >= self.tag_count() {
            None
        } else {
            Some(((tag - 1) / 2, tag % 2 == 1))
        }
    }

    pub fn label(&self, tag: usize) -> String {
        match self.split(tag) {
            None => "O".to_string(),
            Some((k, is_b)) => format!(
                "{}_{}",
                if is_b { "B" } else { "I" },
                self.attributes[k]
            ),
        }
    }
}

/// Flattens per-task sequences into the 2K+1 tag space. Conflicts must
/// already be resolved; a token claimed twice is an invariant breach.
pub fn flatten_to_mast(
    annotation: &MultiTaskAnnotation,
    tag_set: &MastTagSet,
) -> Result<Vec<usize>> {
    let mut flat = vec![MastTagSet::O; annotation.tokens.len()];
    for (k, name) in tag_set.attributes.iter().enumerate() {
        let Some(tags) = annotation.per_task.get(name) else {
            continue;
        };
        for (i, &tag) in tags.iter().enumerate() {
            let mast = match tag {
                BioTag::O => continue,
                BioTag::B => tag_set.b_tag(k),
                BioTag::I => tag_set.i_tag(k),
            };
            if flat[i] != MastTagSet::O {
                return Err(Error::Invariant(format!(
                    "token {i} of product {} claimed by both {} and {}",
                    annotation.product_id,
                    tag_set.label(flat[i]),
                    tag_set.label(mast),
                )));
            }
            flat[i] = mast;
        }
    }
    Ok(flat)
}

/// True when every attribute in `attributes` has a structured value;
/// used by the switch that drops incomplete products before single-task
/// training.
pub fn has_complete_values(product: &ProductRecord, attributes: &[AttributeSpec]) -> bool {
    attributes
        .iter()
        .all(|spec| product.value(&spec.name).is_some())
}

/// Writes annotations as JSON Lines, one product per line.
pub fn write_annotations(
    path: impl AsRef<Path>,
    annotations: &[MultiTaskAnnotation],
) -> Result<()> {
    let path_str = path.as_ref().display().to_string();
    let mut out = Vec::new();
    for annotation in annotations {
        serde_json::to_writer(&mut out, annotation)
            .map_err(|e| Error::parse(&path_str, 0, e.to_string()))?;
        out.push(b'\n');
    }
    let mut file = File::create(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    file.write_all(&out).map_err(|e| Error::io(&path_str, e))
}

/// Reads annotations written by [`write_annotations`].
pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<MultiTaskAnnotation>> {
    let path_str = path.as_ref().display().to_string();
    let file = File::open(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    let mut annotations = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path_str, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let annotation: MultiTaskAnnotation = serde_json::from_str(&line)
            .map_err(|e| Error::parse(&path_str, idx + 1, e.to_string()))?;
        annotations.push(annotation);
    }
    Ok(annotations)
}
