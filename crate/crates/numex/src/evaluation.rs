//! Scoring of extracted values against gold mention labels.
//!
//! A prediction earns credit only when exactly the correct value is
//! extracted; extracting extra values is incorrect. A wrong or multi-valued
//! extraction against a present gold mention therefore counts as both a
//! false positive and a false negative.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::normalize_value;

/// The audited label for one (product, attribute) pair: whether the
/// attribute is mentioned in the text at all, and the mentioned value.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GoldMention {
    pub product_id: String,
    pub attribute: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    pub present: bool,
}

/// How one scored pair contributes to the counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contribution {
    TruePositive,
    FalseNegative,
    FalsePositiveAndNegative,
    FalsePositive,
    TrueNegative,
}

/// Scores one (product, attribute) pair. `predicted` is deduplicated after
/// decimal normalization before comparison.
pub fn score_pair(gold: &GoldMention, predicted: &[String]) -> Contribution {
    let distinct: BTreeSet<String> = predicted.iter().map(|v| normalize_value(v)).collect();
    if gold.present {
        let gold_value = gold
            .value
            .as_deref()
            .map(normalize_value)
            .unwrap_or_default();
        if distinct.is_empty() {
            Contribution::FalseNegative
        } else if distinct.len() == 1 && distinct.contains(&gold_value) {
            Contribution::TruePositive
        } else {
            Contribution::FalsePositiveAndNegative
        }
    } else if distinct.is_empty() {
        Contribution::TrueNegative
    } else {
        Contribution::FalsePositive
    }
}

/// Raw counts plus derived metrics for one attribute (or an aggregate).
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    fn derive(tp: usize, fp: usize, fn_: usize) -> Metrics {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// Per-attribute and aggregate scores, with an optional view relative to a
/// baseline report (each F1 divided by the baseline F1, times 100).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub per_attribute: BTreeMap<String, Metrics>,
    pub micro: Metrics,
    pub macro_avg: Metrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative: Option<RelativeView>,
}

/// F1 ratios against a baseline, expressed on a 100-point scale.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RelativeView {
    pub per_attribute: BTreeMap<String, Option<f64>>,
    pub micro_f1: Option<f64>,
    pub macro_f1: Option<f64>,
}

fn relative_f1(f1: f64, baseline: f64) -> Option<f64> {
    if baseline == 0.0 {
        // 0-vs-0 is parity by convention; improving on a zero baseline has
        // no finite ratio and is reported as absent.
        if f1 == 0.0 {
            Some(100.0)
        } else {
            None
        }
    } else {
        Some(f1 / baseline * 100.0)
    }
}

/// Extraction outputs keyed by (product id, attribute). Pairs absent from
/// the map count as empty predictions.
#[derive(Debug, Clone, Default)]
pub struct Predictions {
    map: BTreeMap<(String, String), Vec<String>>,
}

impl Predictions {
    pub fn insert(&mut self, product_id: &str, attribute: &str, values: Vec<String>) {
        self.map
            .entry((product_id.to_string(), attribute.to_string()))
            .or_default()
            .extend(values);
    }

    pub fn get(&self, product_id: &str, attribute: &str) -> &[String] {
        self.map
            .get(&(product_id.to_string(), attribute.to_string()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Aggregates [`score_pair`] over every gold pair. Duplicate
/// (product, attribute) gold keys are an error.
pub fn evaluate(
    gold: &[GoldMention],
    predictions: &Predictions,
    baseline: Option<&EvalReport>,
) -> Result<EvalReport> {
    let mut seen = BTreeSet::new();
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for mention in gold {
        if !seen.insert((mention.product_id.clone(), mention.attribute.clone())) {
            return Err(Error::DuplicateGold {
                product_id: mention.product_id.clone(),
                attribute: mention.attribute.clone(),
            });
        }
        let predicted = predictions.get(&mention.product_id, &mention.attribute);
        let entry = counts.entry(mention.attribute.clone()).or_default();
        match score_pair(mention, predicted) {
            Contribution::TruePositive => entry.0 += 1,
            Contribution::FalsePositive => entry.1 += 1,
            Contribution::FalseNegative => entry.2 += 1,
            Contribution::FalsePositiveAndNegative => {
                entry.1 += 1;
                entry.2 += 1;
            }
            Contribution::TrueNegative => {}
        }
    }

    let per_attribute: BTreeMap<String, Metrics> = counts
        .iter()
        .map(|(attr, &(tp, fp, fn_))| (attr.clone(), Metrics::derive(tp, fp, fn_)))
        .collect();

    let (tp, fp, fn_) = counts
        .values()
        .fold((0, 0, 0), |acc, &(tp, fp, fn_)| {
            (acc.0 + tp, acc.1 + fp, acc.2 + fn_)
        });
    let micro = Metrics::derive(tp, fp, fn_);

    let n = per_attribute.len().max(1) as f64;
    let mut macro_avg = Metrics {
        tp,
        fp,
        fn_,
        precision: per_attribute.values().map(|m| m.precision).sum::<f64>() / n,
        recall: per_attribute.values().map(|m| m.recall).sum::<f64>() / n,
        f1: per_attribute.values().map(|m| m.f1).sum::<f64>() / n,
    };
    if per_attribute.is_empty() {
        macro_avg = Metrics::default();
    }

    let relative = baseline.map(|base| RelativeView {
        per_attribute: per_attribute
            .iter()
            .map(|(attr, m)| {
                let base_f1 = base.per_attribute.get(attr).map_or(0.0, |b| b.f1);
                (attr.clone(), relative_f1(m.f1, base_f1))
            })
            .collect(),
        micro_f1: relative_f1(micro.f1, base.micro.f1),
        macro_f1: relative_f1(macro_avg.f1, base.macro_avg.f1),
    });

    Ok(EvalReport {
        per_attribute,
        micro,
        macro_avg,
        relative,
    })
}

impl EvalReport {
    /// Aligned plain-text table of the report.
    pub fn to_table(&self) -> String {
        let mut width = "attribute".len();
        for attr in self.per_attribute.keys() {
            width = width.max(attr.len());
        }
        let mut out = String::new();
        out.push_str(&format!(
            "{:<width$}  {:>6} {:>6} {:>6}  {:>9} {:>9} {:>9}",
            "attribute", "tp", "fp", "fn", "precision", "recall", "f1"
        ));
        if self.relative.is_some() {
            out.push_str(&format!("  {:>8}", "rel_f1"));
        }
        out.push('\n');
        let mut row = |name: &str, m: &Metrics, rel: Option<Option<f64>>| {
            out.push_str(&format!(
                "{:<width$}  {:>6} {:>6} {:>6}  {:>9.4} {:>9.4} {:>9.4}",
                name, m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1
            ));
            if let Some(rel) = rel {
                match rel {
                    Some(v) => out.push_str(&format!("  {v:>8.1}")),
                    None => out.push_str(&format!("  {:>8}", "-")),
                }
            }
            out.push('\n');
        };
        for (attr, m) in &self.per_attribute {
            let rel = self
                .relative
                .as_ref()
                .map(|r| r.per_attribute.get(attr).copied().flatten());
            row(attr, m, rel);
        }
        row(
            "micro",
            &self.micro,
            self.relative.as_ref().map(|r| r.micro_f1),
        );
        row(
            "macro",
            &self.macro_avg,
            self.relative.as_ref().map(|r| r.macro_f1),
        );
        out
    }
}

/// Reads a JSON Lines gold file, one [`GoldMention`] per line.
pub fn read_gold(path: impl AsRef<Path>) -> Result<Vec<GoldMention>> {
    let path_str = path.as_ref().display().to_string();
    let file = File::open(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    let mut gold = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path_str, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mention: GoldMention = serde_json::from_str(&line)
            .map_err(|e| Error::parse(&path_str, idx + 1, e.to_string()))?;
        if mention.present && mention.value.as_deref().unwrap_or("").is_empty() {
            return Err(Error::parse(
                &path_str,
                idx + 1,
                "present gold mention with empty value",
            ));
        }
        gold.push(mention);
    }
    Ok(gold)
}

/// Writes a gold file in the format accepted by [`read_gold`].
pub fn write_gold(path: impl AsRef<Path>, gold: &[GoldMention]) -> Result<()> {
    let path_str = path.as_ref().display().to_string();
    let mut out = Vec::new();
    for mention in gold {
        serde_json::to_writer(&mut out, mention)
            .map_err(|e| Error::parse(&path_str, 0, e.to_string()))?;
        out.push(b'\n');
    }
    let mut file = File::create(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    file.write_all(&out).map_err(|e| Error::io(&path_str, e))
}
