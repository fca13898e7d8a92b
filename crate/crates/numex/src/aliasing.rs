//! Automatic mining of per-attribute unit aliases from the corpus.
//!
//! Two complementary candidate sources: value-anchored mining scans for an
//! attribute's known value followed by a letter run (catching surface forms
//! like "in", "inch", "inches"), and value-free mining collects the letter
//! run after any numeric mention (catching converted units like "lbs" for a
//! kg-valued attribute). The second source is denoised by cosine similarity
//! with the canonical unit. Attributes whose aliases are used by no other
//! attribute get an exclusive flag, enabling value-free training annotation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, AttributeSpec, ProductRecord};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::evaluation::GoldMention;
use crate::numeric::{is_numeric_token, numeric_equal};

/// Distinct-product counts for mined candidate tokens.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AliasCandidateCounts {
    pub counts: BTreeMap<String, usize>,
}

impl AliasCandidateCounts {
    /// Candidates with count >= `min_support`, ordered by descending count
    /// with lexicographic tie-break.
    pub fn ranked(&self, min_support: usize) -> Vec<String> {
        let mut kept: Vec<(&String, &usize)> = self
            .counts
            .iter()
            .filter(|(_, &c)| c >= min_support)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        kept.into_iter().map(|(k, _)| k.clone()).collect()
    }
}

/// Thresholds for mining, filtering and the exclusive-flag decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AliasConfig {
    /// Minimum number of distinct products a candidate must appear in.
    pub min_support: usize,
    /// Strict lower bound on cosine(candidate, canonical unit).
    pub similarity_threshold: f64,
    /// Minimum alias-extraction precision on the dev set for an attribute
    /// to be flagged exclusive.
    pub exclusive_precision_threshold: f64,
}

impl Default for AliasConfig {
    fn default() -> Self {
        AliasConfig {
            min_support: 2,
            similarity_threshold: 0.5,
            exclusive_precision_threshold: 0.9,
        }
    }
}

impl AliasConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_support == 0 {
            return Err(Error::InvalidConfig("min_support must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&self.similarity_threshold) {
            return Err(Error::InvalidConfig(
                "similarity_threshold must lie in [-1, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.exclusive_precision_threshold) {
            return Err(Error::InvalidConfig(
                "exclusive_precision_threshold must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

fn trailing_letter_run(matched: &str) -> String {
    let run: String = matched
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect::<Vec<char>>()
        .into_iter()
        .rev()
        .collect();
    run.to_lowercase()
}

/// Mines value-anchored alias candidates for one attribute.
///
/// For each product carrying a value, the text is scanned for the exact
/// value string (at a word boundary) followed by optional spaces/hyphens
/// and a maximal ASCII letter run. Products where the scan matches more
/// than once are skipped entirely to avoid collisions, so each retained
/// product contributes exactly one count.
pub fn mine_alias_dw(products: &[ProductRecord], attribute: &str) -> AliasCandidateCounts {
    let mut counts = BTreeMap::new();
    let mut patterns: HashMap<String, Regex> = HashMap::new();
    for product in products {
        let Some(value) = product.value(attribute) else {
            continue;
        };
        if value.trim().is_empty() {
            continue;
        }
        let re = patterns.entry(value.to_string()).or_insert_with(|| {
            Regex::new(&format!(r"\b{}[ -]*[A-Za-z]+", regex::escape(value)))
                .expect("escaped value pattern is valid")
        });
        let matches: Vec<&str> = re.find_iter(&product.text).map(|m| m.as_str()).collect();
        if matches.len() != 1 {
            continue;
        }
        let candidate = trailing_letter_run(matches[0]);
        *counts.entry(candidate).or_insert(0) += 1;
    }
    AliasCandidateCounts { counts }
}

/// Mines value-free alias candidates shared across attributes: the letter
/// run after any numeric mention (digits/dots ending in a digit, then
/// optional spaces/hyphens). Counts are distinct-product counts.
pub fn mine_alias_bp(products: &[ProductRecord]) -> AliasCandidateCounts {
    let re = Regex::new(r"[0-9.]*[0-9][ -]*[A-Za-z]+").expect("static pattern is valid");
    let mut counts = BTreeMap::new();
    for product in products {
        let mut seen = BTreeSet::new();
        for m in re.find_iter(&product.text) {
            seen.insert(trailing_letter_run(m.as_str()));
        }
        for candidate in seen {
            *counts.entry(candidate).or_insert(0) += 1;
        }
    }
    AliasCandidateCounts { counts }
}

/// Keeps candidates that meet support and whose cosine similarity to the
/// canonical unit strictly exceeds the threshold; out-of-vocabulary
/// candidates never pass. The canonical unit itself is prepended when the
/// survivors don't already contain it.
pub fn filter_alias_bp(
    candidates: &AliasCandidateCounts,
    attribute: &str,
    canonical_unit: &str,
    table: &EmbeddingTable,
    config: &AliasConfig,
) -> Result<Vec<String>> {
    if !table.contains(canonical_unit) {
        return Err(Error::CanonicalUnitMissing {
            attribute: attribute.to_string(),
            unit: canonical_unit.to_string(),
        });
    }
    let mut kept: Vec<(&String, &usize)> = candidates
        .counts
        .iter()
        .filter(|(token, &count)| {
            count >= config.min_support
                && table
                    .cosine(token, canonical_unit)
                    .is_some_and(|s| s > config.similarity_threshold)
        })
        .collect();
    kept.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let mut aliases: Vec<String> = kept.into_iter().map(|(k, _)| k.clone()).collect();
    let canonical = canonical_unit.to_lowercase();
    if !aliases.contains(&canonical) {
        aliases.insert(0, canonical);
    }
    Ok(aliases)
}

/// Concatenates the two alias lists, first occurrence winning on
/// duplicates. Errors when the result would be empty.
pub fn combine_aliases(alias_dw: &[String], alias_bp_filter: &[String]) -> Result<Vec<String>> {
    let mut combined = Vec::new();
    let mut seen = BTreeSet::new();
    for alias in alias_dw.iter().chain(alias_bp_filter) {
        if seen.insert(alias.clone()) {
            combined.push(alias.clone());
        }
    }
    if combined.is_empty() {
        return Err(Error::NoUsableAlias("combine_aliases".into()));
    }
    Ok(combined)
}

/// Alias-only extraction precision on a labelled dev set: every
/// (numeric token, alias token) adjacency is predicted as a mention of the
/// attribute, and a prediction is correct when its value matches the
/// product's gold mention for that attribute. Returns true when precision
/// meets the threshold; zero predictions count as failure.
pub fn compute_exclusive_flag(
    dev_records: &[ProductRecord],
    dev_gold: &[GoldMention],
    attribute: &str,
    aliases: &[String],
    config: &AliasConfig,
) -> bool {
    let gold_by_product: BTreeMap<&str, &GoldMention> = dev_gold
        .iter()
        .filter(|g| g.attribute == attribute)
        .map(|g| (g.product_id.as_str(), g))
        .collect();
    let alias_set: BTreeSet<&str> = aliases.iter().map(String::as_str).collect();
    let mut predicted = 0usize;
    let mut correct = 0usize;
    for record in dev_records {
        let tokens = tokenize(&record.text);
        for pair in tokens.tokens.windows(2) {
            let (number, unit) = (&pair[0], &pair[1]);
            if !is_numeric_token(&number.surface) {
                continue;
            }
            if !alias_set.contains(unit.surface.to_lowercase().as_str()) {
                continue;
            }
            predicted += 1;
            if let Some(gold) = gold_by_product.get(record.id.as_str()) {
                if gold.present
                    && gold
                        .value
                        .as_deref()
                        .is_some_and(|v| numeric_equal(&number.surface, v))
                {
                    correct += 1;
                }
            }
        }
    }
    if predicted == 0 {
        return false;
    }
    let precision = correct as f64 / predicted as f64;
    precision >= config.exclusive_precision_threshold
}

/// Runs the full alias-creation flow for a set of attributes over the
/// training corpus, producing one [`AttributeSpec`] per attribute.
pub fn build_attribute_specs(
    train: &[ProductRecord],
    attributes: &[(String, String)],
    table: &EmbeddingTable,
    config: &AliasConfig,
    dev_records: &[ProductRecord],
    dev_gold: &[GoldMention],
) -> Result<Vec<AttributeSpec>> {
    config.validate()?;
    let bp_counts = mine_alias_bp(train);
    let mut specs = Vec::with_capacity(attributes.len());
    for (name, canonical_unit) in attributes {
        let dw_counts = mine_alias_dw(train, name);
        let alias_dw = dw_counts.ranked(config.min_support);
        let alias_bp_filter = filter_alias_bp(&bp_counts, name, canonical_unit, table, config)?;
        let alias_combined = combine_aliases(&alias_dw, &alias_bp_filter)?;
        let exclusive =
            compute_exclusive_flag(dev_records, dev_gold, name, &alias_combined, config);
        specs.push(AttributeSpec {
            name: name.clone(),
            canonical_unit: canonical_unit.to_lowercase(),
            alias_dw,
            alias_bp_filter,
            alias_combined,
            exclusive,
        });
    }
    Ok(specs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap as Map;

    fn product(id: &str, text: &str, values: &[(&str, &str)]) -> ProductRecord {
        ProductRecord {
            id: id.to_string(),
            text: text.to_string(),
            values: values
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    #[test]
    fn dw_single_match() {
        let products = vec![product(
            "p1",
            "Features 12.3 inches display",
            &[("display", "12.3")],
        )];
        let counts = mine_alias_dw(&products, "display");
        assert_eq!(counts.counts, Map::from([("inches".to_string(), 1)]));
    }

    #[test]
    fn dw_multiple_matches_skip_product() {
        let products = vec![product(
            "p1",
            "8 GB RAM and 8 GHz? No — 8 gb only",
            &[("ram", "8")],
        )];
        let counts = mine_alias_dw(&products, "ram");
        assert!(counts.counts.is_empty());
    }

    #[test]
    fn dw_counts_distinct_products() {
        let products = vec![
            product("p1", "with 16 gb memory", &[("ram", "16")]),
            product("p2", "a 16gb stick", &[("ram", "16")]),
            product("p3", "now 16-gb class", &[("ram", "16")]),
        ];
        let counts = mine_alias_dw(&products, "ram");
        assert_eq!(counts.counts, Map::from([("gb".to_string(), 3)]));
    }

    #[test]
    fn dw_requires_word_boundary() {
        // "8" inside "18" must not anchor a match.
        let products = vec![product("p1", "an 18 gb drive", &[("ram", "8")])];
        let counts = mine_alias_dw(&products, "ram");
        assert!(counts.counts.is_empty());
    }

    #[test]
    fn dw_missing_value_skipped() {
        let products = vec![product("p1", "with 16 gb memory", &[])];
        let counts = mine_alias_dw(&products, "ram");
        assert!(counts.counts.is_empty());
    }

    #[test]
    fn bp_two_mentions() {
        let products = vec![product("p1", "weighs 1.2 kg and 3 lbs", &[])];
        let counts = mine_alias_bp(&products);
        assert_eq!(
            counts.counts,
            Map::from([("kg".to_string(), 1), ("lbs".to_string(), 1)])
        );
    }

    #[test]
    fn bp_no_digits() {
        let products = vec![product("p1", "no digits here", &[])];
        assert!(mine_alias_bp(&products).counts.is_empty());
    }

    #[test]
    fn bp_distinct_product_counts() {
        let products = vec![
            product("p1", "1 kg and 2 kg and 3 kg", &[]),
            product("p2", "4 kg", &[]),
        ];
        let counts = mine_alias_bp(&products);
        assert_eq!(counts.counts, Map::from([("kg".to_string(), 2)]));
    }

    fn weight_table() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(2);
        t.insert("kg", vec![1.0, 0.0]);
        t.insert("pounds", vec![0.8, 0.6]);
        t.insert("lbs", vec![0.7, 0.714142842854285]);
        t.insert("inches", vec![0.2, 0.9797958971132712]);
        t
    }

    #[test]
    fn filter_selects_similar_units() {
        let candidates = AliasCandidateCounts {
            counts: Map::from([
                ("pounds".to_string(), 9),
                ("lbs".to_string(), 5),
                ("inches".to_string(), 7),
            ]),
        };
        let config = AliasConfig::default();
        let aliases =
            filter_alias_bp(&candidates, "weight", "kg", &weight_table(), &config).unwrap();
        assert_eq!(aliases, vec!["kg", "pounds", "lbs"]);
    }

    #[test]
    fn filter_empty_candidates_keep_anchor() {
        let config = AliasConfig::default();
        let aliases = filter_alias_bp(
            &AliasCandidateCounts::default(),
            "weight",
            "kg",
            &weight_table(),
            &config,
        )
        .unwrap();
        assert_eq!(aliases, vec!["kg"]);
    }

    #[test]
    fn filter_threshold_is_strict() {
        let candidates = AliasCandidateCounts {
            counts: Map::from([("pounds".to_string(), 9)]),
        };
        let config = AliasConfig {
            similarity_threshold: 1.0,
            ..AliasConfig::default()
        };
        let aliases =
            filter_alias_bp(&candidates, "weight", "kg", &weight_table(), &config).unwrap();
        assert_eq!(aliases, vec!["kg"]);
    }

    #[test]
    fn filter_requires_canonical_in_table() {
        let config = AliasConfig::default();
        let err = filter_alias_bp(
            &AliasCandidateCounts::default(),
            "battery",
            "mah",
            &weight_table(),
            &config,
        )
        .unwrap_err();
        match err {
            Error::CanonicalUnitMissing { attribute, .. } => assert_eq!(attribute, "battery"),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn combine_dedups_first_occurrence() {
        let dw = vec!["gb".to_string(), "gigabyte".to_string()];
        let bp = vec!["gb".to_string(), "tb".to_string()];
        assert_eq!(
            combine_aliases(&dw, &bp).unwrap(),
            vec!["gb", "gigabyte", "tb"]
        );
    }

    #[test]
    fn combine_keeps_dw_order_first() {
        let dw = vec!["hertz".to_string(), "hz".to_string()];
        let bp = vec!["hz".to_string()];
        assert_eq!(combine_aliases(&dw, &bp).unwrap(), vec!["hertz", "hz"]);
    }

    #[test]
    fn combine_one_sided() {
        let bp = vec!["kg".to_string(), "lbs".to_string()];
        assert_eq!(combine_aliases(&[], &bp).unwrap(), vec!["kg", "lbs"]);
    }

    #[test]
    fn combine_both_empty_errors() {
        assert!(combine_aliases(&[], &[]).is_err());
    }

    fn gold(product_id: &str, attribute: &str, value: Option<&str>) -> GoldMention {
        GoldMention {
            product_id: product_id.to_string(),
            attribute: attribute.to_string(),
            value: value.map(str::to_string),
            present: value.is_some(),
        }
    }

    #[test]
    fn exclusive_clean_unit() {
        let records = vec![
            product("p1", "a 3000 mah battery", &[]),
            product("p2", "big 4000 mah cell", &[]),
        ];
        let golds = vec![
            gold("p1", "battery_power", Some("3000")),
            gold("p2", "battery_power", Some("4000")),
        ];
        let config = AliasConfig::default();
        assert!(compute_exclusive_flag(
            &records,
            &golds,
            "battery_power",
            &["mah".to_string()],
            &config,
        ));
    }

    #[test]
    fn exclusive_shared_unit_fails() {
        let records = vec![
            product("p1", "16 gb ram and 512 gb storage", &[]),
            product("p2", "8 gb ram and 256 gb storage", &[]),
        ];
        let golds = vec![gold("p1", "ram", Some("16")), gold("p2", "ram", Some("8"))];
        let config = AliasConfig::default();
        // Half of the (number, gb) adjacencies belong to storage: precision 0.5.
        assert!(!compute_exclusive_flag(
            &records,
            &golds,
            "ram",
            &["gb".to_string()],
            &config,
        ));
    }

    #[test]
    fn exclusive_zero_predictions_is_false() {
        let records = vec![product("p1", "nothing numeric", &[])];
        let config = AliasConfig::default();
        assert!(!compute_exclusive_flag(
            &records,
            &[],
            "ram",
            &["gb".to_string()],
            &config,
        ));
    }

    #[test]
    fn mined_candidates_are_lowercase_letters() {
        let products = vec![
            product("p1", "a 12.3 Inches panel", &[("display", "12.3")]),
            product("p2", "about 5 MP camera", &[]),
        ];
        let dw = mine_alias_dw(&products, "display");
        let bp = mine_alias_bp(&products);
        for token in dw.counts.keys().chain(bp.counts.keys()) {
            assert!(token.chars().all(|c| c.is_ascii_lowercase()), "{token}");
        }
    }
}
