//! Catalog ingestion, tokenization and deterministic splitting.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One product: an opaque id, free text, and a partial map of attribute
/// name to raw value string. A missing attribute is absent from the map,
/// never an empty string.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProductRecord {
    pub id: String,
    pub text: String,
    pub values: BTreeMap<String, String>,
}

impl ProductRecord {
    pub fn value(&self, attribute: &str) -> Option<&str> {
        self.values.get(attribute).map(String::as_str)
    }
}

/// An attribute together with its mined alias sets.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AttributeSpec {
    pub name: String,
    pub canonical_unit: String,
    #[serde(default)]
    pub alias_dw: Vec<String>,
    #[serde(default)]
    pub alias_bp_filter: Vec<String>,
    pub alias_combined: Vec<String>,
    #[serde(default)]
    pub exclusive: bool,
}

impl AttributeSpec {
    /// Minimal spec whose only alias is the canonical unit.
    pub fn canonical_only(name: &str, canonical_unit: &str) -> AttributeSpec {
        AttributeSpec {
            name: name.to_string(),
            canonical_unit: canonical_unit.to_lowercase(),
            alias_dw: Vec::new(),
            alias_bp_filter: Vec::new(),
            alias_combined: vec![canonical_unit.to_lowercase()],
            exclusive: false,
        }
    }
}

/// A token with character offsets into the original text.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Token {
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

/// Tokenized text; offsets are character (not byte) positions.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct TokenizedText {
    pub tokens: Vec<Token>,
}

impl TokenizedText {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum CharClass {
    Digit,
    Letter,
    Punct,
}

fn classify(c: char) -> CharClass {
    if c.is_ascii_digit() {
        CharClass::Digit
    } else if c.is_alphanumeric() {
        // Non-ASCII digits land here too; they never form decimal values.
        CharClass::Letter
    } else {
        CharClass::Punct
    }
}

/// Splits text on whitespace, then at digit/letter boundaries and at
/// punctuation (each punctuation character is its own token). A single dot
/// between digits stays inside the numeric token, so "1.2" survives as one
/// token while a sentence-final dot splits off.
pub fn tokenize(text: &str) -> TokenizedText {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        match classify(c) {
            CharClass::Punct => {
                i += 1;
            }
            CharClass::Letter => {
                while i < chars.len()
                    && !chars[i].is_whitespace()
                    && classify(chars[i]) == CharClass::Letter
                {
                    i += 1;
                }
            }
            CharClass::Digit => {
                let mut seen_dot = false;
                while i < chars.len() {
                    let d = chars[i];
                    if d.is_ascii_digit() {
                        i += 1;
                    } else if d == '.'
                        && !seen_dot
                        && i + 1 < chars.len()
                        && chars[i + 1].is_ascii_digit()
                    {
                        seen_dot = true;
                        i += 1;
                    } else {
                        break;
                    }
                }
            }
        }
        tokens.push(Token {
            surface: chars[start..i].iter().collect(),
            start,
            end: i,
        });
    }
    TokenizedText { tokens }
}

fn parse_catalog_line(
    path: &str,
    line_no: usize,
    line: &str,
    attributes: &[String],
) -> Result<ProductRecord> {
    let record: ProductRecord = serde_json::from_str(line)
        .map_err(|e| Error::parse(path, line_no, format!("malformed product line: {e}")))?;
    if record.id.is_empty() {
        return Err(Error::parse(path, line_no, "empty product id"));
    }
    for key in record.values.keys() {
        if !attributes.iter().any(|a| a == key) {
            return Err(Error::UnknownAttribute {
                key: key.clone(),
                path: path.to_string(),
                line: line_no,
            });
        }
    }
    Ok(record)
}

/// Reads a JSON Lines catalog: one product per line with fields `id`,
/// `text` and `values`. Keys in `values` must belong to `attributes`.
pub fn load_catalog(path: impl AsRef<Path>, attributes: &[String]) -> Result<Vec<ProductRecord>> {
    let path_str = path.as_ref().display().to_string();
    let file = File::open(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path_str, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_catalog_line(&path_str, idx + 1, &line, attributes)?);
    }
    Ok(records)
}

/// Writes a catalog in the same JSON Lines format accepted by
/// [`load_catalog`].
pub fn write_catalog(path: impl AsRef<Path>, records: &[ProductRecord]) -> Result<()> {
    let path_str = path.as_ref().display().to_string();
    let mut out = Vec::new();
    for record in records {
        serde_json::to_writer(&mut out, record)
            .map_err(|e| Error::parse(&path_str, 0, e.to_string()))?;
        out.push(b'\n');
    }
    let mut file = File::create(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    file.write_all(&out).map_err(|e| Error::io(&path_str, e))
}

/// Deterministic shuffle-split. The train side gets
/// `round(n * train_fraction)` records (clamped so neither side exceeds the
/// input); original file order is preserved within each side.
pub fn split_train_test(
    records: &[ProductRecord],
    seed: u64,
    train_fraction: f64,
) -> Result<(Vec<ProductRecord>, Vec<ProductRecord>)> {
    if records.is_empty() {
        return Err(Error::EmptyInput("split_train_test on empty catalog".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n = records.len();
    let n_train = ((n as f64 * train_fraction).round() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let mut in_train = vec![false; n];
    for &i in &indices[..n_train] {
        in_train[i] = true;
    }
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    for (i, record) in records.iter().enumerate() {
        if in_train[i] {
            train.push(record.clone());
        } else {
            test.push(record.clone());
        }
    }
    Ok((train, test))
}
