//! Word-vector loading and cosine similarity for alias filtering.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// An immutable table of word vectors with a fixed dimension. Lookup is
/// case-insensitive: keys are stored lowercased.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> EmbeddingTable {
        EmbeddingTable {
            dimension,
            entries: BTreeMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) {
        debug_assert_eq!(vector.len(), self.dimension);
        self.entries.insert(token.to_lowercase(), vector);
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(&token.to_lowercase()).map(Vec::as_slice)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains_key(&token.to_lowercase())
    }

    /// Cosine similarity of two tokens' vectors. `None` when either token
    /// is out of vocabulary or either vector has zero norm; absence always
    /// fails an alias-filter threshold.
    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let va = self.vector(a)?;
        let vb = self.vector(b)?;
        let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
        let na: f64 = va.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return None;
        }
        Some(dot / (na * nb))
    }

    /// Loads a space-separated text table: `token v1 v2 … vD`, one token per
    /// line. A first line consisting of exactly two integer fields is
    /// treated as a `count dim` header and skipped. The dimension is fixed
    /// by the first data line.
    pub fn load(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
        let path_str = path.as_ref().display().to_string();
        let file = File::open(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
        let reader = BufReader::new(file);

        let mut dimension: Option<usize> = None;
        let mut entries = BTreeMap::new();
        let mut first_data_line = true;
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::io(&path_str, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if first_data_line
                && fields.len() == 2
                && fields.iter().all(|f| f.parse::<u64>().is_ok())
            {
                first_data_line = false;
                continue;
            }
            first_data_line = false;
            if fields.len() < 2 {
                return Err(Error::parse(
                    &path_str,
                    line_no,
                    "expected a token followed by at least one component",
                ));
            }
            let token = fields[0].to_lowercase();
            let mut vector = Vec::with_capacity(fields.len() - 1);
            for f in &fields[1..] {
                let v: f64 = f.parse().map_err(|_| {
                    Error::parse(&path_str, line_no, format!("non-numeric component `{f}`"))
                })?;
                if !v.is_finite() {
                    return Err(Error::parse(
                        &path_str,
                        line_no,
                        format!("non-finite component `{f}`"),
                    ));
                }
                vector.push(v);
            }
            match dimension {
                None => dimension = Some(vector.len()),
                Some(d) if d != vector.len() => {
                    return Err(Error::DimensionMismatch {
                        path: path_str,
                        line: line_no,
                        expected: d,
                        got: vector.len(),
                    });
                }
                Some(_) => {}
            }
            entries.insert(token, vector);
        }
        let dimension = dimension
            .ok_or_else(|| Error::EmptyInput(format!("no vectors in embedding file {path_str}")))?;
        Ok(EmbeddingTable { dimension, entries })
    }

    /// Writes the table in the text format accepted by [`load`](Self::load).
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path_str = path.as_ref().display().to_string();
        let mut out = String::new();
        for (token, vector) in &self.entries {
            out.push_str(token);
            for v in vector {
                out.push(' ');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        let mut file = File::create(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
        file.write_all(out.as_bytes())
            .map_err(|e| Error::io(&path_str, e))
    }
}
