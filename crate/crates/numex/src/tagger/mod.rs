//! Multi-task linear-chain CRF tagger.
//!
//! One shared windowed encoder feeds either a single flattened head over
//! 2K+1 tags (single-task mode) or one 3-tag head per attribute
//! (multi-task mode). Multi-task training masks the loss of tasks whose
//! structured value is missing, so incomplete products still train every
//! available head instead of teaching wrong O tags.

pub mod crf;
pub mod encoder;
mod train;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::MastTagSet;
use crate::corpus::TokenizedText;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};

pub use encoder::{EncoderConfig, SHAPE_SLOTS};
pub use train::{nll_and_gradient, train, DevSet, TrainConfig, TrainReport};

/// Score pinned on transitions that would break BIO structure; never
/// updated by training.
pub const FORBIDDEN_SCORE: f64 = -1e4;

/// Which head arrangement the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Single head over the flattened 2K+1 tag space.
    Mast,
    /// One B/I/O head per attribute with loss masking.
    Mamt,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "mast" => Ok(Mode::Mast),
            "mamt" => Ok(Mode::Mamt),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode `{other}` (expected mast|mamt)"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Mast => "mast",
            Mode::Mamt => "mamt",
        })
    }
}

/// Tag inventory of one head.
#[derive(Debug, Clone, PartialEq)]
pub enum TagSpace {
    /// B = 0, I = 1, O = 2.
    Bio,
    /// Flattened per-attribute tags.
    Mast(MastTagSet),
}

pub const BIO_B: usize = 0;
pub const BIO_I: usize = 1;
pub const BIO_O: usize = 2;

impl TagSpace {
    pub fn count(&self) -> usize {
        match self {
            TagSpace::Bio => 3,
            TagSpace::Mast(set) => set.tag_count(),
        }
    }

    pub fn is_i(&self, tag: usize) -> bool {
        match self {
            TagSpace::Bio => tag == BIO_I,
            TagSpace::Mast(_) => tag != MastTagSet::O && tag.is_multiple_of(2),
        }
    }

    /// The B tag whose span the given I tag continues.
    fn b_of_i(&self, tag: usize) -> usize {
        debug_assert!(self.is_i(tag));
        match self {
            TagSpace::Bio => BIO_B,
            TagSpace::Mast(_) => tag - 1,
        }
    }

    /// An I tag may only start nothing: a span must open with B.
    pub fn allowed_start(&self, tag: usize) -> bool {
        !self.is_i(tag)
    }

    /// An I tag may only follow its own B or itself.
    pub fn allowed_transition(&self, from: usize, to: usize) -> bool {
        !self.is_i(to) || from == self.b_of_i(to) || from == to
    }
}

/// Offsets of one parameter block inside the flat vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub offset: usize,
    pub len: usize,
}

impl Block {
    fn slice<'a>(&self, data: &'a [f64]) -> &'a [f64] {
        &data[self.offset..self.offset + self.len]
    }

    fn slice_mut<'a>(&self, data: &'a mut [f64]) -> &'a mut [f64] {
        &mut data[self.offset..self.offset + self.len]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadLayout {
    /// H x T row-major.
    pub emission: Block,
    /// T x T row-major.
    pub transition: Block,
    pub start: Block,
    pub stop: Block,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// H x D row-major.
    pub encoder_weights: Block,
    pub encoder_bias: Block,
    pub heads: Vec<HeadLayout>,
    pub total: usize,
}

impl Layout {
    fn build(hidden: usize, input_dim: usize, tag_counts: &[usize]) -> Layout {
        let mut offset = 0;
        let mut block = |len: usize| {
            let b = Block { offset, len };
            offset += len;
            b
        };
        let encoder_weights = block(hidden * input_dim);
        let encoder_bias = block(hidden);
        let heads = tag_counts
            .iter()
            .map(|&t| HeadLayout {
                emission: block(hidden * t),
                transition: block(t * t),
                start: block(t),
                stop: block(t),
            })
            .collect();
        Layout {
            encoder_weights,
            encoder_bias,
            heads,
            total: offset,
        }
    }
}

/// One output head: a name and its tag inventory. Parameters live in the
/// model's flat vector at the matching [`HeadLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeadSpec {
    pub name: String,
    pub tags: TagSpace,
}

/// Everything needed to build a fresh model.
#[derive(Clone)]
pub struct ModelSetup {
    pub mode: Mode,
    pub attributes: Vec<String>,
    pub encoder: EncoderConfig,
    pub table: Arc<EmbeddingTable>,
    pub alias_fingerprint: String,
}

/// Shared encoder plus per-task heads; all trainable parameters in one
/// flat vector, with structurally forbidden transitions frozen.
#[derive(Clone)]
pub struct CrfModel {
    pub mode: Mode,
    pub attributes: Vec<String>,
    pub alias_fingerprint: String,
    pub encoder: EncoderConfig,
    pub table: Arc<EmbeddingTable>,
    heads: Vec<HeadSpec>,
    pub(crate) params: Vec<f64>,
    pub(crate) frozen: Vec<bool>,
    pub(crate) layout: Layout,
}

/// Name used for the single flattened head.
pub const MAST_HEAD: &str = "__all__";

impl CrfModel {
    /// Builds a model with parameters drawn from uniform(-0.1, 0.1) using
    /// the caller's RNG; forbidden transitions are pinned.
    pub fn new(setup: &ModelSetup, rng: &mut impl Rng) -> CrfModel {
        let heads: Vec<HeadSpec> = match setup.mode {
            Mode::Mast => vec![HeadSpec {
                name: MAST_HEAD.to_string(),
                tags: TagSpace::Mast(MastTagSet::new(setup.attributes.clone())),
            }],
            Mode::Mamt => setup
                .attributes
                .iter()
                .map(|name| HeadSpec {
                    name: name.clone(),
                    tags: TagSpace::Bio,
                })
                .collect(),
        };
        let input_dim = setup.encoder.input_dim(setup.table.dimension());
        let tag_counts: Vec<usize> = heads.iter().map(|h| h.tags.count()).collect();
        let layout = Layout::build(setup.encoder.hidden, input_dim, &tag_counts);

        let mut params: Vec<f64> = (0..layout.total).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let mut frozen = vec![false; layout.total];
        for (head, hl) in heads.iter().zip(&layout.heads) {
            let t = head.tags.count();
            for from in 0..t {
                for to in 0..t {
                    if !head.tags.allowed_transition(from, to) {
                        let idx = hl.transition.offset + from * t + to;
                        params[idx] = FORBIDDEN_SCORE;
                        frozen[idx] = true;
                    }
                }
            }
            for tag in 0..t {
                if !head.tags.allowed_start(tag) {
                    let idx = hl.start.offset + tag;
                    params[idx] = FORBIDDEN_SCORE;
                    frozen[idx] = true;
                }
            }
        }
        CrfModel {
            mode: setup.mode,
            attributes: setup.attributes.clone(),
            alias_fingerprint: setup.alias_fingerprint.clone(),
            encoder: setup.encoder,
            table: setup.table.clone(),
            heads,
            params,
            frozen,
            layout,
        }
    }

    pub fn heads(&self) -> &[HeadSpec] {
        &self.heads
    }

    pub fn head_index(&self, name: &str) -> Option<usize> {
        self.heads.iter().position(|h| h.name == name)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn param(&self, index: usize) -> f64 {
        self.params[index]
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        self.params[index] = value;
    }

    pub fn param_frozen(&self, index: usize) -> bool {
        self.frozen[index]
    }

    /// Flat index range owned by one head, for masking checks.
    pub fn head_param_range(&self, head: usize) -> std::ops::Range<usize> {
        let hl = &self.layout.heads[head];
        hl.emission.offset..hl.stop.offset + hl.stop.len
    }

    pub fn param_norm(&self) -> f64 {
        self.params
            .iter()
            .zip(&self.frozen)
            .filter(|(_, &f)| !f)
            .map(|(p, _)| p * p)
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn encoder_weights(&self) -> &[f64] {
        self.layout.encoder_weights.slice(&self.params)
    }

    pub(crate) fn encoder_bias(&self) -> &[f64] {
        self.layout.encoder_bias.slice(&self.params)
    }

    pub(crate) fn head_transitions(&self, head: usize) -> crf::Transitions<'_> {
        let hl = &self.layout.heads[head];
        crf::Transitions {
            matrix: hl.transition.slice(&self.params),
            start: hl.start.slice(&self.params),
            stop: hl.stop.slice(&self.params),
            n: self.heads[head].tags.count(),
        }
    }

    /// Emission scores for one head: L x T from L x H hidden states.
    pub(crate) fn head_emissions(&self, head: usize, hidden: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let hl = &self.layout.heads[head];
        let weights = hl.emission.slice(&self.params);
        let t = self.heads[head].tags.count();
        hidden
            .iter()
            .map(|h| {
                let mut scores = vec![0.0; t];
                for (j, hj) in h.iter().enumerate() {
                    if *hj == 0.0 {
                        continue;
                    }
                    let row = &weights[j * t..(j + 1) * t];
                    for (s, w) in scores.iter_mut().zip(row) {
                        *s += hj * w;
                    }
                }
                scores
            })
            .collect()
    }

    fn encode(&self, tokens: &TokenizedText) -> encoder::EncodedSequence {
        encoder::encode(
            tokens,
            &self.table,
            &self.encoder,
            self.encoder_weights(),
            self.encoder_bias(),
        )
    }

    /// Viterbi tag path per head.
    pub fn decode_paths(&self, tokens: &TokenizedText) -> Vec<(String, Vec<usize>)> {
        if tokens.is_empty() {
            return self
                .heads
                .iter()
                .map(|h| (h.name.clone(), Vec::new()))
                .collect();
        }
        let encoded = self.encode(tokens);
        self.heads
            .iter()
            .enumerate()
            .map(|(i, head)| {
                let emissions = self.head_emissions(i, &encoded.hidden);
                let path = crf::viterbi(&emissions, &self.head_transitions(i));
                (head.name.clone(), path)
            })
            .collect()
    }

    /// Decodes extractions: each maximal B I* span yields the span's B
    /// token surface as the extracted value. Every attribute is present in
    /// the result, possibly with an empty list.
    pub fn decode(&self, tokens: &TokenizedText) -> BTreeMap<String, Vec<String>> {
        let mut result: BTreeMap<String, Vec<String>> = self
            .attributes
            .iter()
            .map(|a| (a.clone(), Vec::new()))
            .collect();
        for (head_idx, (name, path)) in self.decode_paths(tokens).iter().enumerate() {
            match &self.heads[head_idx].tags {
                TagSpace::Bio => {
                    let list = result.get_mut(name).expect("head names an attribute");
                    for (t, &tag) in path.iter().enumerate() {
                        if tag == BIO_B {
                            list.push(tokens.tokens[t].surface.clone());
                        }
                    }
                }
                TagSpace::Mast(set) => {
                    for (t, &tag) in path.iter().enumerate() {
                        if let Some((attr_idx, true)) = set.split(tag) {
                            result
                                .get_mut(&set.attributes[attr_idx])
                                .expect("tag set names an attribute")
                                .push(tokens.tokens[t].surface.clone());
                        }
                    }
                }
            }
        }
        result
    }
}

#[derive(Serialize, Deserialize)]
struct SavedEncoder {
    window: usize,
    hidden: usize,
    embedding_dimension: usize,
    shape_slots: usize,
}

#[derive(Serialize, Deserialize)]
struct SavedHead {
    name: String,
    emission: Vec<Vec<f64>>,
    transition: Vec<Vec<f64>>,
    start: Vec<f64>,
    stop: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SavedModel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
    mode: Mode,
    attributes: Vec<String>,
    alias_fingerprint: String,
    encoder: SavedEncoder,
    encoder_weights: Vec<Vec<f64>>,
    encoder_bias: Vec<f64>,
    heads: Vec<SavedHead>,
}

fn rows(flat: &[f64], cols: usize) -> Vec<Vec<f64>> {
    flat.chunks(cols).map(|c| c.to_vec()).collect()
}

/// Serializes the model as a single JSON document.
pub fn save_model(
    model: &CrfModel,
    path: impl AsRef<Path>,
    config_hash: Option<&str>,
) -> Result<()> {
    let path_str = path.as_ref().display().to_string();
    let input_dim = model.encoder.input_dim(model.table.dimension());
    let saved = SavedModel {
        config_hash: config_hash.map(str::to_string),
        mode: model.mode,
        attributes: model.attributes.clone(),
        alias_fingerprint: model.alias_fingerprint.clone(),
        encoder: SavedEncoder {
            window: model.encoder.window,
            hidden: model.encoder.hidden,
            embedding_dimension: model.table.dimension(),
            shape_slots: SHAPE_SLOTS,
        },
        encoder_weights: rows(model.encoder_weights(), input_dim),
        encoder_bias: model.encoder_bias().to_vec(),
        heads: model
            .heads
            .iter()
            .zip(&model.layout.heads)
            .map(|(head, hl)| {
                let t = head.tags.count();
                SavedHead {
                    name: head.name.clone(),
                    emission: rows(hl.emission.slice(&model.params), t),
                    transition: rows(hl.transition.slice(&model.params), t),
                    start: hl.start.slice(&model.params).to_vec(),
                    stop: hl.stop.slice(&model.params).to_vec(),
                }
            })
            .collect(),
    };
    let json =
        serde_json::to_string_pretty(&saved).map_err(|e| Error::parse(&path_str, 0, e.to_string()))?;
    let mut file = File::create(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    file.write_all(json.as_bytes())
        .map_err(|e| Error::io(&path_str, e))?;
    file.write_all(b"\n").map_err(|e| Error::io(&path_str, e))
}

fn fill_block(
    params: &mut [f64],
    block: &Block,
    values: &[f64],
    what: &str,
    path: &str,
) -> Result<()> {
    if values.len() != block.len {
        return Err(Error::parse(
            path,
            0,
            format!("{what}: expected {} values, got {}", block.len, values.len()),
        ));
    }
    block.slice_mut(params).copy_from_slice(values);
    Ok(())
}

/// Loads a model saved by [`save_model`]. The embedding table is supplied
/// by the caller and must match the recorded dimension.
pub fn load_model(path: impl AsRef<Path>, table: Arc<EmbeddingTable>) -> Result<CrfModel> {
    let path_str = path.as_ref().display().to_string();
    let file = File::open(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    let saved: SavedModel = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::parse(&path_str, 0, e.to_string()))?;
    if saved.encoder.embedding_dimension != table.dimension() {
        return Err(Error::InvalidConfig(format!(
            "model expects embedding dimension {}, table has {}",
            saved.encoder.embedding_dimension,
            table.dimension()
        )));
    }
    if saved.encoder.shape_slots != SHAPE_SLOTS {
        return Err(Error::InvalidConfig(format!(
            "model expects {} shape slots, this build provides {}",
            saved.encoder.shape_slots,
            SHAPE_SLOTS
        )));
    }
    let setup = ModelSetup {
        mode: saved.mode,
        attributes: saved.attributes.clone(),
        encoder: EncoderConfig {
            window: saved.encoder.window,
            hidden: saved.encoder.hidden,
        },
        table,
        alias_fingerprint: saved.alias_fingerprint.clone(),
    };
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut model = CrfModel::new(&setup, &mut rng);

    let flat: Vec<f64> = saved.encoder_weights.into_iter().flatten().collect();
    fill_block(
        &mut model.params,
        &model.layout.encoder_weights.clone(),
        &flat,
        "encoder weights",
        &path_str,
    )?;
    fill_block(
        &mut model.params,
        &model.layout.encoder_bias.clone(),
        &saved.encoder_bias,
        "encoder bias",
        &path_str,
    )?;
    if saved.heads.len() != model.heads.len() {
        return Err(Error::parse(
            &path_str,
            0,
            format!(
                "expected {} heads, got {}",
                model.heads.len(),
                saved.heads.len()
            ),
        ));
    }
    for (i, head) in saved.heads.iter().enumerate() {
        if head.name != model.heads[i].name {
            return Err(Error::parse(
                &path_str,
                0,
                format!(
                    "head {i} name mismatch: expected {}, got {}",
                    model.heads[i].name, head.name
                ),
            ));
        }
        let hl = model.layout.heads[i].clone();
        let emission: Vec<f64> = head.emission.iter().flatten().copied().collect();
        let transition: Vec<f64> = head.transition.iter().flatten().copied().collect();
        fill_block(&mut model.params, &hl.emission, &emission, "emission", &path_str)?;
        fill_block(
            &mut model.params,
            &hl.transition,
            &transition,
            "transition",
            &path_str,
        )?;
        fill_block(&mut model.params, &hl.start, &head.start, "start", &path_str)?;
        fill_block(&mut model.params, &hl.stop, &head.stop, "stop", &path_str)?;
    }
    // Pinned entries are structural, not data.
    for (idx, &f) in model.frozen.clone().iter().enumerate() {
        if f {
            model.params[idx] = FORBIDDEN_SCORE;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_table() -> Arc<EmbeddingTable> {
        let mut t = EmbeddingTable::new(2);
        t.insert("gb", vec![1.0, 0.0]);
        t.insert("kg", vec![0.0, 1.0]);
        Arc::new(t)
    }

    fn setup(mode: Mode) -> ModelSetup {
        ModelSetup {
            mode,
            attributes: vec!["ram".to_string(), "weight".to_string()],
            encoder: EncoderConfig {
                window: 1,
                hidden: 4,
            },
            table: tiny_table(),
            alias_fingerprint: "test".to_string(),
        }
    }

    #[test]
    fn mast_has_single_flat_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = CrfModel::new(&setup(Mode::Mast), &mut rng);
        assert_eq!(model.heads().len(), 1);
        assert_eq!(model.heads()[0].name, MAST_HEAD);
        assert_eq!(model.heads()[0].tags.count(), 5);
    }

    #[test]
    fn mamt_has_head_per_attribute() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = CrfModel::new(&setup(Mode::Mamt), &mut rng);
        assert_eq!(model.heads().len(), 2);
        assert!(model.heads().iter().all(|h| h.tags.count() == 3));
    }

    #[test]
    fn forbidden_transitions_pinned() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = CrfModel::new(&setup(Mode::Mamt), &mut rng);
        let trans = model.head_transitions(0);
        assert_eq!(trans.start[BIO_I], FORBIDDEN_SCORE);
        assert_eq!(trans.matrix[BIO_O * 3 + BIO_I], FORBIDDEN_SCORE);
        assert_ne!(trans.matrix[BIO_B * 3 + BIO_I], FORBIDDEN_SCORE);
    }

    #[test]
    fn mast_tag_space_transitions() {
        let set = MastTagSet::new(vec!["a".into(), "b".into()]);
        let space = TagSpace::Mast(set.clone());
        let (b_a, i_a) = (set.b_tag(0), set.i_tag(0));
        let (b_b, i_b) = (set.b_tag(1), set.i_tag(1));
        assert!(space.allowed_transition(b_a, i_a));
        assert!(space.allowed_transition(i_a, i_a));
        assert!(!space.allowed_transition(MastTagSet::O, i_a));
        assert!(!space.allowed_transition(b_b, i_a));
        assert!(space.allowed_transition(i_a, b_b));
        assert!(!space.allowed_start(i_b));
        assert!(space.allowed_start(b_b));
    }

    #[test]
    fn decode_empty_tokens() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = CrfModel::new(&setup(Mode::Mamt), &mut rng);
        let out = model.decode(&tokenize(""));
        assert!(out.values().all(Vec::is_empty));
    }

    #[test]
    fn save_load_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = CrfModel::new(&setup(Mode::Mast), &mut rng);
        let f = tempfile::NamedTempFile::new().unwrap();
        save_model(&model, f.path(), Some("abc123")).unwrap();
        let loaded = load_model(f.path(), tiny_table()).unwrap();
        assert_eq!(loaded.params, model.params);
        assert_eq!(loaded.frozen, model.frozen);
        assert_eq!(loaded.attributes, model.attributes);
        let tokens = tokenize("16 gb ram and 1.2 kg");
        assert_eq!(model.decode(&tokens), loaded.decode(&tokens));
    }

    #[test]
    fn load_rejects_wrong_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = CrfModel::new(&setup(Mode::Mamt), &mut rng);
        let f = tempfile::NamedTempFile::new().unwrap();
        save_model(&model, f.path(), None).unwrap();
        let other = Arc::new(EmbeddingTable::new(7));
        assert!(load_model(f.path(), other).is_err());
    }
}
