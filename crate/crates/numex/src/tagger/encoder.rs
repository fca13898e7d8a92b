//! Windowed feed-forward token encoder.
//!
//! Each position sees the word vectors and shape features of the tokens in
//! a +/- w window, concatenated and projected through one tanh layer. The
//! word vectors come from the pretrained table and are not trained; shape
//! features stand in for character-level information.

use std::sync::Arc;

use crate::corpus::TokenizedText;
use crate::embeddings::EmbeddingTable;
use crate::numeric::is_numeric_token;

/// Indicator slots computed from a token's surface form: is-numeric,
/// contains-digit, all-caps, initial-cap, length bucket.
pub const SHAPE_SLOTS: usize = 5;

/// Encoder hyperparameters; the projection weights live in the model's
/// parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    /// Window radius w; each position sees 2w+1 tokens.
    pub window: usize,
    /// Hidden vector size H.
    pub hidden: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            window: 2,
            hidden: 64,
        }
    }
}

impl EncoderConfig {
    /// Per-token feature width: embedding dimension plus shape slots.
    pub fn token_features(&self, embedding_dim: usize) -> usize {
        embedding_dim + SHAPE_SLOTS
    }

    /// Input width of the projection: (2w+1) token-feature blocks.
    pub fn input_dim(&self, embedding_dim: usize) -> usize {
        (2 * self.window + 1) * self.token_features(embedding_dim)
    }
}

pub fn shape_features(surface: &str) -> [f64; SHAPE_SLOTS] {
    let numeric = is_numeric_token(surface);
    let contains_digit = surface.bytes().any(|b| b.is_ascii_digit());
    let mut has_alpha = false;
    let mut all_caps = true;
    for c in surface.chars() {
        if c.is_alphabetic() {
            has_alpha = true;
            if !c.is_uppercase() {
                all_caps = false;
            }
        }
    }
    let initial_cap = surface
        .chars()
        .next()
        .is_some_and(|c| c.is_alphabetic() && c.is_uppercase());
    let bucket = match surface.chars().count() {
        0..=1 => 0.0,
        2..=3 => 1.0,
        4..=5 => 2.0,
        6..=8 => 3.0,
        _ => 4.0,
    } / 4.0;
    [
        numeric as u8 as f64,
        contains_digit as u8 as f64,
        (has_alpha && all_caps) as u8 as f64,
        initial_cap as u8 as f64,
        bucket,
    ]
}

/// Per-position window features plus hidden activations; kept around for
/// the backward pass.
pub struct EncodedSequence {
    /// `inputs[t]` is the concatenated window feature vector at position t.
    pub inputs: Vec<Vec<f64>>,
    /// `hidden[t] = tanh(W inputs[t] + b)`.
    pub hidden: Vec<Vec<f64>>,
}

/// Forward pass. `weights` is H x D row-major, `bias` is H.
pub fn encode(
    tokens: &TokenizedText,
    table: &Arc<EmbeddingTable>,
    config: &EncoderConfig,
    weights: &[f64],
    bias: &[f64],
) -> EncodedSequence {
    let len = tokens.len();
    let per_token = config.token_features(table.dimension());
    let input_dim = config.input_dim(table.dimension());
    debug_assert_eq!(weights.len(), config.hidden * input_dim);
    debug_assert_eq!(bias.len(), config.hidden);

    // Base features per token, assembled once and reused across windows.
    let mut base = vec![vec![0.0; per_token]; len];
    for (t, token) in tokens.tokens.iter().enumerate() {
        if let Some(vector) = table.vector(&token.surface) {
            base[t][..vector.len()].copy_from_slice(vector);
        }
        let shape = shape_features(&token.surface);
        base[t][per_token - SHAPE_SLOTS..].copy_from_slice(&shape);
    }

    let w = config.window as isize;
    let mut inputs = Vec::with_capacity(len);
    let mut hidden = Vec::with_capacity(len);
    for t in 0..len as isize {
        let mut x = vec![0.0; input_dim];
        for (slot, offset) in (-w..=w).enumerate() {
            let pos = t + offset;
            if pos >= 0 && (pos as usize) < len {
                let dst = slot * per_token;
                x[dst..dst + per_token].copy_from_slice(&base[pos as usize]);
            }
        }
        let mut h = vec![0.0; config.hidden];
        for (j, hj) in h.iter_mut().enumerate() {
            let row = &weights[j * input_dim..(j + 1) * input_dim];
            let z: f64 = row.iter().zip(&x).map(|(wv, xv)| wv * xv).sum::<f64>() + bias[j];
            *hj = z.tanh();
        }
        inputs.push(x);
        hidden.push(h);
    }
    EncodedSequence { inputs, hidden }
}

/// Backward pass through the tanh projection: accumulates gradients with
/// respect to `weights` and `bias` given dLoss/dHidden.
pub fn encode_backward(
    encoded: &EncodedSequence,
    grad_hidden: &[Vec<f64>],
    hidden_size: usize,
    grad_weights: &mut [f64],
    grad_bias: &mut [f64],
) {
    debug_assert_eq!(encoded.hidden.len(), grad_hidden.len());
    for (t, gh) in grad_hidden.iter().enumerate() {
        let x = &encoded.inputs[t];
        let h = &encoded.hidden[t];
        let input_dim = x.len();
        for j in 0..hidden_size {
            let dz = gh[j] * (1.0 - h[j] * h[j]);
            if dz == 0.0 {
                continue;
            }
            let row = &mut grad_weights[j * input_dim..(j + 1) * input_dim];
            for (gw, xv) in row.iter_mut().zip(x) {
                *gw += dz * xv;
            }
            grad_bias[j] += dz;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn tiny_table() -> Arc<EmbeddingTable> {
        let mut t = EmbeddingTable::new(2);
        t.insert("gb", vec![1.0, 0.0]);
        t.insert("kg", vec![0.0, 1.0]);
        Arc::new(t)
    }

    #[test]
    fn empty_sequence_gives_empty_output() {
        let table = tiny_table();
        let config = EncoderConfig {
            window: 2,
            hidden: 4,
        };
        let d = config.input_dim(2);
        let out = encode(&tokenize(""), &table, &config, &vec![0.0; 4 * d], &[0.0; 4]);
        assert!(out.hidden.is_empty());
    }

    #[test]
    fn zero_weights_give_zero_hidden() {
        let table = tiny_table();
        let config = EncoderConfig {
            window: 1,
            hidden: 3,
        };
        let d = config.input_dim(2);
        let out = encode(
            &tokenize("16 gb ram"),
            &table,
            &config,
            &vec![0.0; 3 * d],
            &[0.0; 3],
        );
        for h in &out.hidden {
            assert!(h.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn length_preserved_for_any_window() {
        let table = tiny_table();
        for window in 0..4 {
            let config = EncoderConfig { window, hidden: 2 };
            let d = config.input_dim(2);
            let out = encode(
                &tokenize("a b c d e"),
                &table,
                &config,
                &vec![0.01; 2 * d],
                &[0.0; 2],
            );
            assert_eq!(out.hidden.len(), 5);
        }
    }

    #[test]
    fn shape_feature_slots() {
        assert_eq!(shape_features("12.3"), [1.0, 1.0, 0.0, 0.0, 2.0 / 4.0]);
        assert_eq!(shape_features("GB"), [0.0, 0.0, 1.0, 1.0, 1.0 / 4.0]);
        assert_eq!(shape_features("Features"), [0.0, 0.0, 0.0, 1.0, 3.0 / 4.0]);
        assert_eq!(shape_features("a"), [0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn window_sees_neighbors() {
        // One nonzero weight on the right-neighbor embedding slot makes the
        // hidden state depend on the next token.
        let table = tiny_table();
        let config = EncoderConfig {
            window: 1,
            hidden: 1,
        };
        let per_token = config.token_features(2);
        let d = config.input_dim(2);
        let mut weights = vec![0.0; d];
        weights[2 * per_token] = 1.0; // right neighbor, first embedding component
        let out = encode(&tokenize("16 gb"), &table, &config, &weights, &[0.0]);
        assert!((out.hidden[0][0] - 1f64.tanh()).abs() < 1e-12);
        assert_eq!(out.hidden[1][0], 0.0);
    }
}
