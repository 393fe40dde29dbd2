//! Built-in reference model: a 2-block, 2-head, 16-dimensional decoder with a
//! printable-ASCII character vocabulary and fixed-seed random weights.
//!
//! It exists so the attribution math can be exercised and verified end to end
//! without downloading any pretrained checkpoint. Weights are deterministic:
//! every construction yields bit-identical parameters.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use super::net::{BlockWeights, TransformerConfig, TransformerWeights};
use super::{
    transformer_path_point, transformer_predict, BaselinePolicy, ModelBackend, ModelError,
    ModelHandle, PathEvaluation, PredictionTarget, TokenSpan, TokenizedWindow,
};

/// ASCII 32..=126 mapped to ids 0..=94; id 95 is the end-of-text token.
const ASCII_FIRST: u32 = 32;
const ASCII_LAST: u32 = 126;
const FALLBACK_CHAR: char = '?';
pub const TINY_VOCAB: usize = (ASCII_LAST - ASCII_FIRST + 1) as usize + 1;
pub const TINY_EOT: usize = TINY_VOCAB - 1;

const WEIGHT_SEED: u64 = 0x50_43_4f_4e_44_54_30_31;

fn char_to_id(c: char) -> usize {
    let code = c as u32;
    if (ASCII_FIRST..=ASCII_LAST).contains(&code) {
        (code - ASCII_FIRST) as usize
    } else {
        (FALLBACK_CHAR as u32 - ASCII_FIRST) as usize
    }
}

fn id_to_char(id: usize) -> char {
    if id == TINY_EOT {
        '\u{0}'
    } else {
        char::from_u32(id as u32 + ASCII_FIRST).unwrap_or(FALLBACK_CHAR)
    }
}

/// Deterministic random weights for the reference configuration.
pub fn reference_weights() -> TransformerWeights {
    let config = TransformerConfig {
        vocab_size: TINY_VOCAB,
        max_positions: 512,
        d_model: 16,
        n_heads: 2,
        n_layers: 2,
        ln_eps: 1e-5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(WEIGHT_SEED);
    let emb = Normal::new(0.0, 0.25).unwrap();
    let pos = Normal::new(0.0, 0.15).unwrap();
    let wgt = Normal::new(0.0, 0.30).unwrap();
    let gain = Normal::new(1.0, 0.10).unwrap();
    let bias = Normal::new(0.0, 0.05).unwrap();

    let d = config.d_model;
    fn mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, dist: Normal<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((rows, cols));
        for v in out.iter_mut() {
            *v = rng.sample(dist);
        }
        out
    }
    fn vec(rng: &mut ChaCha8Rng, n: usize, dist: Normal<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(n);
        for v in out.iter_mut() {
            *v = rng.sample(dist);
        }
        out
    }
    let token_embedding = mat(&mut rng, config.vocab_size, d, emb);
    let position_embedding = mat(&mut rng, config.max_positions, d, pos);
    let mut blocks = Vec::with_capacity(config.n_layers);
    for _ in 0..config.n_layers {
        blocks.push(BlockWeights {
            ln1_gain: vec(&mut rng, d, gain),
            ln1_bias: vec(&mut rng, d, bias),
            attn_qkv_w: mat(&mut rng, d, 3 * d, wgt),
            attn_qkv_b: vec(&mut rng, 3 * d, bias),
            attn_proj_w: mat(&mut rng, d, d, wgt),
            attn_proj_b: vec(&mut rng, d, bias),
            ln2_gain: vec(&mut rng, d, gain),
            ln2_bias: vec(&mut rng, d, bias),
            mlp_fc_w: mat(&mut rng, d, 4 * d, wgt),
            mlp_fc_b: vec(&mut rng, 4 * d, bias),
            mlp_proj_w: mat(&mut rng, 4 * d, d, wgt),
            mlp_proj_b: vec(&mut rng, d, bias),
        });
    }
    let final_ln_gain = vec(&mut rng, d, gain);
    let final_ln_bias = vec(&mut rng, d, bias);
    TransformerWeights {
        config,
        token_embedding,
        position_embedding,
        blocks,
        final_ln_gain,
        final_ln_bias,
    }
}

/// The built-in reference backend.
pub struct TinyBackend {
    weights: TransformerWeights,
    handle: ModelHandle,
}

impl TinyBackend {
    pub fn new() -> Self {
        let weights = reference_weights();
        let handle = ModelHandle {
            model_id: "tiny-ref".to_string(),
            layer_count: weights.config.n_layers,
            embedding_dim: weights.config.d_model,
            tokenizer_id: "char-ascii".to_string(),
        };
        TinyBackend { weights, handle }
    }

    pub fn weights(&self) -> &TransformerWeights {
        &self.weights
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter().map(|&id| id_to_char(id)).collect()
    }
}

impl Default for TinyBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl ModelBackend for TinyBackend {
    fn handle(&self) -> &ModelHandle {
        &self.handle
    }

    fn tokenize_window(
        &self,
        words: &[&str],
        prepend_bos: bool,
    ) -> Result<TokenizedWindow, ModelError> {
        if words.is_empty() {
            return Err(ModelError::AlignmentFailure("empty word list".into()));
        }
        let mut token_ids = Vec::new();
        let mut word_spans = Vec::with_capacity(words.len());
        let mut special_tokens = Vec::new();
        if prepend_bos {
            special_tokens.push(token_ids.len());
            token_ids.push(TINY_EOT);
        }
        for (i, word) in words.iter().enumerate() {
            if word.is_empty() {
                return Err(ModelError::AlignmentFailure(format!(
                    "word {} has an empty surface form",
                    i + 1
                )));
            }
            let start = token_ids.len();
            if i > 0 {
                token_ids.push(char_to_id(' '));
            }
            token_ids.extend(word.chars().map(char_to_id));
            word_spans.push(TokenSpan {
                start,
                end: token_ids.len(),
            });
        }
        let embeddings = self.weights.embed_tokens(&token_ids);
        let baseline = Array2::zeros(embeddings.dim());
        Ok(TokenizedWindow {
            token_ids,
            word_spans,
            special_tokens,
            embeddings,
            baseline,
        })
    }

    fn make_baseline(
        &self,
        window: &TokenizedWindow,
        policy: BaselinePolicy,
    ) -> Result<Array2<f64>, ModelError> {
        match policy {
            BaselinePolicy::ZeroEmbedding => Ok(Array2::zeros(window.embeddings.dim())),
            BaselinePolicy::PadTokenEmbedding => {
                let row = self.weights.token_embedding.row(TINY_EOT);
                let mut out = Array2::zeros(window.embeddings.dim());
                for mut r in out.rows_mut() {
                    r.assign(&row);
                }
                Ok(out)
            }
        }
    }

    fn predict_next(&self, window: &TokenizedWindow) -> Result<PredictionTarget, ModelError> {
        Ok(transformer_predict(&self.weights, window))
    }

    fn evaluate_path_point(
        &self,
        window: &TokenizedWindow,
        target: &PredictionTarget,
        alpha: f64,
    ) -> Result<PathEvaluation, ModelError> {
        transformer_path_point(&self.weights, window, target, alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_are_deterministic() {
        let a = reference_weights();
        let b = reference_weights();
        assert_eq!(a.token_embedding, b.token_embedding);
        assert_eq!(a.blocks[1].mlp_fc_w, b.blocks[1].mlp_fc_w);
    }

    #[test]
    fn tokenizes_with_word_spans_partitioning() {
        let backend = TinyBackend::new();
        let window = backend
            .tokenize_window(&["the", "cat", "sat"], false)
            .unwrap();
        assert!(window.spans_partition_tokens());
        assert_eq!(window.word_spans.len(), 3);
        // "the" -> 3 chars; " cat" -> 4; " sat" -> 4.
        assert_eq!(window.word_spans[0].len(), 3);
        assert_eq!(window.word_spans[1].len(), 4);
        assert_eq!(window.token_ids.len(), 11);
        // Span decode reproduces each word's contribution to the encoding.
        let span1 = &window.token_ids[window.word_spans[1].start..window.word_spans[1].end];
        assert_eq!(backend.decode(span1), " cat");
    }

    #[test]
    fn prepended_bos_is_special_and_outside_spans() {
        let backend = TinyBackend::new();
        let window = backend.tokenize_window(&["hi"], true).unwrap();
        assert_eq!(window.special_tokens, vec![0]);
        assert_eq!(window.token_ids[0], TINY_EOT);
        assert_eq!(window.word_spans[0], TokenSpan { start: 1, end: 3 });
        assert!(window.spans_partition_tokens());
    }

    #[test]
    fn unknown_characters_fall_back() {
        let backend = TinyBackend::new();
        let window = backend.tokenize_window(&["caf\u{e9}"], false).unwrap();
        assert_eq!(backend.decode(&window.token_ids), "caf?");
    }

    #[test]
    fn empty_word_list_is_alignment_failure() {
        let backend = TinyBackend::new();
        assert!(matches!(
            backend.tokenize_window(&[], false),
            Err(ModelError::AlignmentFailure(_))
        ));
    }

    #[test]
    fn baseline_policies() {
        let backend = TinyBackend::new();
        let window = backend.tokenize_window(&["abc", "de"], false).unwrap();
        let zero = backend
            .make_baseline(&window, BaselinePolicy::ZeroEmbedding)
            .unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let pad = backend
            .make_baseline(&window, BaselinePolicy::PadTokenEmbedding)
            .unwrap();
        let eot_row = backend.weights().token_embedding.row(TINY_EOT);
        for r in pad.rows() {
            assert_eq!(r, eot_row);
        }
    }

    #[test]
    fn predict_next_is_deterministic() {
        let backend = TinyBackend::new();
        let window = backend
            .tokenize_window(&["the", "quick", "brown"], false)
            .unwrap();
        let a = backend.predict_next(&window).unwrap();
        let b = backend.predict_next(&window).unwrap();
        assert_eq!(a.token_id, b.token_id);
        assert_eq!(a.logit, b.logit);
    }

    #[test]
    fn path_endpoints_match_direct_forward() {
        let backend = TinyBackend::new();
        let mut window = backend.tokenize_window(&["path", "test"], false).unwrap();
        window.baseline = backend
            .make_baseline(&window, BaselinePolicy::PadTokenEmbedding)
            .unwrap();
        let target = backend.predict_next(&window).unwrap();

        let at_one = backend.evaluate_path_point(&window, &target, 1.0).unwrap();
        let fwd_x = backend.weights().forward(&window.embeddings);
        for (l, act) in at_one.layer_activations.iter().enumerate() {
            let direct = &fwd_x.hidden[l + 1];
            let max_rel = act
                .iter()
                .zip(direct.iter())
                .map(|(a, b)| (a - b).abs() / b.abs().max(1e-12))
                .fold(0.0_f64, f64::max);
            assert!(max_rel < 1e-6, "layer {} endpoint mismatch", l + 1);
        }

        let at_zero = backend.evaluate_path_point(&window, &target, 0.0).unwrap();
        let fwd_b = backend.weights().forward(&window.baseline);
        for (l, act) in at_zero.layer_activations.iter().enumerate() {
            let direct = &fwd_b.hidden[l + 1];
            let max_abs = act
                .iter()
                .zip(direct.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);
            assert!(max_abs < 1e-9, "layer {} baseline endpoint mismatch", l + 1);
        }
    }

    #[test]
    fn alpha_out_of_range_is_rejected() {
        let backend = TinyBackend::new();
        let window = backend.tokenize_window(&["x"], false).unwrap();
        let target = backend.predict_next(&window).unwrap();
        assert!(matches!(
            backend.evaluate_path_point(&window, &target, 1.5),
            Err(ModelError::AlphaOutOfRange(_))
        ));
    }
}
