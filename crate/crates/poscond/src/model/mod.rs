//! Language-model backends.
//!
//! A backend owns the model weights and exposes the four operations the
//! attribution pipeline needs: tokenization with word alignment, baseline
//! construction, greedy next-token prediction, and path evaluations (layer
//! activations, target-logit gradients, and path tangents at one alpha).
//!
//! "Layer l" throughout means the residual-stream hidden state output by
//! transformer block l, indexed 1..=L. Every computation path from the input
//! to the predicted logit passes through each of these states, which is what
//! makes per-layer conductance conserve the logit difference f(x) - f(x').

pub mod bpe;
pub mod gpt2;
pub mod net;
pub mod tiny;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("tokenizer offsets could not be reconciled with word boundaries: {0}")]
    AlignmentFailure(String),
    #[error("model evaluation failed: {0}")]
    BackendFailure(String),
    #[error("gradients unavailable for the requested target")]
    NonDifferentiableTarget,
    #[error("baseline policy requires a padding or end-of-text token, but the tokenizer defines none")]
    NoPadToken,
    #[error("failed to load model weights: {0}")]
    WeightsLoad(String),
    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
}

/// Identifying metadata for a loaded model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelHandle {
    pub model_id: String,
    /// Number of transformer blocks L. Layer indices run 1..=L.
    pub layer_count: usize,
    pub embedding_dim: usize,
    pub tokenizer_id: String,
}

/// Baseline construction policy for the attribution path start x'.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselinePolicy {
    ZeroEmbedding,
    /// Every position holds the embedding of the tokenizer's padding token,
    /// falling back to its end-of-text token.
    PadTokenEmbedding,
}

/// Contiguous token index range `[start, end)` belonging to one window word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

/// A window of words tokenized against a specific model, with the input
/// embeddings x and the baseline embeddings x'.
///
/// `word_spans[i]` covers the tokens of the word at window position i + 1.
/// The spans partition all token indices except `special_tokens` (e.g. a
/// prepended beginning-of-sequence token), which belong to no word.
#[derive(Debug, Clone)]
pub struct TokenizedWindow {
    pub token_ids: Vec<usize>,
    pub word_spans: Vec<TokenSpan>,
    pub special_tokens: Vec<usize>,
    /// Input token embeddings, one row per token. Positional embeddings are
    /// not included here; the backend applies them inside the forward pass so
    /// that the interpolation path only moves the token content.
    pub embeddings: Array2<f64>,
    /// Baseline token embeddings x', same shape as `embeddings`.
    pub baseline: Array2<f64>,
}

impl TokenizedWindow {
    /// Checks the span-partition invariant: every non-special token index is
    /// covered by exactly one span.
    pub fn spans_partition_tokens(&self) -> bool {
        let mut covered = vec![0usize; self.token_ids.len()];
        for span in &self.word_spans {
            if span.is_empty() || span.end > self.token_ids.len() {
                return false;
            }
            for c in &mut covered[span.start..span.end] {
                *c += 1;
            }
        }
        for &s in &self.special_tokens {
            if s >= covered.len() {
                return false;
            }
            covered[s] += 1;
        }
        covered.iter().all(|&c| c == 1)
    }
}

/// The greedy next-token target of a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionTarget {
    pub token_id: usize,
    /// Pre-softmax logit of `token_id` at the final position on the
    /// unperturbed input x.
    pub logit: f64,
}

/// Everything needed to evaluate the conductance integrand at one alpha:
/// per-layer activations y_l, gradients of the target logit with respect to
/// each y_l, and the path tangents dy_l/dalpha (the directional derivative of
/// y_l along x - x').
#[derive(Debug, Clone)]
pub struct PathEvaluation {
    pub alpha: f64,
    /// y_l at x' + alpha (x - x'), for l = 1..=L (index 0 is layer 1).
    pub layer_activations: Vec<Array2<f64>>,
    /// df/dy_l, same indexing and shapes as `layer_activations`.
    pub layer_gradients: Vec<Array2<f64>>,
    /// dy_l/dalpha, same indexing and shapes.
    pub layer_tangents: Vec<Array2<f64>>,
    /// Target logit value at this alpha.
    pub target_logit: f64,
}

impl PathEvaluation {
    /// Per-(layer, token) conductance integrand: the hidden-dimension dot
    /// product of gradient and tangent at each residual-stream position.
    pub fn integrand(&self) -> Array2<f64> {
        let layers = self.layer_gradients.len();
        let tokens = if layers == 0 {
            0
        } else {
            self.layer_gradients[0].nrows()
        };
        let mut out = Array2::zeros((layers, tokens));
        for (l, (grad, tang)) in self
            .layer_gradients
            .iter()
            .zip(self.layer_tangents.iter())
            .enumerate()
        {
            for s in 0..tokens {
                out[[l, s]] = grad.row(s).dot(&tang.row(s));
            }
        }
        out
    }
}

/// Uniform interface to a causal language model.
///
/// Implementations are immutable after construction, so one instance can be
/// shared by a pool of window workers.
pub trait ModelBackend: Send + Sync {
    fn handle(&self) -> &ModelHandle;

    /// Tokenizes window words so that spans partition the non-special tokens
    /// and each span decodes back to its word's contribution to the encoded
    /// string. Fills `embeddings`; `baseline` starts as zeros until
    /// [`ModelBackend::make_baseline`] output is installed.
    fn tokenize_window(
        &self,
        words: &[&str],
        prepend_bos: bool,
    ) -> Result<TokenizedWindow, ModelError>;

    /// Builds baseline embeddings x' for the window under `policy`.
    fn make_baseline(
        &self,
        window: &TokenizedWindow,
        policy: BaselinePolicy,
    ) -> Result<Array2<f64>, ModelError>;

    /// Greedy next-token prediction at the final position of the unperturbed
    /// input, with its pre-softmax logit. Ties break to the lowest token id.
    fn predict_next(&self, window: &TokenizedWindow) -> Result<PredictionTarget, ModelError>;

    /// Evaluates activations, gradients, and path tangents at one alpha.
    fn evaluate_path_point(
        &self,
        window: &TokenizedWindow,
        target: &PredictionTarget,
        alpha: f64,
    ) -> Result<PathEvaluation, ModelError>;
}

/// Installs a baseline built by [`ModelBackend::make_baseline`].
pub fn with_baseline(mut window: TokenizedWindow, baseline: Array2<f64>) -> TokenizedWindow {
    assert_eq!(window.embeddings.dim(), baseline.dim());
    window.baseline = baseline;
    window
}

/// Greedy next-token prediction shared by the transformer backends. Ties
/// break to the lowest token id.
pub(crate) fn transformer_predict(
    weights: &net::TransformerWeights,
    window: &TokenizedWindow,
) -> PredictionTarget {
    let fwd = weights.forward(&window.embeddings);
    let logits = weights.last_logits(&fwd);
    let mut best = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for (id, &v) in logits.iter().enumerate() {
        if v > best_v {
            best = id;
            best_v = v;
        }
    }
    PredictionTarget {
        token_id: best,
        logit: best_v,
    }
}

/// Path-point evaluation shared by the transformer backends.
pub(crate) fn transformer_path_point(
    weights: &net::TransformerWeights,
    window: &TokenizedWindow,
    target: &PredictionTarget,
    alpha: f64,
) -> Result<PathEvaluation, ModelError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ModelError::AlphaOutOfRange(alpha));
    }
    let direction = &window.embeddings - &window.baseline;
    let x_alpha = &window.baseline + &(&direction * alpha);
    let fwd = weights.forward(&x_alpha);
    let target_logit = weights.target_logit(&fwd, target.token_id);
    let (layer_gradients, _) = weights.backward_layers(&fwd, target.token_id);
    let layer_tangents = weights.jvp_layers(&fwd, &direction);
    let layer_activations = fwd.hidden[1..].to_vec();
    Ok(PathEvaluation {
        alpha,
        layer_activations,
        layer_gradients,
        layer_tangents,
        target_logit,
    })
}
