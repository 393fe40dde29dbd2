//! Backends with closed-form attributions, used by the test suite and the
//! `verify` oracle checks.

use ndarray::Array2;

use crate::model::{
    BaselinePolicy, ModelBackend, ModelError, ModelHandle, PathEvaluation, PredictionTarget,
    TokenSpan, TokenizedWindow,
};

/// A one-"layer" linear model f(x) = sum_{s,d} w[s,d] x[s,d] whose layer
/// activation is the input itself.
///
/// The conductance integrand for token s is then w_s . (x_s - x'_s),
/// constant in alpha, so with x' = 0 every quadrature rule at any step count
/// must produce exactly Cond_1(s) = w_s . x_s.
pub struct ToyLinearBackend {
    pub weight: Array2<f64>,
    handle: ModelHandle,
    embed_dim: usize,
}

impl ToyLinearBackend {
    /// `weight` has one row per window token.
    pub fn new(weight: Array2<f64>) -> Self {
        let embed_dim = weight.ncols();
        ToyLinearBackend {
            weight,
            handle: ModelHandle {
                model_id: "toy-linear".to_string(),
                layer_count: 1,
                embedding_dim: embed_dim,
                tokenizer_id: "toy".to_string(),
            },
            embed_dim,
        }
    }

    /// Deterministic per-token embeddings for test windows.
    fn embed(&self, ids: &[usize]) -> Array2<f64> {
        Array2::from_shape_fn((ids.len(), self.embed_dim), |(i, j)| {
            let v = (ids[i] * 31 + j * 17 + 7) % 23;
            v as f64 / 11.5 - 1.0
        })
    }
}

impl ModelBackend for ToyLinearBackend {
    fn handle(&self) -> &ModelHandle {
        &self.handle
    }

    fn tokenize_window(
        &self,
        words: &[&str],
        _prepend_bos: bool,
    ) -> Result<TokenizedWindow, ModelError> {
        if words.is_empty() {
            return Err(ModelError::AlignmentFailure("empty word list".into()));
        }
        if words.len() != self.weight.nrows() {
            return Err(ModelError::AlignmentFailure(format!(
                "toy backend is sized for {} tokens, got {}",
                self.weight.nrows(),
                words.len()
            )));
        }
        // One token per word.
        let token_ids: Vec<usize> = words.iter().map(|w| w.len() % 97).collect();
        let word_spans = (0..words.len())
            .map(|i| TokenSpan { start: i, end: i + 1 })
            .collect();
        let embeddings = self.embed(&token_ids);
        let baseline = Array2::zeros(embeddings.dim());
        Ok(TokenizedWindow {
            token_ids,
            word_spans,
            special_tokens: Vec::new(),
            embeddings,
            baseline,
        })
    }

    fn make_baseline(
        &self,
        window: &TokenizedWindow,
        _policy: BaselinePolicy,
    ) -> Result<Array2<f64>, ModelError> {
        Ok(Array2::zeros(window.embeddings.dim()))
    }

    fn predict_next(&self, window: &TokenizedWindow) -> Result<PredictionTarget, ModelError> {
        let logit = (&self.weight * &window.embeddings).sum();
        Ok(PredictionTarget { token_id: 0, logit })
    }

    fn evaluate_path_point(
        &self,
        window: &TokenizedWindow,
        _target: &PredictionTarget,
        alpha: f64,
    ) -> Result<PathEvaluation, ModelError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(ModelError::AlphaOutOfRange(alpha));
        }
        let direction = &window.embeddings - &window.baseline;
        let x_alpha = &window.baseline + &(&direction * alpha);
        let target_logit = (&self.weight * &x_alpha).sum();
        Ok(PathEvaluation {
            alpha,
            layer_activations: vec![x_alpha],
            layer_gradients: vec![self.weight.clone()],
            layer_tangents: vec![direction],
            target_logit,
        })
    }
}
