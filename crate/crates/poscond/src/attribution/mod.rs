//! Layer conductance per token, per-layer normalization, and aggregation of
//! subword tokens to surface words.
//!
//! The raw conductance of layer l with respect to stream position s is the
//! path integral over alpha in [0, 1] of the hidden-dimension dot product
//! between df/dy_l and dy_l/dalpha at position s, where y_l is the residual
//! stream output by block l and the path is x' + alpha (x - x'). Summed over
//! all positions it telescopes to f(x) - f(x'), which is what the
//! conservation checks in `verification` rely on.

pub mod quadrature;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelBackend, ModelError, PredictionTarget, TokenSpan, TokenizedWindow};
pub use quadrature::{nodes_weights, QuadratureRule, QuadratureSpec};

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error("quadrature requires at least 2 steps, got {0}")]
    InvalidSteps(usize),
    #[error("non-finite gradient encountered at layer {layer}, token {token}, alpha {alpha}")]
    NonFiniteGradient { layer: usize, token: usize, alpha: f64 },
    #[error("layer {layer} raw conductance sums to {sum:e}, below the {epsilon:e} threshold")]
    DegenerateDenominator { layer: usize, sum: f64, epsilon: f64 },
    #[error("word span [{start}, {end}) exceeds the {tokens}-token window")]
    SpanMismatch { start: usize, end: usize, tokens: usize },
    #[error(transparent)]
    Backend(#[from] ModelError),
}

/// How Eq.-style normalization divides a layer's token scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// Divide by the signed sum over tokens (the default; scores keep sign
    /// and sum to exactly 1 per layer).
    Signed,
    /// Divide by the sum of absolute values, for sensitivity analysis when
    /// sign cancellation makes the signed denominator unstable.
    AbsoluteSum,
}

/// Per-(layer, token) conductance before normalization.
#[derive(Debug, Clone)]
pub struct RawConductance {
    /// `[layers, tokens]`.
    pub values: Array2<f64>,
    pub quadrature_steps: usize,
    pub quadrature_rule: QuadratureRule,
    /// Target logit at alpha = 1 and alpha = 0 when those path endpoints were
    /// among the quadrature nodes (diagnostics for conservation checks).
    pub target_logit_at_one: Option<f64>,
    pub target_logit_at_zero: Option<f64>,
}

/// Per-(layer, token) conductance normalized within the window (sums to 1
/// per layer under `Signed` normalization).
#[derive(Debug, Clone)]
pub struct NormalizedConductance {
    /// `[layers, tokens]`.
    pub values: Array2<f64>,
    /// Per-layer denominators used for the division.
    pub denominators: Vec<f64>,
}

/// Word-level conductance for one window: token scores summed over each
/// word's span.
#[derive(Debug, Clone)]
pub struct WordConductance {
    /// `[layers, words]`; the word axis is the window position 1..=P.
    pub values: Array2<f64>,
    pub window_id: usize,
    pub normalization_denominators: Vec<f64>,
    /// Normalized mass sitting on special tokens (outside all spans), per
    /// layer. Zero when no special tokens are present.
    pub special_token_mass: Vec<f64>,
}

/// Approximates the conductance path integral for every (layer, token) with
/// the chosen quadrature rule.
pub fn compute_raw_conductance(
    backend: &dyn ModelBackend,
    window: &TokenizedWindow,
    target: &PredictionTarget,
    steps: usize,
    rule: QuadratureRule,
) -> Result<RawConductance, AttributionError> {
    let nodes = nodes_weights(rule, steps)?;
    let layers = backend.handle().layer_count;
    let tokens = window.token_ids.len();
    let mut acc = Array2::<f64>::zeros((layers, tokens));
    let mut f_at_one = None;
    let mut f_at_zero = None;
    for &(alpha, weight) in &nodes {
        let eval = backend.evaluate_path_point(window, target, alpha)?;
        let integrand = eval.integrand();
        for l in 0..layers {
            for s in 0..tokens {
                let v = integrand[[l, s]];
                if !v.is_finite() {
                    return Err(AttributionError::NonFiniteGradient {
                        layer: l + 1,
                        token: s,
                        alpha,
                    });
                }
                acc[[l, s]] += weight * v;
            }
        }
        if alpha == 1.0 {
            f_at_one = Some(eval.target_logit);
        }
        if alpha == 0.0 {
            f_at_zero = Some(eval.target_logit);
        }
    }
    Ok(RawConductance {
        values: acc,
        quadrature_steps: steps,
        quadrature_rule: rule,
        target_logit_at_one: f_at_one,
        target_logit_at_zero: f_at_zero,
    })
}

/// Normalizes each layer's token scores by that layer's total.
pub fn normalize(
    raw: &RawConductance,
    mode: NormalizationMode,
    epsilon: f64,
) -> Result<NormalizedConductance, AttributionError> {
    let (layers, tokens) = raw.values.dim();
    let mut values = Array2::zeros((layers, tokens));
    let mut denominators = Vec::with_capacity(layers);
    for l in 0..layers {
        let row = raw.values.row(l);
        let denom = match mode {
            NormalizationMode::Signed => row.sum(),
            NormalizationMode::AbsoluteSum => row.iter().map(|v| v.abs()).sum(),
        };
        if denom.abs() < epsilon {
            return Err(AttributionError::DegenerateDenominator {
                layer: l + 1,
                sum: denom,
                epsilon,
            });
        }
        denominators.push(denom);
        for s in 0..tokens {
            values[[l, s]] = raw.values[[l, s]] / denom;
        }
    }
    Ok(NormalizedConductance {
        values,
        denominators,
    })
}

/// Sums normalized token scores over each word's span (Eq.-style word
/// aggregation). `window_id` is carried through for the skipped-window log
/// and debugging dumps.
pub fn aggregate_words(
    normalized: &NormalizedConductance,
    spans: &[TokenSpan],
    special_tokens: &[usize],
    window_id: usize,
) -> Result<WordConductance, AttributionError> {
    let (layers, tokens) = normalized.values.dim();
    for span in spans {
        if span.end > tokens || span.start >= span.end {
            return Err(AttributionError::SpanMismatch {
                start: span.start,
                end: span.end,
                tokens,
            });
        }
    }
    let mut values = Array2::zeros((layers, spans.len()));
    for l in 0..layers {
        for (i, span) in spans.iter().enumerate() {
            let mut sum = 0.0;
            for s in span.start..span.end {
                sum += normalized.values[[l, s]];
            }
            values[[l, i]] = sum;
        }
    }
    let mut special_token_mass = vec![0.0; layers];
    for &s in special_tokens {
        if s >= tokens {
            return Err(AttributionError::SpanMismatch {
                start: s,
                end: s + 1,
                tokens,
            });
        }
        for l in 0..layers {
            special_token_mass[l] += normalized.values[[l, s]];
        }
    }
    Ok(WordConductance {
        values,
        window_id,
        normalization_denominators: normalized.denominators.clone(),
        special_token_mass,
    })
}
