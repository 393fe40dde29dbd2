//! Self-contained oracle checks over the built-in reference model, runnable
//! without any downloaded checkpoint. Backs the `poscond verify` command;
//! the acceptance suite drives the same functions.
//!
//! The brute-force oracle integrates the conductance path with a very
//! high-count left-Riemann sum assembled here, independently of the
//! quadrature accumulation in `attribution`.

use ndarray::Array2;
use rayon::prelude::*;

use crate::attribution::{
    aggregate_words, compute_raw_conductance, normalize, NormalizationMode, QuadratureRule,
};
use crate::corpus::{ingest_text, Genre, RuleTagger};
use crate::model::tiny::TinyBackend;
use crate::model::{
    BaselinePolicy, ModelBackend, ModelError, PredictionTarget, TokenSpan, TokenizedWindow,
};
use crate::testing::ToyLinearBackend;
use crate::windowing::{build_tensor, AttributionSettings, BuildOptions};

/// Result of one verification check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
}

impl CheckOutcome {
    fn pass(name: &'static str, details: String) -> Self {
        CheckOutcome {
            name,
            passed: true,
            details,
        }
    }

    fn fail(name: &'static str, details: String) -> Self {
        CheckOutcome {
            name,
            passed: false,
            details,
        }
    }

    fn from(name: &'static str, passed: bool, details: String) -> Self {
        CheckOutcome {
            name,
            passed,
            details,
        }
    }
}

/// Left-Riemann path integration at `steps` evaluations, accumulating the
/// gradient-tangent dot products directly from path evaluations.
pub fn brute_force_conductance(
    backend: &dyn ModelBackend,
    window: &TokenizedWindow,
    target: &PredictionTarget,
    steps: usize,
) -> Result<Array2<f64>, ModelError> {
    let layers = backend.handle().layer_count;
    let tokens = window.token_ids.len();
    let alphas: Vec<f64> = (0..steps).map(|k| k as f64 / steps as f64).collect();
    let partials: Result<Vec<Array2<f64>>, ModelError> = alphas
        .par_chunks(2048)
        .map(|block| {
            let mut acc = Array2::<f64>::zeros((layers, tokens));
            for &alpha in block {
                let eval = backend.evaluate_path_point(window, target, alpha)?;
                for l in 0..layers {
                    let grad = &eval.layer_gradients[l];
                    let tang = &eval.layer_tangents[l];
                    for s in 0..tokens {
                        acc[[l, s]] += grad.row(s).dot(&tang.row(s));
                    }
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = Array2::<f64>::zeros((layers, tokens));
    for part in partials? {
        total += &part;
    }
    Ok(total / steps as f64)
}

/// A fixed reference window over the tiny model with the pad-token baseline.
pub fn reference_window(words: &[&str]) -> (TinyBackend, TokenizedWindow, PredictionTarget) {
    let backend = TinyBackend::new();
    let mut window = backend
        .tokenize_window(words, false)
        .expect("reference window tokenizes");
    window.baseline = backend
        .make_baseline(&window, BaselinePolicy::PadTokenEmbedding)
        .expect("tiny model always has an end-of-text embedding");
    let target = backend.predict_next(&window).expect("prediction succeeds");
    (backend, window, target)
}

pub const ORACLE_WORDS: [&str; 6] = ["the", "quick", "brown", "fox", "jumps", "over"];
pub const ORACLE_STEPS: usize = 100_000;

fn check_quadrature_rules() -> CheckOutcome {
    let name = "quadrature_rules";
    for rule in [
        QuadratureRule::RiemannLeft,
        QuadratureRule::RiemannTrapezoid,
        QuadratureRule::GaussLegendre,
    ] {
        for steps in [2usize, 16, 50] {
            let Ok(nodes) = crate::attribution::nodes_weights(rule, steps) else {
                return CheckOutcome::fail(name, format!("{rule:?} at {steps} steps failed"));
            };
            let sum: f64 = nodes.iter().map(|(_, w)| w).sum();
            if (sum - 1.0).abs() > 1e-12 {
                return CheckOutcome::fail(
                    name,
                    format!("{rule:?} weights sum to {sum} at {steps} steps"),
                );
            }
        }
    }
    // 5-point Gauss-Legendre integrates x^7 over [0,1] exactly.
    let nodes = crate::attribution::nodes_weights(QuadratureRule::GaussLegendre, 5).unwrap();
    let est: f64 = nodes.iter().map(|(a, w)| w * a.powi(7)).sum();
    CheckOutcome::from(
        name,
        (est - 0.125).abs() < 1e-13,
        format!("gauss(5) on x^7: {est} vs 0.125"),
    )
}

fn check_toy_linear_closed_form() -> CheckOutcome {
    let name = "toy_linear_closed_form";
    let weight = Array2::from_shape_fn((5, 3), |(i, j)| ((i * 5 + j * 2) % 7) as f64 / 3.5 - 1.0);
    let backend = ToyLinearBackend::new(weight);
    let words: Vec<String> = (0..5).map(|i| format!("t{i}")).collect();
    let refs: Vec<&str> = words.iter().map(String::as_str).collect();
    let window = backend.tokenize_window(&refs, false).unwrap();
    let target = backend.predict_next(&window).unwrap();
    let mut worst = 0.0_f64;
    for (rule, steps) in [
        (QuadratureRule::RiemannLeft, 7usize),
        (QuadratureRule::RiemannTrapezoid, 33),
        (QuadratureRule::GaussLegendre, 50),
    ] {
        let raw = match compute_raw_conductance(&backend, &window, &target, steps, rule) {
            Ok(raw) => raw,
            Err(e) => return CheckOutcome::fail(name, e.to_string()),
        };
        for s in 0..5 {
            let expected = backend.weight.row(s).dot(&window.embeddings.row(s));
            worst = worst.max((raw.values[[0, s]] - expected).abs());
        }
    }
    CheckOutcome::from(
        name,
        worst < 1e-12,
        format!("max deviation from w_s . x_s: {worst:.3e}"),
    )
}

fn check_finite_differences() -> CheckOutcome {
    let name = "finite_difference_gradients";
    let (backend, window, target) = reference_window(&ORACLE_WORDS);
    let weights = backend.weights();
    let direction = &window.embeddings - &window.baseline;
    let h = 1e-4;
    let mut worst = 0.0_f64;
    for &alpha in &[0.35, 0.8] {
        let f_at = |a: f64| {
            let x = &window.baseline + &(&direction * a);
            weights.target_logit(&weights.forward(&x), target.token_id)
        };
        let eval = backend
            .evaluate_path_point(&window, &target, alpha)
            .unwrap();
        let analytic: f64 = eval.layer_gradients[0]
            .iter()
            .zip(eval.layer_tangents[0].iter())
            .map(|(g, t)| g * t)
            .sum();
        let numeric = (f_at(alpha + h) - f_at(alpha - h)) / (2.0 * h);
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    CheckOutcome::from(
        name,
        worst < 1e-5,
        format!("max relative d f/d alpha error: {worst:.3e}"),
    )
}

fn check_path_endpoints() -> CheckOutcome {
    let name = "path_endpoint_consistency";
    let (backend, window, target) = reference_window(&ORACLE_WORDS);
    let eval = backend.evaluate_path_point(&window, &target, 1.0).unwrap();
    let direct = backend.weights().forward(&window.embeddings);
    let mut worst = 0.0_f64;
    for (l, act) in eval.layer_activations.iter().enumerate() {
        for (a, b) in act.iter().zip(direct.hidden[l + 1].iter()) {
            worst = worst.max((a - b).abs() / b.abs().max(1e-12));
        }
    }
    CheckOutcome::from(
        name,
        worst < 1e-6,
        format!("max relative activation deviation at alpha=1: {worst:.3e}"),
    )
}

fn check_conservation() -> CheckOutcome {
    let name = "conservation_256_trapezoid";
    let (backend, window, target) = reference_window(&ORACLE_WORDS);
    let raw = compute_raw_conductance(
        &backend,
        &window,
        &target,
        256,
        QuadratureRule::RiemannTrapezoid,
    )
    .unwrap();
    let f_x = raw.target_logit_at_one.unwrap();
    let f_base = raw.target_logit_at_zero.unwrap();
    let delta = f_x - f_base;
    let mut worst = 0.0_f64;
    for l in 0..backend.handle().layer_count {
        let total: f64 = raw.values.row(l).sum();
        worst = worst.max((total - delta).abs() / delta.abs());
    }
    CheckOutcome::from(
        name,
        worst < 0.02,
        format!("max relative conservation error {worst:.3e} (f(x)-f(x') = {delta:.4})"),
    )
}

fn check_oracle_agreement(oracle: &Array2<f64>) -> CheckOutcome {
    let name = "trapezoid64_vs_left_riemann_100k";
    let (backend, window, target) = reference_window(&ORACLE_WORDS);
    let raw = compute_raw_conductance(
        &backend,
        &window,
        &target,
        64,
        QuadratureRule::RiemannTrapezoid,
    )
    .unwrap();
    let max_abs = (&raw.values - oracle)
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    CheckOutcome::from(
        name,
        max_abs < 1e-3,
        format!("max abs deviation {max_abs:.3e} (tolerance 1e-3)"),
    )
}

fn check_convergence(oracle: &Array2<f64>) -> CheckOutcome {
    let name = "quadrature_convergence_16_to_128";
    let (backend, window, target) = reference_window(&ORACLE_WORDS);
    let mut errors = Vec::new();
    for steps in [16usize, 32, 64, 128] {
        let raw = compute_raw_conductance(
            &backend,
            &window,
            &target,
            steps,
            QuadratureRule::RiemannTrapezoid,
        )
        .unwrap();
        let err = (&raw.values - oracle)
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        errors.push(err);
    }
    let monotone = errors.windows(2).all(|w| w[1] <= w[0]);
    CheckOutcome::from(
        name,
        monotone,
        format!("max-abs errors at 16/32/64/128 steps: {errors:?}"),
    )
}

fn check_normalization_partition(fixtures: usize) -> CheckOutcome {
    let name = "normalization_partition_randomized";
    let mut state = 0x5eed_cafe_f00du64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    for fixture in 0..fixtures {
        let layers = 1 + fixture % 5;
        let tokens = 2 + fixture % 23;
        let mut values = Array2::zeros((layers, tokens));
        for l in 0..layers {
            loop {
                for s in 0..tokens {
                    values[[l, s]] = next() * 4.0;
                }
                if values.row(l).sum().abs() >= 1e-6 {
                    break;
                }
            }
        }
        let raw = crate::attribution::RawConductance {
            values,
            quadrature_steps: 2,
            quadrature_rule: QuadratureRule::RiemannLeft,
            target_logit_at_one: None,
            target_logit_at_zero: None,
        };
        let normalized = match normalize(&raw, NormalizationMode::Signed, 1e-8) {
            Ok(n) => n,
            Err(e) => return CheckOutcome::fail(name, format!("fixture {fixture}: {e}")),
        };
        // Random contiguous span partition.
        let mut spans = Vec::new();
        let mut start = 0usize;
        while start < tokens {
            let len = 1 + (next().abs() * 3.0) as usize;
            spans.push(TokenSpan {
                start,
                end: (start + len).min(tokens),
            });
            start = spans.last().unwrap().end;
        }
        let words = match aggregate_words(&normalized, &spans, &[], fixture) {
            Ok(w) => w,
            Err(e) => return CheckOutcome::fail(name, format!("fixture {fixture}: {e}")),
        };
        for l in 0..layers {
            let token_sum = normalized.values.row(l).sum();
            if (token_sum - 1.0).abs() > 1e-9 {
                return CheckOutcome::fail(
                    name,
                    format!("fixture {fixture} layer {l}: token sum {token_sum}"),
                );
            }
            let grouped: f64 = spans
                .iter()
                .map(|sp| {
                    (sp.start..sp.end)
                        .map(|s| normalized.values[[l, s]])
                        .sum::<f64>()
                })
                .sum();
            let word_sum: f64 = words.values.row(l).iter().sum();
            if word_sum != grouped {
                return CheckOutcome::fail(
                    name,
                    format!("fixture {fixture} layer {l}: word sum differs from token sum"),
                );
            }
        }
    }
    CheckOutcome::pass(name, format!("{fixtures} randomized fixtures held"))
}

fn check_end_to_end_build() -> CheckOutcome {
    let name = "tiny_end_to_end_tensor";
    let tagger = RuleTagger::new();
    let raw = "the small boat drifted past the old stone bridge at dawn";
    let text = match ingest_text(raw, "verify", Genre::Narrative, Some(&tagger)) {
        Ok(t) => t,
        Err(e) => return CheckOutcome::fail(name, e.to_string()),
    };
    let backend = TinyBackend::new();
    let p = 6;
    let options = BuildOptions {
        settings: AttributionSettings {
            quadrature: crate::attribution::QuadratureSpec {
                rule: QuadratureRule::GaussLegendre,
                steps: 8,
            },
            ..Default::default()
        },
        ..Default::default()
    };
    let tensor = match build_tensor(&text, &backend, p, &options) {
        Ok(t) => t,
        Err(e) => return CheckOutcome::fail(name, e.to_string()),
    };
    let n = text.word_count();
    if tensor.data.dim() != (2, n - 2 * p + 2, p) {
        return CheckOutcome::fail(name, format!("unexpected shape {:?}", tensor.data.dim()));
    }
    if tensor.data.iter().any(|v| !v.is_finite()) {
        return CheckOutcome::fail(name, "tensor has non-finite cells".into());
    }
    let again = match build_tensor(&text, &backend, p, &options) {
        Ok(t) => t,
        Err(e) => return CheckOutcome::fail(name, e.to_string()),
    };
    if tensor.data != again.data {
        return CheckOutcome::fail(name, "rebuild was not bit-identical".into());
    }
    // The final block feeds the logit only through the last position, so its
    // profile must be exactly one-hot at relative position P.
    let profile = match crate::analysis::positional_profile(&tensor) {
        Ok(p) => p,
        Err(e) => return CheckOutcome::fail(name, e.to_string()),
    };
    let last_layer = 1;
    for pos in 0..p - 1 {
        if profile.means[[last_layer, pos]].abs() > 1e-12 {
            return CheckOutcome::fail(
                name,
                format!(
                    "final layer leaked mass to position {}: {}",
                    pos + 1,
                    profile.means[[last_layer, pos]]
                ),
            );
        }
    }
    let rec = match crate::analysis::primacy_recency(&profile, 0.2) {
        Ok(m) => m,
        Err(e) => return CheckOutcome::fail(name, e.to_string()),
    };
    let final_rec = rec.recency[last_layer];
    CheckOutcome::from(
        name,
        (final_rec - 1.0).abs() < 1e-12,
        format!("final-layer recency fraction {final_rec}"),
    )
}

/// Runs the oracle suite; `oracle_steps` controls the brute-force count
/// (100000 for the full run).
pub fn run_all(oracle_steps: usize) -> Vec<CheckOutcome> {
    let mut outcomes = vec![
        check_quadrature_rules(),
        check_toy_linear_closed_form(),
        check_finite_differences(),
        check_path_endpoints(),
        check_conservation(),
    ];
    let (backend, window, target) = reference_window(&ORACLE_WORDS);
    match brute_force_conductance(&backend, &window, &target, oracle_steps) {
        Ok(oracle) => {
            outcomes.push(check_oracle_agreement(&oracle));
            outcomes.push(check_convergence(&oracle));
        }
        Err(e) => {
            outcomes.push(CheckOutcome::fail(
                "trapezoid64_vs_left_riemann_100k",
                e.to_string(),
            ));
            outcomes.push(CheckOutcome::fail(
                "quadrature_convergence_16_to_128",
                "oracle unavailable".into(),
            ));
        }
    }
    outcomes.push(check_normalization_partition(200));
    outcomes.push(check_end_to_end_build());
    outcomes
}
