//! Sliding-window planning and conductance tensor assembly.
//!
//! A plan slides a P-word window at stride 1 over the text; boundary words
//! (those that do not occupy every relative position 1..=P across windows)
//! are removed, so the retained words are exactly the indices i with
//! P <= i <= N - P + 1. Each retained word meets each relative position in
//! exactly one window, which is what lets the tensor isolate position from
//! word identity.

pub mod format;

use std::path::{Path, PathBuf};

use ndarray::Array3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::{
    aggregate_words, compute_raw_conductance, normalize, AttributionError, NormalizationMode,
    QuadratureSpec, WordConductance,
};
use crate::corpus::CorpusText;
use crate::model::{BaselinePolicy, ModelBackend};

pub use format::{load_tensor, save_tensor, TENSOR_MAGIC};

#[derive(Debug, Error)]
pub enum WindowingError {
    #[error("text has {words} words, shorter than the {window_len}-word window")]
    TextTooShort { words: usize, window_len: usize },
    #[error("window length must be at least 2, got {0}")]
    WindowTooShort(usize),
    #[error("only stride 1 is supported, got {0}")]
    StrideUnsupported(usize),
    #[error("{failed} of {total} windows failed attribution (more than 10%)")]
    TooManyFailures { failed: usize, total: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a conductance tensor file (magic {found:?})")]
    FormatVersionMismatch { found: String },
    #[error("tensor payload failed integrity checks (truncated or corrupted)")]
    ChecksumMismatch,
    #[error("tensor header: {0}")]
    HeaderEncode(#[source] serde_json::Error),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
}

/// One window: 0-based id and the 1-based text index of its first word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub id: usize,
    pub start: usize,
}

/// Enumerated windows plus the retained-word index set.
#[derive(Debug, Clone)]
pub struct WindowPlan {
    pub window_len: usize,
    pub stride: usize,
    pub text_len: usize,
    pub windows: Vec<Window>,
    /// 1-based text indices of words occupying every relative position.
    pub retained: Vec<usize>,
}

/// Enumerates windows over a text of `text_len` words and derives the
/// retained-word set.
pub fn plan_windows(
    text_len: usize,
    window_len: usize,
    stride: usize,
) -> Result<WindowPlan, WindowingError> {
    if stride != 1 {
        return Err(WindowingError::StrideUnsupported(stride));
    }
    if window_len < 2 {
        return Err(WindowingError::WindowTooShort(window_len));
    }
    if text_len < window_len {
        return Err(WindowingError::TextTooShort {
            words: text_len,
            window_len,
        });
    }
    let windows = (1..=text_len - window_len + 1)
        .map(|start| Window {
            id: start - 1,
            start,
        })
        .collect();
    let retained = if text_len + 1 >= 2 * window_len {
        (window_len..=text_len - window_len + 1).collect()
    } else {
        Vec::new()
    };
    Ok(WindowPlan {
        window_len,
        stride,
        text_len,
        windows,
        retained,
    })
}

/// Attribution configuration for a tensor build.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributionSettings {
    pub quadrature: QuadratureSpec,
    pub baseline: BaselinePolicy,
    pub normalization: NormalizationMode,
    pub epsilon_norm: f64,
    pub prepend_bos: bool,
}

impl Default for AttributionSettings {
    fn default() -> Self {
        AttributionSettings {
            quadrature: QuadratureSpec::default(),
            baseline: BaselinePolicy::PadTokenEmbedding,
            normalization: NormalizationMode::Signed,
            epsilon_norm: 1e-8,
            prepend_bos: false,
        }
    }
}

/// A window excluded from the tensor, with the failure reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedWindow {
    pub window_id: usize,
    pub start: usize,
    pub reason: String,
}

/// Provenance carried inside the tensor file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorManifest {
    pub text_id: String,
    pub model_id: String,
    pub tokenizer_id: String,
    pub baseline: BaselinePolicy,
    pub quadrature: QuadratureSpec,
    pub normalization: NormalizationMode,
    pub epsilon_norm: f64,
    pub prepend_bos: bool,
    pub stride: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config_hash: Option<String>,
    pub tool_version: String,
    pub skipped_windows: Vec<SkippedWindow>,
}

/// The L x W x P word-conductance tensor with its provenance.
///
/// Cells belonging to skipped windows hold NaN; analyses treat NaN as
/// missing. `word_index_map[w]` is the 1-based text index of tensor word w.
#[derive(Debug, Clone)]
pub struct ConductanceTensor {
    pub data: Array3<f64>,
    pub word_index_map: Vec<usize>,
    pub manifest: TensorManifest,
}

impl ConductanceTensor {
    pub fn layer_count(&self) -> usize {
        self.data.dim().0
    }

    pub fn word_count(&self) -> usize {
        self.data.dim().1
    }

    pub fn window_len(&self) -> usize {
        self.data.dim().2
    }
}

/// Options for [`build_tensor`].
#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    pub settings: AttributionSettings,
    /// Run-configuration hash stamped into the manifest.
    pub config_hash: Option<String>,
    /// When set, per-window token/word conductance is dumped as JSON here.
    pub dump_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct WindowDumpLayer {
    layer: usize,
    token_values: Vec<f64>,
    word_values: Vec<f64>,
}

#[derive(Serialize)]
struct WindowDump {
    window_id: usize,
    start: usize,
    target_token_id: usize,
    layers: Vec<WindowDumpLayer>,
}

fn attribute_window(
    backend: &dyn ModelBackend,
    words: &[&str],
    window_id: usize,
    start: usize,
    options: &BuildOptions,
) -> Result<WordConductance, AttributionError> {
    let settings = &options.settings;
    let mut window = backend.tokenize_window(words, settings.prepend_bos)?;
    window.baseline = backend.make_baseline(&window, settings.baseline)?;
    let target = backend.predict_next(&window)?;
    let raw = compute_raw_conductance(
        backend,
        &window,
        &target,
        settings.quadrature.steps,
        settings.quadrature.rule,
    )?;
    let normalized = normalize(&raw, settings.normalization, settings.epsilon_norm)?;
    let word = aggregate_words(
        &normalized,
        &window.word_spans,
        &window.special_tokens,
        window_id,
    )?;
    if let Some(dir) = &options.dump_dir {
        let dump = WindowDump {
            window_id,
            start,
            target_token_id: target.token_id,
            layers: (0..normalized.values.nrows())
                .map(|l| WindowDumpLayer {
                    layer: l + 1,
                    token_values: normalized.values.row(l).to_vec(),
                    word_values: word.values.row(l).to_vec(),
                })
                .collect(),
        };
        let path = dir.join(format!("window_{window_id:05}.json"));
        // A dump failure must not fail the build; it is a debugging aid.
        if let Ok(json) = serde_json::to_vec_pretty(&dump) {
            let _ = std::fs::write(path, json);
        }
    }
    Ok(word)
}

/// Runs attribution over every window of the plan and assembles the
/// L x W x P tensor. Failed windows go to the skipped log; the build aborts
/// only if more than 10% of windows fail.
pub fn build_tensor(
    text: &CorpusText,
    backend: &dyn ModelBackend,
    window_len: usize,
    options: &BuildOptions,
) -> Result<ConductanceTensor, WindowingError> {
    let plan = plan_windows(text.word_count(), window_len, 1)?;
    let surfaces = text.surfaces();
    if let Some(dir) = &options.dump_dir {
        std::fs::create_dir_all(dir).map_err(|e| WindowingError::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
    }

    let results: Vec<(Window, Result<WordConductance, AttributionError>)> = plan
        .windows
        .par_iter()
        .map(|window| {
            let words = &surfaces[window.start - 1..window.start - 1 + window_len];
            let result = attribute_window(backend, words, window.id, window.start, options);
            (*window, result)
        })
        .collect();

    let layers = backend.handle().layer_count;
    let word_count = plan.retained.len();
    let mut data = Array3::from_elem((layers, word_count, window_len), f64::NAN);
    let mut skipped = Vec::new();
    for (window, result) in results {
        match result {
            Ok(wc) => {
                for p in 0..window_len {
                    let text_index = window.start + p;
                    if text_index >= window_len && text_index <= plan.text_len - window_len + 1 {
                        let w_idx = text_index - window_len;
                        for l in 0..layers {
                            data[[l, w_idx, p]] = wc.values[[l, p]];
                        }
                    }
                }
            }
            Err(err) => skipped.push(SkippedWindow {
                window_id: window.id,
                start: window.start,
                reason: err.to_string(),
            }),
        }
    }
    let total = plan.windows.len();
    if skipped.len() * 10 > total {
        return Err(WindowingError::TooManyFailures {
            failed: skipped.len(),
            total,
        });
    }

    let handle = backend.handle();
    Ok(ConductanceTensor {
        data,
        word_index_map: plan.retained,
        manifest: TensorManifest {
            text_id: text.text_id.clone(),
            model_id: handle.model_id.clone(),
            tokenizer_id: handle.tokenizer_id.clone(),
            baseline: options.settings.baseline,
            quadrature: options.settings.quadrature,
            normalization: options.settings.normalization,
            epsilon_norm: options.settings.epsilon_norm,
            prepend_bos: options.settings.prepend_bos,
            stride: plan.stride,
            config_hash: options.config_hash.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            skipped_windows: skipped,
        },
    })
}

/// Recomputes one window standalone, for checking a tensor cell against an
/// independent single-window run.
pub fn attribute_single_window(
    text: &CorpusText,
    backend: &dyn ModelBackend,
    window_len: usize,
    start: usize,
    settings: &AttributionSettings,
) -> Result<WordConductance, WindowingError> {
    let surfaces = text.surfaces();
    if start == 0 || start - 1 + window_len > surfaces.len() {
        return Err(WindowingError::TextTooShort {
            words: surfaces.len(),
            window_len,
        });
    }
    let options = BuildOptions {
        settings: settings.clone(),
        config_hash: None,
        dump_dir: None,
    };
    let words = &surfaces[start - 1..start - 1 + window_len];
    Ok(attribute_window(backend, words, start - 1, start, &options)?)
}

pub fn tensor_file_name(text_id: &str) -> String {
    format!("{text_id}.pcond")
}

pub fn tensor_path(dir: &Path, text_id: &str) -> PathBuf {
    dir.join(tensor_file_name(text_id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest_text, Genre, RuleTagger};
    use crate::model::tiny::TinyBackend;
    use crate::model::{ModelError, ModelHandle, PathEvaluation, PredictionTarget, TokenizedWindow};

    fn words_text(n: usize) -> CorpusText {
        let tagger = RuleTagger::new();
        let raw: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        ingest_text(&raw.join(" "), "synthetic", Genre::Narrative, Some(&tagger)).unwrap()
    }

    fn fast_gauss(steps: usize) -> AttributionSettings {
        AttributionSettings {
            quadrature: QuadratureSpec {
                rule: crate::attribution::QuadratureRule::GaussLegendre,
                steps,
            },
            ..Default::default()
        }
    }

    #[test]
    fn plan_examples() {
        let plan = plan_windows(20, 10, 1).unwrap();
        assert_eq!(plan.windows.len(), 11);
        assert_eq!(plan.retained, vec![10, 11]);

        let plan = plan_windows(10, 10, 1).unwrap();
        assert_eq!(plan.windows.len(), 1);
        assert!(plan.retained.is_empty());

        let plan = plan_windows(957, 10, 1).unwrap();
        assert_eq!(plan.windows.len(), 948);
        assert_eq!(plan.retained.len(), 939);
    }

    #[test]
    fn plan_rejects_bad_inputs() {
        assert!(matches!(
            plan_windows(5, 10, 1),
            Err(WindowingError::TextTooShort {
                words: 5,
                window_len: 10
            })
        ));
        assert!(matches!(
            plan_windows(20, 1, 1),
            Err(WindowingError::WindowTooShort(1))
        ));
        assert!(matches!(
            plan_windows(20, 10, 2),
            Err(WindowingError::StrideUnsupported(2))
        ));
    }

    /// Enumeration oracle: a word is retained iff it occupies each relative
    /// position exactly once across all windows.
    #[test]
    fn retained_words_cover_every_position_exactly_once() {
        for (n, p) in [(20usize, 10usize), (957, 10), (25, 5), (9, 5), (10, 4)] {
            let plan = plan_windows(n, p, 1).unwrap();
            let mut coverage = vec![vec![0usize; p]; n + 1];
            for w in &plan.windows {
                for rel in 0..p {
                    coverage[w.start + rel][rel] += 1;
                }
            }
            let retained: std::collections::HashSet<usize> =
                plan.retained.iter().copied().collect();
            for i in 1..=n {
                let full = coverage[i].iter().all(|&c| c == 1);
                assert_eq!(
                    retained.contains(&i),
                    full,
                    "word {i} in (N={n}, P={p}): coverage {:?}",
                    coverage[i]
                );
            }
            assert_eq!(plan.retained.len(), (n + 2).saturating_sub(2 * p));
        }
    }

    #[test]
    fn build_tensor_shape_and_population() {
        let backend = TinyBackend::new();
        let text = words_text(10);
        let options = BuildOptions {
            settings: fast_gauss(4),
            ..Default::default()
        };
        let tensor = build_tensor(&text, &backend, 5, &options).unwrap();
        assert_eq!(tensor.data.dim(), (2, 2, 5));
        assert_eq!(tensor.word_index_map, vec![5, 6]);
        assert!(tensor.data.iter().all(|v| v.is_finite()));
        assert!(tensor.manifest.skipped_windows.is_empty());
    }

    #[test]
    fn tensor_cells_match_standalone_window_runs() {
        let backend = TinyBackend::new();
        let text = words_text(10);
        let settings = AttributionSettings {
            quadrature: QuadratureSpec {
                rule: crate::attribution::QuadratureRule::RiemannTrapezoid,
                steps: 8,
            },
            ..Default::default()
        };
        let options = BuildOptions {
            settings: settings.clone(),
            ..Default::default()
        };
        let tensor = build_tensor(&text, &backend, 5, &options).unwrap();
        // Word 5 at relative position 2 lives in the window starting at 4.
        let standalone = attribute_single_window(&text, &backend, 5, 4, &settings).unwrap();
        for l in 0..2 {
            assert_eq!(tensor.data[[l, 0, 1]], standalone.values[[l, 1]]);
        }
    }

    #[test]
    fn build_is_deterministic() {
        let backend = TinyBackend::new();
        let text = words_text(12);
        let options = BuildOptions {
            settings: fast_gauss(6),
            ..Default::default()
        };
        let a = build_tensor(&text, &backend, 6, &options).unwrap();
        let b = build_tensor(&text, &backend, 6, &options).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let backend = TinyBackend::new();
        let text = words_text(9);
        let options = BuildOptions {
            settings: fast_gauss(3),
            ..Default::default()
        };
        let tensor = build_tensor(&text, &backend, 4, &options).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = tensor_path(dir.path(), "synthetic");
        save_tensor(&tensor, &path).unwrap();
        let loaded = load_tensor(&path).unwrap();
        // Compare raw bits, not float equality (NaN-safe).
        let bits_a: Vec<u64> = tensor.data.iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u64> = loaded.data.iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
        assert_eq!(loaded.word_index_map, tensor.word_index_map);
        assert_eq!(loaded.manifest.model_id, "tiny-ref");
        assert_eq!(loaded.manifest.tool_version, env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn truncated_file_is_checksum_mismatch() {
        let backend = TinyBackend::new();
        let text = words_text(9);
        let options = BuildOptions {
            settings: fast_gauss(3),
            ..Default::default()
        };
        let tensor = build_tensor(&text, &backend, 4, &options).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pcond");
        save_tensor(&tensor, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 16);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_tensor(&path),
            Err(WindowingError::ChecksumMismatch)
        ));
    }

    #[test]
    fn wrong_magic_is_version_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pcond");
        std::fs::write(&path, b"NOTMAGIC____________").unwrap();
        assert!(matches!(
            load_tensor(&path),
            Err(WindowingError::FormatVersionMismatch { .. })
        ));
    }

    /// Backend that fails on windows containing a trigger word; exercises the
    /// skipped-window log.
    struct FlakyBackend {
        inner: TinyBackend,
        trigger: usize,
    }

    impl crate::model::ModelBackend for FlakyBackend {
        fn handle(&self) -> &ModelHandle {
            self.inner.handle()
        }

        fn tokenize_window(
            &self,
            words: &[&str],
            prepend_bos: bool,
        ) -> Result<TokenizedWindow, ModelError> {
            if words.iter().any(|w| *w == format!("w{}", self.trigger)) {
                return Err(ModelError::BackendFailure("injected failure".into()));
            }
            self.inner.tokenize_window(words, prepend_bos)
        }

        fn make_baseline(
            &self,
            window: &TokenizedWindow,
            policy: crate::model::BaselinePolicy,
        ) -> Result<ndarray::Array2<f64>, ModelError> {
            self.inner.make_baseline(window, policy)
        }

        fn predict_next(&self, window: &TokenizedWindow) -> Result<PredictionTarget, ModelError> {
            self.inner.predict_next(window)
        }

        fn evaluate_path_point(
            &self,
            window: &TokenizedWindow,
            target: &PredictionTarget,
            alpha: f64,
        ) -> Result<PathEvaluation, ModelError> {
            self.inner.evaluate_path_point(window, target, alpha)
        }
    }

    #[test]
    fn failed_windows_are_logged_and_leave_nan_cells() {
        // 50 words, P = 4: 47 windows; w0 appears only in the first window,
        // so exactly one window fails (under the 10% threshold).
        let text = words_text(50);
        let backend = FlakyBackend {
            inner: TinyBackend::new(),
            trigger: 0,
        };
        let options = BuildOptions {
            settings: fast_gauss(3),
            ..Default::default()
        };
        let tensor = build_tensor(&text, &backend, 4, &options).unwrap();
        assert_eq!(tensor.manifest.skipped_windows.len(), 1);
        assert_eq!(tensor.manifest.skipped_windows[0].window_id, 0);
        // Window 1 covers text indices 1..=4; the only retained word among
        // them is 4 (tensor word 0) at relative position 4. Exactly those
        // cells are missing.
        for l in 0..2 {
            for w in 0..tensor.word_count() {
                for p in 0..4 {
                    let expected_hole = w == 0 && p == 3;
                    assert_eq!(
                        tensor.data[[l, w, p]].is_nan(),
                        expected_hole,
                        "cell ({l},{w},{p})"
                    );
                }
            }
        }

        // A trigger in mid-text knocks out 4 windows and more cells.
        let backend = FlakyBackend {
            inner: TinyBackend::new(),
            trigger: 24,
        };
        let tensor = build_tensor(&text, &backend, 4, &options).unwrap();
        assert_eq!(tensor.manifest.skipped_windows.len(), 4);
        let nan_count = tensor.data.iter().filter(|v| v.is_nan()).count();
        // 4 failed windows x 4 positions x 2 layers, all on retained words.
        assert_eq!(nan_count, 32);
    }

    #[test]
    fn too_many_failures_aborts() {
        let text = words_text(12);
        // The toy backend only accepts windows sized to its weight matrix;
        // a 5-word window fails everywhere.
        let backend = crate::testing::ToyLinearBackend::new(ndarray::Array2::zeros((4, 3)));
        let err = build_tensor(&text, &backend, 5, &BuildOptions::default());
        assert!(matches!(
            err,
            Err(WindowingError::TooManyFailures { failed: 8, total: 8 })
        ));
    }

    #[test]
    fn dump_writes_window_json() {
        let backend = TinyBackend::new();
        let text = words_text(8);
        let dir = tempfile::tempdir().unwrap();
        let options = BuildOptions {
            settings: fast_gauss(3),
            dump_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let _ = build_tensor(&text, &backend, 4, &options).unwrap();
        let dump: serde_json::Value = serde_json::from_slice(
            &std::fs::read(dir.path().join("window_00000.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(dump["window_id"], 0);
        assert_eq!(dump["layers"].as_array().unwrap().len(), 2);
        assert_eq!(
            dump["layers"][0]["word_values"].as_array().unwrap().len(),
            4
        );
    }
}
