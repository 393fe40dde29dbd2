//! GPT-2 backend: loads a standard checkpoint directory (`config.json`,
//! `model.safetensors`, `vocab.json`, `merges.txt`) and serves the backend
//! interface on CPU in f64.
//!
//! Weight lookup accepts both bare tensor names (`h.0.ln_1.weight`) and the
//! `transformer.`-prefixed variant. Attention mask buffers (`attn.bias`,
//! `attn.masked_bias`) are ignored.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};

use super::bpe::ByteLevelBpe;
use super::net::{BlockWeights, TransformerConfig, TransformerWeights};
use super::{
    transformer_path_point, transformer_predict, BaselinePolicy, ModelBackend, ModelError,
    ModelHandle, PathEvaluation, PredictionTarget, TokenSpan, TokenizedWindow,
};

const END_OF_TEXT: &str = "<|endoftext|>";

struct TensorInfo {
    dtype: String,
    shape: Vec<usize>,
    start: usize,
    end: usize,
}

/// Minimal reader for the safetensors container: an 8-byte little-endian
/// header length, a JSON table of dtype/shape/offsets, then the raw buffer.
struct SafeTensorFile {
    tensors: HashMap<String, TensorInfo>,
    data: Vec<u8>,
}

impl SafeTensorFile {
    fn parse(bytes: Vec<u8>) -> Result<Self, ModelError> {
        if bytes.len() < 8 {
            return Err(ModelError::WeightsLoad("safetensors file too short".into()));
        }
        let header_len = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
        if bytes.len() < 8 + header_len {
            return Err(ModelError::WeightsLoad(
                "safetensors header exceeds file size".into(),
            ));
        }
        let header: serde_json::Value = serde_json::from_slice(&bytes[8..8 + header_len])
            .map_err(|e| ModelError::WeightsLoad(format!("safetensors header: {e}")))?;
        let obj = header
            .as_object()
            .ok_or_else(|| ModelError::WeightsLoad("safetensors header is not an object".into()))?;
        let mut tensors = HashMap::new();
        for (name, meta) in obj {
            if name == "__metadata__" {
                continue;
            }
            let dtype = meta["dtype"]
                .as_str()
                .ok_or_else(|| ModelError::WeightsLoad(format!("{name}: missing dtype")))?
                .to_string();
            let shape: Vec<usize> = meta["shape"]
                .as_array()
                .ok_or_else(|| ModelError::WeightsLoad(format!("{name}: missing shape")))?
                .iter()
                .map(|v| v.as_u64().unwrap_or(0) as usize)
                .collect();
            let offs = meta["data_offsets"]
                .as_array()
                .ok_or_else(|| ModelError::WeightsLoad(format!("{name}: missing offsets")))?;
            let start = offs[0].as_u64().unwrap_or(0) as usize;
            let end = offs[1].as_u64().unwrap_or(0) as usize;
            tensors.insert(
                name.clone(),
                TensorInfo {
                    dtype,
                    shape,
                    start,
                    end,
                },
            );
        }
        let data = bytes[8 + header_len..].to_vec();
        Ok(SafeTensorFile { tensors, data })
    }

    fn info(&self, name: &str) -> Result<&TensorInfo, ModelError> {
        self.tensors
            .get(name)
            .or_else(|| self.tensors.get(&format!("transformer.{name}")))
            .ok_or_else(|| ModelError::WeightsLoad(format!("tensor {name:?} not found")))
    }

    fn values(&self, name: &str) -> Result<Vec<f64>, ModelError> {
        let info = self.info(name)?;
        if info.end > self.data.len() || info.start > info.end {
            return Err(ModelError::WeightsLoad(format!(
                "tensor {name:?} offsets out of range"
            )));
        }
        let raw = &self.data[info.start..info.end];
        match info.dtype.as_str() {
            "F32" => Ok(raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect()),
            "F64" => Ok(raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()),
            other => Err(ModelError::WeightsLoad(format!(
                "tensor {name:?} has unsupported dtype {other}"
            ))),
        }
    }

    fn array2(&self, name: &str) -> Result<Array2<f64>, ModelError> {
        let shape = self.info(name)?.shape.clone();
        if shape.len() != 2 {
            return Err(ModelError::WeightsLoad(format!(
                "tensor {name:?} is not rank 2 (shape {shape:?})"
            )));
        }
        let values = self.values(name)?;
        Array2::from_shape_vec((shape[0], shape[1]), values)
            .map_err(|e| ModelError::WeightsLoad(format!("tensor {name:?}: {e}")))
    }

    fn array1(&self, name: &str) -> Result<Array1<f64>, ModelError> {
        let shape = self.info(name)?.shape.clone();
        if shape.len() != 1 {
            return Err(ModelError::WeightsLoad(format!(
                "tensor {name:?} is not rank 1 (shape {shape:?})"
            )));
        }
        Ok(Array1::from_vec(self.values(name)?))
    }
}

/// GPT-2 style checkpoint served on CPU.
pub struct Gpt2Backend {
    weights: TransformerWeights,
    bpe: ByteLevelBpe,
    handle: ModelHandle,
    eot_id: usize,
}

impl Gpt2Backend {
    /// Loads `config.json`, `model.safetensors`, `vocab.json`, `merges.txt`
    /// from a directory.
    pub fn load_dir(dir: &Path) -> Result<Self, ModelError> {
        let read = |file: &str| -> Result<Vec<u8>, ModelError> {
            std::fs::read(dir.join(file))
                .map_err(|e| ModelError::WeightsLoad(format!("{}: {e}", dir.join(file).display())))
        };
        let config: serde_json::Value = serde_json::from_slice(&read("config.json")?)
            .map_err(|e| ModelError::WeightsLoad(format!("config.json: {e}")))?;
        let get_usize = |key: &str| config[key].as_u64().map(|v| v as usize);
        let n_layers = get_usize("n_layer")
            .ok_or_else(|| ModelError::WeightsLoad("config.json: missing n_layer".into()))?;
        let n_heads = get_usize("n_head")
            .ok_or_else(|| ModelError::WeightsLoad("config.json: missing n_head".into()))?;
        let d_model = get_usize("n_embd")
            .ok_or_else(|| ModelError::WeightsLoad("config.json: missing n_embd".into()))?;
        let vocab_size = get_usize("vocab_size")
            .ok_or_else(|| ModelError::WeightsLoad("config.json: missing vocab_size".into()))?;
        let max_positions = get_usize("n_positions").or_else(|| get_usize("n_ctx")).unwrap_or(1024);
        let ln_eps = config["layer_norm_epsilon"].as_f64().unwrap_or(1e-5);

        let st = SafeTensorFile::parse(read("model.safetensors")?)?;
        let token_embedding = st.array2("wte.weight")?;
        let position_embedding = st.array2("wpe.weight")?;
        let mut blocks = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            blocks.push(BlockWeights {
                ln1_gain: st.array1(&format!("h.{i}.ln_1.weight"))?,
                ln1_bias: st.array1(&format!("h.{i}.ln_1.bias"))?,
                attn_qkv_w: st.array2(&format!("h.{i}.attn.c_attn.weight"))?,
                attn_qkv_b: st.array1(&format!("h.{i}.attn.c_attn.bias"))?,
                attn_proj_w: st.array2(&format!("h.{i}.attn.c_proj.weight"))?,
                attn_proj_b: st.array1(&format!("h.{i}.attn.c_proj.bias"))?,
                ln2_gain: st.array1(&format!("h.{i}.ln_2.weight"))?,
                ln2_bias: st.array1(&format!("h.{i}.ln_2.bias"))?,
                mlp_fc_w: st.array2(&format!("h.{i}.mlp.c_fc.weight"))?,
                mlp_fc_b: st.array1(&format!("h.{i}.mlp.c_fc.bias"))?,
                mlp_proj_w: st.array2(&format!("h.{i}.mlp.c_proj.weight"))?,
                mlp_proj_b: st.array1(&format!("h.{i}.mlp.c_proj.bias"))?,
            });
        }
        let weights = TransformerWeights {
            config: TransformerConfig {
                vocab_size,
                max_positions,
                d_model,
                n_heads,
                n_layers,
                ln_eps,
            },
            token_embedding,
            position_embedding,
            blocks,
            final_ln_gain: st.array1("ln_f.weight")?,
            final_ln_bias: st.array1("ln_f.bias")?,
        };
        if weights.token_embedding.dim() != (vocab_size, d_model) {
            return Err(ModelError::WeightsLoad(format!(
                "wte shape {:?} does not match config ({vocab_size}, {d_model})",
                weights.token_embedding.dim()
            )));
        }

        let vocab_json = String::from_utf8_lossy(&read("vocab.json")?).into_owned();
        let merges_txt = String::from_utf8_lossy(&read("merges.txt")?).into_owned();
        let bpe = ByteLevelBpe::from_files(&vocab_json, &merges_txt)?;
        let eot_id = bpe.token_id(END_OF_TEXT).unwrap_or(vocab_size - 1);

        let handle = ModelHandle {
            model_id: "gpt2".to_string(),
            layer_count: n_layers,
            embedding_dim: d_model,
            tokenizer_id: "gpt2-bpe".to_string(),
        };
        Ok(Gpt2Backend {
            weights,
            bpe,
            handle,
            eot_id,
        })
    }

    /// Conventional checkpoint locations: `POSCOND_GPT2_DIR`, then
    /// `$POSCOND_CACHE_DIR/gpt2`, then `~/.cache/poscond/gpt2`.
    pub fn locate() -> Option<PathBuf> {
        let mut candidates = Vec::new();
        if let Ok(dir) = std::env::var("POSCOND_GPT2_DIR") {
            candidates.push(PathBuf::from(dir));
        }
        if let Ok(cache) = std::env::var("POSCOND_CACHE_DIR") {
            candidates.push(PathBuf::from(cache).join("gpt2"));
        }
        if let Ok(home) = std::env::var("HOME") {
            candidates.push(PathBuf::from(home).join(".cache/poscond/gpt2"));
        }
        candidates.into_iter().find(|dir| checkpoint_present(dir))
    }

    pub fn weights(&self) -> &TransformerWeights {
        &self.weights
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        self.bpe.decode(ids)
    }
}

/// True when all four checkpoint files exist under `dir`.
pub fn checkpoint_present(dir: &Path) -> bool {
    ["config.json", "model.safetensors", "vocab.json", "merges.txt"]
        .iter()
        .all(|f| dir.join(f).is_file())
}

impl ModelBackend for Gpt2Backend {
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
            token_ids.push(self.eot_id);
        }
        for (i, word) in words.iter().enumerate() {
            if word.is_empty() {
                return Err(ModelError::AlignmentFailure(format!(
                    "word {} has an empty surface form",
                    i + 1
                )));
            }
            // Words after the first carry their separating space, matching
            // how the text would tokenize as one string.
            let piece = if i == 0 {
                (*word).to_string()
            } else {
                format!(" {word}")
            };
            let ids = self.bpe.encode(&piece)?;
            if ids.is_empty() {
                return Err(ModelError::AlignmentFailure(format!(
                    "word {:?} produced no tokens",
                    word
                )));
            }
            let start = token_ids.len();
            token_ids.extend(ids);
            word_spans.push(TokenSpan {
                start,
                end: token_ids.len(),
            });
        }
        if token_ids.len() > self.weights.config.max_positions {
            return Err(ModelError::BackendFailure(format!(
                "window of {} tokens exceeds the model's {} positions",
                token_ids.len(),
                self.weights.config.max_positions
            )));
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
                let row = self.weights.token_embedding.row(self.eot_id);
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
    use crate::model::bpe::byte_lexicon;
    use std::io::Write;

    /// Packs a checkpoint directory in the GPT-2 file layout with small random
    /// weights, exercising the full load path.
    fn write_synthetic_checkpoint(dir: &Path) {
        let n_layer = 2usize;
        let n_embd = 8usize;
        let vocab = byte_lexicon().len() + 1; // leaves + <|endoftext|>

        let config = serde_json::json!({
            "n_layer": n_layer, "n_head": 2, "n_embd": n_embd,
            "vocab_size": vocab, "n_positions": 64,
            "layer_norm_epsilon": 1e-5,
        });
        std::fs::write(dir.join("config.json"), config.to_string()).unwrap();

        let mut vocab_map = serde_json::Map::new();
        for (i, c) in byte_lexicon().iter().enumerate() {
            vocab_map.insert(c.to_string(), serde_json::json!(i));
        }
        vocab_map.insert(END_OF_TEXT.into(), serde_json::json!(vocab - 1));
        std::fs::write(
            dir.join("vocab.json"),
            serde_json::Value::Object(vocab_map).to_string(),
        )
        .unwrap();
        std::fs::write(dir.join("merges.txt"), "#version: 0.2\n").unwrap();

        // Deterministic pseudo-random weights.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.4
        };
        let mut header = serde_json::Map::new();
        let mut buffer: Vec<u8> = Vec::new();
        let put = |header: &mut serde_json::Map<String, serde_json::Value>,
                       buffer: &mut Vec<u8>,
                       name: &str,
                       shape: Vec<usize>,
                       vals: Vec<f64>| {
            let start = buffer.len();
            for v in &vals {
                buffer.extend_from_slice(&(*v as f32).to_le_bytes());
            }
            header.insert(
                name.to_string(),
                serde_json::json!({
                    "dtype": "F32", "shape": shape,
                    "data_offsets": [start, buffer.len()],
                }),
            );
        };
        let mut tensor = |header: &mut _, buffer: &mut _, name: &str, shape: Vec<usize>| {
            let n: usize = shape.iter().product();
            let vals: Vec<f64> = (0..n).map(|_| next()).collect();
            put(header, buffer, name, shape, vals);
        };
        tensor(&mut header, &mut buffer, "wte.weight", vec![vocab, n_embd]);
        tensor(&mut header, &mut buffer, "wpe.weight", vec![64, n_embd]);
        for i in 0..n_layer {
            for (name, shape) in [
                (format!("h.{i}.ln_1.weight"), vec![n_embd]),
                (format!("h.{i}.ln_1.bias"), vec![n_embd]),
                (format!("h.{i}.attn.c_attn.weight"), vec![n_embd, 3 * n_embd]),
                (format!("h.{i}.attn.c_attn.bias"), vec![3 * n_embd]),
                (format!("h.{i}.attn.c_proj.weight"), vec![n_embd, n_embd]),
                (format!("h.{i}.attn.c_proj.bias"), vec![n_embd]),
                (format!("h.{i}.ln_2.weight"), vec![n_embd]),
                (format!("h.{i}.ln_2.bias"), vec![n_embd]),
                (format!("h.{i}.mlp.c_fc.weight"), vec![n_embd, 4 * n_embd]),
                (format!("h.{i}.mlp.c_fc.bias"), vec![4 * n_embd]),
                (format!("h.{i}.mlp.c_proj.weight"), vec![4 * n_embd, n_embd]),
                (format!("h.{i}.mlp.c_proj.bias"), vec![n_embd]),
            ] {
                tensor(&mut header, &mut buffer, &name, shape);
            }
        }
        tensor(&mut header, &mut buffer, "ln_f.weight", vec![n_embd]);
        tensor(&mut header, &mut buffer, "ln_f.bias", vec![n_embd]);

        let header_bytes = serde_json::Value::Object(header).to_string().into_bytes();
        let mut f = std::fs::File::create(dir.join("model.safetensors")).unwrap();
        f.write_all(&(header_bytes.len() as u64).to_le_bytes()).unwrap();
        f.write_all(&header_bytes).unwrap();
        f.write_all(&buffer).unwrap();
    }

    #[test]
    fn loads_and_serves_a_checkpoint_directory() {
        let dir = tempfile::tempdir().unwrap();
        write_synthetic_checkpoint(dir.path());
        assert!(checkpoint_present(dir.path()));

        let backend = Gpt2Backend::load_dir(dir.path()).unwrap();
        assert_eq!(backend.handle().layer_count, 2);
        assert_eq!(backend.handle().embedding_dim, 8);

        let window = backend.tokenize_window(&["the", "cat,"], false).unwrap();
        assert!(window.spans_partition_tokens());
        assert_eq!(window.word_spans.len(), 2);
        let span1 = &window.token_ids[window.word_spans[1].start..window.word_spans[1].end];
        assert_eq!(backend.decode(span1), " cat,");

        let t1 = backend.predict_next(&window).unwrap();
        let t2 = backend.predict_next(&window).unwrap();
        assert_eq!(t1.token_id, t2.token_id);

        let mut window = window;
        window.baseline = backend
            .make_baseline(&window, BaselinePolicy::PadTokenEmbedding)
            .unwrap();
        let eval = backend.evaluate_path_point(&window, &t1, 1.0).unwrap();
        assert_eq!(eval.layer_gradients.len(), 2);
        assert!((eval.target_logit - t1.logit).abs() < 1e-9);
    }

    #[test]
    fn missing_tensor_is_a_load_error() {
        let dir = tempfile::tempdir().unwrap();
        write_synthetic_checkpoint(dir.path());
        // Truncate the weights file so the header no longer parses.
        std::fs::write(dir.path().join("model.safetensors"), [0u8; 4]).unwrap();
        assert!(matches!(
            Gpt2Backend::load_dir(dir.path()),
            Err(ModelError::WeightsLoad(_))
        ));
    }
}
