//! GPT-2-style decoder-only transformer in f64: forward pass with activation
//! caching, reverse-mode gradients of a target logit with respect to every
//! block output, and forward-mode directional derivatives (JVP) of every
//! block output with respect to the input embeddings.
//!
//! Architecture: token + learned position embeddings, pre-LayerNorm blocks
//! (causal multi-head attention, then a 4x GELU MLP, each with a residual
//! add), final LayerNorm, and a logit head tied to the token embedding.
//! All linear weights are stored `[in, out]` and applied as `x . W + b`,
//! matching the GPT-2 checkpoint layout.

use ndarray::{s, Array1, Array2};

#[derive(Debug, Clone)]
pub struct TransformerConfig {
    pub vocab_size: usize,
    pub max_positions: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ln_eps: f64,
}

#[derive(Debug, Clone)]
pub struct BlockWeights {
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    /// `[d_model, 3 d_model]`, columns ordered query | key | value.
    pub attn_qkv_w: Array2<f64>,
    pub attn_qkv_b: Array1<f64>,
    pub attn_proj_w: Array2<f64>,
    pub attn_proj_b: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
    /// `[d_model, 4 d_model]`.
    pub mlp_fc_w: Array2<f64>,
    pub mlp_fc_b: Array1<f64>,
    /// `[4 d_model, d_model]`.
    pub mlp_proj_w: Array2<f64>,
    pub mlp_proj_b: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct TransformerWeights {
    pub config: TransformerConfig,
    /// `[vocab, d_model]`; also the (tied) logit head.
    pub token_embedding: Array2<f64>,
    /// `[max_positions, d_model]`.
    pub position_embedding: Array2<f64>,
    pub blocks: Vec<BlockWeights>,
    pub final_ln_gain: Array1<f64>,
    pub final_ln_bias: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct LnCache {
    /// Normalized rows before gain/bias.
    normed: Array2<f64>,
    inv_std: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    ln1: LnCache,
    /// `[tokens, 3 d_model]`.
    qkv: Array2<f64>,
    /// Post-softmax attention, one `[tokens, tokens]` matrix per head.
    attn_probs: Vec<Array2<f64>>,
    ln2: LnCache,
    /// MLP pre-activation `[tokens, 4 d_model]`.
    mlp_pre: Array2<f64>,
}

/// Cached forward pass over one window.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Residual stream states h_0..h_L; `hidden[l]` is the output of block l
    /// (`hidden[0]` is embeddings + position embeddings).
    pub hidden: Vec<Array2<f64>>,
    blocks: Vec<BlockCache>,
    /// Final LayerNorm output `[tokens, d_model]`.
    pub final_normed: Array2<f64>,
    final_ln: LnCache,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// GPT-2's tanh-approximated GELU.
fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

fn gelu_prime(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_K * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

fn layer_norm(
    x: &Array2<f64>,
    gain: &Array1<f64>,
    bias: &Array1<f64>,
    eps: f64,
) -> (Array2<f64>, LnCache) {
    let (t, d) = x.dim();
    let mut normed = Array2::zeros((t, d));
    let mut out = Array2::zeros((t, d));
    let mut inv_std = Array1::zeros(t);
    for i in 0..t {
        let row = x.row(i);
        let mu = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
        let rstd = 1.0 / (var + eps).sqrt();
        inv_std[i] = rstd;
        for j in 0..d {
            let xh = (x[[i, j]] - mu) * rstd;
            normed[[i, j]] = xh;
            out[[i, j]] = gain[j] * xh + bias[j];
        }
    }
    (out, LnCache { normed, inv_std })
}

fn layer_norm_backward(d_out: &Array2<f64>, gain: &Array1<f64>, cache: &LnCache) -> Array2<f64> {
    let (t, d) = d_out.dim();
    let mut dx = Array2::zeros((t, d));
    for i in 0..t {
        let rstd = cache.inv_std[i];
        let mut mean_dxh = 0.0;
        let mut mean_dxh_xh = 0.0;
        for j in 0..d {
            let dxh = d_out[[i, j]] * gain[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * cache.normed[[i, j]];
        }
        mean_dxh /= d as f64;
        mean_dxh_xh /= d as f64;
        for j in 0..d {
            let dxh = d_out[[i, j]] * gain[j];
            dx[[i, j]] = rstd * (dxh - mean_dxh - cache.normed[[i, j]] * mean_dxh_xh);
        }
    }
    dx
}

fn layer_norm_jvp(x_dot: &Array2<f64>, gain: &Array1<f64>, cache: &LnCache) -> Array2<f64> {
    let (t, d) = x_dot.dim();
    let mut out = Array2::zeros((t, d));
    for i in 0..t {
        let rstd = cache.inv_std[i];
        let mean_dot = x_dot.row(i).sum() / d as f64;
        // centered input c_j = normed_j / rstd
        let mut mean_c_cdot = 0.0;
        for j in 0..d {
            let c = cache.normed[[i, j]] / rstd;
            mean_c_cdot += c * (x_dot[[i, j]] - mean_dot);
        }
        mean_c_cdot /= d as f64;
        let rstd_dot = -rstd.powi(3) * mean_c_cdot;
        for j in 0..d {
            let c = cache.normed[[i, j]] / rstd;
            let xh_dot = (x_dot[[i, j]] - mean_dot) * rstd + c * rstd_dot;
            out[[i, j]] = gain[j] * xh_dot;
        }
    }
    out
}

/// Causal multi-head attention over a projected qkv matrix. Returns the
/// concatenated per-head context `[tokens, d_model]` and the attention
/// probabilities per head.
fn attention_forward(qkv: &Array2<f64>, n_heads: usize) -> (Array2<f64>, Vec<Array2<f64>>) {
    let t = qkv.nrows();
    let d = qkv.ncols() / 3;
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut ctx = Array2::zeros((t, d));
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qs = qkv.slice(s![.., h * dh..(h + 1) * dh]);
        let ks = qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
        let vs = qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
        let mut scores = qs.dot(&ks.t());
        scores *= scale;
        let mut p = Array2::zeros((t, t));
        for i in 0..t {
            let mut max_v = f64::NEG_INFINITY;
            for j in 0..=i {
                max_v = max_v.max(scores[[i, j]]);
            }
            let mut denom = 0.0;
            for j in 0..=i {
                let e = (scores[[i, j]] - max_v).exp();
                p[[i, j]] = e;
                denom += e;
            }
            for j in 0..=i {
                p[[i, j]] /= denom;
            }
        }
        let ctx_h = p.dot(&vs);
        ctx.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&ctx_h);
        probs.push(p);
    }
    (ctx, probs)
}

/// Gradient with respect to the qkv matrix, given the gradient of the
/// concatenated context.
fn attention_backward(
    d_ctx: &Array2<f64>,
    qkv: &Array2<f64>,
    probs: &[Array2<f64>],
    n_heads: usize,
) -> Array2<f64> {
    let t = qkv.nrows();
    let d = qkv.ncols() / 3;
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut d_qkv = Array2::zeros((t, 3 * d));
    for h in 0..n_heads {
        let qs = qkv.slice(s![.., h * dh..(h + 1) * dh]);
        let ks = qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
        let vs = qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
        let p = &probs[h];
        let d_ctx_h = d_ctx.slice(s![.., h * dh..(h + 1) * dh]);

        let dp = d_ctx_h.dot(&vs.t());
        let dv = p.t().dot(&d_ctx_h);
        // softmax backward per row; masked entries have p = 0, so they
        // contribute nothing.
        let mut ds = Array2::zeros((t, t));
        for i in 0..t {
            let mut inner = 0.0;
            for j in 0..t {
                inner += dp[[i, j]] * p[[i, j]];
            }
            for j in 0..t {
                ds[[i, j]] = p[[i, j]] * (dp[[i, j]] - inner);
            }
        }
        let dq = ds.dot(&ks).mapv(|v| v * scale);
        let dk = ds.t().dot(&qs).mapv(|v| v * scale);
        d_qkv.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&dq);
        d_qkv
            .slice_mut(s![.., d + h * dh..d + (h + 1) * dh])
            .assign(&dk);
        d_qkv
            .slice_mut(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh])
            .assign(&dv);
    }
    d_qkv
}

/// Tangent of the concatenated context, given the tangent of the qkv matrix.
fn attention_jvp(
    qkv_dot: &Array2<f64>,
    qkv: &Array2<f64>,
    probs: &[Array2<f64>],
    n_heads: usize,
) -> Array2<f64> {
    let t = qkv.nrows();
    let d = qkv.ncols() / 3;
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut ctx_dot = Array2::zeros((t, d));
    for h in 0..n_heads {
        let qs = qkv.slice(s![.., h * dh..(h + 1) * dh]);
        let ks = qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
        let vs = qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
        let qs_dot = qkv_dot.slice(s![.., h * dh..(h + 1) * dh]);
        let ks_dot = qkv_dot.slice(s![.., d + h * dh..d + (h + 1) * dh]);
        let vs_dot = qkv_dot.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
        let p = &probs[h];

        let mut s_dot = qs_dot.dot(&ks.t()) + qs.dot(&ks_dot.t());
        s_dot *= scale;
        // softmax JVP per row; masked entries have p = 0 and drop out.
        let mut p_dot = Array2::zeros((t, t));
        for i in 0..t {
            let mut inner = 0.0;
            for j in 0..t {
                inner += p[[i, j]] * s_dot[[i, j]];
            }
            for j in 0..t {
                p_dot[[i, j]] = p[[i, j]] * (s_dot[[i, j]] - inner);
            }
        }
        let ctx_h_dot = p_dot.dot(&vs) + p.dot(&vs_dot);
        ctx_dot
            .slice_mut(s![.., h * dh..(h + 1) * dh])
            .assign(&ctx_h_dot);
    }
    ctx_dot
}

impl TransformerWeights {
    /// Token embedding rows for a window, `[tokens, d_model]`.
    pub fn embed_tokens(&self, ids: &[usize]) -> Array2<f64> {
        let d = self.config.d_model;
        let mut x = Array2::zeros((ids.len(), d));
        for (i, &id) in ids.iter().enumerate() {
            x.row_mut(i).assign(&self.token_embedding.row(id));
        }
        x
    }

    fn block_forward(&self, bw: &BlockWeights, h: &Array2<f64>) -> (Array2<f64>, BlockCache) {
        let (a, ln1) = layer_norm(h, &bw.ln1_gain, &bw.ln1_bias, self.config.ln_eps);
        let qkv = a.dot(&bw.attn_qkv_w) + &bw.attn_qkv_b;
        let (ctx, attn_probs) = attention_forward(&qkv, self.config.n_heads);
        let attn_out = ctx.dot(&bw.attn_proj_w) + &bw.attn_proj_b;
        let h_mid = h + &attn_out;
        let (b, ln2) = layer_norm(&h_mid, &bw.ln2_gain, &bw.ln2_bias, self.config.ln_eps);
        let z = b.dot(&bw.mlp_fc_w) + &bw.mlp_fc_b;
        let m = z.mapv(gelu);
        let mlp_out = m.dot(&bw.mlp_proj_w) + &bw.mlp_proj_b;
        let h_out = &h_mid + &mlp_out;
        (
            h_out,
            BlockCache {
                ln1,
                qkv,
                attn_probs,
                ln2,
                mlp_pre: z,
            },
        )
    }

    /// Gradient with respect to the block input, given the gradient with
    /// respect to the block output.
    fn block_backward(
        &self,
        bw: &BlockWeights,
        cache: &BlockCache,
        d_out: &Array2<f64>,
    ) -> Array2<f64> {
        // MLP sublayer.
        let dm = d_out.dot(&bw.mlp_proj_w.t());
        let dz = &dm * &cache.mlp_pre.mapv(gelu_prime);
        let db = dz.dot(&bw.mlp_fc_w.t());
        let d_h_mid = d_out + &layer_norm_backward(&db, &bw.ln2_gain, &cache.ln2);
        // Attention sublayer.
        let d_ctx = d_h_mid.dot(&bw.attn_proj_w.t());
        let d_qkv = attention_backward(&d_ctx, &cache.qkv, &cache.attn_probs, self.config.n_heads);
        let da = d_qkv.dot(&bw.attn_qkv_w.t());
        &d_h_mid + &layer_norm_backward(&da, &bw.ln1_gain, &cache.ln1)
    }

    /// Tangent of the block output, given the tangent of the block input.
    fn block_jvp(&self, bw: &BlockWeights, cache: &BlockCache, h_dot: &Array2<f64>) -> Array2<f64> {
        let a_dot = layer_norm_jvp(h_dot, &bw.ln1_gain, &cache.ln1);
        let qkv_dot = a_dot.dot(&bw.attn_qkv_w);
        let ctx_dot = attention_jvp(&qkv_dot, &cache.qkv, &cache.attn_probs, self.config.n_heads);
        let attn_out_dot = ctx_dot.dot(&bw.attn_proj_w);
        let h_mid_dot = h_dot + &attn_out_dot;
        let b_dot = layer_norm_jvp(&h_mid_dot, &bw.ln2_gain, &cache.ln2);
        let z_dot = b_dot.dot(&bw.mlp_fc_w);
        let m_dot = &z_dot * &cache.mlp_pre.mapv(gelu_prime);
        let mlp_out_dot = m_dot.dot(&bw.mlp_proj_w);
        &h_mid_dot + &mlp_out_dot
    }

    /// Forward pass over token embeddings (positional embeddings are added
    /// here). Panics if the window exceeds `max_positions`.
    pub fn forward(&self, token_embeddings: &Array2<f64>) -> ForwardPass {
        let t = token_embeddings.nrows();
        assert!(
            t <= self.config.max_positions,
            "window of {} tokens exceeds the model's {} positions",
            t,
            self.config.max_positions
        );
        let h0 = token_embeddings + &self.position_embedding.slice(s![0..t, ..]);
        let mut hidden = Vec::with_capacity(self.config.n_layers + 1);
        let mut caches = Vec::with_capacity(self.config.n_layers);
        hidden.push(h0);
        for bw in &self.blocks {
            let (h_next, cache) = self.block_forward(bw, hidden.last().unwrap());
            hidden.push(h_next);
            caches.push(cache);
        }
        let (final_normed, final_ln) = layer_norm(
            hidden.last().unwrap(),
            &self.final_ln_gain,
            &self.final_ln_bias,
            self.config.ln_eps,
        );
        ForwardPass {
            hidden,
            blocks: caches,
            final_normed,
            final_ln,
        }
    }

    /// Full logits at the final position, `[vocab]`.
    pub fn last_logits(&self, fwd: &ForwardPass) -> Array1<f64> {
        let last = fwd.final_normed.nrows() - 1;
        self.token_embedding.dot(&fwd.final_normed.row(last))
    }

    /// Pre-softmax logit of `target` at the final position.
    pub fn target_logit(&self, fwd: &ForwardPass, target: usize) -> f64 {
        let last = fwd.final_normed.nrows() - 1;
        fwd.final_normed
            .row(last)
            .dot(&self.token_embedding.row(target))
    }

    /// Gradients of the target logit with respect to each block output
    /// (index 0 is layer 1) and with respect to the input token embeddings.
    pub fn backward_layers(
        &self,
        fwd: &ForwardPass,
        target: usize,
    ) -> (Vec<Array2<f64>>, Array2<f64>) {
        let (t, d) = fwd.final_normed.dim();
        let l = self.blocks.len();
        let mut d_final = Array2::zeros((t, d));
        d_final
            .row_mut(t - 1)
            .assign(&self.token_embedding.row(target));
        let mut dh = layer_norm_backward(&d_final, &self.final_ln_gain, &fwd.final_ln);
        let mut grads: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); l];
        grads[l - 1] = dh.clone();
        for idx in (0..l).rev() {
            dh = self.block_backward(&self.blocks[idx], &fwd.blocks[idx], &dh);
            if idx >= 1 {
                grads[idx - 1] = dh.clone();
            }
        }
        // h_0 = embeddings + positional, so dh is also the embedding gradient.
        (grads, dh)
    }

    /// Tangents of each block output for an input-embedding perturbation
    /// `direction` (index 0 is layer 1).
    pub fn jvp_layers(&self, fwd: &ForwardPass, direction: &Array2<f64>) -> Vec<Array2<f64>> {
        let mut h_dot = direction.clone();
        let mut tangents = Vec::with_capacity(self.blocks.len());
        for (idx, bw) in self.blocks.iter().enumerate() {
            h_dot = self.block_jvp(bw, &fwd.blocks[idx], &h_dot);
            tangents.push(h_dot.clone());
        }
        tangents
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    /// Minimal config with hand-settable weights.
    fn zeroed_weights(vocab: usize, d: usize, heads: usize, layers: usize) -> TransformerWeights {
        let config = TransformerConfig {
            vocab_size: vocab,
            max_positions: 16,
            d_model: d,
            n_heads: heads,
            n_layers: layers,
            ln_eps: 1e-5,
        };
        let blocks = (0..layers)
            .map(|_| BlockWeights {
                ln1_gain: Array1::ones(d),
                ln1_bias: Array1::zeros(d),
                attn_qkv_w: Array2::zeros((d, 3 * d)),
                attn_qkv_b: Array1::zeros(3 * d),
                attn_proj_w: Array2::zeros((d, d)),
                attn_proj_b: Array1::zeros(d),
                ln2_gain: Array1::ones(d),
                ln2_bias: Array1::zeros(d),
                mlp_fc_w: Array2::zeros((d, 4 * d)),
                mlp_fc_b: Array1::zeros(4 * d),
                mlp_proj_w: Array2::zeros((4 * d, d)),
                mlp_proj_b: Array1::zeros(d),
            })
            .collect();
        TransformerWeights {
            config,
            token_embedding: Array2::zeros((vocab, d)),
            position_embedding: Array2::zeros((16, d)),
            blocks,
            final_ln_gain: Array1::ones(d),
            final_ln_bias: Array1::zeros(d),
        }
    }

    /// With zeroed attention and MLP weights every block is the identity, so
    /// the target logit is LayerNorm(x_last) . wte[target]: computable by
    /// hand.
    #[test]
    fn hand_set_weights_forward_matches_closed_form() {
        let mut w = zeroed_weights(4, 4, 2, 2);
        // Identity-ish vocabulary embedding.
        w.token_embedding = Array2::eye(4);
        let x = array![[0.5, 0.5, 0.5, 0.5], [3.0, 1.0, -1.0, 1.0]];
        let fwd = w.forward(&x);
        // Blocks are identities: the residual stream never changes.
        for h in &fwd.hidden {
            assert_eq!(h, &x);
        }
        // LayerNorm of [3, 1, -1, 1]: mu = 1, var = 2.
        let rstd = 1.0 / (2.0_f64 + 1e-5).sqrt();
        let expected = [2.0 * rstd, 0.0, -2.0 * rstd, 0.0];
        let logits = w.last_logits(&fwd);
        for (got, want) in logits.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        }
        // Greedy argmax is token 0; its logit equals 2 / sqrt(2 + eps).
        assert_abs_diff_eq!(w.target_logit(&fwd, 0), 2.0 * rstd, epsilon = 1e-12);
    }

    #[test]
    fn attention_is_causal() {
        let t = 5;
        let d = 8;
        let mut qkv = Array2::zeros((t, 3 * d));
        // Arbitrary non-degenerate values.
        for i in 0..t {
            for j in 0..3 * d {
                qkv[[i, j]] = ((i * 31 + j * 7) % 13) as f64 / 13.0 - 0.4;
            }
        }
        let (_, probs) = attention_forward(&qkv, 2);
        for p in &probs {
            for i in 0..t {
                let mut row_sum = 0.0;
                for j in 0..t {
                    if j > i {
                        assert_eq!(p[[i, j]], 0.0);
                    }
                    row_sum += p[[i, j]];
                }
                assert_abs_diff_eq!(row_sum, 1.0, epsilon = 1e-12);
            }
        }
    }

    fn demo_weights() -> TransformerWeights {
        crate::model::tiny::reference_weights()
    }

    fn demo_input(w: &TransformerWeights, t: usize) -> Array2<f64> {
        let ids: Vec<usize> = (0..t).map(|i| (i * 17 + 3) % w.config.vocab_size).collect();
        w.embed_tokens(&ids)
    }

    #[test]
    fn embedding_gradient_matches_finite_differences() {
        let w = demo_weights();
        let x = demo_input(&w, 6);
        let target = 11;
        let fwd = w.forward(&x);
        let (_, dx) = w.backward_layers(&fwd, target);
        let h = 1e-4;
        // Probe a spread of coordinates.
        for &(i, j) in &[(0, 0), (2, 5), (5, 15), (3, 7), (5, 0)] {
            let mut xp = x.clone();
            xp[[i, j]] += h;
            let fp = w.target_logit(&w.forward(&xp), target);
            let mut xm = x.clone();
            xm[[i, j]] -= h;
            let fm = w.target_logit(&w.forward(&xm), target);
            let numeric = (fp - fm) / (2.0 * h);
            let analytic = dx[[i, j]];
            let denom = numeric.abs().max(analytic.abs()).max(1e-8);
            assert!(
                ((numeric - analytic) / denom).abs() < 1e-5,
                "fd mismatch at ({i},{j}): numeric {numeric} analytic {analytic}"
            );
        }
    }

    #[test]
    fn layer_gradients_match_finite_differences_through_chain() {
        // d f / d alpha computed as <df/dy_l, dy_l/dalpha> must agree with a
        // finite difference of f along the path, and be identical for every
        // layer (each block output is a complete cut of the graph).
        let w = demo_weights();
        let x = demo_input(&w, 6);
        let baseline = Array2::zeros(x.dim());
        let target = 7;
        let dir = &x - &baseline;
        for &alpha in &[0.3, 0.7] {
            let xa = &baseline + &(&dir * alpha);
            let fwd = w.forward(&xa);
            let (grads, _) = w.backward_layers(&fwd, target);
            let tangents = w.jvp_layers(&fwd, &dir);
            let h = 1e-4;
            let fp = w.target_logit(&w.forward(&(&baseline + &(&dir * (alpha + h)))), target);
            let fm = w.target_logit(&w.forward(&(&baseline + &(&dir * (alpha - h)))), target);
            let numeric = (fp - fm) / (2.0 * h);
            for (g, td) in grads.iter().zip(tangents.iter()) {
                let analytic: f64 = (g * td).sum();
                let denom = numeric.abs().max(analytic.abs()).max(1e-8);
                assert!(
                    ((numeric - analytic) / denom).abs() < 1e-5,
                    "chain fd mismatch: numeric {numeric} analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn jvp_matches_finite_difference_of_block_outputs() {
        let w = demo_weights();
        let x = demo_input(&w, 5);
        let mut dir = Array2::zeros(x.dim());
        for (i, v) in dir.iter_mut().enumerate() {
            *v = ((i % 7) as f64 - 3.0) / 11.0;
        }
        let fwd = w.forward(&x);
        let tangents = w.jvp_layers(&fwd, &dir);
        let h = 1e-5;
        let fwd_p = w.forward(&(&x + &(&dir * h)));
        let fwd_m = w.forward(&(&x - &(&dir * h)));
        for (l, td) in tangents.iter().enumerate() {
            let numeric = (&fwd_p.hidden[l + 1] - &fwd_m.hidden[l + 1]) / (2.0 * h);
            let max_err = (&numeric - td)
                .iter()
                .fold(0.0_f64, |m, v| m.max(v.abs()));
            let scale = td.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-8);
            assert!(
                max_err / scale < 1e-5,
                "jvp fd mismatch at layer {}: {max_err}",
                l + 1
            );
        }
    }
}
