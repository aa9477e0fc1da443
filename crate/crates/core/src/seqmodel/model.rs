//! The encoder-decoder. The encoder reads text embeddings concatenated with
//! the 49 diagram slots; the decoder is causal over the target prefix and
//! cross-attends to the encoder output. Pre-norm blocks with SiLU feed-forward.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::diagram::{DiagramEmbedding, PatchFeaturizer, PATCH_GRID};
use super::tape::{NodeId, Tape, LOG_EPS};
use super::tensor::Tensor;
use crate::rng::{derive_seed, SplitMix64};
use crate::tokenizer::PAD;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Cap on text positions; diagram slots come on top of this.
    pub max_src_len: usize,
    pub max_tgt_len: usize,
    pub vocab_size: usize,
    /// Fixed at 49 (7×7 patches).
    pub patch_grid: usize,
    /// Seed of the frozen patch featurizer.
    pub featurizer_seed: u64,
}

impl ModelConfig {
    /// Desk-scale default: trains in minutes on one CPU core.
    pub fn desk_default(vocab_size: usize) -> Self {
        Self {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 256,
            max_src_len: 192,
            max_tgt_len: 48,
            vocab_size,
            patch_grid: PATCH_GRID,
            featurizer_seed: 0x6e0_5eed,
        }
    }

    /// Minimal config for gradient checks and toy decoding tests.
    pub fn tiny(vocab_size: usize) -> Self {
        Self {
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            d_ff: 32,
            max_src_len: 24,
            max_tgt_len: 12,
            vocab_size,
            patch_grid: PATCH_GRID,
            featurizer_seed: 0x6e0_5eed,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ModelError::BadConfig {
                message: format!(
                    "d_model {} must be a positive multiple of n_heads {}",
                    self.d_model, self.n_heads
                ),
            });
        }
        if self.patch_grid != PATCH_GRID {
            return Err(ModelError::BadConfig {
                message: format!("patch_grid must be {PATCH_GRID}, found {}", self.patch_grid),
            });
        }
        if self.vocab_size == 0 || self.n_layers == 0 || self.max_tgt_len < 2 {
            return Err(ModelError::BadConfig { message: "degenerate model dimensions".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad model config: {message}")]
    BadConfig { message: String },
    #[error("{side} length {len} exceeds the cap {cap}")]
    LengthOverflow { side: &'static str, len: usize, cap: usize },
    #[error("token id {id} out of vocabulary (size {vocab_size})")]
    TokenOutOfRange { id: u32, vocab_size: usize },
    #[error("target prefix must contain at least the start token")]
    EmptyTargetPrefix,
    #[error("diagram embedding width {found} does not match d_model {expected}")]
    DiagramWidthMismatch { found: usize, expected: usize },
}

/// One named trainable tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
}

/// The full trainable state, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub entries: Vec<Param>,
}

impl Parameters {
    pub fn index_of(&self, name: &str) -> usize {
        self.entries
            .iter()
            .position(|p| p.name == name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"))
    }

    pub fn total_len(&self) -> usize {
        self.entries.iter().map(|p| p.tensor.numel()).sum()
    }
}

/// Encoder-decoder with a frozen diagram featurizer.
#[derive(Debug, Clone)]
pub struct SeqModel {
    pub config: ModelConfig,
    pub params: Parameters,
    featurizer: PatchFeaturizer,
}

/// A built forward pass: the tape, the logits node, and the tape leaf of
/// every parameter (parallel to `params.entries`).
pub(crate) struct ForwardPass {
    pub tape: Tape,
    pub logits: NodeId,
    pub param_leaves: Vec<NodeId>,
}

impl SeqModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let d = config.d_model;
        let v = config.vocab_size;
        let enc_positions = config.max_src_len + config.patch_grid;
        let mut entries: Vec<Param> = Vec::new();
        fn add(entries: &mut Vec<Param>, seed: u64, name: String, rows: usize, cols: usize, scale: f64) {
            let mut rng = SplitMix64::new(derive_seed(seed, "param", &name));
            let tensor = if scale == 0.0 {
                Tensor::zeros(rows, cols)
            } else {
                Tensor::uniform(rows, cols, scale, &mut rng)
            };
            entries.push(Param { name, tensor });
        }
        let xavier = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();

        add(&mut entries, seed, "enc_embed".into(), v, d, 0.1);
        add(&mut entries, seed, "dec_embed".into(), v, d, 0.1);
        add(&mut entries, seed, "enc_pos".into(), enc_positions, d, 0.02);
        add(&mut entries, seed, "dec_pos".into(), config.max_tgt_len, d, 0.02);
        for layer in 0..config.n_layers {
            for w in ["wq", "wk", "wv", "wo"] {
                add(&mut entries, seed, format!("enc{layer}.self.{w}"), d, d, xavier(d, d));
            }
            add_ln(&mut entries, &format!("enc{layer}.ln1"), d);
            add_ln(&mut entries, &format!("enc{layer}.ln2"), d);
            add(&mut entries, seed, format!("enc{layer}.ffn.w1"), d, config.d_ff, xavier(d, config.d_ff));
            add(&mut entries, seed, format!("enc{layer}.ffn.b1"), 1, config.d_ff, 0.0);
            add(&mut entries, seed, format!("enc{layer}.ffn.w2"), config.d_ff, d, xavier(config.d_ff, d));
            add(&mut entries, seed, format!("enc{layer}.ffn.b2"), 1, d, 0.0);
        }
        add_ln(&mut entries, "enc_final", d);
        for layer in 0..config.n_layers {
            for block in ["self", "cross"] {
                for w in ["wq", "wk", "wv", "wo"] {
                    add(&mut entries, seed, format!("dec{layer}.{block}.{w}"), d, d, xavier(d, d));
                }
            }
            add_ln(&mut entries, &format!("dec{layer}.ln1"), d);
            add_ln(&mut entries, &format!("dec{layer}.ln2"), d);
            add_ln(&mut entries, &format!("dec{layer}.ln3"), d);
            add(&mut entries, seed, format!("dec{layer}.ffn.w1"), d, config.d_ff, xavier(d, config.d_ff));
            add(&mut entries, seed, format!("dec{layer}.ffn.b1"), 1, config.d_ff, 0.0);
            add(&mut entries, seed, format!("dec{layer}.ffn.w2"), config.d_ff, d, xavier(config.d_ff, d));
            add(&mut entries, seed, format!("dec{layer}.ffn.b2"), 1, d, 0.0);
        }
        add_ln(&mut entries, "dec_final", d);
        add(&mut entries, seed, "out.w".into(), d, v, 0.02);
        add(&mut entries, seed, "out.b".into(), 1, v, 0.0);

        let featurizer = PatchFeaturizer::from_seed(config.featurizer_seed, d);
        Ok(Self { config, params: Parameters { entries }, featurizer })
    }

    pub fn featurizer(&self) -> &PatchFeaturizer {
        &self.featurizer
    }

    /// Embed a decoded image with the frozen featurizer (`None` → zeros).
    pub fn embed_diagram(&self, image: Option<&image::RgbImage>) -> DiagramEmbedding {
        self.featurizer.embed(image)
    }

    /// Next-token distribution for each position of the target prefix.
    /// Every returned row is a probability distribution.
    pub fn forward(
        &self,
        src_ids: &[u32],
        diagram: &DiagramEmbedding,
        tgt_prefix_ids: &[u32],
    ) -> Result<Vec<Vec<f64>>, ModelError> {
        let pass = self.forward_tape(src_ids, diagram, tgt_prefix_ids)?;
        let mut tape = pass.tape;
        let probs = tape.softmax_rows(pass.logits);
        let value = tape.value(probs);
        Ok((0..value.rows).map(|r| value.row(r).to_vec()).collect())
    }

    /// Teacher-forced mean NLL of `tgt_ids`: the decoder reads `<bos>` plus
    /// the target shifted right and predicts each target token.
    pub fn teacher_forced_loss(
        &self,
        src_ids: &[u32],
        diagram: &DiagramEmbedding,
        tgt_ids: &[u32],
    ) -> Result<f64, ModelError> {
        let (loss, _) = self.teacher_forced(src_ids, diagram, tgt_ids, false)?;
        Ok(loss)
    }

    /// Teacher-forced loss plus the gradient of every parameter tensor,
    /// parallel to `params.entries`.
    pub fn teacher_forced_loss_and_grads(
        &self,
        src_ids: &[u32],
        diagram: &DiagramEmbedding,
        tgt_ids: &[u32],
    ) -> Result<(f64, Vec<Tensor>), ModelError> {
        let (loss, grads) = self.teacher_forced(src_ids, diagram, tgt_ids, true)?;
        Ok((loss, grads.expect("gradients requested")))
    }

    fn teacher_forced(
        &self,
        src_ids: &[u32],
        diagram: &DiagramEmbedding,
        tgt_ids: &[u32],
        with_grads: bool,
    ) -> Result<(f64, Option<Vec<Tensor>>), ModelError> {
        if tgt_ids.is_empty() {
            return Err(ModelError::EmptyTargetPrefix);
        }
        let mut prefix = Vec::with_capacity(tgt_ids.len());
        prefix.push(crate::tokenizer::BOS);
        prefix.extend_from_slice(&tgt_ids[..tgt_ids.len() - 1]);
        let pass = self.forward_tape(src_ids, diagram, &prefix)?;
        let targets: Vec<usize> = tgt_ids.iter().map(|&t| t as usize).collect();
        let include = vec![true; targets.len()];
        let mut tape = pass.tape;
        let loss_node = tape.nll_loss(pass.logits, &targets, &include);
        let loss = tape.value(loss_node).at(0, 0);
        if !with_grads {
            return Ok((loss, None));
        }
        let grads = tape.backward(loss_node);
        let per_param: Vec<Tensor> = pass
            .param_leaves
            .iter()
            .zip(&self.params.entries)
            .map(|(&leaf, param)| {
                grads[leaf.0]
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(param.tensor.rows, param.tensor.cols))
            })
            .collect();
        Ok((loss, Some(per_param)))
    }

    pub(crate) fn forward_tape(
        &self,
        src_ids: &[u32],
        diagram: &DiagramEmbedding,
        tgt_prefix_ids: &[u32],
    ) -> Result<ForwardPass, ModelError> {
        let cfg = &self.config;
        if src_ids.len() > cfg.max_src_len {
            return Err(ModelError::LengthOverflow {
                side: "source",
                len: src_ids.len(),
                cap: cfg.max_src_len,
            });
        }
        if tgt_prefix_ids.is_empty() {
            return Err(ModelError::EmptyTargetPrefix);
        }
        if tgt_prefix_ids.len() > cfg.max_tgt_len {
            return Err(ModelError::LengthOverflow {
                side: "target",
                len: tgt_prefix_ids.len(),
                cap: cfg.max_tgt_len,
            });
        }
        for &id in src_ids.iter().chain(tgt_prefix_ids) {
            if id as usize >= cfg.vocab_size {
                return Err(ModelError::TokenOutOfRange { id, vocab_size: cfg.vocab_size });
            }
        }
        if diagram.patches.cols != cfg.d_model || diagram.patches.rows != cfg.patch_grid {
            return Err(ModelError::DiagramWidthMismatch {
                found: diagram.patches.cols,
                expected: cfg.d_model,
            });
        }

        let mut tape = Tape::new();
        let param_leaves: Vec<NodeId> =
            self.params.entries.iter().map(|p| tape.leaf(p.tensor.clone())).collect();
        let leaf = |name: &str| param_leaves[self.params.index_of(name)];

        let text_len = src_ids.len();
        let enc_len = text_len + cfg.patch_grid;
        let tgt_len = tgt_prefix_ids.len();

        // Encoder input: [text embeddings ∥ diagram slots] + positions.
        // Diagram slots use the stable position rows past max_src_len.
        let src_idx: Vec<usize> = src_ids.iter().map(|&i| i as usize).collect();
        let text_emb = tape.gather(leaf("enc_embed"), &src_idx);
        let patches = tape.constant(diagram.patches.clone());
        let enc_in = tape.concat_rows(&[text_emb, patches]);
        let pos_idx: Vec<usize> = (0..text_len)
            .chain((0..cfg.patch_grid).map(|j| cfg.max_src_len + j))
            .collect();
        let enc_pos = tape.gather(leaf("enc_pos"), &pos_idx);
        let mut x = tape.add(enc_in, enc_pos);

        // Text pad positions are masked out as attention keys everywhere;
        // diagram slots are always visible.
        let key_padded: Vec<bool> = src_ids
            .iter()
            .map(|&id| id == PAD)
            .chain(std::iter::repeat_n(false, cfg.patch_grid))
            .collect();
        let enc_mask = key_mask(enc_len, &key_padded);
        let cross_mask = key_mask(tgt_len, &key_padded);
        let causal = causal_mask(tgt_len);

        for layer in 0..cfg.n_layers {
            let p = format!("enc{layer}");
            let normed = ln(&mut tape, x, leaf(&format!("{p}.ln1.gain")), leaf(&format!("{p}.ln1.bias")));
            let attended = attention(
                &mut tape,
                normed,
                normed,
                [leaf(&format!("{p}.self.wq")), leaf(&format!("{p}.self.wk")),
                 leaf(&format!("{p}.self.wv")), leaf(&format!("{p}.self.wo"))],
                cfg.n_heads,
                &enc_mask,
            );
            x = tape.add(x, attended);
            let normed = ln(&mut tape, x, leaf(&format!("{p}.ln2.gain")), leaf(&format!("{p}.ln2.bias")));
            let ffned = ffn(
                &mut tape,
                normed,
                leaf(&format!("{p}.ffn.w1")),
                leaf(&format!("{p}.ffn.b1")),
                leaf(&format!("{p}.ffn.w2")),
                leaf(&format!("{p}.ffn.b2")),
            );
            x = tape.add(x, ffned);
        }
        let enc_out = ln(&mut tape, x, leaf("enc_final.gain"), leaf("enc_final.bias"));

        // Decoder over the target prefix.
        let tgt_idx: Vec<usize> = tgt_prefix_ids.iter().map(|&i| i as usize).collect();
        let tgt_emb = tape.gather(leaf("dec_embed"), &tgt_idx);
        let dec_pos_idx: Vec<usize> = (0..tgt_len).collect();
        let dec_pos = tape.gather(leaf("dec_pos"), &dec_pos_idx);
        let mut y = tape.add(tgt_emb, dec_pos);

        for layer in 0..cfg.n_layers {
            let p = format!("dec{layer}");
            let normed = ln(&mut tape, y, leaf(&format!("{p}.ln1.gain")), leaf(&format!("{p}.ln1.bias")));
            let attended = attention(
                &mut tape,
                normed,
                normed,
                [leaf(&format!("{p}.self.wq")), leaf(&format!("{p}.self.wk")),
                 leaf(&format!("{p}.self.wv")), leaf(&format!("{p}.self.wo"))],
                cfg.n_heads,
                &causal,
            );
            y = tape.add(y, attended);
            let normed = ln(&mut tape, y, leaf(&format!("{p}.ln2.gain")), leaf(&format!("{p}.ln2.bias")));
            let attended = attention(
                &mut tape,
                normed,
                enc_out,
                [leaf(&format!("{p}.cross.wq")), leaf(&format!("{p}.cross.wk")),
                 leaf(&format!("{p}.cross.wv")), leaf(&format!("{p}.cross.wo"))],
                cfg.n_heads,
                &cross_mask,
            );
            y = tape.add(y, attended);
            let normed = ln(&mut tape, y, leaf(&format!("{p}.ln3.gain")), leaf(&format!("{p}.ln3.bias")));
            let ffned = ffn(
                &mut tape,
                normed,
                leaf(&format!("{p}.ffn.w1")),
                leaf(&format!("{p}.ffn.b1")),
                leaf(&format!("{p}.ffn.w2")),
                leaf(&format!("{p}.ffn.b2")),
            );
            y = tape.add(y, ffned);
        }
        let dec_out = ln(&mut tape, y, leaf("dec_final.gain"), leaf("dec_final.bias"));
        let projected = tape.matmul(dec_out, leaf("out.w"));
        let logits = tape.add_row_broadcast(projected, leaf("out.b"));

        Ok(ForwardPass { tape, logits, param_leaves })
    }
}

fn add_ln(entries: &mut Vec<Param>, prefix: &str, d: usize) {
    let mut gain = Tensor::zeros(1, d);
    gain.fill(1.0);
    entries.push(Param { name: format!("{prefix}.gain"), tensor: gain });
    entries.push(Param { name: format!("{prefix}.bias"), tensor: Tensor::zeros(1, d) });
}

fn ln(tape: &mut Tape, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
    tape.layer_norm(x, gain, bias)
}

fn ffn(tape: &mut Tape, x: NodeId, w1: NodeId, b1: NodeId, w2: NodeId, b2: NodeId) -> NodeId {
    let hidden = tape.matmul(x, w1);
    let hidden = tape.add_row_broadcast(hidden, b1);
    let hidden = tape.silu(hidden);
    let out = tape.matmul(hidden, w2);
    tape.add_row_broadcast(out, b2)
}

/// Multi-head scaled dot-product attention with an additive mask.
fn attention(
    tape: &mut Tape,
    x_q: NodeId,
    x_kv: NodeId,
    [wq, wk, wv, wo]: [NodeId; 4],
    n_heads: usize,
    mask: &Tensor,
) -> NodeId {
    let q = tape.matmul(x_q, wq);
    let k = tape.matmul(x_kv, wk);
    let v = tape.matmul(x_kv, wv);
    let d = tape.value(q).cols;
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let (from, to) = (h * dh, (h + 1) * dh);
        let qh = tape.slice_cols(q, from, to);
        let kh = tape.slice_cols(k, from, to);
        let vh = tape.slice_cols(v, from, to);
        let kt = tape.transpose(kh);
        let scores = tape.matmul(qh, kt);
        let scores = tape.scale(scores, scale);
        let scores = tape.add_mask(scores, mask);
        let weights = tape.softmax_rows(scores);
        heads.push(tape.matmul(weights, vh));
    }
    let merged = tape.concat_cols(&heads);
    tape.matmul(merged, wo)
}

/// Additive mask hiding padded key columns from every query row.
fn key_mask(query_len: usize, key_padded: &[bool]) -> Tensor {
    let mut mask = Tensor::zeros(query_len, key_padded.len());
    for (c, &padded) in key_padded.iter().enumerate() {
        if padded {
            for r in 0..query_len {
                *mask.at_mut(r, c) = -1e30;
            }
        }
    }
    mask
}

/// Additive causal mask: position i attends to keys 0..=i.
fn causal_mask(len: usize) -> Tensor {
    let mut mask = Tensor::zeros(len, len);
    for r in 0..len {
        for c in r + 1..len {
            *mask.at_mut(r, c) = -1e30;
        }
    }
    mask
}

/// Mean NLL of `target_ids` under the given per-position distributions.
/// Pad targets are excluded from both the sum and the normalizer; zero
/// probabilities clamp at `LOG_EPS` instead of going non-finite.
pub fn sequence_loss(distributions: &[Vec<f64>], target_ids: &[u32]) -> f64 {
    assert_eq!(distributions.len(), target_ids.len(), "one distribution per target");
    let mut total = 0.0;
    let mut count = 0usize;
    for (dist, &target) in distributions.iter().zip(target_ids) {
        if target == PAD {
            continue;
        }
        total -= dist[target as usize].max(LOG_EPS).ln();
        count += 1;
    }
    if count == 0 {
        return 0.0;
    }
    total / count as f64
}
