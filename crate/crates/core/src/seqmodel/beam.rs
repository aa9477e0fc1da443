//! Beam search and greedy decoding.
//!
//! Scores are pure sums of per-token log probabilities — no length
//! normalization. Ties break toward the lexicographically smaller token-id
//! sequence, which makes K=1 beam search coincide with greedy decoding.

use super::diagram::DiagramEmbedding;
use super::model::{ModelError, SeqModel};
use super::tape::LOG_EPS;
use crate::tokenizer::{BOS, EOS};

/// One decoded hypothesis. `tokens` excludes the start token and ends with
/// `<eos>` unless the length cap cut it off.
#[derive(Debug, Clone, PartialEq)]
pub struct Beam {
    pub tokens: Vec<u32>,
    pub logprob: f64,
}

impl Beam {
    fn finished(&self) -> bool {
        self.tokens.last() == Some(&EOS)
    }
}

/// Beam comparator: higher logprob first, then smaller token sequence.
fn rank(a: &Beam, b: &Beam) -> std::cmp::Ordering {
    b.logprob.total_cmp(&a.logprob).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Length-capped beam search returning up to `k` hypotheses, best first.
pub fn beam_search(
    model: &SeqModel,
    src_ids: &[u32],
    diagram: &DiagramEmbedding,
    k: usize,
    max_len: usize,
) -> Result<Vec<Beam>, ModelError> {
    assert!(k >= 1, "beam width must be at least 1");
    // The decoder prefix holds <bos> plus the generated tokens.
    let cap = max_len.min(model.config.max_tgt_len - 1);
    let mut active = vec![Beam { tokens: Vec::new(), logprob: 0.0 }];
    let mut finished: Vec<Beam> = Vec::new();

    for _ in 0..cap {
        let mut candidates: Vec<Beam> = Vec::with_capacity(active.len() * model.config.vocab_size);
        for beam in &active {
            let mut prefix = Vec::with_capacity(beam.tokens.len() + 1);
            prefix.push(BOS);
            prefix.extend_from_slice(&beam.tokens);
            let dists = model.forward(src_ids, diagram, &prefix)?;
            let last = dists.last().expect("non-empty prefix yields distributions");
            for (id, &p) in last.iter().enumerate() {
                let mut tokens = beam.tokens.clone();
                tokens.push(id as u32);
                candidates.push(Beam { tokens, logprob: beam.logprob + p.max(LOG_EPS).ln() });
            }
        }
        candidates.sort_by(rank);
        // Only the step's top k survive; of those, hypotheses ending in
        // <eos> retire and the rest stay active. Retiring outside the top k
        // would let a low-ranked early <eos> outlive better prefixes and
        // break the K=1 ≡ greedy contract.
        candidates.truncate(k);
        let mut next_active = Vec::with_capacity(k);
        for candidate in candidates {
            if candidate.finished() {
                finished.push(candidate);
            } else {
                next_active.push(candidate);
            }
        }
        active = next_active;
        if active.is_empty() {
            break;
        }
    }

    finished.extend(active);
    finished.sort_by(rank);
    finished.truncate(k);
    Ok(finished)
}

/// Repeated argmax decoding (ties to the lowest token id), stopping at
/// `<eos>` or the length cap. Implemented independently of [`beam_search`].
pub fn greedy_decode(
    model: &SeqModel,
    src_ids: &[u32],
    diagram: &DiagramEmbedding,
    max_len: usize,
) -> Result<Beam, ModelError> {
    let cap = max_len.min(model.config.max_tgt_len - 1);
    let mut tokens: Vec<u32> = Vec::new();
    let mut logprob = 0.0;
    for _ in 0..cap {
        let mut prefix = Vec::with_capacity(tokens.len() + 1);
        prefix.push(BOS);
        prefix.extend_from_slice(&tokens);
        let dists = model.forward(src_ids, diagram, &prefix)?;
        let last = dists.last().unwrap();
        let mut best_id = 0usize;
        let mut best_p = f64::NEG_INFINITY;
        for (id, &p) in last.iter().enumerate() {
            if p > best_p {
                best_p = p;
                best_id = id;
            }
        }
        tokens.push(best_id as u32);
        logprob += best_p.max(LOG_EPS).ln();
        if best_id as u32 == EOS {
            break;
        }
    }
    Ok(Beam { tokens, logprob })
}
