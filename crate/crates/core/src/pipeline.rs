//! Sample construction: from validated problems to token sequences and
//! model-ready id samples for fine-tuning (program / target sequences) and
//! pretraining (solution sequences, masked text).
//!
//! Per-problem randomness (element permutations, mask positions) derives from
//! one master seed and the problem id, so prepare, train, decode, and eval
//! agree on the same gold targets as long as they share the seed.

use std::path::Path;

use thiserror::Error;

use crate::corpus::{GeometryProblem, ProblemKind, Subtask};
use crate::pretrain::{apply_mlm_mask_protecting_tail, extract_solution_sequence};
use crate::reformulator::{
    build_proving_sequence, encode_target, extract_elements, shuffle_elements, ReasonCatalog,
    ReformulateError,
};
use crate::rng::derive_seed;
use crate::seqmodel::{
    embed_diagram_file, DiagramEmbedding, DiagramError, PatchFeaturizer, TaskKind, TrainSample,
};
use crate::tokenizer::{is_number_token, tokenize, TokenizeMode, Vocab, EOS};

/// A tokenized sample, still in surface-token space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedSample {
    pub id: String,
    pub task: TaskKind,
    pub subtask: Subtask,
    pub src_tokens: Vec<String>,
    /// Target tokens without the trailing `<eos>` (added at id encoding).
    pub tgt_tokens: Vec<String>,
    /// Whitespace-joined target string; the evaluation gold.
    pub gold_string: String,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("problem '{id}': {source}")]
    Reformulate {
        id: String,
        #[source]
        source: ReformulateError,
    },
    #[error("problem '{id}': missing {field}")]
    MissingField { id: String, field: &'static str },
    #[error(transparent)]
    Diagram(#[from] DiagramError),
}

/// Seed domain labels. One place, so derivations never drift apart.
pub mod seeds {
    /// Element permutation for proving targets.
    pub const ELEMENT_PERM: &str = "elem-perm";
    /// Mask positions for MLM samples.
    pub const MLM_MASK: &str = "mlm-mask";
    /// Model parameter initialization.
    pub const MODEL_INIT: &str = "model-init";
}

/// Source tokens for a proving problem: word-level text, the element-list
/// separator, then each shuffled element char-level, comma-separated.
fn proving_src_tokens(text: &str, shuffled: &[String]) -> Vec<String> {
    let mut tokens = tokenize(text, TokenizeMode::Text);
    tokens.push("elements".to_string());
    tokens.push(":".to_string());
    for (i, element) in shuffled.iter().enumerate() {
        if i > 0 {
            tokens.push(",".to_string());
        }
        tokens.extend(tokenize(element, TokenizeMode::Element));
    }
    tokens
}

/// Source tokens for a calculation problem: word-level text with each
/// numeric literal replaced by its `N_i` slot, in extraction order.
fn calculation_src_tokens(text: &str) -> Vec<String> {
    let mut tokens = tokenize(text, TokenizeMode::Text);
    let mut next = 0usize;
    for token in &mut tokens {
        if is_number_token(token) {
            *token = format!("N{next}");
            next += 1;
        }
    }
    tokens
}

/// Fine-tuning sample for a proving problem: augmented source, target
/// sequence under the seed-derived element permutation.
pub fn build_proving_sample(
    problem: &GeometryProblem,
    catalog: &ReasonCatalog,
    master_seed: u64,
) -> Result<PreparedSample, PipelineError> {
    let proof = problem
        .proof
        .as_ref()
        .ok_or_else(|| PipelineError::MissingField { id: problem.id.clone(), field: "proof" })?;
    let wrap = |source| PipelineError::Reformulate { id: problem.id.clone(), source };
    let elements = extract_elements(proof);
    let perm_seed = derive_seed(master_seed, seeds::ELEMENT_PERM, &problem.id);
    let perm = shuffle_elements(&elements, perm_seed);
    let ps = build_proving_sequence(proof, catalog).map_err(wrap)?;
    let ts = encode_target(&ps, &perm, catalog).map_err(wrap)?;
    let tgt_tokens: Vec<String> = ts.tokens.iter().map(|t| t.surface()).collect();
    let gold_string = ts.to_token_string();
    Ok(PreparedSample {
        id: problem.id.clone(),
        task: TaskKind::Proving,
        subtask: problem.subtask,
        src_tokens: proving_src_tokens(&problem.text, &perm.shuffled),
        tgt_tokens,
        gold_string,
    })
}

/// Fine-tuning sample for a calculation problem: `N_i`-slotted source,
/// gold program as target.
pub fn build_calculation_sample(problem: &GeometryProblem) -> Result<PreparedSample, PipelineError> {
    let program = problem
        .program
        .as_ref()
        .ok_or_else(|| PipelineError::MissingField { id: problem.id.clone(), field: "program" })?;
    Ok(PreparedSample {
        id: problem.id.clone(),
        task: TaskKind::Calculation,
        subtask: problem.subtask,
        src_tokens: calculation_src_tokens(&problem.text),
        tgt_tokens: program.clone(),
        gold_string: program.join(" "),
    })
}

/// Expression-pretraining sample: same source as fine-tuning, solution
/// sequence as target. `None` when the problem has no solution text.
pub fn build_mep_sample(problem: &GeometryProblem) -> Option<PreparedSample> {
    let solution = problem.solution_text.as_ref()?;
    let seq = extract_solution_sequence(solution);
    if seq.tokens.is_empty() {
        return None;
    }
    let gold_string = seq.tokens.join(" ");
    Some(PreparedSample {
        id: format!("{}#mep", problem.id),
        task: TaskKind::Mep,
        subtask: problem.subtask,
        src_tokens: calculation_src_tokens(&problem.text),
        tgt_tokens: seq.tokens,
        gold_string,
    })
}

/// Masked-LM sample: the fine-tuning source with 30% of its text region
/// masked; the appended element list is never masked. The target is the
/// masked-out tokens in position order.
pub fn build_mlm_sample(
    problem: &GeometryProblem,
    master_seed: u64,
) -> Result<PreparedSample, PipelineError> {
    let src_tokens = match problem.kind {
        ProblemKind::Proving => {
            let proof = problem.proof.as_ref().ok_or_else(|| PipelineError::MissingField {
                id: problem.id.clone(),
                field: "proof",
            })?;
            let elements = extract_elements(proof);
            let perm_seed = derive_seed(master_seed, seeds::ELEMENT_PERM, &problem.id);
            let perm = shuffle_elements(&elements, perm_seed);
            proving_src_tokens(&problem.text, &perm.shuffled)
        }
        ProblemKind::Calculation => calculation_src_tokens(&problem.text),
    };
    let maskable_len = src_tokens
        .iter()
        .position(|t| t == "elements")
        .unwrap_or(src_tokens.len());
    let mask_seed = derive_seed(master_seed, seeds::MLM_MASK, &problem.id);
    let masked = apply_mlm_mask_protecting_tail(&src_tokens, maskable_len, mask_seed);
    let gold_string = masked.target_tokens.join(" ");
    Ok(PreparedSample {
        id: format!("{}#mlm", problem.id),
        task: TaskKind::Mlm,
        subtask: problem.subtask,
        src_tokens: masked.input_tokens,
        tgt_tokens: masked.target_tokens,
        gold_string,
    })
}

/// All fine-tuning samples for a mixed corpus.
pub fn build_finetune_samples(
    problems: &[GeometryProblem],
    catalog: &ReasonCatalog,
    master_seed: u64,
) -> Result<Vec<PreparedSample>, PipelineError> {
    problems
        .iter()
        .map(|p| match p.kind {
            ProblemKind::Proving => build_proving_sample(p, catalog, master_seed),
            ProblemKind::Calculation => build_calculation_sample(p),
        })
        .collect()
}

/// All pretraining samples: MEP for problems with solutions, MLM for all.
pub fn build_pretrain_samples(
    problems: &[GeometryProblem],
    master_seed: u64,
) -> Result<Vec<PreparedSample>, PipelineError> {
    let mut samples = Vec::new();
    for p in problems {
        if let Some(mep) = build_mep_sample(p) {
            samples.push(mep);
        }
        samples.push(build_mlm_sample(p, master_seed)?);
    }
    Ok(samples)
}

/// Load a problem's diagram embedding, resolving the relative path against
/// the corpus directory. Absent diagrams give the zero embedding.
pub fn load_diagram(
    problem: &GeometryProblem,
    corpus_dir: &Path,
    featurizer: &PatchFeaturizer,
) -> Result<DiagramEmbedding, PipelineError> {
    match &problem.diagram {
        None => Ok(DiagramEmbedding::zero(featurizer.d_model)),
        Some(rel) => Ok(embed_diagram_file(featurizer, &corpus_dir.join(rel))?),
    }
}

/// Encode a prepared sample into model ids, appending `<eos>` to the target.
pub fn to_train_sample(
    prepared: &PreparedSample,
    vocab: &Vocab,
    diagram: DiagramEmbedding,
) -> TrainSample {
    let mut tgt_ids = vocab.encode_ids(&prepared.tgt_tokens);
    tgt_ids.push(EOS);
    TrainSample {
        id: prepared.id.clone(),
        task: prepared.task,
        src_ids: vocab.encode_ids(&prepared.src_tokens),
        diagram,
        tgt_ids,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::{sample_calculation_problem, sample_proving_problem};
    use crate::interpreter::extract_numbers;
    use crate::reformulator::decode_target;
    use crate::reformulator::TargetSequence;
    use crate::tokenizer::{build_vocab, VocabCaps, UNK};

    #[test]
    fn proving_sample_has_augmented_source_and_decodable_target() {
        let catalog = ReasonCatalog::builtin();
        let problem = sample_proving_problem("p1");
        let sample = build_proving_sample(&problem, &catalog, 99).unwrap();
        let marker = sample.src_tokens.iter().position(|t| t == "elements").unwrap();
        assert_eq!(sample.src_tokens[marker + 1], ":");
        assert!(marker > 0);
        // The target decodes back to the proving sequence under the same
        // seed-derived permutation.
        let elements = extract_elements(problem.proof.as_ref().unwrap());
        let perm_seed = derive_seed(99, seeds::ELEMENT_PERM, "p1");
        let perm = shuffle_elements(&elements, perm_seed);
        let tokens: Vec<_> = sample
            .gold_string
            .split(' ')
            .map(|t| crate::reformulator::TargetToken::parse(t).unwrap())
            .collect();
        let ts = TargetSequence { tokens, element_count: perm.shuffled.len() };
        let decoded = decode_target(&ts, &perm, &catalog).unwrap();
        let expected =
            build_proving_sequence(problem.proof.as_ref().unwrap(), &catalog).unwrap();
        assert_eq!(decoded, expected);
    }

    #[test]
    fn calculation_sample_replaces_numbers_with_slots() {
        let problem = sample_calculation_problem("c1");
        let sample = build_calculation_sample(&problem).unwrap();
        assert!(sample.src_tokens.contains(&"N0".to_string()));
        assert!(sample.src_tokens.contains(&"N2".to_string()));
        assert!(!sample.src_tokens.iter().any(|t| is_number_token(t)));
        assert_eq!(sample.gold_string, "divide N0 N1 mul V0 N2");
        // Slot order matches the interpreter's extraction order.
        assert_eq!(extract_numbers(&problem.text).len(), 3);
    }

    #[test]
    fn mlm_never_masks_the_element_list() {
        let problem = sample_proving_problem("p1");
        for seed in 0..30 {
            let sample = build_mlm_sample(&problem, seed).unwrap();
            let marker = sample.src_tokens.iter().position(|t| t == "elements").unwrap();
            assert!(sample.src_tokens[marker..].iter().all(|t| t != "<mask>"));
        }
    }

    #[test]
    fn mep_sample_targets_solution_sequence() {
        let problem = sample_calculation_problem("c1");
        let sample = build_mep_sample(&problem).unwrap();
        assert_eq!(sample.task, TaskKind::Mep);
        assert!(sample.tgt_tokens.iter().any(|t| t.starts_with("NS_")));
        assert!(build_mep_sample(&sample_proving_problem("p1")).is_none());
    }

    #[test]
    fn corpus_tokens_encode_without_unk() {
        let problems = vec![sample_proving_problem("p1"), sample_calculation_problem("c1")];
        let vocab = build_vocab(&[&problems], VocabCaps::default()).unwrap();
        let catalog = ReasonCatalog::builtin();
        let fine = build_finetune_samples(&problems, &catalog, 7).unwrap();
        let pre = build_pretrain_samples(&problems, 7).unwrap();
        for sample in fine.iter().chain(&pre) {
            for ids in [vocab.encode_ids(&sample.src_tokens), vocab.encode_ids(&sample.tgt_tokens)]
            {
                assert!(
                    !ids.contains(&UNK),
                    "sample {} has unk among {:?}",
                    sample.id,
                    sample.src_tokens
                );
            }
        }
    }

    #[test]
    fn samples_are_seed_stable() {
        let catalog = ReasonCatalog::builtin();
        let problems = vec![sample_proving_problem("p1"), sample_calculation_problem("c1")];
        let a = build_finetune_samples(&problems, &catalog, 11).unwrap();
        let b = build_finetune_samples(&problems, &catalog, 11).unwrap();
        let c = build_finetune_samples(&problems, &catalog, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].gold_string, c[0].gold_string);
    }
}
