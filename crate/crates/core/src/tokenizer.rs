//! Unified vocabulary over text words, element characters, and the special
//! token families (`R_i`, `E_i`, `N_i`, `NS_i`, operators, program tokens).
//!
//! Vocabulary construction is deterministic: fixed control ids, pre-allocated
//! special blocks, then text words by descending frequency (ties broken
//! lexicographically), then element characters in sorted order. Identical
//! corpora therefore produce bit-identical vocab files.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{GeometryProblem, ProblemKind};
use crate::interpreter::{extract_numbers, Operator, CONSTANTS};
use crate::pretrain::{extract_solution_sequence, EXTENDED_OPERATION_SYMBOLS};
use crate::reformulator::{extract_elements, ReasonCatalog, OPERATOR_SYMBOLS};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const MASK: u32 = 3;
pub const UNK: u32 = 4;

pub const CONTROL_TOKENS: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<mask>", "<unk>"];

/// Token family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenClass {
    Control,
    Reason,
    ElementIndex,
    Number,
    SolutionNumber,
    Operator,
    /// Program alphabet beyond `N_i`: operator names, constants, `V_i` slots.
    Program,
    Text,
    ElementChar,
}

/// Maximum pre-allocated index per token family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabCaps {
    pub elements: usize,
    pub numbers: usize,
    pub solution_numbers: usize,
    pub program_vars: usize,
}

impl Default for VocabCaps {
    fn default() -> Self {
        Self { elements: 64, numbers: 16, solution_numbers: 64, program_vars: 16 }
    }
}

/// Tokenization mode: word-level for natural text, char-level for geometry
/// elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenizeMode {
    Text,
    Element,
}

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("{family} capacity exceeded: observed index {observed} with cap {cap} (problem '{id}')")]
    CapacityExceeded { family: &'static str, observed: usize, cap: usize, id: String },
    #[error("id {id} out of range: vocabulary has {size} tokens")]
    IdOutOfRange { id: u32, size: usize },
    #[error("vocab file {path}: {message}")]
    File { path: String, message: String },
    #[error("failed reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The unified token inventory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    classes: Vec<TokenClass>,
    ids: HashMap<String, u32>,
    caps: VocabCaps,
}

impl fmt::Display for Vocab {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Vocab({} tokens)", self.tokens.len())
    }
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn caps(&self) -> VocabCaps {
        self.caps
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    pub fn class(&self, id: u32) -> Option<TokenClass> {
        self.classes.get(id as usize).copied()
    }

    pub fn is_control(&self, id: u32) -> bool {
        matches!(self.class(id), Some(TokenClass::Control))
    }

    /// Encode tokens to ids. Unknown tokens fall back to their lowercase
    /// spelling (text words are stored lowercase) and then to `<unk>`.
    pub fn encode_ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens
            .iter()
            .map(|t| {
                let t = t.as_ref();
                self.id_of(t).or_else(|| self.id_of(&t.to_lowercase())).unwrap_or(UNK)
            })
            .collect()
    }

    /// Decode ids back to token strings. Out-of-range ids are an error.
    pub fn decode_ids(&self, ids: &[u32]) -> Result<Vec<String>, VocabError> {
        ids.iter()
            .map(|&id| {
                self.token(id)
                    .map(str::to_string)
                    .ok_or(VocabError::IdOutOfRange { id, size: self.tokens.len() })
            })
            .collect()
    }

    /// Write the token list (one token per line, line number = id) and the
    /// class/caps sidecar JSON.
    pub fn save(&self, tokens_path: &Path, sidecar_path: &Path) -> Result<(), VocabError> {
        let mut body = String::new();
        for t in &self.tokens {
            body.push_str(t);
            body.push('\n');
        }
        fs::write(tokens_path, body).map_err(|source| VocabError::Io {
            path: tokens_path.display().to_string(),
            source,
        })?;
        let sidecar = VocabSidecar { version: 1, caps: self.caps, classes: self.classes.clone() };
        let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        fs::write(sidecar_path, json).map_err(|source| VocabError::Io {
            path: sidecar_path.display().to_string(),
            source,
        })?;
        Ok(())
    }

    pub fn load(tokens_path: &Path, sidecar_path: &Path) -> Result<Self, VocabError> {
        let body = fs::read_to_string(tokens_path).map_err(|source| VocabError::Io {
            path: tokens_path.display().to_string(),
            source,
        })?;
        let tokens: Vec<String> = body.lines().map(str::to_string).collect();
        let sidecar_text = fs::read_to_string(sidecar_path).map_err(|source| VocabError::Io {
            path: sidecar_path.display().to_string(),
            source,
        })?;
        let sidecar: VocabSidecar =
            serde_json::from_str(&sidecar_text).map_err(|e| VocabError::File {
                path: sidecar_path.display().to_string(),
                message: e.to_string(),
            })?;
        if sidecar.classes.len() != tokens.len() {
            return Err(VocabError::File {
                path: sidecar_path.display().to_string(),
                message: format!(
                    "class count {} does not match token count {}",
                    sidecar.classes.len(),
                    tokens.len()
                ),
            });
        }
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Ok(Self { tokens, classes: sidecar.classes, ids, caps: sidecar.caps })
    }
}

#[derive(Serialize, Deserialize)]
struct VocabSidecar {
    version: u32,
    caps: VocabCaps,
    classes: Vec<TokenClass>,
}

/// Split a string into tokens. Text mode keeps words, numeric literals, and
/// single-character punctuation/symbol tokens; element mode splits into
/// individual characters.
pub fn tokenize(s: &str, mode: TokenizeMode) -> Vec<String> {
    match mode {
        TokenizeMode::Element => s.chars().filter(|c| !c.is_whitespace()).map(String::from).collect(),
        TokenizeMode::Text => {
            let chars: Vec<char> = s.chars().collect();
            let mut tokens = Vec::new();
            let mut i = 0;
            while i < chars.len() {
                let c = chars[i];
                if c.is_whitespace() {
                    i += 1;
                } else if c.is_ascii_digit() {
                    let start = i;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                    if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                        i += 1;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                    tokens.push(chars[start..i].iter().collect());
                } else if c.is_alphabetic() {
                    let start = i;
                    while i < chars.len() && chars[i].is_alphabetic() {
                        i += 1;
                    }
                    tokens.push(chars[start..i].iter().collect());
                } else {
                    tokens.push(c.to_string());
                    i += 1;
                }
            }
            tokens
        }
    }
}

/// Whether a token is a numeric literal (as produced by text tokenization).
pub fn is_number_token(token: &str) -> bool {
    !token.is_empty()
        && token.bytes().all(|b| b.is_ascii_digit() || b == b'.')
        && token.bytes().any(|b| b.is_ascii_digit())
}

/// Build the deterministic vocabulary over the given corpora.
///
/// Layout: control ids 0-4, `R_0..R_36`, `E_i`, `N_i`, `NS_i`, operator
/// symbols, the program alphabet (operator names, `C_k`, `V_i`), text words
/// by descending frequency, element characters in sorted order.
pub fn build_vocab(
    corpora: &[&[GeometryProblem]],
    caps: VocabCaps,
) -> Result<Vocab, VocabError> {
    let catalog = ReasonCatalog::builtin();
    let mut word_counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut element_chars: BTreeSet<String> = BTreeSet::new();
    let mut count_words = |text: &str| {
        for token in tokenize(text, TokenizeMode::Text) {
            *word_counts.entry(token.to_lowercase()).or_insert(0) += 1;
        }
    };

    for corpus in corpora {
        for problem in *corpus {
            count_words(&problem.text);
            let observed_numbers = extract_numbers(&problem.text).len();
            if observed_numbers > caps.numbers {
                return Err(VocabError::CapacityExceeded {
                    family: "N",
                    observed: observed_numbers - 1,
                    cap: caps.numbers,
                    id: problem.id.clone(),
                });
            }
            match problem.kind {
                ProblemKind::Proving => {
                    // The element-list suffix contributes its separator words
                    // and the char-tokenized elements.
                    count_words("elements :");
                    if let Some(proof) = &problem.proof {
                        let elements = extract_elements(proof);
                        if elements.len() > caps.elements {
                            return Err(VocabError::CapacityExceeded {
                                family: "E",
                                observed: elements.len() - 1,
                                cap: caps.elements,
                                id: problem.id.clone(),
                            });
                        }
                        if elements.len() > 1 {
                            count_words(",");
                        }
                        for element in &elements {
                            for c in tokenize(element, TokenizeMode::Element) {
                                element_chars.insert(c);
                            }
                        }
                    }
                }
                ProblemKind::Calculation => {
                    if let Some(program) = &problem.program {
                        let ops = program
                            .iter()
                            .filter(|t| Operator::from_name(t).is_some())
                            .count();
                        if ops > caps.program_vars {
                            return Err(VocabError::CapacityExceeded {
                                family: "V",
                                observed: ops - 1,
                                cap: caps.program_vars,
                                id: problem.id.clone(),
                            });
                        }
                    }
                    if let Some(solution) = &problem.solution_text {
                        let seq = extract_solution_sequence(solution);
                        if seq.source_numbers.len() > caps.solution_numbers {
                            return Err(VocabError::CapacityExceeded {
                                family: "NS",
                                observed: seq.source_numbers.len() - 1,
                                cap: caps.solution_numbers,
                                id: problem.id.clone(),
                            });
                        }
                        for token in &seq.tokens {
                            if token.starts_with("NS_") || is_symbol_token(token) {
                                continue;
                            }
                            element_chars.insert(token.clone());
                        }
                    }
                }
            }
        }
    }

    let mut tokens: Vec<String> = Vec::new();
    let mut classes: Vec<TokenClass> = Vec::new();
    let push = |tokens: &mut Vec<String>, classes: &mut Vec<TokenClass>, t: String, class: TokenClass| {
        tokens.push(t);
        classes.push(class);
    };

    for t in CONTROL_TOKENS {
        push(&mut tokens, &mut classes, t.to_string(), TokenClass::Control);
    }
    for i in 0..catalog.len() {
        push(&mut tokens, &mut classes, format!("R_{i}"), TokenClass::Reason);
    }
    for i in 0..caps.elements {
        push(&mut tokens, &mut classes, format!("E_{i}"), TokenClass::ElementIndex);
    }
    for i in 0..caps.numbers {
        push(&mut tokens, &mut classes, format!("N{i}"), TokenClass::Number);
    }
    for i in 0..caps.solution_numbers {
        push(&mut tokens, &mut classes, format!("NS_{i}"), TokenClass::SolutionNumber);
    }
    for op in OPERATOR_SYMBOLS.iter().chain(EXTENDED_OPERATION_SYMBOLS.iter()) {
        push(&mut tokens, &mut classes, op.to_string(), TokenClass::Operator);
    }
    for op in Operator::ALL {
        push(&mut tokens, &mut classes, op.name().to_string(), TokenClass::Program);
    }
    for i in 0..CONSTANTS.len() {
        push(&mut tokens, &mut classes, format!("C{i}"), TokenClass::Program);
    }
    for i in 0..caps.program_vars {
        push(&mut tokens, &mut classes, format!("V{i}"), TokenClass::Program);
    }

    let mut words: Vec<(String, u64)> = word_counts.into_iter().collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let allocated: std::collections::HashSet<String> = tokens.iter().cloned().collect();
    for (word, _) in words {
        if !allocated.contains(&word) {
            push(&mut tokens, &mut classes, word, TokenClass::Text);
        }
    }
    let allocated: std::collections::HashSet<String> = tokens.iter().cloned().collect();
    for c in element_chars {
        if !allocated.contains(&c) {
            push(&mut tokens, &mut classes, c, TokenClass::ElementChar);
        }
    }

    let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
    Ok(Vocab { tokens, classes, ids, caps })
}

fn is_symbol_token(token: &str) -> bool {
    OPERATOR_SYMBOLS.contains(&token) || EXTENDED_OPERATION_SYMBOLS.contains(&token)
}

/// Token count of the fixed (corpus-independent) vocabulary prefix.
pub fn fixed_prefix_len(caps: VocabCaps) -> usize {
    CONTROL_TOKENS.len()
        + ReasonCatalog::builtin().len()
        + caps.elements
        + caps.numbers
        + caps.solution_numbers
        + OPERATOR_SYMBOLS.len()
        + EXTENDED_OPERATION_SYMBOLS.len()
        + Operator::ALL.len()
        + CONSTANTS.len()
        + caps.program_vars
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caps_32_16_32() -> VocabCaps {
        VocabCaps { elements: 32, numbers: 16, solution_numbers: 32, program_vars: 16 }
    }

    #[test]
    fn empty_corpus_vocab_is_exactly_the_preallocated_blocks() {
        let caps = caps_32_16_32();
        let vocab = build_vocab(&[], caps).unwrap();
        // 5 control + 37 reasons + 32 E + 16 N + 32 NS + 17 operator symbols
        // + (14 op names + 10 constants + 16 V) program tokens.
        assert_eq!(vocab.len(), 5 + 37 + 32 + 16 + 32 + 17 + 14 + 10 + 16);
        assert_eq!(vocab.len(), fixed_prefix_len(caps));
        assert_eq!(vocab.id_of("<pad>"), Some(PAD));
        assert_eq!(vocab.id_of("<unk>"), Some(UNK));
        assert_eq!(vocab.id_of("R_0"), Some(5));
        assert_eq!(vocab.class(5), Some(TokenClass::Reason));
    }

    #[test]
    fn identical_corpora_build_identical_vocabs() {
        let problems = vec![
            crate::corpus::tests::sample_proving_problem("p1"),
            crate::corpus::tests::sample_calculation_problem("c1"),
        ];
        let a = build_vocab(&[&problems], VocabCaps::default()).unwrap();
        let b = build_vocab(&[&problems], VocabCaps::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn text_mode_splits_words_and_punctuation() {
        assert_eq!(tokenize("AB is parallel.", TokenizeMode::Text), vec!["AB", "is", "parallel", "."]);
        assert_eq!(tokenize("", TokenizeMode::Text), Vec::<String>::new());
        assert_eq!(tokenize("CD = 1.5", TokenizeMode::Text), vec!["CD", "=", "1.5"]);
    }

    #[test]
    fn element_mode_splits_chars_with_symbol_prefix() {
        assert_eq!(tokenize("OC", TokenizeMode::Element), vec!["O", "C"]);
        assert_eq!(tokenize("∠OCA", TokenizeMode::Element), vec!["∠", "O", "C", "A"]);
    }

    #[test]
    fn char_ids_are_shared_between_elements() {
        let problems = vec![crate::corpus::tests::sample_proving_problem("p1")];
        let vocab = build_vocab(&[&problems], VocabCaps::default()).unwrap();
        // "O" inside TU-style elements and inside ∠-prefixed elements is one id.
        let t_direct = vocab.encode_ids(&tokenize("△TUW", TokenizeMode::Element));
        let t_in_angle = vocab.encode_ids(&tokenize("∠T", TokenizeMode::Element));
        assert_eq!(t_direct[1], t_in_angle[1]);
        assert_ne!(t_direct[1], UNK);
    }

    #[test]
    fn encode_decode_round_trip_target_sequence() {
        let vocab = build_vocab(&[], caps_32_16_32()).unwrap();
        let tokens: Vec<String> = "R_3 E_1 = E_0".split(' ').map(str::to_string).collect();
        let ids = vocab.encode_ids(&tokens);
        assert!(ids.iter().all(|&i| i != UNK));
        assert_eq!(vocab.decode_ids(&ids).unwrap(), tokens);
    }

    #[test]
    fn unknown_word_maps_to_unk() {
        let vocab = build_vocab(&[], caps_32_16_32()).unwrap();
        let ids = vocab.encode_ids(&["zebra".to_string()]);
        assert_eq!(ids, vec![UNK]);
        assert_eq!(vocab.decode_ids(&ids).unwrap(), vec!["<unk>".to_string()]);
    }

    #[test]
    fn decode_out_of_range_is_an_error() {
        let vocab = build_vocab(&[], caps_32_16_32()).unwrap();
        let err = vocab.decode_ids(&[u32::MAX]).unwrap_err();
        assert!(matches!(err, VocabError::IdOutOfRange { .. }));
    }

    #[test]
    fn capacity_errors_name_the_family() {
        let problems = vec![crate::corpus::tests::sample_proving_problem("p1")];
        let tight = VocabCaps { elements: 2, ..VocabCaps::default() };
        let err = build_vocab(&[&problems], tight).unwrap_err();
        match err {
            VocabError::CapacityExceeded { family, id, .. } => {
                assert_eq!(family, "E");
                assert_eq!(id, "p1");
            }
            other => panic!("expected capacity error, got {other}"),
        }
    }

    #[test]
    fn save_load_round_trip_is_identical() {
        let problems = vec![
            crate::corpus::tests::sample_proving_problem("p1"),
            crate::corpus::tests::sample_calculation_problem("c1"),
        ];
        let vocab = build_vocab(&[&problems], VocabCaps::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let tokens_path = dir.path().join("vocab.txt");
        let sidecar_path = dir.path().join("vocab.classes.json");
        vocab.save(&tokens_path, &sidecar_path).unwrap();
        let loaded = Vocab::load(&tokens_path, &sidecar_path).unwrap();
        assert_eq!(loaded, vocab);

        vocab.save(&dir.path().join("v2.txt"), &dir.path().join("v2.json")).unwrap();
        assert_eq!(
            std::fs::read(&tokens_path).unwrap(),
            std::fs::read(dir.path().join("v2.txt")).unwrap()
        );
    }

    #[test]
    fn corpus_text_words_are_lowercased_and_frequency_ordered() {
        let mut p1 = crate::corpus::tests::sample_proving_problem("p1");
        p1.text = "Prove Prove prove lines".into();
        let vocab = build_vocab(&[std::slice::from_ref(&p1)], VocabCaps::default()).unwrap();
        let prove = vocab.id_of("prove").unwrap();
        let lines = vocab.id_of("lines").unwrap();
        assert!(prove < lines, "higher-frequency word gets the smaller id");
        assert_eq!(vocab.id_of("Prove"), None);
        // Encoding falls back to the lowercase form.
        assert_eq!(vocab.encode_ids(&["Prove"]), vec![prove]);
    }
}
