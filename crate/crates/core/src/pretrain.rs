//! Pretraining target builders: expression-only solution sequences and
//! masked-LM samples.
//!
//! A solution sequence keeps only the mathematical content of a worked
//! solution — geometry elements (char-tokenized), operation symbols, and
//! numbers, the latter replaced by `NS_i` slots in appearance order. Masking
//! replaces 30% of tokens with `<mask>` and asks for the originals back.

use serde::{Deserialize, Serialize};

use crate::reformulator::OPERATOR_SYMBOLS;
use crate::rng::{sample_indices, SplitMix64};

/// Mask token surface form.
pub const MASK_TOKEN: &str = "<mask>";

/// Fraction of maskable tokens replaced by [`MASK_TOKEN`].
pub const MASK_RATE: f64 = 0.30;

/// Operation symbols recognized in free solution text, beyond the proof
/// expression operators.
pub const EXTENDED_OPERATION_SYMBOLS: [&str; 8] = ["<", ">", "≤", "≥", "°", "√", "/", "²"];

/// Expression-only rewriting of a worked solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSequence {
    /// Element characters, operation symbols, and `NS_i` slots.
    pub tokens: Vec<String>,
    /// The numbers the `NS_i` slots replaced, in appearance order.
    pub source_numbers: Vec<f64>,
}

/// One masked-LM sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedSample {
    pub input_tokens: Vec<String>,
    /// Original tokens at the masked positions, in position order.
    pub target_tokens: Vec<String>,
    /// Masked positions, strictly increasing.
    pub masked_positions: Vec<usize>,
    pub mask_rate: f64,
}

impl MaskedSample {
    /// Substitute the targets back in; inverse of the masking.
    pub fn reconstruct(&self) -> Vec<String> {
        let mut tokens = self.input_tokens.clone();
        for (&pos, original) in self.masked_positions.iter().zip(&self.target_tokens) {
            tokens[pos] = original.clone();
        }
        tokens
    }
}

fn is_operation_symbol(c: char) -> bool {
    let mut buf = [0u8; 4];
    let s: &str = c.encode_utf8(&mut buf);
    OPERATOR_SYMBOLS.contains(&s) || EXTENDED_OPERATION_SYMBOLS.contains(&s)
}

fn element_prefix_symbol(c: char) -> Option<char> {
    match c {
        '△' | 'Δ' | '▲' => Some('△'),
        '∠' | '∡' | '∢' => Some('∠'),
        '⌒' | '⌢' => Some('⌒'),
        _ => None,
    }
}

fn element_prefix_word(w: &str) -> Option<char> {
    if w.eq_ignore_ascii_case("triangle") {
        Some('△')
    } else if w.eq_ignore_ascii_case("angle") {
        Some('∠')
    } else if w.eq_ignore_ascii_case("arc") {
        Some('⌒')
    } else {
        None
    }
}

/// An element surface word: one to four uppercase ASCII letters. The rule is
/// deliberately simple and lives in one place so it can be tuned.
fn is_element_word(w: &str) -> bool {
    (1..=4).contains(&w.len()) && w.bytes().all(|b| b.is_ascii_uppercase())
}

enum Lexeme {
    Word(String),
    Number(f64),
    Symbol(char),
}

fn lex(text: &str) -> Vec<Lexeme> {
    let chars: Vec<char> = text.chars().collect();
    let mut lexemes = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_ascii_digit() {
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
            let literal: String = chars[start..i].iter().collect();
            lexemes.push(Lexeme::Number(literal.parse().expect("digits parse as f64")));
        } else if c.is_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_alphabetic() {
                i += 1;
            }
            lexemes.push(Lexeme::Word(chars[start..i].iter().collect()));
        } else if c.is_whitespace() {
            i += 1;
        } else {
            lexemes.push(Lexeme::Symbol(c));
            i += 1;
        }
    }
    lexemes
}

/// Strip a worked solution down to its mathematical skeleton: elements kept
/// char by char, operation symbols kept, numbers replaced by `NS_i`,
/// everything else dropped. "angle OCA" style word prefixes fold into the
/// symbol form.
pub fn extract_solution_sequence(solution_text: &str) -> SolutionSequence {
    let lexemes = lex(solution_text);
    let mut tokens: Vec<String> = Vec::new();
    let mut source_numbers: Vec<f64> = Vec::new();
    for (i, lexeme) in lexemes.iter().enumerate() {
        match lexeme {
            Lexeme::Word(w) => {
                if is_element_word(w) {
                    tokens.extend(w.chars().map(String::from));
                } else if let Some(symbol) = element_prefix_word(w) {
                    let next_is_element =
                        matches!(lexemes.get(i + 1), Some(Lexeme::Word(n)) if is_element_word(n));
                    if next_is_element {
                        tokens.push(symbol.to_string());
                    }
                }
            }
            Lexeme::Number(value) => {
                tokens.push(format!("NS_{}", source_numbers.len()));
                source_numbers.push(*value);
            }
            Lexeme::Symbol(c) => {
                if let Some(symbol) = element_prefix_symbol(*c) {
                    tokens.push(symbol.to_string());
                } else if is_operation_symbol(*c) {
                    tokens.push(c.to_string());
                }
            }
        }
    }
    SolutionSequence { tokens, source_numbers }
}

/// Mask `round(0.30 · n)` tokens chosen uniformly without replacement.
pub fn apply_mlm_mask(tokens: &[String], seed: u64) -> MaskedSample {
    apply_mlm_mask_protecting_tail(tokens, tokens.len(), seed)
}

/// Like [`apply_mlm_mask`], but only the first `maskable_len` tokens are
/// candidates. The protected tail carries answer-key material (the appended
/// element list) that must survive masking.
pub fn apply_mlm_mask_protecting_tail(
    tokens: &[String],
    maskable_len: usize,
    seed: u64,
) -> MaskedSample {
    assert!(!tokens.is_empty(), "masking needs at least one token");
    let maskable = maskable_len.min(tokens.len());
    let count = (MASK_RATE * maskable as f64).round_ties_even() as usize;
    let mut rng = SplitMix64::new(seed);
    let positions = sample_indices(maskable, count, &mut rng);
    let mut input_tokens = tokens.to_vec();
    let mut target_tokens = Vec::with_capacity(count);
    for &pos in &positions {
        target_tokens.push(std::mem::replace(&mut input_tokens[pos], MASK_TOKEN.to_string()));
    }
    MaskedSample { input_tokens, target_tokens, masked_positions: positions, mask_rate: MASK_RATE }
}
