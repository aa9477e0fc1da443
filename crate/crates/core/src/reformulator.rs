//! Proof reformulation: proofs become proving sequences (reason and
//! expression tokens in step order), and proving sequences become target
//! sequences in which reasons are catalog indices `R_i` and elements are
//! positions `E_i` in a seed-shuffled element list. The shuffled list is also
//! appended to the problem text so the model can resolve the indices.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Proof;
use crate::rng::{shuffle, SplitMix64};

/// Expression operator inventory. Extension happens here, in one place.
pub const OPERATOR_SYMBOLS: [&str; 9] = ["=", "≅", "∼", "∥", "⊥", "+", "−", "×", "÷"];

/// Separator inserted between the problem text and the shuffled element list.
pub const ELEMENT_LIST_SEPARATOR: &str = " elements: ";

const BUILTIN_REASONS: &str = include_str!("../data/reasons.txt");

/// The fixed, ordered inventory of proof-step reasons. Line number in the
/// catalog file is the reason index, so `R_i` tokens are stable across runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReasonCatalog {
    reasons: Vec<String>,
}

impl ReasonCatalog {
    /// The catalog shipped with the crate: 37 reasons, one per line.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_REASONS).expect("bundled catalog is well-formed")
    }

    /// Read a catalog file (UTF-8, one reason per line, line number = index).
    pub fn load(path: &std::path::Path) -> Result<Self, ReformulateError> {
        let text = std::fs::read_to_string(path).map_err(|e| ReformulateError::CatalogFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Parse a catalog from its file format (one reason per line).
    pub fn parse(text: &str) -> Result<Self, ReformulateError> {
        let reasons: Vec<String> =
            text.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect();
        let mut seen = std::collections::BTreeSet::new();
        for r in &reasons {
            if !seen.insert(r.clone()) {
                return Err(ReformulateError::DuplicateReason { reason: r.clone() });
            }
        }
        Ok(Self { reasons })
    }

    pub fn len(&self) -> usize {
        self.reasons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reasons.is_empty()
    }

    pub fn index_of(&self, reason: &str) -> Option<usize> {
        self.reasons.iter().position(|r| r == reason)
    }

    pub fn name_of(&self, index: usize) -> Option<&str> {
        self.reasons.get(index).map(|s| s.as_str())
    }

    pub fn reasons(&self) -> &[String] {
        &self.reasons
    }
}

/// One proving-sequence token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProvingToken {
    Reason(String),
    Operator(String),
    Element(String),
}

impl fmt::Display for ProvingToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Reason(s) | Self::Operator(s) | Self::Element(s) => write!(f, "{s}"),
        }
    }
}

/// Reasons and flattened expressions in proof order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProvingSequence {
    pub items: Vec<ProvingToken>,
}

/// A seeded permutation of the proof's distinct elements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementPermutation {
    pub original: Vec<String>,
    pub shuffled: Vec<String>,
    pub seed: u64,
}

impl ElementPermutation {
    /// Identity permutation, mainly for tests and decoding fixtures.
    pub fn identity(elements: Vec<String>) -> Self {
        Self { original: elements.clone(), shuffled: elements, seed: 0 }
    }
}

/// One target-sequence token: `R_i`, a literal operator, or `E_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetToken {
    Reason(usize),
    Operator(String),
    Element(usize),
}

impl TargetToken {
    pub fn surface(&self) -> String {
        match self {
            Self::Reason(i) => format!("R_{i}"),
            Self::Operator(op) => op.clone(),
            Self::Element(i) => format!("E_{i}"),
        }
    }

    /// Parse a surface token back into a target token.
    pub fn parse(s: &str) -> Option<Self> {
        if let Some(idx) = s.strip_prefix("R_") {
            return idx.parse().ok().map(Self::Reason);
        }
        if let Some(idx) = s.strip_prefix("E_") {
            return idx.parse().ok().map(Self::Element);
        }
        if OPERATOR_SYMBOLS.contains(&s) {
            return Some(Self::Operator(s.to_string()));
        }
        None
    }
}

/// The index-encoded training target for a proving problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSequence {
    pub tokens: Vec<TargetToken>,
    pub element_count: usize,
}

impl TargetSequence {
    /// Whitespace-joined serialized form, e.g. `"R_3 E_1 = E_0"`.
    pub fn to_token_string(&self) -> String {
        self.tokens.iter().map(|t| t.surface()).collect::<Vec<_>>().join(" ")
    }

    /// Parse the serialized form back. `element_count` is the size of the
    /// element list the indices refer to.
    pub fn from_token_string(s: &str, element_count: usize) -> Result<Self, ReformulateError> {
        let tokens: Vec<TargetToken> = s
            .split_whitespace()
            .enumerate()
            .map(|(position, raw)| {
                TargetToken::parse(raw).ok_or_else(|| ReformulateError::UnknownTargetToken {
                    position,
                    token: raw.to_string(),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { tokens, element_count })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReformulateError {
    #[error("reason '{reason}' is not in the {size}-entry catalog")]
    UnknownReason { reason: String, size: usize },
    #[error("duplicate reason '{reason}' in catalog")]
    DuplicateReason { reason: String },
    #[error("catalog file {path}: {message}")]
    CatalogFile { path: String, message: String },
    #[error("token {position}: '{token}' is not a target-sequence token")]
    UnknownTargetToken { position: usize, token: String },
    #[error("element '{element}' is missing from the shuffled element list")]
    ElementNotInPermutation { element: String },
    #[error("token {position}: reason index {index} out of range (catalog size {size})")]
    ReasonIndexOutOfRange { position: usize, index: usize, size: usize },
    #[error("token {position}: element index {index} out of range (element count {count})")]
    ElementIndexOutOfRange { position: usize, index: usize, count: usize },
    #[error("token {position}: {message}")]
    Grammar { position: usize, message: String },
}

/// Canonical element spelling: whitespace removed, symbol prefixes folded to
/// fixed codepoints (`△` U+25B3, `∠` U+2220, `⌒` U+2312), word prefixes
/// ("triangle ABC", "angle T", "arc AB") rewritten to the symbol form.
pub fn normalize_element(raw: &str) -> String {
    let trimmed = raw.trim();
    let lower = trimmed.to_lowercase();
    let (prefix, rest) = if let Some(rest) = lower.strip_prefix("triangle ") {
        ("△", &trimmed[trimmed.len() - rest.len()..])
    } else if let Some(rest) = lower.strip_prefix("angle ") {
        ("∠", &trimmed[trimmed.len() - rest.len()..])
    } else if let Some(rest) = lower.strip_prefix("arc ") {
        ("⌒", &trimmed[trimmed.len() - rest.len()..])
    } else {
        ("", trimmed)
    };
    let mut out = String::with_capacity(rest.len() + prefix.len());
    out.push_str(prefix);
    for c in rest.chars() {
        if c.is_whitespace() {
            continue;
        }
        out.push(match c {
            'Δ' | '▲' => '△',
            '∡' | '∢' => '∠',
            '⌢' => '⌒',
            other => other,
        });
    }
    out
}

/// All distinct normalized elements of the proof, in first-occurrence order.
pub fn extract_elements(proof: &Proof) -> Vec<String> {
    let mut elements = Vec::new();
    for step in &proof.steps {
        for expr in &step.expressions {
            for raw in [&expr.lhs, &expr.rhs] {
                let e = normalize_element(raw);
                if !elements.contains(&e) {
                    elements.push(e);
                }
            }
        }
    }
    elements
}

/// Fisher-Yates shuffle of the element list under the given seed.
pub fn shuffle_elements(elements: &[String], seed: u64) -> ElementPermutation {
    let mut shuffled = elements.to_vec();
    shuffle(&mut shuffled, &mut SplitMix64::new(seed));
    ElementPermutation { original: elements.to_vec(), shuffled, seed }
}

/// Flatten a proof into its proving sequence: each step emits its reason,
/// then every expression as element, operator, element.
pub fn build_proving_sequence(
    proof: &Proof,
    catalog: &ReasonCatalog,
) -> Result<ProvingSequence, ReformulateError> {
    let mut items = Vec::new();
    for step in &proof.steps {
        if catalog.index_of(&step.reason).is_none() {
            return Err(ReformulateError::UnknownReason {
                reason: step.reason.clone(),
                size: catalog.len(),
            });
        }
        items.push(ProvingToken::Reason(step.reason.clone()));
        for expr in &step.expressions {
            items.push(ProvingToken::Element(normalize_element(&expr.lhs)));
            items.push(ProvingToken::Operator(expr.op.clone()));
            items.push(ProvingToken::Element(normalize_element(&expr.rhs)));
        }
    }
    Ok(ProvingSequence { items })
}

/// Map a proving sequence onto index tokens: reasons to their catalog index,
/// elements to their position in the shuffled list, operators unchanged.
pub fn encode_target(
    ps: &ProvingSequence,
    perm: &ElementPermutation,
    catalog: &ReasonCatalog,
) -> Result<TargetSequence, ReformulateError> {
    let mut tokens = Vec::with_capacity(ps.items.len());
    for item in &ps.items {
        tokens.push(match item {
            ProvingToken::Reason(name) => {
                let index = catalog.index_of(name).ok_or_else(|| ReformulateError::UnknownReason {
                    reason: name.clone(),
                    size: catalog.len(),
                })?;
                TargetToken::Reason(index)
            }
            ProvingToken::Operator(op) => TargetToken::Operator(op.clone()),
            ProvingToken::Element(e) => {
                let index = perm.shuffled.iter().position(|s| s == e).ok_or_else(|| {
                    ReformulateError::ElementNotInPermutation { element: e.clone() }
                })?;
                TargetToken::Element(index)
            }
        });
    }
    Ok(TargetSequence { tokens, element_count: perm.shuffled.len() })
}

/// Exact inverse of [`encode_target`]. Checks index ranges and the expression
/// grammar (a reason first, then element-operator-element groups).
pub fn decode_target(
    ts: &TargetSequence,
    perm: &ElementPermutation,
    catalog: &ReasonCatalog,
) -> Result<ProvingSequence, ReformulateError> {
    let mut items = Vec::with_capacity(ts.tokens.len());
    // Position within the current expression group: 0 = expect element or
    // reason, 1 = expect operator, 2 = expect element closing the group.
    let mut phase = 0usize;
    for (position, token) in ts.tokens.iter().enumerate() {
        match token {
            TargetToken::Reason(index) => {
                if phase != 0 {
                    return Err(ReformulateError::Grammar {
                        position,
                        message: format!("reason R_{index} interrupts an expression"),
                    });
                }
                if position > 0 && matches!(ts.tokens[position - 1], TargetToken::Reason(_)) {
                    return Err(ReformulateError::Grammar {
                        position,
                        message: "reason directly follows another reason with no expression".into(),
                    });
                }
                let name = catalog.name_of(*index).ok_or(ReformulateError::ReasonIndexOutOfRange {
                    position,
                    index: *index,
                    size: catalog.len(),
                })?;
                items.push(ProvingToken::Reason(name.to_string()));
            }
            TargetToken::Operator(op) => {
                if position == 0 {
                    return Err(ReformulateError::Grammar {
                        position,
                        message: "sequence must begin with a reason".into(),
                    });
                }
                if phase != 1 {
                    return Err(ReformulateError::Grammar {
                        position,
                        message: format!("operator '{op}' outside element-operator-element form"),
                    });
                }
                items.push(ProvingToken::Operator(op.clone()));
                phase = 2;
            }
            TargetToken::Element(index) => {
                if position == 0 {
                    return Err(ReformulateError::Grammar {
                        position,
                        message: "sequence must begin with a reason".into(),
                    });
                }
                if *index >= perm.shuffled.len() {
                    return Err(ReformulateError::ElementIndexOutOfRange {
                        position,
                        index: *index,
                        count: perm.shuffled.len(),
                    });
                }
                items.push(ProvingToken::Element(perm.shuffled[*index].clone()));
                phase = if phase == 0 { 1 } else { 0 };
            }
        }
    }
    if phase != 0 {
        return Err(ReformulateError::Grammar {
            position: ts.tokens.len(),
            message: "sequence ends inside an expression".into(),
        });
    }
    if let Some(last) = items.last() {
        if matches!(last, ProvingToken::Reason(_)) {
            return Err(ReformulateError::Grammar {
                position: ts.tokens.len() - 1,
                message: "sequence ends with a reason that has no expression".into(),
            });
        }
    }
    Ok(ProvingSequence { items })
}

/// Append the shuffled element list to the problem text.
pub fn augment_problem_text(text: &str, perm: &ElementPermutation) -> String {
    format!("{text}{ELEMENT_LIST_SEPARATOR}{}", perm.shuffled.join(", "))
}
