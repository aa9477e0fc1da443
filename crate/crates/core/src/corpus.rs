//! Problem data model, line-delimited JSON corpus format, validation, and
//! deterministic splitting.
//!
//! A corpus file holds one problem per line as UTF-8 JSON. Diagrams are
//! referenced by relative path (or `null` for text-only problems). Splitting
//! shuffles with a seeded PRNG and cuts by the configured ratios, so equal
//! inputs always reproduce equal splits.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reformulator::{normalize_element, ReasonCatalog, OPERATOR_SYMBOLS};
use crate::rng::{shuffle, SplitMix64};

/// Problem family: multiple-choice calculation or annotated proof.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Calculation,
    Proving,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Calculation => write!(f, "calculation"),
            Self::Proving => write!(f, "proving"),
        }
    }
}

/// Topic tag. Proving problems use the five proof sub-tasks; calculation
/// problems use angle/length/other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subtask {
    Parallel,
    Triangle,
    Quadrangle,
    Congruent,
    Similarity,
    Angle,
    Length,
    Other,
}

impl Subtask {
    pub const PROVING: [Subtask; 5] = [
        Subtask::Parallel,
        Subtask::Triangle,
        Subtask::Quadrangle,
        Subtask::Congruent,
        Subtask::Similarity,
    ];
    pub const CALCULATION: [Subtask; 3] = [Subtask::Angle, Subtask::Length, Subtask::Other];

    pub fn name(&self) -> &'static str {
        match self {
            Subtask::Parallel => "parallel",
            Subtask::Triangle => "triangle",
            Subtask::Quadrangle => "quadrangle",
            Subtask::Congruent => "congruent",
            Subtask::Similarity => "similarity",
            Subtask::Angle => "angle",
            Subtask::Length => "length",
            Subtask::Other => "other",
        }
    }

    pub fn is_proving(&self) -> bool {
        Self::PROVING.contains(self)
    }
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// One proof expression: an element, an operator, an element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(String, String, String)", into = "(String, String, String)")]
pub struct Expression {
    pub lhs: String,
    pub op: String,
    pub rhs: String,
}

impl Expression {
    pub fn new(lhs: impl Into<String>, op: impl Into<String>, rhs: impl Into<String>) -> Self {
        Self { lhs: lhs.into(), op: op.into(), rhs: rhs.into() }
    }
}

impl From<(String, String, String)> for Expression {
    fn from((lhs, op, rhs): (String, String, String)) -> Self {
        Self { lhs, op, rhs }
    }
}

impl From<Expression> for (String, String, String) {
    fn from(e: Expression) -> Self {
        (e.lhs, e.op, e.rhs)
    }
}

/// One proof step: a reason plus the expressions it justifies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofStep {
    pub reason: String,
    pub expressions: Vec<Expression>,
}

/// Ordered proof steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proof {
    pub steps: Vec<ProofStep>,
}

/// One calculation or proving problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryProblem {
    pub id: String,
    pub kind: ProblemKind,
    pub text: String,
    /// Relative path to a raster diagram, or `None` for text-only problems.
    #[serde(default)]
    pub diagram: Option<String>,
    /// Four numeric options (calculation only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<f64>>,
    /// 0-based index of the correct choice (calculation only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_index: Option<usize>,
    /// Gold program token sequence (calculation only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<Vec<String>>,
    /// Annotated proof (proving only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proof: Option<Proof>,
    pub subtask: Subtask,
    /// Worked solution text (calculation only; consumed by expression pretraining).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution_text: Option<String>,
}

/// Split ratios and shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: (f64, f64, f64),
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(ratios: (f64, f64, f64), seed: u64) -> Result<Self, CorpusError> {
        let (a, b, c) = ratios;
        if a < 0.0 || b < 0.0 || c < 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(CorpusError::BadRatios { ratios });
        }
        Ok(Self { ratios, seed })
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { ratios: (0.70, 0.15, 0.15), seed: 0 }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("problem '{id}': {}", violations.join("; "))]
    Invalid { id: String, violations: Vec<String> },
    #[error("problem '{id}': expected kind {expected}, found {found}")]
    KindMismatch { id: String, expected: ProblemKind, found: ProblemKind },
    #[error("split ratios {ratios:?} must be nonnegative and sum to 1")]
    BadRatios { ratios: (f64, f64, f64) },
}

/// Load a line-delimited JSON corpus. When `expected_kind` is given, every
/// record must carry that kind. Every record must pass [`validate_problem`].
pub fn load_corpus(
    path: &Path,
    expected_kind: Option<ProblemKind>,
) -> Result<Vec<GeometryProblem>, CorpusError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| CorpusError::Io { path: display.clone(), source })?;
    let reader = BufReader::new(file);
    let catalog = ReasonCatalog::builtin();
    let mut problems = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io { path: display.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let problem: GeometryProblem = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: display.clone(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        if let Some(expected) = expected_kind {
            if problem.kind != expected {
                return Err(CorpusError::KindMismatch {
                    id: problem.id.clone(),
                    expected,
                    found: problem.kind,
                });
            }
        }
        let violations = validate_problem_with(&problem, &catalog);
        if !violations.is_empty() {
            return Err(CorpusError::Invalid { id: problem.id.clone(), violations });
        }
        problems.push(problem);
    }
    Ok(problems)
}

/// Write a corpus as line-delimited JSON. Inverse of [`load_corpus`].
pub fn save_corpus(problems: &[GeometryProblem], path: &Path) -> Result<(), CorpusError> {
    let display = path.display().to_string();
    let file = File::create(path).map_err(|source| CorpusError::Io { path: display.clone(), source })?;
    let mut writer = BufWriter::new(file);
    for p in problems {
        let line = serde_json::to_string(p).expect("problem serialization cannot fail");
        writeln!(writer, "{line}").map_err(|source| CorpusError::Io { path: display.clone(), source })?;
    }
    writer.flush().map_err(|source| CorpusError::Io { path: display, source })?;
    Ok(())
}

/// Check every type invariant. Violations are data: the list is empty iff the
/// problem is well-formed.
pub fn validate_problem(p: &GeometryProblem) -> Vec<String> {
    validate_problem_with(p, &ReasonCatalog::builtin())
}

/// [`validate_problem`] against a specific reason catalog.
pub fn validate_problem_with(p: &GeometryProblem, catalog: &ReasonCatalog) -> Vec<String> {
    let mut violations = Vec::new();
    match p.kind {
        ProblemKind::Calculation => {
            match &p.choices {
                None => violations.push("choices: required for calculation problems".into()),
                Some(c) if c.len() != 4 => {
                    violations.push(format!("choices: must have 4 entries, found {}", c.len()))
                }
                _ => {}
            }
            match p.answer_index {
                None => violations.push("answer_index: required for calculation problems".into()),
                Some(i) if i > 3 => {
                    violations.push(format!("answer_index: must be in 0..=3, found {i}"))
                }
                _ => {}
            }
            if p.program.is_none() {
                violations.push("program: required for calculation problems".into());
            }
            if p.proof.is_some() {
                violations.push("proof: must be absent for calculation problems".into());
            }
            if p.subtask.is_proving() {
                violations.push(format!(
                    "subtask: '{}' is a proving sub-task; calculation problems use angle/length/other",
                    p.subtask
                ));
            }
        }
        ProblemKind::Proving => {
            match &p.proof {
                None => violations.push("proof: required for proving problems".into()),
                Some(proof) => validate_proof(proof, catalog, &mut violations),
            }
            if p.choices.is_some() {
                violations.push("choices: must be absent for proving problems".into());
            }
            if !p.subtask.is_proving() {
                violations.push(format!(
                    "subtask: '{}' is a calculation sub-task; proving problems use the five proof topics",
                    p.subtask
                ));
            }
        }
    }
    violations
}

fn validate_proof(proof: &Proof, catalog: &ReasonCatalog, violations: &mut Vec<String>) {
    if proof.steps.is_empty() {
        violations.push("proof.steps: must be non-empty".into());
    }
    for (i, step) in proof.steps.iter().enumerate() {
        if catalog.index_of(&step.reason).is_none() {
            violations.push(format!(
                "proof.steps[{i}].reason: '{}' is not in the {}-entry ReasonCatalog",
                step.reason,
                catalog.len()
            ));
        }
        if step.expressions.is_empty() {
            violations.push(format!("proof.steps[{i}].expressions: must be non-empty"));
        }
        for (j, expr) in step.expressions.iter().enumerate() {
            if !OPERATOR_SYMBOLS.contains(&expr.op.as_str()) {
                violations.push(format!(
                    "proof.steps[{i}].expressions[{j}].op: '{}' is not in the operator inventory",
                    expr.op
                ));
            }
            for (slot, value) in [("lhs", &expr.lhs), ("rhs", &expr.rhs)] {
                if normalize_element(value).is_empty() {
                    violations.push(format!(
                        "proof.steps[{i}].expressions[{j}].{slot}: element must be non-empty"
                    ));
                }
            }
        }
    }
}

/// Train, validation, and test subsets, in that order.
pub type Splits = (Vec<GeometryProblem>, Vec<GeometryProblem>, Vec<GeometryProblem>);

/// Shuffle with the split seed and cut into train/val/test.
///
/// Sizes: val and test are `round(N * ratio)`, train takes the remainder.
pub fn split_corpus(problems: &[GeometryProblem], spec: &SplitSpec) -> Result<Splits, CorpusError> {
    let spec = SplitSpec::new(spec.ratios, spec.seed)?;
    let sizes = split_sizes(problems.len(), spec.ratios);
    let mut order: Vec<usize> = (0..problems.len()).collect();
    shuffle(&mut order, &mut SplitMix64::new(spec.seed));
    let take = |range: std::ops::Range<usize>| -> Vec<GeometryProblem> {
        order[range].iter().map(|&i| problems[i].clone()).collect()
    };
    let (n_train, n_val, _) = sizes;
    Ok((
        take(0..n_train),
        take(n_train..n_train + n_val),
        take(n_train + n_val..problems.len()),
    ))
}

/// Split sizes for `n` items: `round(n * ratio)` for val and test, with the
/// remainder assigned to train.
pub fn split_sizes(n: usize, ratios: (f64, f64, f64)) -> (usize, usize, usize) {
    let n_val = (n as f64 * ratios.1).round() as usize;
    let n_test = (n as f64 * ratios.2).round() as usize;
    let n_val = n_val.min(n);
    let n_test = n_test.min(n - n_val);
    (n - n_val - n_test, n_val, n_test)
}
