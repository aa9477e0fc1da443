//! Metrics: calculation answer accuracy (overall and angle/length buckets)
//! and proving top-K exact-match accuracy (overall and per sub-task), plus
//! the report renderer and the prediction dump format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{GeometryProblem, ProblemKind, Subtask};
use crate::interpreter::{select_answer, NumberEnvironment};
use crate::tokenizer::CONTROL_TOKENS;

/// Beam strings for one problem, best first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemPrediction {
    pub id: String,
    pub beams: Vec<String>,
}

/// Gold target for a proving problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldTarget {
    pub target: String,
    pub subtask: Subtask,
}

/// Hits over count for one bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Metric {
    pub hits: usize,
    pub count: usize,
}

impl Metric {
    pub fn accuracy(&self) -> Option<f64> {
        (self.count > 0).then(|| self.hits as f64 / self.count as f64)
    }

    fn record(&mut self, hit: bool) {
        self.count += 1;
        self.hits += usize::from(hit);
    }

    fn render(&self) -> String {
        match self.accuracy() {
            Some(a) => format!("{:.1}% ({}/{})", a * 100.0, self.hits, self.count),
            None => format!("n/a ({}/{})", self.hits, self.count),
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("K must be at least 1, got {k}")]
    BadK { k: usize },
    #[error("empty evaluation set")]
    EmptySet,
    #[error("prediction for unknown problem '{id}'")]
    UnknownProblem { id: String },
    #[error("gold target for problem '{id}' is empty")]
    EmptyGold { id: String },
    #[error("problem '{id}' is not a well-formed {expected} problem")]
    WrongKind { id: String, expected: ProblemKind },
    #[error("failed accessing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed prediction record")]
    BadDump { path: String, line: usize },
}

/// Remove control tokens (`<pad>`, `<bos>`, `<eos>`, `<mask>`, `<unk>` is kept
/// — it is a real prediction) and re-join; exact match runs on this form.
pub fn strip_control_tokens(s: &str) -> String {
    s.split_whitespace()
        .filter(|t| !CONTROL_TOKENS[..4].contains(t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Per-subtask and overall top-K exact-match accuracy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopkResult {
    pub overall: Metric,
    pub subtask: BTreeMap<Subtask, Metric>,
}

/// A problem counts as a hit iff any of its best `k` beams equals the gold
/// target exactly after control-token stripping.
pub fn topk_accuracy(
    predictions: &[ProblemPrediction],
    golds: &BTreeMap<String, GoldTarget>,
    k: usize,
) -> Result<TopkResult, EvalError> {
    if k == 0 {
        return Err(EvalError::BadK { k });
    }
    if predictions.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let mut overall = Metric::default();
    let mut subtask: BTreeMap<Subtask, Metric> =
        Subtask::PROVING.iter().map(|&s| (s, Metric::default())).collect();
    for prediction in predictions {
        let gold = golds
            .get(&prediction.id)
            .ok_or_else(|| EvalError::UnknownProblem { id: prediction.id.clone() })?;
        if gold.target.is_empty() {
            return Err(EvalError::EmptyGold { id: prediction.id.clone() });
        }
        let reference = strip_control_tokens(&gold.target);
        let hit = prediction
            .beams
            .iter()
            .take(k)
            .any(|beam| strip_control_tokens(beam) == reference);
        overall.record(hit);
        subtask.entry(gold.subtask).or_default().record(hit);
    }
    Ok(TopkResult { overall, subtask })
}

/// Calculation accuracy: overall plus the angle/length/other buckets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CalcResult {
    pub total: Metric,
    pub angle: Metric,
    pub length: Metric,
    pub other: Metric,
}

/// Run the interpreter's answer selection over each problem's beams and
/// compare with the annotated answer. Unexecutable beam sets count as
/// incorrect.
pub fn calculation_accuracy(
    predictions: &[ProblemPrediction],
    problems: &BTreeMap<String, GeometryProblem>,
    tol: f64,
) -> Result<CalcResult, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let mut result = CalcResult {
        total: Metric::default(),
        angle: Metric::default(),
        length: Metric::default(),
        other: Metric::default(),
    };
    for prediction in predictions {
        let problem = problems
            .get(&prediction.id)
            .ok_or_else(|| EvalError::UnknownProblem { id: prediction.id.clone() })?;
        let (Some(choices), Some(answer_index)) = (&problem.choices, problem.answer_index) else {
            return Err(EvalError::WrongKind {
                id: prediction.id.clone(),
                expected: ProblemKind::Calculation,
            });
        };
        let choices: [f64; 4] = choices.clone().try_into().map_err(|_| EvalError::WrongKind {
            id: prediction.id.clone(),
            expected: ProblemKind::Calculation,
        })?;
        let env = NumberEnvironment::from_text(&problem.text);
        let candidates: Vec<Vec<String>> = prediction
            .beams
            .iter()
            .map(|b| strip_control_tokens(b).split_whitespace().map(str::to_string).collect())
            .collect();
        let selected = select_answer(&candidates, &env, &choices, tol);
        let hit = selected == Some(answer_index);
        result.total.record(hit);
        match problem.subtask {
            Subtask::Angle => result.angle.record(hit),
            Subtask::Length => result.length.record(hit),
            _ => result.other.record(hit),
        }
    }
    Ok(result)
}

/// Echo of the evaluation configuration, written into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub k: usize,
    pub tolerance: f64,
    pub tie_rule: String,
    pub beam_scoring: String,
}

impl ReportConfig {
    pub fn new(k: usize, tolerance: f64) -> Self {
        Self {
            k,
            tolerance,
            tie_rule: "lexicographic-lowest-token-ids".into(),
            beam_scoring: "sum-logprob-no-length-normalization".into(),
        }
    }
}

/// The full evaluation report. Field order is the schema; rendering is
/// byte-stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub config: ReportConfig,
    pub calc_total: Metric,
    pub calc_angle: Metric,
    pub calc_length: Metric,
    pub calc_other: Metric,
    pub prove_top1: Metric,
    pub prove_top10: Metric,
    pub subtask_top10: BTreeMap<String, Metric>,
}

impl EvalReport {
    pub fn new(config: ReportConfig) -> Self {
        Self {
            version: 1,
            config,
            calc_total: Metric::default(),
            calc_angle: Metric::default(),
            calc_length: Metric::default(),
            calc_other: Metric::default(),
            prove_top1: Metric::default(),
            prove_top10: Metric::default(),
            subtask_top10: Subtask::PROVING
                .iter()
                .map(|s| (s.name().to_string(), Metric::default()))
                .collect(),
        }
    }

    pub fn with_calculation(mut self, calc: &CalcResult) -> Self {
        self.calc_total = calc.total;
        self.calc_angle = calc.angle;
        self.calc_length = calc.length;
        self.calc_other = calc.other;
        self
    }

    pub fn with_proving(mut self, top1: &TopkResult, topk: &TopkResult) -> Self {
        self.prove_top1 = top1.overall;
        self.prove_top10 = topk.overall;
        for (s, m) in &topk.subtask {
            self.subtask_top10.insert(s.name().to_string(), *m);
        }
        self
    }
}

/// Render the report as text and JSON, both with stable ordering.
pub fn render_report(report: &EvalReport) -> (String, String) {
    let mut text = String::new();
    let _ = writeln!(text, "geoseq eval report v{}", report.version);
    let _ = writeln!(
        text,
        "config: K={} tolerance={} tie={} scoring={}",
        report.config.k, report.config.tolerance, report.config.tie_rule, report.config.beam_scoring
    );
    let _ = writeln!(text, "calc_total {}", report.calc_total.render());
    let _ = writeln!(text, "calc_angle {}", report.calc_angle.render());
    let _ = writeln!(text, "calc_length {}", report.calc_length.render());
    let _ = writeln!(text, "calc_other {}", report.calc_other.render());
    let _ = writeln!(text, "prove_top1 {}", report.prove_top1.render());
    let _ = writeln!(text, "prove_top10 {}", report.prove_top10.render());
    for (name, metric) in &report.subtask_top10 {
        let _ = writeln!(text, "subtask {} {}", name, metric.render());
    }
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    (text, json)
}

/// Write a prediction dump: one line per problem — id, tab, beams joined by
/// `" ||| "`.
pub fn write_prediction_dump(
    predictions: &[ProblemPrediction],
    path: &Path,
) -> Result<(), EvalError> {
    let mut body = String::new();
    for p in predictions {
        body.push_str(&p.id);
        body.push('\t');
        body.push_str(&p.beams.join(" ||| "));
        body.push('\n');
    }
    fs::write(path, body).map_err(|source| EvalError::Io { path: path.display().to_string(), source })
}

pub fn read_prediction_dump(path: &Path) -> Result<Vec<ProblemPrediction>, EvalError> {
    let display = path.display().to_string();
    let body = fs::read_to_string(path)
        .map_err(|source| EvalError::Io { path: display.clone(), source })?;
    let mut predictions = Vec::new();
    for (idx, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, beams) = line
            .split_once('\t')
            .ok_or_else(|| EvalError::BadDump { path: display.clone(), line: idx + 1 })?;
        predictions.push(ProblemPrediction {
            id: id.to_string(),
            beams: beams.split(" ||| ").map(str::to_string).collect(),
        });
    }
    Ok(predictions)
}
