//! Parameterized synthetic corpus: templated proofs over the reason catalog
//! and templated calculation problems with gold programs. It exists so the
//! full pipeline and its checks run without the real dataset.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Expression, GeometryProblem, ProblemKind, Proof, ProofStep, Subtask};
use crate::rng::{derive_seed, SplitMix64};

/// Generation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub proving: usize,
    pub calculation: usize,
    pub seed: u64,
}

/// Per-subtask counts, written next to every generated corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub total: usize,
    pub proving_total: usize,
    pub calculation_total: usize,
    pub proving_subtasks: BTreeMap<String, usize>,
    pub calculation_subtasks: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub proving: Vec<GeometryProblem>,
    pub calculation: Vec<GeometryProblem>,
    pub manifest: Manifest,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("failed accessing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: {message}")]
    Format { path: String, message: String },
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json)
            .map_err(|source| ManifestError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let body = std::fs::read_to_string(path)
            .map_err(|source| ManifestError::Io { path: path.display().to_string(), source })?;
        serde_json::from_str(&body)
            .map_err(|e| ManifestError::Format { path: path.display().to_string(), message: e.to_string() })
    }
}

/// Generate the corpus. Subtasks rotate round-robin so counts stay balanced;
/// all randomness derives from the generation seed plus the problem index.
pub fn generate(spec: &SyntheticSpec) -> SyntheticCorpus {
    let mut proving = Vec::with_capacity(spec.proving);
    let mut proving_subtasks: BTreeMap<String, usize> = BTreeMap::new();
    for i in 0..spec.proving {
        let subtask = Subtask::PROVING[i % Subtask::PROVING.len()];
        let mut rng = SplitMix64::new(derive_seed(spec.seed, "synthetic-prove", &i.to_string()));
        let problem = proving_problem(i, subtask, &mut rng);
        *proving_subtasks.entry(subtask.name().to_string()).or_insert(0) += 1;
        proving.push(problem);
    }

    let mut calculation = Vec::with_capacity(spec.calculation);
    let mut calculation_subtasks: BTreeMap<String, usize> = BTreeMap::new();
    for i in 0..spec.calculation {
        let mut rng = SplitMix64::new(derive_seed(spec.seed, "synthetic-calc", &i.to_string()));
        let problem = calculation_problem(i, &mut rng);
        *calculation_subtasks.entry(problem.subtask.name().to_string()).or_insert(0) += 1;
        calculation.push(problem);
    }

    let manifest = Manifest {
        version: 1,
        seed: spec.seed,
        total: spec.proving + spec.calculation,
        proving_total: spec.proving,
        calculation_total: spec.calculation,
        proving_subtasks,
        calculation_subtasks,
    };
    SyntheticCorpus { proving, calculation, manifest }
}

/// Distinct uppercase point names.
fn points(rng: &mut SplitMix64, n: usize) -> Vec<char> {
    let mut alphabet: Vec<char> = ('A'..='Z').collect();
    crate::rng::shuffle(&mut alphabet, rng);
    alphabet.truncate(n);
    alphabet
}

fn seg(a: char, b: char) -> String {
    format!("{a}{b}")
}

fn tri(a: char, b: char, c: char) -> String {
    format!("△{a}{b}{c}")
}

fn ang(points: &[char]) -> String {
    format!("∠{}", points.iter().collect::<String>())
}

/// Letters of an element, without its symbol prefix (for prose rendering).
fn letters(element: &str) -> &str {
    element.trim_start_matches(|c: char| !c.is_ascii_alphabetic())
}

fn step(reason: &str, expressions: Vec<Expression>) -> ProofStep {
    ProofStep { reason: reason.to_string(), expressions }
}

fn proving_problem(index: usize, subtask: Subtask, rng: &mut SplitMix64) -> GeometryProblem {
    let template = rng.below(2) as usize;
    let (text, steps) = match subtask {
        Subtask::Parallel => parallel_template(template, rng),
        Subtask::Triangle => triangle_template(template, rng),
        Subtask::Quadrangle => quadrangle_template(template, rng),
        Subtask::Congruent => congruent_template(template, rng),
        Subtask::Similarity => similarity_template(template, rng),
        _ => unreachable!("proving subtasks only"),
    };
    GeometryProblem {
        id: format!("prove-{index:05}"),
        kind: ProblemKind::Proving,
        text,
        diagram: None,
        choices: None,
        answer_index: None,
        program: None,
        proof: Some(Proof { steps }),
        subtask,
        solution_text: None,
    }
}

fn parallel_template(template: usize, rng: &mut SplitMix64) -> (String, Vec<ProofStep>) {
    let p = points(rng, 6);
    match template {
        0 => {
            let (l1, l2) = (seg(p[0], p[1]), seg(p[2], p[3]));
            let (a1, a2) = (ang(&[p[0], p[1], p[2]]), ang(&[p[3], p[2], p[1]]));
            (
                format!(
                    "Lines {l1} and {l2} are cut by the transversal {}. Given {l1} ∥ {l2}, prove that angle {} = angle {}.",
                    seg(p[1], p[2]),
                    letters(&a1),
                    letters(&a2)
                ),
                vec![
                    step("Given", vec![Expression::new(l1, "∥", l2)]),
                    step("AlternateInteriorAngles", vec![Expression::new(a1, "=", a2)]),
                ],
            )
        }
        _ => {
            let (l1, l2, l3) = (seg(p[0], p[1]), seg(p[2], p[3]), seg(p[4], p[5]));
            (
                format!("Given {l1} ∥ {l2} and {l2} ∥ {l3}, prove that {l1} ∥ {l3}."),
                vec![
                    step("Given", vec![Expression::new(l1.clone(), "∥", l2.clone())]),
                    step("Given", vec![Expression::new(l2, "∥", l3.clone())]),
                    step("TransitiveProperty", vec![Expression::new(l1, "∥", l3)]),
                ],
            )
        }
    }
}

fn triangle_template(template: usize, rng: &mut SplitMix64) -> (String, Vec<ProofStep>) {
    let p = points(rng, 6);
    match template {
        0 => {
            let (s1, s2) = (seg(p[0], p[1]), seg(p[0], p[2]));
            let (a1, a2) = (ang(&[p[0], p[1], p[2]]), ang(&[p[0], p[2], p[1]]));
            (
                format!(
                    "In triangle {}{}{}, {s1} = {s2}. Prove that angle {} = angle {}.",
                    p[0], p[1], p[2], letters(&a1), letters(&a2)
                ),
                vec![
                    step("Given", vec![Expression::new(s1, "=", s2)]),
                    step("IsoscelesTriangle", vec![Expression::new(a1, "=", a2)]),
                ],
            )
        }
        _ => {
            let (s1, s2) = (seg(p[0], p[1]), seg(p[3], p[4]));
            let (a1, a2) = (ang(&[p[0], p[1], p[2]]), ang(&[p[3], p[4], p[5]]));
            (
                format!(
                    "{s1} is perpendicular to {} and {s2} is perpendicular to {}. Prove that angle {} = angle {}.",
                    seg(p[1], p[2]),
                    seg(p[4], p[5]),
                    letters(&a1),
                    letters(&a2)
                ),
                vec![
                    step("Given", vec![Expression::new(s1, "⊥", seg(p[1], p[2]))]),
                    step("Given", vec![Expression::new(s2, "⊥", seg(p[4], p[5]))]),
                    step("RightAngle", vec![Expression::new(a1, "=", a2)]),
                ],
            )
        }
    }
}

fn quadrangle_template(template: usize, rng: &mut SplitMix64) -> (String, Vec<ProofStep>) {
    let p = points(rng, 4);
    let (ab, cd) = (seg(p[0], p[1]), seg(p[3], p[2]));
    let (ad, bc) = (seg(p[0], p[3]), seg(p[1], p[2]));
    let quad: String = p.iter().collect();
    let premises = vec![
        step("Given", vec![Expression::new(ab.clone(), "∥", cd.clone())]),
        step("Given", vec![Expression::new(ad.clone(), "∥", bc.clone())]),
    ];
    match template {
        0 => {
            let mut steps = premises;
            steps.push(step("ParallelogramOppositeSides", vec![Expression::new(ab.clone(), "=", cd.clone())]));
            (
                format!("In quadrilateral {quad}, {ab} ∥ {cd} and {ad} ∥ {bc}. Prove that {ab} = {cd}."),
                steps,
            )
        }
        _ => {
            let (a1, a2) = (ang(&[p[3], p[0], p[1]]), ang(&[p[1], p[2], p[3]]));
            let mut steps = premises;
            steps.push(step("ParallelogramOppositeAngles", vec![Expression::new(a1.clone(), "=", a2.clone())]));
            (
                format!(
                    "In quadrilateral {quad}, {ab} ∥ {cd} and {ad} ∥ {bc}. Prove that angle {} = angle {}.",
                    letters(&a1),
                    letters(&a2)
                ),
                steps,
            )
        }
    }
}

fn congruent_template(template: usize, rng: &mut SplitMix64) -> (String, Vec<ProofStep>) {
    let p = points(rng, 6);
    let (t1, t2) = (tri(p[0], p[1], p[2]), tri(p[3], p[4], p[5]));
    match template {
        0 => {
            let (s1, s2) = (seg(p[0], p[1]), seg(p[3], p[4]));
            let (a1, a2) = (ang(&[p[0], p[1], p[2]]), ang(&[p[3], p[4], p[5]]));
            let (c1, c2) = (seg(p[1], p[2]), seg(p[4], p[5]));
            (
                format!(
                    "In triangles {}{}{} and {}{}{}, {s1} = {s2} and angle {} = angle {}. Given {c1} = {c2}, prove that {t1} ≅ {t2}.",
                    p[0], p[1], p[2], p[3], p[4], p[5], letters(&a1), letters(&a2)
                ),
                vec![
                    step("Given", vec![Expression::new(s1, "=", s2)]),
                    step("Given", vec![Expression::new(a1, "=", a2)]),
                    step("Given", vec![Expression::new(c1, "=", c2)]),
                    step("SAS", vec![Expression::new(t1, "≅", t2)]),
                ],
            )
        }
        _ => {
            // Midpoint chain in the style of shared-vertex congruence.
            let (m1, m2) = (seg(p[0], p[1]), seg(p[1], p[2]));
            let (w1, w2) = (seg(p[3], p[0]), seg(p[4], p[2]));
            let (x1, x2) = (seg(p[1], p[3]), seg(p[1], p[4]));
            let (aa, bb) = (ang(&[p[3], p[0], p[1]]), ang(&[p[4], p[2], p[1]]));
            let (t1, t2) = (tri(p[0], p[1], p[3]), tri(p[2], p[1], p[4]));
            (
                format!(
                    "{} is the midpoint of {}{}. Given {w1} = {w2} and {x1} = {x2}, prove that angle {} = angle {}.",
                    p[1], p[0], p[2], letters(&aa), letters(&bb)
                ),
                vec![
                    step("Midpoint", vec![Expression::new(m1, "=", m2)]),
                    step("Given", vec![Expression::new(w1, "=", w2)]),
                    step("Given", vec![Expression::new(x1, "=", x2)]),
                    step("SSS", vec![Expression::new(t1, "≅", t2)]),
                    step("CPCTC", vec![Expression::new(aa, "=", bb)]),
                ],
            )
        }
    }
}

fn similarity_template(template: usize, rng: &mut SplitMix64) -> (String, Vec<ProofStep>) {
    let p = points(rng, 6);
    let (t1, t2) = (tri(p[0], p[1], p[2]), tri(p[3], p[4], p[5]));
    match template {
        0 => {
            let (a1, a2) = (ang(&[p[0], p[1], p[2]]), ang(&[p[3], p[4], p[5]]));
            let (b1, b2) = (ang(&[p[1], p[2], p[0]]), ang(&[p[4], p[5], p[3]]));
            (
                format!(
                    "In triangles {}{}{} and {}{}{}, angle {} = angle {} and angle {} = angle {}. Prove that {t1} ∼ {t2}.",
                    p[0], p[1], p[2], p[3], p[4], p[5], letters(&a1), letters(&a2), letters(&b1), letters(&b2)
                ),
                vec![
                    step("Given", vec![Expression::new(a1, "=", a2)]),
                    step("Given", vec![Expression::new(b1, "=", b2)]),
                    step("SimilarTrianglesAA", vec![Expression::new(t1, "∼", t2)]),
                ],
            )
        }
        _ => {
            let (a1, a2) = (ang(&[p[0], p[1], p[2]]), ang(&[p[3], p[4], p[5]]));
            (
                format!(
                    "Triangles {}{}{} and {}{}{} have proportional sides about equal angles {} and {}. Prove that {t1} ∼ {t2}.",
                    p[0], p[1], p[2], p[3], p[4], p[5], letters(&a1), letters(&a2)
                ),
                vec![
                    step("Given", vec![Expression::new(a1, "=", a2)]),
                    step("SimilarTrianglesSAS", vec![Expression::new(t1, "∼", t2)]),
                ],
            )
        }
    }
}

const PYTHAGOREAN_TRIPLES: [(u32, u32, u32); 6] =
    [(3, 4, 5), (6, 8, 10), (5, 12, 13), (8, 15, 17), (9, 12, 15), (7, 24, 25)];

fn calculation_problem(index: usize, rng: &mut SplitMix64) -> GeometryProblem {
    let template = index % 5;
    let p = points(rng, 6);
    let (text, program, value, subtask, solution) = match template {
        0 => {
            let (a, b, c) = PYTHAGOREAN_TRIPLES[rng.below(PYTHAGOREAN_TRIPLES.len() as u64) as usize];
            let (x, y, z) = (p[0], p[1], p[2]);
            (
                format!(
                    "In right triangle {x}{y}{z}, angle {y} = 90, {x}{y} = {a} and {y}{z} = {b}. Find the length of {x}{z}."
                ),
                vec!["gougu_add", "N1", "N2"],
                c as f64,
                Subtask::Length,
                format!(
                    "Since angle {y} = 90, {x}{z} × {x}{z} = {a} × {a} + {b} × {b}, so {x}{z} = {c}"
                ),
            )
        }
        1 => {
            let x = 20 + rng.below(140);
            let (a, b, c) = (p[0], p[1], p[2]);
            (
                format!("Angle {a}{b}{c} measures {x} degrees. Find the measure of its supplement."),
                vec!["minus", "C6", "N0"],
                (180 - x) as f64,
                Subtask::Angle,
                format!("The supplement of angle {a}{b}{c} = 180 − {x} = {}", 180 - x),
            )
        }
        2 => {
            let (a1, a2) = (30 + rng.below(60), 30 + rng.below(60));
            let (a, b, c) = (p[0], p[1], p[2]);
            (
                format!(
                    "In triangle {a}{b}{c}, angle {a} = {a1} and angle {b} = {a2}. Find angle {c}."
                ),
                vec!["add", "N0", "N1", "minus", "C6", "V0"],
                (180 - a1 - a2) as f64,
                Subtask::Angle,
                format!(
                    "angle {c} = 180 − {a1} − {a2} = {}",
                    180 - a1 - a2
                ),
            )
        }
        3 => {
            // Similar triangles, proportional side (the worked-solution shape
            // of the executed example: value = b·c/a).
            let scale = 2 + rng.below(3);
            let a = 2 + rng.below(6);
            let c = 2 + rng.below(6);
            let b = a * scale;
            let v = c * scale;
            let (d, e, f, x, y, z) = (p[0], p[1], p[2], p[3], p[4], p[5]);
            (
                format!(
                    "Triangle {d}{e}{f} is similar to triangle {x}{y}{z}. {x}{y} = {a}, {d}{e} = {b} and {y}{z} = {c}. Find {e}{f}."
                ),
                vec!["proportion", "N1", "N2", "N0"],
                v as f64,
                Subtask::Length,
                format!(
                    "Since triangle {d}{e}{f} ∼ triangle {x}{y}{z}, {e}{f} = {b} × {c} / {a} = {v}"
                ),
            )
        }
        _ => {
            let base = 2 * (2 + rng.below(10));
            let height = 3 + rng.below(10);
            let v = (base * height) as f64 / 2.0;
            let (a, b, c) = (p[0], p[1], p[2]);
            (
                format!(
                    "Triangle {a}{b}{c} has base {base} and height {height}. Find its area."
                ),
                vec!["mul", "N0", "N1", "half", "V0"],
                v,
                Subtask::Other,
                format!("Area of triangle {a}{b}{c} = {base} × {height} / 2 = {v}"),
            )
        }
    };

    let (choices, answer_index) = choices_around(value, rng);
    GeometryProblem {
        id: format!("calc-{index:05}"),
        kind: ProblemKind::Calculation,
        text,
        diagram: None,
        choices: Some(choices),
        answer_index: Some(answer_index),
        program: Some(program.into_iter().map(str::to_string).collect()),
        proof: None,
        subtask,
        solution_text: Some(solution),
    }
}

/// The correct value plus three distractors, shuffled. Distractor spacing
/// stays above the relative answer tolerance at these magnitudes.
fn choices_around(value: f64, rng: &mut SplitMix64) -> (Vec<f64>, usize) {
    let delta = (value.abs() * 0.25).max(2.0);
    let mut choices = [
        value,
        value + delta,
        (value - delta).max(value / 2.0).min(value - 2.0),
        value + 2.0 * delta,
    ];
    // Guard against accidental coincidences after the max/min clamps.
    for i in 1..4 {
        while choices[..i].iter().any(|&c| (c - choices[i]).abs() < 1.0) {
            choices[i] += delta;
        }
    }
    let mut order: Vec<usize> = (0..4).collect();
    crate::rng::shuffle(&mut order, rng);
    let shuffled: Vec<f64> = order.iter().map(|&i| choices[i]).collect();
    let answer_index = order.iter().position(|&i| i == 0).unwrap();
    (shuffled, answer_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::validate_problem;
    use crate::interpreter::{execute_program, parse_program, NumberEnvironment};

    #[test]
    fn generated_problems_validate_and_counts_match_manifest() {
        let spec = SyntheticSpec { proving: 40, calculation: 25, seed: 17 };
        let corpus = generate(&spec);
        assert_eq!(corpus.proving.len(), 40);
        assert_eq!(corpus.calculation.len(), 25);
        for p in corpus.proving.iter().chain(&corpus.calculation) {
            let violations = validate_problem(p);
            assert!(violations.is_empty(), "{}: {violations:?}", p.id);
        }
        let by_subtask = |problems: &[GeometryProblem]| {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for p in problems {
                *counts.entry(p.subtask.name().to_string()).or_insert(0) += 1;
            }
            counts
        };
        assert_eq!(by_subtask(&corpus.proving), corpus.manifest.proving_subtasks);
        assert_eq!(by_subtask(&corpus.calculation), corpus.manifest.calculation_subtasks);
        assert_eq!(corpus.manifest.total, 65);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec { proving: 10, calculation: 10, seed: 3 };
        let a = generate(&spec);
        let b = generate(&spec);
        assert_eq!(a.proving, b.proving);
        assert_eq!(a.calculation, b.calculation);
        assert_eq!(a.manifest, b.manifest);
    }

    #[test]
    fn gold_programs_execute_to_the_annotated_answer() {
        let spec = SyntheticSpec { proving: 0, calculation: 60, seed: 5 };
        let corpus = generate(&spec);
        for p in &corpus.calculation {
            let env = NumberEnvironment::from_text(&p.text);
            let program = parse_program(p.program.as_ref().unwrap()).expect("gold program parses");
            let value = execute_program(&program, &env).expect("gold program executes");
            let choices = p.choices.as_ref().unwrap();
            let answer = choices[p.answer_index.unwrap()];
            assert!(
                (value - answer).abs() <= 1e-9,
                "{}: program value {value} vs annotated answer {answer}",
                p.id
            );
            // Distractors must not also match within the default tolerance.
            for (i, &c) in choices.iter().enumerate() {
                if i != p.answer_index.unwrap() {
                    assert!(
                        (value - c).abs() > 0.01 * c.abs().max(1.0),
                        "{}: distractor {c} too close to {value}",
                        p.id
                    );
                }
            }
        }
    }

    #[test]
    fn solution_texts_carry_numbers_for_pretraining() {
        let spec = SyntheticSpec { proving: 0, calculation: 20, seed: 9 };
        let corpus = generate(&spec);
        for p in &corpus.calculation {
            let seq =
                crate::pretrain::extract_solution_sequence(p.solution_text.as_ref().unwrap());
            assert!(!seq.tokens.is_empty(), "{}: empty solution sequence", p.id);
            assert!(!seq.source_numbers.is_empty(), "{}: no numbers in solution", p.id);
        }
    }

    #[test]
    fn manifest_save_load_round_trips() {
        let spec = SyntheticSpec { proving: 12, calculation: 8, seed: 2 };
        let corpus = generate(&spec);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        corpus.manifest.save(&path).unwrap();
        assert_eq!(Manifest::load(&path).unwrap(), corpus.manifest);
    }
}
