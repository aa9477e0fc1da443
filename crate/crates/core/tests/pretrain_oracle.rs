//! Solution-sequence extraction against an independent regex oracle: the
//! number of NS slots must equal the number of numeric literals, and slot
//! indices must be dense from zero.

use geoseq_core::pretrain::extract_solution_sequence;
use geoseq_core::synthetic::{generate, SyntheticSpec};
use regex::Regex;

#[test]
fn ns_token_count_matches_regex_oracle_over_synthetic_corpus() {
    let number_re = Regex::new(r"\d+(\.\d+)?").unwrap();
    let corpus = generate(&SyntheticSpec { proving: 0, calculation: 120, seed: 0x90 });
    for problem in &corpus.calculation {
        let solution = problem.solution_text.as_ref().unwrap();
        let seq = extract_solution_sequence(solution);
        let ns_count = seq.tokens.iter().filter(|t| t.starts_with("NS_")).count();
        let oracle_count = number_re.find_iter(solution).count();
        assert_eq!(
            ns_count, oracle_count,
            "{}: {ns_count} NS tokens vs {oracle_count} literals in '{solution}'",
            problem.id
        );
        assert_eq!(seq.source_numbers.len(), ns_count);
        // Dense indices 0..k-1 in appearance order.
        let mut expected = 0usize;
        for token in &seq.tokens {
            if let Some(idx) = token.strip_prefix("NS_") {
                assert_eq!(idx.parse::<usize>().unwrap(), expected, "{}", problem.id);
                expected += 1;
            }
        }
    }
}

#[test]
fn ns_slots_record_the_literal_values() {
    let number_re = Regex::new(r"\d+(\.\d+)?").unwrap();
    let corpus = generate(&SyntheticSpec { proving: 0, calculation: 40, seed: 0x91 });
    for problem in &corpus.calculation {
        let solution = problem.solution_text.as_ref().unwrap();
        let seq = extract_solution_sequence(solution);
        let oracle_values: Vec<f64> = number_re
            .find_iter(solution)
            .map(|m| m.as_str().parse().unwrap())
            .collect();
        assert_eq!(seq.source_numbers, oracle_values, "{}", problem.id);
    }
}
