//! Executor correctness against an independent expression-tree oracle. The
//! oracle evaluates a recursive tree; the executor runs the linearized flat
//! program. Both must agree (value or error) on every generated case.

use geoseq_core::interpreter::{
    execute_program, parse_program, Operator, Program, ProgramToken, CONSTANTS,
    NumberEnvironment,
};
use geoseq_core::rng::SplitMix64;

/// Independent tree representation.
enum Expr {
    Number(usize),
    Const(usize),
    Apply(Operator, Vec<Expr>),
}

/// Recursive oracle evaluation, mirroring the documented operator domains.
fn oracle_eval(expr: &Expr, env: &NumberEnvironment) -> Result<f64, &'static str> {
    match expr {
        Expr::Number(i) => env.numbers.get(*i).copied().ok_or("number out of range"),
        Expr::Const(i) => Ok(CONSTANTS[*i]),
        Expr::Apply(op, children) => {
            let args: Vec<f64> =
                children.iter().map(|c| oracle_eval(c, env)).collect::<Result<_, _>>()?;
            let v = match op {
                Operator::Add => args[0] + args[1],
                Operator::Minus => args[0] - args[1],
                Operator::Mul => args[0] * args[1],
                Operator::Divide => {
                    if args[1] == 0.0 {
                        return Err("division by zero");
                    }
                    args[0] / args[1]
                }
                Operator::Half => args[0] / 2.0,
                Operator::Double => args[0] * 2.0,
                Operator::Square => args[0] * args[0],
                Operator::Sqrt => {
                    if args[0] < 0.0 {
                        return Err("sqrt of negative");
                    }
                    args[0].sqrt()
                }
                Operator::GouguAdd => (args[0] * args[0] + args[1] * args[1]).sqrt(),
                Operator::GouguMinus => (args[0] * args[0] - args[1] * args[1]).abs().sqrt(),
                Operator::Sin => args[0].to_radians().sin(),
                Operator::Cos => args[0].to_radians().cos(),
                Operator::Tan => args[0].to_radians().tan(),
                Operator::Proportion => {
                    if args[2] == 0.0 {
                        return Err("division by zero");
                    }
                    args[0] * args[1] / args[2]
                }
            };
            if !v.is_finite() {
                return Err("non-finite");
            }
            Ok(v)
        }
    }
}

/// Random expression tree of the given depth.
fn random_tree(rng: &mut SplitMix64, depth: usize, n_numbers: usize) -> Expr {
    if depth == 0 || rng.below(4) == 0 {
        return if rng.below(2) == 0 {
            Expr::Number(rng.below(n_numbers as u64) as usize)
        } else {
            Expr::Const(rng.below(CONSTANTS.len() as u64) as usize)
        };
    }
    let op = Operator::ALL[rng.below(Operator::ALL.len() as u64) as usize];
    let children = (0..op.arity()).map(|_| random_tree(rng, depth - 1, n_numbers)).collect();
    Expr::Apply(op, children)
}

/// Post-order linearization: children first, then the node's group, so every
/// internal child is an already-produced `V` slot.
fn linearize(expr: &Expr, out: &mut Vec<ProgramToken>, groups_emitted: &mut usize) -> ProgramToken {
    match expr {
        Expr::Number(i) => ProgramToken::Number(*i),
        Expr::Const(i) => ProgramToken::Const(*i),
        Expr::Apply(op, children) => {
            let operands: Vec<ProgramToken> =
                children.iter().map(|c| linearize(c, out, groups_emitted)).collect();
            out.push(ProgramToken::Op(*op));
            out.extend(operands);
            let var = ProgramToken::Var(*groups_emitted);
            *groups_emitted += 1;
            var
        }
    }
}

fn to_program(expr: &Expr) -> Option<Program> {
    let mut tokens = Vec::new();
    let mut groups = 0usize;
    let root = linearize(expr, &mut tokens, &mut groups);
    if !matches!(root, ProgramToken::Var(_)) {
        return None; // bare terminal, not a program
    }
    Some(Program::from_tokens(tokens).expect("linearized trees are well-formed"))
}

#[test]
fn random_deep_programs_match_tree_oracle() {
    let mut rng = SplitMix64::new(0xBEEF);
    let mut checked = 0usize;
    while checked < 1000 {
        let env = NumberEnvironment::new(vec![
            rng.range_f64(0.5, 90.0),
            rng.range_f64(0.5, 90.0),
            rng.range_f64(0.5, 90.0),
        ]);
        let tree = random_tree(&mut rng, 4, env.numbers.len());
        let Some(program) = to_program(&tree) else { continue };
        checked += 1;
        let oracle = oracle_eval(&tree, &env);
        let executed = execute_program(&program, &env);
        match (oracle, executed) {
            (Ok(expected), Ok(actual)) => {
                assert!(
                    (expected - actual).abs() <= 1e-9,
                    "program '{}' gave {actual}, oracle {expected}",
                    program.to_token_string()
                );
            }
            (Err(_), Err(_)) => {}
            (oracle, executed) => panic!(
                "disagreement on '{}': oracle {oracle:?}, executor {executed:?}",
                program.to_token_string()
            ),
        }
    }
}

#[test]
fn serialized_program_round_trip_matches_direct_execution() {
    let mut rng = SplitMix64::new(0xFACE);
    for _ in 0..200 {
        let env = NumberEnvironment::new(vec![3.0, 6.0, 3.0]);
        let tree = random_tree(&mut rng, 3, 3);
        let Some(program) = to_program(&tree) else { continue };
        let tokens: Vec<String> =
            program.to_token_string().split(' ').map(str::to_string).collect();
        let reparsed = parse_program(&tokens).unwrap();
        assert_eq!(reparsed, program);
        assert_eq!(execute_program(&reparsed, &env), execute_program(&program, &env));
    }
}
