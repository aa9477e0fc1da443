//! Program-sequence interpreter for calculation problems.
//!
//! A program is a flat prefix sequence: each operator is followed by exactly
//! its arity of operand tokens. Operands are numbers from the problem text
//! (`N0`, `N1`, ...), predefined constants (`C0`..`C9`), or earlier
//! intermediate results (`V0`, `V1`, ...). Each operator application appends
//! the next `V` value; the program's value is the last one produced.

use std::fmt;

use thiserror::Error;

/// Predefined constants: 1, 2, 3, 4, 0.5, π, 180, 360, 60, 90.
pub const CONSTANTS: [f64; 10] =
    [1.0, 2.0, 3.0, 4.0, 0.5, std::f64::consts::PI, 180.0, 360.0, 60.0, 90.0];

/// Operator inventory of the program alphabet. Versioned here so it can be
/// realigned to a dataset's annotation without touching the executor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operator {
    Add,
    Minus,
    Mul,
    Divide,
    Half,
    Double,
    Square,
    Sqrt,
    GouguAdd,
    GouguMinus,
    Sin,
    Cos,
    Tan,
    Proportion,
}

impl Operator {
    pub const ALL: [Operator; 14] = [
        Operator::Add,
        Operator::Minus,
        Operator::Mul,
        Operator::Divide,
        Operator::Half,
        Operator::Double,
        Operator::Square,
        Operator::Sqrt,
        Operator::GouguAdd,
        Operator::GouguMinus,
        Operator::Sin,
        Operator::Cos,
        Operator::Tan,
        Operator::Proportion,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Operator::Add => "add",
            Operator::Minus => "minus",
            Operator::Mul => "mul",
            Operator::Divide => "divide",
            Operator::Half => "half",
            Operator::Double => "double",
            Operator::Square => "square",
            Operator::Sqrt => "sqrt",
            Operator::GouguAdd => "gougu_add",
            Operator::GouguMinus => "gougu_minus",
            Operator::Sin => "sin",
            Operator::Cos => "cos",
            Operator::Tan => "tan",
            Operator::Proportion => "proportion",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|op| op.name() == name)
    }

    pub fn arity(&self) -> usize {
        match self {
            Operator::Half
            | Operator::Double
            | Operator::Square
            | Operator::Sqrt
            | Operator::Sin
            | Operator::Cos
            | Operator::Tan => 1,
            Operator::Add
            | Operator::Minus
            | Operator::Mul
            | Operator::Divide
            | Operator::GouguAdd
            | Operator::GouguMinus => 2,
            Operator::Proportion => 3,
        }
    }

    /// Apply to the operand values. Trigonometric arguments are degrees.
    pub fn apply(&self, args: &[f64]) -> Result<f64, ExecError> {
        debug_assert_eq!(args.len(), self.arity());
        let v = match self {
            Operator::Add => args[0] + args[1],
            Operator::Minus => args[0] - args[1],
            Operator::Mul => args[0] * args[1],
            Operator::Divide => {
                if args[1] == 0.0 {
                    return Err(ExecError::DivisionByZero);
                }
                args[0] / args[1]
            }
            Operator::Half => args[0] / 2.0,
            Operator::Double => args[0] * 2.0,
            Operator::Square => args[0] * args[0],
            Operator::Sqrt => {
                if args[0] < 0.0 {
                    return Err(ExecError::SqrtOfNegative);
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
                    return Err(ExecError::DivisionByZero);
                }
                args[0] * args[1] / args[2]
            }
        };
        if !v.is_finite() {
            return Err(ExecError::NonFinite);
        }
        Ok(v)
    }
}

/// One program token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProgramToken {
    Op(Operator),
    /// i-th number extracted from the problem text.
    Number(usize),
    /// Predefined constant index.
    Const(usize),
    /// i-th intermediate result.
    Var(usize),
}

impl fmt::Display for ProgramToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProgramToken::Op(op) => write!(f, "{}", op.name()),
            ProgramToken::Number(i) => write!(f, "N{i}"),
            ProgramToken::Const(i) => write!(f, "C{i}"),
            ProgramToken::Var(i) => write!(f, "V{i}"),
        }
    }
}

impl ProgramToken {
    pub fn parse(s: &str) -> Option<Self> {
        if let Some(op) = Operator::from_name(s) {
            return Some(ProgramToken::Op(op));
        }
        let (prefix, rest) = s.split_at(s.len().min(1));
        let index: usize = rest.parse().ok()?;
        match prefix {
            "N" => Some(ProgramToken::Number(index)),
            "C" if index < CONSTANTS.len() => Some(ProgramToken::Const(index)),
            "V" => Some(ProgramToken::Var(index)),
            _ => None,
        }
    }
}

/// A statically validated program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    tokens: Vec<ProgramToken>,
}

impl Program {
    pub fn tokens(&self) -> &[ProgramToken] {
        &self.tokens
    }

    /// Validate an already-tokenized sequence (arity, operand placement,
    /// `V` availability) without string parsing.
    pub fn from_tokens(tokens: Vec<ProgramToken>) -> Result<Self, ParseError> {
        if tokens.is_empty() {
            return Err(ParseError::Empty);
        }
        let mut produced = 0usize;
        let mut pos = 0usize;
        while pos < tokens.len() {
            let ProgramToken::Op(op) = tokens[pos] else {
                return Err(ParseError::ExpectedOperator { position: pos, token: tokens[pos].to_string() });
            };
            let op_pos = pos;
            pos += 1;
            for _ in 0..op.arity() {
                match tokens.get(pos) {
                    None | Some(ProgramToken::Op(_)) => {
                        return Err(ParseError::ArityMismatch {
                            position: op_pos,
                            operator: op.name().to_string(),
                            expected: op.arity(),
                        })
                    }
                    Some(ProgramToken::Var(i)) if *i >= produced => {
                        return Err(ParseError::ForwardReference { position: pos, var: *i })
                    }
                    Some(_) => pos += 1,
                }
            }
            produced += 1;
        }
        Ok(Self { tokens })
    }

    pub fn to_token_string(&self) -> String {
        self.tokens.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ")
    }

    /// Number of operator applications.
    pub fn operator_count(&self) -> usize {
        self.tokens.iter().filter(|t| matches!(t, ProgramToken::Op(_))).count()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty program")]
    Empty,
    #[error("token {position}: unknown token '{token}'")]
    UnknownToken { position: usize, token: String },
    #[error("token {position}: expected an operator, found '{token}'")]
    ExpectedOperator { position: usize, token: String },
    #[error("token {position}: operator '{operator}' needs {expected} operand(s)")]
    ArityMismatch { position: usize, operator: String, expected: usize },
    #[error("token {position}: V{var} referenced before it is produced")]
    ForwardReference { position: usize, var: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of a negative value")]
    SqrtOfNegative,
    #[error("N{index} out of range: only {available} number(s) in the environment")]
    NumberOutOfRange { index: usize, available: usize },
    #[error("non-finite intermediate value")]
    NonFinite,
}

/// Values bound to `N_i` slots plus the fixed constant table.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberEnvironment {
    pub numbers: Vec<f64>,
}

impl NumberEnvironment {
    pub fn new(numbers: Vec<f64>) -> Self {
        Self { numbers }
    }

    /// Left-to-right number extraction from problem text: integers and
    /// decimal literals, including values attached to degree signs; a ratio
    /// like "3/6" contributes two numbers.
    pub fn from_text(text: &str) -> Self {
        Self { numbers: extract_numbers(text) }
    }
}

/// Decimal literals in `text`, left to right.
pub fn extract_numbers(text: &str) -> Vec<f64> {
    let bytes = text.as_bytes();
    let mut numbers = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let literal = std::str::from_utf8(&bytes[start..i]).unwrap();
            numbers.push(literal.parse().expect("digits parse as f64"));
        } else {
            i += 1;
        }
    }
    numbers
}

/// Parse whitespace-separated token strings into a validated [`Program`].
pub fn parse_program<S: AsRef<str>>(tokens: &[S]) -> Result<Program, ParseError> {
    let mut parsed = Vec::with_capacity(tokens.len());
    for (position, raw) in tokens.iter().enumerate() {
        let token = ProgramToken::parse(raw.as_ref()).ok_or_else(|| ParseError::UnknownToken {
            position,
            token: raw.as_ref().to_string(),
        })?;
        parsed.push(token);
    }
    Program::from_tokens(parsed)
}

/// Parse a whitespace-joined program string.
pub fn parse_program_str(s: &str) -> Result<Program, ParseError> {
    parse_program(&s.split_whitespace().collect::<Vec<_>>())
}

/// Run the program: apply each operator in order, appending results as
/// successive `V` values, and return the last one.
pub fn execute_program(program: &Program, env: &NumberEnvironment) -> Result<f64, ExecError> {
    let mut values: Vec<f64> = Vec::new();
    let mut args: Vec<f64> = Vec::with_capacity(3);
    let tokens = program.tokens();
    let mut pos = 0;
    while pos < tokens.len() {
        let ProgramToken::Op(op) = tokens[pos] else {
            unreachable!("validated programs start groups with operators");
        };
        pos += 1;
        args.clear();
        for _ in 0..op.arity() {
            let value = match tokens[pos] {
                ProgramToken::Number(i) => *env.numbers.get(i).ok_or(ExecError::NumberOutOfRange {
                    index: i,
                    available: env.numbers.len(),
                })?,
                ProgramToken::Const(i) => CONSTANTS[i],
                ProgramToken::Var(i) => values[i],
                ProgramToken::Op(_) => unreachable!("validated operand"),
            };
            args.push(value);
            pos += 1;
        }
        values.push(op.apply(&args)?);
    }
    Ok(*values.last().expect("non-empty validated program"))
}

/// Scan beam candidates best-first; the first one that parses, executes, and
/// lands within `tol` (relative) of a choice selects that choice. When
/// several choices match, the closest wins.
pub fn select_answer<S: AsRef<str>>(
    candidate_programs: &[Vec<S>],
    env: &NumberEnvironment,
    choices: &[f64; 4],
    tol: f64,
) -> Option<usize> {
    assert!(tol > 0.0, "tolerance must be positive");
    for candidate in candidate_programs {
        let Ok(program) = parse_program(candidate) else { continue };
        let Ok(value) = execute_program(&program, env) else { continue };
        let mut best: Option<(usize, f64)> = None;
        for (idx, &choice) in choices.iter().enumerate() {
            let distance = (value - choice).abs();
            if distance <= tol * choice.abs().max(1.0) {
                match best {
                    Some((_, d)) if d <= distance => {}
                    _ => best = Some((idx, distance)),
                }
            }
        }
        if let Some((idx, _)) = best {
            return Some(idx);
        }
    }
    None
}
