//! Test support: an independent reference evaluator for arithmetic, random
//! expression and question generators, and the stock scripts used by the
//! end-to-end suites. Compiled for tests and under the `testkit` feature.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use serde::Deserialize;

use crate::eval::{EvalItem, ExtractError, LETTERS};
use crate::llm::BackendScript;

pub const CALC_DELEGATE_SCRIPT: &str = include_str!("../tests/fixtures/scripts/calc_delegate.json");
pub const GUESS_A_SCRIPT: &str = include_str!("../tests/fixtures/scripts/guess_a.json");
pub const CURATED_COMPLETIONS: &str = include_str!("../tests/fixtures/extraction/curated.jsonl");
pub const WEATHER_CALENDAR_SCRIPT: &str = include_str!("../tests/fixtures/scripts/weather_calendar.json");

/// Script that forwards "What is <expr>?" to the calculator and answers
/// with the option matching the result.
pub fn calc_delegating_script() -> BackendScript {
    BackendScript::parse(CALC_DELEGATE_SCRIPT).expect("bundled script parses")
}

/// Script that never calls a tool and always answers "A".
pub fn guess_a_script() -> BackendScript {
    BackendScript::parse(GUESS_A_SCRIPT).expect("bundled script parses")
}

pub fn weather_calendar_script() -> BackendScript {
    BackendScript::parse(WEATHER_CALENDAR_SCRIPT).expect("bundled script parses")
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Expected {
    Letter { letter: char },
    Error(ExtractError),
}

#[derive(Deserialize)]
struct Curated {
    completion: String,
    expected: Expected,
}

/// Noisy model completions paired with the extraction they must yield.
pub fn curated_completions() -> Vec<(String, Result<char, ExtractError>)> {
    CURATED_COMPLETIONS
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let c: Curated = serde_json::from_str(l).expect("curated line parses");
            let expected = match c.expected {
                Expected::Letter { letter } => Ok(letter),
                Expected::Error(e) => Err(e),
            };
            (c.completion, expected)
        })
        .collect()
}

// Reference evaluator: tokenizer plus shunting-yard, sharing no code with
// the calculator's parser.

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    Open,
    Close,
}

fn tokenize(src: &str) -> Option<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' => i += 1,
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text: String = chars[start..i].iter().collect();
                out.push(Tok::Num(text.parse().ok()?));
            }
            'a'..='z' | 'A'..='Z' => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                out.push(Tok::Ident(chars[start..i].iter().collect::<String>().to_lowercase()));
            }
            '*' if chars.get(i + 1) == Some(&'*') => {
                out.push(Tok::Op('^'));
                i += 2;
            }
            '+' | '-' | '*' | '/' | '^' => {
                out.push(Tok::Op(c));
                i += 1;
            }
            '×' => {
                out.push(Tok::Op('*'));
                i += 1;
            }
            '÷' => {
                out.push(Tok::Op('/'));
                i += 1;
            }
            '−' => {
                out.push(Tok::Op('-'));
                i += 1;
            }
            '(' => {
                out.push(Tok::Open);
                i += 1;
            }
            ')' => {
                out.push(Tok::Close);
                i += 1;
            }
            _ => return None,
        }
    }
    Some(out)
}

#[derive(Debug, Clone, PartialEq)]
enum StackItem {
    Op(char),
    Neg,
    Func(String),
    Open,
}

fn prec(item: &StackItem) -> u8 {
    match item {
        StackItem::Op('+') | StackItem::Op('-') => 1,
        StackItem::Op('*') | StackItem::Op('/') => 2,
        StackItem::Neg => 3,
        StackItem::Op('^') => 4,
        _ => 0,
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn apply(item: &StackItem, values: &mut Vec<f64>) -> Option<()> {
    let v = match item {
        StackItem::Neg => -values.pop()?,
        StackItem::Func(name) => {
            let x = values.pop()?;
            match name.as_str() {
                "sqrt" if x >= 0.0 => x.sqrt(),
                "abs" => x.abs(),
                "ln" if x > 0.0 => x.ln(),
                "log10" if x > 0.0 => x.log10(),
                "sin" => x.sin(),
                "cos" => x.cos(),
                "tan" => x.tan(),
                "exp" => x.exp(),
                "floor" => x.floor(),
                "ceil" => x.ceil(),
                _ => return None,
            }
        }
        StackItem::Op(op) => {
            let b = values.pop()?;
            let a = values.pop()?;
            match op {
                '+' => a + b,
                '-' => a - b,
                '*' => a * b,
                '/' if b != 0.0 => a / b,
                '^' if !(a < 0.0 && b.fract() != 0.0) && !(a == 0.0 && b < 0.0) => a.powf(b),
                _ => return None,
            }
        }
        StackItem::Open => return None,
    };
    values.push(finite(v)?);
    Some(())
}

/// Evaluates `src` with the same operator set and precedence as the
/// calculator. `None` for syntax errors and undefined results.
pub fn oracle_eval(src: &str) -> Option<f64> {
    let tokens = tokenize(src)?;
    let mut values: Vec<f64> = Vec::new();
    let mut ops: Vec<StackItem> = Vec::new();
    // True when the next token must start an operand.
    let mut expect_operand = true;
    let mut i = 0;
    while i < tokens.len() {
        match &tokens[i] {
            Tok::Num(n) if expect_operand => {
                values.push(*n);
                expect_operand = false;
            }
            Tok::Ident(name) if expect_operand => match name.as_str() {
                "pi" => {
                    values.push(std::f64::consts::PI);
                    expect_operand = false;
                }
                "e" => {
                    values.push(std::f64::consts::E);
                    expect_operand = false;
                }
                _ => {
                    if tokens.get(i + 1) != Some(&Tok::Open) {
                        return None;
                    }
                    ops.push(StackItem::Func(name.clone()));
                }
            },
            Tok::Op('-') if expect_operand => ops.push(StackItem::Neg),
            Tok::Op(op) if !expect_operand => {
                let item = StackItem::Op(*op);
                let p = prec(&item);
                let right = *op == '^';
                while let Some(top) = ops.last() {
                    let tp = prec(top);
                    let pops = matches!(top, StackItem::Op(_) | StackItem::Neg) && (tp > p || (tp == p && !right));
                    if !pops {
                        break;
                    }
                    let top = ops.pop()?;
                    apply(&top, &mut values)?;
                }
                ops.push(item);
                expect_operand = true;
            }
            Tok::Open if expect_operand => ops.push(StackItem::Open),
            Tok::Close if !expect_operand => {
                loop {
                    match ops.pop()? {
                        StackItem::Open => break,
                        other => apply(&other, &mut values)?,
                    }
                }
                if let Some(StackItem::Func(_)) = ops.last() {
                    let f = ops.pop()?;
                    apply(&f, &mut values)?;
                }
                // A closed group may still sit under pending prefix negations;
                // those resolve when a lower-precedence operator arrives.
            }
            _ => return None,
        }
        i += 1;
    }
    if expect_operand {
        return None;
    }
    while let Some(top) = ops.pop() {
        if top == StackItem::Open {
            return None;
        }
        apply(&top, &mut values)?;
    }
    (values.len() == 1).then(|| values[0])
}

/// Relative comparison used by the equivalence suites.
pub fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
}

// Random expressions.

const FUNCS: [&str; 10] = ["sqrt", "abs", "ln", "log10", "sin", "cos", "tan", "exp", "floor", "ceil"];

fn gen_number(rng: &mut StdRng) -> String {
    match rng.gen_range(0..6) {
        0 => format!("{}.{}", rng.gen_range(0..100), rng.gen_range(0..1000)),
        1 => ["pi", "e"][rng.gen_range(0..2)].to_string(),
        2 => format!("{}", rng.gen_range(0..10)),
        _ => format!("{}", rng.gen_range(0..1000)),
    }
}

fn gen_expr(rng: &mut StdRng, depth: u32) -> String {
    if depth == 0 || rng.gen_bool(0.3) {
        return gen_number(rng);
    }
    let sp = |rng: &mut StdRng| if rng.gen_bool(0.5) { " " } else { "" };
    match rng.gen_range(0..10) {
        0..=4 => {
            let op = ["+", "-", "*", "/", "+", "*"][rng.gen_range(0..6)];
            let (a, b) = (gen_expr(rng, depth - 1), gen_expr(rng, depth - 1));
            let (s1, s2) = (sp(rng), sp(rng));
            format!("{a}{s1}{op}{s2}{b}")
        }
        5 => {
            // Small exponents keep most results finite.
            let base = if rng.gen_bool(0.5) { gen_number(rng) } else { format!("({})", gen_expr(rng, depth - 1)) };
            let exp = match rng.gen_range(0..4) {
                0 => format!("-{}", rng.gen_range(1..3)),
                1 => format!("0.{}", rng.gen_range(1..10)),
                _ => format!("{}", rng.gen_range(0..4)),
            };
            format!("{base}^{exp}")
        }
        6 => format!("-{}", gen_expr(rng, depth - 1)),
        7 => format!("{}({})", FUNCS[rng.gen_range(0..FUNCS.len())], gen_expr(rng, depth - 1)),
        _ => format!("({})", gen_expr(rng, depth - 1)),
    }
}

/// `n` random calculator expressions, reproducible from `seed`.
pub fn random_expressions(n: usize, seed: u64) -> Vec<String> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n).map(|_| gen_expr(&mut rng, 4)).collect()
}

// Arithmetic multiple-choice questions.

/// One generated question with its gold value.
#[derive(Debug, Clone)]
pub struct ArithmeticQuestion {
    pub item: EvalItem,
    pub gold: i64,
}

/// `n` arithmetic questions of the form "What is <expr>?". Gold values
/// come from integer arithmetic on the operands, not from any parser.
pub fn arithmetic_mcq(n: usize, seed: u64, subjects: &[(&str, usize)]) -> Vec<ArithmeticQuestion> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut labels: Vec<&str> = subjects.iter().flat_map(|(s, k)| std::iter::repeat_n(*s, *k)).collect();
    while labels.len() < n {
        labels.push("arithmetic");
    }
    (0..n)
        .map(|i| {
            let a = rng.gen_range(2..100i64);
            let b = rng.gen_range(2..100i64);
            let c = rng.gen_range(2..50i64);
            let (expr, gold) = match rng.gen_range(0..6) {
                0 => (format!("{a} + {b}"), a + b),
                1 => (format!("{a} - {b}"), a - b),
                2 => (format!("{a} * {b}"), a * b),
                3 => (format!("{a} * {b} + {c}"), a * b + c),
                4 => (format!("({a} + {b}) * {c}"), (a + b) * c),
                _ => (format!("{a} * {b} - {c} * {a}"), a * b - c * a),
            };
            let mut values = vec![gold];
            let mut offsets = vec![1, -1, 10, -10, 2, a, -b, c];
            offsets.shuffle(&mut rng);
            for off in offsets {
                if values.len() == 4 {
                    break;
                }
                if !values.contains(&(gold + off)) {
                    values.push(gold + off);
                }
            }
            values.shuffle(&mut rng);
            let answer_idx = values.iter().position(|v| *v == gold).unwrap_or(0);
            let opts: Vec<String> = values.iter().map(i64::to_string).collect();
            let item = EvalItem::new(
                &format!("arith-{i:03}"),
                &format!("What is {expr}?"),
                [&opts[0], &opts[1], &opts[2], &opts[3]],
                LETTERS[answer_idx],
                labels[i],
            );
            ArithmeticQuestion { item, gold }
        })
        .collect()
}
