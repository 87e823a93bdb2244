//! Recursive-descent parser for calculator expressions.
//!
//! Grammar, lowest to highest binding:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?
//! primary := number | constant | func '(' sum ')' | '(' sum ')'
//! ```
//!
//! `power` takes a `unary` exponent, which makes `^` right-associative and
//! lets `2^-1` parse while `-2^2` stays `-(2^2)`.

use std::fmt;

use thiserror::Error;

use super::expr::{BinOp, Constant, Expr, Func};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at position {position}: expected {expected}, found {found}")]
pub struct ParseError {
    /// Character offset into the source.
    pub position: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(BinOp),
    LParen,
    RParen,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Ident(s) => write!(f, "identifier {s:?}"),
            Tok::Op(op) => write!(f, "'{}'", op.symbol()),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

fn tokenize(source: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let chars: Vec<char> = source.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let tok = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '+' => Tok::Op(BinOp::Add),
            '-' | '\u{2212}' => Tok::Op(BinOp::Sub),
            '*' if chars.get(i + 1) == Some(&'*') => {
                i += 1;
                Tok::Op(BinOp::Pow)
            }
            '*' | '\u{00d7}' => Tok::Op(BinOp::Mul),
            '/' | '\u{00f7}' => Tok::Op(BinOp::Div),
            '^' => Tok::Op(BinOp::Pow),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            c if c.is_ascii_digit() || c == '.' => {
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // Exponent suffix only when followed by digits, so `2e` stays `2` then constant `e`.
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
                let value = text.parse::<f64>().map_err(|_| ParseError {
                    position: start,
                    expected: "a number".into(),
                    found: format!("{text:?}"),
                })?;
                out.push((start, Tok::Num(value)));
                continue;
            }
            c if c.is_ascii_alphabetic() => {
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(chars[start..i].iter().collect())));
                continue;
            }
            other => {
                return Err(ParseError {
                    position: start,
                    expected: "an operator, number or identifier".into(),
                    found: format!("{other:?}"),
                })
            }
        };
        out.push((start, tok));
        i += 1;
    }
    out.push((chars.len(), Tok::End));
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].1
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let tok = self.tokens[self.pos].1.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn error(&self, expected: &str) -> ParseError {
        ParseError {
            position: self.offset(),
            expected: expected.to_string(),
            found: self.peek().to_string(),
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        while let Tok::Op(op @ (BinOp::Add | BinOp::Sub)) = *self.peek() {
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Tok::Op(op @ (BinOp::Mul | BinOp::Div)) = *self.peek() {
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Op(BinOp::Sub) => {
                self.bump();
                Ok(Expr::negate(self.unary()?))
            }
            Tok::Op(BinOp::Add) => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if let Tok::Op(BinOp::Pow) = self.peek() {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Tok::RParen => {
                self.bump();
                Ok(())
            }
            _ => Err(self.error("')'")),
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.sum()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let lower = name.to_ascii_lowercase();
                if let Some(func) = Func::from_name(&lower) {
                    self.bump();
                    if *self.peek() != Tok::LParen {
                        return Err(self.error(&format!("'(' after {}", func.name())));
                    }
                    self.bump();
                    let arg = self.sum()?;
                    self.expect_rparen()?;
                    return Ok(Expr::call(func, arg));
                }
                let constant = match lower.as_str() {
                    "pi" => Constant::Pi,
                    "e" => Constant::E,
                    _ => return Err(self.error("a function name or constant")),
                };
                self.bump();
                Ok(Expr::Const(constant))
            }
            _ => Err(self.error("a number, constant, function or '('")),
        }
    }
}

pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(source)?;
    let mut parser = Parser { tokens, pos: 0 };
    if *parser.peek() == Tok::End {
        return Err(parser.error("an expression"));
    }
    let expr = parser.sum()?;
    if *parser.peek() != Tok::End {
        return Err(parser.error("an operator or end of input"));
    }
    Ok(expr)
}
