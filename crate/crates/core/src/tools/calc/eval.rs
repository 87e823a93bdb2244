use thiserror::Error;

use super::expr::{BinOp, Expr, Func};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain error: {0}")]
    DomainError(String),
}

fn domain(msg: impl Into<String>) -> EvalError {
    EvalError::DomainError(msg.into())
}

fn finite(v: f64, what: &str) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else if v.is_nan() {
        Err(domain(format!("{what} is undefined")))
    } else {
        Err(domain(format!("{what} overflows")))
    }
}

pub fn evaluate(expr: &Expr) -> Result<f64, EvalError> {
    match expr {
        Expr::Num(v) => finite(*v, "literal"),
        Expr::Const(c) => Ok(c.value()),
        Expr::Neg(inner) => Ok(-evaluate(inner)?),
        Expr::Binary { op, lhs, rhs } => {
            let a = evaluate(lhs)?;
            let b = evaluate(rhs)?;
            match op {
                BinOp::Add => finite(a + b, "sum"),
                BinOp::Sub => finite(a - b, "difference"),
                BinOp::Mul => finite(a * b, "product"),
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    finite(a / b, "quotient")
                }
                BinOp::Pow => {
                    if a == 0.0 && b < 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    if a < 0.0 && b.fract() != 0.0 {
                        return Err(domain(format!("{a}^{b} has no real value")));
                    }
                    finite(a.powf(b), "power")
                }
            }
        }
        Expr::Call { func, arg } => {
            let x = evaluate(arg)?;
            let v = match func {
                Func::Sqrt if x < 0.0 => return Err(domain(format!("sqrt of negative number {x}"))),
                Func::Sqrt => x.sqrt(),
                Func::Ln | Func::Log10 if x <= 0.0 => {
                    return Err(domain(format!("{} of non-positive number {x}", func.name())))
                }
                Func::Ln => x.ln(),
                Func::Log10 => x.log10(),
                Func::Abs => x.abs(),
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Tan => x.tan(),
                Func::Exp => x.exp(),
                Func::Floor => x.floor(),
                Func::Ceil => x.ceil(),
            };
            finite(v, func.name())
        }
    }
}
