use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Abs,
    Ln,
    Log10,
    Sin,
    Cos,
    Tan,
    Exp,
    Floor,
    Ceil,
}

impl Func {
    pub const ALL: [Func; 10] = [
        Func::Sqrt,
        Func::Abs,
        Func::Ln,
        Func::Log10,
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Floor,
        Func::Ceil,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Ln => "ln",
            Func::Log10 => "log10",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Floor => "floor",
            Func::Ceil => "ceil",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    pub fn name(self) -> &'static str {
        match self {
            Constant::Pi => "pi",
            Constant::E => "e",
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
        }
    }
}

/// Parse tree. Literals produced by the parser are never negative; a leading
/// minus is always a [`Expr::Neg`] node.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Const(Constant),
    Neg(Box<Expr>),
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Call { func: Func, arg: Box<Expr> },
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    pub fn negate(inner: Expr) -> Expr {
        Expr::Neg(Box::new(inner))
    }

    pub fn call(func: Func, arg: Expr) -> Expr {
        Expr::Call { func, arg: Box::new(arg) }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op: BinOp::Add | BinOp::Sub, .. } => 1,
            Expr::Binary { op: BinOp::Mul | BinOp::Div, .. } => 2,
            Expr::Neg(_) => 3,
            Expr::Binary { op: BinOp::Pow, .. } => 4,
            Expr::Num(v) if *v < 0.0 || v.is_sign_negative() => 0,
            _ => 5,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Const(_) => 1,
            Expr::Neg(e) | Expr::Call { arg: e, .. } => 1 + e.depth(),
            Expr::Binary { lhs, rhs, .. } => 1 + lhs.depth().max(rhs.depth()),
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

/// Renders with the minimum parentheses needed to re-parse to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if v.is_sign_negative() => write!(f, "({v})"),
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Const(c) => f.write_str(c.name()),
            Expr::Neg(inner) => {
                f.write_str("-")?;
                write_child(f, inner, inner.precedence() < 3)
            }
            Expr::Call { func, arg } => write!(f, "{}({arg})", func.name()),
            Expr::Binary { op: BinOp::Pow, lhs, rhs } => {
                write_child(f, lhs, lhs.precedence() <= 4)?;
                f.write_str("^")?;
                write_child(f, rhs, rhs.precedence() < 3)
            }
            Expr::Binary { op, lhs, rhs } => {
                let p = self.precedence();
                write_child(f, lhs, lhs.precedence() < p)?;
                write!(f, " {} ", op.symbol())?;
                write_child(f, rhs, rhs.precedence() <= p)
            }
        }
    }
}
