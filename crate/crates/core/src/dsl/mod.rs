//! Expression language for user-defined selection operators.
//!
//! The grammar covers exactly the aggregates the built-in operators use:
//! pointwise functions of the trait `x`, the total mass, moments against a
//! test function of a bound variable `y`, half-open window masses with
//! bounds depending on `x`, and convolution against a registered kernel.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := NUMBER | 'x' | '(' expr ')'
//!          | ('sqrt' | 'exp' | 'abs') '(' expr ')'
//!          | PROFILE '(' expr ')'
//!          | 'mass' '(' 'mu' ')'
//!          | 'moment' '(' 'mu' ',' expr-in-y ')'
//!          | 'window' '(' 'mu' ',' expr ',' expr ')'
//!          | 'conv' '(' KERNEL ',' 'mu' ')'
//! ```
//!
//! Evaluation is total-order left-to-right within each precedence level, so
//! an expression spelling out a built-in operator reproduces the built-in's
//! floating point results bit for bit.

mod eval;
mod meta;
mod parse;

pub use eval::{evaluate, DslOperator};
pub use meta::infer_meta;
pub use parse::parse;

use crate::measure::MeasureError;
use crate::profiles::{Kernel, Profile};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DslError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unknown identifier '{name}' at line {line}, column {col}")]
    UnknownIdentifier { name: String, line: usize, col: usize },
    #[error("unknown function or profile '{0}'")]
    UnknownFunction(String),
    #[error("unknown kernel '{0}'")]
    UnknownKernel(String),
    #[error("division by zero while evaluating the expression")]
    DivisionByZero,
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Exp,
    Abs,
}

/// Expression tree. `X` is the ambient trait variable; `Y` is the bound
/// variable of a `moment` body and can appear nowhere else.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    X,
    Y,
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    /// Named profile applied to an inner expression, e.g. `a(x)` or `r(x)`.
    Profile(String, Box<Expr>),
    /// `mass(mu)`: the total mass of the measure.
    Mass,
    /// `moment(mu, g(y))`: the pairing of the measure with `g`.
    Moment(Box<Expr>),
    /// `window(mu, lo(x), hi(x))`: measure of `[lo, hi) ∩ X`.
    Window(Box<Expr>, Box<Expr>),
    /// `conv(kernel, mu)` evaluated at the ambient point.
    Conv(String),
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, _, _) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, _, _) => 2,
            Expr::Neg(_) => 3,
            _ => 4,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, parent: u8, right: bool) -> fmt::Result {
        let needs_parens =
            self.precedence() < parent || (right && self.precedence() == parent && parent <= 2);
        if needs_parens {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(v) => write!(f, "{v}"),
            Expr::X => write!(f, "x"),
            Expr::Y => write!(f, "y"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.fmt_child(f, 3, false)
            }
            Expr::Binary(op, l, r) => {
                let prec = self.precedence();
                l.fmt_child(f, prec, false)?;
                let sym = match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "{sym}")?;
                r.fmt_child(f, prec, true)
            }
            Expr::Call(func, e) => {
                let name = match func {
                    Func::Sqrt => "sqrt",
                    Func::Exp => "exp",
                    Func::Abs => "abs",
                };
                write!(f, "{name}({e})")
            }
            Expr::Profile(name, e) => write!(f, "{name}({e})"),
            Expr::Mass => write!(f, "mass(mu)"),
            Expr::Moment(g) => write!(f, "moment(mu, {g})"),
            Expr::Window(lo, hi) => write!(f, "window(mu, {lo}, {hi})"),
            Expr::Conv(kernel) => write!(f, "conv({kernel}, mu)"),
        }
    }
}

/// Named profiles and kernels an expression may reference.
#[derive(Debug, Clone)]
pub struct EvalContext {
    profiles: HashMap<String, Profile>,
    kernels: HashMap<String, Kernel>,
}

impl Default for EvalContext {
    /// `a` is the decreasing prey/predator proliferation profile, `r` a unit
    /// constant, `J` the exponential kernel and `J_h` its truncation at 5.
    fn default() -> Self {
        let mut ctx = EvalContext { profiles: HashMap::new(), kernels: HashMap::new() };
        ctx.set_profile("a", Profile::SqrtDecline { base: 1.0, coeff: 1.5 });
        ctx.set_profile("r", Profile::Constant(1.0));
        ctx.set_kernel("J", Kernel::Exponential);
        ctx.set_kernel("J_h", Kernel::TruncatedExponential { h: 5.0 });
        ctx
    }
}

impl EvalContext {
    pub fn set_profile(&mut self, name: &str, profile: Profile) {
        self.profiles.insert(name.to_string(), profile);
    }

    pub fn set_kernel(&mut self, name: &str, kernel: Kernel) {
        self.kernels.insert(name.to_string(), kernel);
    }

    pub fn profile(&self, name: &str) -> Result<&Profile, DslError> {
        self.profiles.get(name).ok_or_else(|| DslError::UnknownFunction(name.to_string()))
    }

    pub fn kernel(&self, name: &str) -> Result<&Kernel, DslError> {
        self.kernels.get(name).ok_or_else(|| DslError::UnknownKernel(name.to_string()))
    }

    /// Checks that every profile and kernel the expression references is
    /// registered.
    pub fn check(&self, expr: &Expr) -> Result<(), DslError> {
        match expr {
            Expr::Profile(name, inner) => {
                self.profile(name)?;
                self.check(inner)
            }
            Expr::Conv(name) => self.kernel(name).map(|_| ()),
            Expr::Neg(e) | Expr::Call(_, e) | Expr::Moment(e) => self.check(e),
            Expr::Binary(_, l, r) | Expr::Window(l, r) => {
                self.check(l)?;
                self.check(r)
            }
            _ => Ok(()),
        }
    }
}
