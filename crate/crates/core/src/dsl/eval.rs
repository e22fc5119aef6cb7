//! Expression evaluation against a measure.
//!
//! Aggregates that do not depend on the evaluation point (mass, moments) are
//! computed once; windows share one cumulative-mass view and convolutions are
//! computed through the same routine the built-in kernel operator uses, so a
//! spelled-out built-in matches the built-in bit for bit.

use std::collections::HashMap;

use super::{infer_meta, BinOp, DslError, EvalContext, Expr, Func};
use crate::measure::{FunctionSamples, GridMeasure, MassPrefix, WindowKind};
use crate::operators::{convolve_measure, OperatorError, OperatorMeta, SelectionField, SelectionOperator};

fn key(e: &Expr) -> usize {
    e as *const Expr as usize
}

struct Prepared<'a> {
    mass: f64,
    moments: HashMap<usize, f64>,
    convolutions: HashMap<usize, (Vec<f64>, Vec<f64>)>,
    prefix: Option<MassPrefix<'a>>,
}

/// Scalar evaluation of a pure expression of one variable (a moment body in
/// `y`, or a window bound in `x`).
fn eval_pure(expr: &Expr, var: f64, ctx: &EvalContext) -> Result<f64, DslError> {
    Ok(match expr {
        Expr::Number(v) => *v,
        Expr::X | Expr::Y => var,
        Expr::Neg(e) => -eval_pure(e, var, ctx)?,
        Expr::Binary(op, l, r) => {
            let a = eval_pure(l, var, ctx)?;
            let b = eval_pure(r, var, ctx)?;
            apply(*op, a, b)?
        }
        Expr::Call(func, e) => apply_func(*func, eval_pure(e, var, ctx)?),
        Expr::Profile(name, e) => ctx.profile(name)?.eval(eval_pure(e, var, ctx)?),
        _ => unreachable!("aggregates are rejected in pure positions by the parser"),
    })
}

fn apply(op: BinOp, a: f64, b: f64) -> Result<f64, DslError> {
    Ok(match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => {
            if b == 0.0 {
                return Err(DslError::DivisionByZero);
            }
            a / b
        }
    })
}

fn apply_func(func: Func, v: f64) -> f64 {
    match func {
        Func::Sqrt => v.sqrt(),
        Func::Exp => v.exp(),
        Func::Abs => v.abs(),
    }
}

fn prepare<'a>(
    expr: &Expr,
    mu: &'a GridMeasure,
    ctx: &EvalContext,
    prep: &mut Prepared<'a>,
) -> Result<(), DslError> {
    match expr {
        Expr::Moment(body) => {
            let samples = sample_pure(body, mu, ctx)?;
            prep.moments.insert(key(expr), mu.pair(&samples)?);
        }
        Expr::Conv(kernel_name) => {
            let kernel = ctx.kernel(kernel_name)?;
            prep.convolutions.insert(key(expr), convolve_measure(kernel, mu));
        }
        Expr::Window(_, _) => {
            if prep.prefix.is_none() {
                prep.prefix = Some(MassPrefix::new(mu));
            }
        }
        Expr::Neg(e) | Expr::Call(_, e) | Expr::Profile(_, e) => prepare(e, mu, ctx, prep)?,
        Expr::Binary(_, l, r) => {
            prepare(l, mu, ctx, prep)?;
            prepare(r, mu, ctx, prep)?;
        }
        _ => {}
    }
    Ok(())
}

fn sample_pure(
    body: &Expr,
    mu: &GridMeasure,
    ctx: &EvalContext,
) -> Result<FunctionSamples, DslError> {
    // Evaluate the body everywhere first so evaluation errors surface instead
    // of panicking inside the sampling closure.
    let grid = mu.grid();
    let mut cell_values = Vec::with_capacity(grid.n_cells);
    for i in 0..grid.n_cells {
        cell_values.push(eval_pure(body, grid.midpoint(i), ctx)?);
    }
    let atom_locations = mu.atom_locations();
    let mut atom_values = Vec::with_capacity(atom_locations.len());
    for loc in &atom_locations {
        atom_values.push(eval_pure(body, *loc, ctx)?);
    }
    Ok(FunctionSamples::new(grid, cell_values, atom_locations, atom_values)?)
}

/// Evaluation point: a cell midpoint or an atom, with its index so point
/// bound aggregates (convolutions) resolve to the precomputed value.
#[derive(Clone, Copy)]
enum Point {
    Cell(usize, f64),
    Atom(usize, f64),
}

impl Point {
    fn x(self) -> f64 {
        match self {
            Point::Cell(_, x) | Point::Atom(_, x) => x,
        }
    }
}

fn eval_at(expr: &Expr, point: Point, prep: &Prepared, ctx: &EvalContext) -> Result<f64, DslError> {
    Ok(match expr {
        Expr::Number(v) => *v,
        Expr::X => point.x(),
        Expr::Y => unreachable!("y only occurs inside moment bodies"),
        Expr::Neg(e) => -eval_at(e, point, prep, ctx)?,
        Expr::Binary(op, l, r) => {
            let a = eval_at(l, point, prep, ctx)?;
            let b = eval_at(r, point, prep, ctx)?;
            apply(*op, a, b)?
        }
        Expr::Call(func, e) => apply_func(*func, eval_at(e, point, prep, ctx)?),
        Expr::Profile(name, e) => ctx.profile(name)?.eval(eval_at(e, point, prep, ctx)?),
        Expr::Mass => prep.mass,
        Expr::Moment(_) => prep.moments[&key(expr)],
        Expr::Window(lo, hi) => {
            let x = point.x();
            let lo = eval_pure(lo, x, ctx)?;
            let hi = eval_pure(hi, x, ctx)?;
            // Same midpoint-membership windows as the interaction operators,
            // so spelling one out reproduces it exactly.
            prep.prefix
                .as_ref()
                .expect("prefix prepared for window nodes")
                .window_mass_midpoint(lo, hi, WindowKind::ClosedOpen)
        }
        Expr::Conv(_) => {
            let (cells, atoms) = &prep.convolutions[&key(expr)];
            match point {
                Point::Cell(i, _) => cells[i],
                Point::Atom(j, _) => atoms[j],
            }
        }
    })
}

/// Evaluates an expression as a selection field over `mu`. Metadata comes
/// from [`infer_meta`] on the measure's domain.
pub fn evaluate(
    expr: &Expr,
    mu: &GridMeasure,
    ctx: &EvalContext,
) -> Result<SelectionField, DslError> {
    let grid = mu.grid();
    let mut prep = Prepared {
        mass: mu.total_mass(),
        moments: HashMap::new(),
        convolutions: HashMap::new(),
        prefix: None,
    };
    prepare(expr, mu, ctx, &mut prep)?;

    let mut cell_values = Vec::with_capacity(grid.n_cells);
    for i in 0..grid.n_cells {
        cell_values.push(eval_at(expr, Point::Cell(i, grid.midpoint(i)), &prep, ctx)?);
    }
    let atom_locations = mu.atom_locations();
    let mut atom_values = Vec::with_capacity(atom_locations.len());
    for (j, loc) in atom_locations.iter().enumerate() {
        atom_values.push(eval_at(expr, Point::Atom(j, *loc), &prep, ctx)?);
    }
    let samples = FunctionSamples::new(grid, cell_values, atom_locations, atom_values)?;
    let meta = infer_meta(expr, grid.lo, grid.hi, ctx);
    Ok(SelectionField { samples, meta })
}

/// A parsed expression packaged as a [`SelectionOperator`] for a fixed
/// domain, so the engine can drive it like any built-in.
#[derive(Debug, Clone)]
pub struct DslOperator {
    expr: Expr,
    ctx: EvalContext,
    meta: OperatorMeta,
}

impl DslOperator {
    pub fn new(expr: Expr, ctx: EvalContext, lo: f64, hi: f64) -> Result<Self, DslError> {
        ctx.check(&expr)?;
        let meta = infer_meta(&expr, lo, hi, &ctx);
        Ok(DslOperator { expr, ctx, meta })
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

impl SelectionOperator for DslOperator {
    fn name(&self) -> &'static str {
        "expression"
    }

    fn meta(&self) -> OperatorMeta {
        self.meta
    }

    fn evaluate(&self, mu: &GridMeasure) -> Result<SelectionField, OperatorError> {
        evaluate(&self.expr, mu, &self.ctx)
            .map_err(|e| OperatorError::InvalidParameter(e.to_string()))
    }
}
