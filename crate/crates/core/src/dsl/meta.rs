//! Conservative metadata inference for expressions.
//!
//! Bounds are propagated structurally: aggregates contribute their known
//! TV-Lipschitz coefficients (mass and window 1, moment the sup of its body,
//! convolution the kernel peak), sums add, and products combine through sup
//! bounds obtained from interval arithmetic over the domain. A finite upper
//! bound of the whole expression over all measures doubles as both the
//! uniform field bound and the fitness rate.

use super::{BinOp, EvalContext, Expr, Func};
use crate::operators::OperatorMeta;
use crate::profiles::Profile;

const INF: f64 = f64::INFINITY;

/// Product that treats `0 * inf` as zero; valid for bound propagation where a
/// zero factor means the term is absent.
fn mul0(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    fn new(lo: f64, hi: f64) -> Self {
        let lo = if lo.is_nan() { -INF } else { lo };
        let hi = if hi.is_nan() { INF } else { hi };
        Interval { lo, hi }
    }

    fn point(v: f64) -> Self {
        Interval::new(v, v)
    }

    fn full() -> Self {
        Interval { lo: -INF, hi: INF }
    }

    fn abs_sup(self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    fn contains_zero(self) -> bool {
        self.lo <= 0.0 && self.hi >= 0.0
    }

    fn min_abs(self) -> f64 {
        if self.contains_zero() {
            0.0
        } else {
            self.lo.abs().min(self.hi.abs())
        }
    }

    fn add(self, other: Interval) -> Interval {
        Interval::new(self.lo + other.lo, self.hi + other.hi)
    }

    fn neg(self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }

    fn sub(self, other: Interval) -> Interval {
        self.add(other.neg())
    }

    fn mul(self, other: Interval) -> Interval {
        let products = [
            mul0(self.lo, other.lo),
            mul0(self.lo, other.hi),
            mul0(self.hi, other.lo),
            mul0(self.hi, other.hi),
        ];
        let lo = products.iter().cloned().fold(INF, f64::min);
        let hi = products.iter().cloned().fold(-INF, f64::max);
        Interval::new(lo, hi)
    }

    fn div(self, other: Interval) -> Interval {
        if other.contains_zero() {
            return Interval::full();
        }
        let inv = Interval::new(1.0 / other.hi, 1.0 / other.lo);
        self.mul(inv)
    }

    fn abs(self) -> Interval {
        if self.contains_zero() {
            Interval::new(0.0, self.abs_sup())
        } else {
            Interval::new(self.min_abs(), self.abs_sup())
        }
    }

    fn exp(self) -> Interval {
        Interval::new(self.lo.exp(), self.hi.exp())
    }

    fn sqrt(self) -> Interval {
        Interval::new(self.lo.max(0.0).sqrt(), self.hi.max(0.0).sqrt())
    }
}

fn profile_range(profile: &Profile, arg: Interval) -> Interval {
    Interval::new(profile.min_on(arg.lo, arg.hi), profile.max_on(arg.lo, arg.hi))
}

/// Value range of `expr` over the domain interval and over all finite
/// nonnegative measures.
fn range(expr: &Expr, dom: Interval, ctx: &EvalContext) -> Interval {
    match expr {
        Expr::Number(v) => Interval::point(*v),
        Expr::X | Expr::Y => dom,
        Expr::Neg(e) => range(e, dom, ctx).neg(),
        Expr::Binary(op, l, r) => {
            let a = range(l, dom, ctx);
            let b = range(r, dom, ctx);
            match op {
                BinOp::Add => a.add(b),
                BinOp::Sub => a.sub(b),
                BinOp::Mul => a.mul(b),
                BinOp::Div => a.div(b),
            }
        }
        Expr::Call(Func::Sqrt, e) => range(e, dom, ctx).sqrt(),
        Expr::Call(Func::Exp, e) => range(e, dom, ctx).exp(),
        Expr::Call(Func::Abs, e) => range(e, dom, ctx).abs(),
        Expr::Profile(name, e) => match ctx.profile(name) {
            Ok(profile) => profile_range(profile, range(e, dom, ctx)),
            Err(_) => Interval::full(),
        },
        Expr::Mass | Expr::Window(_, _) | Expr::Conv(_) => Interval::new(0.0, INF),
        Expr::Moment(body) => {
            let g = range(body, dom, ctx);
            if g.lo >= 0.0 {
                Interval::new(0.0, INF)
            } else if g.hi <= 0.0 {
                Interval::new(-INF, 0.0)
            } else {
                Interval::full()
            }
        }
    }
}

/// TV-Lipschitz coefficient of `expr` as a map from measures to fields.
fn lipschitz(expr: &Expr, dom: Interval, ctx: &EvalContext) -> f64 {
    match expr {
        Expr::Number(_) | Expr::X | Expr::Y => 0.0,
        Expr::Mass | Expr::Window(_, _) => 1.0,
        Expr::Conv(name) => match ctx.kernel(name) {
            Ok(kernel) => kernel.sup(),
            Err(_) => INF,
        },
        Expr::Moment(body) => range(body, dom, ctx).abs_sup(),
        Expr::Neg(e) => lipschitz(e, dom, ctx),
        Expr::Binary(BinOp::Add | BinOp::Sub, l, r) => {
            lipschitz(l, dom, ctx) + lipschitz(r, dom, ctx)
        }
        Expr::Binary(BinOp::Mul, l, r) => {
            let (ra, rb) = (range(l, dom, ctx), range(r, dom, ctx));
            mul0(ra.abs_sup(), lipschitz(r, dom, ctx)) + mul0(lipschitz(l, dom, ctx), rb.abs_sup())
        }
        Expr::Binary(BinOp::Div, l, r) => {
            let kl = lipschitz(l, dom, ctx);
            let kr = lipschitz(r, dom, ctx);
            if kl == 0.0 && kr == 0.0 {
                return 0.0;
            }
            let rr = range(r, dom, ctx);
            let m = rr.min_abs();
            if m == 0.0 {
                return INF;
            }
            kl / m + mul0(range(l, dom, ctx).abs_sup(), kr) / (m * m)
        }
        Expr::Call(func, e) => {
            let ke = lipschitz(e, dom, ctx);
            let inner = range(e, dom, ctx);
            let slope = match func {
                Func::Abs => 1.0,
                Func::Exp => inner.hi.exp(),
                Func::Sqrt => {
                    if inner.lo > 0.0 {
                        0.5 / inner.lo.sqrt()
                    } else {
                        INF
                    }
                }
            };
            mul0(slope, ke)
        }
        // Profiles carry no declared slope; they only stay Lipschitz-neutral
        // when applied to measure-independent arguments.
        Expr::Profile(_, e) => mul0(INF, lipschitz(e, dom, ctx)),
    }
}

/// Infers conservative operator metadata for `expr` on the domain
/// `[lo, hi]`. The fitness rate stays undeclared unless the expression is
/// uniformly bounded above over all measures, in which case that bound serves
/// as both the fitness rate and the uniform field bound.
pub fn infer_meta(expr: &Expr, lo: f64, hi: f64, ctx: &EvalContext) -> OperatorMeta {
    let dom = Interval::new(lo, hi);
    let k = lipschitz(expr, dom, ctx);
    let value_range = range(expr, dom, ctx);
    let upper = value_range.hi.is_finite().then_some(value_range.hi);
    OperatorMeta { lipschitz: k, fitness: upper, sup_bound: upper }
}
