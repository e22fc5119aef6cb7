//! Growth-rate profiles, initial-condition densities and interaction kernels.
//!
//! Everything here is a plain function of the trait `x`; the operators in
//! [`crate::operators`] and the expression language both evaluate these
//! through the same code paths so that the two routes agree bit for bit.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("beta parameters must satisfy 1 <= p, q and p + q - 1 <= 20 (got p={p}, q={q})")]
    BetaParams { p: u32, q: u32 },
    #[error("plateau profile needs lo <= s0 < s1 <= hi and 0 < gap < r_max")]
    BadPlateau,
    #[error("kernel truncation must be positive (got h={h})")]
    BadTruncation { h: f64 },
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Beta density with integer parameters:
/// `u^(p-1) (1-u)^(q-1) (p+q-1)! / ((p-1)!(q-1)!)` on `[0,1]`, zero outside.
pub fn beta_pdf(p: u32, q: u32, u: f64) -> f64 {
    if !(0.0..=1.0).contains(&u) {
        return 0.0;
    }
    let norm = factorial(p + q - 1) / (factorial(p - 1) * factorial(q - 1));
    norm * u.powi(p as i32 - 1) * (1.0 - u).powi(q as i32 - 1)
}

pub fn check_beta_params(p: u32, q: u32) -> Result<(), ProfileError> {
    if p < 1 || q < 1 || p + q - 1 > 20 {
        return Err(ProfileError::BetaParams { p, q });
    }
    Ok(())
}

/// Untruncated interaction kernel `J(x) = e^(-|x|) / 2`.
pub fn kernel_j(x: f64) -> f64 {
    (-x.abs()).exp() / 2.0
}

/// Self-convolution of `J`: `(J*J)(x) = (1+|x|) e^(-|x|) / 4`.
pub fn kernel_a(x: f64) -> f64 {
    (1.0 + x.abs()) * (-x.abs()).exp() / 4.0
}

/// Truncated kernel `J_h(x) = e^(-|x|) / (2 (1 - e^(-h)))` on `(-h, h)`,
/// zero outside. The normalization makes it a probability density.
pub fn kernel_jh(h: f64, x: f64) -> f64 {
    if x.abs() >= h {
        return 0.0;
    }
    (-x.abs()).exp() / (2.0 * (1.0 - (-h).exp()))
}

/// Self-convolution of the truncated kernel on `[-h, h]`:
/// `a_h(x) = ((1+|x|) e^(-|x|) - e^(-2h) cosh x) / (4 (1 - e^(-h))^2)`.
pub fn kernel_ah(h: f64, x: f64) -> f64 {
    let c = 1.0 - (-h).exp();
    ((1.0 + x.abs()) * (-x.abs()).exp() - (-2.0 * h).exp() * x.cosh()) / (4.0 * c * c)
}

/// Interaction kernels available to the competition operator and to `conv`
/// nodes of the expression language.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `J(x) = e^(-|x|)/2` on the whole line.
    Exponential,
    /// `J_h`: the exponential kernel restricted to `(-h, h)` and renormalized
    /// to unit mass.
    TruncatedExponential { h: f64 },
}

impl Kernel {
    pub fn truncated(h: f64) -> Result<Self, ProfileError> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(ProfileError::BadTruncation { h });
        }
        Ok(Kernel::TruncatedExponential { h })
    }

    /// Interaction strength at separation `x`.
    ///
    /// For the truncated problem this is the renormalized exponential
    /// `e^(-|x|) / (2 (1 - e^(-h)))` with no support cutoff: the truncation
    /// lives in the domain `[-h, h]`, and only with this form does the
    /// carrying capacity `a_h` equal the self-convolution exactly, making the
    /// density `J_h` a true steady state. The cutoff kernel differs from it
    /// only at separations `|x| >= h` and by at most `e^(-h)` there.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Kernel::Exponential => kernel_j(x),
            Kernel::TruncatedExponential { h } => (-x.abs()).exp() / (2.0 * (1.0 - (-h).exp())),
        }
    }

    /// Supremum of the kernel, attained at the origin.
    pub fn sup(&self) -> f64 {
        match self {
            Kernel::Exponential => 0.5,
            Kernel::TruncatedExponential { h } => 1.0 / (2.0 * (1.0 - (-h).exp())),
        }
    }

    /// The kernel convolved with itself.
    pub fn self_convolution(&self, x: f64) -> f64 {
        match self {
            Kernel::Exponential => kernel_a(x),
            Kernel::TruncatedExponential { h } => kernel_ah(*h, x),
        }
    }
}

/// Growth-rate / intrinsic-fitness profiles used by the built-in operators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    Constant(f64),
    /// `r_max` on the plateau `[s0, s1]`, falling off outside by
    /// `gap * min(1, dist/ramp)` (a step when `ramp = 0`). The maximum is
    /// attained on a set of positive length and the drop outside is `gap`.
    Plateau { r_max: f64, s0: f64, s1: f64, gap: f64, ramp: f64 },
    /// `base - coeff * sqrt(x)`: faster proliferation for small traits.
    SqrtDecline { base: f64, coeff: f64 },
    /// The self-convolution `a_h` of the truncated kernel.
    KernelCarrying { h: f64 },
}

impl Profile {
    pub fn plateau(r_max: f64, s0: f64, s1: f64, gap: f64, ramp: f64) -> Result<Self, ProfileError> {
        if !(s0 < s1) || !(gap > 0.0) || !(gap < r_max) || ramp < 0.0 {
            return Err(ProfileError::BadPlateau);
        }
        Ok(Profile::Plateau { r_max, s0, s1, gap, ramp })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Profile::Constant(c) => c,
            Profile::Plateau { r_max, s0, s1, gap, ramp } => {
                if x >= s0 && x <= s1 {
                    r_max
                } else {
                    let dist = if x < s0 { s0 - x } else { x - s1 };
                    // ramp = 0 gives dist/ramp = +inf, i.e. a sharp step.
                    r_max - gap * (dist / ramp).min(1.0)
                }
            }
            Profile::SqrtDecline { base, coeff } => base - coeff * x.sqrt(),
            Profile::KernelCarrying { h } => kernel_ah(h, x),
        }
    }

    /// Supremum over the interval `[lo, hi]`.
    pub fn max_on(&self, lo: f64, hi: f64) -> f64 {
        match *self {
            Profile::Constant(c) => c,
            Profile::Plateau { r_max, .. } => r_max,
            Profile::SqrtDecline { .. } => self.eval(lo.max(0.0)),
            Profile::KernelCarrying { h } => {
                if lo <= 0.0 && hi >= 0.0 {
                    kernel_ah(h, 0.0)
                } else {
                    self.eval(lo.abs().min(hi.abs()))
                }
            }
        }
    }

    /// Infimum over the interval `[lo, hi]`.
    pub fn min_on(&self, lo: f64, hi: f64) -> f64 {
        match *self {
            Profile::Constant(c) => c,
            Profile::Plateau { r_max, gap, .. } => r_max - gap,
            Profile::SqrtDecline { .. } => self.eval(hi),
            Profile::KernelCarrying { .. } => self.eval(lo.abs().max(hi.abs())),
        }
    }

    /// Whether `x` belongs to the set where the profile attains its maximum.
    pub fn is_argmax(&self, x: f64) -> bool {
        match *self {
            Profile::Constant(_) => true,
            Profile::Plateau { s0, s1, .. } => x >= s0 && x <= s1,
            Profile::SqrtDecline { .. } => x == 0.0,
            Profile::KernelCarrying { .. } => x == 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_matches_polynomial_form() {
        // beta(2,6) normalizes to 42 x (1-x)^5.
        let x = 0.3;
        assert_eq!(beta_pdf(2, 6, x), 42.0 * x * (1.0 - x).powi(5));
        assert_eq!(beta_pdf(2, 6, -0.1), 0.0);
        assert_eq!(beta_pdf(2, 6, 1.1), 0.0);
    }

    #[test]
    fn beta_integrates_to_one() {
        for (p, q) in [(2, 6), (2, 5), (2, 3)] {
            let n = 200_000;
            let dx = 1.0 / n as f64;
            let total: f64 =
                (0..n).map(|i| beta_pdf(p, q, (i as f64 + 0.5) * dx) * dx).sum();
            assert!((total - 1.0).abs() < 1e-8, "beta({p},{q}) integral {total}");
        }
    }

    #[test]
    fn truncated_kernel_vanishes_outside_support() {
        let h = 5.0;
        assert_eq!(kernel_jh(h, h), 0.0);
        assert_eq!(kernel_jh(h, -h - 0.1), 0.0);
        assert!(kernel_jh(h, h - 1e-9) > 0.0);
    }

    #[test]
    fn truncated_kernel_is_probability_density() {
        // Midpoint quadrature oracle on a fine symmetric grid.
        let h = 5.0;
        let n = 400_000;
        let dx = 2.0 * h / n as f64;
        let total: f64 = (0..n).map(|i| kernel_jh(h, -h + (i as f64 + 0.5) * dx) * dx).sum();
        assert!((total - 1.0).abs() < 1e-8, "integral {total}");
    }

    #[test]
    fn truncated_carrying_tends_to_untruncated() {
        let h = 40.0;
        for x in [-3.0, -0.5, 0.0, 1.0, 2.5] {
            let rel = (kernel_ah(h, x) - kernel_a(x)).abs() / kernel_a(x);
            assert!(rel < 1e-12, "x={x} rel={rel}");
        }
    }

    #[test]
    fn plateau_profile_shape() {
        let r = Profile::plateau(1.0, 0.4, 0.6, 0.3, 0.05).unwrap();
        assert_eq!(r.eval(0.5), 1.0);
        assert_eq!(r.eval(0.4), 1.0);
        assert!((r.eval(0.625) - (1.0 - 0.15)).abs() < 1e-12); // mid-ramp
        assert_eq!(r.eval(0.9), 0.7); // past the ramp
        assert_eq!(r.eval(0.0), 0.7);
        assert_eq!(r.min_on(0.0, 1.0), 0.7);
        assert_eq!(r.max_on(0.0, 1.0), 1.0);
        assert!(r.is_argmax(0.45) && !r.is_argmax(0.39));
    }

    #[test]
    fn sharp_plateau_step() {
        let r = Profile::plateau(1.0, 0.4, 0.6, 0.3, 0.0).unwrap();
        assert_eq!(r.eval(0.6 + 1e-12), 0.7);
    }

    #[test]
    fn sqrt_decline_profile() {
        let a = Profile::SqrtDecline { base: 1.0, coeff: 1.5 };
        assert_eq!(a.eval(0.0), 1.0);
        assert!((a.eval(1.0) - (-0.5)).abs() < 1e-15);
        assert_eq!(a.max_on(0.0, 1.0), 1.0);
    }
}
