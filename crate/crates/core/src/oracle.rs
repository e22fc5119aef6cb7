//! Closed-form reference solutions used to validate the engine.
//!
//! For uniform competition `Σ[μ] = r(x) - μ(X)` the dynamics solves in closed
//! form: the mass is
//!
//! ```text
//! μ_t(X) = ⟨μ₀, e^(r t)⟩ / (1 + ⟨μ₀, (e^(r t) - 1)/r⟩)
//! ```
//!
//! and the density is `μ₀` scaled pointwise by `e^(r(x) t)` over the same
//! denominator. Everything here is evaluated in a rescaled form (divided by
//! `e^(r_max t)`) so large horizons cannot overflow.

use crate::measure::{Atom, GridMeasure, MASS_EPSILON};
use crate::profiles::{kernel_ah, kernel_jh, Profile};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("the concentration limit needs alpha < 1 (got {alpha})")]
    AlphaAtOne { alpha: f64 },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("no mass on the maximal-growth set; the selection limit is undefined")]
    EmptySelection,
}

/// Quadrature refinement for oracle integrals: 1 reproduces the engine's own
/// sampling, larger factors approximate the continuum.
pub const DEFAULT_OVERSAMPLE: usize = 4;

struct LogisticTerms {
    numerator: f64,
    denominator: f64,
}

/// Shared rescaled quadratures: `numerator = ⟨μ, E⟩` and
/// `denominator = e^(-r_max t) + ⟨μ, (E - e^(-r_max t))/r⟩`
/// with `E(x) = e^((r(x) - r_max) t) ≤ 1`.
fn logistic_terms(mu: &GridMeasure, r: &Profile, t: f64, r_max: f64) -> LogisticTerms {
    let grid = mu.grid();
    let dx = grid.dx();
    let decay = (-r_max * t).exp();
    let mut numerator = 0.0;
    let mut denominator = decay;
    for (i, d) in mu.density().iter().enumerate() {
        let rate = r.eval(grid.midpoint(i));
        let e = ((rate - r_max) * t).exp();
        numerator += d * e * dx;
        denominator += d * ((e - decay) / rate) * dx;
    }
    for a in mu.atoms() {
        let rate = r.eval(a.location);
        let e = ((rate - r_max) * t).exp();
        numerator += a.weight * e;
        denominator += a.weight * ((e - decay) / rate);
    }
    LogisticTerms { numerator, denominator }
}

/// Exact mass of the uniform-competition dynamics at time `t`, by quadrature
/// against `mu0` refined `oversample` times.
pub fn uniform_competition_mass(
    mu0: &GridMeasure,
    r: &Profile,
    t: f64,
    oversample: usize,
) -> Result<f64, OracleError> {
    check_positive_profile(mu0, r)?;
    let grid = mu0.grid();
    let r_max = r.max_on(grid.lo, grid.hi);
    let mu = if oversample > 1 { mu0.refine(oversample) } else { mu0.clone() };
    let terms = logistic_terms(&mu, r, t, r_max);
    Ok(terms.numerator / terms.denominator)
}

/// Exact density of the uniform-competition dynamics at time `t`, on the
/// engine grid of `mu0` (each cell and atom scaled by its own growth factor
/// over the common denominator).
pub fn uniform_competition_density(
    mu0: &GridMeasure,
    r: &Profile,
    t: f64,
) -> Result<GridMeasure, OracleError> {
    check_positive_profile(mu0, r)?;
    let grid = mu0.grid();
    let r_max = r.max_on(grid.lo, grid.hi);
    let terms = logistic_terms(mu0, r, t, r_max);
    let factor = |x: f64| ((r.eval(x) - r_max) * t).exp() / terms.denominator;
    let density = mu0
        .density()
        .iter()
        .enumerate()
        .map(|(i, d)| d * factor(grid.midpoint(i)))
        .collect();
    let atoms = mu0
        .atoms()
        .iter()
        .map(|a| Atom { location: a.location, weight: a.weight * factor(a.location) })
        .collect();
    Ok(GridMeasure::new(grid, density, atoms).expect("scaling preserves validity"))
}

fn check_positive_profile(mu0: &GridMeasure, r: &Profile) -> Result<(), OracleError> {
    let grid = mu0.grid();
    if !(r.min_on(grid.lo, grid.hi) > 0.0) {
        return Err(OracleError::BadParameter(
            "the growth profile must be positive on the domain".into(),
        ));
    }
    Ok(())
}

/// Long-time selection limit of uniform competition: the restriction of `mu0`
/// to the maximal-growth set of `r`, rescaled to total mass `r_max`.
pub fn plateau_limit(mu0: &GridMeasure, r: &Profile) -> Result<GridMeasure, OracleError> {
    check_positive_profile(mu0, r)?;
    let grid = mu0.grid();
    let density: Vec<f64> = mu0
        .density()
        .iter()
        .enumerate()
        .map(|(i, d)| if r.is_argmax(grid.midpoint(i)) { *d } else { 0.0 })
        .collect();
    let atoms: Vec<Atom> =
        mu0.atoms().iter().filter(|a| r.is_argmax(a.location)).cloned().collect();
    let restricted = GridMeasure::new(grid, density, atoms).expect("restriction stays valid");
    let selected_mass = restricted.total_mass();
    if selected_mass <= MASS_EPSILON {
        return Err(OracleError::EmptySelection);
    }
    let r_max = r.max_on(grid.lo, grid.hi);
    Ok(restricted.scaled(r_max / selected_mass).expect("positive scale"))
}

/// Asymptotic total mass of the cannibalism dynamics concentrating at the top
/// trait `M`: `r / (M (1 - alpha))`.
pub fn cannibalism_limit(r: f64, alpha: f64, top_trait: f64) -> Result<f64, OracleError> {
    if alpha >= 1.0 {
        return Err(OracleError::AlphaAtOne { alpha });
    }
    if !(r > 0.0) || !(top_trait > 0.0) || alpha < 0.0 {
        return Err(OracleError::BadParameter(format!(
            "need r > 0, 0 <= alpha < 1, M > 0 (got r={r}, alpha={alpha}, M={top_trait})"
        )));
    }
    Ok(r / (top_trait * (1.0 - alpha)))
}

/// Sup over the engine grid of the steady-state identity residual
/// `|a_h - (kernel * J_h)|`, with the convolution done by midpoint quadrature
/// on a grid `oversample` times finer. Budgets the steady-state tolerance of
/// the kernel-competition runs.
pub fn kernel_steady_residual(h: f64, n_cells: usize, oversample: usize) -> f64 {
    let kernel = crate::profiles::Kernel::TruncatedExponential { h };
    let fine = n_cells * oversample.max(1);
    let dy = 2.0 * h / fine as f64;
    let fine_mid = |j: usize| -h + (j as f64 + 0.5) * dy;
    let jh_fine: Vec<f64> = (0..fine).map(|j| kernel_jh(h, fine_mid(j))).collect();

    let dx = 2.0 * h / n_cells as f64;
    let mut worst = 0.0f64;
    for i in 0..n_cells {
        let x = -h + (i as f64 + 0.5) * dx;
        let mut conv = 0.0;
        for (j, jv) in jh_fine.iter().enumerate() {
            conv += kernel.eval(x - fine_mid(j)) * jv * dy;
        }
        worst = worst.max((kernel_ah(h, x) - conv).abs());
    }
    worst
}
