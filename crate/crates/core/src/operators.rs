//! Built-in selection pressure operators.
//!
//! Each operator maps a finite nonnegative measure to a bounded field of
//! per-capita growth rates sampled on the measure's grid and atoms. Operators
//! are pure functions of `(measure, parameters)` and carry metadata declaring
//! the constants of the estimates they satisfy: a Lipschitz coefficient for
//! the field with respect to TV distance, a fitness bound `F` with
//! `⟨μ, Σ[μ]⟩ ≤ F μ(X)` when one is known, and a uniform upper bound of the
//! field when one exists.

use crate::measure::{FunctionSamples, GridMeasure, MassPrefix, MeasureError, WindowKind};
use crate::profiles::{Kernel, Profile};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("operator expects domain [{expected_lo}, {expected_hi}] but measure lives on [{got_lo}, {got_hi}]")]
    DomainMismatch { expected_lo: f64, expected_hi: f64, got_lo: f64, got_hi: f64 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Declared constants for the growth-field estimates.
///
/// All built-ins admit a TV-Lipschitz coefficient that does not depend on the
/// ball radius, so the coefficient is stored as a single number;
/// [`OperatorMeta::lipschitz_k`] keeps the radius in the call signature for
/// call sites that state the estimate in its general form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorMeta {
    pub lipschitz: f64,
    /// Fitness bound `F`; `None` means unverified.
    pub fitness: Option<f64>,
    /// Uniform upper bound of the field over all measures, when one exists.
    pub sup_bound: Option<f64>,
}

impl OperatorMeta {
    #[inline]
    pub fn lipschitz_k(&self, _ball_radius: f64) -> f64 {
        self.lipschitz
    }
}

/// A selection field: the sampled values of the growth rate on the grid and
/// atoms of the measure it was evaluated at, plus the operator's metadata.
#[derive(Debug, Clone)]
pub struct SelectionField {
    pub samples: FunctionSamples,
    pub meta: OperatorMeta,
}

impl SelectionField {
    pub fn new(samples: FunctionSamples, meta: OperatorMeta) -> Self {
        debug_assert!(
            meta.sup_bound
                .map(|n| samples.max_value() <= n + 1e-12 * n.abs().max(1.0))
                .unwrap_or(true),
            "field exceeds its declared uniform bound"
        );
        SelectionField { samples, meta }
    }

    /// Checks the declared uniform bound against the sampled values.
    pub fn validate(&self) -> bool {
        match self.meta.sup_bound {
            Some(n) => self.samples.max_value() <= n + 1e-12 * n.abs().max(1.0),
            None => true,
        }
    }
}

/// A selection pressure operator: measures in, growth fields out.
pub trait SelectionOperator {
    fn name(&self) -> &'static str;
    fn meta(&self) -> OperatorMeta;
    fn evaluate(&self, mu: &GridMeasure) -> Result<SelectionField, OperatorError>;

    /// Sup norm of the field on the empty population, sampled on `grid_like`.
    /// Enters the stability constant `L(T)`.
    fn sigma_zero_sup(&self, grid_like: &GridMeasure) -> Result<f64, OperatorError> {
        let zero = GridMeasure::zero(grid_like.grid());
        Ok(self.evaluate(&zero)?.samples.sup_abs())
    }
}

// ---------------------------------------------------------------------------
// Three-species competitive system
// ---------------------------------------------------------------------------

/// Growth rates of the cyclic three-species competitive system:
/// `1 - w_i - 2 w_{i+1}` with indices mod 3.
pub fn competitive_triple_rates(weights: [f64; 3]) -> [f64; 3] {
    [
        1.0 - weights[0] - 2.0 * weights[1],
        1.0 - weights[1] - 2.0 * weights[2],
        1.0 - weights[2] - 2.0 * weights[0],
    ]
}

/// Cyclic competition between three fixed traits. The field at one of the
/// trait points uses the point masses there; elsewhere singletons carry no
/// mass and the field is `1 - μ({x})`.
#[derive(Debug, Clone)]
pub struct CompetitiveTriple {
    traits: [f64; 3],
}

impl CompetitiveTriple {
    pub fn new(mut traits: [f64; 3]) -> Result<Self, OperatorError> {
        traits.sort_by(f64::total_cmp);
        if traits[0] == traits[1] || traits[1] == traits[2] {
            return Err(OperatorError::InvalidParameter("trait locations must be distinct".into()));
        }
        Ok(CompetitiveTriple { traits })
    }

    pub fn traits(&self) -> [f64; 3] {
        self.traits
    }

    fn point_mass(mu: &GridMeasure, x: f64) -> f64 {
        mu.atoms()
            .iter()
            .find(|a| a.location == x)
            .map(|a| a.weight)
            .unwrap_or(0.0)
    }
}

impl SelectionOperator for CompetitiveTriple {
    fn name(&self) -> &'static str {
        "competitive_triple"
    }

    fn meta(&self) -> OperatorMeta {
        OperatorMeta { lipschitz: 2.0, fitness: Some(1.0), sup_bound: Some(1.0) }
    }

    fn evaluate(&self, mu: &GridMeasure) -> Result<SelectionField, OperatorError> {
        let weights = [
            Self::point_mass(mu, self.traits[0]),
            Self::point_mass(mu, self.traits[1]),
            Self::point_mass(mu, self.traits[2]),
        ];
        let rates = competitive_triple_rates(weights);
        let value_at = |x: f64| match self.traits.iter().position(|t| *t == x) {
            Some(i) => rates[i],
            None => 1.0 - Self::point_mass(mu, x),
        };
        let samples = FunctionSamples::from_fn(mu, value_at);
        Ok(SelectionField::new(samples, self.meta()))
    }
}

// ---------------------------------------------------------------------------
// Cannibalism
// ---------------------------------------------------------------------------

/// Cannibalistic selection on `[0, trait_max]`:
/// `Σ[μ](x) = r + α x μ(X) - ⟨μ, Id⟩`.
#[derive(Debug, Clone)]
pub struct Cannibalism {
    pub r: f64,
    pub alpha: f64,
    pub trait_max: f64,
}

impl Cannibalism {
    pub fn new(r: f64, alpha: f64, trait_max: f64) -> Result<Self, OperatorError> {
        if !(r > 0.0) {
            return Err(OperatorError::InvalidParameter(format!("r must be positive, got {r}")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(OperatorError::InvalidParameter(format!(
                "alpha must lie in (0, 1], got {alpha}"
            )));
        }
        if !(trait_max > 0.0) {
            return Err(OperatorError::InvalidParameter(format!(
                "trait_max must be positive, got {trait_max}"
            )));
        }
        Ok(Cannibalism { r, alpha, trait_max })
    }
}

impl SelectionOperator for Cannibalism {
    fn name(&self) -> &'static str {
        "cannibalism"
    }

    fn meta(&self) -> OperatorMeta {
        OperatorMeta {
            lipschitz: (1.0 + self.alpha) * self.trait_max,
            fitness: Some(self.r),
            sup_bound: None,
        }
    }

    fn evaluate(&self, mu: &GridMeasure) -> Result<SelectionField, OperatorError> {
        let grid = mu.grid();
        if grid.lo != 0.0 || grid.hi != self.trait_max {
            return Err(OperatorError::DomainMismatch {
                expected_lo: 0.0,
                expected_hi: self.trait_max,
                got_lo: grid.lo,
                got_hi: grid.hi,
            });
        }
        let mass = mu.total_mass();
        let first_moment = mu.first_moment();
        let samples =
            FunctionSamples::from_fn(mu, |x| (self.r + (self.alpha * x) * mass) - first_moment);
        Ok(SelectionField::new(samples, self.meta()))
    }
}

// ---------------------------------------------------------------------------
// Kernel competition
// ---------------------------------------------------------------------------

/// Discrete convolution of `kernel` against `mu`, evaluated at the cell
/// midpoints and at the atom locations of `mu`.
///
/// On the uniform grid the midpoint differences are multiples of the cell
/// width, so the kernel values are tabulated once per call; the summation
/// order over cells then atoms is fixed so results do not depend on any
/// parallel split.
pub(crate) fn convolve_measure(kernel: &Kernel, mu: &GridMeasure) -> (Vec<f64>, Vec<f64>) {
    let grid = mu.grid();
    let dx = grid.dx();
    let n = grid.n_cells;
    let density = mu.density();
    let table: Vec<f64> = (0..n).map(|k| kernel.eval(k as f64 * dx)).collect();

    let mut cells = Vec::with_capacity(n);
    for i in 0..n {
        let mut sum = 0.0;
        for (j, d) in density.iter().enumerate() {
            let k = i.abs_diff(j);
            sum += table[k] * d * dx;
        }
        for a in mu.atoms() {
            sum += kernel.eval(grid.midpoint(i) - a.location) * a.weight;
        }
        cells.push(sum);
    }

    let mut at_atoms = Vec::with_capacity(mu.atoms().len());
    for a in mu.atoms() {
        let mut sum = 0.0;
        for (j, d) in density.iter().enumerate() {
            sum += kernel.eval(a.location - grid.midpoint(j)) * d * dx;
        }
        for b in mu.atoms() {
            sum += kernel.eval(a.location - b.location) * b.weight;
        }
        at_atoms.push(sum);
    }
    (cells, at_atoms)
}

/// Nonlocal competition through an interaction kernel:
/// `Σ[μ](x) = a(x) - ∫ J(x-y) dμ(y)` where `a = J*J`.
#[derive(Debug, Clone)]
pub struct KernelCompetition {
    pub kernel: Kernel,
}

impl KernelCompetition {
    pub fn new(kernel: Kernel) -> Self {
        KernelCompetition { kernel }
    }

    /// Carrying profile `a = J*J`.
    pub fn carrying(&self, x: f64) -> f64 {
        self.kernel.self_convolution(x)
    }
}

impl SelectionOperator for KernelCompetition {
    fn name(&self) -> &'static str {
        "kernel"
    }

    fn meta(&self) -> OperatorMeta {
        // a peaks at the origin and the convolution term is nonpositive, so
        // the peak of a bounds both the fitness rate and the field itself.
        let a_sup = self.kernel.self_convolution(0.0);
        OperatorMeta { lipschitz: self.kernel.sup(), fitness: Some(a_sup), sup_bound: Some(a_sup) }
    }

    fn evaluate(&self, mu: &GridMeasure) -> Result<SelectionField, OperatorError> {
        let grid = mu.grid();
        let (conv_cells, conv_atoms) = convolve_measure(&self.kernel, mu);
        let cell_values = (0..grid.n_cells)
            .map(|i| self.carrying(grid.midpoint(i)) - conv_cells[i])
            .collect();
        let atom_locations = mu.atom_locations();
        let atom_values = atom_locations
            .iter()
            .zip(&conv_atoms)
            .map(|(x, c)| self.carrying(*x) - c)
            .collect();
        let samples = FunctionSamples::new(grid, cell_values, atom_locations, atom_values)?;
        Ok(SelectionField::new(samples, self.meta()))
    }
}

// ---------------------------------------------------------------------------
// Trait-structured prey/predator interaction
// ---------------------------------------------------------------------------

/// Food-chain interaction on a compact trait interval:
/// `Σ[μ](x) = a(x) + A μ([x-η, x) ∩ X) - B μ([x, x+η) ∩ X)`.
///
/// The fitness bound for this operator is unknown, so `meta.fitness` is
/// `None` and growth-bound diagnostics are skipped for it.
#[derive(Debug, Clone)]
pub struct PreyPredator {
    pub a: Profile,
    pub gain: f64,
    pub loss: f64,
    pub range: f64,
}

impl PreyPredator {
    pub fn new(a: Profile, gain: f64, loss: f64, range: f64) -> Result<Self, OperatorError> {
        if gain < 0.0 || loss < 0.0 {
            return Err(OperatorError::InvalidParameter(
                "interaction strengths must be nonnegative".into(),
            ));
        }
        if !(range > 0.0) {
            return Err(OperatorError::InvalidParameter(format!(
                "interaction range must be positive, got {range}"
            )));
        }
        Ok(PreyPredator { a, gain, loss, range })
    }

    /// The default decreasing proliferation profile `1 - 1.5 sqrt(x)`.
    pub fn default_profile() -> Profile {
        Profile::SqrtDecline { base: 1.0, coeff: 1.5 }
    }
}

impl SelectionOperator for PreyPredator {
    fn name(&self) -> &'static str {
        "prey_predator"
    }

    fn meta(&self) -> OperatorMeta {
        OperatorMeta { lipschitz: self.gain + self.loss, fitness: None, sup_bound: None }
    }

    fn evaluate(&self, mu: &GridMeasure) -> Result<SelectionField, OperatorError> {
        // Midpoint-membership windows: each lump of mass (cell or atom) is
        // either prey or predator pressure in full, never split, so the
        // evaluation point's own lump acts purely as self-limitation.
        let prefix = MassPrefix::new(mu);
        let value_at = |x: f64| {
            let prey = prefix.window_mass_midpoint(x - self.range, x, WindowKind::ClosedOpen);
            let predators = prefix.window_mass_midpoint(x, x + self.range, WindowKind::ClosedOpen);
            (self.a.eval(x) + self.gain * prey) - self.loss * predators
        };
        let samples = FunctionSamples::from_fn(mu, value_at);
        Ok(SelectionField::new(samples, self.meta()))
    }
}

// ---------------------------------------------------------------------------
// Uniform competition for resources
// ---------------------------------------------------------------------------

/// Uniform competition: `Σ[μ](x) = r(x) - μ(X)` with a positive growth
/// profile `r`.
#[derive(Debug, Clone)]
pub struct UniformCompetition {
    pub r: Profile,
}

impl UniformCompetition {
    pub fn new(r: Profile) -> Self {
        UniformCompetition { r }
    }

    fn r_max(&self) -> f64 {
        match self.r {
            Profile::Constant(c) => c,
            Profile::Plateau { r_max, .. } => r_max,
            Profile::SqrtDecline { base, .. } => base,
            Profile::KernelCarrying { h } => crate::profiles::kernel_ah(h, 0.0),
        }
    }
}

impl SelectionOperator for UniformCompetition {
    fn name(&self) -> &'static str {
        "uniform_competition"
    }

    fn meta(&self) -> OperatorMeta {
        let r_max = self.r_max();
        OperatorMeta { lipschitz: 1.0, fitness: Some(r_max), sup_bound: Some(r_max) }
    }

    fn evaluate(&self, mu: &GridMeasure) -> Result<SelectionField, OperatorError> {
        let grid = mu.grid();
        if !(self.r.min_on(grid.lo, grid.hi) > 0.0) {
            return Err(OperatorError::InvalidParameter(
                "growth profile must be positive on the domain".into(),
            ));
        }
        let mass = mu.total_mass();
        let samples = FunctionSamples::from_fn(mu, |x| self.r.eval(x) - mass);
        Ok(SelectionField::new(samples, self.meta()))
    }
}

// ---------------------------------------------------------------------------
// Saturating growth
// ---------------------------------------------------------------------------

/// Mass-saturating growth `Σ[μ] = e^(-μ(X))·1`: always positive, so the
/// population grows forever, yet all growth estimates hold with `F = 1`.
#[derive(Debug, Clone, Default)]
pub struct Saturating;

impl SelectionOperator for Saturating {
    fn name(&self) -> &'static str {
        "saturating"
    }

    fn meta(&self) -> OperatorMeta {
        OperatorMeta { lipschitz: 1.0, fitness: Some(1.0), sup_bound: Some(1.0) }
    }

    fn evaluate(&self, mu: &GridMeasure) -> Result<SelectionField, OperatorError> {
        let value = (-mu.total_mass()).exp();
        let samples = FunctionSamples::from_fn(mu, |_| value);
        Ok(SelectionField::new(samples, self.meta()))
    }
}

// ---------------------------------------------------------------------------
// Hypothesis checking harness
// ---------------------------------------------------------------------------

/// Result of checking the declared estimates of an operator against a set of
/// sample measures. `ok()` holds when no declared bound is violated; when the
/// fitness bound is undeclared only the empirical ratio is recorded.
#[derive(Debug, Clone)]
pub struct HypothesisReport {
    /// (i, j, measured sup difference, allowed bound) for violating pairs.
    pub lipschitz_violations: Vec<(usize, usize, f64, f64)>,
    /// (i, measured fitness, allowed bound) for violating samples.
    pub fitness_violations: Vec<(usize, f64, f64)>,
    pub fitness_checked: bool,
    /// Largest measured `sup|Σ[μ]-Σ[ν]| / (k · tv)` over the sample pairs.
    pub max_lipschitz_ratio: f64,
    /// Largest measured `⟨μ, Σ[μ]⟩ / μ(X)` over the samples.
    pub max_fitness_rate: f64,
}

impl HypothesisReport {
    pub fn ok(&self) -> bool {
        self.lipschitz_violations.is_empty() && self.fitness_violations.is_empty()
    }
}

/// Checks the TV-Lipschitz estimate and the fitness bound of `op` on every
/// pair / element of `samples`. All samples must share one grid; the sup norm
/// of field differences is taken over the cell midpoints.
pub fn check_hypotheses(
    op: &dyn SelectionOperator,
    samples: &[GridMeasure],
) -> Result<HypothesisReport, OperatorError> {
    let meta = op.meta();
    let fields: Vec<SelectionField> =
        samples.iter().map(|mu| op.evaluate(mu)).collect::<Result<_, _>>()?;

    let mut report = HypothesisReport {
        lipschitz_violations: Vec::new(),
        fitness_violations: Vec::new(),
        fitness_checked: meta.fitness.is_some(),
        max_lipschitz_ratio: 0.0,
        max_fitness_rate: f64::NEG_INFINITY,
    };

    for (i, (mu, field)) in samples.iter().zip(&fields).enumerate() {
        let mass = mu.total_mass();
        if mass <= 0.0 {
            continue;
        }
        let fitness = mu.pair(&field.samples)?;
        report.max_fitness_rate = report.max_fitness_rate.max(fitness / mass);
        if let Some(f_bound) = meta.fitness {
            let allowed = f_bound * mass;
            if fitness > allowed + 1e-9 * allowed.abs().max(1.0) {
                report.fitness_violations.push((i, fitness, allowed));
            }
        }
    }

    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let tv = samples[i].tv_distance(&samples[j])?;
            if tv == 0.0 {
                continue;
            }
            let radius = samples[i].total_mass().max(samples[j].total_mass());
            let bound = meta.lipschitz_k(radius) * tv;
            let sup_diff = fields[i]
                .samples
                .cell_values()
                .iter()
                .zip(fields[j].samples.cell_values())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if bound > 0.0 {
                report.max_lipschitz_ratio = report.max_lipschitz_ratio.max(sup_diff / bound);
            }
            if sup_diff > bound + 1e-9 * bound.abs().max(1.0) {
                report.lipschitz_violations.push((i, j, sup_diff, bound));
            }
        }
    }

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Atom, Grid};

    fn unit_grid(n: usize) -> Grid {
        Grid::new(0.0, 1.0, n).unwrap()
    }

    fn atoms_measure(grid: Grid, atoms: Vec<Atom>) -> GridMeasure {
        GridMeasure::new(grid, vec![0.0; grid.n_cells], atoms).unwrap()
    }

    #[test]
    fn triple_rates_at_empty_state() {
        assert_eq!(competitive_triple_rates([0.0, 0.0, 0.0]), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn triple_rates_at_interior_equilibrium() {
        let r = competitive_triple_rates([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        for v in r {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn triple_rates_single_species() {
        assert_eq!(competitive_triple_rates([1.0, 0.0, 0.0]), [0.0, 1.0, -1.0]);
    }

    #[test]
    fn triple_field_reads_point_masses() {
        let op = CompetitiveTriple::new([0.0, 0.5, 1.0]).unwrap();
        let mu = atoms_measure(
            unit_grid(4),
            vec![
                Atom { location: 0.0, weight: 1.0 },
                Atom { location: 0.5, weight: 0.0 },
                Atom { location: 1.0, weight: 0.0 },
            ],
        );
        let field = op.evaluate(&mu).unwrap();
        assert_eq!(field.samples.atom_values(), &[0.0, 1.0, -1.0]);
        // Cells carry no point mass.
        assert!(field.samples.cell_values().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn cannibalism_on_empty_population_is_r() {
        let op = Cannibalism::new(3.0, 0.8, 1.0).unwrap();
        let mu = GridMeasure::zero(unit_grid(32));
        let field = op.evaluate(&mu).unwrap();
        assert!(field.samples.cell_values().iter().all(|v| *v == 3.0));
    }

    #[test]
    fn cannibalism_equilibrium_at_top_trait() {
        // An atom of weight r/(M(1-alpha)) = 15 at the top trait M = 1 has
        // zero growth there when r = 3 and alpha = 0.8: the concentration
        // limit is an equilibrium.
        let op = Cannibalism::new(3.0, 0.8, 1.0).unwrap();
        let mu = atoms_measure(unit_grid(4), vec![Atom { location: 1.0, weight: 15.0 }]);
        let field = op.evaluate(&mu).unwrap();
        assert!(field.samples.atom_values()[0].abs() < 1e-12);
    }

    #[test]
    fn cannibalism_affine_field_from_single_atom() {
        // atom(0.5, w=2), r=1, alpha=0.5 gives Σ(x) = 1 + x - 1 = x.
        let op = Cannibalism::new(1.0, 0.5, 1.0).unwrap();
        let mu = atoms_measure(unit_grid(8), vec![Atom { location: 0.5, weight: 2.0 }]);
        let field = op.evaluate(&mu).unwrap();
        let grid = mu.grid();
        for (i, v) in field.samples.cell_values().iter().enumerate() {
            assert!((v - grid.midpoint(i)).abs() < 1e-14);
        }
        assert!((field.samples.atom_values()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cannibalism_rejects_bad_parameters() {
        assert!(Cannibalism::new(0.0, 0.5, 1.0).is_err());
        assert!(Cannibalism::new(1.0, 0.0, 1.0).is_err());
        assert!(Cannibalism::new(1.0, 1.5, 1.0).is_err());
    }

    #[test]
    fn cannibalism_rejects_wrong_domain() {
        let op = Cannibalism::new(1.0, 0.5, 1.0).unwrap();
        let mu = GridMeasure::zero(Grid::new(0.0, 2.0, 8).unwrap());
        assert!(matches!(op.evaluate(&mu), Err(OperatorError::DomainMismatch { .. })));
    }

    #[test]
    fn kernel_field_on_empty_population_is_carrying() {
        let op = KernelCompetition::new(Kernel::Exponential);
        let grid = Grid::new(-5.0, 5.0, 64).unwrap();
        let mu = GridMeasure::zero(grid);
        let field = op.evaluate(&mu).unwrap();
        for (i, v) in field.samples.cell_values().iter().enumerate() {
            assert_eq!(*v, crate::profiles::kernel_a(grid.midpoint(i)));
        }
    }

    #[test]
    fn kernel_field_at_origin_atom() {
        // δ0 of weight 1, untruncated kernel: Σ(0) = a(0) - J(0) = -1/4.
        let op = KernelCompetition::new(Kernel::Exponential);
        let grid = Grid::new(-5.0, 5.0, 64).unwrap();
        let mu = GridMeasure::new(
            grid,
            vec![0.0; 64],
            vec![Atom { location: 0.0, weight: 1.0 }],
        )
        .unwrap();
        let field = op.evaluate(&mu).unwrap();
        assert!((field.samples.atom_values()[0] - (-0.25)).abs() < 1e-15);
    }

    #[test]
    fn kernel_steady_state_has_small_field() {
        // Density J_h is a steady state of the truncated problem; on the grid
        // the field at it is only quadrature error (measured 3.3e-6 at 800
        // cells, shrinking quadratically).
        let h = 5.0;
        let kernel = Kernel::truncated(h).unwrap();
        let op = KernelCompetition::new(kernel);
        let grid = Grid::new(-h, h, 800).unwrap();
        let mu = GridMeasure::from_fn(grid, |x| crate::profiles::kernel_jh(h, x)).unwrap();
        let field = op.evaluate(&mu).unwrap();
        let sup = field.samples.sup_abs();
        assert!(sup < 1e-5, "steady-state residual {sup}");

        let coarse_grid = Grid::new(-h, h, 200).unwrap();
        let coarse_mu =
            GridMeasure::from_fn(coarse_grid, |x| crate::profiles::kernel_jh(h, x)).unwrap();
        let coarse = op.evaluate(&coarse_mu).unwrap().samples.sup_abs();
        let ratio = coarse / sup;
        assert!((8.0..32.0).contains(&ratio), "expected ~16x from 4x refinement, got {ratio}");
    }

    #[test]
    fn prey_predator_field_without_population_is_profile() {
        let op = PreyPredator::new(PreyPredator::default_profile(), 0.8, 0.7, 0.51).unwrap();
        let mu = atoms_measure(
            unit_grid(8),
            vec![Atom { location: 0.0, weight: 0.0 }, Atom { location: 1.0, weight: 0.0 }],
        );
        let field = op.evaluate(&mu).unwrap();
        assert_eq!(field.samples.atom_values()[0], 1.0);
        assert!((field.samples.atom_values()[1] - (-0.5)).abs() < 1e-15);
    }

    #[test]
    fn prey_predator_window_membership() {
        // An atom at 0.5 is prey for x = 0.9 (inside [0.39, 0.9)) and predator
        // pressure for x = 0.5 (inside [0.5, 1.01) ∩ X).
        let op = PreyPredator::new(PreyPredator::default_profile(), 0.8, 0.7, 0.51).unwrap();
        let a = PreyPredator::default_profile();
        let mu = atoms_measure(
            unit_grid(8),
            vec![Atom { location: 0.5, weight: 1.0 }, Atom { location: 0.9, weight: 0.0 }],
        );
        let field = op.evaluate(&mu).unwrap();
        let at = |loc: f64| {
            let idx = mu.atoms().iter().position(|x| x.location == loc).unwrap();
            field.samples.atom_values()[idx]
        };
        assert!((at(0.9) - (a.eval(0.9) + 0.8)).abs() < 1e-15);
        assert!((at(0.5) - (a.eval(0.5) - 0.7)).abs() < 1e-15);
    }

    #[test]
    fn prey_predator_window_part_is_piecewise_constant_for_atomic_measures() {
        let op = PreyPredator::new(PreyPredator::default_profile(), 0.8, 0.7, 0.2).unwrap();
        let grid = unit_grid(1000);
        let mu = atoms_measure(
            grid,
            vec![Atom { location: 0.3, weight: 1.0 }, Atom { location: 0.6, weight: 0.5 }],
        );
        let field = op.evaluate(&mu).unwrap();
        // Subtract the x-profile; the remainder only jumps when a window
        // boundary crosses an atom, i.e. at loc, loc ± range.
        let mut crossings: Vec<f64> = Vec::new();
        for a in mu.atoms() {
            crossings.extend([a.location - 0.2, a.location, a.location + 0.2]);
        }
        let a = PreyPredator::default_profile();
        for i in 1..grid.n_cells {
            let prev = field.samples.cell_values()[i - 1] - a.eval(grid.midpoint(i - 1));
            let here = field.samples.cell_values()[i] - a.eval(grid.midpoint(i));
            let straddles = crossings
                .iter()
                .any(|c| grid.midpoint(i - 1) < *c && *c <= grid.midpoint(i));
            if !straddles {
                assert_eq!(prev, here, "unexpected jump at cell {i}");
            }
        }
    }

    #[test]
    fn uniform_competition_matches_mass_shift() {
        let op = UniformCompetition::new(Profile::Constant(1.0));
        let mu = GridMeasure::from_fn(unit_grid(16), |_| 0.5).unwrap();
        let field = op.evaluate(&mu).unwrap();
        for v in field.samples.cell_values() {
            assert!((v - 0.5).abs() < 1e-12);
        }
        let zero = GridMeasure::zero(unit_grid(16));
        let f0 = op.evaluate(&zero).unwrap();
        assert!(f0.samples.cell_values().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn uniform_competition_zero_on_plateau_at_capacity() {
        let r = Profile::plateau(1.0, 0.4, 0.6, 0.3, 0.0).unwrap();
        let op = UniformCompetition::new(r);
        let mu = GridMeasure::from_fn(unit_grid(10), |_| 1.0).unwrap(); // mass ~ r_max
        let field = op.evaluate(&mu).unwrap();
        let v = field.samples.cell_values()[5]; // midpoint 0.55, on the plateau
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn uniform_competition_field_differences_are_trait_independent() {
        let r = Profile::plateau(1.0, 0.2, 0.5, 0.3, 0.01).unwrap();
        let op = UniformCompetition::new(r);
        let mu = GridMeasure::from_fn(unit_grid(64), |x| 0.3 + x).unwrap();
        let nu = GridMeasure::from_fn(unit_grid(64), |x| 1.1 * (1.0 - x)).unwrap();
        let fm = op.evaluate(&mu).unwrap();
        let fn_ = op.evaluate(&nu).unwrap();
        let diffs: Vec<f64> = fm
            .samples
            .cell_values()
            .iter()
            .zip(fn_.samples.cell_values())
            .map(|(a, b)| a - b)
            .collect();
        for d in &diffs {
            assert_eq!(*d, diffs[0]);
        }
    }

    #[test]
    fn saturating_field_values() {
        let op = Saturating;
        let zero = GridMeasure::zero(unit_grid(4));
        assert!(op.evaluate(&zero).unwrap().samples.cell_values().iter().all(|v| *v == 1.0));

        let ln2 = std::f64::consts::LN_2;
        let mu = GridMeasure::from_fn(unit_grid(4), |_| ln2).unwrap();
        let field = op.evaluate(&mu).unwrap();
        assert!((field.samples.cell_values()[0] - 0.5).abs() < 1e-12);
    }

    mod hypothesis_harness {
        use super::*;
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};

        /// Random measures with density plus an occasional atom, biased to
        /// include endpoint mass so the Lipschitz sup is actually explored.
        fn random_measures(rng: &mut StdRng, grid: Grid, count: usize) -> Vec<GridMeasure> {
            let mut out = Vec::with_capacity(count);
            for i in 0..count {
                let scale: f64 = rng.gen_range(0.1..2.0);
                let density: Vec<f64> =
                    (0..grid.n_cells).map(|_| rng.gen_range(0.0..scale)).collect();
                let mut atoms = Vec::new();
                if i % 3 == 0 {
                    atoms.push(Atom { location: grid.hi, weight: rng.gen_range(0.0..1.0) });
                }
                if i % 4 == 0 {
                    atoms.push(Atom { location: grid.lo, weight: rng.gen_range(0.0..1.0) });
                }
                let base = GridMeasure::new(grid, density, atoms).unwrap();
                out.push(base);
            }
            // One-sided perturbations of earlier samples sharpen the measured
            // Lipschitz ratios.
            for i in 0..count / 2 {
                let mut density = out[i].density().to_vec();
                let cell = rng.gen_range(0..grid.n_cells);
                density[cell] += rng.gen_range(0.0..0.5);
                let atoms = out[i].atoms().to_vec();
                out.push(GridMeasure::new(grid, density, atoms).unwrap());
            }
            out
        }

        struct HalvedLipschitz<'a>(&'a dyn SelectionOperator);

        impl SelectionOperator for HalvedLipschitz<'_> {
            fn name(&self) -> &'static str {
                "halved"
            }
            fn meta(&self) -> OperatorMeta {
                let mut meta = self.0.meta();
                meta.lipschitz /= 2.0;
                meta
            }
            fn evaluate(&self, mu: &GridMeasure) -> Result<SelectionField, OperatorError> {
                self.0.evaluate(mu)
            }
        }

        #[test]
        fn declared_bounds_hold_on_random_samples() {
            let mut rng = StdRng::seed_from_u64(0x5e1ec7);
            let grid = unit_grid(64);
            let samples = random_measures(&mut rng, grid, 70); // 105 with perturbations

            let ops: Vec<Box<dyn SelectionOperator>> = vec![
                Box::new(Cannibalism::new(3.0, 0.8, 1.0).unwrap()),
                Box::new(Saturating),
                Box::new(UniformCompetition::new(Profile::Constant(1.0))),
                Box::new(PreyPredator::new(PreyPredator::default_profile(), 0.8, 0.7, 0.51).unwrap()),
                Box::new(KernelCompetition::new(Kernel::Exponential)),
            ];
            for op in &ops {
                let report = check_hypotheses(op.as_ref(), &samples).unwrap();
                assert!(
                    report.ok(),
                    "{}: lipschitz {:?} fitness {:?}",
                    op.name(),
                    report.lipschitz_violations.first(),
                    report.fitness_violations.first()
                );
            }
        }

        #[test]
        fn halved_lipschitz_constant_is_detected() {
            // An extra unit of mass at the top trait moves the cannibalism
            // field by the full trait-weighted constant; half of it cannot
            // cover that.
            let grid = unit_grid(64);
            let base = GridMeasure::from_fn(grid, |_| 0.5).unwrap();
            let mut with_atom = base.atoms().to_vec();
            with_atom.push(Atom { location: 1.0, weight: 0.25 });
            let bumped = GridMeasure::new(grid, base.density().to_vec(), with_atom).unwrap();

            let op = Cannibalism::new(3.0, 0.8, 1.0).unwrap();
            let honest = check_hypotheses(&op, &[base.clone(), bumped.clone()]).unwrap();
            assert!(honest.ok());

            let halved = HalvedLipschitz(&op);
            let report = check_hypotheses(&halved, &[base, bumped]).unwrap();
            assert!(!report.lipschitz_violations.is_empty());
        }

        #[test]
        fn prey_predator_records_empirical_fitness_only() {
            let mut rng = StdRng::seed_from_u64(7);
            let grid = unit_grid(32);
            let samples = random_measures(&mut rng, grid, 20);
            let op = PreyPredator::new(PreyPredator::default_profile(), 0.8, 0.7, 0.51).unwrap();
            let report = check_hypotheses(&op, &samples).unwrap();
            assert!(!report.fitness_checked);
            assert!(report.fitness_violations.is_empty());
            assert!(report.max_fitness_rate.is_finite());
        }
    }
}
