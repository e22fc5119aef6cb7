//! Discrete finite nonnegative measures on a compact interval.
//!
//! A [`GridMeasure`] is a piecewise-constant density on a uniform grid plus a
//! list of weighted atoms. The split is kept explicit everywhere: densities
//! integrate against cell midpoints, atoms pair exactly, and the two parts are
//! never merged. For nonnegative measures the total variation norm equals the
//! total mass, so `tv_distance` of two measures is the cellwise/atomwise L1
//! difference.

use thiserror::Error;

/// Division-by-mass guard. Solutions may decay exponentially without ever
/// reaching zero; only genuine (sub-denormal scale) zero mass is rejected.
pub const MASS_EPSILON: f64 = 1e-30;

#[derive(Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("grid must have at least one cell and lo < hi (got lo={lo}, hi={hi}, cells={cells})")]
    BadGrid { lo: f64, hi: f64, cells: usize },
    #[error("density length {got} does not match cell count {expected}")]
    DensityLength { expected: usize, got: usize },
    #[error("negative or non-finite value {value} at index {index}")]
    BadValue { index: usize, value: f64 },
    #[error("atom at {location} lies outside the domain [{lo}, {hi}]")]
    AtomOutOfDomain { location: f64, lo: f64, hi: f64 },
    #[error("duplicate atom location {location}")]
    DuplicateAtom { location: f64 },
    #[error("incompatible grids or atom layouts")]
    GridMismatch,
    #[error("measure has (near) zero mass: {mass}")]
    ZeroMass { mass: f64 },
}

/// Uniform partition of `[lo, hi]` into `n_cells` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n_cells: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n_cells: usize) -> Result<Self, MeasureError> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi || n_cells == 0 {
            return Err(MeasureError::BadGrid { lo, hi, cells: n_cells });
        }
        Ok(Grid { lo, hi, n_cells })
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        (self.hi - self.lo) / self.n_cells as f64
    }

    #[inline]
    pub fn midpoint(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.dx()
    }

    #[inline]
    pub fn cell_left(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.dx()
    }

    /// Index of the cell containing `x`, clamped to the domain.
    pub fn cell_of(&self, x: f64) -> usize {
        let raw = ((x - self.lo) / self.dx()).floor();
        (raw.max(0.0) as usize).min(self.n_cells - 1)
    }
}

/// Point mass: a weight sitting at a single trait location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

/// Finite nonnegative measure: density per cell plus atoms, both immutable
/// after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    grid: Grid,
    density: Vec<f64>,
    atoms: Vec<Atom>,
}

impl GridMeasure {
    /// Validating constructor. Atoms are sorted by location; duplicates and
    /// out-of-domain locations are rejected, as are negative or non-finite
    /// values anywhere.
    pub fn new(grid: Grid, density: Vec<f64>, mut atoms: Vec<Atom>) -> Result<Self, MeasureError> {
        if density.len() != grid.n_cells {
            return Err(MeasureError::DensityLength { expected: grid.n_cells, got: density.len() });
        }
        for (i, &d) in density.iter().enumerate() {
            if !d.is_finite() || d < 0.0 {
                return Err(MeasureError::BadValue { index: i, value: d });
            }
        }
        atoms.sort_by(|a, b| a.location.total_cmp(&b.location));
        for (i, a) in atoms.iter().enumerate() {
            if !a.weight.is_finite() || a.weight < 0.0 || !a.location.is_finite() {
                return Err(MeasureError::BadValue { index: i, value: a.weight });
            }
            if a.location < grid.lo || a.location > grid.hi {
                return Err(MeasureError::AtomOutOfDomain {
                    location: a.location,
                    lo: grid.lo,
                    hi: grid.hi,
                });
            }
            if i > 0 && atoms[i - 1].location == a.location {
                return Err(MeasureError::DuplicateAtom { location: a.location });
            }
        }
        Ok(GridMeasure { grid, density, atoms })
    }

    /// Zero measure on `grid`.
    pub fn zero(grid: Grid) -> Self {
        GridMeasure { grid, density: vec![0.0; grid.n_cells], atoms: Vec::new() }
    }

    /// Sample `f` at cell midpoints as the density (no atoms).
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self, MeasureError> {
        let density = (0..grid.n_cells).map(|i| f(grid.midpoint(i))).collect();
        Self::new(grid, density, Vec::new())
    }

    /// Engine-internal constructor for values produced by positivity
    /// preserving updates; skips revalidation on the hot path.
    pub(crate) fn from_parts_unchecked(grid: Grid, density: Vec<f64>, atoms: Vec<Atom>) -> Self {
        debug_assert!(density.iter().all(|d| *d >= 0.0));
        debug_assert!(atoms.iter().all(|a| a.weight >= 0.0));
        GridMeasure { grid, density, atoms }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn density(&self) -> &[f64] {
        &self.density
    }

    #[inline]
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom_locations(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.location).collect()
    }

    /// Total mass, which for a nonnegative measure is also its TV norm.
    pub fn total_mass(&self) -> f64 {
        let dx = self.grid.dx();
        let mut sum = 0.0;
        for &d in &self.density {
            sum += d * dx;
        }
        for a in &self.atoms {
            sum += a.weight;
        }
        sum
    }

    /// Duality pairing against sampled test values: midpoint quadrature over
    /// cells plus exact sums over atoms.
    pub fn pair(&self, f: &FunctionSamples) -> Result<f64, MeasureError> {
        self.check_compatible(f)?;
        let dx = self.grid.dx();
        let mut sum = 0.0;
        for (d, v) in self.density.iter().zip(&f.cell_values) {
            sum += v * d * dx;
        }
        for (a, v) in self.atoms.iter().zip(&f.atom_values) {
            sum += v * a.weight;
        }
        Ok(sum)
    }

    fn check_compatible(&self, f: &FunctionSamples) -> Result<(), MeasureError> {
        if f.grid != self.grid
            || f.atom_values.len() != self.atoms.len()
            || !f
                .atom_locations
                .iter()
                .zip(&self.atoms)
                .all(|(loc, a)| *loc == a.location)
        {
            return Err(MeasureError::GridMismatch);
        }
        Ok(())
    }

    /// TV distance of two nonnegative measures on the same grid: cellwise L1
    /// of the densities plus atomwise |Δweight| over the union of locations
    /// (a missing atom counts as weight zero).
    pub fn tv_distance(&self, other: &GridMeasure) -> Result<f64, MeasureError> {
        if self.grid != other.grid {
            return Err(MeasureError::GridMismatch);
        }
        let dx = self.grid.dx();
        let mut sum = 0.0;
        for (a, b) in self.density.iter().zip(&other.density) {
            sum += (a - b).abs() * dx;
        }
        // Merge walk over the two sorted atom lists.
        let (mut i, mut j) = (0, 0);
        while i < self.atoms.len() || j < other.atoms.len() {
            if j >= other.atoms.len()
                || (i < self.atoms.len() && self.atoms[i].location < other.atoms[j].location)
            {
                sum += self.atoms[i].weight;
                i += 1;
            } else if i >= self.atoms.len() || other.atoms[j].location < self.atoms[i].location {
                sum += other.atoms[j].weight;
                j += 1;
            } else {
                sum += (self.atoms[i].weight - other.atoms[j].weight).abs();
                i += 1;
                j += 1;
            }
        }
        Ok(sum)
    }

    /// Measure of a half-open window intersected with the domain. Partially
    /// covered cells contribute proportionally; atoms follow the half-open
    /// convention of `kind`.
    pub fn window_mass(&self, a: f64, b: f64, kind: WindowKind) -> f64 {
        MassPrefix::new(self).window_mass(a, b, kind)
    }

    /// Rescale to total mass one.
    pub fn normalize(&self) -> Result<GridMeasure, MeasureError> {
        let mass = self.total_mass();
        if mass <= MASS_EPSILON {
            return Err(MeasureError::ZeroMass { mass });
        }
        let density = self.density.iter().map(|d| d / mass).collect();
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom { location: a.location, weight: a.weight / mass })
            .collect();
        Ok(GridMeasure { grid: self.grid, density, atoms })
    }

    /// Variance of the normalized measure. Clamped at zero: Jensen guarantees
    /// nonnegativity and only the last few ulps can stray below.
    pub fn variance(&self) -> Result<f64, MeasureError> {
        let mass = self.total_mass();
        if mass <= MASS_EPSILON {
            return Err(MeasureError::ZeroMass { mass });
        }
        let id = FunctionSamples::identity(self);
        let sq = FunctionSamples::from_fn(self, |x| x * x);
        let m1 = self.pair(&id).expect("identity samples share the grid") / mass;
        let m2 = self.pair(&sq).expect("square samples share the grid") / mass;
        Ok((m2 - m1 * m1).max(0.0))
    }

    /// First moment ⟨μ, Id⟩ (not normalized).
    pub fn first_moment(&self) -> f64 {
        let id = FunctionSamples::identity(self);
        self.pair(&id).expect("identity samples share the grid")
    }

    /// Cells with density above `threshold` and atoms with weight above it.
    pub fn support(&self, threshold: f64) -> SupportSet {
        SupportSet {
            cells: self
                .density
                .iter()
                .enumerate()
                .filter(|(_, d)| **d > threshold)
                .map(|(i, _)| i)
                .collect(),
            atoms: self
                .atoms
                .iter()
                .enumerate()
                .filter(|(_, a)| a.weight > threshold)
                .map(|(i, _)| i)
                .collect(),
        }
    }

    /// Split every cell into `factor` equal subcells (density repeats, atoms
    /// unchanged). Mass is preserved up to reassociation of the cell sum.
    pub fn refine(&self, factor: usize) -> GridMeasure {
        assert!(factor >= 1);
        let grid = Grid { lo: self.grid.lo, hi: self.grid.hi, n_cells: self.grid.n_cells * factor };
        let mut density = Vec::with_capacity(grid.n_cells);
        for &d in &self.density {
            for _ in 0..factor {
                density.push(d);
            }
        }
        GridMeasure { grid, density, atoms: self.atoms.clone() }
    }

    /// Pointwise scale by a nonnegative factor.
    pub fn scaled(&self, factor: f64) -> Result<GridMeasure, MeasureError> {
        if !factor.is_finite() || factor < 0.0 {
            return Err(MeasureError::BadValue { index: 0, value: factor });
        }
        let density = self.density.iter().map(|d| d * factor).collect();
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom { location: a.location, weight: a.weight * factor })
            .collect();
        Ok(GridMeasure { grid: self.grid, density, atoms })
    }
}

/// Half-open window conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    /// `[a, b)` — the default, matching predation windows written `[x, x+η)`.
    ClosedOpen,
    /// `(a, b]`.
    OpenClosed,
}

/// Support of a measure above a threshold, cells and atoms listed separately.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportSet {
    pub cells: Vec<usize>,
    pub atoms: Vec<usize>,
}

impl SupportSet {
    pub fn is_subset_of(&self, other: &SupportSet) -> bool {
        self.cells.iter().all(|c| other.cells.binary_search(c).is_ok())
            && self.atoms.iter().all(|a| other.atoms.binary_search(a).is_ok())
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty() && self.atoms.is_empty()
    }
}

/// Values of a test function at cell midpoints and at each atom of a specific
/// measure, in that measure's atom order.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSamples {
    grid: Grid,
    cell_values: Vec<f64>,
    atom_locations: Vec<f64>,
    atom_values: Vec<f64>,
}

impl FunctionSamples {
    pub fn new(
        grid: Grid,
        cell_values: Vec<f64>,
        atom_locations: Vec<f64>,
        atom_values: Vec<f64>,
    ) -> Result<Self, MeasureError> {
        if cell_values.len() != grid.n_cells || atom_locations.len() != atom_values.len() {
            return Err(MeasureError::GridMismatch);
        }
        for (i, v) in cell_values.iter().chain(atom_values.iter()).enumerate() {
            if !v.is_finite() {
                return Err(MeasureError::BadValue { index: i, value: *v });
            }
        }
        Ok(FunctionSamples { grid, cell_values, atom_locations, atom_values })
    }

    /// Sample `f` on the grid and atoms of `measure`.
    pub fn from_fn(measure: &GridMeasure, f: impl Fn(f64) -> f64) -> Self {
        let grid = measure.grid();
        let cell_values = (0..grid.n_cells).map(|i| f(grid.midpoint(i))).collect();
        let atom_locations = measure.atom_locations();
        let atom_values = atom_locations.iter().map(|x| f(*x)).collect();
        FunctionSamples { grid, cell_values, atom_locations, atom_values }
    }

    /// The identity function Id.
    pub fn identity(measure: &GridMeasure) -> Self {
        Self::from_fn(measure, |x| x)
    }

    /// The constant function 1.
    pub fn one(measure: &GridMeasure) -> Self {
        Self::from_fn(measure, |_| 1.0)
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn cell_values(&self) -> &[f64] {
        &self.cell_values
    }

    #[inline]
    pub fn atom_values(&self) -> &[f64] {
        &self.atom_values
    }

    #[inline]
    pub fn atom_locations(&self) -> &[f64] {
        &self.atom_locations
    }

    pub fn max_value(&self) -> f64 {
        self.cell_values
            .iter()
            .chain(self.atom_values.iter())
            .fold(f64::NEG_INFINITY, |m, v| m.max(*v))
    }

    pub fn sup_abs(&self) -> f64 {
        self.cell_values.iter().chain(self.atom_values.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Cumulative-mass view of a measure for O(1) window queries.
///
/// The prefix is the running sum of cell masses in grid order, so window
/// masses over a partition telescope back to the exact cell-sum of
/// `total_mass`. Built once per field evaluation by operators that take many
/// windows of the same measure.
pub struct MassPrefix<'a> {
    measure: &'a GridMeasure,
    /// prefix[i] = mass of the first i cells.
    prefix: Vec<f64>,
}

impl<'a> MassPrefix<'a> {
    pub fn new(measure: &'a GridMeasure) -> Self {
        let dx = measure.grid.dx();
        let mut prefix = Vec::with_capacity(measure.grid.n_cells + 1);
        let mut sum = 0.0;
        prefix.push(0.0);
        for &d in &measure.density {
            sum += d * dx;
            prefix.push(sum);
        }
        MassPrefix { measure, prefix }
    }

    /// Cumulative density mass of `[lo, x]`, clamped to the domain.
    fn cumulative(&self, x: f64) -> f64 {
        let grid = self.measure.grid;
        if x <= grid.lo {
            return 0.0;
        }
        if x >= grid.hi {
            return self.prefix[grid.n_cells];
        }
        let i = grid.cell_of(x);
        let offset = (x - grid.cell_left(i)).max(0.0);
        self.prefix[i] + self.measure.density[i] * offset
    }

    pub fn window_mass(&self, a: f64, b: f64, kind: WindowKind) -> f64 {
        if b <= a {
            // Degenerate or empty window.
            return 0.0;
        }
        self.cumulative(b) - self.cumulative(a) + self.atom_mass_in(a, b, kind)
    }

    /// Window mass with each cell's lump assigned to its midpoint, so a cell
    /// is counted entirely or not at all — the same membership rule atoms
    /// follow. This is the window form the interaction operators use: the
    /// evaluation point's own lump then sits wholly inside `[x, x+η)` and
    /// self-interaction is a pure loss, as it is for a point mass. (The
    /// proportional-coverage form instead splits the own lump across the
    /// boundary at `x`, feeding a concentrated state a net gain whenever the
    /// prey coefficient exceeds the predator one.)
    pub fn window_mass_midpoint(&self, a: f64, b: f64, kind: WindowKind) -> f64 {
        if b <= a {
            return 0.0;
        }
        let grid = self.measure.grid;
        let dx = grid.dx();
        // Smallest and largest cell index whose midpoint falls inside the
        // window: midpoint(j) = lo + (j + 1/2) dx.
        let (first, last) = match kind {
            WindowKind::ClosedOpen => {
                let first = ((a - grid.lo) / dx - 0.5).ceil();
                let last = ((b - grid.lo) / dx - 0.5).ceil() - 1.0;
                (first, last)
            }
            WindowKind::OpenClosed => {
                let first = ((a - grid.lo) / dx - 0.5).floor() + 1.0;
                let last = ((b - grid.lo) / dx - 0.5).floor();
                (first, last)
            }
        };
        let first = (first.max(0.0) as usize).min(grid.n_cells);
        let last_excl = ((last + 1.0).max(0.0) as usize).min(grid.n_cells);
        let mut mass = if first < last_excl {
            self.prefix[last_excl] - self.prefix[first]
        } else {
            0.0
        };
        mass += self.atom_mass_in(a, b, kind);
        mass
    }

    fn atom_mass_in(&self, a: f64, b: f64, kind: WindowKind) -> f64 {
        let mut mass = 0.0;
        for atom in &self.measure.atoms {
            if atom.location > b {
                break;
            }
            let inside = match kind {
                WindowKind::ClosedOpen => atom.location >= a && atom.location < b,
                WindowKind::OpenClosed => atom.location > a && atom.location <= b,
            };
            if inside {
                mass += atom.weight;
            }
        }
        mass
    }
}
