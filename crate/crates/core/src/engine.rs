//! Time integration of the selection dynamics.
//!
//! Three routes are provided. The exponential scheme freezes the growth field
//! over a step and applies the exact multiplicative factor `e^(dt Σ)`, which
//! mirrors the semigroup structure of the dynamics. The semi-implicit Euler
//! scheme treats growth explicitly and loss implicitly,
//! `d' = d (1 + dt Σ⁺) / (1 + dt Σ⁻)`, which preserves positivity with no
//! step restriction. The contraction solver iterates the fixed-point map
//! `ν ↦ μ₀ · exp(∫ Σ[ν])` on a window short enough that the map contracts,
//! with a trapezoid rule for the exponent.
//!
//! Both step forms map zero to zero exactly, so the support of the solution
//! never grows.

use crate::measure::{Atom, FunctionSamples, GridMeasure, MeasureError, MASS_EPSILON};
use crate::operators::{OperatorError, SelectionField, SelectionOperator};
use thiserror::Error;

/// Mass threshold above which a run is flagged as blown up.
pub const BLOWUP_MASS: f64 = 1e12;
/// Largest per-step exponent applied to a positive value.
pub const EXP_GUARD: f64 = 700.0;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("bad engine configuration: {0}")]
    BadConfig(String),
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("step exponent {value} exceeds the overflow guard")]
    ExponentOverflow { value: f64 },
    #[error("fixed-point solve needs a uniform field bound: declare one or set a truncation level")]
    MissingSupBound,
    #[error("no contraction window of at least one step exists (last tried {window})")]
    NoContraction { window: f64 },
    #[error("fixed-point iteration did not reach tolerance in {iterations} iterations (last distance {last_distance})")]
    MaxIter { iterations: usize, last_distance: f64 },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Exponential,
    SemiImplicit,
    Picard,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Truncation level `n`: the field is clipped at `min(Σ, n)` before each
    /// step when set.
    pub truncation: Option<f64>,
    /// Upper bound for a single fixed-point window.
    pub picard_window: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Snapshot every this many steps; `None` keeps at most ~2000 snapshots.
    pub snapshot_stride: Option<usize>,
}

impl EngineConfig {
    pub fn new(dt: f64, t_end: f64) -> Result<Self, EngineError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(EngineError::BadConfig(format!("dt must be positive, got {dt}")));
        }
        if !(t_end >= dt) || !t_end.is_finite() {
            return Err(EngineError::BadConfig(format!(
                "t_end must be at least one step, got {t_end} with dt {dt}"
            )));
        }
        Ok(EngineConfig {
            dt,
            t_end,
            scheme: Scheme::Exponential,
            truncation: None,
            picard_window: 1.0,
            picard_tol: 1e-10,
            picard_max_iter: 200,
            snapshot_stride: None,
        })
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_truncation(mut self, n: f64) -> Self {
        self.truncation = Some(n);
        self
    }

    pub fn with_snapshot_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = Some(stride.max(1));
        self
    }

    fn n_steps(&self) -> usize {
        ((self.t_end / self.dt).round() as usize).max(1)
    }

    fn effective_stride(&self, n_steps: usize) -> usize {
        self.snapshot_stride.unwrap_or_else(|| (n_steps / 2000).max(1))
    }
}

/// A named target measure whose TV distance to the state is recorded every
/// step.
#[derive(Debug, Clone)]
pub struct DistanceTracker {
    pub name: String,
    pub target: GridMeasure,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// The mass crossed [`BLOWUP_MASS`] or a step exponent crossed the
    /// overflow guard; expected for operators with unbounded growth.
    BlowUp { t: f64 },
}

/// Time series of the run: per-step scalar observables, strided snapshots.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub first_moment: Vec<f64>,
    /// Variance of the normalized measure; `NaN` while the mass is below the
    /// zero-mass guard.
    pub variance: Vec<f64>,
    pub distances: Vec<(String, Vec<f64>)>,
    pub snapshots: Vec<(f64, GridMeasure)>,
    pub status: RunStatus,
}

impl Trajectory {
    fn with_capacity(n: usize, trackers: &[DistanceTracker]) -> Self {
        Trajectory {
            times: Vec::with_capacity(n),
            mass: Vec::with_capacity(n),
            first_moment: Vec::with_capacity(n),
            variance: Vec::with_capacity(n),
            distances: trackers
                .iter()
                .map(|t| (t.name.clone(), Vec::with_capacity(n)))
                .collect(),
            snapshots: Vec::new(),
            status: RunStatus::Completed,
        }
    }

    pub fn final_measure(&self) -> &GridMeasure {
        &self.snapshots.last().expect("a trajectory always has its final snapshot").1
    }

    pub fn final_mass(&self) -> f64 {
        *self.mass.last().expect("a trajectory always has at least its initial sample")
    }

    pub fn distance_series(&self, name: &str) -> Option<&[f64]> {
        self.distances.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

/// One frozen-coefficient exponential step `μ' = μ · e^(dt Σ)`, cellwise and
/// atomwise. Zero values stay exactly zero; positive values with a step
/// exponent above [`EXP_GUARD`] report overflow.
pub fn step_exponential(
    mu: &GridMeasure,
    field: &SelectionField,
    dt: f64,
) -> Result<GridMeasure, EngineError> {
    let cells = field.samples.cell_values();
    let mut density = Vec::with_capacity(mu.density().len());
    for (d, f) in mu.density().iter().zip(cells) {
        let e = dt * f;
        if *d == 0.0 {
            density.push(0.0);
        } else if e > EXP_GUARD {
            return Err(EngineError::ExponentOverflow { value: e });
        } else {
            density.push(d * e.exp());
        }
    }
    let mut atoms = Vec::with_capacity(mu.atoms().len());
    for (a, f) in mu.atoms().iter().zip(field.samples.atom_values()) {
        let e = dt * f;
        if a.weight == 0.0 {
            atoms.push(*a);
        } else if e > EXP_GUARD {
            return Err(EngineError::ExponentOverflow { value: e });
        } else {
            atoms.push(Atom { location: a.location, weight: a.weight * e.exp() });
        }
    }
    Ok(GridMeasure::from_parts_unchecked(mu.grid(), density, atoms))
}

/// One semi-implicit Euler step: growth explicit, loss implicit,
/// `d' = d (1 + dt Σ⁺) / (1 + dt Σ⁻)`. Positivity holds for any step size.
pub fn step_semi_implicit(mu: &GridMeasure, field: &SelectionField, dt: f64) -> GridMeasure {
    let factor = |f: f64| (1.0 + dt * f.max(0.0)) / (1.0 + dt * (-f).max(0.0));
    let density = mu
        .density()
        .iter()
        .zip(field.samples.cell_values())
        .map(|(d, f)| d * factor(*f))
        .collect();
    let atoms = mu
        .atoms()
        .iter()
        .zip(field.samples.atom_values())
        .map(|(a, f)| Atom { location: a.location, weight: a.weight * factor(*f) })
        .collect();
    GridMeasure::from_parts_unchecked(mu.grid(), density, atoms)
}

/// Pointwise clip of the field at `n`, recorded in the metadata as the new
/// uniform bound.
pub fn truncate_field(field: &SelectionField, n: f64) -> SelectionField {
    let clipped = FunctionSamples::new(
        field.samples.grid(),
        field.samples.cell_values().iter().map(|v| v.min(n)).collect(),
        field.samples.atom_locations().to_vec(),
        field.samples.atom_values().iter().map(|v| v.min(n)).collect(),
    )
    .expect("clipping preserves shape and finiteness");
    let mut meta = field.meta;
    meta.sup_bound = Some(match meta.sup_bound {
        Some(existing) => existing.min(n),
        None => n,
    });
    SelectionField { samples: clipped, meta }
}

struct Observer {
    id: FunctionSamples,
    id_squared: FunctionSamples,
}

impl Observer {
    fn new(mu: &GridMeasure) -> Self {
        Observer {
            id: FunctionSamples::identity(mu),
            id_squared: FunctionSamples::from_fn(mu, |x| x * x),
        }
    }

    /// Records one sample; returns the mass.
    fn record(
        &self,
        traj: &mut Trajectory,
        t: f64,
        mu: &GridMeasure,
        trackers: &[DistanceTracker],
    ) -> Result<f64, EngineError> {
        let mass = mu.total_mass();
        if !mass.is_finite() {
            return Err(EngineError::NonFinite { t });
        }
        let fm = mu.pair(&self.id)?;
        let variance = if mass > MASS_EPSILON {
            let m2 = mu.pair(&self.id_squared)? / mass;
            let m1 = fm / mass;
            (m2 - m1 * m1).max(0.0)
        } else {
            f64::NAN
        };
        traj.times.push(t);
        traj.mass.push(mass);
        traj.first_moment.push(fm);
        traj.variance.push(variance);
        for (tracker, (_, series)) in trackers.iter().zip(traj.distances.iter_mut()) {
            series.push(mu.tv_distance(&tracker.target)?);
        }
        Ok(mass)
    }
}

/// Runs the dynamics from `mu0` under `op` to `cfg.t_end`.
///
/// Observables are recorded every step including the initial state; snapshots
/// are strided. A mass above [`BLOWUP_MASS`] or a step-exponent overflow ends
/// the run early with [`RunStatus::BlowUp`] rather than an error.
pub fn simulate(
    mu0: &GridMeasure,
    op: &dyn SelectionOperator,
    cfg: &EngineConfig,
    trackers: &[DistanceTracker],
) -> Result<Trajectory, EngineError> {
    if cfg.scheme == Scheme::Picard {
        return simulate_picard(mu0, op, cfg, trackers);
    }
    let n_steps = cfg.n_steps();
    let stride = cfg.effective_stride(n_steps);
    let observer = Observer::new(mu0);
    let mut traj = Trajectory::with_capacity(n_steps + 1, trackers);
    let mut mu = mu0.clone();

    for k in 0..=n_steps {
        let t = k as f64 * cfg.dt;
        let mass = observer.record(&mut traj, t, &mu, trackers)?;
        let last_recorded = k == n_steps;
        if mass > BLOWUP_MASS {
            traj.status = RunStatus::BlowUp { t };
        }
        if k.is_multiple_of(stride) || last_recorded || traj.status != RunStatus::Completed {
            traj.snapshots.push((t, mu.clone()));
        }
        if last_recorded || traj.status != RunStatus::Completed {
            break;
        }

        let mut field = op.evaluate(&mu)?;
        if let Some(n) = cfg.truncation {
            field = truncate_field(&field, n);
        }
        match cfg.scheme {
            Scheme::Exponential => match step_exponential(&mu, &field, cfg.dt) {
                Ok(next) => mu = next,
                Err(EngineError::ExponentOverflow { .. }) => {
                    traj.status = RunStatus::BlowUp { t };
                    if traj.snapshots.last().map(|(st, _)| *st) != Some(t) {
                        traj.snapshots.push((t, mu.clone()));
                    }
                    break;
                }
                Err(other) => return Err(other),
            },
            Scheme::SemiImplicit => mu = step_semi_implicit(&mu, &field, cfg.dt),
            Scheme::Picard => unreachable!("handled above"),
        }
    }
    Ok(traj)
}

/// Convergence record of one fixed-point window.
#[derive(Debug, Clone)]
pub struct PicardReport {
    /// Window length actually used after auto-shrinking.
    pub window: f64,
    /// A-priori contraction constant `k(2 m₀) · T · e^(nT) · m₀` of that
    /// window.
    pub contraction_bound: f64,
    /// Sup-over-time TV distances between successive iterates.
    pub iteration_distances: Vec<f64>,
    pub iterations: usize,
}

impl PicardReport {
    /// Ratios of successive iterate distances.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.iteration_distances.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

fn effective_sup_bound(
    op: &dyn SelectionOperator,
    truncation: Option<f64>,
) -> Result<f64, EngineError> {
    match (op.meta().sup_bound, truncation) {
        (Some(a), Some(b)) => Ok(a.min(b)),
        (Some(a), None) => Ok(a),
        (None, Some(b)) => Ok(b),
        (None, None) => Err(EngineError::MissingSupBound),
    }
}

/// Solves the dynamics on one short window `[0, T]` by iterating
/// `ν ↦ μ₀ · exp(∫ Σ[ν])` with a trapezoid rule for the exponent.
///
/// The window is halved until the a-priori contraction constant drops below
/// one half (and, for positive field bounds `n`, until `nT ≤ ln 2` so the
/// iterates stay inside the mass ball the constant assumes). Returns the
/// family of measures on the window's time grid plus the iteration record.
pub fn picard_solve(
    mu0: &GridMeasure,
    op: &dyn SelectionOperator,
    cfg: &EngineConfig,
) -> Result<(Vec<GridMeasure>, PicardReport), EngineError> {
    let n_bound = effective_sup_bound(op, cfg.truncation)?;
    let mass0 = mu0.total_mass();
    let k = op.meta().lipschitz_k(2.0 * mass0);

    let contraction = |t: f64| k * t * (n_bound * t).exp() * mass0;
    let mut window = cfg.picard_window.min(cfg.t_end);
    let mut steps;
    loop {
        steps = (window / cfg.dt).floor() as usize;
        if steps < 1 {
            return Err(EngineError::NoContraction { window });
        }
        let t_eff = steps as f64 * cfg.dt;
        let ball_ok = n_bound <= 0.0 || n_bound * t_eff <= std::f64::consts::LN_2;
        if contraction(t_eff) < 0.5 && ball_ok {
            window = t_eff;
            break;
        }
        window /= 2.0;
    }

    let eval_effective = |mu: &GridMeasure| -> Result<SelectionField, EngineError> {
        let field = op.evaluate(mu)?;
        Ok(match cfg.truncation {
            Some(n) => truncate_field(&field, n),
            None => field,
        })
    };

    let n_cells = mu0.grid().n_cells;
    let n_atoms = mu0.atoms().len();
    let mut family: Vec<GridMeasure> = vec![mu0.clone(); steps + 1];
    let mut report = PicardReport {
        window,
        contraction_bound: contraction(window),
        iteration_distances: Vec::new(),
        iterations: 0,
    };

    for _ in 0..cfg.picard_max_iter {
        report.iterations += 1;
        // Fields along the current family, then cumulative trapezoid
        // exponents pointwise over cells and atoms.
        let fields: Vec<SelectionField> =
            family.iter().map(&eval_effective).collect::<Result<_, _>>()?;
        let mut next = Vec::with_capacity(steps + 1);
        let mut exp_cells = vec![0.0f64; n_cells];
        let mut exp_atoms = vec![0.0f64; n_atoms];
        next.push(mu0.clone());
        for j in 0..steps {
            let (fa, fb) = (&fields[j].samples, &fields[j + 1].samples);
            for (e, (va, vb)) in
                exp_cells.iter_mut().zip(fa.cell_values().iter().zip(fb.cell_values()))
            {
                *e += cfg.dt / 2.0 * (va + vb);
            }
            for (e, (va, vb)) in
                exp_atoms.iter_mut().zip(fa.atom_values().iter().zip(fb.atom_values()))
            {
                *e += cfg.dt / 2.0 * (va + vb);
            }
            let density = mu0
                .density()
                .iter()
                .zip(&exp_cells)
                .map(|(d, e)| if *d == 0.0 { 0.0 } else { d * e.exp() })
                .collect();
            let atoms = mu0
                .atoms()
                .iter()
                .zip(&exp_atoms)
                .map(|(a, e)| Atom { location: a.location, weight: a.weight * e.exp() })
                .collect();
            next.push(GridMeasure::from_parts_unchecked(mu0.grid(), density, atoms));
        }

        let mut distance = 0.0f64;
        for (old, new) in family.iter().zip(&next) {
            distance = distance.max(old.tv_distance(new)?);
        }
        report.iteration_distances.push(distance);
        family = next;
        if distance < cfg.picard_tol {
            return Ok((family, report));
        }
    }
    Err(EngineError::MaxIter {
        iterations: report.iterations,
        last_distance: *report.iteration_distances.last().unwrap_or(&f64::NAN),
    })
}

/// [`picard_solve`] packaged as a trajectory over its window.
pub fn picard_trajectory(
    mu0: &GridMeasure,
    op: &dyn SelectionOperator,
    cfg: &EngineConfig,
    trackers: &[DistanceTracker],
) -> Result<(Trajectory, PicardReport), EngineError> {
    let (family, report) = picard_solve(mu0, op, cfg)?;
    let observer = Observer::new(mu0);
    let stride = cfg.effective_stride(family.len() - 1);
    let mut traj = Trajectory::with_capacity(family.len(), trackers);
    for (j, mu) in family.iter().enumerate() {
        let t = j as f64 * cfg.dt;
        observer.record(&mut traj, t, mu, trackers)?;
        if j.is_multiple_of(stride) || j == family.len() - 1 {
            traj.snapshots.push((t, mu.clone()));
        }
    }
    Ok((traj, report))
}

/// Fixed-point integration chained over successive windows until `t_end`.
fn simulate_picard(
    mu0: &GridMeasure,
    op: &dyn SelectionOperator,
    cfg: &EngineConfig,
    trackers: &[DistanceTracker],
) -> Result<Trajectory, EngineError> {
    let n_steps = cfg.n_steps();
    let stride = cfg.effective_stride(n_steps);
    let observer = Observer::new(mu0);
    let mut traj = Trajectory::with_capacity(n_steps + 1, trackers);
    let mut current = mu0.clone();
    let mut step_offset = 0usize;

    while step_offset <= n_steps {
        let remaining = (n_steps - step_offset) as f64 * cfg.dt;
        let mut window_cfg = cfg.clone();
        window_cfg.t_end = remaining.max(cfg.dt);
        let record_only_first = step_offset == n_steps;

        if record_only_first {
            let t = step_offset as f64 * cfg.dt;
            observer.record(&mut traj, t, &current, trackers)?;
            traj.snapshots.push((t, current.clone()));
            break;
        }

        let (family, _report) = picard_solve(&current, op, &window_cfg)?;
        for (j, mu) in family.iter().enumerate().take(family.len() - 1) {
            let k = step_offset + j;
            let t = k as f64 * cfg.dt;
            let mass = observer.record(&mut traj, t, mu, trackers)?;
            if k.is_multiple_of(stride) {
                traj.snapshots.push((t, mu.clone()));
            }
            if mass > BLOWUP_MASS {
                traj.status = RunStatus::BlowUp { t };
                traj.snapshots.push((t, mu.clone()));
                return Ok(traj);
            }
        }
        step_offset += family.len() - 1;
        current = family.into_iter().last().expect("windows contain at least one step");
    }
    Ok(traj)
}
