//! Config-driven scenario execution.
//!
//! A scenario file is flat `key = value` text with one dotted section level
//! and `#` comments. It names the domain and grid, an initial condition, an
//! operator (built-in or expression), the engine settings, optional tracked
//! distance targets, the diagnostics to run and the output files to write.
//! Re-running a scenario writes byte-identical files: summation orders are
//! fixed and nothing is seeded by time or randomness.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::diagnostics::{
    self, check_gronwall, check_non_extinction, concentration_report, fit_decay_rate,
    oscillation_report, DecayModel, DiagnosticReport, DiagnosticsError, OscillationOptions,
    Status,
};
use crate::dsl::{self, DslError, DslOperator, EvalContext};
use crate::engine::{
    simulate, DistanceTracker, EngineConfig, EngineError, RunStatus, Scheme, Trajectory,
};
use crate::measure::{Atom, Grid, GridMeasure, MeasureError};
use crate::operators::{
    Cannibalism, CompetitiveTriple, KernelCompetition, OperatorError, PreyPredator, Saturating,
    SelectionOperator, UniformCompetition,
};
use crate::oracle::{self, OracleError};
use crate::profiles::{beta_pdf, check_beta_params, kernel_jh, Kernel, Profile, ProfileError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for '{key}': {message}")]
    Validation { key: String, message: String },
    #[error("operator expression: {source}")]
    Dsl {
        #[source]
        source: DslError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

fn validation(key: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation { key: key.to_string(), message: message.into() }
}

// ---------------------------------------------------------------------------
// Scenario model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct InitialCondition {
    /// Beta density composed with the affine map of the domain onto `[0,1]`
    /// (mass scales with the domain length unless rescaled).
    pub beta: Option<(u32, u32)>,
    /// Amplitude of the beta component; `1/(hi-lo)` makes it a probability
    /// density on the domain. Defaults to 1.
    pub beta_scale: f64,
    /// Constant density addend.
    pub constant: f64,
    /// Total mass spread uniformly over the domain.
    pub uniform_mass: f64,
    pub atoms: Vec<Atom>,
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition {
            beta: None,
            beta_scale: 1.0,
            constant: 0.0,
            uniform_mass: 0.0,
            atoms: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum OperatorConfig {
    CompetitiveTriple,
    Cannibalism { r: f64, alpha: f64, trait_max: f64 },
    Kernel { h: f64 },
    PreyPredator { gain: f64, loss: f64, range: f64 },
    UniformCompetition { profile: Profile },
    Saturating,
    Expression { text: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackTarget {
    /// TV distance to the truncated-kernel steady state `J_h`.
    KernelSteadyState,
    /// TV distance to the rescaled plateau restriction of the initial data.
    PlateauLimit,
    /// TV distance to the initial measure.
    Initial,
}

impl TrackTarget {
    pub fn series_name(self) -> &'static str {
        match self {
            TrackTarget::KernelSteadyState => "kernel_jh",
            TrackTarget::PlateauLimit => "plateau_limit",
            TrackTarget::Initial => "initial",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct OscillationConfig {
    pub options: OscillationOptions,
    pub min_extrema: Option<usize>,
    pub expect_damped: bool,
    pub expect_recurrent: bool,
}

#[derive(Debug, Clone)]
pub struct DecayFitConfig {
    /// `mass` or the name of a tracked distance series.
    pub series: String,
    pub model: DecayModel,
    pub window: (f64, f64),
    /// Pass only if the fitted slope is at most this.
    pub max_slope: Option<f64>,
    /// Pass only if the fitted slope is at least this.
    pub min_slope: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct DiagnosticsConfig {
    pub gronwall: bool,
    pub non_extinction: bool,
    pub concentration_target: Option<f64>,
    pub oscillation: Option<OscillationConfig>,
    pub decay_fit: Option<DecayFitConfig>,
}

#[derive(Debug, Clone)]
pub struct OutputPlan {
    pub series: Option<String>,
    pub series_stride: usize,
    pub final_snapshot: Option<String>,
    pub snapshots_at: Vec<f64>,
    pub report_json: Option<String>,
    pub report_text: Option<String>,
}

impl Default for OutputPlan {
    fn default() -> Self {
        OutputPlan {
            series: Some("series.csv".into()),
            series_stride: 1,
            final_snapshot: Some("final.csv".into()),
            snapshots_at: Vec::new(),
            report_json: Some("report.json".into()),
            report_text: Some("report.txt".into()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub grid: Grid,
    pub initial: InitialCondition,
    pub operator: OperatorConfig,
    pub engine: EngineConfig,
    pub tracks: Vec<TrackTarget>,
    pub diagnostics: DiagnosticsConfig,
    pub outputs: OutputPlan,
}

/// Command-line overrides applied on top of a loaded scenario.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub cells: Option<usize>,
    pub scheme: Option<Scheme>,
}

impl Scenario {
    pub fn apply_overrides(&mut self, ov: Overrides) -> Result<(), ScenarioError> {
        if let Some(dt) = ov.dt {
            if !(dt > 0.0) {
                return Err(validation("dt", "must be positive"));
            }
            self.engine.dt = dt;
        }
        if let Some(cells) = ov.cells {
            self.grid = Grid::new(self.grid.lo, self.grid.hi, cells)
                .map_err(|e| validation("cells", e.to_string()))?;
        }
        if let Some(scheme) = ov.scheme {
            self.engine.scheme = scheme;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Config text parsing
// ---------------------------------------------------------------------------

struct RawConfig {
    entries: HashMap<String, (String, usize)>,
    consumed: std::cell::RefCell<std::collections::HashSet<String>>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut entries = HashMap::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ScenarioError::Parse {
                line: line_no,
                message: "expected 'key = value'".into(),
            })?;
            let key = key.trim().to_string();
            if key.is_empty() || key.matches('.').count() > 1 {
                return Err(ScenarioError::Parse {
                    line: line_no,
                    message: format!("bad key '{key}' (one dotted level allowed)"),
                });
            }
            let value = value.trim().trim_matches('"').to_string();
            if entries.insert(key.clone(), (value, line_no)).is_some() {
                return Err(ScenarioError::Parse {
                    line: line_no,
                    message: format!("duplicate key '{key}'"),
                });
            }
        }
        Ok(RawConfig { entries, consumed: Default::default() })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.consumed.borrow_mut().insert(key.to_string());
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, ScenarioError> {
        self.get(key)
            .map(|v| v.parse::<f64>().map_err(|_| validation(key, format!("not a number: '{v}'"))))
            .transpose()
    }

    fn require_f64(&self, key: &str) -> Result<f64, ScenarioError> {
        self.f64(key)?.ok_or_else(|| validation(key, "missing required key"))
    }

    fn usize(&self, key: &str) -> Result<Option<usize>, ScenarioError> {
        self.get(key)
            .map(|v| {
                v.parse::<usize>().map_err(|_| validation(key, format!("not an integer: '{v}'")))
            })
            .transpose()
    }

    fn bool(&self, key: &str) -> Result<bool, ScenarioError> {
        match self.get(key) {
            None => Ok(false),
            Some(v) => match v {
                "true" | "on" | "yes" | "1" => Ok(true),
                "false" | "off" | "no" | "0" => Ok(false),
                other => Err(validation(key, format!("not a flag: '{other}'"))),
            },
        }
    }

    fn f64_list(&self, key: &str) -> Result<Vec<f64>, ScenarioError> {
        match self.get(key) {
            None => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|part| {
                    part.trim()
                        .parse::<f64>()
                        .map_err(|_| validation(key, format!("not a number: '{part}'")))
                })
                .collect(),
        }
    }

    fn unknown_keys(&self) -> Vec<String> {
        let consumed = self.consumed.borrow();
        let mut unknown: Vec<String> =
            self.entries.keys().filter(|k| !consumed.contains(*k)).cloned().collect();
        unknown.sort();
        unknown
    }
}

/// Parses scenario text. `fallback_name` is used when the file does not set
/// `name`, typically the file stem.
pub fn parse_scenario(text: &str, fallback_name: &str) -> Result<Scenario, ScenarioError> {
    let raw = RawConfig::parse(text)?;

    let name = raw.get("name").unwrap_or(fallback_name).to_string();
    let lo = raw.require_f64("domain.lo")?;
    let hi = raw.require_f64("domain.hi")?;
    let cells = raw
        .usize("grid.cells")?
        .ok_or_else(|| validation("grid.cells", "missing required key"))?;
    let grid = Grid::new(lo, hi, cells).map_err(|e| validation("domain", e.to_string()))?;

    let initial = parse_initial(&raw, grid)?;
    let operator = parse_operator(&raw)?;
    let engine = parse_engine(&raw)?;
    let tracks = parse_tracks(&raw)?;
    let diagnostics = parse_diagnostics(&raw)?;
    let outputs = parse_outputs(&raw)?;

    let unknown = raw.unknown_keys();
    if let Some(key) = unknown.first() {
        return Err(validation(key, "unknown key"));
    }

    let scenario = Scenario { name, grid, initial, operator, engine, tracks, diagnostics, outputs };
    validate_scenario(&scenario)?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path)?;
    let fallback = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    parse_scenario(&text, fallback)
}

fn parse_initial(raw: &RawConfig, grid: Grid) -> Result<InitialCondition, ScenarioError> {
    let beta = match raw.get("initial.beta") {
        None => None,
        Some(v) => {
            let parts: Vec<&str> = v.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(validation("initial.beta", "expected 'p,q'"));
            }
            let p = parts[0]
                .parse::<u32>()
                .map_err(|_| validation("initial.beta", "p must be a positive integer"))?;
            let q = parts[1]
                .parse::<u32>()
                .map_err(|_| validation("initial.beta", "q must be a positive integer"))?;
            check_beta_params(p, q).map_err(|e| validation("initial.beta", e.to_string()))?;
            Some((p, q))
        }
    };
    let beta_scale = raw.f64("initial.beta_scale")?.unwrap_or(1.0);
    let constant = raw.f64("initial.constant")?.unwrap_or(0.0);
    let uniform_mass = raw.f64("initial.uniform_mass")?.unwrap_or(0.0);
    let atoms = match raw.get("initial.atoms") {
        None => Vec::new(),
        Some(v) => v
            .split(',')
            .map(|pair| {
                let (loc, w) = pair
                    .split_once(':')
                    .ok_or_else(|| validation("initial.atoms", "expected 'location:weight'"))?;
                let location = loc
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| validation("initial.atoms", "bad location"))?;
                let weight =
                    w.trim().parse::<f64>().map_err(|_| validation("initial.atoms", "bad weight"))?;
                if location < grid.lo || location > grid.hi {
                    return Err(validation("initial.atoms", "atom outside the domain"));
                }
                Ok(Atom { location, weight })
            })
            .collect::<Result<_, _>>()?,
    };
    Ok(InitialCondition { beta, beta_scale, constant, uniform_mass, atoms })
}

fn parse_operator(raw: &RawConfig) -> Result<OperatorConfig, ScenarioError> {
    if let Some(text) = raw.get("operator.dsl") {
        // Surface expression syntax errors at load time.
        dsl::parse(text).map_err(|source| ScenarioError::Dsl { source })?;
        return Ok(OperatorConfig::Expression { text: text.to_string() });
    }
    let name = raw
        .get("operator.name")
        .ok_or_else(|| validation("operator", "missing operator.name or operator.dsl"))?;
    match name {
        "competitive_triple" => Ok(OperatorConfig::CompetitiveTriple),
        "cannibalism" => Ok(OperatorConfig::Cannibalism {
            r: raw.require_f64("operator.r")?,
            alpha: raw.require_f64("operator.alpha")?,
            trait_max: raw.require_f64("operator.A")?,
        }),
        "kernel" => Ok(OperatorConfig::Kernel { h: raw.require_f64("operator.h")? }),
        "prey_predator" => Ok(OperatorConfig::PreyPredator {
            gain: raw.require_f64("operator.A")?,
            loss: raw.require_f64("operator.B")?,
            range: raw.require_f64("operator.eta")?,
        }),
        "uniform_competition" => {
            let profile = match raw.get("operator.profile").unwrap_or("plateau") {
                "constant" => Profile::Constant(raw.f64("operator.r0")?.unwrap_or(1.0)),
                "plateau" => Profile::plateau(
                    raw.f64("operator.r_max")?.unwrap_or(1.0),
                    raw.f64("operator.s0")?.unwrap_or(0.4),
                    raw.f64("operator.s1")?.unwrap_or(0.6),
                    raw.f64("operator.gap")?.unwrap_or(0.3),
                    raw.f64("operator.ramp")?.unwrap_or(0.0005),
                )
                .map_err(|e| validation("operator.profile", e.to_string()))?,
                other => {
                    return Err(validation(
                        "operator.profile",
                        format!("unknown profile '{other}' (constant | plateau)"),
                    ))
                }
            };
            Ok(OperatorConfig::UniformCompetition { profile })
        }
        "saturating" => Ok(OperatorConfig::Saturating),
        other => Err(validation("operator.name", format!("unknown operator '{other}'"))),
    }
}

fn parse_engine(raw: &RawConfig) -> Result<EngineConfig, ScenarioError> {
    let dt = raw.require_f64("engine.dt")?;
    let t_end = raw.require_f64("engine.t_end")?;
    let mut cfg = EngineConfig::new(dt, t_end).map_err(|e| validation("engine", e.to_string()))?;
    if let Some(scheme) = raw.get("engine.scheme") {
        cfg.scheme = match scheme {
            "exponential" => Scheme::Exponential,
            "semi_implicit" => Scheme::SemiImplicit,
            "picard" => Scheme::Picard,
            other => {
                return Err(validation(
                    "engine.scheme",
                    format!("unknown scheme '{other}' (exponential | semi_implicit | picard)"),
                ))
            }
        };
    }
    if let Some(n) = raw.f64("engine.truncation")? {
        cfg.truncation = Some(n);
    }
    if let Some(stride) = raw.usize("engine.snapshot_stride")? {
        cfg.snapshot_stride = Some(stride.max(1));
    }
    if let Some(w) = raw.f64("engine.picard_window")? {
        cfg.picard_window = w;
    }
    if let Some(tol) = raw.f64("engine.picard_tol")? {
        cfg.picard_tol = tol;
    }
    if let Some(iters) = raw.usize("engine.picard_max_iter")? {
        cfg.picard_max_iter = iters;
    }
    Ok(cfg)
}

fn parse_tracks(raw: &RawConfig) -> Result<Vec<TrackTarget>, ScenarioError> {
    match raw.get("track.targets") {
        None => Ok(Vec::new()),
        Some(v) => v
            .split(',')
            .map(|part| match part.trim() {
                "kernel_jh" => Ok(TrackTarget::KernelSteadyState),
                "plateau_limit" => Ok(TrackTarget::PlateauLimit),
                "initial" => Ok(TrackTarget::Initial),
                other => Err(validation("track.targets", format!("unknown target '{other}'"))),
            })
            .collect(),
    }
}

fn parse_diagnostics(raw: &RawConfig) -> Result<DiagnosticsConfig, ScenarioError> {
    let mut cfg = DiagnosticsConfig {
        gronwall: raw.bool("gronwall.enabled")?,
        non_extinction: raw.bool("non_extinction.enabled")?,
        concentration_target: raw.f64("concentration.target")?,
        oscillation: None,
        decay_fit: None,
    };
    if raw.bool("oscillation.enabled")? {
        let mut osc = OscillationConfig::default();
        if let Some(eps) = raw.f64("oscillation.recurrence_eps")? {
            osc.options.recurrence_eps = eps;
        }
        if let Some(t) = raw.f64("oscillation.min_return_time")? {
            osc.options.min_return_time = t;
        }
        if let Some(p) = raw.f64("oscillation.prominence_rel")? {
            osc.options.prominence_rel = p;
        }
        osc.min_extrema = raw.usize("oscillation.min_extrema")?;
        osc.expect_damped = raw.bool("oscillation.expect_damped")?;
        osc.expect_recurrent = raw.bool("oscillation.expect_recurrent")?;
        cfg.oscillation = Some(osc);
    }
    if let Some(series) = raw.get("decay_fit.series") {
        let series = series.to_string();
        let model = match raw.get("decay_fit.model").unwrap_or("semilog") {
            "semilog" => DecayModel::SemiLog,
            "loglog" => DecayModel::LogLog,
            other => {
                return Err(validation(
                    "decay_fit.model",
                    format!("unknown model '{other}' (semilog | loglog)"),
                ))
            }
        };
        let window = raw.f64_list("decay_fit.window")?;
        if window.len() != 2 || window[0] >= window[1] {
            return Err(validation("decay_fit.window", "expected 't0,t1' with t0 < t1"));
        }
        cfg.decay_fit = Some(DecayFitConfig {
            series,
            model,
            window: (window[0], window[1]),
            max_slope: raw.f64("decay_fit.max_slope")?,
            min_slope: raw.f64("decay_fit.min_slope")?,
        });
    }
    Ok(cfg)
}

fn parse_outputs(raw: &RawConfig) -> Result<OutputPlan, ScenarioError> {
    let mut plan = OutputPlan::default();
    if let Some(v) = raw.get("output.series") {
        plan.series = (v != "off").then(|| v.to_string());
    }
    if let Some(stride) = raw.usize("output.series_stride")? {
        plan.series_stride = stride.max(1);
    }
    if let Some(v) = raw.get("output.final_snapshot") {
        plan.final_snapshot = (v != "off").then(|| v.to_string());
    }
    plan.snapshots_at = raw.f64_list("output.snapshots_at")?;
    if let Some(v) = raw.get("output.report_json") {
        plan.report_json = (v != "off").then(|| v.to_string());
    }
    if let Some(v) = raw.get("output.report_text") {
        plan.report_text = (v != "off").then(|| v.to_string());
    }
    Ok(plan)
}

fn validate_scenario(scenario: &Scenario) -> Result<(), ScenarioError> {
    match &scenario.operator {
        OperatorConfig::CompetitiveTriple => {
            if scenario.initial.atoms.len() != 3 {
                return Err(validation(
                    "initial.atoms",
                    "competitive_triple takes its traits from exactly three initial atoms",
                ));
            }
        }
        OperatorConfig::Cannibalism { trait_max, .. } => {
            if scenario.grid.lo != 0.0 || scenario.grid.hi != *trait_max {
                return Err(validation("operator.A", "cannibalism needs domain [0, A]"));
            }
        }
        OperatorConfig::Kernel { h } if scenario.grid.lo != -*h || scenario.grid.hi != *h => {
            return Err(validation("operator.h", "kernel competition needs domain [-h, h]"));
        }
        _ => {}
    }
    for target in &scenario.tracks {
        match target {
            TrackTarget::KernelSteadyState => {
                if !matches!(scenario.operator, OperatorConfig::Kernel { .. }) {
                    return Err(validation(
                        "track.targets",
                        "kernel_jh tracking needs the kernel operator",
                    ));
                }
            }
            TrackTarget::PlateauLimit => {
                if !matches!(
                    scenario.operator,
                    OperatorConfig::UniformCompetition { profile: Profile::Plateau { .. } }
                ) {
                    return Err(validation(
                        "track.targets",
                        "plateau_limit tracking needs uniform_competition with a plateau profile",
                    ));
                }
            }
            TrackTarget::Initial => {}
        }
    }
    let mu0 = build_initial(scenario)?;
    if !(mu0.total_mass() > 0.0) {
        return Err(validation("initial", "initial measure has no mass"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

/// Builds the initial measure of a scenario on its grid.
pub fn build_initial(scenario: &Scenario) -> Result<GridMeasure, ScenarioError> {
    let grid = scenario.grid;
    let init = &scenario.initial;
    let length = grid.hi - grid.lo;
    let uniform_density = init.uniform_mass / length;
    let density_at = |x: f64| {
        let mut v = init.constant + uniform_density;
        if let Some((p, q)) = init.beta {
            v += init.beta_scale * beta_pdf(p, q, (x - grid.lo) / length);
        }
        v
    };
    let density = (0..grid.n_cells).map(|i| density_at(grid.midpoint(i))).collect();
    Ok(GridMeasure::new(grid, density, init.atoms.clone())?)
}

/// Builds the scenario's operator.
pub fn build_operator(scenario: &Scenario) -> Result<Box<dyn SelectionOperator>, ScenarioError> {
    Ok(match &scenario.operator {
        OperatorConfig::CompetitiveTriple => {
            let locs: Vec<f64> = scenario.initial.atoms.iter().map(|a| a.location).collect();
            let traits: [f64; 3] = [locs[0], locs[1], locs[2]];
            Box::new(CompetitiveTriple::new(traits)?)
        }
        OperatorConfig::Cannibalism { r, alpha, trait_max } => {
            Box::new(Cannibalism::new(*r, *alpha, *trait_max)?)
        }
        OperatorConfig::Kernel { h } => {
            Box::new(KernelCompetition::new(Kernel::truncated(*h)?))
        }
        OperatorConfig::PreyPredator { gain, loss, range } => {
            Box::new(PreyPredator::new(PreyPredator::default_profile(), *gain, *loss, *range)?)
        }
        OperatorConfig::UniformCompetition { profile } => {
            Box::new(UniformCompetition::new(*profile))
        }
        OperatorConfig::Saturating => Box::new(Saturating),
        OperatorConfig::Expression { text } => {
            let expr = dsl::parse(text).map_err(|source| ScenarioError::Dsl { source })?;
            let op = DslOperator::new(expr, EvalContext::default(), scenario.grid.lo, scenario.grid.hi)
                .map_err(|source| ScenarioError::Dsl { source })?;
            Box::new(op)
        }
    })
}

fn build_trackers(
    scenario: &Scenario,
    mu0: &GridMeasure,
) -> Result<Vec<DistanceTracker>, ScenarioError> {
    let mut trackers = Vec::new();
    for target in &scenario.tracks {
        let measure = match target {
            TrackTarget::KernelSteadyState => {
                let h = match scenario.operator {
                    OperatorConfig::Kernel { h } => h,
                    _ => unreachable!("validated at load time"),
                };
                GridMeasure::from_fn(scenario.grid, |x| kernel_jh(h, x))?
            }
            TrackTarget::PlateauLimit => {
                let profile = match &scenario.operator {
                    OperatorConfig::UniformCompetition { profile } => profile,
                    _ => unreachable!("validated at load time"),
                };
                oracle::plateau_limit(mu0, profile)?
            }
            TrackTarget::Initial => mu0.clone(),
        };
        trackers.push(DistanceTracker { name: target.series_name().to_string(), target: measure });
    }
    Ok(trackers)
}

/// Mass of the initial measure on the set where the empty-population field is
/// positive (the persistence hypothesis).
fn growth_set_mass(
    mu0: &GridMeasure,
    op: &dyn SelectionOperator,
) -> Result<f64, ScenarioError> {
    let hollow = GridMeasure::new(
        mu0.grid(),
        vec![0.0; mu0.grid().n_cells],
        mu0.atoms().iter().map(|a| Atom { location: a.location, weight: 0.0 }).collect(),
    )?;
    let field = op.evaluate(&hollow)?;
    let dx = mu0.grid().dx();
    let mut mass = 0.0;
    for (d, f) in mu0.density().iter().zip(field.samples.cell_values()) {
        if *f > 0.0 {
            mass += d * dx;
        }
    }
    for (a, f) in mu0.atoms().iter().zip(field.samples.atom_values()) {
        if *f > 0.0 {
            mass += a.weight;
        }
    }
    Ok(mass)
}

// ---------------------------------------------------------------------------
// Running and reporting
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub reports: Vec<DiagnosticReport>,
    pub files: Vec<PathBuf>,
    pub blew_up: bool,
}

impl RunOutcome {
    /// True when any diagnostic failed (warnings do not fail a run).
    pub fn failed(&self) -> bool {
        self.reports.iter().any(|r| !r.passed())
    }
}

fn run_diagnostics(
    scenario: &Scenario,
    mu0: &GridMeasure,
    op: &dyn SelectionOperator,
    traj: &Trajectory,
) -> Result<Vec<DiagnosticReport>, ScenarioError> {
    let mut reports = Vec::new();
    let cfg = &scenario.diagnostics;
    if cfg.gronwall {
        match op.meta().fitness {
            Some(f_bound) => reports.push(check_gronwall(traj, f_bound, scenario.engine.dt)),
            None => reports.push(DiagnosticReport {
                name: "growth_bound".into(),
                status: Status::Warn,
                measured: None,
                bound: None,
                worst_index: None,
                detail: "skipped: no verified fitness bound for this operator".into(),
            }),
        }
    }
    if cfg.non_extinction {
        let gsm = growth_set_mass(mu0, op)?;
        reports.push(check_non_extinction(traj, gsm));
    }
    if let Some(target) = cfg.concentration_target {
        reports.push(concentration_report(traj, target)?.report);
    }
    if let Some(osc_cfg) = &cfg.oscillation {
        let report = oscillation_report(&traj.times, &traj.mass, osc_cfg.options)?;
        let mut ok = true;
        let mut notes = Vec::new();
        if let Some(min) = osc_cfg.min_extrema {
            if report.n_extrema < min {
                ok = false;
                notes.push(format!("expected at least {min} extrema"));
            }
        }
        if osc_cfg.expect_damped && !report.damped {
            ok = false;
            notes.push("expected damped oscillation".into());
        }
        if osc_cfg.expect_recurrent && !report.recurrent {
            ok = false;
            notes.push("expected a recurrent trajectory".into());
        }
        let summary = format!(
            "{} extrema, damped: {}, recurrent: {}{}{}",
            report.n_extrema,
            report.damped,
            report.recurrent,
            if notes.is_empty() { "" } else { "; " },
            notes.join("; ")
        );
        reports.push(DiagnosticReport {
            name: "oscillation".into(),
            status: if ok { Status::Pass } else { Status::Fail },
            measured: Some(report.n_extrema as f64),
            bound: osc_cfg.min_extrema.map(|m| m as f64),
            worst_index: None,
            detail: summary,
        });
    }
    if let Some(fit_cfg) = &cfg.decay_fit {
        let series: &[f64] = if fit_cfg.series == "mass" {
            &traj.mass
        } else {
            traj.distance_series(&fit_cfg.series).ok_or_else(|| {
                validation("decay_fit.series", format!("no tracked series '{}'", fit_cfg.series))
            })?
        };
        match fit_decay_rate(&traj.times, series, fit_cfg.window, fit_cfg.model) {
            Ok(fit) => {
                let mut ok = true;
                if let Some(max) = fit_cfg.max_slope {
                    ok &= fit.slope <= max;
                }
                if let Some(min) = fit_cfg.min_slope {
                    ok &= fit.slope >= min;
                }
                reports.push(DiagnosticReport {
                    name: format!("decay_fit[{}]", fit_cfg.series),
                    status: if ok { Status::Pass } else { Status::Fail },
                    measured: Some(fit.slope),
                    bound: fit_cfg.max_slope.or(fit_cfg.min_slope),
                    worst_index: None,
                    detail: format!(
                        "slope {:.4} ± {:.1e} over [{}, {}] ({} points)",
                        fit.slope, fit.stderr, fit_cfg.window.0, fit_cfg.window.1, fit.n_points
                    ),
                });
            }
            Err(err) => reports.push(DiagnosticReport {
                name: format!("decay_fit[{}]", fit_cfg.series),
                status: Status::Fail,
                measured: None,
                bound: None,
                worst_index: None,
                detail: format!("fit failed: {err}"),
            }),
        }
    }
    Ok(reports)
}

/// Full-precision float formatting: 17 significant digits round-trip exactly.
fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_series_csv(
    path: &Path,
    traj: &Trajectory,
    stride: usize,
) -> Result<(), ScenarioError> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    let mut header = String::from("t,mass,first_moment,variance");
    for (name, _) in &traj.distances {
        write!(header, ",dist_{name}").expect("string write");
    }
    writeln!(file, "{header}")?;
    let n = traj.times.len();
    for k in (0..n).step_by(stride.max(1)) {
        write_series_row(&mut file, traj, k)?;
    }
    if stride > 1 && !(n - 1).is_multiple_of(stride) {
        write_series_row(&mut file, traj, n - 1)?;
    }
    Ok(())
}

fn write_series_row(
    file: &mut impl std::io::Write,
    traj: &Trajectory,
    k: usize,
) -> Result<(), ScenarioError> {
    let mut row = format!(
        "{},{},{},{}",
        fmt_full(traj.times[k]),
        fmt_full(traj.mass[k]),
        fmt_full(traj.first_moment[k]),
        fmt_full(traj.variance[k])
    );
    for (_, series) in &traj.distances {
        write!(row, ",{}", fmt_full(series[k])).expect("string write");
    }
    writeln!(file, "{row}")?;
    Ok(())
}

fn write_snapshot_csv(path: &Path, measure: &GridMeasure) -> Result<(), ScenarioError> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(file, "x,density")?;
    let grid = measure.grid();
    for (i, d) in measure.density().iter().enumerate() {
        writeln!(file, "{},{}", fmt_full(grid.midpoint(i)), fmt_full(*d))?;
    }
    writeln!(file, "#atoms")?;
    writeln!(file, "location,weight")?;
    for atom in measure.atoms() {
        writeln!(file, "{},{}", fmt_full(atom.location), fmt_full(atom.weight))?;
    }
    Ok(())
}

fn nearest_snapshot(traj: &Trajectory, t: f64) -> &(f64, GridMeasure) {
    traj.snapshots
        .iter()
        .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
        .expect("trajectories always hold at least one snapshot")
}

/// Runs a scenario and writes its outputs into `out_dir` (created if absent).
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> Result<RunOutcome, ScenarioError> {
    fs::create_dir_all(out_dir)?;
    let mu0 = build_initial(scenario)?;
    let op = build_operator(scenario)?;
    let trackers = build_trackers(scenario, &mu0)?;

    let traj = simulate(&mu0, op.as_ref(), &scenario.engine, &trackers)?;
    let reports = run_diagnostics(scenario, &mu0, op.as_ref(), &traj)?;
    let blew_up = matches!(traj.status, RunStatus::BlowUp { .. });

    let mut files = Vec::new();
    let plan = &scenario.outputs;
    if let Some(name) = &plan.series {
        let path = out_dir.join(name);
        write_series_csv(&path, &traj, plan.series_stride)?;
        files.push(path);
    }
    if let Some(name) = &plan.final_snapshot {
        let path = out_dir.join(name);
        write_snapshot_csv(&path, traj.final_measure())?;
        files.push(path);
    }
    for t in &plan.snapshots_at {
        let (actual_t, measure) = nearest_snapshot(&traj, *t);
        let path = out_dir.join(format!("snapshot_t{t}.csv"));
        let _ = actual_t;
        write_snapshot_csv(&path, measure)?;
        files.push(path);
    }
    let status_line = match traj.status {
        RunStatus::Completed => format!("status: completed (t_end = {})", scenario.engine.t_end),
        RunStatus::BlowUp { t } => format!("status: blowup at t = {t}"),
    };
    if let Some(name) = &plan.report_text {
        let path = out_dir.join(name);
        let mut text = format!("scenario: {}\n{status_line}\n", scenario.name);
        text.push_str(&diagnostics::render_text(&reports));
        fs::write(&path, text)?;
        files.push(path);
    }
    if let Some(name) = &plan.report_json {
        let path = out_dir.join(name);
        fs::write(&path, diagnostics::render_json(&reports))?;
        files.push(path);
    }

    Ok(RunOutcome { trajectory: traj, reports, files, blew_up })
}

/// One-line description per built-in operator: name, parameter keys and the
/// declared estimate constants.
pub fn list_builtins() -> String {
    let lines = [
        "competitive_triple   params: none (traits = the three initial atoms)   k(r) = 2             F = 1",
        "cannibalism          params: r, alpha, A                               k(r) = (1+alpha)*A   F = r",
        "kernel               params: h                                         k(r) = 1/(2(1-e^-h)) F = sup a_h",
        "prey_predator        params: A, B, eta                                 k(r) = A+B           F: unverified",
        "uniform_competition  params: profile (constant: r0 | plateau: r_max, s0, s1, gap, ramp)   k(r) = 1   F = r_max",
        "saturating           params: none                                      k(r) = 1             F = 1",
    ];
    let mut out = String::new();
    for line in lines {
        out.push_str(line);
        out.push('\n');
    }
    out
}
