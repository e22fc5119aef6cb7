//! Post-hoc verification of the quantitative estimates a run should satisfy:
//! growth bounds, stability in TV between nearby initial data, persistence,
//! decay-rate fits, oscillation structure and concentration.
//!
//! Checks are pure functions over recorded trajectories. A check fails only
//! when a declared bound is violated beyond the scheme tolerance; when a
//! hypothesis the check needs is undeclared, it reports a warning instead.

use crate::engine::Trajectory;
use crate::measure::MASS_EPSILON;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("no samples inside the fit window [{0}, {1}]")]
    EmptyWindow(f64, f64),
    #[error("fit values must be positive (index {index}: {value})")]
    NonPositive { index: usize, value: f64 },
    #[error("series too short: need at least {need} samples, got {got}")]
    SeriesTooShort { need: usize, got: usize },
    #[error("trajectories are not comparable: {0}")]
    Mismatch(String),
    #[error("measure has (near) zero mass")]
    ZeroMass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Warn,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticReport {
    pub name: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    /// Time index of the worst violation, when one exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_index: Option<usize>,
    pub detail: String,
}

impl DiagnosticReport {
    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }

    /// One-line rendering for the text report.
    pub fn render_line(&self) -> String {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Warn => "WARN",
        };
        let mut line = format!("[{tag}] {}: {}", self.name, self.detail);
        if let Some(m) = self.measured {
            line.push_str(&format!(" (measured {m:.6e}"));
            if let Some(b) = self.bound {
                line.push_str(&format!(", bound {b:.6e}"));
            }
            line.push(')');
        }
        line
    }
}

/// Text rendering of a report list, one line per check.
pub fn render_text(reports: &[DiagnosticReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&r.render_line());
        out.push('\n');
    }
    out
}

/// Machine-readable rendering of a report list.
pub fn render_json(reports: &[DiagnosticReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

/// Relative tolerance granted to a first-order scheme on the growth and
/// stability bounds.
fn scheme_slack(dt: f64, f_bound: f64) -> f64 {
    10.0 * dt * f_bound.abs()
}

/// Checks `mass(t) <= mass(0) e^(F t)` with the scheme tolerance.
pub fn check_gronwall(traj: &Trajectory, f_bound: f64, dt: f64) -> DiagnosticReport {
    let mass0 = traj.mass[0];
    let slack = 1.0 + scheme_slack(dt, f_bound);
    let mut worst_ratio = 0.0f64;
    let mut worst_index = None;
    let mut first_violation = None;
    for (k, (t, m)) in traj.times.iter().zip(&traj.mass).enumerate() {
        let envelope = mass0 * (f_bound * t).exp();
        let ratio = if envelope > 0.0 { m / envelope } else { f64::INFINITY };
        if ratio > worst_ratio {
            worst_ratio = ratio;
            worst_index = Some(k);
        }
        if *m > envelope * slack + 1e-14 * mass0.max(1.0) && first_violation.is_none() {
            first_violation = Some(k);
        }
    }
    match first_violation {
        None => DiagnosticReport {
            name: "growth_bound".into(),
            status: Status::Pass,
            measured: Some(worst_ratio),
            bound: Some(slack),
            worst_index,
            detail: format!("mass stays within e^({f_bound}t) of its start"),
        },
        Some(k) => DiagnosticReport {
            name: "growth_bound".into(),
            status: Status::Fail,
            measured: Some(worst_ratio),
            bound: Some(slack),
            worst_index: Some(k),
            detail: format!("mass exceeds the growth envelope first at t = {}", traj.times[k]),
        },
    }
}

/// Constants for the TV stability bound between two runs of one operator.
#[derive(Debug, Clone, Copy)]
pub struct StabilityParams {
    pub lipschitz: f64,
    /// Declared fitness rate; `None` downgrades the check to a warning.
    pub fitness: Option<f64>,
    /// Sup norm of the field on the empty population.
    pub sigma_zero_sup: f64,
    pub dt: f64,
}

/// Checks `tv(μ_t, ν_t) <= e^(L(T) t) tv(μ₀, ν₀)` on the common snapshot
/// times, with `L(T) = 2 ((m₁+m₂) e^(F T) k + ‖Σ[0]‖)`.
pub fn check_stability(
    a: &Trajectory,
    b: &Trajectory,
    params: StabilityParams,
) -> Result<DiagnosticReport, DiagnosticsError> {
    let fitness = match params.fitness {
        Some(f) => f,
        None => {
            return Ok(DiagnosticReport {
                name: "stability_bound".into(),
                status: Status::Warn,
                measured: None,
                bound: None,
                worst_index: None,
                detail: "fitness bound unverified; stability constant unavailable".into(),
            })
        }
    };
    if a.snapshots.len() != b.snapshots.len() {
        return Err(DiagnosticsError::Mismatch(format!(
            "snapshot counts differ ({} vs {})",
            a.snapshots.len(),
            b.snapshots.len()
        )));
    }
    let horizon = a.times.last().copied().unwrap_or(0.0);
    let total_mass0 = a.mass[0] + b.mass[0];
    let l_constant = 2.0
        * (total_mass0 * (fitness * horizon).exp() * params.lipschitz + params.sigma_zero_sup);
    let d0 = a.snapshots[0]
        .1
        .tv_distance(&b.snapshots[0].1)
        .map_err(|e| DiagnosticsError::Mismatch(e.to_string()))?;
    let slack = 1.0 + scheme_slack(params.dt, fitness);

    let mut worst_ratio = 0.0f64;
    let mut worst_index = None;
    let mut violation = None;
    for (k, ((ta, ma), (tb, mb))) in a.snapshots.iter().zip(&b.snapshots).enumerate() {
        if ta != tb {
            return Err(DiagnosticsError::Mismatch(format!(
                "snapshot times differ at index {k} ({ta} vs {tb})"
            )));
        }
        let d = ma.tv_distance(mb).map_err(|e| DiagnosticsError::Mismatch(e.to_string()))?;
        let bound = (l_constant * ta).exp() * d0 * slack + 1e-14 * total_mass0.max(1.0);
        let ratio = if bound > 0.0 { d / bound } else if d > 0.0 { f64::INFINITY } else { 0.0 };
        if ratio > worst_ratio {
            worst_ratio = ratio;
            worst_index = Some(k);
        }
        if d > bound && violation.is_none() {
            violation = Some(k);
        }
    }
    Ok(DiagnosticReport {
        name: "stability_bound".into(),
        status: if violation.is_none() { Status::Pass } else { Status::Fail },
        measured: Some(worst_ratio),
        bound: Some(l_constant),
        worst_index: violation.or(worst_index),
        detail: match violation {
            None => format!("TV gap stays within e^(L t) of the initial gap, L = {l_constant:.3}"),
            Some(k) => format!("TV gap exceeds the stability envelope first at t = {}", a.times[k]),
        },
    })
}

/// Persistence check: with initial mass on the set where the empty-population
/// field is positive, the recorded mass must stay away from zero.
pub fn check_non_extinction(traj: &Trajectory, growth_set_mass: f64) -> DiagnosticReport {
    if growth_set_mass <= 0.0 {
        return DiagnosticReport {
            name: "non_extinction".into(),
            status: Status::Warn,
            measured: Some(growth_set_mass),
            bound: None,
            worst_index: None,
            detail: "hypothesis not met: no initial mass where the empty-population field is positive"
                .into(),
        };
    }
    let mass0 = traj.mass[0];
    let floor = 1e-6 * mass0;
    let (min_index, min_mass) = traj
        .mass
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, m)| (i, *m))
        .expect("trajectories are never empty");
    let tail_start = traj.mass.len() - (traj.mass.len() / 10).max(1);
    let tail_min = traj.mass[tail_start..].iter().cloned().fold(f64::INFINITY, f64::min);
    let ok = min_mass > 0.0 && tail_min > floor;
    DiagnosticReport {
        name: "non_extinction".into(),
        status: if ok { Status::Pass } else { Status::Fail },
        measured: Some(tail_min),
        bound: Some(floor),
        worst_index: Some(min_index),
        detail: if ok {
            format!("mass stays positive (minimum {min_mass:.3e})")
        } else {
            "population decays toward extinction".into()
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayModel {
    /// Fit `log d` against `log t` (power-law exponent).
    LogLog,
    /// Fit `log d` against `t` (exponential rate).
    SemiLog,
}

#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    pub slope: f64,
    pub stderr: f64,
    pub n_points: usize,
}

/// Least-squares decay exponent of a positive series over a time window.
pub fn fit_decay_rate(
    times: &[f64],
    values: &[f64],
    window: (f64, f64),
    model: DecayModel,
) -> Result<DecayFit, DiagnosticsError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, (t, d)) in times.iter().zip(values).enumerate() {
        if *t < window.0 || *t > window.1 {
            continue;
        }
        if *d <= 0.0 || (model == DecayModel::LogLog && *t <= 0.0) {
            return Err(DiagnosticsError::NonPositive { index: i, value: *d });
        }
        xs.push(match model {
            DecayModel::LogLog => t.ln(),
            DecayModel::SemiLog => *t,
        });
        ys.push(d.ln());
    }
    let n = xs.len();
    if n < 2 {
        return Err(DiagnosticsError::EmptyWindow(window.0, window.1));
    }
    let xm = xs.iter().sum::<f64>() / n as f64;
    let ym = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let stderr = if n > 2 {
        let ss_res: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                let fitted = ym + slope * (x - xm);
                (y - fitted) * (y - fitted)
            })
            .sum();
        (ss_res / (n as f64 - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(DecayFit { slope, stderr, n_points: n })
}

#[derive(Debug, Clone, Copy)]
pub struct OscillationOptions {
    /// Extrema must rise above the noise: a turn is only registered after the
    /// series moves against the current direction by this fraction of the
    /// series range.
    pub prominence_rel: f64,
    /// State-return tolerance for the recurrence flag (max-norm).
    pub recurrence_eps: f64,
    /// Minimum time separation for a state return to count.
    pub min_return_time: f64,
}

impl Default for OscillationOptions {
    fn default() -> Self {
        OscillationOptions { prominence_rel: 1e-9, recurrence_eps: 1e-2, min_return_time: 5.0 }
    }
}

#[derive(Debug, Clone)]
pub struct OscillationReport {
    pub n_extrema: usize,
    /// Half peak-to-trough distances of consecutive extrema: the oscillation
    /// amplitude around its own running center, immune to mean drift.
    pub amplitudes: Vec<f64>,
    pub damped: bool,
    pub recurrent: bool,
}

/// Local extrema of `series` found by a hysteresis walk: a turn is recorded
/// only once the series retreats from the running extreme by more than
/// `prominence`, so sub-noise wiggles are ignored.
fn extrema_indices(series: &[f64], prominence: f64) -> Vec<usize> {
    let mut out = Vec::new();
    if series.len() < 3 {
        return out;
    }
    let mut max_idx = 0usize;
    let mut min_idx = 0usize;
    let mut rising: Option<bool> = None;
    for i in 1..series.len() {
        let v = series[i];
        if v > series[max_idx] {
            max_idx = i;
        }
        if v < series[min_idx] {
            min_idx = i;
        }
        match rising {
            None => {
                if v < series[max_idx] - prominence {
                    rising = Some(false);
                    min_idx = i;
                } else if v > series[min_idx] + prominence {
                    rising = Some(true);
                    max_idx = i;
                }
            }
            Some(true) => {
                if v < series[max_idx] - prominence {
                    out.push(max_idx);
                    rising = Some(false);
                    min_idx = i;
                }
            }
            Some(false) => {
                if v > series[min_idx] + prominence {
                    out.push(min_idx);
                    rising = Some(true);
                    max_idx = i;
                }
            }
        }
    }
    out
}

/// Whether some state returns within `eps` (max-norm) of an earlier state at
/// least `min_gap` later.
pub fn is_recurrent(times: &[f64], states: &[Vec<f64>], eps: f64, min_gap: f64) -> bool {
    for i in 0..states.len() {
        for j in (i + 1)..states.len() {
            if times[j] - times[i] < min_gap {
                continue;
            }
            let dist = states[i]
                .iter()
                .zip(&states[j])
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if dist <= eps {
                return true;
            }
        }
    }
    false
}

/// Max-norm distances between consecutive states.
pub fn successive_differences(states: &[Vec<f64>]) -> Vec<f64> {
    states
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
        .collect()
}

/// Counts oscillations of a scalar series, classifies damping from the tail
/// of the extremum amplitudes and checks scalar recurrence.
pub fn oscillation_report(
    times: &[f64],
    series: &[f64],
    opts: OscillationOptions,
) -> Result<OscillationReport, DiagnosticsError> {
    if series.len() < 3 {
        return Err(DiagnosticsError::SeriesTooShort { need: 3, got: series.len() });
    }
    let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let prominence = opts.prominence_rel * (hi - lo);
    let idx = extrema_indices(series, prominence);

    let amplitudes: Vec<f64> =
        idx.windows(2).map(|w| (series[w[0]] - series[w[1]]).abs() / 2.0).collect();

    // Damped: the last few amplitudes fall by a meaningful margin each time
    // (sampling jitter of extremum values must not count as decay).
    let tail = amplitudes.len().min(5);
    let damped = amplitudes.len() >= 2
        && amplitudes[amplitudes.len() - tail..]
            .windows(2)
            .all(|w| w[1] < w[0] * (1.0 - 1e-3));

    let states: Vec<Vec<f64>> = series.iter().map(|v| vec![*v]).collect();
    let recurrent = is_recurrent(times, &states, opts.recurrence_eps, opts.min_return_time);

    Ok(OscillationReport { n_extrema: idx.len(), amplitudes, damped, recurrent })
}

/// Concentration summary of a run: whether the normalized variance collapsed
/// and the normalized first moment reached the expected trait.
#[derive(Debug, Clone)]
pub struct ConcentrationReport {
    pub normalized_first_moment: Vec<f64>,
    pub variance: Vec<f64>,
    pub report: DiagnosticReport,
}

pub fn concentration_report(
    traj: &Trajectory,
    target_point: f64,
) -> Result<ConcentrationReport, DiagnosticsError> {
    let first = *traj.mass.first().ok_or(DiagnosticsError::SeriesTooShort { need: 1, got: 0 })?;
    let last = *traj.mass.last().unwrap();
    if first <= MASS_EPSILON || last <= MASS_EPSILON {
        return Err(DiagnosticsError::ZeroMass);
    }
    let normalized_first_moment: Vec<f64> =
        traj.first_moment.iter().zip(&traj.mass).map(|(fm, m)| fm / m).collect();
    let variance = traj.variance.clone();
    let var0 = variance[0];
    let var_end = *variance.last().unwrap();
    let moment_end = *normalized_first_moment.last().unwrap();

    let variance_collapsed = if var0 <= 1e-14 { var_end <= 1e-14 } else { var_end < var0 / 100.0 };
    let moment_on_target = (moment_end - target_point).abs() < 0.02;
    let status = if variance_collapsed && moment_on_target { Status::Pass } else { Status::Fail };
    let detail = if !variance_collapsed {
        format!("no concentration: variance {var_end:.3e} vs initial {var0:.3e}")
    } else if !moment_on_target {
        format!("concentrated away from the target trait (moment {moment_end:.4})")
    } else {
        format!("concentrates at trait {moment_end:.4} with variance {var_end:.3e}")
    };
    Ok(ConcentrationReport {
        normalized_first_moment,
        variance,
        report: DiagnosticReport {
            name: "concentration".into(),
            status,
            measured: Some(var_end),
            bound: Some(var0 / 100.0),
            worst_index: None,
            detail,
        },
    })
}
