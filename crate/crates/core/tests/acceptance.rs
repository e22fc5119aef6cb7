//! Acceptance suite: one test per release criterion, each printing a
//! pass/fail line with the measured numbers. Run with
//! `cargo test -p selection-core --test acceptance -- --nocapture`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use selection_core::diagnostics::{
    check_gronwall, check_stability, is_recurrent, successive_differences, StabilityParams, Status,
};
use selection_core::dsl::{self, DslOperator, EvalContext};
use selection_core::engine::{picard_solve, simulate, EngineConfig, RunStatus, Scheme};
use selection_core::measure::{Atom, Grid, GridMeasure};
use selection_core::operators::{
    check_hypotheses, Cannibalism, CompetitiveTriple, KernelCompetition, PreyPredator, Saturating,
    SelectionOperator, UniformCompetition,
};
use selection_core::oracle;
use selection_core::profiles::{Kernel, Profile};
use selection_core::scenario::{load_scenario, run_scenario, RunOutcome, Scenario};

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run_bundled(name: &str, out: &str) -> (Scenario, RunOutcome) {
    let scenario = load_scenario(&scenario_path(name)).expect("bundled scenario loads");
    let out_dir = std::env::temp_dir().join("selection_acceptance").join(out);
    let outcome = run_scenario(&scenario, &out_dir).expect("bundled scenario runs");
    (scenario, outcome)
}

/// Mass column of the last row of an emitted series file.
fn final_mass_from_csv(path: &Path) -> f64 {
    let text = std::fs::read_to_string(path).expect("series file exists");
    let last = text.lines().last().expect("series has rows");
    last.split(',').nth(1).expect("mass column").parse().expect("full-precision float")
}

fn report_line(criterion: &str, pass: bool, detail: &str) {
    println!("criterion {criterion}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion}: {detail}");
}

#[test]
fn criterion_1_cannibalism_concentrates_at_the_top_trait() {
    let started = Instant::now();
    let (_, outcome) = run_bundled("canni.cfg", "canni");
    let traj = &outcome.trajectory;

    let final_mass = traj.final_mass();
    let mass_ok = (final_mass - 15.0).abs() <= 0.15;

    // The emitted series file carries the same value in full precision.
    let csv_mass = final_mass_from_csv(
        &std::env::temp_dir().join("selection_acceptance/canni/mass.csv"),
    );
    let csv_ok = csv_mass == final_mass;

    let moment = traj.first_moment.last().unwrap() / final_mass;
    let moment_ok = moment >= 0.98;

    let var0 = traj.variance[0];
    let var_end = *traj.variance.last().unwrap();
    let var_ok = var_end <= var0 / 100.0;

    let elapsed = started.elapsed().as_secs_f64();
    let runtime_ok = elapsed <= 30.0;
    report_line(
        "1 (cannibalism limit)",
        mass_ok && csv_ok && moment_ok && var_ok && runtime_ok && !outcome.failed(),
        &format!(
            "mass(40) = {final_mass:.4} (want 15 ± 0.15), moment = {moment:.4}, \
             variance {var_end:.2e} vs initial/100 = {:.2e}, runtime {elapsed:.1}s",
            var0 / 100.0
        ),
    );
}

#[test]
fn criterion_2_closed_form_oracle_equivalence() {
    let started = Instant::now();
    let grid = Grid::new(0.0, 1.0, 1000).unwrap();
    let cases: Vec<(&str, Profile, GridMeasure)> = vec![
        (
            "plateau",
            Profile::plateau(1.0, 0.4, 0.6, 0.3, 0.0005).unwrap(),
            GridMeasure::from_fn(grid, |x| selection_core::profiles::beta_pdf(2, 6, x) + 0.1)
                .unwrap(),
        ),
        (
            "constant",
            Profile::Constant(1.0),
            GridMeasure::from_fn(grid, |_| 0.5).unwrap(),
        ),
    ];

    let t_end = 20.0;
    let dt = 1e-3;
    let mut all_ok = true;
    let mut detail = String::new();
    for (label, profile, mu0) in cases {
        let op = UniformCompetition::new(profile);

        // Max relative mass error against the closed form, engine-grid
        // quadrature (the closed form solves the same spatial system, so the
        // remaining error is pure time discretization).
        let mass_err = |step: f64| -> f64 {
            let cfg = EngineConfig::new(step, t_end).unwrap().with_snapshot_stride(2000);
            let traj = simulate(&mu0, &op, &cfg, &[]).unwrap();
            let mut worst = 0.0f64;
            for (t, m) in traj.times.iter().zip(&traj.mass) {
                let exact = oracle::uniform_competition_mass(&mu0, &profile, *t, 1).unwrap();
                worst = worst.max((m - exact).abs() / exact);
            }
            worst
        };
        let err_full = mass_err(dt);
        let err_half = mass_err(dt / 2.0);
        let ratio = err_full / err_half;
        let mass_ok = err_full <= 5.0 * dt && (1.7..=2.3).contains(&ratio);

        // Density match in TV at the snapshot times.
        let cfg = EngineConfig::new(dt, t_end).unwrap().with_snapshot_stride(2000);
        let traj = simulate(&mu0, &op, &cfg, &[]).unwrap();
        let mut worst_tv = 0.0f64;
        for (t, snap) in &traj.snapshots {
            let exact = oracle::uniform_competition_density(&mu0, &profile, *t).unwrap();
            let tv = snap.tv_distance(&exact).unwrap() / exact.total_mass();
            worst_tv = worst_tv.max(tv);
        }
        let density_ok = worst_tv <= 5.0 * dt;

        all_ok &= mass_ok && density_ok;
        detail.push_str(&format!(
            "[{label}: err {err_full:.2e} (≤ {:.0e}), halving ratio {ratio:.2}, density TV {worst_tv:.2e}] ",
            5.0 * dt
        ));
    }
    let elapsed = started.elapsed().as_secs_f64();
    detail.push_str(&format!("runtime {elapsed:.1}s"));
    report_line("2 (closed-form oracle equivalence)", all_ok && elapsed <= 60.0, &detail);
}

#[test]
fn criterion_3_plateau_tv_decay_rate() {
    let started = Instant::now();
    let (_, outcome) = run_bundled("plateau.cfg", "plateau");
    let traj = &outcome.trajectory;
    let series = traj.distance_series("plateau_limit").expect("tracked series");
    let fit = selection_core::diagnostics::fit_decay_rate(
        &traj.times,
        series,
        (30.0, 60.0),
        selection_core::diagnostics::DecayModel::SemiLog,
    )
    .unwrap();
    let slope_ok = fit.slope <= -0.12;
    let elapsed = started.elapsed().as_secs_f64();
    report_line(
        "3 (plateau TV decay)",
        slope_ok && !outcome.failed() && elapsed <= 60.0,
        &format!("semilog slope {:.4} over [30, 60] (need ≤ -0.12), runtime {elapsed:.1}s", fit.slope),
    );
}

#[test]
fn criterion_4_kernel_steady_state_attraction() {
    let started = Instant::now();
    let (_, outcome) = run_bundled("kernel.cfg", "kernel");
    let traj = &outcome.trajectory;
    let series = traj.distance_series("kernel_jh").expect("tracked series");

    let at = |t: f64| -> f64 {
        let idx = traj
            .times
            .iter()
            .position(|s| (s - t).abs() < 1e-9)
            .unwrap_or(traj.times.len() - 1);
        series[idx]
    };
    let d200 = at(200.0);
    let d_end = *series.last().unwrap();
    let decrease_ok = d_end <= d200 / 10.0;

    let fit = selection_core::diagnostics::fit_decay_rate(
        &traj.times,
        series,
        (100.0, 2000.0),
        selection_core::diagnostics::DecayModel::LogLog,
    )
    .unwrap();
    let slope_ok = (-1.0..=-0.25).contains(&fit.slope);

    let elapsed = started.elapsed().as_secs_f64();
    report_line(
        "4 (kernel steady state)",
        decrease_ok && slope_ok && !outcome.failed() && elapsed <= 600.0,
        &format!(
            "distance {d200:.3e} at t=200 vs {d_end:.3e} at t=2000 ({}x), loglog slope {:.3} \
             (band [-1.0, -0.25]), runtime {elapsed:.0}s",
            d200 / d_end,
            fit.slope
        ),
    );
}

#[test]
fn criterion_5_prey_predator_damped_oscillation() {
    let started = Instant::now();
    let (_, outcome) = run_bundled("preypred.cfg", "preypred");
    let traj = &outcome.trajectory;

    let oscillation = outcome
        .reports
        .iter()
        .find(|r| r.name == "oscillation")
        .expect("oscillation diagnostic configured");
    let non_extinction = outcome
        .reports
        .iter()
        .find(|r| r.name == "non_extinction")
        .expect("non-extinction diagnostic configured");

    let n = traj.snapshots.len();
    let settle = traj.snapshots[n - 1].1.tv_distance(&traj.snapshots[n - 2].1).unwrap();
    let settled_ok = settle <= 1e-6;

    let elapsed = started.elapsed().as_secs_f64();
    report_line(
        "5 (prey/predator oscillation)",
        oscillation.status == Status::Pass
            && non_extinction.status == Status::Pass
            && settled_ok
            && elapsed <= 600.0,
        &format!(
            "{}; final successive-snapshot TV {settle:.2e} (≤ 1e-6); {}; runtime {elapsed:.0}s",
            oscillation.detail, non_extinction.detail
        ),
    );
}

#[test]
fn criterion_6_periodic_triple_recurs_without_converging() {
    let started = Instant::now();
    let (_, outcome) = run_bundled("triple.cfg", "triple");
    let traj = &outcome.trajectory;

    // The three species weights, sampled at the snapshot times (0.1 apart).
    let times: Vec<f64> = traj.snapshots.iter().map(|(t, _)| *t).collect();
    let states: Vec<Vec<f64>> = traj
        .snapshots
        .iter()
        .map(|(_, m)| m.atoms().iter().map(|a| a.weight).collect())
        .collect();

    let recurrent = is_recurrent(&times, &states, 1e-2, 5.0);

    let diffs = successive_differences(&states);
    let tail = &diffs[diffs.len() - diffs.len() / 5..];
    let still_moving = tail.iter().cloned().fold(0.0f64, f64::max) >= 1e-3;

    let elapsed = started.elapsed().as_secs_f64();
    report_line(
        "6 (periodic triple)",
        recurrent && still_moving && elapsed <= 5.0,
        &format!(
            "recurrent within 1e-2: {recurrent}, tail motion {:.2e} (≥ 1e-3), runtime {elapsed:.1}s",
            tail.iter().cloned().fold(0.0f64, f64::max)
        ),
    );
}

#[test]
fn criterion_7_saturating_growth_is_unbounded_but_tame() {
    let started = Instant::now();
    let (scenario, outcome) = run_bundled("saturating.cfg", "saturating");
    let traj = &outcome.trajectory;

    let strictly_increasing = traj.mass.windows(2).all(|w| w[1] > w[0]);
    let doubled = traj.final_mass() > 2.0 * traj.mass[0];
    let gronwall = check_gronwall(traj, 1.0, scenario.engine.dt);
    let completed = traj.status == RunStatus::Completed;

    let elapsed = started.elapsed().as_secs_f64();
    report_line(
        "7 (unbounded saturating growth)",
        strictly_increasing && doubled && gronwall.status == Status::Pass && completed
            && elapsed <= 5.0,
        &format!(
            "mass strictly increasing over {} steps, mass(500) = {:.2} (> 2), growth bound {:?}, \
             runtime {elapsed:.1}s",
            traj.mass.len() - 1,
            traj.final_mass(),
            gronwall.status
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: randomized structural invariants
// ---------------------------------------------------------------------------

struct RandomScenario {
    mu0: GridMeasure,
    op: Box<dyn SelectionOperator>,
    /// Truncation level above the level that can ever bind.
    safe_truncation: f64,
}

fn random_density(rng: &mut StdRng, grid: Grid, scale: f64) -> Vec<f64> {
    (0..grid.n_cells).map(|_| rng.gen_range(0.0..scale)).collect()
}

fn random_scenario(op_name: &str, rng: &mut StdRng, horizon: f64) -> RandomScenario {
    let (grid, op): (Grid, Box<dyn SelectionOperator>) = match op_name {
        "cannibalism" => {
            let grid = Grid::new(0.0, 1.0, 32).unwrap();
            let r = rng.gen_range(0.5..2.5);
            let alpha = rng.gen_range(0.3..1.0);
            (grid, Box::new(Cannibalism::new(r, alpha, 1.0).unwrap()))
        }
        "kernel" => {
            let h = rng.gen_range(2.0..4.0);
            let grid = Grid::new(-h, h, 48).unwrap();
            (grid, Box::new(KernelCompetition::new(Kernel::truncated(h).unwrap())))
        }
        "prey_predator" => {
            let grid = Grid::new(0.0, 1.0, 32).unwrap();
            let gain = rng.gen_range(0.1..1.0);
            let loss = rng.gen_range(0.1..1.0);
            let range = rng.gen_range(0.1..0.6);
            (grid, Box::new(PreyPredator::new(PreyPredator::default_profile(), gain, loss, range).unwrap()))
        }
        "uniform_competition" => {
            let grid = Grid::new(0.0, 1.0, 32).unwrap();
            let r_max = rng.gen_range(0.5..1.5);
            let s0 = rng.gen_range(0.1..0.5);
            let s1 = s0 + rng.gen_range(0.05..0.4);
            let gap = rng.gen_range(0.1..0.9) * r_max * 0.5;
            let ramp = if rng.gen_bool(0.5) { 0.0 } else { 0.01 };
            let profile = Profile::plateau(r_max, s0, s1, gap, ramp).unwrap();
            (grid, Box::new(UniformCompetition::new(profile)))
        }
        "saturating" => {
            let grid = Grid::new(0.0, 1.0, 32).unwrap();
            (grid, Box::new(Saturating))
        }
        "competitive_triple" => {
            let grid = Grid::new(0.0, 1.0, 8).unwrap();
            (grid, Box::new(CompetitiveTriple::new([0.0, 0.5, 1.0]).unwrap()))
        }
        other => panic!("unknown operator {other}"),
    };

    let mu0 = if op_name == "competitive_triple" {
        let atoms = vec![
            Atom { location: 0.0, weight: rng.gen_range(0.05..0.8) },
            Atom { location: 0.5, weight: rng.gen_range(0.05..0.8) },
            Atom { location: 1.0, weight: rng.gen_range(0.05..0.8) },
        ];
        GridMeasure::new(grid, vec![0.0; grid.n_cells], atoms).unwrap()
    } else {
        let scale = rng.gen_range(0.2..1.2);
        let mut density = random_density(rng, grid, scale);
        // Sparse support for some samples so support preservation is
        // exercised on nontrivial zero sets.
        if rng.gen_bool(0.3) {
            for (i, d) in density.iter_mut().enumerate() {
                if i % 3 == 0 {
                    *d = 0.0;
                }
            }
        }
        let mut atoms = Vec::new();
        if rng.gen_bool(0.4) {
            atoms.push(Atom { location: grid.hi, weight: rng.gen_range(0.0..0.4) });
        }
        GridMeasure::new(grid, density, atoms).unwrap()
    };

    // A truncation level the run can never reach: the field stays below
    // k(m) m + |Σ[0]| for masses up to the growth envelope.
    let mass0 = mu0.total_mass();
    let meta = op.meta();
    let mass_cap = match meta.fitness {
        Some(f) => mass0 * (f.max(0.0) * horizon).exp(),
        None => mass0 * (2.0f64 * horizon).exp(),
    };
    let sigma_zero = op.sigma_zero_sup(&mu0).unwrap();
    let safe_truncation = meta.lipschitz_k(mass_cap) * mass_cap + sigma_zero + 1.0;

    RandomScenario { mu0, op, safe_truncation }
}

const OPERATORS: [&str; 6] = [
    "cannibalism",
    "kernel",
    "prey_predator",
    "uniform_competition",
    "saturating",
    "competitive_triple",
];

#[test]
fn criterion_8_randomized_structural_invariants() {
    let started = Instant::now();
    let dt = 5e-3;
    let horizon = 0.5;
    let scenarios_per_op = 100;
    let mut checks_run = 0usize;

    for (op_idx, op_name) in OPERATORS.iter().enumerate() {
        let mut rng = StdRng::seed_from_u64(0xACC8 + op_idx as u64);

        // Hypothesis checks on a shared random sample set.
        let hypothesis_samples: Vec<GridMeasure> = {
            let scn = random_scenario(op_name, &mut rng, horizon);
            let grid = scn.mu0.grid();
            (0..60)
                .map(|i| {
                    let mut density = random_density(&mut rng, grid, 1.0);
                    if i % 2 == 0 {
                        density[grid.n_cells - 1] += rng.gen_range(0.0..0.5);
                    }
                    let atoms = if i % 3 == 0 && *op_name != "competitive_triple" {
                        vec![Atom { location: grid.hi, weight: rng.gen_range(0.0..0.5) }]
                    } else {
                        Vec::new()
                    };
                    GridMeasure::new(grid, density, atoms).unwrap()
                })
                .collect()
        };
        {
            let scn = random_scenario(op_name, &mut rng, horizon);
            let report = check_hypotheses(scn.op.as_ref(), &hypothesis_samples).unwrap();
            assert!(
                report.ok(),
                "{op_name}: declared estimate violated: lipschitz {:?}, fitness {:?}",
                report.lipschitz_violations.first(),
                report.fitness_violations.first()
            );
        }

        for case in 0..scenarios_per_op {
            let scn = random_scenario(op_name, &mut rng, horizon);
            if scn.mu0.total_mass() <= 1e-12 {
                continue;
            }
            let scheme = if case % 2 == 0 { Scheme::Exponential } else { Scheme::SemiImplicit };
            let cfg = EngineConfig::new(dt, horizon)
                .unwrap()
                .with_scheme(scheme)
                .with_snapshot_stride(1);
            let traj = simulate(&scn.mu0, scn.op.as_ref(), &cfg, &[]).unwrap();

            // Positivity and exact support preservation at every step.
            let support0 = scn.mu0.support(0.0);
            for (_, snap) in &traj.snapshots {
                assert!(
                    snap.density().iter().all(|d| *d >= 0.0)
                        && snap.atoms().iter().all(|a| a.weight >= 0.0),
                    "{op_name} case {case}: negativity"
                );
                assert!(
                    snap.support(0.0).is_subset_of(&support0),
                    "{op_name} case {case}: support grew"
                );
            }

            // Growth bound with the scheme tolerance (declared F only).
            if let Some(f_bound) = scn.op.meta().fitness {
                let report = check_gronwall(&traj, f_bound, dt);
                assert_eq!(
                    report.status,
                    Status::Pass,
                    "{op_name} case {case}: growth bound: {}",
                    report.detail
                );
            }

            // Stability bound against a perturbed initial condition.
            let perturbed = {
                let mut density = scn.mu0.density().to_vec();
                let bump = rng.gen_range(0..density.len());
                density[bump] += rng.gen_range(0.0..0.2);
                GridMeasure::new(scn.mu0.grid(), density, scn.mu0.atoms().to_vec()).unwrap()
            };
            let traj_b = simulate(&perturbed, scn.op.as_ref(), &cfg, &[]).unwrap();
            let params = StabilityParams {
                lipschitz: scn.op.meta().lipschitz_k(0.0),
                fitness: scn.op.meta().fitness,
                sigma_zero_sup: scn.op.sigma_zero_sup(&scn.mu0).unwrap(),
                dt,
            };
            let stability = check_stability(&traj, &traj_b, params).unwrap();
            assert_ne!(
                stability.status,
                Status::Fail,
                "{op_name} case {case}: stability: {}",
                stability.detail
            );

            // Truncation above the level the run can reach changes nothing.
            let cfg_trunc = cfg.clone().with_truncation(scn.safe_truncation);
            let truncated = simulate(&scn.mu0, scn.op.as_ref(), &cfg_trunc, &[]).unwrap();
            assert_eq!(traj.mass, truncated.mass, "{op_name} case {case}: truncation changed mass");
            let (_, last_plain) = traj.snapshots.last().unwrap();
            let (_, last_trunc) = truncated.snapshots.last().unwrap();
            assert_eq!(
                last_plain.density(),
                last_trunc.density(),
                "{op_name} case {case}: truncation changed the final density"
            );
            assert_eq!(last_plain.atoms(), last_trunc.atoms());

            // Fixed-point solve agrees with the exponential scheme and its
            // iterates contract at least as fast as the a-priori constant.
            if case % 4 == 0 {
                let mut cfg_picard = EngineConfig::new(dt, horizon).unwrap();
                cfg_picard.truncation = Some(scn.safe_truncation);
                cfg_picard.picard_tol = 1e-11;
                cfg_picard.picard_window = 0.25;
                let (family, report) = picard_solve(&scn.mu0, scn.op.as_ref(), &cfg_picard).unwrap();
                for (i, ratio) in report.contraction_ratios().iter().enumerate() {
                    if report.iteration_distances[i] > 1e-12 {
                        assert!(
                            *ratio <= report.contraction_bound * (1.0 + 1e-9),
                            "{op_name} case {case}: ratio {ratio} above bound {}",
                            report.contraction_bound
                        );
                    }
                }
                let gap = |fam: &[GridMeasure], step: f64| -> f64 {
                    let window = (fam.len() - 1) as f64 * step;
                    let cfg_ref = EngineConfig::new(step, window)
                        .unwrap()
                        .with_truncation(scn.safe_truncation)
                        .with_snapshot_stride(1);
                    let reference = simulate(&scn.mu0, scn.op.as_ref(), &cfg_ref, &[]).unwrap();
                    fam.iter()
                        .zip(reference.snapshots.iter())
                        .map(|(a, (_, b))| a.tv_distance(b).unwrap())
                        .fold(0.0f64, f64::max)
                };
                let g_full = gap(&family, dt);

                let mut cfg_half = cfg_picard.clone();
                cfg_half.dt = dt / 2.0;
                let (family_half, _) = picard_solve(&scn.mu0, scn.op.as_ref(), &cfg_half).unwrap();
                let g_half = gap(&family_half, dt / 2.0);
                assert!(
                    g_half <= 10.0 * cfg_picard.picard_tol + 0.75 * g_full + 1e-13,
                    "{op_name} case {case}: fixed-point gap did not shrink with dt \
                     ({g_full:.3e} -> {g_half:.3e})"
                );
                checks_run += 2;
            }
            checks_run += 5;
        }
    }

    let elapsed = started.elapsed().as_secs_f64();
    report_line(
        "8 (randomized structural invariants)",
        elapsed <= 300.0,
        &format!(
            "{} operators x {scenarios_per_op} scenarios, {checks_run} checks, runtime {elapsed:.0}s",
            OPERATORS.len()
        ),
    );
}

#[test]
fn criterion_9_expression_language_matches_builtins_bitwise() {
    let started = Instant::now();
    let grid = Grid::new(0.0, 1.0, 300).unwrap();
    let mut rng = StdRng::seed_from_u64(0xD51);

    let random_measure = |rng: &mut StdRng| -> GridMeasure {
        let density = (0..grid.n_cells).map(|_| rng.gen_range(0.0..2.0)).collect();
        let atoms = if rng.gen_bool(0.5) {
            vec![Atom { location: rng.gen_range(0.0..1.0), weight: rng.gen_range(0.0..1.0) }]
        } else {
            Vec::new()
        };
        GridMeasure::new(grid, density, atoms).unwrap()
    };

    let plateau = Profile::plateau(1.0, 0.4, 0.6, 0.3, 0.0005).unwrap();
    let mut ctx = EvalContext::default();
    ctx.set_profile("r", plateau);

    let pairs: Vec<(&str, Box<dyn SelectionOperator>)> = vec![
        (
            "3 + 0.8*x*mass(mu) - moment(mu, y)",
            Box::new(Cannibalism::new(3.0, 0.8, 1.0).unwrap()),
        ),
        ("r(x) - mass(mu)", Box::new(UniformCompetition::new(plateau))),
        (
            "a(x) + 0.8*window(mu, x-0.51, x) - 0.7*window(mu, x, x+0.51)",
            Box::new(PreyPredator::new(PreyPredator::default_profile(), 0.8, 0.7, 0.51).unwrap()),
        ),
    ];

    for (text, builtin) in &pairs {
        let expr = dsl::parse(text).unwrap();
        let dsl_op = DslOperator::new(expr, ctx.clone(), 0.0, 1.0).unwrap();
        for _ in 0..50 {
            let mu = random_measure(&mut rng);
            let via_dsl = dsl_op.evaluate(&mu).unwrap();
            let direct = builtin.evaluate(&mu).unwrap();
            assert_eq!(
                via_dsl.samples.cell_values(),
                direct.samples.cell_values(),
                "cell values differ for {text}"
            );
            assert_eq!(
                via_dsl.samples.atom_values(),
                direct.samples.atom_values(),
                "atom values differ for {text}"
            );
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    report_line(
        "9 (expression/built-in equivalence)",
        elapsed <= 10.0,
        &format!("3 operators x 50 random measures, bit-exact, runtime {elapsed:.1}s"),
    );
}
