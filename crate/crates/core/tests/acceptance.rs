//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::time::Instant;

use common::*;
use powerlaw_periodic::cli::artifacts::ORBIT;
use powerlaw_periodic::constitutive::{evaluate_stress, monotonicity_gap};
use powerlaw_periodic::diagnostics::*;
use powerlaw_periodic::integrator::{integrate, TrajectoryRecord};
use powerlaw_periodic::periodic::*;
use powerlaw_periodic::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RHS_REL_TOL: f64 = 1e-11;
const SKEW_TOL: f64 = 1e-11;
const LINEAR_ORBIT_TOL: f64 = 1e-7;
const FIXED_POINT_TOL: f64 = 1e-8;
const TIGHTEN_FACTOR: f64 = 0.1;
const RESIDUAL_GROWTH: f64 = 10.0;
const BALL_SLACK: f64 = 1e-8;
const SAMPLE_POINTS: usize = 512;
const R_SQUARED_MIN: f64 = 0.99;
const SURROGATE_TOL: f64 = 1e-6;
const EPSILON_UNIFORM: f64 = 1.25;
const MONOTONICITY_PAIRS: usize = 10_000;
const HOMOGENEITY_TOL: f64 = 1e-12;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// Runs that feed the energy criterion.
#[derive(Default)]
struct EnergyRuns {
    records: Vec<(String, TrajectoryRecord, EmbeddingConstants)>,
}

fn c1_rhs_oracle() -> Outcome {
    let basis = Basis::new(TorusDomain::new(2, TWO_PI, 1).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for q in [1.5, 2.0, 2.5] {
        let params = StressParams::new(q, 0.0).unwrap();
        let reg = RegularizationParams::new(1e-3).unwrap();
        let zero = ForcingSpec { period: 1.0, shutoff: None, modes: vec![] };
        let sys = GalerkinSystem::new(&basis, params, reg, ForcingSignal::new(&basis, &zero).unwrap()).unwrap();
        let oracle = DenseOracle::new(&basis, sys.transform().points_per_axis());
        for _ in 0..50 {
            let v = random_field(&basis, 1.0, &mut rng);
            let got = sys.full_rhs(&GalerkinState::new(0.0, v.clone())).unwrap().to_coords();
            let want = oracle.rhs(&v.to_coords(), &params, &reg, |_| [0.0, 0.0]);
            worst = worst.max(rel_err(&got, &want));
        }
    }
    outcome(
        worst <= RHS_REL_TOL,
        format!("150 states, q in {{1.5, 2, 2.5}}: max rel err {worst:.2e} (tol {RHS_REL_TOL:e})"),
    )
}

fn c2_skew_symmetry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for n in [4, 8] {
        let sys = system(n, 2.0, 0.0, 0.0, &ForcingSpec { period: 1.0, shutoff: None, modes: vec![] });
        for _ in 0..200 {
            let scale = 10f64.powf(rng.random_range(-2.0..2.0));
            let v = random_field(sys.basis(), scale, &mut rng);
            let c = sys.convection_rhs(&v).unwrap();
            worst = worst.max(c.inner(&v).abs() / (v.norm() * c.norm()));
        }
    }
    outcome(
        worst <= SKEW_TOL,
        format!("400 fields, n_max in {{4, 8}}: max |<B(v), v>| / (|v| |B(v)|) = {worst:.2e}"),
    )
}

fn c3_linear_orbit(runs: &mut EnergyRuns) -> Outcome {
    let (a, period) = (0.5, 1.0);
    let problem = linear_problem(a, period);
    let consts = estimate_embedding_constants(problem.basis().domain(), 2.0, 200, 0).unwrap();
    let solver = SolverConfig { tol: Some(1e-11), ..Default::default() };
    let orbit = find_periodic_orbit(&problem, &consts, &solver).unwrap();
    let err = orbit.initial.sub(&linear_exact_initial(problem.basis(), a, period)).norm();
    let passed = orbit.converged && err <= LINEAR_ORBIT_TOL;
    runs.records.push(("C3 orbit".into(), orbit.trajectory, consts));
    outcome(passed, format!("L2 error {err:.2e} (tol {LINEAR_ORBIT_TOL:e}), residual {:.2e}", orbit.residual))
}

fn c4_fixed_point(runs: &mut EnergyRuns) -> (Outcome, Option<(PeriodicProblem, EmbeddingConstants, f64)>) {
    let (problem, consts) = thickening_problem();
    let orbit = find_periodic_orbit(&problem, &consts, &SolverConfig::default()).unwrap();
    let k = orbit.ball_radius_used;
    let bound = FIXED_POINT_TOL * k.max(1.0);
    let tight = PeriodicProblem::new(problem.system.clone(), problem.integrator.tightened(TIGHTEN_FACTOR));
    let recheck = poincare_map(&tight, &orbit.initial).unwrap().sub(&orbit.initial).norm();
    let passed = orbit.converged && orbit.residual <= bound && recheck <= RESIDUAL_GROWTH * orbit.residual.max(f64::MIN_POSITIVE);
    let detail = format!(
        "{:?} in {} evaluations: residual {:.3e} <= {bound:.3e}; tolerances x{TIGHTEN_FACTOR}: {recheck:.3e} (growth {:.2})",
        orbit.method,
        orbit.iterations,
        orbit.residual,
        recheck / orbit.residual
    );
    runs.records.push(("C4 orbit".into(), orbit.trajectory, consts));
    (outcome(passed, detail), Some((problem, consts, k)))
}

fn c5_ball_invariance(case: &(PeriodicProblem, EmbeddingConstants, f64), runs: &mut EnergyRuns) -> Outcome {
    let (problem, consts, k) = case;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let starts: Vec<SpectralField> = (0..100).map(|_| random_ball_state(problem.basis(), *k, &mut rng)).collect();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for (i, v0) in starts.into_iter().enumerate() {
        match integrate(&problem.system, &GalerkinState::new(0.0, v0), problem.period(), &problem.integrator) {
            Ok((_, rec)) => {
                let steps = rec.steps.iter().map(|s| s.terms.kinetic.sqrt()).fold(0.0, f64::max);
                worst = worst.max(rec.max_l2().max(steps));
                runs.records.push((format!("C5 start {i}"), rec, *consts));
            }
            Err(_) => failures += 1,
        }
    }
    outcome(
        failures == 0 && worst <= k * (1.0 + BALL_SLACK),
        format!("100 starts in B_K: sup ||v|| = {worst:.6} vs K = {k:.6}; {failures} integration failures"),
    )
}

fn c6_energy(runs: &EnergyRuns) -> Outcome {
    let mut steps = 0;
    let mut step_violations = 0;
    let mut sample_violations = 0;
    let mut bad_sample_count = 0;
    let mut worst_step = f64::INFINITY;
    for (_, rec, consts) in &runs.records {
        if rec.samples.len() != SAMPLE_POINTS + 1 {
            bad_sample_count += 1;
        }
        let r = verify_energy_inequality(rec, consts);
        steps += r.steps_checked;
        step_violations += r.step_violations;
        sample_violations += r.sample_violations;
        worst_step = worst_step.min(r.worst_step_slack.unwrap_or(f64::INFINITY));
    }
    outcome(
        step_violations == 0 && sample_violations == 0 && bad_sample_count == 0 && steps > 0 && worst_step >= 0.0,
        format!(
            "{} runs, {steps} steps: {step_violations} step / {sample_violations} sample violations, min step slack {worst_step:.3e}",
            runs.records.len()
        ),
    )
}

fn extinction_forcing(period: f64) -> ForcingSpec {
    let plateau = TimeProfile::Plateau { ramp: 0.1 };
    ForcingSpec {
        period,
        shutoff: Some(0.5 * period),
        modes: vec![mode(&[1, 0], 0.1, 0.0, plateau), mode(&[1, 2], 0.0, 0.1, plateau)],
    }
}

fn c7_extinction() -> Outcome {
    let q = 1.5;
    let domain = TorusDomain::new(2, TWO_PI, 4).unwrap();
    let basis = Basis::new(domain);
    let params = StressParams::new(q, 1e-6).unwrap();
    let consts = estimate_embedding_constants(&domain, q, 200, 1).unwrap();
    let probe = ForcingSignal::new(&basis, &extinction_forcing(1.0)).unwrap();
    let k_bar = ball_radius(probe.max_l2(), &params, &consts, BallVariant::KBar);
    // T/2 must exceed the decay allowance K_bar^{2-q} / (alpha (2-q))
    let period = 2.2 * k_bar.powf(2.0 - q) / (consts.alpha * (2.0 - q));
    let sys = GalerkinSystem::new(
        &basis,
        params,
        RegularizationParams::new(1e-3).unwrap(),
        ForcingSignal::new(&basis, &extinction_forcing(period)).unwrap(),
    )
    .unwrap();
    let problem = PeriodicProblem::new(sys, IntegratorConfig::default());
    let r = match extinction_experiment(&problem, &consts, &SolverConfig::default(), 1e-10) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("experiment failed: {e}")),
    };
    let cfg = IntegratorConfig { rel_tol: 1e-12, abs_tol: 1e-16, ..Default::default() };
    let s = surrogate_extinction(k_bar, consts.alpha, q, &cfg).unwrap();
    let surrogate_err = (s.measured - s.exact).abs() / s.exact;
    outcome(
        r.within_bound && r.fit_r_squared >= R_SQUARED_MIN && surrogate_err <= SURROGATE_TOL,
        format!(
            "{:.4} <= t_meas {:.4} <= {:.4}; R^2 {:.6}; surrogate rel err {surrogate_err:.1e}",
            r.shutoff, r.measured, r.bound, r.fit_r_squared
        ),
    )
}

fn cascade_template() -> ProblemTemplate {
    ProblemTemplate {
        dim: 2,
        side_length: TWO_PI,
        q: 1.5,
        forcing: two_mode_forcing(2.0),
        integrator: IntegratorConfig::default(),
        solver: SolverConfig::default(),
        grid_factor: spectral::DEFAULT_GRID_FACTOR,
        embedding_budget: 200,
        seed: 1,
    }
}

fn c8_epsilon_scaling() -> Outcome {
    let axes = SweepAxes { n_max: vec![4], epsilon: vec![1e-1, 1e-2, 1e-3], kappa: vec![1e-6] };
    let (report, _) = cascade_sweep(&axes, &cascade_template()).unwrap();
    let converged = report.cells.iter().all(|c| c.converged);
    let levels: Vec<EpsilonLevel> = report
        .cells
        .iter()
        .filter_map(|c| c.norms.map(|norms| EpsilonLevel { epsilon: c.epsilon, norms }))
        .collect();
    let r = epsilon_scaling_check(&levels, EPSILON_UNIFORM).unwrap();
    outcome(
        converged && r.uniform && r.spread[0] <= EPSILON_UNIFORM && r.holder_terms_decrease,
        format!(
            "growth ratios as eps decreases {:.3?} (<= {EPSILON_UNIFORM}); spread {:.3?}; Hoelder terms decrease: {}",
            r.max_consecutive_ratio, r.spread, r.holder_terms_decrease
        ),
    )
}

fn c9_kappa_cascade() -> Outcome {
    let mut t = cascade_template();
    t.integrator.store_states = true;
    let mut runs = Vec::new();
    for kappa in [1e-2, 1e-4, 1e-6] {
        let cell = build_cell(&t, &CellKey { n_max: 4, epsilon: 1e-2, kappa }).unwrap();
        let orbit = find_periodic_orbit(&cell.problem, &cell.constants, &cell.solver).unwrap();
        if !orbit.converged {
            return outcome(false, format!("kappa = {kappa:e} did not converge"));
        }
        runs.push((*cell.problem.system.params(), orbit.trajectory));
    }
    let r = kappa_convergence_check(&runs).unwrap();
    outcome(r.distances_decrease, format!("L2L2 distances {:.4?}", r.distances))
}

fn random_sym(rng: &mut impl Rng) -> SymTensor {
    let scale = 10f64.powf(rng.random_range(-3.0..2.0));
    let mut e = [0.0; 6];
    e.iter_mut().for_each(|x| *x = scale * rng.random_range(-1.0..1.0));
    SymTensor::new([[e[0], e[1], e[2]], [e[1], e[3], e[4]], [e[2], e[4], e[5]]]).unwrap()
}

fn c10_stress_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut min_gap = f64::INFINITY;
    let mut worst_homog: f64 = 0.0;
    for q in [1.3, 1.5, 2.0, 2.5] {
        for kappa in [0.0, 1e-3, 1.0] {
            let p = StressParams::new(q, kappa).unwrap();
            for _ in 0..MONOTONICITY_PAIRS {
                let (a, b) = (random_sym(&mut rng), random_sym(&mut rng));
                min_gap = min_gap.min(monotonicity_gap(&a, &b, &p).unwrap());
            }
            if kappa == 0.0 {
                for _ in 0..1000 {
                    let d = random_sym(&mut rng);
                    let lambda = 10f64.powf(rng.random_range(-2.0..2.0));
                    let lhs = evaluate_stress(&d.scaled(lambda), &p).unwrap();
                    let rhs = evaluate_stress(&d, &p).unwrap().scaled(lambda.powf(q - 1.0));
                    worst_homog = worst_homog.max(lhs.sub(&rhs).norm() / rhs.norm());
                }
            }
        }
    }
    outcome(
        min_gap >= 0.0 && worst_homog <= HOMOGENEITY_TOL,
        format!("12 cells x {MONOTONICITY_PAIRS} pairs: min gap {min_gap:.3e}; homogeneity rel err {worst_homog:.2e}"),
    )
}

fn c11_determinism() -> Outcome {
    let cfg = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs/thickening_orbit.json");
    let tmp = tempfile::TempDir::new().unwrap();
    let mut bytes = Vec::new();
    for (dir, workers) in [("a", "1"), ("b", "4")] {
        let out = tmp.path().join(dir);
        let code = powerlaw_periodic::cli::run([
            "powerlaw-periodic".as_ref(),
            "solve-periodic".as_ref(),
            "--config".as_ref(),
            cfg.as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
            "--workers".as_ref(),
            std::ffi::OsStr::new(workers),
        ]);
        if code != 0 {
            return outcome(false, format!("solve-periodic exited with {code}"));
        }
        bytes.push(std::fs::read(out.join(ORBIT)).unwrap());
    }
    outcome(bytes[0] == bytes[1], format!("two runs (1 and 4 workers): {} bytes each, identical: {}", bytes[0].len(), bytes[0] == bytes[1]))
}

fn report(id: &str, name: &str, limit_s: f64, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let secs = start.elapsed().as_secs_f64();
    let passed = o.passed && secs <= limit_s;
    println!(
        "{} {id} {name}: {} [{secs:.1} s, limit {limit_s} s]",
        if passed { "PASS" } else { "FAIL" },
        o.detail
    );
    passed
}

fn main() {
    let mut all = true;
    let mut runs = EnergyRuns::default();
    all &= report("C1", "rhs oracle", 10.0, c1_rhs_oracle);
    all &= report("C2", "skew symmetry", 30.0, c2_skew_symmetry);
    all &= report("C3", "linear closed-form orbit", 10.0, || c3_linear_orbit(&mut runs));
    let mut case = None;
    all &= report("C4", "fixed-point quality", 300.0, || {
        let (o, c) = c4_fixed_point(&mut runs);
        case = c;
        o
    });
    all &= report("C5", "ball invariance", 600.0, || match &case {
        Some(c) => c5_ball_invariance(c, &mut runs),
        None => outcome(false, "no orbit from C4".into()),
    });
    all &= report("C6", "energy inequality", 60.0, || c6_energy(&runs));
    all &= report("C7", "extinction bound", 300.0, c7_extinction);
    all &= report("C8", "epsilon uniformity", 900.0, c8_epsilon_scaling);
    all &= report("C9", "kappa cascade", 900.0, c9_kappa_cascade);
    all &= report("C10", "stress law", 5.0, c10_stress_law);
    all &= report("C11", "determinism", 600.0, c11_determinism);
    if !all {
        std::process::exit(1);
    }
}
