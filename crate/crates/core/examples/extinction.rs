//! Finite-time extinction after the forcing shuts off (q = 1.5).

use powerlaw_periodic::diagnostics::{estimate_embedding_constants, extinction_experiment, surrogate_extinction};
use powerlaw_periodic::forcing::{ForcingMode, ForcingSpec, TimeProfile};
use powerlaw_periodic::periodic::{ball_radius, BallVariant, PeriodicProblem, SolverConfig};
use powerlaw_periodic::*;

fn forcing(period: f64) -> ForcingSpec {
    let plateau = TimeProfile::Plateau { ramp: 0.1 };
    ForcingSpec {
        period,
        shutoff: Some(0.5 * period),
        modes: vec![
            ForcingMode { k: vec![1, 0], pol: 0, re: 0.1, im: 0.0, profile: plateau },
            ForcingMode { k: vec![1, 2], pol: 0, re: 0.0, im: 0.1, profile: plateau },
        ],
    }
}

fn main() -> Result<()> {
    let q = 1.5;
    let domain = TorusDomain::new(2, 2.0 * std::f64::consts::PI, 4)?;
    let basis = Basis::new(domain);
    let params = StressParams::new(q, 1e-6)?;
    let consts = estimate_embedding_constants(&domain, q, 200, 1)?;

    // Size T so that the bound t_bar + K_bar^{2-q} / (alpha (2-q)) fits, with t_bar = T/2.
    let probe = ForcingSignal::new(&basis, &forcing(1.0))?;
    let k_bar = ball_radius(probe.max_l2(), &params, &consts, BallVariant::KBar);
    let tail = k_bar.powf(2.0 - q) / (consts.alpha * (2.0 - q));
    let period = 2.2 * tail;
    println!("K_bar = {k_bar:.4}, alpha = {:.4}, decay allowance {tail:.4}, T = {period:.4}", consts.alpha);

    let system = GalerkinSystem::new(
        &basis,
        params,
        RegularizationParams::new(1e-3)?,
        ForcingSignal::new(&basis, &forcing(period))?,
    )?;
    let problem = PeriodicProblem::new(system, IntegratorConfig::default());
    let r = extinction_experiment(&problem, &consts, &SolverConfig::default(), 1e-10)?;
    println!("t_bar {:.4} <= t_meas {:.4} <= bound {:.4}: {}", r.shutoff, r.measured, r.bound, r.within_bound);
    println!(
        "||v||^(2-q) slope {:.4} (bound rate {:.4}), R^2 = {:.6} over [{:.3}, {:.3}]",
        r.fitted_slope, r.predicted_slope, r.fit_r_squared, r.fit_window[0], r.fit_window[1]
    );

    let cfg = IntegratorConfig { rel_tol: 1e-12, abs_tol: 1e-16, ..Default::default() };
    let s = surrogate_extinction(k_bar, consts.alpha, q, &cfg)?;
    println!("scalar surrogate: measured {:.12}, exact {:.12}", s.measured, s.exact);
    Ok(())
}
