//! Periodic Stokes orbit under sinusoidal forcing, against the closed form
//! c(t) = a (nu sin wt - w cos wt) / (nu^2 + w^2).

use num_complex::Complex64;
use powerlaw_periodic::diagnostics::estimate_embedding_constants;
use powerlaw_periodic::forcing::{ForcingMode, ForcingSpec, TimeProfile};
use powerlaw_periodic::periodic::{find_periodic_orbit, PeriodicProblem, SolverConfig};
use powerlaw_periodic::*;

fn main() -> Result<()> {
    let domain = TorusDomain::new(2, 2.0 * std::f64::consts::PI, 2)?;
    let basis = Basis::new(domain);
    let (a, period) = (0.5, 1.0);
    let k = [1, 1];
    let spec = ForcingSpec {
        period,
        shutoff: None,
        modes: vec![ForcingMode {
            k: k.to_vec(),
            pol: 0,
            re: a,
            im: 0.0,
            profile: TimeProfile::Sinusoid { harmonic: 1, phase: 0.0 },
        }],
    };
    let system = GalerkinSystem::new(
        &basis,
        StressParams::new(2.0, 0.0)?,
        RegularizationParams::none(),
        ForcingSignal::new(&basis, &spec)?,
    )?;
    let problem = PeriodicProblem::new(system, IntegratorConfig::default());
    let consts = estimate_embedding_constants(&domain, 2.0, 200, 0)?;
    let solver = SolverConfig {
        tol: Some(1e-11),
        ..Default::default()
    };
    let orbit = find_periodic_orbit(&problem, &consts, &solver)?;

    let mode = DivFreeMode::new(&k, 0)?;
    let nu = 0.5 * mode.k_squared() as f64;
    let w = 2.0 * std::f64::consts::PI / period;
    let mut exact = SpectralField::zeros(&basis);
    exact.set_coefficient(&mode, Complex64::new(-a * w / (nu * nu + w * w), 0.0))?;
    println!(
        "converged {} via {:?} in {} map evaluations, residual {:.3e}",
        orbit.converged, orbit.method, orbit.iterations, orbit.residual
    );
    println!("||v(0) - v_exact(0)||_2 = {:.3e}", orbit.initial.sub(&exact).norm());
    println!("ball radius K = {:.4}, sup ||v|| = {:.4}", orbit.ball_radius_used, orbit.trajectory.max_l2());
    Ok(())
}
