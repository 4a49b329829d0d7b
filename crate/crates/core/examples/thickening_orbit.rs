//! Shear-thickening (q = 2.5) orbit at n_max = 8: fixed point, invariant ball,
//! energy inequality and the contraction ratio of the period map.

use powerlaw_periodic::diagnostics::{estimate_embedding_constants, verify_energy_inequality};
use powerlaw_periodic::forcing::{ForcingMode, ForcingSpec, TimeProfile};
use powerlaw_periodic::periodic::*;
use powerlaw_periodic::*;
use rand::SeedableRng;

fn main() -> Result<()> {
    let domain = TorusDomain::new(2, 2.0 * std::f64::consts::PI, 8)?;
    let basis = Basis::new(domain);
    let spec = ForcingSpec {
        period: 2.0,
        shutoff: None,
        modes: vec![
            ForcingMode {
                k: vec![1, 0],
                pol: 0,
                re: 0.1,
                im: 0.0,
                profile: TimeProfile::Sinusoid { harmonic: 1, phase: 0.0 },
            },
            ForcingMode {
                k: vec![1, 2],
                pol: 0,
                re: 0.0,
                im: 0.1,
                profile: TimeProfile::Constant,
            },
        ],
    };
    let params = StressParams::new(2.5, 0.0)?;
    let system = GalerkinSystem::new(&basis, params, RegularizationParams::none(), ForcingSignal::new(&basis, &spec)?)?;
    let problem = PeriodicProblem::new(system, IntegratorConfig::default());
    let consts = estimate_embedding_constants(&domain, 2.5, 200, 1)?;
    println!("c_emb = {:.5}, C2 = {:.5}", consts.c_emb, consts.c2);

    let orbit = find_periodic_orbit(&problem, &consts, &SolverConfig::default())?;
    println!(
        "{:?}: residual {:.3e} (tol {:.3e}) after {} evaluations",
        orbit.method, orbit.residual, orbit.tolerance, orbit.iterations
    );
    let ball = ball_invariance_check(&orbit.trajectory, orbit.ball_radius_used);
    println!("sup ||v|| = {:.5} <= K = {:.5}: {}", ball.max_norm, orbit.ball_radius_used, ball.holds);
    let energy = verify_energy_inequality(&orbit.trajectory, &consts);
    println!(
        "energy inequality over {} steps: {} (worst step slack {:.3e})",
        energy.steps_checked,
        energy.holds,
        energy.worst_step_slack.unwrap_or(f64::NAN)
    );

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let v0 = random_ball_state(&basis, orbit.ball_radius_used, &mut rng);
    let z0 = random_ball_state(&basis, orbit.ball_radius_used, &mut rng);
    let c = contraction_ratio(&problem, &v0, &z0, &consts)?;
    println!("||F(v) - F(z)|| / ||v - z|| = {:.4e}, continuity bound {:.3e}", c.ratio, c.bound);
    Ok(())
}
