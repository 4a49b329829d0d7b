//! Orbits along the epsilon and kappa limits (q = 1.5): uniform bounds in
//! epsilon, shrinking orbit-to-orbit distances in kappa.

use powerlaw_periodic::diagnostics::*;
use powerlaw_periodic::forcing::{ForcingMode, ForcingSpec, TimeProfile};
use powerlaw_periodic::periodic::SolverConfig;
use powerlaw_periodic::*;

fn template() -> ProblemTemplate {
    ProblemTemplate {
        dim: 2,
        side_length: 2.0 * std::f64::consts::PI,
        q: 1.5,
        forcing: ForcingSpec {
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
                ForcingMode { k: vec![1, 2], pol: 0, re: 0.0, im: 0.1, profile: TimeProfile::Constant },
            ],
        },
        integrator: IntegratorConfig::default(),
        solver: SolverConfig::default(),
        grid_factor: spectral::DEFAULT_GRID_FACTOR,
        embedding_budget: 200,
        seed: 1,
    }
}

fn main() -> Result<()> {
    let t = template();

    let axes = SweepAxes { n_max: vec![4], epsilon: vec![1e-1, 1e-2, 1e-3], kappa: vec![1e-6] };
    let (report, _) = cascade_sweep(&axes, &t)?;
    let levels: Vec<EpsilonLevel> = report
        .cells
        .iter()
        .filter_map(|c| c.norms.map(|norms| EpsilonLevel { epsilon: c.epsilon, norms }))
        .collect();
    println!("{:>8} {:>12} {:>16} {:>16}", "eps", "||Dv||_q", "eps^1/2||grad v||", "eps^5/11||Dv||");
    for l in &levels {
        println!("{:>8} {:>12.6} {:>16.6} {:>16.6}", l.epsilon, l.norms.dv_lq, l.norms.eps_half_grad_l2, l.norms.eps_p_dv);
    }
    let eps = epsilon_scaling_check(&levels, 1.25)?;
    println!("spread of ||Dv||_q: {:.4}; growth ratios {:?}", eps.spread[0], eps.max_consecutive_ratio);
    println!("Hoelder terms decrease: {}", eps.holder_terms_decrease);

    let mut t2 = t.clone();
    t2.integrator.store_states = true;
    let mut runs = Vec::new();
    for kappa in [1e-2, 1e-4, 1e-6] {
        let cell = build_cell(&t2, &CellKey { n_max: 4, epsilon: 1e-2, kappa })?;
        let orbit = periodic::find_periodic_orbit(&cell.problem, &cell.constants, &cell.solver)?;
        runs.push((*cell.problem.system.params(), orbit.trajectory));
    }
    let k = kappa_convergence_check(&runs)?;
    println!("kappa L2L2 distances {:?}, strictly decreasing: {}", k.distances, k.distances_decrease);
    Ok(())
}
