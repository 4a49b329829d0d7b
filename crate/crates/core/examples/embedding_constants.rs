//! Monte Carlo estimate of sup ||v||_2 / ||Dv||_q and the derived constants.

use powerlaw_periodic::diagnostics::estimate_embedding_constants;
use powerlaw_periodic::TorusDomain;

fn main() -> powerlaw_periodic::Result<()> {
    let domain = TorusDomain::new(2, 2.0 * std::f64::consts::PI, 4)?;
    for q in [1.5, 2.0, 2.5] {
        for budget in [100, 400, 1600] {
            let c = estimate_embedding_constants(&domain, q, budget, 0)?;
            println!(
                "q {q}  budget {budget:>5}  c_emb {:.6}  C_S {:.5}  alpha {:.5}  C2 {:.5}  c_kappa {:.5}",
                c.c_emb, c.c_s, c.alpha, c.c2, c.c2_kappa
            );
        }
    }
    Ok(())
}
