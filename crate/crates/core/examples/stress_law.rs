//! The regularized power-law stress: values, monotonicity and homogeneity.

use powerlaw_periodic::constitutive::{evaluate_p_stress, evaluate_stress, monotonicity_gap};
use powerlaw_periodic::{RegularizationParams, StressParams, SymTensor};

fn main() -> powerlaw_periodic::Result<()> {
    let d1 = SymTensor::new([[0.3, 0.1, 0.0], [0.1, -0.3, 0.0], [0.0, 0.0, 0.0]])?;
    let d2 = SymTensor::new([[-0.2, 0.4, 0.0], [0.4, 0.2, 0.0], [0.0, 0.0, 0.0]])?;

    println!("{:>5} {:>7} {:>12} {:>14}", "q", "kappa", "|S(D1)|", "gap(D1, D2)");
    for q in [1.3, 1.5, 2.0, 2.5] {
        for kappa in [0.0, 1e-3, 1.0] {
            let p = StressParams::new(q, kappa)?;
            let s = evaluate_stress(&d1, &p)?;
            println!("{q:>5} {kappa:>7} {:>12.6} {:>14.6e}", s.norm(), monotonicity_gap(&d1, &d2, &p)?);
        }
    }

    // With kappa = 0 the law is homogeneous of degree q - 1.
    let p = StressParams::new(1.5, 0.0)?;
    let lambda = 3.0;
    let lhs = evaluate_stress(&d1.scaled(lambda), &p)?;
    let rhs = evaluate_stress(&d1, &p)?.scaled(lambda.powf(p.q() - 1.0));
    println!("homogeneity defect at lambda = {lambda}: {:e}", lhs.sub(&rhs).norm());

    let reg = RegularizationParams::new(1e-2)?;
    println!("eps |D|^(1/5) D has norm {:.6e}", evaluate_p_stress(&d1, &reg)?.norm());
    Ok(())
}
