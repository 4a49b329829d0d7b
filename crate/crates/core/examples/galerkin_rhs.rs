//! Assembling the Galerkin right-hand side and its energy bookkeeping.

use num_complex::Complex64;
use powerlaw_periodic::forcing::{ForcingMode, ForcingSpec, TimeProfile};
use powerlaw_periodic::*;

fn main() -> Result<()> {
    let domain = TorusDomain::new(2, 2.0 * std::f64::consts::PI, 4)?;
    let basis = Basis::new(domain);
    println!("{} divergence-free modes, {} real coordinates", basis.len(), basis.real_dim());

    let spec = ForcingSpec {
        period: 1.0,
        shutoff: None,
        modes: vec![ForcingMode {
            k: vec![1, 1],
            pol: 0,
            re: 0.2,
            im: 0.0,
            profile: TimeProfile::Constant,
        }],
    };
    let forcing = ForcingSignal::new(&basis, &spec)?;
    let system = GalerkinSystem::new(
        &basis,
        StressParams::new(1.5, 1e-4)?,
        RegularizationParams::new(1e-2)?,
        forcing,
    )?;

    let mut v = SpectralField::zeros(&basis);
    v.set_coefficient(&DivFreeMode::new(&[1, 0], 0)?, Complex64::new(0.3, 0.1))?;
    v.set_coefficient(&DivFreeMode::new(&[1, 2], 0)?, Complex64::new(-0.1, 0.2))?;
    v.set_coefficient(&DivFreeMode::new(&[2, -1], 0)?, Complex64::new(0.05, 0.0))?;

    let conv = system.convection_rhs(&v)?;
    let visc = system.viscous_rhs(&v)?;
    println!("<convection, v> = {:e}  (skew-symmetric)", conv.inner(&v));
    println!("<viscous, v>    = {:e}  (dissipative)", visc.inner(&v));

    let state = GalerkinState::new(0.0, v);
    let terms = system.energy_terms(&state)?;
    println!("{terms:#?}");
    let rhs = system.full_rhs(&state)?;
    println!("d/dt ||v||^2 = 2 <rhs, v> = {:.6e}", 2.0 * rhs.inner(&state.field));
    println!(
        "power balance: 2 (b, v) - 2 int S:D - 2 eps(...) = {:.6e}",
        2.0 * (terms.power_in - terms.stress_power - terms.dissipation_lap - terms.dissipation_p)
    );
    Ok(())
}
