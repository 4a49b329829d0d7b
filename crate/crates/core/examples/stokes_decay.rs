//! Unforced Stokes flow (q = 2): every mode decays like exp(-|k|^2 t / 2).

use num_complex::Complex64;
use powerlaw_periodic::integrator::{advance, integrate};
use powerlaw_periodic::*;

fn main() -> Result<()> {
    let basis = Basis::new(TorusDomain::new(2, 2.0 * std::f64::consts::PI, 3)?);
    let system = GalerkinSystem::new(
        &basis,
        StressParams::new(2.0, 0.0)?,
        RegularizationParams::none(),
        ForcingSignal::zero(&basis, 1.0)?,
    )?;
    let mode = DivFreeMode::new(&[2, 1], 0)?;
    let c0 = Complex64::new(0.7, -0.2);
    let mut v0 = SpectralField::zeros(&basis);
    v0.set_coefficient(&mode, c0)?;
    let state0 = GalerkinState::new(0.0, v0);

    let nu = 0.5 * mode.k_squared() as f64;
    for scheme in [Scheme::ImexStiff, Scheme::ExplicitAdaptive] {
        let cfg = IntegratorConfig {
            scheme,
            samples: 8,
            ..Default::default()
        };
        let (end, record) = integrate(&system, &state0, 1.0, &cfg)?;
        let exact = c0 * (-nu).exp();
        let got = end.field.coefficient(&mode).unwrap();
        println!(
            "{scheme:?}: |c(1) - exact| = {:.3e} with {} accepted / {} rejected steps",
            (got - exact).norm(),
            record.accepted,
            record.rejected
        );
    }
    let half = advance(&system, &state0, 0.5, &IntegratorConfig::default())?;
    println!("||v(1/2)||^2 = {:.12}, exact {:.12}", half.field.norm_squared(), state0.field.norm_squared() * (-nu).exp());
    Ok(())
}
