mod common;

use common::*;
use powerlaw_periodic::constitutive::{evaluate_stress, monotonicity_gap};
use powerlaw_periodic::periodic::{ball_radius, BallVariant};
use powerlaw_periodic::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sym(e: [f64; 6]) -> SymTensor {
    SymTensor::new([[e[0], e[1], e[2]], [e[1], e[3], e[4]], [e[2], e[4], e[5]]]).unwrap()
}

fn no_forcing() -> ForcingSpec {
    ForcingSpec { period: 1.0, shutoff: None, modes: vec![] }
}

fn field_3d(n: usize, seed: u64, scale: f64) -> (GalerkinSystem, SpectralField) {
    let basis = Basis::new(TorusDomain::new(3, TWO_PI, n).unwrap());
    let sys = GalerkinSystem::new(
        &basis,
        StressParams::new(2.5, 0.0).unwrap(),
        RegularizationParams::none(),
        ForcingSignal::new(&basis, &no_forcing()).unwrap(),
    )
    .unwrap();
    let v = random_field(&basis, scale, &mut ChaCha8Rng::seed_from_u64(seed));
    (sys, v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn convection_is_energy_neutral(n in 1usize..6, seed in any::<u64>(), scale in 0.01f64..10.0) {
        let sys = system(n, 2.0, 0.0, 0.0, &no_forcing());
        let v = random_field(sys.basis(), scale, &mut ChaCha8Rng::seed_from_u64(seed));
        let c = sys.convection_rhs(&v).unwrap();
        prop_assert!(c.inner(&v).abs() <= 1e-11 * v.norm() * c.norm());
    }

    #[test]
    fn viscous_term_is_dissipative(
        n in 1usize..5, seed in any::<u64>(), q in 1.25f64..3.0, kappa in 0.0f64..1.0, eps in 0.0f64..0.5,
    ) {
        let sys = system(n, q, kappa.max(1e-9), eps, &no_forcing());
        let v = random_field(sys.basis(), 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
        let w = sys.viscous_rhs(&v).unwrap();
        prop_assert!(w.inner(&v) <= 0.0);
        // <viscous, v> equals minus the stress power and the regularizer dissipation
        let e = sys.energy_terms(&GalerkinState::new(0.0, v.clone())).unwrap();
        let want = -(e.stress_power + e.dissipation_lap + e.dissipation_p);
        prop_assert!((w.inner(&v) - want).abs() <= 1e-10 * want.abs().max(1e-300));
    }

    #[test]
    fn stress_is_monotone(
        a in prop::array::uniform6(-5.0f64..5.0), b in prop::array::uniform6(-5.0f64..5.0),
        q in 1.21f64..4.0, kappa in 0.0f64..2.0,
    ) {
        let p = StressParams::new(q, kappa).unwrap();
        prop_assert!(monotonicity_gap(&sym(a), &sym(b), &p).unwrap() >= 0.0);
    }

    #[test]
    fn stress_is_homogeneous_without_kappa(
        a in prop::array::uniform6(-5.0f64..5.0), q in 1.21f64..4.0, lambda in 0.01f64..100.0,
    ) {
        let p = StressParams::new(q, 0.0).unwrap();
        let d = sym(a);
        let lhs = evaluate_stress(&d.scaled(lambda), &p).unwrap();
        let rhs = evaluate_stress(&d, &p).unwrap().scaled(lambda.powf(q - 1.0));
        prop_assert!(lhs.sub(&rhs).norm() <= 1e-12 * rhs.norm().max(f64::MIN_POSITIVE));
    }

    #[test]
    fn coordinates_are_orthonormal(n in 1usize..6, seed in any::<u64>()) {
        let basis = Basis::new(TorusDomain::new(2, 3.7, n).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_field(&basis, 1.0, &mut rng);
        let v = random_field(&basis, 1.0, &mut rng);
        let dot: f64 = u.to_coords().iter().zip(v.to_coords()).map(|(a, b)| a * b).sum();
        prop_assert!((dot - u.inner(&v)).abs() <= 1e-12 * u.norm() * v.norm());
        let back = SpectralField::from_coords(&basis, &u.to_coords()).unwrap();
        prop_assert!(back.sub(&u).norm() <= 1e-15 * u.norm());
    }

    #[test]
    fn transform_round_trip_is_exact_on_the_basis(n in 1usize..6, seed in any::<u64>()) {
        let sys = system(n, 2.0, 0.0, 0.0, &no_forcing());
        let v = random_field(sys.basis(), 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
        let grid = sys.transform().synthesize(&v).unwrap();
        let back = sys.transform().analyze(&grid).unwrap();
        prop_assert!(back.sub(&v).norm() <= 1e-13 * v.norm());
        prop_assert!(back.max_spectral_divergence() <= 1e-15);
    }

    #[test]
    fn ball_radius_is_monotone(m1 in 0.0f64..10.0, dm in 0.0f64..10.0, q in 1.25f64..3.0, kappa in 0.0f64..0.99) {
        let dom = TorusDomain::new(2, TWO_PI, 2).unwrap();
        let c = EmbeddingConstants::from_embedding(&dom, q, 1.0, 100).unwrap();
        let p = StressParams::new(q, kappa).unwrap();
        let k1 = ball_radius(m1, &p, &c, BallVariant::K);
        let k2 = ball_radius(m1 + dm, &p, &c, BallVariant::K);
        prop_assert!(k1 <= k2);
        prop_assert!(k1 <= ball_radius(m1, &p, &c, BallVariant::KBar) * (1.0 + 1e-14));
    }
}

#[test]
fn convection_is_energy_neutral_in_three_dimensions() {
    for (n, seed) in [(1, 1), (2, 2), (3, 3)] {
        let (sys, v) = field_3d(n, seed, 1.0);
        let c = sys.convection_rhs(&v).unwrap();
        assert!(c.inner(&v).abs() <= 1e-11 * v.norm() * c.norm());
    }
}
