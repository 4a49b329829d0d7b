//! Power-law extra stress `S = (kappa + |D|^2)^{(q-2)/2} D` (with `2 mu_0 = 1`)
//! and the `epsilon |D|^{1/5} D` regularizer. All norms are Frobenius.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent of the p-Laplacian regularizer. Not configurable.
pub const P_EXPONENT: f64 = 11.0 / 5.0;

/// Lower bound on the power-law index for existence of weak solutions.
pub const Q_MIN: f64 = 6.0 / 5.0;

/// Rheology parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressParams {
    q: f64,
    kappa: f64,
}

impl StressParams {
    /// `q > 6/5`, `kappa >= 0`.
    pub fn new(q: f64, kappa: f64) -> Result<Self> {
        if !(q.is_finite() && q > Q_MIN) {
            return Err(Error::InvalidParameter {
                name: "q",
                reason: format!("q = {q} violates q > 6/5"),
            });
        }
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "kappa",
                reason: format!("kappa = {kappa} violates kappa >= 0"),
            });
        }
        Ok(Self { q, kappa })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `mu_0`, fixed so that `2 mu_0 = 1`.
    pub fn mu0(&self) -> f64 {
        0.5
    }

    /// Hoelder conjugate `q' = q / (q - 1)`.
    pub fn dual_exponent(&self) -> f64 {
        self.q / (self.q - 1.0)
    }

    /// `q < 11/5` with `kappa = 0`: the Galerkin right-hand side is not Lipschitz.
    /// The linear law `q = 2` is exempt.
    pub fn is_degenerate(&self) -> bool {
        self.q < P_EXPONENT && self.q != 2.0 && self.kappa == 0.0
    }

    /// Scalar viscosity `(kappa + s2)^{(q-2)/2}` at `s2 = |D|^2`, with the
    /// continuous extension `S(0) = 0` folded in by the caller.
    #[inline]
    pub fn viscosity(&self, norm_sq: f64) -> f64 {
        let base = self.kappa + norm_sq;
        if self.q == 2.0 {
            1.0
        } else if base == 0.0 {
            // Only reached at D = 0 with kappa = 0; S = 0 there regardless.
            0.0
        } else {
            base.powf(0.5 * (self.q - 2.0))
        }
    }
}

/// Epsilon-regularization: `-eps Delta v - eps div(|Dv|^{1/5} Dv)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationParams {
    epsilon: f64,
}

impl RegularizationParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: format!("epsilon = {epsilon} violates epsilon >= 0"),
            });
        }
        Ok(Self { epsilon })
    }

    pub fn none() -> Self {
        Self { epsilon: 0.0 }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn p(&self) -> f64 {
        P_EXPONENT
    }

    /// Scalar factor `eps |D|^{1/5}` at `s2 = |D|^2`.
    #[inline]
    pub fn p_factor(&self, norm_sq: f64) -> f64 {
        if self.epsilon == 0.0 || norm_sq == 0.0 {
            0.0
        } else {
            self.epsilon * norm_sq.powf(0.5 * (P_EXPONENT - 2.0))
        }
    }
}

/// Symmetric `d x d` tensor sample (`d <= 3`, zero-padded).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymTensor(pub [[f64; 3]; 3]);

impl SymTensor {
    /// Builds from a full matrix; rejects asymmetric or non-finite input.
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        if m.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("tensor entries"));
        }
        for a in 0..3 {
            for b in 0..a {
                let scale = m[a][b].abs().max(m[b][a].abs()).max(1.0);
                if (m[a][b] - m[b][a]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParameter {
                        name: "D",
                        reason: "tensor is not symmetric".into(),
                    });
                }
            }
        }
        Ok(Self(m))
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `A : B`.
    pub fn contract(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.0;
        out.iter_mut().flatten().for_each(|x| *x *= factor);
        Self(out)
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.0;
        for (a, b) in out.iter_mut().flatten().zip(other.0.iter().flatten()) {
            *a -= b;
        }
        Self(out)
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    fn check_finite(&self) -> Result<()> {
        if self.0.iter().flatten().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("tensor entries"))
        }
    }
}

/// `S(D) = (kappa + |D|^2)^{(q-2)/2} D`, with `S(0) = 0`.
pub fn evaluate_stress(d: &SymTensor, params: &StressParams) -> Result<SymTensor> {
    d.check_finite()?;
    let s = d.scaled(params.viscosity(d.norm_sq()));
    s.check_finite()?;
    Ok(s)
}

/// `eps |D|^{1/5} D`.
pub fn evaluate_p_stress(d: &SymTensor, reg: &RegularizationParams) -> Result<SymTensor> {
    d.check_finite()?;
    Ok(d.scaled(reg.p_factor(d.norm_sq())))
}

/// Pointwise dissipation `S(D):D + eps |D|^{11/5}`.
pub fn dissipation_density(d: &SymTensor, params: &StressParams, reg: &RegularizationParams) -> Result<f64> {
    d.check_finite()?;
    let s2 = d.norm_sq();
    Ok(stress_power_density(s2, params) + reg.p_factor(s2) * s2)
}

/// `(kappa + s2)^{(q-2)/2} s2` with `s2 = |D|^2`.
#[inline]
pub fn stress_power_density(norm_sq: f64, params: &StressParams) -> f64 {
    params.viscosity(norm_sq) * norm_sq
}

/// `(S(D1) - S(D2)) : (D1 - D2)`; nonnegative for `q > 1`.
pub fn monotonicity_gap(d1: &SymTensor, d2: &SymTensor, params: &StressParams) -> Result<f64> {
    let s1 = evaluate_stress(d1, params)?;
    let s2 = evaluate_stress(d2, params)?;
    Ok(s1.sub(&s2).contract(&d1.sub(d2)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(entries: [f64; 6]) -> SymTensor {
        let [a, b, c, d, e, f] = entries;
        SymTensor::new([[a, b, c], [b, d, e], [c, e, f]]).unwrap()
    }

    #[test]
    fn parameter_bounds() {
        assert!(StressParams::new(1.0, 0.0).is_err());
        assert!(StressParams::new(1.2, 0.0).is_err());
        assert!(StressParams::new(1.21, -1e-9).is_err());
        assert!(StressParams::new(1.21, 0.0).is_ok());
        assert!(RegularizationParams::new(-0.1).is_err());
        let p = StressParams::new(1.5, 0.0).unwrap();
        assert!(p.is_degenerate());
        assert!((p.dual_exponent() - 3.0).abs() < 1e-15);
        assert!(!StressParams::new(1.5, 1e-6).unwrap().is_degenerate());
        assert!(!StressParams::new(2.5, 0.0).unwrap().is_degenerate());
        assert!(!StressParams::new(2.0, 0.0).unwrap().is_degenerate());
        assert!(StressParams::new(2.1, 0.0).unwrap().is_degenerate());
    }

    #[test]
    fn zero_tensor_gives_zero_stress() {
        for (q, k) in [(1.3, 0.0), (1.5, 0.1), (2.0, 0.0), (3.0, 0.0)] {
            let p = StressParams::new(q, k).unwrap();
            let s = evaluate_stress(&SymTensor::default(), &p).unwrap();
            assert_eq!(s, SymTensor::default());
        }
    }

    #[test]
    fn newtonian_stress_is_identity() {
        let d = tensor([0.3, -1.2, 0.4, 2.0, 0.7, -2.3]);
        for kappa in [0.0, 0.5, 7.0] {
            let p = StressParams::new(2.0, kappa).unwrap();
            assert_eq!(evaluate_stress(&d, &p).unwrap(), d);
        }
    }

    #[test]
    fn shear_thinning_scalar_value() {
        // |D| = 4: entries 2,2,2,2 on the off-diagonals of a 2x2 block and diagonal
        let d = tensor([2.0, 2.0, 0.0, -2.0, 0.0, 0.0]);
        assert!((d.norm() - 4.0).abs() < 1e-15);
        let p = StressParams::new(1.5, 0.0).unwrap();
        let s = evaluate_stress(&d, &p).unwrap();
        let expect = d.scaled(0.5);
        assert!(s.sub(&expect).norm() < 1e-15);
    }

    #[test]
    fn p_stress_values() {
        let unit = tensor([0.6, 0.0, 0.0, -0.8, 0.0, 0.0]);
        assert!((unit.norm() - 1.0).abs() < 1e-15);
        let reg = RegularizationParams::new(1.0).unwrap();
        assert!(evaluate_p_stress(&unit, &reg).unwrap().sub(&unit).norm() < 1e-15);
        assert_eq!(
            evaluate_p_stress(&unit, &RegularizationParams::none()).unwrap(),
            SymTensor::default()
        );
        let big = unit.scaled(32.0);
        let half = RegularizationParams::new(0.5).unwrap();
        // 0.5 * 32^{1/5} = 1
        assert!(evaluate_p_stress(&big, &half).unwrap().sub(&big).norm() < 1e-13);
    }

    #[test]
    fn dissipation_values() {
        let p2 = StressParams::new(2.0, 0.0).unwrap();
        let none = RegularizationParams::none();
        assert_eq!(dissipation_density(&SymTensor::default(), &p2, &none).unwrap(), 0.0);
        let d = tensor([1.0, 0.5, 0.0, -1.0, 0.0, 0.0]);
        assert!((dissipation_density(&d, &p2, &none).unwrap() - d.norm_sq()).abs() < 1e-15);
        // |D|^2 = 3, q = 3/2, kappa = 1: 3 * 4^{-1/4}
        let d3 = tensor([1.0, 0.5, 0.0, -1.0, 0.0, 0.0]).scaled((3.0f64 / 2.5).sqrt());
        assert!((d3.norm_sq() - 3.0).abs() < 1e-14);
        let p = StressParams::new(1.5, 1.0).unwrap();
        let expect = 3.0 * 4f64.powf(-0.25);
        assert!((dissipation_density(&d3, &p, &none).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn monotonicity_examples() {
        let d1 = tensor([0.1, 0.2, 0.3, 0.4, 0.5, -0.5]);
        let d2 = tensor([-1.0, 0.0, 0.7, 0.2, 0.1, 0.8]);
        let p = StressParams::new(1.3, 0.0).unwrap();
        assert_eq!(monotonicity_gap(&d1, &d1, &p).unwrap(), 0.0);
        let lin = StressParams::new(2.0, 0.0).unwrap();
        let gap = monotonicity_gap(&d1, &d2, &lin).unwrap();
        assert!((gap - d1.sub(&d2).norm_sq()).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_finite_and_asymmetric() {
        let mut m = [[0.0; 3]; 3];
        m[0][1] = 1.0;
        assert!(SymTensor::new(m).is_err());
        m[1][0] = 1.0;
        m[2][2] = f64::NAN;
        assert!(SymTensor::new(m).is_err());
        let bad = SymTensor([[f64::INFINITY, 0.0, 0.0], [0.0; 3], [0.0; 3]]);
        let p = StressParams::new(2.0, 0.0).unwrap();
        assert!(evaluate_stress(&bad, &p).is_err());
        assert!(evaluate_p_stress(&bad, &RegularizationParams::none()).is_err());
    }

    #[test]
    fn kappa_continuity_is_monotone() {
        let d = tensor([0.05, 0.3, -0.2, 0.01, 0.02, -0.06]);
        let p0 = StressParams::new(1.5, 0.0).unwrap();
        let s0 = evaluate_stress(&d, &p0).unwrap();
        let mut last = f64::INFINITY;
        for e in 1..=8 {
            let p = StressParams::new(1.5, 10f64.powi(-e)).unwrap();
            let gap = evaluate_stress(&d, &p).unwrap().sub(&s0).norm();
            assert!(gap < last);
            last = gap;
        }
        assert!(last < 1e-6);
    }
}
