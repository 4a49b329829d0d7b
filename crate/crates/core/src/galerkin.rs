//! Right-hand side of the Galerkin ODE and the per-instant energy functionals.
//!
//! The coefficient vector of a state is its real coordinate vector
//! (`SpectralField::to_coords`), so every tendency below is returned as a
//! [`SpectralField`] whose coordinates are `(c_k)'`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constitutive::{RegularizationParams, StressParams};
use crate::error::{Error, Result};
use crate::forcing::ForcingSignal;
use crate::integrator::SplitOde;
use crate::spectral::{sym_pairs, Basis, SpectralField, SymTensorGrid, Transform, DEFAULT_GRID_FACTOR};

/// A point `(t, c^n(t))` on a Galerkin trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinState {
    pub t: f64,
    pub field: SpectralField,
}

impl GalerkinState {
    pub fn new(t: f64, field: SpectralField) -> Self {
        Self { t, field }
    }
}

/// Instantaneous energy functionals of a state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTerms {
    /// `||v||^2_{L^2}`
    pub kinetic: f64,
    /// `||Dv||^q_{L^q}`
    pub dissipation_q: f64,
    /// `eps ||grad v||^2_{L^2}`
    pub dissipation_lap: f64,
    /// `eps ||Dv||^{11/5}_{L^{11/5}}`
    pub dissipation_p: f64,
    /// `(b, v)`
    pub power_in: f64,
    /// `int S(Dv) : Dv`
    pub stress_power: f64,
    /// `||b||_{L^2}`
    pub forcing_l2: f64,
}

/// The assembled Galerkin system for one parameter set.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    transform: Transform,
    params: StressParams,
    reg: RegularizationParams,
    forcing: ForcingSignal,
    /// Per-coordinate stiff symbol (two entries per complex mode).
    symbol: Vec<f64>,
    stress_is_linear: bool,
}

impl GalerkinSystem {
    pub fn new(
        basis: &Arc<Basis>,
        params: StressParams,
        reg: RegularizationParams,
        forcing: ForcingSignal,
    ) -> Result<Self> {
        Self::with_grid_factor(basis, params, reg, forcing, DEFAULT_GRID_FACTOR)
    }

    pub fn with_grid_factor(
        basis: &Arc<Basis>,
        params: StressParams,
        reg: RegularizationParams,
        forcing: ForcingSignal,
        grid_factor: f64,
    ) -> Result<Self> {
        if forcing.basis().domain() != basis.domain() {
            return Err(Error::ShapeMismatch("forcing lives on a different basis".into()));
        }
        let transform = Transform::new(basis, grid_factor)?;
        let stress_is_linear = params.q() == 2.0;
        let unit2 = basis.domain().wavenumber_unit().powi(2);
        let nu = reg.epsilon() + if stress_is_linear { 0.5 } else { 0.0 };
        let symbol = basis
            .modes()
            .iter()
            .flat_map(|m| {
                let s = -nu * unit2 * m.k_squared() as f64;
                [s, s]
            })
            .collect();
        if params.is_degenerate() {
            log::warn!(
                "q = {} < 11/5 with kappa = 0: the Galerkin right-hand side is not Lipschitz at Dv = 0",
                params.q()
            );
        }
        Ok(Self {
            transform,
            params,
            reg,
            forcing,
            symbol,
            stress_is_linear,
        })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        self.transform.basis()
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    pub fn params(&self) -> &StressParams {
        &self.params
    }

    pub fn regularization(&self) -> &RegularizationParams {
        &self.reg
    }

    pub fn forcing(&self) -> &ForcingSignal {
        &self.forcing
    }

    /// Set when `q < 11/5` and `kappa = 0`: the right-hand side is continuous
    /// but not Lipschitz, so uniqueness of the ODE solution is not guaranteed.
    pub fn degenerate_warning(&self) -> bool {
        self.params.is_degenerate()
    }

    /// Copy of the system driven by another forcing signal.
    pub fn with_forcing(&self, forcing: ForcingSignal) -> Result<Self> {
        if forcing.basis().domain() != self.basis().domain() {
            return Err(Error::ShapeMismatch("forcing lives on a different basis".into()));
        }
        let mut out = self.clone();
        out.forcing = forcing;
        Ok(out)
    }

    fn velocity_outer(&self, field: &SpectralField) -> Result<SymTensorGrid> {
        let v = self.transform.synthesize(field)?;
        let dim = self.basis().domain().dim();
        let components = sym_pairs(dim)
            .iter()
            .map(|&(a, b)| {
                v.components[a]
                    .iter()
                    .zip(&v.components[b])
                    .map(|(x, y)| x * y)
                    .collect()
            })
            .collect();
        Ok(SymTensorGrid {
            dim,
            points_per_axis: v.points_per_axis,
            components,
        })
    }

    /// Pointwise `factor(|D|^2) * D` over a strain-rate grid.
    fn scaled_strain(&self, d: &SymTensorGrid, factor: impl Fn(f64) -> f64) -> Result<SymTensorGrid> {
        let mut out = SymTensorGrid::zeros(d.dim, d.points_per_axis);
        for i in 0..d.len() {
            let f = factor(d.norm_sq_at(i));
            if !f.is_finite() {
                return Err(Error::NonFinite("stress evaluation"));
            }
            for (o, c) in out.components.iter_mut().zip(&d.components) {
                o[i] = f * c[i];
            }
        }
        Ok(out)
    }

    /// `-P^n div(v (x) v)`, i.e. `sum_ij c_i c_j f_ijk` with `f_ijk = (omega^i (x) omega^j, grad omega^k)`.
    pub fn convection_rhs(&self, field: &SpectralField) -> Result<SpectralField> {
        let outer = self.velocity_outer(field)?;
        Ok(self.transform.project_divergence(&outer)?.scaled(-1.0))
    }

    /// `-(S, D omega^k) - eps sum_i c_i g_ik - eps(|Dv|^{1/5} Dv, D omega^k)`.
    pub fn viscous_rhs(&self, field: &SpectralField) -> Result<SpectralField> {
        let d = self.transform.sym_gradient(field)?;
        let params = self.params;
        let reg = self.reg;
        let tensor = self.scaled_strain(&d, |s2| params.viscosity(s2) + reg.p_factor(s2))?;
        let mut out = self.transform.project_divergence(&tensor)?;
        let unit2 = self.basis().domain().wavenumber_unit().powi(2);
        let eps = self.reg.epsilon();
        for ((o, c), m) in out
            .coefficients_mut()
            .iter_mut()
            .zip(field.coefficients())
            .zip(self.basis().modes())
        {
            *o -= c * (eps * unit2 * m.k_squared() as f64);
        }
        Ok(out)
    }

    /// `b_k(t) = (b(t), omega^k)`.
    pub fn forcing_rhs(&self, t: f64) -> SpectralField {
        self.forcing.evaluate(t)
    }

    /// `(c_k)'`: the sum of the convective, viscous and forcing tendencies.
    pub fn full_rhs(&self, state: &GalerkinState) -> Result<SpectralField> {
        let conv = self.convection_rhs(&state.field)?;
        let visc = self.viscous_rhs(&state.field)?;
        let force = self.forcing_rhs(state.t);
        let coeffs: Vec<Complex64> = conv
            .coefficients()
            .iter()
            .zip(visc.coefficients())
            .zip(force.coefficients())
            .map(|((a, b), c)| a + b + c)
            .collect();
        SpectralField::from_coefficients(self.basis(), coeffs)
    }

    /// Tendency without the terms carried by the stiff symbol, with all
    /// grid terms fused into a single projection.
    fn nonlinear_tendency(&self, t: f64, field: &SpectralField) -> Result<SpectralField> {
        let v = self.transform.synthesize(field)?;
        let d = self.transform.sym_gradient(field)?;
        let dim = d.dim;
        let pairs = sym_pairs(dim);
        let mut tensor = SymTensorGrid::zeros(dim, d.points_per_axis);
        for i in 0..d.len() {
            let s2 = d.norm_sq_at(i);
            let mut f = self.reg.p_factor(s2);
            if !self.stress_is_linear {
                f += self.params.viscosity(s2);
            }
            if !f.is_finite() {
                return Err(Error::NonFinite("stress evaluation"));
            }
            for (c, &(a, b)) in pairs.iter().enumerate() {
                tensor.components[c][i] = f * d.components[c][i] - v.components[a][i] * v.components[b][i];
            }
        }
        let mut out = self.transform.project_divergence(&tensor)?;
        out.axpy(1.0, &self.forcing.evaluate(t));
        Ok(out)
    }

    /// Energy functionals of `state` by quadrature on the padded grid.
    pub fn energy_terms(&self, state: &GalerkinState) -> Result<EnergyTerms> {
        let field = &state.field;
        let d = self.transform.sym_gradient(field)?;
        let q = self.params.q();
        let (mut diss_q, mut diss_p, mut stress) = (0.0, 0.0, 0.0);
        for i in 0..d.len() {
            let s2 = d.norm_sq_at(i);
            if s2 > 0.0 {
                diss_q += s2.powf(0.5 * q);
                diss_p += s2.powf(0.5 * crate::constitutive::P_EXPONENT);
                stress += self.params.viscosity(s2) * s2;
            }
        }
        let h = self.transform.cell_volume();
        let b = self.forcing.evaluate(state.t);
        Ok(EnergyTerms {
            kinetic: field.norm_squared(),
            dissipation_q: diss_q * h,
            dissipation_lap: self.reg.epsilon() * field.gradient_norm_squared(),
            dissipation_p: self.reg.epsilon() * diss_p * h,
            power_in: b.inner(field),
            stress_power: stress * h,
            forcing_l2: b.norm(),
        })
    }
}

impl SplitOde for GalerkinSystem {
    fn dim(&self) -> usize {
        self.basis().real_dim()
    }

    fn linear_symbol(&self) -> &[f64] {
        &self.symbol
    }

    fn nonlinear(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        let field = SpectralField::from_coords(self.basis(), y)?;
        let tendency = self.nonlinear_tendency(t, &field)?;
        let s = self.basis().coordinate_scale();
        for (o, c) in out.chunks_exact_mut(2).zip(tendency.coefficients()) {
            o[0] = c.re * s;
            o[1] = c.im * s;
        }
        Ok(())
    }
}
