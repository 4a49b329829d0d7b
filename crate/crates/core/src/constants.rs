//! Embedding and energy-inequality constants used by the a priori estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::TorusDomain;

/// Constants entering the invariant-ball radius, the energy inequality,
/// the contraction bound and the extinction estimate.
///
/// `c_emb` is the measured `sup ||v||_2 / ||Dv||_q` on the Galerkin space;
/// everything else is derived from it and the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConstants {
    pub q: f64,
    pub c_emb: f64,
    /// `||v||_2^q <= ||Dv||_q^q / C_S`, i.e. `C_S = c_emb^{-q}`.
    pub c_s: f64,
    /// Poincare constant `L / 2 pi`.
    pub c_p: f64,
    /// Korn constant: `||grad v||_2 = sqrt 2 ||Dv||_2` for solenoidal periodic fields.
    pub c_k: f64,
    /// Decay rate in `d/dt ||v||^2 + alpha ||v||^q <= 0`.
    pub alpha: f64,
    /// Lowest eigenvalue `(2 pi / L)^2` of `-Laplace`.
    pub c3: f64,
    pub c1: f64,
    pub c2: f64,
    /// Constant absorbing the `kappa^{q/2}` defect of the regularized stress.
    pub c2_kappa: f64,
    pub sample_budget: usize,
}

impl EmbeddingConstants {
    /// Derives the full set from a measured embedding constant.
    pub fn from_embedding(domain: &TorusDomain, q: f64, c_emb: f64, sample_budget: usize) -> Result<Self> {
        if !(c_emb.is_finite() && c_emb > 0.0) {
            return Err(Error::InvalidParameter {
                name: "c_emb",
                reason: format!("embedding constant must be positive, got {c_emb}"),
            });
        }
        if !(q.is_finite() && q > crate::constitutive::Q_MIN) {
            return Err(Error::InvalidParameter {
                name: "q",
                reason: format!("q = {q} violates q > 6/5"),
            });
        }
        let c1 = 0.5;
        let qp = q / (q - 1.0);
        let c_s = c_emb.powf(-q);
        let unit = domain.wavenumber_unit();
        Ok(Self {
            q,
            c_emb,
            c_s,
            c_p: 1.0 / unit,
            c_k: std::f64::consts::SQRT_2,
            alpha: 0.5 * c_s,
            c3: unit * unit,
            c1,
            c2: (2.0 * c_emb).powf(qp) / qp,
            c2_kappa: domain.volume() * kappa_defect(q, c1),
            sample_budget,
        })
    }

    pub fn dual_exponent(&self) -> f64 {
        self.q / (self.q - 1.0)
    }
}

/// `max_{s >= 0} (c1 + 1/q) s^q - 2 (1 + s^2)^{(q-2)/2} s^2`, clipped at zero.
pub fn kappa_defect(q: f64, c1: f64) -> f64 {
    let a = c1 + 1.0 / q;
    let g = |s: f64| a * s.powf(q) - 2.0 * (1.0 + s * s).powf(0.5 * (q - 2.0)) * s * s;
    // Coarse log-spaced scan, then golden-section refinement of the best bracket.
    let grid: Vec<f64> = (0..=600).map(|i| 10f64.powf(-3.0 + 9.0 * i as f64 / 600.0)).collect();
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for (i, &s) in grid.iter().enumerate() {
        let v = g(s);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let (mut lo, mut hi) = (grid[best_i.saturating_sub(1)], grid[(best_i + 1).min(grid.len() - 1)]);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let x1 = hi - r * (hi - lo);
        let x2 = lo + r * (hi - lo);
        if g(x1) > g(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    best.max(g(0.5 * (lo + hi))).max(0.0)
}
