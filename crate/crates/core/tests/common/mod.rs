//! Shared fixtures and the dense quadrature oracle.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use powerlaw_periodic::diagnostics::estimate_embedding_constants;
use powerlaw_periodic::periodic::PeriodicProblem;
use powerlaw_periodic::*;
use rand::Rng;

pub const TWO_PI: f64 = 2.0 * PI;

pub fn sinusoid() -> TimeProfile {
    TimeProfile::Sinusoid { harmonic: 1, phase: 0.0 }
}

pub fn mode(k: &[i32], re: f64, im: f64, profile: TimeProfile) -> ForcingMode {
    ForcingMode {
        k: k.to_vec(),
        pol: 0,
        re,
        im,
        profile,
    }
}

/// Smooth two-mode forcing used by the thickening and cascade cases.
pub fn two_mode_forcing(period: f64) -> ForcingSpec {
    ForcingSpec {
        period,
        shutoff: None,
        modes: vec![
            mode(&[1, 0], 0.1, 0.0, sinusoid()),
            mode(&[1, 2], 0.0, 0.1, TimeProfile::Constant),
        ],
    }
}

pub fn system(n_max: usize, q: f64, kappa: f64, epsilon: f64, spec: &ForcingSpec) -> GalerkinSystem {
    let basis = Basis::new(TorusDomain::new(2, TWO_PI, n_max).unwrap());
    let forcing = ForcingSignal::new(&basis, spec).unwrap();
    GalerkinSystem::new(
        &basis,
        StressParams::new(q, kappa).unwrap(),
        RegularizationParams::new(epsilon).unwrap(),
        forcing,
    )
    .unwrap()
}

/// q = 2.5, kappa = 0, n_max = 8, period 2.
pub fn thickening_problem() -> (PeriodicProblem, EmbeddingConstants) {
    let sys = system(8, 2.5, 0.0, 0.0, &two_mode_forcing(2.0));
    let consts = estimate_embedding_constants(sys.basis().domain(), 2.5, 200, 1).unwrap();
    (PeriodicProblem::new(sys, IntegratorConfig::default()), consts)
}

/// Stokes forcing `a sin(2 pi t / T)` on mode k = (1, 1), q = 2, no regularization.
pub fn linear_problem(a: f64, period: f64) -> PeriodicProblem {
    let spec = ForcingSpec {
        period,
        shutoff: None,
        modes: vec![mode(&[1, 1], a, 0.0, sinusoid())],
    };
    PeriodicProblem::new(system(2, 2.0, 0.0, 0.0, &spec), IntegratorConfig::default())
}

/// Periodic solution of `c' = -nu c + a sin(w t)` at t = 0.
pub fn linear_exact_initial(basis: &Arc<Basis>, a: f64, period: f64) -> SpectralField {
    let m = DivFreeMode::new(&[1, 1], 0).unwrap();
    let nu = 0.5 * m.k_squared() as f64;
    let w = TWO_PI / period;
    let mut f = SpectralField::zeros(basis);
    f.set_coefficient(&m, num_complex::Complex64::new(-a * w / (nu * nu + w * w), 0.0))
        .unwrap();
    f
}

pub fn random_field(basis: &Arc<Basis>, scale: f64, rng: &mut impl Rng) -> SpectralField {
    let coords: Vec<f64> = (0..basis.real_dim()).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
    SpectralField::from_coords(basis, &coords).unwrap()
}

/// Real orthonormal basis functions and their gradients sampled on an
/// `n x n` grid, built from explicit cosines and sines (no FFT).
pub struct DenseOracle {
    /// `phi[i][p] = [phi^0, phi^1]`
    phi: Vec<Vec<[f64; 2]>>,
    /// `grad[i][p][a][b] = d_b phi_i^a`
    grad: Vec<Vec<[[f64; 2]; 2]>>,
    h: f64,
    /// `f[i][j][k] = (phi_i (x) phi_j, grad phi_k)`
    pub f: Vec<Vec<Vec<f64>>>,
    /// `g[i][k] = (grad phi_i, grad phi_k)`
    pub g: Vec<Vec<f64>>,
}

impl DenseOracle {
    pub fn new(basis: &Arc<Basis>, n: usize) -> Self {
        let dom = basis.domain();
        assert_eq!(dom.dim(), 2);
        let l = dom.side_length();
        let u = TWO_PI / l;
        let amp = 2.0 / (2.0 * l * l).sqrt();
        let dx = l / n as f64;
        let mut phi = Vec::new();
        let mut grad = Vec::new();
        for m in basis.modes() {
            let k = m.wavevector();
            let e = m.polarization_vector();
            let mut pc = Vec::with_capacity(n * n);
            let mut ps = Vec::with_capacity(n * n);
            let mut gc = Vec::with_capacity(n * n);
            let mut gs = Vec::with_capacity(n * n);
            for ix in 0..n {
                for iy in 0..n {
                    let x = [ix as f64 * dx, iy as f64 * dx];
                    let th = u * (k[0] as f64 * x[0] + k[1] as f64 * x[1]);
                    let (s, c) = th.sin_cos();
                    pc.push([amp * e[0] * c, amp * e[1] * c]);
                    ps.push([-amp * e[0] * s, -amp * e[1] * s]);
                    let mut a = [[0.0; 2]; 2];
                    let mut b = [[0.0; 2]; 2];
                    for i in 0..2 {
                        for j in 0..2 {
                            a[i][j] = -amp * e[i] * u * k[j] as f64 * s;
                            b[i][j] = -amp * e[i] * u * k[j] as f64 * c;
                        }
                    }
                    gc.push(a);
                    gs.push(b);
                }
            }
            phi.push(pc);
            phi.push(ps);
            grad.push(gc);
            grad.push(gs);
        }
        let h = dx * dx;
        let r = phi.len();
        let npts = n * n;
        let mut f = vec![vec![vec![0.0; r]; r]; r];
        for i in 0..r {
            for j in 0..r {
                for k in 0..r {
                    let mut acc = 0.0;
                    for p in 0..npts {
                        for a in 0..2 {
                            for b in 0..2 {
                                acc += phi[i][p][a] * phi[j][p][b] * grad[k][p][a][b];
                            }
                        }
                    }
                    f[i][j][k] = h * acc;
                }
            }
        }
        let mut g = vec![vec![0.0; r]; r];
        for i in 0..r {
            for k in 0..r {
                let mut acc = 0.0;
                for p in 0..npts {
                    for a in 0..2 {
                        for b in 0..2 {
                            acc += grad[i][p][a][b] * grad[k][p][a][b];
                        }
                    }
                }
                g[i][k] = h * acc;
            }
        }
        Self { phi, grad, h, f, g }
    }

    fn sym(g: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let o = 0.5 * (g[0][1] + g[1][0]);
        [[g[0][0], o], [o, g[1][1]]]
    }

    /// `(c_k)'` in real coordinates, with the forcing given pointwise.
    pub fn rhs(
        &self,
        a: &[f64],
        params: &StressParams,
        reg: &RegularizationParams,
        forcing: impl Fn(usize) -> [f64; 2],
    ) -> Vec<f64> {
        let r = self.phi.len();
        let npts = self.phi[0].len();
        let mut out = vec![0.0; r];
        for k in 0..r {
            for i in 0..r {
                for j in 0..r {
                    out[k] += a[i] * a[j] * self.f[i][j][k];
                }
                out[k] -= reg.epsilon() * a[i] * self.g[i][k];
            }
        }
        for p in 0..npts {
            let mut d = [[0.0; 2]; 2];
            for (i, ai) in a.iter().enumerate() {
                let di = Self::sym(&self.grad[i][p]);
                for x in 0..2 {
                    for y in 0..2 {
                        d[x][y] += ai * di[x][y];
                    }
                }
            }
            let s2: f64 = d.iter().flatten().map(|x| x * x).sum();
            let mu = if s2 == 0.0 && params.kappa() == 0.0 && params.q() != 2.0 {
                0.0
            } else if params.q() == 2.0 {
                1.0
            } else {
                (params.kappa() + s2).powf(0.5 * (params.q() - 2.0))
            };
            let pf = if s2 == 0.0 || reg.epsilon() == 0.0 {
                0.0
            } else {
                reg.epsilon() * s2.powf(0.1)
            };
            let b = forcing(p);
            for k in 0..r {
                let dk = Self::sym(&self.grad[k][p]);
                let contr: f64 = (0..2).flat_map(|x| (0..2).map(move |y| (x, y))).map(|(x, y)| d[x][y] * dk[x][y]).sum();
                let proj = b[0] * self.phi[k][p][0] + b[1] * self.phi[k][p][1];
                out[k] += self.h * (proj - (mu + pf) * contr);
            }
        }
        out
    }

    pub fn points(&self) -> usize {
        self.phi[0].len()
    }
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

/// Grid coordinate of flat index `p` on an `n x n` grid of side `l`.
pub fn grid_point(p: usize, n: usize, l: f64) -> [f64; 2] {
    let dx = l / n as f64;
    [(p / n) as f64 * dx, (p % n) as f64 * dx]
}
