//! Poincare map over one forcing period and its fixed points in the invariant ball.

mod anderson;
mod krylov;

pub use anderson::Anderson;
pub use krylov::{gmres, GmresOutcome};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::EmbeddingConstants;
use crate::constitutive::StressParams;
use crate::error::{Error, Result};
use crate::galerkin::{GalerkinState, GalerkinSystem};
use crate::integrator::{self, IntegratorConfig, TrajectoryRecord};
use crate::spectral::{Basis, SpectralField};

/// A Galerkin system together with the integrator settings that define `F`.
#[derive(Debug, Clone)]
pub struct PeriodicProblem {
    pub system: GalerkinSystem,
    pub integrator: IntegratorConfig,
}

impl PeriodicProblem {
    pub fn new(system: GalerkinSystem, integrator: IntegratorConfig) -> Self {
        Self { system, integrator }
    }

    pub fn period(&self) -> f64 {
        self.system.forcing().period()
    }

    pub fn basis(&self) -> &std::sync::Arc<Basis> {
        self.system.basis()
    }

    fn map_coords(&self, y: &[f64]) -> Result<Vec<f64>> {
        let f = SpectralField::from_coords(self.basis(), y)?;
        Ok(poincare_map(self, &f)?.to_coords())
    }
}

/// `F(v0) = v(T)` for the solution started at `v(0) = v0`.
pub fn poincare_map(problem: &PeriodicProblem, v0: &SpectralField) -> Result<SpectralField> {
    let s = integrator::advance(
        &problem.system,
        &GalerkinState::new(0.0, v0.clone()),
        problem.period(),
        &problem.integrator,
    )?;
    Ok(s.field)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BallVariant {
    /// `K`, including the `kappa^{q/2}` defect.
    #[default]
    K,
    /// `K-bar`, uniform in `kappa < 1`.
    KBar,
}

/// Radius of the invariant ball:
/// `K = ((C2 M^{q'} + c_kappa kappa^{q/2}) / (C1 C_S))^{1/q}` and
/// `K-bar = (C2' (M^{q'} + 1) / (C1 C_S))^{1/q}` with `C2' = max(C2, c_kappa)`,
/// where `M = max_t ||b(t)||_2`.
pub fn ball_radius(max_forcing: f64, params: &StressParams, consts: &EmbeddingConstants, variant: BallVariant) -> f64 {
    let q = params.q();
    let qp = params.dual_exponent();
    let m = max_forcing.powf(qp);
    let num = match variant {
        BallVariant::K => consts.c2 * m + consts.c2_kappa * params.kappa().powf(0.5 * q),
        BallVariant::KBar => consts.c2.max(consts.c2_kappa) * (m + 1.0),
    };
    (num / (consts.c1 * consts.c_s)).powf(1.0 / q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallCheck {
    pub holds: bool,
    pub max_norm: f64,
    /// `max_norm / radius - 1`; negative when strictly inside.
    pub max_excursion: f64,
}

/// `sup_t ||v(t)|| <= radius (1 + 1e-8)` over the recorded samples and steps.
pub fn ball_invariance_check(trajectory: &TrajectoryRecord, radius: f64) -> BallCheck {
    let max_kin = trajectory
        .samples
        .iter()
        .map(|s| s.terms.kinetic)
        .chain(trajectory.steps.iter().map(|s| s.terms.kinetic))
        .fold(0.0, f64::max);
    let max_norm = max_kin.sqrt();
    BallCheck {
        holds: max_norm <= radius * (1.0 + 1e-8),
        max_norm,
        max_excursion: if radius > 0.0 { max_norm / radius - 1.0 } else { f64::INFINITY },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub ratio: f64,
    /// `exp((C4 - eps C3) T)`.
    pub bound: f64,
    pub c4: f64,
    pub max_f: f64,
    pub max_coeff: f64,
}

/// Bound on `|f_ijk|` for the orthonormal real basis: `sqrt(2/|Omega|) * max |2 pi k / L|`.
pub fn trilinear_bound(basis: &Basis) -> f64 {
    let dom = basis.domain();
    let kmax = basis
        .modes()
        .iter()
        .map(|m| (m.k_squared() as f64).sqrt())
        .fold(0.0, f64::max);
    (2.0 / dom.volume()).sqrt() * dom.wavenumber_unit() * kmax
}

/// `||F(v0) - F(z0)|| / ||v0 - z0||` with the continuity bound for comparison.
pub fn contraction_ratio(
    problem: &PeriodicProblem,
    v0: &SpectralField,
    z0: &SpectralField,
    consts: &EmbeddingConstants,
) -> Result<ContractionReport> {
    let d0 = v0.sub(z0).norm();
    if d0 == 0.0 {
        return Err(Error::IdenticalInputs);
    }
    let cfg = &problem.integrator;
    let t1 = problem.period();
    let runs = [v0, z0]
        .par_iter()
        .map(|v| integrator::integrate(&problem.system, &GalerkinState::new(0.0, (*v).clone()), t1, cfg))
        .collect::<Result<Vec<_>>>()?;
    let d1 = runs[0].0.field.sub(&runs[1].0.field).norm();
    let max_coeff = runs
        .iter()
        .map(|(_, r)| r.max_l2())
        .fold(v0.norm().max(z0.norm()), f64::max);
    let n = problem.basis().real_dim() as f64;
    let max_f = trilinear_bound(problem.basis());
    let c4 = n * n * max_f * max_coeff;
    let eps = problem.system.regularization().epsilon();
    Ok(ContractionReport {
        ratio: d1 / d0,
        bound: ((c4 - eps * consts.c3) * t1).exp(),
        c4,
        max_f,
        max_coeff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Picard,
    Anderson,
    NewtonKrylov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Residual target; `None` means `1e-8 max(1, K)`.
    pub tol: Option<f64>,
    pub damping: f64,
    pub picard_iters: usize,
    pub anderson_iters: usize,
    pub anderson_window: usize,
    pub newton_iters: usize,
    pub krylov_restart: usize,
    pub krylov_max_iter: usize,
    pub krylov_rtol: f64,
    pub ball: BallVariant,
    /// Random restarts in the ball after a failed start from zero.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: None,
            damping: 1.0,
            picard_iters: 40,
            anderson_iters: 60,
            anderson_window: 5,
            newton_iters: 20,
            krylov_restart: 30,
            krylov_max_iter: 90,
            krylov_rtol: 1e-4,
            ball: BallVariant::K,
            restarts: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OrbitResult {
    pub initial: SpectralField,
    pub initial_guess: SpectralField,
    pub residual: f64,
    pub tolerance: f64,
    pub iterations: usize,
    pub method: Method,
    pub converged: bool,
    pub ball_radius_used: f64,
    /// Residual after each evaluation of `F`.
    pub history: Vec<f64>,
    pub trajectory: TrajectoryRecord,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn project_ball(v: &mut [f64], radius: f64) {
    let n = norm(v);
    if n > radius && n > 0.0 {
        let s = radius / n;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

struct Ladder<'a> {
    problem: &'a PeriodicProblem,
    cfg: &'a SolverConfig,
    radius: f64,
    tol: f64,
    evals: usize,
    history: Vec<f64>,
    best: (f64, Vec<f64>),
}

impl<'a> Ladder<'a> {
    /// Residual vector `F(x) - x` at a point already inside the ball.
    fn residual(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let fx = self.problem.map_coords(x)?;
        let g: Vec<f64> = fx.iter().zip(x).map(|(a, b)| a - b).collect();
        let r = norm(&g);
        self.evals += 1;
        self.history.push(r);
        if r < self.best.0 {
            self.best = (r, x.to_vec());
        }
        Ok(g)
    }

    fn done(&self) -> bool {
        self.best.0 <= self.tol
    }

    fn picard(&mut self, x0: Vec<f64>) -> Result<Vec<f64>> {
        let mut x = x0;
        let mut beta = self.cfg.damping;
        let mut g = self.residual(&x)?;
        let mut r = norm(&g);
        let mut slow = 0;
        for _ in 0..self.cfg.picard_iters {
            if self.done() {
                break;
            }
            let mut trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + beta * b).collect();
            project_ball(&mut trial, self.radius);
            let g_new = self.residual(&trial)?;
            let r_new = norm(&g_new);
            if r_new > r {
                beta *= 0.5;
                slow += 1;
            } else {
                slow = if r_new > 0.5 * r { slow + 1 } else { 0 };
            }
            x = trial;
            g = g_new;
            r = r_new;
            if slow >= 3 {
                break;
            }
        }
        Ok(x)
    }

    fn anderson(&mut self, x0: Vec<f64>) -> Result<Vec<f64>> {
        let mut acc = Anderson::new(self.cfg.anderson_window, self.cfg.damping);
        let mut x = x0;
        let mut stall = 0;
        let mut last = f64::INFINITY;
        for _ in 0..self.cfg.anderson_iters {
            let g = self.residual(&x)?;
            if self.done() {
                break;
            }
            let r = norm(&g);
            stall = if r > 0.8 * last { stall + 1 } else { 0 };
            if stall >= 6 {
                break;
            }
            last = last.min(r);
            x = acc.next(&x, &g);
            project_ball(&mut x, self.radius);
        }
        Ok(x)
    }

    fn newton_krylov(&mut self, x0: Vec<f64>) -> Result<Vec<f64>> {
        let mut x = x0;
        let mut g = self.residual(&x)?;
        for _ in 0..self.cfg.newton_iters {
            if self.done() {
                break;
            }
            let r = norm(&g);
            let xn = norm(&x);
            let problem = self.problem;
            let base: Vec<f64> = g.iter().zip(&x).map(|(a, b)| a + b).collect();
            let mut probes = 0;
            // J_G w = (F(x + h w) - F(x)) / h - w
            let apply = |w: &[f64]| -> Result<Vec<f64>> {
                let wn = norm(w);
                if wn == 0.0 {
                    return Ok(vec![0.0; w.len()]);
                }
                let h = f64::EPSILON.sqrt() * (1.0 + xn) / wn;
                let xp: Vec<f64> = x.iter().zip(w).map(|(a, b)| a + h * b).collect();
                let fp = problem.map_coords(&xp)?;
                probes += 1;
                Ok(fp
                    .iter()
                    .zip(&base)
                    .zip(w)
                    .map(|((p, f), wi)| (p - f) / h - wi)
                    .collect())
            };
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            let solved = gmres(apply, &rhs, self.cfg.krylov_rtol, self.cfg.krylov_restart, self.cfg.krylov_max_iter);
            self.evals += probes;
            let step = match solved {
                Ok((dx, _)) => dx,
                Err(Error::Breakdown(msg)) => {
                    log::warn!("Krylov breakdown ({msg}); falling back to damped Picard");
                    return self.picard(x);
                }
                Err(e) => return Err(e),
            };
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..8 {
                let mut trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + lambda * b).collect();
                project_ball(&mut trial, self.radius);
                let gt = self.residual(&trial)?;
                if norm(&gt) < (1.0 - 1e-4 * lambda) * r {
                    x = trial;
                    g = gt;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                log::warn!("Newton line search failed; falling back to damped Picard");
                return self.picard(x);
            }
        }
        Ok(x)
    }

    fn run(&mut self, x0: Vec<f64>) -> Result<Method> {
        let x = self.picard(x0)?;
        if self.done() {
            return Ok(Method::Picard);
        }
        let x = self.anderson(x)?;
        if self.done() {
            return Ok(Method::Anderson);
        }
        let start = if self.best.0 < f64::INFINITY { self.best.1.clone() } else { x };
        self.newton_krylov(start)?;
        Ok(Method::NewtonKrylov)
    }
}

/// Random state `v` with `||v|| <= radius`: smooth random direction
/// with spectrum decaying like `|k|^{-2}` and radial part `radius U^{1/m}`.
pub fn random_ball_state(basis: &std::sync::Arc<Basis>, radius: f64, rng: &mut impl Rng) -> SpectralField {
    let mut coords: Vec<f64> = basis
        .modes()
        .iter()
        .flat_map(|m| {
            let w = 1.0 / (m.k_squared() as f64);
            [w * rng.random_range(-1.0..1.0), w * rng.random_range(-1.0..1.0)]
        })
        .collect();
    let n = norm(&coords);
    let dim = coords.len() as f64;
    let r = radius * rng.random::<f64>().powf(1.0 / dim);
    if n > 0.0 {
        coords.iter_mut().for_each(|c| *c *= r / n);
    }
    SpectralField::from_coords(basis, &coords).expect("coordinate length matches basis")
}

struct Attempt {
    guess: Vec<f64>,
    method: Method,
    evals: usize,
    history: Vec<f64>,
    best: (f64, Vec<f64>),
}

fn attempt(problem: &PeriodicProblem, cfg: &SolverConfig, radius: f64, tol: f64, guess: Vec<f64>) -> Result<Attempt> {
    let mut ladder = Ladder {
        problem,
        cfg,
        radius,
        tol,
        evals: 0,
        history: Vec::new(),
        best: (f64::INFINITY, guess.clone()),
    };
    let method = ladder.run(guess.clone())?;
    Ok(Attempt {
        guess,
        method,
        evals: ladder.evals,
        history: ladder.history,
        best: ladder.best,
    })
}

/// Searches for `v0` with `F(v0) = v0` inside the invariant ball.
///
/// Starts from zero; if that fails and `restarts > 0`, random ball states
/// are tried in parallel and the best result is kept. The returned
/// trajectory is a fresh recorded integration from the final iterate.
pub fn find_periodic_orbit(
    problem: &PeriodicProblem,
    consts: &EmbeddingConstants,
    cfg: &SolverConfig,
) -> Result<OrbitResult> {
    let radius = ball_radius(
        problem.system.forcing().max_l2(),
        problem.system.params(),
        consts,
        cfg.ball,
    );
    let tol = cfg.tol.unwrap_or(1e-8 * radius.max(1.0));
    let zero = vec![0.0; problem.basis().real_dim()];
    let mut best = attempt(problem, cfg, radius, tol, zero)?;
    if best.best.0 > tol && cfg.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let guesses: Vec<Vec<f64>> = (0..cfg.restarts)
            .map(|_| random_ball_state(problem.basis(), radius, &mut rng).to_coords())
            .collect();
        let results: Vec<Attempt> = guesses
            .into_par_iter()
            .map(|g| attempt(problem, cfg, radius, tol, g))
            .collect::<Result<_>>()?;
        for r in results {
            if r.best.0 < best.best.0 {
                best = r;
            }
        }
    }
    let initial = SpectralField::from_coords(problem.basis(), &best.best.1)?;
    let (end, trajectory) = integrator::integrate(
        &problem.system,
        &GalerkinState::new(0.0, initial.clone()),
        problem.period(),
        &problem.integrator,
    )?;
    let residual = end.field.sub(&initial).norm();
    let converged = residual <= tol;
    if !converged {
        log::warn!("periodic orbit not converged: residual {residual:e} > tol {tol:e}");
    }
    Ok(OrbitResult {
        initial_guess: SpectralField::from_coords(problem.basis(), &best.guess)?,
        initial,
        residual,
        tolerance: tol,
        iterations: best.evals,
        method: best.method,
        converged,
        ball_radius_used: radius,
        history: best.history,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::RegularizationParams;
    use crate::forcing::ForcingSignal;
    use crate::spectral::TorusDomain;

    fn consts(q: f64) -> EmbeddingConstants {
        let dom = TorusDomain::new(2, 2.0 * std::f64::consts::PI, 2).unwrap();
        EmbeddingConstants::from_embedding(&dom, q, 1.0, 100).unwrap()
    }

    #[test]
    fn radius_formulas() {
        let p = StressParams::new(2.0, 0.0).unwrap();
        let mut c = consts(2.0);
        c.c1 = 1.0;
        c.c2 = 1.0;
        c.c_s = 1.0;
        assert_eq!(ball_radius(0.0, &p, &c, BallVariant::K), 0.0);
        assert!((ball_radius(1.0, &p, &c, BallVariant::K) - 1.0).abs() < 1e-15);
        let c = consts(2.0);
        let kbar = ball_radius(0.0, &p, &c, BallVariant::KBar);
        assert!((kbar - (c.c2 / (c.c1 * c.c_s)).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn kbar_dominates_k_for_small_kappa() {
        for q in [1.5, 2.0, 2.5] {
            let c = consts(q);
            for kappa in [0.0, 1e-6, 0.5, 0.99] {
                let p = StressParams::new(q, kappa).unwrap();
                for m in [0.0, 0.3, 4.0] {
                    assert!(ball_radius(m, &p, &c, BallVariant::KBar) >= ball_radius(m, &p, &c, BallVariant::K));
                }
            }
        }
    }

    #[test]
    fn zero_forcing_orbit_is_trivial() {
        let basis = Basis::new(TorusDomain::new(2, 2.0 * std::f64::consts::PI, 2).unwrap());
        let sys = GalerkinSystem::new(
            &basis,
            StressParams::new(2.5, 0.0).unwrap(),
            RegularizationParams::none(),
            ForcingSignal::zero(&basis, 1.0).unwrap(),
        )
        .unwrap();
        let problem = PeriodicProblem::new(
            sys,
            IntegratorConfig {
                samples: 16,
                ..Default::default()
            },
        );
        let r = find_periodic_orbit(&problem, &consts(2.5), &SolverConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.residual, 0.0);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.initial.norm(), 0.0);
    }

    #[test]
    fn random_ball_states_stay_inside() {
        let basis = Basis::new(TorusDomain::new(2, 1.0, 3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v = random_ball_state(&basis, 2.5, &mut rng);
            assert!(v.norm() <= 2.5 * (1.0 + 1e-14));
        }
    }

    #[test]
    fn identical_inputs_rejected() {
        let basis = Basis::new(TorusDomain::new(2, 1.0, 1).unwrap());
        let sys = GalerkinSystem::new(
            &basis,
            StressParams::new(2.0, 0.0).unwrap(),
            RegularizationParams::none(),
            ForcingSignal::zero(&basis, 1.0).unwrap(),
        )
        .unwrap();
        let p = PeriodicProblem::new(sys, IntegratorConfig::default());
        let v = SpectralField::zeros(&basis);
        assert!(matches!(
            contraction_ratio(&p, &v, &v, &consts(2.0)),
            Err(Error::IdenticalInputs)
        ));
    }
}
