//! Audits of the a priori estimates on computed trajectories and orbits.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::EmbeddingConstants;
use crate::constitutive::{RegularizationParams, StressParams, P_EXPONENT};
use crate::error::{Error, Result};
use crate::forcing::{ForcingSignal, ForcingSpec};
use crate::galerkin::GalerkinSystem;
use crate::integrator::{self, check_energy_step, IntegratorConfig, SplitOde, TrajectoryRecord};
use crate::periodic::{ball_radius, find_periodic_orbit, BallVariant, OrbitResult, PeriodicProblem, SolverConfig};
use crate::spectral::{Basis, DivFreeMode, SpectralField, TorusDomain, Transform, DEFAULT_GRID_FACTOR};

// ---------------------------------------------------------------------------
// Embedding constants

/// `(||v||_2, ||Dv||_q^q, G)` where `G = -P div(|Dv|^{q-2} Dv)` is the
/// L2 gradient of `||Dv||_q^q / q`.
fn embedding_parts(t: &Transform, v: &SpectralField, q: f64, with_gradient: bool) -> Result<(f64, f64, Option<SpectralField>)> {
    let d = t.sym_gradient(v)?;
    let mut integral = 0.0;
    let mut tensor = crate::spectral::SymTensorGrid::zeros(d.dim, d.points_per_axis);
    for i in 0..d.len() {
        let s2 = d.norm_sq_at(i);
        if s2 > 0.0 {
            integral += s2.powf(0.5 * q);
            if with_gradient {
                let f = s2.powf(0.5 * (q - 2.0));
                for (o, c) in tensor.components.iter_mut().zip(&d.components) {
                    o[i] = f * c[i];
                }
            }
        }
    }
    let grad = if with_gradient {
        Some(t.project_divergence(&tensor)?.scaled(-1.0))
    } else {
        None
    };
    Ok((v.norm(), integral * t.cell_volume(), grad))
}

fn embedding_ratio(t: &Transform, v: &SpectralField, q: f64) -> Result<f64> {
    let (n, dq, _) = embedding_parts(t, v, q, false)?;
    Ok(if dq > 0.0 { n / dq.powf(1.0 / q) } else { 0.0 })
}

/// Gradient ascent on `log(||v||_2 / ||Dv||_q)` with backtracking.
fn ascend(t: &Transform, start: &SpectralField, q: f64, iters: usize) -> Result<f64> {
    let mut v = start.scaled(1.0 / start.norm());
    let mut best = embedding_ratio(t, &v, q)?;
    let mut step = 0.5;
    for _ in 0..iters {
        let (n, dq, g) = embedding_parts(t, &v, q, true)?;
        let g = g.expect("gradient requested");
        // grad log R = v / ||v||^2 - G / ||Dv||_q^q
        let mut dir = v.scaled(1.0 / (n * n));
        dir.axpy(-1.0 / dq, &g);
        // Tangential component only (R is scale invariant).
        let radial = dir.inner(&v) / (n * n);
        dir.axpy(-radial, &v);
        let dn = dir.norm();
        if dn < 1e-14 {
            break;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut trial = v.clone();
            trial.axpy(step / dn, &dir);
            trial.scale(1.0 / trial.norm());
            let r = embedding_ratio(t, &trial, q)?;
            if r > best {
                best = r;
                v = trial;
                step *= 1.5;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(best)
}

fn random_field(basis: &Arc<Basis>, rng: &mut ChaCha8Rng) -> SpectralField {
    let decay = rng.random_range(0.0..3.0);
    let coeffs = basis
        .modes()
        .iter()
        .map(|m| {
            let w = (m.k_squared() as f64).powf(-0.5 * decay);
            num_complex::Complex64::new(w * rng.random_range(-1.0..1.0), w * rng.random_range(-1.0..1.0))
        })
        .collect();
    SpectralField::from_coefficients(basis, coeffs).expect("length matches")
}

/// Estimates `c_emb = sup ||v||_2 / ||Dv||_q` over the Galerkin space and derives
/// the remaining constants. Deterministic for a given seed and monotone in
/// `budget`: random samples come from one stream, and local ascent starts from
/// the lowest mode and from the best sample of every prefix `100 * 2^j <= budget`.
pub fn estimate_embedding_constants(domain: &TorusDomain, q: f64, budget: usize, seed: u64) -> Result<EmbeddingConstants> {
    if budget < 100 {
        return Err(Error::BudgetTooSmall(budget));
    }
    StressParams::new(q, 0.0)?;
    let basis = Basis::new(*domain);
    let t = Transform::new(&basis, DEFAULT_GRID_FACTOR)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<SpectralField> = (0..budget).map(|_| random_field(&basis, &mut rng)).collect();
    let ratios = samples
        .par_iter()
        .map(|v| embedding_ratio(&t, v, q))
        .collect::<Result<Vec<f64>>>()?;
    let mut starts = Vec::new();
    let lowest = {
        let mut f = SpectralField::zeros(&basis);
        let k: Vec<i32> = (0..domain.dim()).map(|i| i32::from(i + 1 == domain.dim())).collect();
        f.set_coefficient(&DivFreeMode::new(&k, 0)?, num_complex::Complex64::new(1.0, 0.0))?;
        f
    };
    starts.push(lowest);
    let mut prefix = 100;
    while prefix <= budget {
        let (i, _) = ratios[..prefix]
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &r)| if r > acc.1 { (i, r) } else { acc });
        starts.push(samples[i].clone());
        prefix *= 2;
    }
    let ascended = starts
        .par_iter()
        .map(|s| ascend(&t, s, q, 200))
        .collect::<Result<Vec<f64>>>()?;
    let c_emb = ratios.iter().chain(&ascended).fold(0.0, |a: f64, &b| a.max(b));
    EmbeddingConstants::from_embedding(domain, q, c_emb, budget)
}

// ---------------------------------------------------------------------------
// Energy inequality

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub holds: bool,
    /// Smallest slack of the integral form over the samples.
    pub worst_sample_slack: f64,
    /// Smallest slack of the per-step form (`None` without step entries).
    pub worst_step_slack: Option<f64>,
    pub sample_violations: usize,
    pub step_violations: usize,
    pub steps_checked: usize,
    pub constants: EmbeddingConstants,
}

/// Integral form at every sample and per-step form at every accepted step:
/// `||v(t)||^2 + C1 int ||Dv||_q^q + int eps(...) <= ||v(0)||^2 + C2 int ||b||^{q'} + c_kappa kappa^{q/2} t`.
pub fn verify_energy_inequality(trajectory: &TrajectoryRecord, consts: &EmbeddingConstants) -> EnergyReport {
    let kq = consts.c2_kappa * trajectory.kappa.powf(0.5 * consts.q);
    let mut worst = f64::INFINITY;
    let mut sample_violations = 0;
    if let Some(first) = trajectory.samples.first() {
        for s in &trajectory.samples {
            let lhs = s.terms.kinetic
                + consts.c1 * s.integrals.dissipation_q
                + s.integrals.dissipation_lap
                + s.integrals.dissipation_p;
            let rhs = first.terms.kinetic + consts.c2 * s.integrals.forcing_dual + kq * (s.t - first.t);
            let slack = rhs - lhs;
            worst = worst.min(slack);
            if slack < -64.0 * f64::EPSILON * (s.terms.kinetic + first.terms.kinetic) {
                sample_violations += 1;
            }
        }
    }
    let mut worst_step: Option<f64> = None;
    let mut step_violations = 0;
    for w in trajectory.steps.windows(2) {
        let c = check_energy_step(&w[0], &w[1], consts, trajectory.kappa);
        worst_step = Some(worst_step.map_or(c.slack, |x| x.min(c.slack)));
        if !c.holds {
            step_violations += 1;
        }
    }
    EnergyReport {
        holds: sample_violations == 0 && step_violations == 0,
        worst_sample_slack: worst,
        worst_step_slack: worst_step,
        sample_violations,
        step_violations,
        steps_checked: trajectory.steps.len().saturating_sub(1),
        constants: *consts,
    }
}

// ---------------------------------------------------------------------------
// Space-time quadrature on stored states

/// Trapezoid rule in time of a per-state quantity.
pub fn time_integral(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

fn require_states(trajectory: &TrajectoryRecord) -> Result<()> {
    if trajectory.states.len() != trajectory.samples.len() {
        return Err(Error::ShapeMismatch(format!(
            "trajectory stores {} states for {} samples; enable store_states",
            trajectory.states.len(),
            trajectory.samples.len()
        )));
    }
    Ok(())
}

/// `int_Omega |grad v|^r` with the Frobenius norm.
fn grad_power(t: &Transform, v: &SpectralField, r: f64) -> Result<f64> {
    let g = t.gradient(v)?;
    let n = t.grid_len();
    let s: f64 = (0..n)
        .map(|i| {
            let s2: f64 = g.iter().map(|c| c[i] * c[i]).sum();
            if s2 > 0.0 {
                s2.powf(0.5 * r)
            } else {
                0.0
            }
        })
        .sum();
    Ok(s * t.cell_volume())
}

fn sym_grad_power(t: &Transform, v: &SpectralField, r: f64) -> Result<f64> {
    let d = t.sym_gradient(v)?;
    let s: f64 = (0..d.len())
        .map(|i| {
            let s2 = d.norm_sq_at(i);
            if s2 > 0.0 {
                s2.powf(0.5 * r)
            } else {
                0.0
            }
        })
        .sum();
    Ok(s * t.cell_volume())
}

fn velocity_power(t: &Transform, v: &SpectralField, r: f64) -> Result<f64> {
    let g = t.synthesize(v)?;
    let n = t.grid_len();
    let s: f64 = (0..n)
        .map(|i| {
            let s2: f64 = g.components.iter().map(|c| c[i] * c[i]).sum();
            if s2 > 0.0 {
                s2.powf(0.5 * r)
            } else {
                0.0
            }
        })
        .sum();
    Ok(s * t.cell_volume())
}

fn map_states(trajectory: &TrajectoryRecord, f: impl Fn(&SpectralField) -> Result<f64> + Sync + Send) -> Result<Vec<f64>> {
    trajectory.states.par_iter().map(f).collect()
}

// ---------------------------------------------------------------------------
// Interpolation inequality

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationReport {
    pub holds: bool,
    /// `int int |v|^{5q/3}`
    pub lhs: f64,
    /// `sup_t ||v||_2^{2q/3} int int |grad v|^q`
    pub rhs: f64,
}

/// `int_0^T int |v|^{5q/3} <= sup_t ||v||_2^{2q/3} int_0^T int |grad v|^q`.
pub fn interpolation_bound_check(trajectory: &TrajectoryRecord, q: f64) -> Result<InterpolationReport> {
    if !(q > crate::constitutive::Q_MIN) {
        return Err(Error::InvalidParameter {
            name: "q",
            reason: format!("q = {q} violates q > 6/5"),
        });
    }
    require_states(trajectory)?;
    let Some(first) = trajectory.states.first() else {
        return Ok(InterpolationReport {
            holds: true,
            lhs: 0.0,
            rhs: 0.0,
        });
    };
    let t = Transform::new(first.basis(), DEFAULT_GRID_FACTOR)?;
    let times = trajectory.times();
    let lhs_vals = map_states(trajectory, |v| velocity_power(&t, v, 5.0 * q / 3.0))?;
    let grad_vals = map_states(trajectory, |v| grad_power(&t, v, q))?;
    let sup = trajectory.states.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let lhs = time_integral(&times, &lhs_vals);
    let rhs = sup.powf(2.0 * q / 3.0) * time_integral(&times, &grad_vals);
    Ok(InterpolationReport {
        holds: lhs <= rhs * (1.0 + 1e-10),
        lhs,
        rhs,
    })
}

// ---------------------------------------------------------------------------
// Orbit summaries for the regularization cascade

/// Fixed smooth test field used in the Hoelder pairings.
pub fn test_field(basis: &Arc<Basis>) -> SpectralField {
    let mut f = SpectralField::zeros(basis);
    let d = basis.domain().dim();
    let picks: [(&[i32], f64); 3] = if d == 2 {
        [(&[1, 0], 1.0), (&[0, 1], 0.5), (&[1, 1], 0.25)]
    } else {
        [(&[1, 0, 0], 1.0), (&[0, 1, 0], 0.5), (&[1, 1, 0], 0.25)]
    };
    for (k, a) in picks {
        if let Ok(m) = DivFreeMode::new(k, 0) {
            let _ = f.set_coefficient(&m, num_complex::Complex64::new(a, 0.0));
        }
    }
    f
}

/// Space-time quantities of one orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitNorms {
    pub sup_l2: f64,
    /// `||Dv||_{L^q(Q)}`
    pub dv_lq: f64,
    /// `eps^{1/2} ||grad v||_{L^2(Q)}`
    pub eps_half_grad_l2: f64,
    /// `eps^{5/11} ||Dv||_{L^{11/5}(Q)}`
    pub eps_p_dv: f64,
    /// `eps ||grad v||_{L^{5q/6}(Q)} ||grad phi||_{L^{5q/(5q-6)}(Q)}`
    pub holder_lap: f64,
    /// `eps^{5/11} ||eps^{5/11} Dv||_{L^{11/5}(Q)}^{6/5} ||D phi||_{L^{11/5}(Q)}`
    pub holder_p: f64,
    /// `|eps int int grad v : grad phi|`
    pub pairing_lap: f64,
    /// `||S(Dv)||_{L^{q'}(Q)}`
    pub stress_lqp: f64,
    /// `(int int (kappa + |Dv|^2)^{q/2})^{1/q'}`
    pub stress_bound: f64,
}

/// Computes [`OrbitNorms`] from a trajectory with stored states.
pub fn orbit_norms(trajectory: &TrajectoryRecord, params: &StressParams, reg: &RegularizationParams) -> Result<OrbitNorms> {
    require_states(trajectory)?;
    let first = trajectory
        .states
        .first()
        .ok_or_else(|| Error::ShapeMismatch("empty trajectory".into()))?;
    let basis = first.basis().clone();
    let t = Transform::new(&basis, DEFAULT_GRID_FACTOR)?;
    let times = trajectory.times();
    let period = times.last().copied().unwrap_or(0.0) - times.first().copied().unwrap_or(0.0);
    let q = params.q();
    let qp = params.dual_exponent();
    let eps = reg.epsilon();
    let phi = test_field(&basis);
    let r_lap = 5.0 * q / 6.0;
    let r_lap_dual = 5.0 * q / (5.0 * q - 6.0);

    let last = trajectory
        .samples
        .last()
        .ok_or_else(|| Error::ShapeMismatch("empty trajectory".into()))?;
    let dv_lq = last.integrals.dissipation_q.powf(1.0 / q);
    let eps_half_grad_l2 = last.integrals.dissipation_lap.sqrt();
    let eps_p_dv = last.integrals.dissipation_p.powf(1.0 / P_EXPONENT);

    let grad_r = time_integral(&times, &map_states(trajectory, |v| grad_power(&t, v, r_lap))?).powf(1.0 / r_lap);
    let phi_grad = (period * grad_power(&t, &phi, r_lap_dual)?).powf(1.0 / r_lap_dual);
    let phi_d = (period * sym_grad_power(&t, &phi, P_EXPONENT)?).powf(1.0 / P_EXPONENT);
    let pairing_vals = map_states(trajectory, |v| {
        let g = t.gradient(v)?;
        let gp = t.gradient(&phi)?;
        let s: f64 = (0..t.grid_len())
            .map(|i| g.iter().zip(&gp).map(|(a, b)| a[i] * b[i]).sum::<f64>())
            .sum();
        Ok(s * t.cell_volume())
    })?;
    let (stress_vals, bound_vals): (Vec<f64>, Vec<f64>) = map_states(trajectory, |v| {
        let d = t.sym_gradient(v)?;
        let s: f64 = (0..d.len())
            .map(|i| {
                let s2 = d.norm_sq_at(i);
                (params.viscosity(s2) * s2.sqrt()).powf(qp)
            })
            .sum();
        Ok(s * t.cell_volume())
    })?
    .into_iter()
    .zip(map_states(trajectory, |v| {
        let d = t.sym_gradient(v)?;
        let s: f64 = (0..d.len())
            .map(|i| (params.kappa() + d.norm_sq_at(i)).powf(0.5 * q))
            .sum();
        Ok(s * t.cell_volume())
    })?)
    .unzip();

    Ok(OrbitNorms {
        sup_l2: trajectory.states.iter().map(|v| v.norm()).fold(0.0, f64::max),
        dv_lq,
        eps_half_grad_l2,
        eps_p_dv,
        holder_lap: eps * grad_r * phi_grad,
        holder_p: eps.powf(5.0 / 11.0) * eps_p_dv.powf(6.0 / 5.0) * phi_d,
        pairing_lap: (eps * time_integral(&times, &pairing_vals)).abs(),
        stress_lqp: time_integral(&times, &stress_vals).powf(1.0 / qp),
        stress_bound: time_integral(&times, &bound_vals).powf(1.0 / qp),
    })
}

/// `(int_0^T ||u(t) - w(t)||^2 dt)^{1/2}` on the modes common to both (the coarser basis).
pub fn l2l2_distance(a: &TrajectoryRecord, b: &TrajectoryRecord) -> Result<f64> {
    require_states(a)?;
    require_states(b)?;
    if a.states.len() != b.states.len() {
        return Err(Error::ShapeMismatch("trajectories sampled differently".into()));
    }
    let (Some(sa), Some(sb)) = (a.states.first(), b.states.first()) else {
        return Ok(0.0);
    };
    let coarse = if sa.domain().n_max() <= sb.domain().n_max() {
        sa.basis().clone()
    } else {
        sb.basis().clone()
    };
    let vals = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(u, w)| Ok(u.truncate(&coarse)?.sub(&w.truncate(&coarse)?).norm_squared()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(time_integral(&a.times(), &vals).sqrt())
}

/// `||S_a - S_b||_{L^{q'}(Q)}` for two orbits on the same basis.
pub fn stress_distance(a: &TrajectoryRecord, pa: &StressParams, b: &TrajectoryRecord, pb: &StressParams) -> Result<f64> {
    require_states(a)?;
    require_states(b)?;
    let Some(first) = a.states.first() else {
        return Ok(0.0);
    };
    let t = Transform::new(first.basis(), DEFAULT_GRID_FACTOR)?;
    let qp = pa.dual_exponent();
    let vals = a
        .states
        .par_iter()
        .zip(&b.states)
        .map(|(u, w)| {
            let du = t.sym_gradient(u)?;
            let dw = t.sym_gradient(w)?;
            let s: f64 = (0..du.len())
                .map(|i| {
                    let fu = pa.viscosity(du.norm_sq_at(i));
                    let fw = pb.viscosity(dw.norm_sq_at(i));
                    let diff2: f64 = crate::spectral::sym_pairs(du.dim)
                        .iter()
                        .enumerate()
                        .map(|(c, &(x, y))| {
                            let e = fu * du.components[c][i] - fw * dw.components[c][i];
                            if x == y {
                                e * e
                            } else {
                                2.0 * e * e
                            }
                        })
                        .sum();
                    diff2.powf(0.5 * qp)
                })
                .sum();
            Ok(s * t.cell_volume())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(time_integral(&a.times(), &vals).powf(1.0 / qp))
}

// ---------------------------------------------------------------------------
// Cascade sweep

/// Problem data shared by every cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemTemplate {
    pub dim: usize,
    pub side_length: f64,
    pub q: f64,
    pub forcing: ForcingSpec,
    pub integrator: IntegratorConfig,
    pub solver: SolverConfig,
    pub grid_factor: f64,
    pub embedding_budget: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub n_max: Vec<usize>,
    pub epsilon: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl SweepAxes {
    pub fn validate(&self) -> Result<()> {
        if self.n_max.is_empty() || self.epsilon.is_empty() || self.kappa.is_empty() {
            return Err(Error::InvalidParameter {
                name: "axes",
                reason: "every sweep axis needs at least one value".into(),
            });
        }
        Ok(())
    }

    /// Copy with every axis sorted ascending and deduplicated.
    pub fn sorted(&self) -> Self {
        let mut n = self.n_max.clone();
        n.sort_unstable();
        n.dedup();
        let sort_f = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        Self {
            n_max: n,
            epsilon: sort_f(&self.epsilon),
            kappa: sort_f(&self.kappa),
        }
    }

    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &n_max in &self.n_max {
            for &epsilon in &self.epsilon {
                for &kappa in &self.kappa {
                    out.push(CellKey { n_max, epsilon, kappa });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub n_max: usize,
    pub epsilon: f64,
    pub kappa: f64,
}

/// Everything needed to rebuild and solve one cell.
#[derive(Debug, Clone)]
pub struct CellProblem {
    pub problem: PeriodicProblem,
    pub constants: EmbeddingConstants,
    pub solver: SolverConfig,
}

/// Builds the problem for one cell; constants are estimated on the cell's basis.
pub fn build_cell(template: &ProblemTemplate, key: &CellKey) -> Result<CellProblem> {
    let domain = TorusDomain::new(template.dim, template.side_length, key.n_max)?;
    let basis = Basis::new(domain);
    let params = StressParams::new(template.q, key.kappa)?;
    let reg = RegularizationParams::new(key.epsilon)?;
    let forcing = ForcingSignal::new(&basis, &template.forcing)?;
    let system = GalerkinSystem::with_grid_factor(&basis, params, reg, forcing, template.grid_factor)?;
    let constants = estimate_embedding_constants(&domain, template.q, template.embedding_budget, template.seed)?;
    let mut integrator = template.integrator.clone();
    integrator.store_states = true;
    Ok(CellProblem {
        problem: PeriodicProblem::new(system, integrator),
        constants,
        solver: template.solver.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub key: CellKey,
    pub orbit: Option<OrbitResult>,
    pub norms: Option<OrbitNorms>,
    pub error: Option<String>,
}

/// Serializable per-cell summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n_max: usize,
    pub epsilon: f64,
    pub kappa: f64,
    pub converged: bool,
    pub residual: Option<f64>,
    pub iterations: Option<usize>,
    pub ball_radius: Option<f64>,
    pub dissipation_q_integral: Option<f64>,
    pub dissipation_lap_integral: Option<f64>,
    pub dissipation_p_integral: Option<f64>,
    pub norms: Option<OrbitNorms>,
    pub error: Option<String>,
}

impl CellOutcome {
    pub fn summary(&self) -> CellSummary {
        let last = self.orbit.as_ref().and_then(|o| o.trajectory.samples.last());
        CellSummary {
            n_max: self.key.n_max,
            epsilon: self.key.epsilon,
            kappa: self.key.kappa,
            converged: self.orbit.as_ref().is_some_and(|o| o.converged),
            residual: self.orbit.as_ref().map(|o| o.residual),
            iterations: self.orbit.as_ref().map(|o| o.iterations),
            ball_radius: self.orbit.as_ref().map(|o| o.ball_radius_used),
            dissipation_q_integral: last.map(|s| s.integrals.dissipation_q),
            dissipation_lap_integral: last.map(|s| s.integrals.dissipation_lap),
            dissipation_p_integral: last.map(|s| s.integrals.dissipation_p),
            norms: self.norms,
            error: self.error.clone(),
        }
    }
}

/// Solves one cell; failures are recorded, never propagated.
pub fn solve_cell(template: &ProblemTemplate, key: &CellKey) -> CellOutcome {
    let run = || -> Result<(OrbitResult, OrbitNorms)> {
        let cell = build_cell(template, key)?;
        let orbit = find_periodic_orbit(&cell.problem, &cell.constants, &cell.solver)?;
        let norms = orbit_norms(
            &orbit.trajectory,
            cell.problem.system.params(),
            cell.problem.system.regularization(),
        )?;
        Ok((orbit, norms))
    };
    match run() {
        Ok((orbit, norms)) => CellOutcome {
            key: *key,
            orbit: Some(orbit),
            norms: Some(norms),
            error: None,
        },
        Err(e) => CellOutcome {
            key: *key,
            orbit: None,
            norms: None,
            error: Some(e.to_string()),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDistance {
    pub axis: String,
    pub from: CellKey,
    pub to: CellKey,
    pub l2l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeReport {
    pub axes: SweepAxes,
    pub cells: Vec<CellSummary>,
    /// Distances between successive levels along each axis (other axes fixed).
    pub distances: Vec<LevelDistance>,
}

/// Distances between successive levels of every axis among converged cells.
pub fn successive_distances(axes: &SweepAxes, outcomes: &[CellOutcome]) -> Vec<LevelDistance> {
    let find = |k: &CellKey| {
        outcomes
            .iter()
            .find(|o| o.key == *k)
            .and_then(|o| o.orbit.as_ref().filter(|r| r.converged))
    };
    let mut out = Vec::new();
    let mut push = |axis: &str, a: CellKey, b: CellKey| {
        if let (Some(x), Some(y)) = (find(&a), find(&b)) {
            if let Ok(d) = l2l2_distance(&x.trajectory, &y.trajectory) {
                out.push(LevelDistance {
                    axis: axis.to_string(),
                    from: a,
                    to: b,
                    l2l2: d,
                });
            }
        }
    };
    for &e in &axes.epsilon {
        for &k in &axes.kappa {
            for w in axes.n_max.windows(2) {
                push("n_max", CellKey { n_max: w[0], epsilon: e, kappa: k }, CellKey { n_max: w[1], epsilon: e, kappa: k });
            }
        }
    }
    for &n in &axes.n_max {
        for &k in &axes.kappa {
            // Refinement order: decreasing epsilon.
            for w in axes.epsilon.windows(2).rev() {
                push("epsilon", CellKey { n_max: n, epsilon: w[1], kappa: k }, CellKey { n_max: n, epsilon: w[0], kappa: k });
            }
        }
        for &e in &axes.epsilon {
            for w in axes.kappa.windows(2).rev() {
                push("kappa", CellKey { n_max: n, epsilon: e, kappa: w[1] }, CellKey { n_max: n, epsilon: e, kappa: w[0] });
            }
        }
    }
    out
}

/// Solves every cell of the sweep in parallel and assembles the report.
pub fn cascade_sweep(axes: &SweepAxes, template: &ProblemTemplate) -> Result<(CascadeReport, Vec<CellOutcome>)> {
    axes.validate()?;
    let axes = axes.sorted();
    let cells = axes.cells();
    let outcomes: Vec<CellOutcome> = cells.par_iter().map(|k| solve_cell(template, k)).collect();
    let distances = successive_distances(&axes, &outcomes);
    Ok((
        CascadeReport {
            cells: outcomes.iter().map(CellOutcome::summary).collect(),
            axes,
            distances,
        },
        outcomes,
    ))
}

// ---------------------------------------------------------------------------
// epsilon and kappa limits

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonLevel {
    pub epsilon: f64,
    pub norms: OrbitNorms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonScalingReport {
    /// Levels in decreasing `epsilon`.
    pub levels: Vec<EpsilonLevel>,
    /// Largest growth ratio `value(eps_{i+1}) / value(eps_i)` of each uniform
    /// quantity (`||Dv||_q`, `eps^{1/2}||grad v||`, `eps^{5/11}||Dv||_{11/5}`)
    /// as `eps` decreases.
    pub max_consecutive_ratio: [f64; 3],
    /// `max / min` over all levels of each uniform quantity.
    pub spread: [f64; 3],
    /// Common bound of the three quantities over all levels.
    pub common_bound: f64,
    pub holder_terms_decrease: bool,
    pub uniform: bool,
}

/// Uniform-in-`eps` bounds from a set of converged orbits (`>= 3` levels).
/// `ratio_tol` caps consecutive ratios of the uniform quantities.
pub fn epsilon_scaling_check(levels: &[EpsilonLevel], ratio_tol: f64) -> Result<EpsilonScalingReport> {
    if levels.len() < 3 {
        return Err(Error::InvalidParameter {
            name: "levels",
            reason: format!("need at least 3 epsilon levels, got {}", levels.len()),
        });
    }
    let mut levels = levels.to_vec();
    levels.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let pick = |n: &OrbitNorms| [n.dv_lq, n.eps_half_grad_l2, n.eps_p_dv];
    let mut max_ratio = [0.0f64; 3];
    let mut spread = [1.0f64; 3];
    for j in 0..3 {
        let vals: Vec<f64> = levels.iter().map(|l| pick(&l.norms)[j]).collect();
        for w in vals.windows(2) {
            let r = if w[0] > 0.0 {
                w[1] / w[0]
            } else if w[1] == 0.0 {
                1.0
            } else {
                f64::INFINITY
            };
            max_ratio[j] = max_ratio[j].max(r);
        }
        let mx = vals.iter().fold(0.0f64, |a, &b| a.max(b));
        let mn = vals.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        spread[j] = if mn > 0.0 { mx / mn } else { f64::INFINITY };
    }
    let common_bound = levels
        .iter()
        .flat_map(|l| pick(&l.norms))
        .fold(0.0f64, f64::max);
    let holder_terms_decrease = levels.windows(2).all(|w| {
        w[1].norms.holder_lap < w[0].norms.holder_lap && w[1].norms.holder_p < w[0].norms.holder_p
    });
    let uniform = max_ratio.iter().all(|&r| r <= ratio_tol) && common_bound.is_finite();
    Ok(EpsilonScalingReport {
        levels,
        max_consecutive_ratio: max_ratio,
        spread,
        common_bound,
        holder_terms_decrease,
        uniform,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaLevel {
    pub kappa: f64,
    pub stress_lqp: f64,
    pub stress_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaConvergenceReport {
    /// Levels in decreasing `kappa`.
    pub levels: Vec<KappaLevel>,
    /// `L2L2` distances between successive levels.
    pub distances: Vec<f64>,
    /// `L^{q'}` stress distances between successive levels.
    pub stress_distances: Vec<f64>,
    pub distances_decrease: bool,
    pub stress_distances_decrease: bool,
    pub stress_bound_holds: bool,
}

/// Convergence as `kappa -> 0` from orbits at `>= 3` levels with stored states.
pub fn kappa_convergence_check(orbits: &[(StressParams, TrajectoryRecord)]) -> Result<KappaConvergenceReport> {
    if orbits.len() < 3 {
        return Err(Error::InvalidParameter {
            name: "levels",
            reason: format!("need at least 3 kappa levels, got {}", orbits.len()),
        });
    }
    let mut sorted: Vec<&(StressParams, TrajectoryRecord)> = orbits.iter().collect();
    sorted.sort_by(|a, b| b.0.kappa().total_cmp(&a.0.kappa()));
    let mut levels = Vec::new();
    for (p, tr) in &sorted {
        let n = orbit_norms(tr, p, &RegularizationParams::none())?;
        levels.push(KappaLevel {
            kappa: p.kappa(),
            stress_lqp: n.stress_lqp,
            stress_bound: n.stress_bound,
        });
    }
    let mut distances = Vec::new();
    let mut stress_distances = Vec::new();
    for w in sorted.windows(2) {
        distances.push(l2l2_distance(&w[0].1, &w[1].1)?);
        stress_distances.push(stress_distance(&w[0].1, &w[0].0, &w[1].1, &w[1].0)?);
    }
    let strictly = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    Ok(KappaConvergenceReport {
        distances_decrease: strictly(&distances),
        stress_distances_decrease: strictly(&stress_distances),
        stress_bound_holds: levels.iter().all(|l| l.stress_lqp <= l.stress_bound * (1.0 + 1e-10)),
        levels,
        distances,
        stress_distances,
    })
}

// ---------------------------------------------------------------------------
// Extinction

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionReport {
    pub shutoff: f64,
    pub measured: f64,
    pub bound: f64,
    pub threshold: f64,
    pub k_bar: f64,
    pub alpha: f64,
    /// Least-squares slope of `||v||^{2-q}` after the shutoff.
    pub fitted_slope: f64,
    /// `-(2 - q) alpha`
    pub predicted_slope: f64,
    pub fit_r_squared: f64,
    pub fit_points: usize,
    /// From the shutoff to the earliest of extinction, the bound, and the end
    /// of the power-law regime.
    pub fit_window: [f64; 2],
    pub within_bound: bool,
    pub orbit_residual: f64,
}

/// Mean `|Dv|` below `REGIME_FACTOR * kappa^{1/2}` ends the extinction fit window.
pub const REGIME_FACTOR: f64 = 10.0;

/// First time `>= t_start` at which `norm <= threshold`, linearly
/// interpolated in `norm^{2-q}` between the bracketing entries.
pub fn first_crossing(times: &[f64], norms: &[f64], threshold: f64, q: f64, t_start: f64) -> Option<f64> {
    let e = 2.0 - q;
    let mut prev: Option<(f64, f64)> = None;
    for (&t, &n) in times.iter().zip(norms) {
        if t < t_start {
            continue;
        }
        if n <= threshold {
            return Some(match prev {
                None => t,
                Some((tp, np)) => {
                    let (up, u, ut) = (np.powf(e), n.max(0.0).powf(e), threshold.powf(e));
                    if up > u {
                        tp + (t - tp) * (up - ut) / (up - u)
                    } else {
                        t
                    }
                }
            });
        }
        prev = Some((t, n));
    }
    None
}

/// Least squares `y = a + b t`; returns `(b, R^2)`.
pub fn linear_fit(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in t.iter().zip(y) {
        sxy += (a - mt) * (b - my);
        sxx += (a - mt) * (a - mt);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, r2)
}

/// Extinction bound `t_bar + K-bar^{2-q} / (alpha (2 - q))`.
pub fn extinction_bound(shutoff: f64, k_bar: f64, alpha: f64, q: f64) -> f64 {
    shutoff + k_bar.powf(2.0 - q) / (alpha * (2.0 - q))
}

/// Finds the periodic orbit of a problem whose forcing shuts off at `t_bar`
/// and measures when it vanishes. `threshold_rel` scales `K-bar`.
pub fn extinction_experiment(
    problem: &PeriodicProblem,
    consts: &EmbeddingConstants,
    solver: &SolverConfig,
    threshold_rel: f64,
) -> Result<ExtinctionReport> {
    extinction_run(problem, consts, solver, threshold_rel).map(|r| r.report)
}

/// Extinction report together with the orbit it was measured on.
#[derive(Debug, Clone)]
pub struct ExtinctionRun {
    pub report: ExtinctionReport,
    pub orbit: OrbitResult,
    /// Integrator settings actually used (clamp and tolerance adjusted).
    pub integrator: IntegratorConfig,
}

/// [`extinction_experiment`], keeping the orbit.
pub fn extinction_run(
    problem: &PeriodicProblem,
    consts: &EmbeddingConstants,
    solver: &SolverConfig,
    threshold_rel: f64,
) -> Result<ExtinctionRun> {
    let params = problem.system.params();
    let q = params.q();
    if q >= 2.0 {
        return Err(Error::NoExtinction(q));
    }
    let forcing = problem.system.forcing();
    let shutoff = forcing
        .shutoff()
        .ok_or_else(|| Error::InvalidForcing("extinction requires a shutoff instant".into()))?;
    let k_bar = ball_radius(forcing.max_l2(), params, consts, BallVariant::KBar);
    let bound = extinction_bound(shutoff, k_bar, consts.alpha, q);
    if bound > problem.period() {
        return Err(Error::IncompatiblePeriod {
            period: problem.period(),
            required: bound,
        });
    }
    let threshold = threshold_rel * k_bar;
    let mut p = problem.clone();
    p.integrator.energy_monitor = true;
    let clamp = *p.integrator.extinction_clamp.get_or_insert(1e-13 * k_bar);
    // Below `abs_tol` the explicit pair settles on a noise floor of that size
    // for stiff modes; keep it well under the clamp so the clamp is reached.
    p.integrator.abs_tol = p.integrator.abs_tol.min(1e-3 * clamp);
    let orbit = find_periodic_orbit(&p, consts, solver)?;
    let steps = &orbit.trajectory.steps;
    let times: Vec<f64> = steps.iter().map(|s| s.t).collect();
    let norms: Vec<f64> = steps.iter().map(|s| s.terms.kinetic.sqrt()).collect();
    let measured = first_crossing(&times, &norms, threshold, q, shutoff).unwrap_or(f64::INFINITY);

    // Fit over the power-law regime: stop once the mean `|Dv|` falls below
    // `REGIME_FACTOR * kappa^{1/2}`, where the regularized stress turns linear.
    let volume = problem.basis().domain().volume();
    let floor = REGIME_FACTOR * params.kappa().sqrt();
    let regime_end = steps
        .iter()
        .find(|s| s.t > shutoff && (s.terms.dissipation_q / volume).powf(1.0 / q) < floor)
        .map_or(f64::INFINITY, |s| s.t);
    let window = [shutoff, measured.min(bound).min(regime_end)];
    let (ft, fy): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&norms)
        .filter(|(&t, &n)| t >= window[0] && t <= window[1] && n > threshold)
        .map(|(&t, &n)| (t, n.powf(2.0 - q)))
        .unzip();
    let (fitted_slope, fit_r_squared) = if ft.len() >= 2 { linear_fit(&ft, &fy) } else { (f64::NAN, f64::NAN) };
    let report = ExtinctionReport {
        shutoff,
        measured,
        bound,
        threshold,
        k_bar,
        alpha: consts.alpha,
        fitted_slope,
        predicted_slope: -(2.0 - q) * consts.alpha,
        fit_r_squared,
        fit_points: ft.len(),
        fit_window: window,
        within_bound: measured >= shutoff && measured <= bound,
        orbit_residual: orbit.residual,
    };
    Ok(ExtinctionRun {
        report,
        orbit,
        integrator: p.integrator,
    })
}

/// `||v||' = -alpha ||v||^{q-1}`: the energy decay law with equality.
struct Surrogate {
    alpha: f64,
    q: f64,
    symbol: [f64; 1],
}

impl SplitOde for Surrogate {
    fn dim(&self) -> usize {
        1
    }
    fn linear_symbol(&self) -> &[f64] {
        &self.symbol
    }
    fn nonlinear(&self, _t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = -self.alpha * y[0].max(0.0).powf(self.q - 1.0);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    pub measured: f64,
    pub exact: f64,
}

/// Integrates the scalar surrogate from `y0` and locates its extinction time;
/// the exact value is `y0^{2-q} / (alpha (2 - q))`.
pub fn surrogate_extinction(y0: f64, alpha: f64, q: f64, cfg: &IntegratorConfig) -> Result<SurrogateReport> {
    if q >= 2.0 {
        return Err(Error::NoExtinction(q));
    }
    let exact = y0.powf(2.0 - q) / (alpha * (2.0 - q));
    let ode = Surrogate { alpha, q, symbol: [0.0] };
    let mut y = [y0];
    let (mut times, mut norms) = (Vec::new(), Vec::new());
    integrator::solve(&ode, &mut y, 0.0, 1.5 * exact, cfg, |s| {
        times.push(s.t);
        norms.push(s.y[0]);
        Ok(())
    })?;
    // `y^{2-q}` is linear in t: extrapolate the last two entries that are
    // still well resolved relative to the absolute tolerance.
    let threshold = (1e-8 * y0).max(1e4 * cfg.abs_tol);
    let last = norms.iter().rposition(|&n| n > threshold);
    let measured = match last {
        Some(i) if i >= 1 && i + 1 < norms.len() => {
            let e = 2.0 - q;
            let (u0, u1) = (norms[i - 1].powf(e), norms[i].powf(e));
            let slope = (u1 - u0) / (times[i] - times[i - 1]);
            if slope < 0.0 {
                times[i] - u1 / slope
            } else {
                times[i + 1]
            }
        }
        _ => f64::INFINITY,
    };
    Ok(SurrogateReport { measured, exact })
}
