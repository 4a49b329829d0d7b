//! Adaptive time integration of the Galerkin ODE with energy monitoring.
//!
//! The stepper is a Lawson (integrating-factor) Dormand-Prince 5(4) pair:
//! the diagonal stiff symbol is propagated exactly and the remaining terms
//! are advanced by the embedded explicit pair. With a zero symbol it reduces
//! to the classical adaptive Dormand-Prince method.

use serde::{Deserialize, Serialize};

use crate::constants::EmbeddingConstants;
use crate::error::{Error, Result};
use crate::galerkin::{EnergyTerms, GalerkinState, GalerkinSystem};
use crate::spectral::SpectralField;

/// `y' = diag(lambda) y + N(t, y)` with `lambda <= 0`.
pub trait SplitOde {
    fn dim(&self) -> usize;
    fn linear_symbol(&self) -> &[f64];
    fn nonlinear(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<()>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Everything advanced by the explicit pair.
    ExplicitAdaptive,
    /// Stiff diagonal symbol integrated exactly.
    #[default]
    ImexStiff,
}

fn default_samples() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_dt: f64,
    pub min_dt: f64,
    pub scheme: Scheme,
    pub energy_monitor: bool,
    /// Number of equal sample intervals on `[t0, t1]`; steps land on every sample instant.
    pub samples: usize,
    /// Keep the state at every sample in the trajectory record.
    pub store_states: bool,
    /// States with `||v||_2` below this are set to exactly zero.
    pub extinction_clamp: Option<f64>,
    /// Permit `q < 11/5` with `kappa = 0`.
    pub allow_degenerate: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_dt: 1.0,
            min_dt: 1e-12,
            scheme: Scheme::ImexStiff,
            energy_monitor: true,
            samples: default_samples(),
            store_states: false,
            extinction_clamp: None,
            allow_degenerate: false,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                })
            }
        };
        pos("rel_tol", self.rel_tol)?;
        pos("abs_tol", self.abs_tol)?;
        pos("max_dt", self.max_dt)?;
        pos("min_dt", self.min_dt)?;
        if self.min_dt > self.max_dt {
            return Err(Error::InvalidParameter {
                name: "min_dt",
                reason: format!("min_dt = {} exceeds max_dt = {}", self.min_dt, self.max_dt),
            });
        }
        if self.samples == 0 {
            return Err(Error::InvalidParameter {
                name: "samples",
                reason: "need at least one sample interval".into(),
            });
        }
        if let Some(c) = self.extinction_clamp {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "extinction_clamp",
                    reason: format!("threshold must be nonnegative, got {c}"),
                });
            }
        }
        Ok(())
    }

    /// Copy with both tolerances scaled by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            rel_tol: self.rel_tol * factor,
            abs_tol: self.abs_tol * factor,
            ..self.clone()
        }
    }
}

/// Reported to the observer at `t0` and after every accepted step.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo<'a> {
    pub t: f64,
    pub y: &'a [f64],
    /// Index of the sample instant reached by this step, if any.
    pub sample: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub clamp_events: Vec<f64>,
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B_HAT: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Stepper<'a, O: SplitOde + ?Sized> {
    ode: &'a O,
    symbol: Vec<f64>,
    explicit: bool,
    k: Vec<Vec<f64>>,
    stage: Vec<f64>,
    y_new: Vec<f64>,
    err: Vec<f64>,
}

impl<'a, O: SplitOde + ?Sized> Stepper<'a, O> {
    fn new(ode: &'a O, scheme: Scheme) -> Self {
        let n = ode.dim();
        let explicit = scheme == Scheme::ExplicitAdaptive;
        Self {
            ode,
            symbol: ode.linear_symbol().to_vec(),
            explicit,
            k: vec![vec![0.0; n]; 7],
            stage: vec![0.0; n],
            y_new: vec![0.0; n],
            err: vec![0.0; n],
        }
    }

    /// Nonlinear part seen by the explicit pair.
    fn eval(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        self.ode.nonlinear(t, y, out)?;
        if self.explicit {
            for ((o, l), yi) in out.iter_mut().zip(&self.symbol).zip(y) {
                *o += l * yi;
            }
        }
        Ok(())
    }

    fn factor(&self, i: usize, tau: f64) -> f64 {
        if self.explicit || tau == 0.0 {
            1.0
        } else {
            (self.symbol[i] * tau).exp()
        }
    }

    /// One trial step from `(t, y)` with `k[0] = N(t, y)` already set.
    /// Fills `y_new`, `err` and `k[6] = N(t + h, y_new)`.
    fn attempt(&mut self, t: f64, y: &[f64], h: f64) -> Result<()> {
        let n = y.len();
        for s in 1..7 {
            let mut stage = std::mem::take(&mut self.stage);
            for i in 0..n {
                let mut acc = self.factor(i, C[s] * h) * y[i];
                for j in 0..s {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += h * a * self.factor(i, (C[s] - C[j]) * h) * self.k[j][i];
                    }
                }
                stage[i] = acc;
            }
            let mut ks = std::mem::take(&mut self.k[s]);
            let res = self.eval(t + C[s] * h, &stage, &mut ks);
            self.k[s] = ks;
            if s == 6 {
                self.y_new.copy_from_slice(&stage);
            }
            self.stage = stage;
            res?;
        }
        for i in 0..n {
            let mut e = 0.0;
            for s in 0..7 {
                let w = B[s] - B_HAT[s];
                if w != 0.0 {
                    e += w * self.factor(i, (1.0 - C[s]) * h) * self.k[s][i];
                }
            }
            self.err[i] = h * e;
        }
        Ok(())
    }
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], cfg: &IntegratorConfig) -> f64 {
    if err.is_empty() {
        return 0.0;
    }
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / err.len() as f64).sqrt()
}

/// Integrates `ode` from `t0` to `t1`, overwriting `y`. Every sample instant
/// `t0 + j (t1 - t0) / samples` is hit exactly by an accepted step.
pub fn solve<O: SplitOde + ?Sized>(
    ode: &O,
    y: &mut [f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    mut observer: impl FnMut(StepInfo<'_>) -> Result<()>,
) -> Result<SolveStats> {
    cfg.validate()?;
    if !(t1 > t0) {
        return Err(Error::InvalidParameter {
            name: "t1",
            reason: format!("end time {t1} must exceed start time {t0}"),
        });
    }
    if y.len() != ode.dim() || ode.linear_symbol().len() != ode.dim() {
        return Err(Error::ShapeMismatch(format!(
            "state has {} entries, system expects {}",
            y.len(),
            ode.dim()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state"));
    }
    let mut stats = SolveStats::default();
    observer(StepInfo {
        t: t0,
        y,
        sample: Some(0),
    })?;

    let mut stepper = Stepper::new(ode, cfg.scheme);
    let mut k0 = std::mem::take(&mut stepper.k[0]);
    stepper.eval(t0, y, &mut k0)?;
    stepper.k[0] = k0;

    let span = t1 - t0;
    let sample_time = |j: usize| {
        if j == cfg.samples {
            t1
        } else {
            t0 + span * j as f64 / cfg.samples as f64
        }
    };
    let mut next_sample = 1;
    let mut t = t0;
    let mut h = (span / cfg.samples as f64).min(cfg.max_dt);

    while next_sample <= cfg.samples {
        let target = sample_time(next_sample);
        let remaining = target - t;
        let lands = h >= remaining * (1.0 - 1e-12);
        let h_try = if lands { remaining } else { h };
        if h_try < cfg.min_dt && !lands {
            return Err(Error::StepUnderflow {
                t,
                dt: h_try,
                min_dt: cfg.min_dt,
            });
        }
        stepper.attempt(t, y, h_try)?;
        let err = error_norm(&stepper.err, y, &stepper.y_new, cfg);
        let finite = err.is_finite() && stepper.y_new.iter().all(|v| v.is_finite());
        if finite && err <= 1.0 {
            stats.accepted += 1;
            t = if lands { target } else { t + h_try };
            y.copy_from_slice(&stepper.y_new);
            stepper.k.swap(0, 6);
            if let Some(thr) = cfg.extinction_clamp {
                let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 && norm < thr {
                    y.iter_mut().for_each(|v| *v = 0.0);
                    stats.clamp_events.push(t);
                    log::debug!("extinction clamp at t = {t:e} (||v|| = {norm:e})");
                    let mut k0 = std::mem::take(&mut stepper.k[0]);
                    let res = stepper.eval(t, y, &mut k0);
                    stepper.k[0] = k0;
                    res?;
                }
            }
            let sample = if lands {
                next_sample += 1;
                Some(next_sample - 1)
            } else {
                None
            };
            observer(StepInfo { t, y, sample })?;
            // A step truncated to hit a sample says little about the scale; keep `h`.
            if !lands || h_try >= h * (1.0 - 1e-12) {
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = (h_try * fac).min(cfg.max_dt);
            }
        } else {
            stats.rejected += 1;
            let fac = if finite { (0.9 * err.powf(-0.2)).clamp(0.2, 1.0) } else { 0.25 };
            h = h_try * fac;
            if h < cfg.min_dt {
                if !finite {
                    return Err(Error::NonFinite("integrator state"));
                }
                return Err(Error::StepUnderflow {
                    t,
                    dt: h,
                    min_dt: cfg.min_dt,
                });
            }
        }
    }
    Ok(stats)
}

/// Time integrals `int_0^t` accumulated by the trapezoid rule over accepted steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CumulativeIntegrals {
    pub dissipation_q: f64,
    pub dissipation_lap: f64,
    pub dissipation_p: f64,
    pub stress_power: f64,
    pub power_in: f64,
    /// `int ||b||_2^{q'}`
    pub forcing_dual: f64,
}

impl CumulativeIntegrals {
    fn add_trapezoid(&mut self, a: &EnergyTerms, b: &EnergyTerms, dt: f64, qp: f64) {
        let tr = |x: f64, y: f64| 0.5 * dt * (x + y);
        self.dissipation_q += tr(a.dissipation_q, b.dissipation_q);
        self.dissipation_lap += tr(a.dissipation_lap, b.dissipation_lap);
        self.dissipation_p += tr(a.dissipation_p, b.dissipation_p);
        self.stress_power += tr(a.stress_power, b.stress_power);
        self.power_in += tr(a.power_in, b.power_in);
        self.forcing_dual += tr(a.forcing_l2.powf(qp), b.forcing_l2.powf(qp));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEntry {
    pub t: f64,
    pub terms: EnergyTerms,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub terms: EnergyTerms,
    pub integrals: CumulativeIntegrals,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub q: f64,
    pub kappa: f64,
    pub samples: Vec<TrajectorySample>,
    /// One entry per accepted step (and the initial instant) when energy monitoring is on.
    pub steps: Vec<StepEntry>,
    /// States at the sample instants when requested.
    pub states: Vec<SpectralField>,
    pub accepted: usize,
    pub rejected: usize,
    pub clamp_events: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn max_l2(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.terms.kinetic.sqrt())
            .fold(0.0, f64::max)
    }
}

fn check_degenerate(system: &GalerkinSystem, cfg: &IntegratorConfig) -> Result<()> {
    if system.degenerate_warning() && !cfg.allow_degenerate {
        return Err(Error::DegenerateRheology { q: system.params().q() });
    }
    Ok(())
}

/// State at `t1` without any bookkeeping.
pub fn advance(system: &GalerkinSystem, state0: &GalerkinState, t1: f64, cfg: &IntegratorConfig) -> Result<GalerkinState> {
    check_degenerate(system, cfg)?;
    let mut y = state0.field.to_coords();
    solve(system, &mut y, state0.t, t1, cfg, |_| Ok(()))?;
    Ok(GalerkinState::new(t1, SpectralField::from_coords(system.basis(), &y)?))
}

/// Integrates from `state0` to `t1` and records energy functionals.
pub fn integrate(
    system: &GalerkinSystem,
    state0: &GalerkinState,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<(GalerkinState, TrajectoryRecord)> {
    check_degenerate(system, cfg)?;
    let basis = system.basis().clone();
    let qp = system.params().dual_exponent();
    let mut record = TrajectoryRecord {
        q: system.params().q(),
        kappa: system.params().kappa(),
        ..Default::default()
    };
    let mut integrals = CumulativeIntegrals::default();
    let mut prev: Option<StepEntry> = None;
    let mut y = state0.field.to_coords();
    let stats = solve(system, &mut y, state0.t, t1, cfg, |info| {
        let field = SpectralField::from_coords(&basis, info.y)?;
        let terms = system.energy_terms(&GalerkinState::new(info.t, field.clone()))?;
        let entry = StepEntry { t: info.t, terms };
        if let Some(p) = prev {
            integrals.add_trapezoid(&p.terms, &terms, info.t - p.t, qp);
        }
        prev = Some(entry);
        if cfg.energy_monitor {
            record.steps.push(entry);
        }
        if info.sample.is_some() {
            record.samples.push(TrajectorySample {
                t: info.t,
                terms,
                integrals,
            });
            if cfg.store_states {
                record.states.push(field);
            }
        }
        Ok(())
    })?;
    record.accepted = stats.accepted;
    record.rejected = stats.rejected;
    record.clamp_events = stats.clamp_events;
    let field = SpectralField::from_coords(&basis, &y)?;
    Ok((GalerkinState::new(t1, field), record))
}

/// Outcome of a one-step energy-inequality check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyCheck {
    pub holds: bool,
    /// `rhs - lhs`; nonnegative when the inequality holds.
    pub slack: f64,
}

/// Checks
/// `||v(t2)||^2 - ||v(t1)||^2 + C1 int ||Dv||_q^q + int eps(||grad v||^2 + ||Dv||_{11/5}^{11/5})
///  <= C2 int ||b||^{q'} + c2_kappa kappa^{q/2} (t2 - t1)`
/// between two consecutive entries, with trapezoid integrals.
pub fn check_energy_step(a: &StepEntry, b: &StepEntry, consts: &EmbeddingConstants, kappa: f64) -> EnergyCheck {
    let dt = b.t - a.t;
    let qp = consts.dual_exponent();
    let tr = |x: f64, y: f64| 0.5 * dt * (x + y);
    let lhs = b.terms.kinetic - a.terms.kinetic
        + consts.c1 * tr(a.terms.dissipation_q, b.terms.dissipation_q)
        + tr(a.terms.dissipation_lap, b.terms.dissipation_lap)
        + tr(a.terms.dissipation_p, b.terms.dissipation_p);
    let rhs = consts.c2 * tr(a.terms.forcing_l2.powf(qp), b.terms.forcing_l2.powf(qp))
        + consts.c2_kappa * kappa.powf(0.5 * consts.q) * dt;
    let slack = rhs - lhs;
    let rounding = 64.0 * f64::EPSILON * (a.terms.kinetic + b.terms.kinetic);
    EnergyCheck {
        holds: slack >= -rounding,
        slack,
    }
}
