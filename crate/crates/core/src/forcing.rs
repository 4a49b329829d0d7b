//! Time-periodic body force, given directly by its projections `b_k = (b, omega^k)`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{in_half_space, Basis, DivFreeMode, SpectralField};

/// Scalar time profile multiplying a mode amplitude. `t` is the phase in `[0, T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeProfile {
    Constant,
    /// `sin(2 pi h t / T + phase)`.
    Sinusoid { harmonic: u32, phase: f64 },
    /// `sin^2(pi t / t_on)` on `[0, t_on]`, where `t_on` is the shutoff instant
    /// (or the period when there is none). Vanishes continuously at both ends.
    Bump,
    /// Smooth plateau on `[0, t_on]`: `sin^2` ramps of width `ramp * t_on` at
    /// both ends and `1` in between (`0 < ramp <= 1/2`).
    Plateau { ramp: f64 },
}

impl TimeProfile {
    fn value(&self, phase_t: f64, period: f64, on_window: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Sinusoid { harmonic, phase } => {
                (2.0 * std::f64::consts::PI * harmonic as f64 * phase_t / period + phase).sin()
            }
            TimeProfile::Bump => {
                if phase_t <= on_window {
                    (std::f64::consts::PI * phase_t / on_window).sin().powi(2)
                } else {
                    0.0
                }
            }
            TimeProfile::Plateau { ramp } => {
                let w = ramp * on_window;
                let edge = |s: f64| (0.5 * std::f64::consts::PI * s / w).sin().powi(2);
                if phase_t > on_window {
                    0.0
                } else if phase_t < w {
                    edge(phase_t)
                } else if phase_t > on_window - w {
                    edge(on_window - phase_t)
                } else {
                    1.0
                }
            }
        }
    }
}

/// One forced mode as written in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingMode {
    pub k: Vec<i32>,
    #[serde(default)]
    pub pol: u8,
    pub re: f64,
    pub im: f64,
    pub profile: TimeProfile,
}

/// Serializable description of a forcing signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSpec {
    pub period: f64,
    #[serde(default)]
    pub shutoff: Option<f64>,
    pub modes: Vec<ForcingMode>,
}

#[derive(Debug, Clone)]
struct Entry {
    index: usize,
    amplitude: Complex64,
    profile: TimeProfile,
}

/// `t -> b(t)` in the Galerkin space, periodic with period `T`.
#[derive(Debug, Clone)]
pub struct ForcingSignal {
    basis: Arc<Basis>,
    period: f64,
    shutoff: Option<f64>,
    shift: f64,
    entries: Vec<Entry>,
    max_l2: f64,
}

impl ForcingSignal {
    pub fn new(basis: &Arc<Basis>, spec: &ForcingSpec) -> Result<Self> {
        if !(spec.period.is_finite() && spec.period > 0.0) {
            return Err(Error::InvalidForcing(format!("period must be positive, got {}", spec.period)));
        }
        if let Some(tb) = spec.shutoff {
            if !(tb > 0.0 && tb < spec.period) {
                return Err(Error::InvalidForcing(format!(
                    "shutoff instant {tb} must lie in (0, T = {})",
                    spec.period
                )));
            }
        }
        let d = basis.domain().dim();
        let n = basis.domain().n_max() as i32;
        let mut entries = Vec::with_capacity(spec.modes.len());
        for m in &spec.modes {
            if m.k.len() != d {
                return Err(Error::InvalidForcing(format!("wavevector {:?} must have {d} components", m.k)));
            }
            if m.k.iter().any(|c| c.abs() > n) {
                return Err(Error::InvalidForcing(format!("wavevector {:?} exceeds n_max = {n}", m.k)));
            }
            if let TimeProfile::Plateau { ramp } = m.profile {
                if !(ramp > 0.0 && ramp <= 0.5) {
                    return Err(Error::InvalidForcing(format!("plateau ramp {ramp} must lie in (0, 1/2]")));
                }
            }
            if !(m.re.is_finite() && m.im.is_finite()) {
                return Err(Error::InvalidForcing("non-finite amplitude".into()));
            }
            let (k, amplitude) = if in_half_space(&m.k) {
                (m.k.clone(), Complex64::new(m.re, m.im))
            } else {
                (m.k.iter().map(|c| -c).collect(), Complex64::new(m.re, -m.im))
            };
            let mode = DivFreeMode::new(&k, m.pol).map_err(|e| Error::InvalidForcing(e.to_string()))?;
            let index = basis
                .index_of(&mode)
                .ok_or_else(|| Error::InvalidForcing(format!("mode {:?} not retained", m.k)))?;
            entries.push(Entry {
                index,
                amplitude,
                profile: m.profile,
            });
        }
        let mut signal = Self {
            basis: Arc::clone(basis),
            period: spec.period,
            shutoff: spec.shutoff,
            shift: 0.0,
            entries,
            max_l2: 0.0,
        };
        signal.max_l2 = signal.compute_max_l2();
        Ok(signal)
    }

    /// Zero force with period `T`.
    pub fn zero(basis: &Arc<Basis>, period: f64) -> Result<Self> {
        Self::new(
            basis,
            &ForcingSpec {
                period,
                shutoff: None,
                modes: Vec::new(),
            },
        )
    }

    /// Phase-shifted copy `t -> b(t + s)`.
    pub fn shifted(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.shift = (self.shift + s).rem_euclid(self.period);
        out
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn shutoff(&self) -> Option<f64> {
        self.shutoff
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.amplitude == Complex64::new(0.0, 0.0))
    }

    /// `max_{[0,T]} ||b(t)||_{L^2}`, cached at construction.
    pub fn max_l2(&self) -> f64 {
        self.max_l2
    }

    fn phase(&self, t: f64) -> f64 {
        (t + self.shift).rem_euclid(self.period)
    }

    fn coefficients_at(&self, t: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.basis.len()];
        let tau = self.phase(t);
        if let Some(tb) = self.shutoff {
            if tau > tb {
                return out;
            }
        }
        let on = self.shutoff.unwrap_or(self.period);
        for e in &self.entries {
            out[e.index] += e.amplitude * e.profile.value(tau, self.period, on);
        }
        out
    }

    /// `b(t)` projected onto the Galerkin space.
    pub fn evaluate(&self, t: f64) -> SpectralField {
        SpectralField::from_coefficients(&self.basis, self.coefficients_at(t))
            .expect("forcing coefficients match basis")
    }

    pub fn l2_norm_at(&self, t: f64) -> f64 {
        let sum: f64 = self.coefficients_at(t).iter().map(|c| c.norm_sqr()).sum();
        (2.0 * self.basis.domain().volume() * sum).sqrt()
    }

    fn compute_max_l2(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        const SAMPLES: usize = 2048;
        let h = self.period / SAMPLES as f64;
        let (mut best_t, mut best) = (0.0, 0.0);
        for i in 0..SAMPLES {
            let t = i as f64 * h;
            let v = self.l2_norm_at(t);
            if v > best {
                best = v;
                best_t = t;
            }
        }
        // Golden-section refinement around the best sample; the norm is
        // unimodal on this bracket for the supported profiles.
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (best_t - h, best_t + h);
        let clamp = |t: f64| {
            let mut t = t.clamp(0.0, self.period);
            if let Some(tb) = self.shutoff {
                t = t.min(tb);
            }
            t
        };
        for _ in 0..80 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if self.l2_norm_at(clamp(c)) > self.l2_norm_at(clamp(d)) {
                b = d;
            } else {
                a = c;
            }
        }
        best.max(self.l2_norm_at(clamp(0.5 * (a + b))))
    }
}
