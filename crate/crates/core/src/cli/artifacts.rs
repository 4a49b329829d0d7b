//! On-disk artifacts: orbit JSON, trajectory CSV, stored records, manifests.

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constants::EmbeddingConstants;
use crate::error::{Error, Result};
use crate::galerkin::EnergyTerms;
use crate::integrator::{IntegratorConfig, StepEntry, TrajectoryRecord, TrajectorySample};
use crate::periodic::{Method, OrbitResult};
use crate::spectral::{Basis, DivFreeMode, SpectralField};

use super::config::SCHEMA_VERSION;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.json";
pub const ORBIT: &str = "orbit.json";
pub const TRAJECTORY: &str = "trajectory.csv";
pub const RECORD: &str = "record.json";
pub const EXTINCTION: &str = "extinction.json";
pub const SWEEP: &str = "sweep.json";
pub const VERIFY: &str = "verify.json";

pub const CSV_HEADER: &str = "t,kinetic,dissipation_q,dissipation_lap,dissipation_p,power_in";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactEntry {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Collects files written into a run directory together with their digests.
#[derive(Debug, Default)]
pub struct ArtifactSet {
    pub entries: Vec<ArtifactEntry>,
}

impl ArtifactSet {
    pub fn write(&mut self, root: &Path, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        self.entries.push(entry(rel, bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, root: &Path, rel: &str, value: &T) -> Result<()> {
        self.write(root, rel, to_json(value)?.as_bytes())
    }
}

pub fn entry(rel: &str, bytes: &[u8]) -> ArtifactEntry {
    ArtifactEntry {
        path: rel.to_string(),
        sha256: sha256_hex(bytes),
        bytes: bytes.len() as u64,
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageStatus {
    pub name: String,
    pub status: String,
    #[serde(default)]
    pub detail: Option<String>,
}

impl StageStatus {
    pub fn new(name: &str, status: &str, detail: Option<String>) -> Self {
        Self {
            name: name.into(),
            status: status.into(),
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub code_version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub constants: Option<EmbeddingConstants>,
    pub wall_clock_seconds: f64,
    pub stages: Vec<StageStatus>,
    pub artifacts: Vec<ArtifactEntry>,
}

/// Digest problems found when re-reading a run directory.
pub fn check_artifacts(root: &Path, entries: &[ArtifactEntry]) -> std::result::Result<(), String> {
    for e in entries {
        let path = root.join(&e.path);
        let bytes = std::fs::read(&path).map_err(|err| format!("missing artifact {}: {err}", e.path))?;
        let got = sha256_hex(&bytes);
        if got != e.sha256 {
            return Err(format!("digest mismatch for {}: manifest {} file {got}", e.path, e.sha256));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeCoefficient {
    pub k: Vec<i32>,
    pub pol: u8,
    pub re: f64,
    pub im: f64,
}

pub fn field_to_modes(field: &SpectralField) -> Vec<ModeCoefficient> {
    field
        .basis()
        .modes()
        .iter()
        .zip(field.coefficients())
        .map(|(m, c)| ModeCoefficient {
            k: m.wavevector().to_vec(),
            pol: m.polarization(),
            re: c.re,
            im: c.im,
        })
        .collect()
}

pub fn modes_to_field(basis: &Arc<Basis>, modes: &[ModeCoefficient]) -> Result<SpectralField> {
    let mut f = SpectralField::zeros(basis);
    for m in modes {
        let mode = DivFreeMode::new(&m.k, m.pol)?;
        f.set_coefficient(&mode, Complex64::new(m.re, m.im))?;
    }
    Ok(f)
}

/// Public description of a computed orbit. Contains no timings, so equal
/// inputs give byte-identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitFile {
    pub schema_version: u32,
    pub dim: usize,
    pub side_length: f64,
    pub n_max: usize,
    pub q: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub period: f64,
    pub converged: bool,
    pub method: Method,
    /// `||v(T) - v(0)||_2`
    pub residual: f64,
    pub tolerance: f64,
    pub iterations: usize,
    pub ball_radius: f64,
    pub constants: EmbeddingConstants,
    pub integrator: IntegratorConfig,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub clamp_events: Vec<f64>,
    pub max_l2: f64,
    pub residual_history: Vec<f64>,
    /// Fourier coefficients of `v(0)`.
    pub initial: Vec<ModeCoefficient>,
}

impl OrbitFile {
    pub fn new(
        orbit: &OrbitResult,
        period: f64,
        epsilon: f64,
        constants: &EmbeddingConstants,
        integrator: &IntegratorConfig,
    ) -> Self {
        let domain = orbit.initial.domain();
        Self {
            schema_version: SCHEMA_VERSION,
            dim: domain.dim(),
            side_length: domain.side_length(),
            n_max: domain.n_max(),
            q: orbit.trajectory.q,
            kappa: orbit.trajectory.kappa,
            epsilon,
            period,
            converged: orbit.converged,
            method: orbit.method,
            residual: orbit.residual,
            tolerance: orbit.tolerance,
            iterations: orbit.iterations,
            ball_radius: orbit.ball_radius_used,
            constants: *constants,
            integrator: integrator.clone(),
            accepted_steps: orbit.trajectory.accepted,
            rejected_steps: orbit.trajectory.rejected,
            clamp_events: orbit.trajectory.clamp_events.clone(),
            max_l2: orbit.trajectory.max_l2(),
            residual_history: orbit.history.clone(),
            initial: field_to_modes(&orbit.initial),
        }
    }
}

/// One row per accepted step; 17 significant digits round-trip every double.
pub fn trajectory_csv(steps: &[StepEntry]) -> String {
    let mut out = String::with_capacity(128 * (steps.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in steps {
        let e = &s.terms;
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            s.t, e.kinetic, e.dissipation_q, e.dissipation_lap, e.dissipation_p, e.power_in
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub t: f64,
    pub kinetic: f64,
    pub dissipation_q: f64,
    pub dissipation_lap: f64,
    pub dissipation_p: f64,
    pub power_in: f64,
}

pub fn parse_trajectory_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::ShapeMismatch(format!("trajectory header must be `{CSV_HEADER}`")));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let v: Vec<f64> = l
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::ShapeMismatch(format!("trajectory line {}: {e}", i + 2)))?;
            if v.len() != 6 {
                return Err(Error::ShapeMismatch(format!(
                    "trajectory line {}: expected 6 columns, found {}",
                    i + 2,
                    v.len()
                )));
            }
            Ok(CsvRow {
                t: v[0],
                kinetic: v[1],
                dissipation_q: v[2],
                dissipation_lap: v[3],
                dissipation_p: v[4],
                power_in: v[5],
            })
        })
        .collect()
}

fn flat_coefficients(f: &SpectralField) -> Vec<f64> {
    f.coefficients().iter().flat_map(|c| [c.re, c.im]).collect()
}

fn from_flat(basis: &Arc<Basis>, v: &[f64]) -> Result<SpectralField> {
    let coeffs = v.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    SpectralField::from_coefficients(basis, coeffs)
}

/// Complete orbit, including sample states, for resuming sweeps. Fields are
/// stored as flat `[re, im, ...]` coefficients so reloading is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredOrbit {
    pub initial: Vec<f64>,
    pub initial_guess: Vec<f64>,
    pub residual: f64,
    pub tolerance: f64,
    pub iterations: usize,
    pub method: Method,
    pub converged: bool,
    pub ball_radius_used: f64,
    pub history: Vec<f64>,
    pub q: f64,
    pub kappa: f64,
    pub samples: Vec<TrajectorySample>,
    pub steps: Vec<StepEntry>,
    pub states: Vec<Vec<f64>>,
    pub accepted: usize,
    pub rejected: usize,
    pub clamp_events: Vec<f64>,
}

impl StoredOrbit {
    pub fn from_orbit(o: &OrbitResult) -> Self {
        let t = &o.trajectory;
        Self {
            initial: flat_coefficients(&o.initial),
            initial_guess: flat_coefficients(&o.initial_guess),
            residual: o.residual,
            tolerance: o.tolerance,
            iterations: o.iterations,
            method: o.method,
            converged: o.converged,
            ball_radius_used: o.ball_radius_used,
            history: o.history.clone(),
            q: t.q,
            kappa: t.kappa,
            samples: t.samples.clone(),
            steps: t.steps.clone(),
            states: t.states.iter().map(flat_coefficients).collect(),
            accepted: t.accepted,
            rejected: t.rejected,
            clamp_events: t.clamp_events.clone(),
        }
    }

    pub fn into_orbit(self, basis: &Arc<Basis>) -> Result<OrbitResult> {
        let states = self
            .states
            .iter()
            .map(|c| from_flat(basis, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(OrbitResult {
            initial: from_flat(basis, &self.initial)?,
            initial_guess: from_flat(basis, &self.initial_guess)?,
            residual: self.residual,
            tolerance: self.tolerance,
            iterations: self.iterations,
            method: self.method,
            converged: self.converged,
            ball_radius_used: self.ball_radius_used,
            history: self.history,
            trajectory: TrajectoryRecord {
                q: self.q,
                kappa: self.kappa,
                samples: self.samples,
                steps: self.steps,
                states,
                accepted: self.accepted,
                rejected: self.rejected,
                clamp_events: self.clamp_events,
            },
        })
    }
}

/// Step entries rebuilt from CSV rows; `forcing_l2` is supplied by the caller
/// and `stress_power` is not stored.
pub fn rows_to_steps(rows: &[CsvRow], forcing_l2: impl Fn(f64) -> f64) -> Vec<StepEntry> {
    rows.iter()
        .map(|r| StepEntry {
            t: r.t,
            terms: EnergyTerms {
                kinetic: r.kinetic,
                dissipation_q: r.dissipation_q,
                dissipation_lap: r.dissipation_lap,
                dissipation_p: r.dissipation_p,
                power_in: r.power_in,
                stress_power: 0.0,
                forcing_l2: forcing_l2(r.t),
            },
        })
        .collect()
}
