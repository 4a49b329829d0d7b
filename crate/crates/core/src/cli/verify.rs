//! `verify`: re-audits a finished run directory.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::diagnostics::{epsilon_scaling_check, interpolation_bound_check, verify_energy_inequality, EpsilonLevel};
use crate::error::Error;
use crate::forcing::ForcingSignal;
use crate::galerkin::GalerkinState;
use crate::integrator::{integrate, CumulativeIntegrals, StepEntry, TrajectoryRecord, TrajectorySample};
use crate::spectral::Basis;

use super::artifacts::*;
use super::commands::{CellFile, ExtinctionFile, CELL};
use super::config::{ExperimentConfig, SCHEMA_VERSION};
use super::{CliError, EXIT_CHECK_FAILED, EXIT_OK};

/// Relative slack allowed on `sup ||v|| <= K`.
pub const BALL_TOLERANCE: f64 = 1e-8;
/// Largest admissible growth of an `eps`-uniform quantity between levels.
pub const EPSILON_RATIO_TOLERANCE: f64 = 1.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub passed: bool,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyFile {
    pub schema_version: u32,
    pub command: String,
    pub passed: bool,
    pub checks: Vec<Verdict>,
}

fn verdict(check: String, passed: bool, detail: serde_json::Value) -> Verdict {
    Verdict { check, passed, detail }
}

/// Trapezoid integrals at every step entry, as samples.
fn cumulative_samples(steps: &[StepEntry], qp: f64) -> Vec<TrajectorySample> {
    let mut acc = CumulativeIntegrals::default();
    let mut out = Vec::with_capacity(steps.len());
    for (i, s) in steps.iter().enumerate() {
        if i > 0 {
            let (a, b) = (&steps[i - 1].terms, &s.terms);
            let tr = |x: f64, y: f64| 0.5 * (s.t - steps[i - 1].t) * (x + y);
            acc.dissipation_q += tr(a.dissipation_q, b.dissipation_q);
            acc.dissipation_lap += tr(a.dissipation_lap, b.dissipation_lap);
            acc.dissipation_p += tr(a.dissipation_p, b.dissipation_p);
            acc.power_in += tr(a.power_in, b.power_in);
            acc.forcing_dual += tr(a.forcing_l2.powf(qp), b.forcing_l2.powf(qp));
        }
        out.push(TrajectorySample {
            t: s.t,
            terms: s.terms,
            integrals: acc,
        });
    }
    out
}

fn same_bits(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits()
}

/// Checks one stored orbit (`orbit.json` + `trajectory.csv` under `prefix`).
fn verify_orbit(root: &Path, prefix: &str, cfg: &ExperimentConfig, checks: &mut Vec<Verdict>) -> Result<(), CliError> {
    let label = |name: &str| {
        if prefix.is_empty() {
            name.to_string()
        } else {
            format!("{prefix}{name}")
        }
    };
    let orbit: OrbitFile = read_json(&root.join(format!("{prefix}{ORBIT}")))?;
    let csv = std::fs::read_to_string(root.join(format!("{prefix}{TRAJECTORY}"))).map_err(Error::from)?;
    let rows = parse_trajectory_csv(&csv)?;
    if rows.len() < 2 {
        return Err(CliError::Input(format!("{prefix}{TRAJECTORY} holds {} rows; need at least 2", rows.len())));
    }
    let basis = Basis::new(cfg.domain()?);
    let forcing = ForcingSignal::new(&basis, &cfg.forcing)?;

    let steps = rows_to_steps(&rows, |t| forcing.l2_norm_at(t));
    let record = TrajectoryRecord {
        q: orbit.q,
        kappa: orbit.kappa,
        samples: cumulative_samples(&steps, orbit.constants.dual_exponent()),
        steps,
        ..Default::default()
    };
    let energy = verify_energy_inequality(&record, &orbit.constants);
    checks.push(verdict(label("energy_inequality"), energy.holds, serde_json::to_value(&energy)?));

    let sup = rows.iter().map(|r| r.kinetic.sqrt()).fold(0.0, f64::max);
    checks.push(verdict(
        label("ball_invariance"),
        sup <= orbit.ball_radius * (1.0 + BALL_TOLERANCE),
        json!({ "max_l2": sup, "radius": orbit.ball_radius }),
    ));

    checks.push(verdict(
        label("periodicity"),
        orbit.converged && orbit.residual <= orbit.tolerance,
        json!({ "residual": orbit.residual, "tolerance": orbit.tolerance }),
    ));

    // Re-integrate from the stored initial state: the CSV must be reproduced
    // bit for bit, and the states feed the interpolation check.
    let system = cfg.system()?;
    let initial = modes_to_field(&basis, &orbit.initial)?;
    let integ = crate::integrator::IntegratorConfig {
        store_states: true,
        energy_monitor: true,
        ..orbit.integrator.clone()
    };
    let (_, fresh) = integrate(&system, &GalerkinState::new(0.0, initial), orbit.period, &integ)?;
    let mismatch = if fresh.steps.len() != rows.len() {
        Some(0)
    } else {
        fresh.steps.iter().zip(&rows).position(|(s, r)| {
            let e = &s.terms;
            !(same_bits(s.t, r.t)
                && same_bits(e.kinetic, r.kinetic)
                && same_bits(e.dissipation_q, r.dissipation_q)
                && same_bits(e.dissipation_lap, r.dissipation_lap)
                && same_bits(e.dissipation_p, r.dissipation_p)
                && same_bits(e.power_in, r.power_in))
        })
    };
    checks.push(verdict(
        label("reproducible"),
        mismatch.is_none(),
        json!({ "rows": rows.len(), "recomputed_rows": fresh.steps.len(), "first_mismatch": mismatch }),
    ));

    let interp = interpolation_bound_check(&fresh, orbit.q)?;
    checks.push(verdict(label("interpolation"), interp.holds, serde_json::to_value(interp)?));
    Ok(())
}

pub fn verify(run: &Path) -> Result<i32, CliError> {
    let manifest: RunManifest = read_json(&run.join(MANIFEST))
        .map_err(|e| CliError::Input(format!("{}: missing or unreadable manifest: {e}", run.display())))?;
    check_artifacts(run, &manifest.artifacts).map_err(CliError::Input)?;
    let cfg = ExperimentConfig::load(&run.join(CONFIG))?;
    let mut checks = Vec::new();
    match manifest.command.as_str() {
        "solve-periodic" => verify_orbit(run, "", &cfg, &mut checks)?,
        "extinction" => {
            verify_orbit(run, "", &cfg, &mut checks)?;
            let ext: ExtinctionFile = read_json(&run.join(EXTINCTION))?;
            let r = ext.report;
            checks.push(verdict(
                "extinction_bound".into(),
                r.within_bound,
                json!({ "shutoff": r.shutoff, "measured": r.measured, "bound": r.bound }),
            ));
        }
        "sweep" => {
            let mut groups: BTreeMap<(usize, u64), Vec<EpsilonLevel>> = BTreeMap::new();
            for a in manifest.artifacts.iter().filter(|a| a.path.ends_with(&format!("/{CELL}"))) {
                let cell: CellFile = read_json(&run.join(&a.path))?;
                let prefix = a.path.trim_end_matches(CELL).to_string();
                let k = cell.key;
                if cell.summary.error.is_some() {
                    checks.push(verdict(
                        format!("{prefix}solved"),
                        false,
                        json!({ "error": cell.summary.error }),
                    ));
                    continue;
                }
                let mut cell_cfg = cfg.clone();
                cell_cfg.domain.n_max = k.n_max;
                cell_cfg.stress.kappa = k.kappa;
                cell_cfg.regularization.epsilon = k.epsilon;
                verify_orbit(run, &prefix, &cell_cfg, &mut checks)?;
                if let (true, Some(norms)) = (cell.summary.converged, cell.summary.norms) {
                    groups.entry((k.n_max, k.kappa.to_bits())).or_default().push(EpsilonLevel {
                        epsilon: k.epsilon,
                        norms,
                    });
                }
            }
            for ((n, kappa_bits), levels) in groups.into_iter().filter(|(_, l)| l.len() >= 3) {
                let r = epsilon_scaling_check(&levels, EPSILON_RATIO_TOLERANCE)?;
                checks.push(verdict(
                    format!("epsilon_scaling n_max={n} kappa={:e}", f64::from_bits(kappa_bits)),
                    r.uniform && r.holder_terms_decrease,
                    serde_json::to_value(&r)?,
                ));
            }
        }
        other => return Err(CliError::Input(format!("unknown command `{other}` in manifest"))),
    }
    let passed = checks.iter().all(|c| c.passed);
    let file = VerifyFile {
        schema_version: SCHEMA_VERSION,
        command: manifest.command.clone(),
        passed,
        checks,
    };
    std::fs::write(run.join(VERIFY), to_json(&file)?).map_err(Error::from)?;
    for c in &file.checks {
        println!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.check);
    }
    Ok(if passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}
