//! `solve-periodic`, `extinction` and `sweep`.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::EmbeddingConstants;
use crate::diagnostics::{
    build_cell, extinction_run, orbit_norms, successive_distances, CascadeReport, CellKey, CellOutcome, CellSummary,
    ExtinctionReport, ProblemTemplate,
};
use crate::error::{Error, Result};
use crate::integrator::IntegratorConfig;
use crate::periodic::{find_periodic_orbit, OrbitResult};
use crate::spectral::{Basis, TorusDomain};

use super::artifacts::*;
use super::config::{ExperimentConfig, SCHEMA_VERSION};
use super::{CliError, EXIT_CHECK_FAILED, EXIT_NOT_CONVERGED, EXIT_OK};

fn manifest(
    command: &str,
    cfg: &ExperimentConfig,
    constants: Option<EmbeddingConstants>,
    clock: Instant,
    stages: Vec<StageStatus>,
    artifacts: Vec<ArtifactEntry>,
) -> RunManifest {
    RunManifest {
        schema_version: SCHEMA_VERSION,
        command: command.into(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: sha256_hex(cfg.canonical_json().as_bytes()),
        seed: cfg.seed,
        constants,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        stages,
        artifacts,
    }
}

fn write_manifest(out: &Path, m: &RunManifest) -> Result<()> {
    std::fs::write(out.join(MANIFEST), to_json(m)?)?;
    Ok(())
}

/// Writes `orbit.json` and `trajectory.csv` under `prefix`.
fn write_orbit(
    out: &Path,
    prefix: &str,
    orbit: &OrbitResult,
    period: f64,
    epsilon: f64,
    constants: &EmbeddingConstants,
    integrator: &IntegratorConfig,
    set: &mut ArtifactSet,
) -> Result<()> {
    let file = OrbitFile::new(orbit, period, epsilon, constants, integrator);
    set.write_json(out, &format!("{prefix}{ORBIT}"), &file)?;
    set.write(out, &format!("{prefix}{TRAJECTORY}"), trajectory_csv(&orbit.trajectory.steps).as_bytes())
}

fn converged_stage(orbit: &OrbitResult) -> StageStatus {
    let detail = format!("residual {:e}, tolerance {:e}", orbit.residual, orbit.tolerance);
    StageStatus::new("periodic_orbit", if orbit.converged { "converged" } else { "not_converged" }, Some(detail))
}

pub fn solve_periodic(cfg: &ExperimentConfig, out: &Path) -> std::result::Result<i32, CliError> {
    let clock = Instant::now();
    let problem = cfg.problem()?;
    let constants = cfg.constants()?;
    let orbit = find_periodic_orbit(&problem, &constants, &cfg.solver())?;
    std::fs::create_dir_all(out).map_err(Error::from)?;
    let mut set = ArtifactSet::default();
    set.write(out, CONFIG, cfg.canonical_json().as_bytes())?;
    write_orbit(
        out,
        "",
        &orbit,
        cfg.forcing.period,
        cfg.regularization.epsilon,
        &constants,
        &problem.integrator,
        &mut set,
    )?;
    let stages = vec![
        StageStatus::new("embedding_constants", "done", Some(format!("c_emb {:e}", constants.c_emb))),
        converged_stage(&orbit),
    ];
    write_manifest(out, &manifest("solve-periodic", cfg, Some(constants), clock, stages, set.entries))?;
    if orbit.converged {
        println!(
            "converged: residual {:e} <= {:e} after {} evaluations ({:?})",
            orbit.residual, orbit.tolerance, orbit.iterations, orbit.method
        );
        Ok(EXIT_OK)
    } else {
        eprintln!("not converged: best residual {:e} > tolerance {:e}", orbit.residual, orbit.tolerance);
        Ok(EXIT_NOT_CONVERGED)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtinctionFile {
    pub schema_version: u32,
    pub report: ExtinctionReport,
}

pub fn extinction(cfg: &ExperimentConfig, out: &Path) -> std::result::Result<i32, CliError> {
    let clock = Instant::now();
    if cfg.stress.q >= 2.0 {
        return Err(Error::NoExtinction(cfg.stress.q).into());
    }
    let problem = cfg.problem()?;
    let constants = cfg.constants()?;
    let run = extinction_run(&problem, &constants, &cfg.solver(), cfg.extinction.threshold_rel)?;
    std::fs::create_dir_all(out).map_err(Error::from)?;
    let mut set = ArtifactSet::default();
    set.write(out, CONFIG, cfg.canonical_json().as_bytes())?;
    write_orbit(
        out,
        "",
        &run.orbit,
        cfg.forcing.period,
        cfg.regularization.epsilon,
        &constants,
        &run.integrator,
        &mut set,
    )?;
    let r = &run.report;
    set.write_json(
        out,
        EXTINCTION,
        &ExtinctionFile {
            schema_version: SCHEMA_VERSION,
            report: r.clone(),
        },
    )?;
    let stages = vec![
        StageStatus::new("embedding_constants", "done", Some(format!("c_emb {:e}", constants.c_emb))),
        converged_stage(&run.orbit),
        StageStatus::new(
            "extinction",
            if r.within_bound { "within_bound" } else { "bound_violated" },
            Some(format!("t_meas {} bound {} fit R^2 {}", r.measured, r.bound, r.fit_r_squared)),
        ),
    ];
    write_manifest(out, &manifest("extinction", cfg, Some(constants), clock, stages, set.entries))?;
    println!(
        "shutoff {} <= measured {} <= bound {}: {}",
        r.shutoff, r.measured, r.bound, r.within_bound
    );
    Ok(if r.within_bound { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// Everything a cell result depends on; its digest names the cell directory.
#[derive(Serialize)]
struct CellInput<'a> {
    template: &'a ProblemTemplate,
    key: &'a CellKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellFile {
    pub digest: String,
    pub key: CellKey,
    pub summary: CellSummary,
    /// Files of this cell other than `cell.json`.
    pub files: Vec<ArtifactEntry>,
}

pub const CELL: &str = "cell.json";

pub fn cell_digest(template: &ProblemTemplate, key: &CellKey) -> String {
    let json = serde_json::to_string(&CellInput { template, key }).expect("cell input serializes");
    sha256_hex(json.as_bytes())
}

pub fn cell_prefix(digest: &str) -> String {
    format!("cells/{}/", &digest[..16])
}

fn cell_basis(template: &ProblemTemplate, key: &CellKey) -> Result<std::sync::Arc<Basis>> {
    Ok(Basis::new(TorusDomain::new(template.dim, template.side_length, key.n_max)?))
}

/// A finished cell whose files are intact and whose digest matches.
fn resume_cell(out: &Path, template: &ProblemTemplate, key: &CellKey, digest: &str) -> Option<(CellOutcome, Vec<ArtifactEntry>)> {
    let prefix = cell_prefix(digest);
    let cell_bytes = std::fs::read(out.join(format!("{prefix}{CELL}"))).ok()?;
    let cell: CellFile = serde_json::from_slice(&cell_bytes).ok()?;
    if cell.digest != digest || cell.summary.error.is_some() || check_artifacts(out, &cell.files).is_err() {
        return None;
    }
    let stored: StoredOrbit = read_json(&out.join(format!("{prefix}{RECORD}"))).ok()?;
    let orbit = stored.into_orbit(&cell_basis(template, key).ok()?).ok()?;
    let mut entries = cell.files.clone();
    entries.push(entry(&format!("{prefix}{CELL}"), &cell_bytes));
    Some((
        CellOutcome {
            key: *key,
            orbit: Some(orbit),
            norms: cell.summary.norms,
            error: None,
        },
        entries,
    ))
}

fn solve_and_write(out: &Path, template: &ProblemTemplate, key: &CellKey, digest: &str) -> Result<(CellOutcome, Vec<ArtifactEntry>)> {
    let prefix = cell_prefix(digest);
    let mut set = ArtifactSet::default();
    let solved = (|| -> Result<_> {
        let cell = build_cell(template, key)?;
        let orbit = find_periodic_orbit(&cell.problem, &cell.constants, &cell.solver)?;
        let norms = orbit_norms(
            &orbit.trajectory,
            cell.problem.system.params(),
            cell.problem.system.regularization(),
        )?;
        Ok((orbit, norms, cell.constants))
    })();
    let outcome = match solved {
        Ok((orbit, norms, constants)) => {
            write_orbit(
                out,
                &prefix,
                &orbit,
                template.forcing.period,
                key.epsilon,
                &constants,
                &template.integrator,
                &mut set,
            )?;
            set.write_json(out, &format!("{prefix}{RECORD}"), &StoredOrbit::from_orbit(&orbit))?;
            CellOutcome {
                key: *key,
                orbit: Some(orbit),
                norms: Some(norms),
                error: None,
            }
        }
        Err(e) => CellOutcome {
            key: *key,
            orbit: None,
            norms: None,
            error: Some(e.to_string()),
        },
    };
    let cell = CellFile {
        digest: digest.into(),
        key: *key,
        summary: outcome.summary(),
        files: set.entries.clone(),
    };
    // Written last: its presence marks the cell as finished.
    set.write_json(out, &format!("{prefix}{CELL}"), &cell)?;
    Ok((outcome, set.entries))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub schema_version: u32,
    pub report: CascadeReport,
}

pub fn sweep(cfg: &ExperimentConfig, out: &Path) -> std::result::Result<i32, CliError> {
    let clock = Instant::now();
    let axes = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Input("sweep requires a `sweep` section with n_max, epsilon and kappa axes".into()))?
        .sorted();
    let template = cfg.template();
    std::fs::create_dir_all(out).map_err(Error::from)?;
    let cells = axes.cells();
    let results: Vec<(CellOutcome, Vec<ArtifactEntry>, bool)> = cells
        .par_iter()
        .map(|key| {
            let digest = cell_digest(&template, key);
            match resume_cell(out, &template, key, &digest) {
                Some((o, e)) => Ok((o, e, true)),
                None => solve_and_write(out, &template, key, &digest).map(|(o, e)| (o, e, false)),
            }
        })
        .collect::<Result<_>>()?;
    let mut set = ArtifactSet::default();
    set.write(out, CONFIG, cfg.canonical_json().as_bytes())?;
    let mut stages = Vec::new();
    for (o, entries, resumed) in &results {
        set.entries.extend(entries.iter().cloned());
        let k = o.key;
        let status = match (&o.error, resumed, o.orbit.as_ref().is_some_and(|r| r.converged)) {
            (Some(_), _, _) => "failed",
            (None, true, _) => "resumed",
            (None, false, true) => "converged",
            (None, false, false) => "not_converged",
        };
        stages.push(StageStatus::new(
            &format!("cell n_max={} epsilon={:e} kappa={:e}", k.n_max, k.epsilon, k.kappa),
            status,
            o.error.clone(),
        ));
    }
    let outcomes: Vec<CellOutcome> = results.into_iter().map(|(o, _, _)| o).collect();
    let report = CascadeReport {
        cells: outcomes.iter().map(CellOutcome::summary).collect(),
        distances: successive_distances(&axes, &outcomes),
        axes,
    };
    set.write_json(
        out,
        SWEEP,
        &SweepFile {
            schema_version: SCHEMA_VERSION,
            report: report.clone(),
        },
    )?;
    write_manifest(out, &manifest("sweep", cfg, None, clock, stages, set.entries))?;
    let failed = report.cells.iter().filter(|c| !c.converged).count();
    println!("{} cells, {} not converged", report.cells.len(), failed);
    Ok(if failed == 0 { EXIT_OK } else { EXIT_NOT_CONVERGED })
}
