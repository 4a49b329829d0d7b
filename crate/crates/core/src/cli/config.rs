//! Experiment configuration files (schema version 1).

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constants::EmbeddingConstants;
use crate::constitutive::{RegularizationParams, StressParams};
use crate::diagnostics::{estimate_embedding_constants, ProblemTemplate, SweepAxes};
use crate::error::Error;
use crate::forcing::{ForcingSignal, ForcingSpec};
use crate::galerkin::GalerkinSystem;
use crate::integrator::IntegratorConfig;
use crate::periodic::{PeriodicProblem, SolverConfig};
use crate::spectral::{grid_points, Basis, TorusDomain, DEFAULT_GRID_FACTOR};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub dim: usize,
    pub side_length: f64,
    pub n_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressConfig {
    pub q: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationConfig {
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtinctionConfig {
    /// Extinction threshold relative to the radius `K_bar`.
    pub threshold_rel: f64,
}

impl Default for ExtinctionConfig {
    fn default() -> Self {
        Self { threshold_rel: 1e-10 }
    }
}

/// A complete experiment. Physical parameters (`q`, `kappa`, `epsilon`, the
/// period) have no defaults; numerical settings do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub domain: DomainConfig,
    pub stress: StressConfig,
    pub regularization: RegularizationConfig,
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    /// `solver.seed` is replaced by the top-level `seed`.
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_grid_factor")]
    pub grid_factor: f64,
    #[serde(default = "default_budget")]
    pub embedding_budget: usize,
    #[serde(default)]
    pub sweep: Option<SweepAxes>,
    #[serde(default)]
    pub extinction: ExtinctionConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_grid_factor() -> f64 {
    DEFAULT_GRID_FACTOR
}

fn default_budget() -> usize {
    200
}

/// Parse or validation failure, located in the source text when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path.display())?;
        if let Some(l) = self.line {
            write!(f, ":{l}")?;
            if let Some(c) = self.column {
                write!(f, ":{c}")?;
            }
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line of the first occurrence of `"key"` used as an object key.
fn key_line(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().enumerate().find_map(|(i, l)| {
        let pos = l.find(&needle)?;
        l[pos + needle.len()..].trim_start().starts_with(':').then_some(i + 1)
    })
}

impl ExperimentConfig {
    /// Reads, parses and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: None,
            column: None,
            message: format!("cannot read configuration: {e}"),
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: Some(e.line()),
            column: Some(e.column()),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|(key, message)| ConfigError {
            path: path.to_path_buf(),
            line: key.and_then(|k| key_line(text, k)),
            column: None,
            message,
        })?;
        Ok(cfg)
    }

    /// Checks every invariant of the referenced types; on failure returns the
    /// offending key and a message naming the violated bound.
    pub fn validate(&self) -> Result<(), (Option<&'static str>, String)> {
        let located = |e: Error| -> (Option<&'static str>, String) {
            let key = match &e {
                Error::InvalidParameter { name, .. } => Some(*name),
                Error::InvalidDomain(_) => Some("domain"),
                Error::GridTooSmall { .. } => Some("grid_factor"),
                Error::InvalidForcing(_) => Some("forcing"),
                Error::BudgetTooSmall(_) => Some("embedding_budget"),
                _ => None,
            };
            (key, e.to_string())
        };
        if self.schema_version != SCHEMA_VERSION {
            return Err((
                Some("schema_version"),
                format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        let domain = self.domain().map_err(located)?;
        self.params().map_err(located)?;
        self.regularization().map_err(located)?;
        self.integrator.validate().map_err(located)?;
        let basis = Basis::new(domain);
        ForcingSignal::new(&basis, &self.forcing).map_err(located)?;
        grid_points(domain.n_max(), self.grid_factor).map_err(located)?;
        if self.embedding_budget < 100 {
            return Err(located(Error::BudgetTooSmall(self.embedding_budget)));
        }
        if let Some(axes) = &self.sweep {
            axes.validate().map_err(located)?;
            for k in axes.cells() {
                domain.with_n_max(k.n_max).map_err(located)?;
                StressParams::new(self.stress.q, k.kappa).map_err(located)?;
                RegularizationParams::new(k.epsilon).map_err(located)?;
            }
        }
        let thr = self.extinction.threshold_rel;
        if !(thr > 0.0 && thr < 1.0) {
            return Err((
                Some("threshold_rel"),
                format!("threshold_rel = {thr} violates 0 < threshold_rel < 1"),
            ));
        }
        Ok(())
    }

    pub fn domain(&self) -> crate::Result<TorusDomain> {
        TorusDomain::new(self.domain.dim, self.domain.side_length, self.domain.n_max)
    }

    pub fn params(&self) -> crate::Result<StressParams> {
        StressParams::new(self.stress.q, self.stress.kappa)
    }

    pub fn regularization(&self) -> crate::Result<RegularizationParams> {
        RegularizationParams::new(self.regularization.epsilon)
    }

    /// Solver settings with the experiment seed applied.
    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            seed: self.seed,
            ..self.solver.clone()
        }
    }

    pub fn system(&self) -> crate::Result<GalerkinSystem> {
        let basis = Basis::new(self.domain()?);
        let forcing = ForcingSignal::new(&basis, &self.forcing)?;
        GalerkinSystem::with_grid_factor(&basis, self.params()?, self.regularization()?, forcing, self.grid_factor)
    }

    pub fn problem(&self) -> crate::Result<PeriodicProblem> {
        Ok(PeriodicProblem::new(self.system()?, self.integrator.clone()))
    }

    /// Embedding constants estimated on this configuration's basis.
    pub fn constants(&self) -> crate::Result<EmbeddingConstants> {
        estimate_embedding_constants(&self.domain()?, self.stress.q, self.embedding_budget, self.seed)
    }

    /// Sweep template sharing every setting except the swept axes.
    pub fn template(&self) -> ProblemTemplate {
        ProblemTemplate {
            dim: self.domain.dim,
            side_length: self.domain.side_length,
            q: self.stress.q,
            forcing: self.forcing.clone(),
            integrator: self.integrator.clone(),
            solver: self.solver(),
            grid_factor: self.grid_factor,
            embedding_budget: self.embedding_budget,
            seed: self.seed,
        }
    }

    /// Canonical serialization, the input to the configuration digest.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }
}
