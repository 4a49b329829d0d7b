//! Time-periodic Galerkin solutions for incompressible power-law fluids on the torus.

pub mod cli;
pub mod constants;
pub mod constitutive;
pub mod diagnostics;
pub mod error;
pub mod fft;
pub mod forcing;
pub mod galerkin;
pub mod integrator;
pub mod periodic;
pub mod spectral;

pub use constants::EmbeddingConstants;
pub use constitutive::{RegularizationParams, StressParams, SymTensor};
pub use error::{Error, Result};
pub use forcing::{ForcingMode, ForcingSignal, ForcingSpec, TimeProfile};
pub use galerkin::{EnergyTerms, GalerkinState, GalerkinSystem};
pub use integrator::{IntegratorConfig, Scheme, TrajectoryRecord};
pub use spectral::{Basis, DivFreeMode, SpectralField, TorusDomain, Transform};
