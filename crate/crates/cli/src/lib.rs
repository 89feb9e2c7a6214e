//! Configuration, subcommands and the acceptance suite behind the `kgsa` binary.

use kgsa_core::geodesic::GeodesicError;
use kgsa_core::geometry::GeometryError;
use kgsa_core::normmap::NormMapError;
use kgsa_core::potential::PotentialError;
use kgsa_core::reduced::ReducedError;
use kgsa_core::weyl::WeylError;
use thiserror::Error;

pub mod checks;
pub mod commands;
pub mod config;
pub mod output;

pub use config::{ConfigError, RunConfig};

/// Exit codes: success, verification failure, usage or config error.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("potential: {0}")]
    Potential(#[from] PotentialError),
    #[error("geodesic: {0}")]
    Geodesic(#[from] GeodesicError),
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("reduced operator: {0}")]
    Reduced(#[from] ReducedError),
    #[error("weyl: {0}")]
    Weyl(#[from] WeylError),
    #[error("norm map: {0}")]
    NormMap(#[from] NormMapError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Potential(PotentialError::BadWidthRule(_)) => EXIT_USAGE,
            _ => EXIT_FAILED,
        }
    }
}
