//! CTF phase retrieval for X-ray near-field holography.
//!
//! Implements the nonlinear Fresnel forward model for simulation, the
//! linearized contrast-transfer-function (CTF) operators with and without the
//! homogeneous-object assumption, closed-form frequency-weighted Tikhonov
//! inversion, constrained reconstruction via ADMM, and a singular-value
//! stability analysis of the per-frequency transfer matrices.

pub mod admm;
pub mod container;
pub mod ctf;
pub mod fresnel;
pub mod grid;
pub mod phantom;
pub mod stability;
pub mod tikhonov;

pub use ctf::{ComplexObject, HologramStack, TransferSpectrum};
pub use fresnel::{FresnelNumber, Geometry};
pub use grid::Grid2D;

/// Errors produced by the library. Exit-code mapping lives in the CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("singular system: determinant at or below {eps:.3e} at {count} frequencies")]
    SingularSystem { eps: f64, count: usize },
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("container: {0}")]
    Container(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
