//! Opposite-order (Calderón) operator preconditioning on closed curves, with
//! lumped-mass coupling between the single layer and hypersingular operators.

pub mod duals;
pub mod error;
pub mod experiment;
pub mod fespace;
pub mod geometry;
pub mod gram;
pub mod matrix;
pub mod mesh;
pub mod operators;
pub mod precond;
pub mod quadrature;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use experiment::{run_experiment, AlphaChoice, ExperimentConfig, LevelSystem, OutputFormat, RefineMode, ReportRow};
pub use fespace::FeSpace;
pub use geometry::{Geometry, GeometryKind};
pub use gram::InnerProductKind;
pub use matrix::{DiagMatrix, SymMatrix};
pub use mesh::Mesh;
pub use operators::{balanced_alpha, QuadConfig, StabilizationWeight};
pub use precond::{Precond, PrecondKind};
pub use spectral::{kappa, Spectrum};
