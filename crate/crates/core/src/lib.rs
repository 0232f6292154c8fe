//! Extraction of modality-specific latent variables from paired datasets.
//!
//! Two views of the same samples (images and audio of one scene, two sensor
//! suites, paired graphs) usually share some latent structure while each
//! view also carries variation of its own. This crate recovers the
//! modality-specific part: it builds a diffusion operator per modality,
//! uses one modality's Laplacian spectrum as a filter that annihilates the
//! structure both views share, and reads the other modality's exclusive
//! variation off the leading eigenvectors of the filtered operator.
//!
//! The crate ships the extraction itself ([`differential`]), the graph and
//! spectral machinery under it ([`graph`], [`spectral`], [`linalg`]),
//! reference methods to compare against ([`baselines`]), synthetic paired
//! datasets with known ground truth ([`datasets`]), scoring ([`metrics`]),
//! empirical checks of the supporting theory ([`validation`]), and the
//! on-disk formats experiments use ([`io`]).
//!
//! Dense kernels are data-parallel via rayon when the default `parallel`
//! feature is on; disabling it yields a fully sequential build with
//! identical results.

// Ties the BLAS provider into every downstream target.
use blas_src as _;

pub mod baselines;
pub mod datasets;
pub mod differential;
pub mod error;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod spectral;
pub mod validation;

pub use differential::{
    extract_multi, extract_single, DifferentialConfig, DifferentialPair, DifferentialResult,
    Modality,
};
pub use error::{Error, Result};
pub use graph::{GraphOperators, PointCloud};
pub use linalg::SpectrumSide;
pub use spectral::{EigenSystem, FilterSpec};
