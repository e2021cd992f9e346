//! Numerical laboratory for the p-Laplacian with rough data on discretized
//! compact manifolds.
//!
//! The crate solves `-div(|∇u|^{p-2} ∇u) = f` on simplicial meshes of compact
//! manifolds (intervals, flat tori, icospheres, or meshes loaded from file),
//! handles data that is only L¹-integrable through a truncate-and-pass-to-the-
//! limit pipeline, and turns the estimates that justify that pipeline into
//! executable certificates: a-priori energy ratios, truncated-test-function
//! residuals, weak-Lebesgue tail exponents, Picone identities, and comparison
//! principles.
//!
//! Organization:
//! - [`geometry`]: meshes, Riemannian measure, integration, mesh file I/O.
//! - [`fields`]: nodal functions, gradients, truncation, norms, distribution
//!   functions and weak-Lebesgue analytics.
//! - [`solver`]: convex energy minimization for the weak problem, the
//!   semilinear concave problem, and the algebraic inequality kernel.
//! - [`entropy`]: the approximation pipeline and its certificates.
//! - [`picone`]: pointwise/integral Picone quantities and the comparison
//!   harness.
//! - [`runner`]: config-driven experiment runner behind the `plap` binary.
//!
//! Every capability also has a runnable example under `examples/`.

pub mod entropy;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod picone;
pub mod runner;
pub mod solver;
pub mod sparse;

pub use error::PlapError;
pub use fields::{DiscreteFunction, DistributionCurve, GradientField};
pub use geometry::Mesh;
pub use solver::{BcMode, SolveOutcome, SolverConfig};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, PlapError>;
