//! Node-based shape filtering and shape optimization on triangle and
//! tetrahedral meshes.
//!
//! The crate provides two families of shape filters and the machinery to
//! compare them:
//!
//! - **Explicit (convolution) filters** ([`explicit`]): Gaussian, linear-hat
//!   and regularized-Green kernels discretized at mesh nodes, with optional
//!   damping towards the design-surface boundary and consistency
//!   normalization (unit row sums).
//! - **Implicit (PDE) filters** ([`implicit`]): the surface Helmholtz filter
//!   `(K + M) x = M s` and a bulk-surface filter that couples a
//!   Jacobian-stiffened pseudo-elastic volume operator with a
//!   Laplace-Beltrami boundary term, smoothing the boundary and deforming
//!   the interior mesh in a single solve.
//!
//! On top of the filters sit response functions with discrete shape
//! sensitivities ([`response`]) and a projected steepest-descent driver in
//! control space ([`optimize`]). [`fixtures`] generates the deterministic
//! meshes used by the test suites and the CLI.

pub mod explicit;
pub mod fem;
pub mod field;
pub mod fixtures;
pub mod implicit;
pub mod mesh;
pub mod optimize;
pub mod response;
pub mod sparse;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("degenerate element {index}: measure {measure:.3e} below threshold {threshold:.3e}")]
    DegenerateElement {
        index: usize,
        measure: f64,
        threshold: f64,
    },
    #[error("inverted element {index}: jacobian {jacobian:.3e}")]
    InvertedElement { index: usize, jacobian: f64 },
    #[error("non-manifold face ({0}, {1}, {2}) shared by more than two tetrahedra")]
    NonManifoldFace(usize, usize, usize),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),
    #[error(
        "conjugate gradient did not converge in {iterations} iterations \
         (relative residual {residual:.3e})"
    )]
    CgDidNotConverge { iterations: usize, residual: f64 },
    #[error("numerical breakdown: {0}")]
    Breakdown(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("surface has no boundary edges")]
    EmptyBoundary,
    #[error("node {0} has no element inside its filter support span")]
    EmptySupport(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
