//! Canonical determinant-line elements and their partition functions on the
//! Riemann sphere and on elliptic curves.
//!
//! The crate builds the canonical element `s_p` of the determinant line of
//! `L^p` explicitly (monomials on CP^1, Weierstrass and theta bases on
//! C/(Z + tau Z)), evaluates `log Z_p = log det Gram` at high precision,
//! computes the coefficients of the large-`p` expansion in closed form
//! (including zeta-regularised torsion) and extracts the same coefficients
//! from the computed sequence by least squares.
//!
//! Conventions used throughout:
//! - natural logarithms;
//! - `dv = omega / 2 pi` with `deg L = 1`, so `vol(X, dv) = 1 / 2 pi`;
//! - the Kodaira Laplacian on functions is half the Laplace–Beltrami operator
//!   of the area-one metric.

pub mod mp;
pub mod linalg;

pub mod graded_det;
pub mod special_functions;
pub mod geometry;
pub mod canonical_sections;
pub mod partition;
pub mod torsion;
pub mod predictor;
pub mod asymptotics;

/// Errors surfaced by the engine. The CLI maps the variants onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid user input: modulus, perturbation, ranges.
    #[error("config error: {0}")]
    Config(String),
    /// The working precision or grid cannot certify the requested accuracy.
    #[error("{0}")]
    Precision(String),
    /// A numerical kernel broke down (singular matrix, failed factorisation).
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Input outside an operation's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Scenario not covered by the requested route.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
