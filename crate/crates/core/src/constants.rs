//! Numerical tolerances shared across the crate.
//!
//! The residual tolerances are roughly 100x double-precision epsilon, scaled
//! by problem size at the point of use.

/// Orthonormality residual per unit dimension: a square `W` counts as unitary
/// when `||W'W - Id||_F <= ORTHONORMALITY_TOL * n`.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// SVD factor orthonormality: `||U'U - Id||_F <= SVD_ORTHO_TOL * sqrt(r)`.
pub const SVD_ORTHO_TOL: f64 = 1e-10;

/// SVD reconstruction residual: `||A - U S V'||_F <= SVD_RECON_TOL * max(1, ||A||_F)`.
pub const SVD_RECON_TOL: f64 = 1e-9;

/// Default objective stopping tolerance for the learner.
pub const DEFAULT_OBJ_TOL: f64 = 1e-24;

/// Default iteration cap for the learner.
pub const DEFAULT_MAX_ITER: usize = 200;

/// Fraction of the support-recovery radius used by the epsilon-ball
/// initialization in the reference experiments.
pub const DEFAULT_EPS_FRACTION: f64 = 0.49;

/// Upper end of the domain of the second-order error constant `C`:
/// `sqrt(2) - 1`. Both Taylor series in the operator-update analysis
/// converge strictly inside `[0, TAYLOR_RADIUS)`.
pub const TAYLOR_RADIUS: f64 = std::f64::consts::SQRT_2 - 1.0;
