//! Unitary sparsifying transform learning.
//!
//! Given a data matrix `P` (one training signal per column), the learner
//! alternates between hard-threshold sparse coding and a closed-form unitary
//! operator update (orthogonal Procrustes via SVD) to solve
//!
//! ```text
//! min_{W, Z} ||W P - Z||_F^2   s.t.  W'W = Id,  ||Z_(.,j)||_0 <= s  for all j
//! ```
//!
//! The crate also synthesizes ground-truth generative models `P = W*' Z*`
//! with exactly `s`-sparse coefficient columns, and computes the spectral
//! quantities that govern local linear convergence of the iteration:
//! contraction factors, condition numbers, convergence radii, and their
//! large-sample limits.

pub mod analysis;
pub mod cli;
pub mod constants;
pub mod error;
pub mod genmodel;
pub mod io;
pub mod learner;
pub mod linops;

pub use error::{Error, Result};
pub use linops::{Matrix, SvdFactors};
