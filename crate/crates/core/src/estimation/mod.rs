//! Quasi-likelihood estimation: full and restricted IRLS fits, information
//! matrices and the Schur complement.

mod information;
mod irls;

pub(crate) use information::symmetrize_lower;
pub use information::{information, quasi_score, schur_complement};
pub(crate) use irls::irls_core;
pub use irls::{irls_fit, restricted_fit, FitOptions, FitResult, InitRule};
