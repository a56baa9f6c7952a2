//! Special functions, quantile solvers and random samplers.

mod chisq;
mod rng;
mod sample;

pub use chisq::{chisq_cdf, chisq_quantile, ncchisq_cdf, ncp_for_power, power_for_ncp, NoncentralChiSq};
pub use rng::{derive_stream, RngStream};
pub(crate) use sample::sample_poisson_or_zero;
pub use sample::{sample_bernoulli, sample_gamma, sample_normal_pair, sample_poisson, sample_standard_normal};

use statrs::function::erf::{erfc, erfc_inv};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile for `p` in (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}
