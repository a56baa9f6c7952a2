use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use super::RngStream;
use crate::error::{domain, Result};

/// Bivariate standard normal pair with correlation `rho`.
pub fn sample_normal_pair(rho: f64, rng: &mut RngStream) -> Result<(f64, f64)> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(domain(format!("correlation must lie in [-1, 1], got {rho}")));
    }
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    Ok((a, rho * a + (1.0 - rho * rho).sqrt() * b))
}

pub fn sample_standard_normal(rng: &mut RngStream) -> f64 {
    StandardNormal.sample(rng)
}

pub fn sample_poisson(rate: f64, rng: &mut RngStream) -> Result<f64> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(domain(format!("Poisson rate must be positive and finite, got {rate}")));
    }
    let dist = Poisson::new(rate).map_err(|e| domain(format!("Poisson({rate}): {e}")))?;
    Ok(dist.sample(rng))
}

/// Poisson draw that also accepts a zero rate (a point mass at zero).
pub(crate) fn sample_poisson_or_zero(rate: f64, rng: &mut RngStream) -> Result<f64> {
    if rate == 0.0 {
        Ok(0.0)
    } else {
        sample_poisson(rate, rng)
    }
}

/// Gamma draw parameterized by shape and scale (mean = shape * scale).
pub fn sample_gamma(shape: f64, scale: f64, rng: &mut RngStream) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite() && scale > 0.0 && scale.is_finite()) {
        return Err(domain(format!(
            "gamma shape and scale must be positive and finite, got ({shape}, {scale})"
        )));
    }
    let dist = Gamma::new(shape, scale).map_err(|e| domain(format!("Gamma: {e}")))?;
    Ok(dist.sample(rng))
}

/// Returns 1.0 with probability `p` and 0.0 otherwise.
pub fn sample_bernoulli(p: f64, rng: &mut RngStream) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(domain(format!("Bernoulli probability must lie in [0, 1], got {p}")));
    }
    Ok(if rng.random::<f64>() < p { 1.0 } else { 0.0 })
}
