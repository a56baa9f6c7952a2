//! Wald and score tests of H₀: β = 0.

use serde::{Deserialize, Serialize};

use crate::distributions::chisq_quantile;
use crate::error::{domain, Error, Result};
use crate::estimation::{quasi_score, FitResult};
use crate::model::Dataset;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub df: u32,
    pub critical_value: f64,
    pub reject: bool,
    pub alpha: f64,
}

impl TestReport {
    /// Builds a report with a precomputed critical value.
    pub fn with_critical(statistic: f64, df: u32, alpha: f64, critical_value: f64) -> Self {
        Self {
            statistic,
            df,
            critical_value,
            reject: statistic > critical_value,
            alpha,
        }
    }

    fn new(statistic: f64, df: u32, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(domain(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let crit = chisq_quantile(df, 1.0 - alpha)?;
        Ok(Self::with_critical(statistic, df, alpha, crit))
    }
}

/// Ŵ = β̂′ i_{β|λ} β̂.
pub fn wald_statistic(fit: &FitResult) -> Result<f64> {
    let p = fit.beta_hat.len();
    if p == 0 || fit.info_beta_given_lambda.nrows() != p {
        return Err(Error::DimensionMismatch("fit has no predictor block".into()));
    }
    let s = &fit.info_beta_given_lambda;
    let mut w = 0.0;
    for a in 0..p {
        for b in 0..p {
            w += fit.beta_hat[a] * s[(a, b)] * fit.beta_hat[b];
        }
    }
    if !w.is_finite() {
        return Err(Error::SingularInformation);
    }
    Ok(w.max(0.0))
}

pub fn wald_test(fit: &FitResult, alpha: f64) -> Result<TestReport> {
    let w = wald_statistic(fit)?;
    TestReport::new(w, fit.beta_hat.len() as u32, alpha)
}

/// Ŝ = U′ i⁻¹ U at (λ̂⁽⁰⁾, 0), with the restricted fit's dispersion.
pub fn score_statistic(data: &Dataset, restricted: &FitResult) -> Result<f64> {
    let p = data.p();
    if p == 0 {
        return Err(Error::DimensionMismatch(
            "score test needs at least one predictor".into(),
        ));
    }
    let beta0 = vec![0.0; p];
    let u = quasi_score(
        data,
        restricted.link,
        restricted.variance,
        restricted.sigma2_hat,
        &restricted.lambda_hat,
        &beta0,
    )?;
    let chol = restricted.info.clone().cholesky().ok_or(Error::SingularInformation)?;
    let s = u.dot(&chol.solve(&u));
    if !s.is_finite() {
        return Err(Error::SingularInformation);
    }
    Ok(s.max(0.0))
}

pub fn score_test(data: &Dataset, restricted: &FitResult, alpha: f64) -> Result<TestReport> {
    let s = score_statistic(data, restricted)?;
    TestReport::new(s, data.p() as u32, alpha)
}
