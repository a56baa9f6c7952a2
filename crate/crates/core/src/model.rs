//! Link and variance functions, model specifications and datasets.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Link function g relating the mean to the linear predictor.
///
/// New kinds must supply g, its inverse, dμ/dη and an admissible mean range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkFunction {
    Log,
    Identity,
}

impl LinkFunction {
    pub fn name(self) -> &'static str {
        match self {
            LinkFunction::Log => "log",
            LinkFunction::Identity => "identity",
        }
    }

    /// g(μ)
    pub fn link(self, mu: f64) -> f64 {
        match self {
            LinkFunction::Log => mu.ln(),
            LinkFunction::Identity => mu,
        }
    }

    /// g⁻¹(η)
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Log => eta.exp(),
            LinkFunction::Identity => eta,
        }
    }

    /// dμ/dη evaluated at η.
    pub fn dmu_deta(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Log => eta.exp(),
            LinkFunction::Identity => 1.0,
        }
    }

    /// dμ/dη expressed through μ.
    pub fn dmu_deta_at_mean(self, mu: f64) -> f64 {
        match self {
            LinkFunction::Log => mu,
            LinkFunction::Identity => 1.0,
        }
    }
}

/// Variance function v with Var(Y | covariates) = σ² v(μ).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceFunction {
    Unit,
    Mean,
    MeanSquared,
}

impl VarianceFunction {
    pub fn name(self) -> &'static str {
        match self {
            VarianceFunction::Unit => "unit",
            VarianceFunction::Mean => "mean",
            VarianceFunction::MeanSquared => "mean_squared",
        }
    }

    pub fn v(self, mu: f64) -> f64 {
        match self {
            VarianceFunction::Unit => 1.0,
            VarianceFunction::Mean => mu,
            VarianceFunction::MeanSquared => mu * mu,
        }
    }

    pub fn admissible(self, mu: f64) -> bool {
        match self {
            VarianceFunction::Unit => mu.is_finite(),
            VarianceFunction::Mean | VarianceFunction::MeanSquared => mu > 0.0 && mu.is_finite(),
        }
    }

    pub fn check(self, mu: f64) -> Result<()> {
        if self.admissible(mu) {
            Ok(())
        } else {
            Err(Error::InadmissibleMean {
                mu,
                variance: self.name(),
            })
        }
    }
}

/// Weight (dμ/dη)² / (σ² v(μ)) for a given mean, with an explicit dispersion.
pub fn weight_at_mean(link: LinkFunction, variance: VarianceFunction, sigma2: f64, mu: f64) -> Result<f64> {
    variance.check(mu)?;
    let d = link.dmu_deta_at_mean(mu);
    Ok(d * d / (sigma2 * variance.v(mu)))
}

/// Mean and weight at η. Hot path shared by estimation and effect sizes.
#[inline]
pub(crate) fn mean_and_weight(
    link: LinkFunction,
    variance: VarianceFunction,
    sigma2: f64,
    eta: f64,
) -> Result<(f64, f64)> {
    let mu = link.inverse(eta);
    variance.check(mu)?;
    let d = link.dmu_deta(eta);
    Ok((mu, d * d / (sigma2 * variance.v(mu))))
}

/// A quasi-likelihood model: g(μ) = λ′Z + β′X and Var(Y) = σ² v(μ).
///
/// `lambda[0]` multiplies the intercept column of Z.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub link: LinkFunction,
    pub variance: VarianceFunction,
    pub sigma2: f64,
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
}

impl ModelSpec {
    pub fn new(
        link: LinkFunction,
        variance: VarianceFunction,
        sigma2: f64,
        lambda: Vec<f64>,
        beta: Vec<f64>,
    ) -> Result<Self> {
        let spec = Self {
            link,
            variance,
            sigma2,
            lambda,
            beta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_empty() {
            return Err(Error::InvalidInput("lambda must contain at least the intercept".into()));
        }
        if self.beta.is_empty() {
            return Err(Error::InvalidInput("beta must have at least one entry".into()));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidDispersion(format!(
                "sigma2 must be positive and finite, got {}",
                self.sigma2
            )));
        }
        if self.lambda.iter().chain(&self.beta).any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn r(&self) -> usize {
        self.lambda.len()
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// Same model with β replaced.
    pub fn with_beta(&self, beta: Vec<f64>) -> Self {
        Self { beta, ..self.clone() }
    }

    /// Same model under the null hypothesis β = 0.
    pub fn null(&self) -> Self {
        self.with_beta(vec![0.0; self.p()])
    }
}

/// Weight (dμ/dη)² / (σ² v(μ)) at linear predictor `eta`.
pub fn weight(spec: &ModelSpec, eta: f64) -> Result<f64> {
    mean_and_weight(spec.link, spec.variance, spec.sigma2, eta).map(|(_, w)| w)
}

/// λ′z + β′x
pub fn linear_predictor(spec: &ModelSpec, z_row: &[f64], x_row: &[f64]) -> Result<f64> {
    if z_row.len() != spec.r() || x_row.len() != spec.p() {
        return Err(Error::DimensionMismatch(format!(
            "expected z of length {} and x of length {}, got {} and {}",
            spec.r(),
            spec.p(),
            z_row.len(),
            x_row.len()
        )));
    }
    Ok(dot(&spec.lambda, z_row) + dot(&spec.beta, x_row))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Support of the outcome, validated at construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    /// Non-negative integers.
    Count,
    /// Strictly positive reals.
    Positive,
    /// Any finite real.
    Real,
}

/// Outcome vector with adjustor design Z (first column all ones) and
/// predictor design X.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub z: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub kind: OutcomeKind,
}

impl Dataset {
    pub fn new(y: Vec<f64>, z: DMatrix<f64>, x: DMatrix<f64>, kind: OutcomeKind) -> Result<Self> {
        let n = y.len();
        if z.nrows() != n || x.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "y has {n} rows, z has {}, x has {}",
                z.nrows(),
                x.nrows()
            )));
        }
        if z.ncols() == 0 {
            return Err(Error::InvalidInput("z must contain the intercept column".into()));
        }
        if n <= z.ncols() + x.ncols() {
            return Err(Error::InvalidInput(format!(
                "need more than {} rows for {} parameters, got {n}",
                z.ncols() + x.ncols(),
                z.ncols() + x.ncols()
            )));
        }
        if z.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidInput("first column of z must be all ones".into()));
        }
        if z.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("design entries must be finite".into()));
        }
        for &v in &y {
            let ok = match kind {
                OutcomeKind::Count => v >= 0.0 && v.fract() == 0.0 && v.is_finite(),
                OutcomeKind::Positive => v > 0.0 && v.is_finite(),
                OutcomeKind::Real => v.is_finite(),
            };
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "outcome value {v} is not valid for {kind:?} data"
                )));
            }
        }
        Ok(Self { y, z, x, kind })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn r(&self) -> usize {
        self.z.ncols()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Full design [Z X].
    pub fn design(&self) -> DMatrix<f64> {
        let (n, r, p) = (self.n(), self.r(), self.p());
        DMatrix::from_fn(n, r + p, |i, j| if j < r { self.z[(i, j)] } else { self.x[(i, j - r)] })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(link: LinkFunction, variance: VarianceFunction, sigma2: f64) -> ModelSpec {
        ModelSpec::new(link, variance, sigma2, vec![1.0, 0.15], vec![0.1, 0.25]).unwrap()
    }

    #[test]
    fn weight_examples() {
        let s = spec(LinkFunction::Identity, VarianceFunction::Unit, 1.0);
        for eta in [-3.0, 0.0, 2.5] {
            assert_eq!(weight(&s, eta).unwrap(), 1.0);
        }
        let s = spec(LinkFunction::Log, VarianceFunction::MeanSquared, 2.0);
        assert!((weight(&s, 1.3).unwrap() - 0.5).abs() < 1e-15);
        let s = spec(LinkFunction::Log, VarianceFunction::Mean, 1.0);
        assert_eq!(weight(&s, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn inadmissible_mean() {
        let s = spec(LinkFunction::Identity, VarianceFunction::Mean, 1.0);
        assert!(matches!(weight(&s, -0.5), Err(Error::InadmissibleMean { .. })));
        assert!(weight(&s, 0.0).is_err());
    }

    #[test]
    fn linear_predictor_examples() {
        let s = spec(LinkFunction::Log, VarianceFunction::Mean, 1.0);
        let eta = linear_predictor(&s, &[1.0, 0.5], &[1.0, 0.0]).unwrap();
        assert!((eta - 1.175).abs() < 1e-15);
        let null = s.null();
        assert_eq!(linear_predictor(&null, &[1.0, 0.5], &[1.0, 1.0]).unwrap(), 1.075);
        let zero = ModelSpec::new(LinkFunction::Log, VarianceFunction::Mean, 1.0, vec![0.0], vec![0.0]).unwrap();
        assert_eq!(linear_predictor(&zero, &[1.0], &[3.0]).unwrap(), 0.0);
        assert!(matches!(
            linear_predictor(&s, &[1.0], &[1.0, 0.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn link_roundtrip() {
        for link in [LinkFunction::Log, LinkFunction::Identity] {
            for eta in [-5.0, -0.3, 0.0, 0.7, 4.0] {
                assert!((link.link(link.inverse(eta)) - eta).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::new(LinkFunction::Log, VarianceFunction::Mean, 0.0, vec![1.0], vec![1.0]).is_err());
        assert!(ModelSpec::new(LinkFunction::Log, VarianceFunction::Mean, 1.0, vec![], vec![1.0]).is_err());
        assert!(ModelSpec::new(LinkFunction::Log, VarianceFunction::Mean, 1.0, vec![1.0], vec![]).is_err());
    }

    #[test]
    fn spec_json_keys() {
        let s = spec(LinkFunction::Log, VarianceFunction::MeanSquared, 2.0);
        let j = serde_json::to_value(&s).unwrap();
        assert_eq!(j["link"], "log");
        assert_eq!(j["variance"], "mean_squared");
        assert_eq!(j["sigma2"], 2.0);
        let back: ModelSpec = serde_json::from_value(j).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn dataset_validation() {
        let z = DMatrix::from_row_slice(4, 1, &[1.0, 1.0, 1.0, 1.0]);
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 0.0, 1.0]);
        assert!(Dataset::new(vec![0.0, 1.0, 2.0, 3.0], z.clone(), x.clone(), OutcomeKind::Count).is_ok());
        assert!(Dataset::new(vec![0.0, 1.5, 2.0, 3.0], z.clone(), x.clone(), OutcomeKind::Count).is_err());
        assert!(Dataset::new(vec![0.0, 1.0, 2.0, 3.0], z.clone(), x.clone(), OutcomeKind::Positive).is_err());
        assert!(Dataset::new(vec![0.0, 1.0, 2.0], z.clone(), x.clone(), OutcomeKind::Real).is_err());
        let bad_z = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 1.0, 1.0]);
        assert!(Dataset::new(vec![1.0; 4], bad_z, x, OutcomeKind::Real).is_err());
    }
}
