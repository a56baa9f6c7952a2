//! Synthetic covariates through a Gaussian copula, outcome draws for the
//! supported distributional cases, and the coefficient search.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    normal_cdf, sample_bernoulli, sample_gamma, sample_normal_pair, sample_poisson, sample_poisson_or_zero, RngStream,
};
use crate::effectsize::{true_f2, CovariateSample};
use crate::error::{domain, Error, Result};
use crate::model::{dot, Dataset, LinkFunction, ModelSpec, OutcomeKind, VarianceFunction};

/// One uniform adjustor and one categorical predictor coupled through a
/// Gaussian copula with latent correlation `rho`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateDesign {
    pub rho: f64,
    #[serde(default = "default_categories")]
    pub n_categories: usize,
}

fn default_categories() -> usize {
    3
}

impl CovariateDesign {
    pub fn new(rho: f64) -> Result<Self> {
        let d = Self { rho, n_categories: 3 };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(domain(format!("rho must lie in [-1, 1], got {}", self.rho)));
        }
        if !(2..=16).contains(&self.n_categories) {
            return Err(Error::InvalidInput(format!(
                "n_categories must be between 2 and 16, got {}",
                self.n_categories
            )));
        }
        Ok(())
    }

    /// Number of adjustor columns including the intercept.
    pub fn r(&self) -> usize {
        2
    }

    /// Number of dummy columns.
    pub fn p(&self) -> usize {
        self.n_categories - 1
    }

    /// Draws one (Z, category) pair. Category `k` has dummy `k - 1` set;
    /// category 0 is the reference.
    pub(crate) fn draw(&self, rng: &mut RngStream) -> Result<(f64, usize)> {
        let (c1, c2) = sample_normal_pair(self.rho, rng)?;
        let z = normal_cdf(c1);
        let u = normal_cdf(c2);
        let k = self.n_categories;
        let cat = ((u * k as f64).floor() as usize).min(k - 1);
        Ok((z, cat))
    }
}

/// Covariate columns produced by [`gen_covariates`].
#[derive(Clone, Debug, PartialEq)]
pub struct CovariateColumns {
    pub z: Vec<f64>,
    pub category: Vec<usize>,
    /// One column per non-reference category.
    pub dummies: Vec<Vec<f64>>,
}

impl CovariateColumns {
    pub fn d1(&self) -> &[f64] {
        &self.dummies[0]
    }

    pub fn d2(&self) -> &[f64] {
        &self.dummies[1]
    }
}

pub fn gen_covariates(design: &CovariateDesign, n: usize, rng: &mut RngStream) -> Result<CovariateColumns> {
    design.validate()?;
    let mut z = Vec::with_capacity(n);
    let mut category = Vec::with_capacity(n);
    let mut dummies = vec![Vec::with_capacity(n); design.p()];
    for _ in 0..n {
        let (zi, cat) = design.draw(rng)?;
        z.push(zi);
        category.push(cat);
        for (k, col) in dummies.iter_mut().enumerate() {
            col.push(if cat == k + 1 { 1.0 } else { 0.0 });
        }
    }
    Ok(CovariateColumns { z, category, dummies })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeCaseKind {
    /// Poisson counts, Var = μ.
    PoissonVarEqMean,
    /// Equal mixture of Poi(μ) and Poi(L) with L ~ Poi(μ), Var = 1.5 μ.
    MixturePoissonVarPropMean,
    /// Gamma-Poisson mixture with Var = σ² μ².
    ModifiedNbVarPropMeanSq,
    /// Gamma with shape μ/σ² and scale σ², Var = σ² μ.
    GammaVarPropMean,
    /// Gamma with shape 1/σ² and scale μσ², Var = σ² μ².
    GammaVarPropMeanSq,
}

/// Outcome distribution for simulated data.
///
/// `sigma2` may be omitted for the two Poisson-type cases, whose dispersion is
/// fixed by construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCase {
    pub kind: OutcomeCaseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
}

impl OutcomeCase {
    pub fn poisson() -> Self {
        Self {
            kind: OutcomeCaseKind::PoissonVarEqMean,
            sigma2: None,
        }
    }

    pub fn mixture_poisson() -> Self {
        Self {
            kind: OutcomeCaseKind::MixturePoissonVarPropMean,
            sigma2: None,
        }
    }

    pub fn modified_nb(sigma2: f64) -> Self {
        Self {
            kind: OutcomeCaseKind::ModifiedNbVarPropMeanSq,
            sigma2: Some(sigma2),
        }
    }

    pub fn gamma_mean(sigma2: f64) -> Self {
        Self {
            kind: OutcomeCaseKind::GammaVarPropMean,
            sigma2: Some(sigma2),
        }
    }

    pub fn gamma_mean_sq(sigma2: f64) -> Self {
        Self {
            kind: OutcomeCaseKind::GammaVarPropMeanSq,
            sigma2: Some(sigma2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.sigma2) {
            (OutcomeCaseKind::PoissonVarEqMean, Some(s)) if s != 1.0 => Err(Error::InvalidDispersion(format!(
                "Poisson outcomes have sigma2 = 1, got {s}"
            ))),
            (OutcomeCaseKind::MixturePoissonVarPropMean, Some(s)) if s != 1.5 => Err(Error::InvalidDispersion(
                format!("the Poisson mixture has sigma2 = 1.5, got {s}"),
            )),
            (
                OutcomeCaseKind::ModifiedNbVarPropMeanSq
                | OutcomeCaseKind::GammaVarPropMean
                | OutcomeCaseKind::GammaVarPropMeanSq,
                None,
            ) => Err(Error::InvalidDispersion(format!("{:?} requires sigma2", self.kind))),
            (_, Some(s)) if !(s > 0.0 && s.is_finite()) => Err(Error::InvalidDispersion(format!(
                "sigma2 must be positive and finite, got {s}"
            ))),
            _ => Ok(()),
        }
    }

    /// Dispersion implied by the case.
    pub fn sigma2(&self) -> f64 {
        match self.kind {
            OutcomeCaseKind::PoissonVarEqMean => 1.0,
            OutcomeCaseKind::MixturePoissonVarPropMean => 1.5,
            _ => self.sigma2.unwrap_or(f64::NAN),
        }
    }

    /// Variance function that the case satisfies exactly.
    pub fn variance_function(&self) -> VarianceFunction {
        match self.kind {
            OutcomeCaseKind::PoissonVarEqMean
            | OutcomeCaseKind::MixturePoissonVarPropMean
            | OutcomeCaseKind::GammaVarPropMean => VarianceFunction::Mean,
            OutcomeCaseKind::ModifiedNbVarPropMeanSq | OutcomeCaseKind::GammaVarPropMeanSq => {
                VarianceFunction::MeanSquared
            }
        }
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        match self.kind {
            OutcomeCaseKind::PoissonVarEqMean
            | OutcomeCaseKind::MixturePoissonVarPropMean
            | OutcomeCaseKind::ModifiedNbVarPropMeanSq => OutcomeKind::Count,
            OutcomeCaseKind::GammaVarPropMean | OutcomeCaseKind::GammaVarPropMeanSq => OutcomeKind::Positive,
        }
    }

    /// Rejects means the case cannot generate.
    pub fn check_mean(&self, mu: f64) -> Result<()> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InadmissibleMean {
                mu,
                variance: self.variance_function().name(),
            });
        }
        if self.kind == OutcomeCaseKind::ModifiedNbVarPropMeanSq && self.sigma2() * mu <= 1.0 {
            return Err(Error::InvalidDispersion(format!(
                "sigma2 * mu must exceed 1, got {} at mu = {mu}",
                self.sigma2() * mu
            )));
        }
        Ok(())
    }
}

/// One outcome draw with mean `mu` under `case`.
pub fn gen_outcome(case: &OutcomeCase, mu: f64, rng: &mut RngStream) -> Result<f64> {
    case.check_mean(mu)?;
    let s2 = case.sigma2();
    match case.kind {
        OutcomeCaseKind::PoissonVarEqMean => sample_poisson(mu, rng),
        OutcomeCaseKind::MixturePoissonVarPropMean => {
            if sample_bernoulli(0.5, rng)? == 0.0 {
                sample_poisson(mu, rng)
            } else {
                let l = sample_poisson(mu, rng)?;
                sample_poisson_or_zero(l, rng)
            }
        }
        OutcomeCaseKind::ModifiedNbVarPropMeanSq => {
            let nu = s2 - 1.0 / mu;
            let g = sample_gamma(1.0 / nu, nu, rng)?;
            sample_poisson_or_zero(mu * g, rng)
        }
        OutcomeCaseKind::GammaVarPropMean => sample_gamma(mu / s2, s2, rng),
        OutcomeCaseKind::GammaVarPropMeanSq => sample_gamma(1.0 / s2, mu * s2, rng),
    }
}

/// Simulates n rows with Z = (1, Z₀) and X the category dummies.
pub fn gen_dataset(
    spec: &ModelSpec,
    design: &CovariateDesign,
    case: &OutcomeCase,
    n: usize,
    rng: &mut RngStream,
) -> Result<Dataset> {
    spec.validate()?;
    case.validate()?;
    design.validate()?;
    if spec.r() != design.r() || spec.p() != design.p() {
        return Err(Error::DimensionMismatch(format!(
            "design implies r = {}, p = {} but the model has r = {}, p = {}",
            design.r(),
            design.p(),
            spec.r(),
            spec.p()
        )));
    }
    let p = design.p();
    let mut z = DMatrix::from_element(n, 2, 1.0);
    let mut x = DMatrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let (z0, cat) = design.draw(rng)?;
        z[(i, 1)] = z0;
        let mut eta = spec.lambda[0] + spec.lambda[1] * z0;
        if cat > 0 {
            x[(i, cat - 1)] = 1.0;
            eta += spec.beta[cat - 1];
        }
        let mu = spec.link.inverse(eta);
        y.push(gen_outcome(case, mu, rng)?);
    }
    Dataset::new(y, z, x, case.outcome_kind())
}

/// Settings for [`coefficient_search`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Initial β₂.
    pub start: f64,
    /// Fixed step κ applied until the target is bracketed.
    pub step: f64,
    /// Accepted gap ε between the implied and the target sample size.
    pub tol: f64,
    pub max_iter: usize,
    pub mc_size: usize,
    pub seed: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            start: 0.1,
            step: 0.05,
            tol: 1.0,
            max_iter: 200,
            mc_size: 1_000_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub beta2: f64,
    pub n: u64,
    pub f2: f64,
    pub iterations: usize,
}

/// Finds β₂ such that ⌈Δ / f²(β₂)⌉ matches `target_n`.
///
/// Steps by ±κ until the sign of n − target flips, then bisects the bracket.
/// f² is evaluated on one covariate sample throughout, so n(β₂) is a
/// deterministic step function.
pub fn coefficient_search(
    target_n: u64,
    lambda: &[f64],
    beta1: f64,
    delta: f64,
    template: &ModelSpec,
    design: &CovariateDesign,
    opts: &SearchOptions,
) -> Result<SearchOutcome> {
    if target_n == 0 {
        return Err(domain("target sample size must be positive"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(domain(format!("non-centrality must be positive, got {delta}")));
    }
    if !(opts.step > 0.0 && opts.tol > 0.0) {
        return Err(domain("step and tolerance must be positive"));
    }
    if design.p() != 2 {
        return Err(Error::DimensionMismatch(
            "coefficient search expects two predictor dummies".into(),
        ));
    }
    let sample = CovariateSample::synthetic(design, opts.mc_size, opts.seed)?;
    let target = target_n as f64;
    let eval = |b2: f64| -> Result<(f64, f64)> {
        let spec = ModelSpec {
            lambda: lambda.to_vec(),
            beta: vec![beta1, b2],
            ..template.clone()
        };
        let (f2, _) = true_f2(&spec, &sample)?;
        let n = if f2 > 0.0 { (delta / f2).ceil() } else { f64::INFINITY };
        Ok((n, f2))
    };
    let done = |b2: f64, n: f64, f2: f64, it: usize| SearchOutcome {
        beta2: b2,
        n: n as u64,
        f2,
        iterations: it,
    };

    let mut b = opts.start;
    let (mut n, mut f2) = eval(b)?;
    if (n - target).abs() < opts.tol {
        return Ok(done(b, n, f2, 0));
    }
    // n above target means the effect is too small
    let dir = if n > target { 1.0 } else { -1.0 };
    let mut it = 0;
    let (mut lo, mut hi);
    loop {
        it += 1;
        if it > opts.max_iter {
            return Err(Error::NonConvergence { iterations: it - 1 });
        }
        let b_next = b + dir * opts.step;
        let (n_next, f2_next) = eval(b_next)?;
        if (n_next - target).abs() < opts.tol {
            return Ok(done(b_next, n_next, f2_next, it));
        }
        if (n_next > target) != (n > target) {
            lo = b.min(b_next);
            hi = b.max(b_next);
            break;
        }
        b = b_next;
        n = n_next;
    }
    // n(lo) and n(hi) straddle the target
    let (n_lo, _) = eval(lo)?;
    let lo_above = n_lo > target;
    while it < opts.max_iter {
        it += 1;
        let mid = 0.5 * (lo + hi);
        (n, f2) = eval(mid)?;
        if (n - target).abs() < opts.tol {
            return Ok(done(mid, n, f2, it));
        }
        if (n > target) == lo_above {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Err(Error::NonConvergence { iterations: it })
}

/// Mean of g⁻¹(λ′z + β′x) over a covariate sample.
pub fn population_mean(spec: &ModelSpec, sample: &CovariateSample) -> f64 {
    let n = sample.n();
    (0..n)
        .map(|i| {
            spec.link
                .inverse(dot(&spec.lambda, sample.z_row(i)) + dot(&spec.beta, sample.x_row(i)))
        })
        .sum::<f64>()
        / n as f64
}

/// Link-specific check that every row of a sample yields an admissible mean.
pub fn check_admissible(spec: &ModelSpec, case: &OutcomeCase, sample: &CovariateSample) -> Result<()> {
    if spec.link == LinkFunction::Log && case.kind != OutcomeCaseKind::ModifiedNbVarPropMeanSq {
        return Ok(());
    }
    for i in 0..sample.n() {
        let eta = dot(&spec.lambda, sample.z_row(i)) + dot(&spec.beta, sample.x_row(i));
        case.check_mean(spec.link.inverse(eta))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VarianceFunction;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn category_frequencies_at_independence() {
        let mut rng = RngStream::new(11, 0);
        let c = gen_covariates(&CovariateDesign::new(0.0).unwrap(), 1_000_000, &mut rng).unwrap();
        for k in 0..3 {
            let f = c.category.iter().filter(|&&x| x == k).count() as f64 / 1e6;
            assert!((f - 1.0 / 3.0).abs() < 0.0015, "category {k}: {f}");
        }
        assert_eq!(c.d1().len(), 1_000_000);
    }

    #[test]
    fn comonotone_copula() {
        let mut rng = RngStream::new(12, 0);
        let c = gen_covariates(&CovariateDesign::new(1.0).unwrap(), 10_000, &mut rng).unwrap();
        for (z, &cat) in c.z.iter().zip(&c.category) {
            assert_eq!(((z * 3.0).floor() as usize).min(2), cat);
        }
    }

    #[test]
    fn positive_dependence() {
        let mut rng = RngStream::new(13, 0);
        let c = gen_covariates(&CovariateDesign::new(0.3).unwrap(), 1_000_000, &mut rng).unwrap();
        let (mut hits, mut total) = (0usize, 0usize);
        for (z, &cat) in c.z.iter().zip(&c.category) {
            if *z > 2.0 / 3.0 {
                total += 1;
                hits += (cat == 2) as usize;
            }
        }
        assert!(hits as f64 / total as f64 > 1.0 / 3.0 + 0.01);
    }

    #[test]
    fn dummy_encoding() {
        let mut rng = RngStream::new(14, 0);
        let c = gen_covariates(&CovariateDesign::new(0.2).unwrap(), 1000, &mut rng).unwrap();
        for i in 0..1000 {
            let expect = match c.category[i] {
                0 => (0.0, 0.0),
                1 => (1.0, 0.0),
                _ => (0.0, 1.0),
            };
            assert_eq!((c.d1()[i], c.d2()[i]), expect);
        }
    }

    fn draws(case: OutcomeCase, mu: f64, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed, 0);
        (0..1_000_000)
            .map(|_| gen_outcome(&case, mu, &mut rng).unwrap())
            .collect()
    }

    #[test]
    fn mixture_moments() {
        let (m, v) = moments(&draws(OutcomeCase::mixture_poisson(), 4.0, 21));
        assert!((m - 4.0).abs() < 0.01, "{m}");
        assert!((v - 6.0).abs() < 0.06, "{v}");
    }

    #[test]
    fn modified_nb_moments() {
        let mu = std::f64::consts::E;
        let (m, v) = moments(&draws(OutcomeCase::modified_nb(2.0), mu, 22));
        assert!((m - mu).abs() < 0.02, "{m}");
        assert!((v / (2.0 * mu * mu) - 1.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn gamma_mean_moments() {
        let (m, v) = moments(&draws(OutcomeCase::gamma_mean(0.5), 3.0, 23));
        // SE of the mean sqrt(1.5/1e6); SE of the variance about 0.0027
        assert!((m - 3.0).abs() < 4.0 * (1.5f64 / 1e6).sqrt(), "{m}");
        assert!((v - 1.5).abs() < 4.0 * 0.0027, "{v}");
    }

    #[test]
    fn modified_nb_rejects_small_mean() {
        let mut rng = RngStream::new(1, 1);
        let r = gen_outcome(&OutcomeCase::modified_nb(2.0), 0.4, &mut rng);
        assert!(matches!(r, Err(Error::InvalidDispersion(_))));
    }

    #[test]
    fn case_validation() {
        assert!(OutcomeCase {
            kind: OutcomeCaseKind::PoissonVarEqMean,
            sigma2: Some(2.0)
        }
        .validate()
        .is_err());
        assert!(OutcomeCase {
            kind: OutcomeCaseKind::GammaVarPropMean,
            sigma2: None
        }
        .validate()
        .is_err());
        assert!(OutcomeCase::gamma_mean_sq(0.16).validate().is_ok());
        assert_eq!(OutcomeCase::mixture_poisson().sigma2(), 1.5);
    }

    #[test]
    fn identity_design_means_positive() {
        let spec = ModelSpec::new(
            LinkFunction::Identity,
            VarianceFunction::Mean,
            1.0,
            vec![4.0, 0.4],
            vec![0.4, 0.81],
        )
        .unwrap();
        let mut rng = RngStream::new(31, 0);
        let d = gen_dataset(
            &spec,
            &CovariateDesign::new(0.5).unwrap(),
            &OutcomeCase::poisson(),
            5000,
            &mut rng,
        )
        .unwrap();
        for i in 0..d.n() {
            let mu = 4.0 + 0.4 * d.z[(i, 1)] + 0.4 * d.x[(i, 0)] + 0.81 * d.x[(i, 1)];
            assert!(mu > 0.0);
        }
    }

    #[test]
    fn gen_dataset_reproducible() {
        let spec = ModelSpec::new(
            LinkFunction::Log,
            VarianceFunction::Mean,
            1.0,
            vec![1.0, 0.15],
            vec![0.1, 0.25],
        )
        .unwrap();
        let design = CovariateDesign::new(0.3).unwrap();
        let a = gen_dataset(&spec, &design, &OutcomeCase::poisson(), 500, &mut RngStream::new(5, 9)).unwrap();
        let b = gen_dataset(&spec, &design, &OutcomeCase::poisson(), 500, &mut RngStream::new(5, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gen_dataset_mean_matches_population() {
        // E[exp(eta)] at rho = 0: E[exp(0.15 U)] * (1 + e^0.1 + e^0.25) / 3 * e
        let pop = (0.15f64.exp() - 1.0) / 0.15 * (1.0 + 0.1f64.exp() + 0.25f64.exp()) / 3.0 * 1.0f64.exp();
        let spec = ModelSpec::new(
            LinkFunction::Log,
            VarianceFunction::Mean,
            1.0,
            vec![1.0, 0.15],
            vec![0.1, 0.25],
        )
        .unwrap();
        let d = gen_dataset(
            &spec,
            &CovariateDesign::new(0.0).unwrap(),
            &OutcomeCase::poisson(),
            200_000,
            &mut RngStream::new(8, 0),
        )
        .unwrap();
        let (m, v) = moments(&d.y);
        let se = (v / 200_000.0).sqrt();
        assert!((m - pop).abs() < 4.0 * se, "{m} vs {pop}");
    }

    #[test]
    fn dimension_mismatch() {
        let spec = ModelSpec::new(
            LinkFunction::Log,
            VarianceFunction::Mean,
            1.0,
            vec![1.0],
            vec![0.1, 0.25],
        )
        .unwrap();
        let r = gen_dataset(
            &spec,
            &CovariateDesign::new(0.0).unwrap(),
            &OutcomeCase::poisson(),
            100,
            &mut RngStream::new(1, 0),
        );
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }
}
