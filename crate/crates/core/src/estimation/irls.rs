use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize, Serializer};

use super::information::{info_at, schur_complement};
use crate::error::{domain, Error, Result};
use crate::model::{Dataset, LinkFunction, OutcomeKind, VarianceFunction};

/// Starting point for the iterations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitRule {
    /// η⁽⁰⁾ = g(Y + 0.5) for counts and g(Y) otherwise.
    #[default]
    Auto,
    /// Start from explicit coefficients (length r + p, or r for a restricted fit).
    Coefficients(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    pub tol: f64,
    #[serde(default)]
    pub init: InitRule,
    /// Holds σ² at a known value instead of the Pearson estimate.
    #[serde(default)]
    pub fixed_sigma2: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            init: InitRule::Auto,
            fixed_sigma2: None,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(domain("max_iter must be >= 1 and tol > 0"));
        }
        if let Some(s) = self.fixed_sigma2 {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidDispersion(format!(
                    "fixed sigma2 must be positive, got {s}"
                )));
            }
        }
        Ok(())
    }
}

fn ser_matrix<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub link: LinkFunction,
    pub variance: VarianceFunction,
    pub lambda_hat: Vec<f64>,
    /// All zeros for a restricted fit.
    pub beta_hat: Vec<f64>,
    pub sigma2_hat: f64,
    /// Full (r + p) information at the estimates with dispersion `sigma2_hat`.
    #[serde(serialize_with = "ser_matrix")]
    pub info: DMatrix<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub info_beta_given_lambda: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub restricted: bool,
}

pub(crate) struct IrlsOutput {
    pub coef: DVector<f64>,
    pub sigma2: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Least squares via Householder QR of the weighted design.
fn solve_qr(a: DMatrix<f64>, mut b: DVector<f64>) -> Result<DVector<f64>> {
    let k = a.ncols();
    let qr = a.qr();
    qr.q_tr_mul(&mut b);
    let r = qr.r();
    let scale = (0..k).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if !(scale > 0.0) || (0..k).any(|j| !(r[(j, j)].abs() > 1e-10 * scale)) {
        return Err(Error::SingularDesign);
    }
    let rhs = b.rows(0, k).into_owned();
    r.solve_upper_triangular(&rhs).ok_or(Error::SingularDesign)
}

fn initial_eta(y: &[f64], link: LinkFunction, kind: OutcomeKind) -> Result<Vec<f64>> {
    y.iter()
        .map(|&v| {
            let m = match kind {
                OutcomeKind::Count => v + 0.5,
                _ => v,
            };
            if link == LinkFunction::Log && m <= 0.0 {
                return Err(domain(format!(
                    "cannot start a log-link fit from outcome {v}; supply initial coefficients"
                )));
            }
            Ok(link.link(m))
        })
        .collect()
}

/// IRLS on an arbitrary design with dispersion denominator n − ncols.
pub(crate) fn irls_core(
    y: &[f64],
    design: &DMatrix<f64>,
    kind: OutcomeKind,
    link: LinkFunction,
    variance: VarianceFunction,
    opts: &FitOptions,
) -> Result<IrlsOutput> {
    opts.validate()?;
    let (n, k) = design.shape();
    if n <= k {
        return Err(Error::InvalidInput(format!("need more than {k} rows, got {n}")));
    }
    let mut coef_prev: Option<DVector<f64>> = None;
    let mut eta: Vec<f64> = match &opts.init {
        InitRule::Auto => initial_eta(y, link, kind)?,
        InitRule::Coefficients(c) => {
            if c.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "{} initial coefficients for {k} columns",
                    c.len()
                )));
            }
            let c = DVector::from_column_slice(c);
            let e = design * &c;
            coef_prev = Some(c);
            e.iter().copied().collect()
        }
    };
    let mut sigma2_prev = opts.fixed_sigma2.unwrap_or(1.0);
    let mut coef = coef_prev.clone().unwrap_or_else(|| DVector::zeros(k));
    let mut sigma2 = sigma2_prev;
    let mut converged = false;
    let mut iterations = 0;

    let mut a = DMatrix::zeros(n, k);
    let mut b = DVector::zeros(n);
    for it in 1..=opts.max_iter {
        iterations = it;
        for i in 0..n {
            let mu = link.inverse(eta[i]);
            variance.check(mu)?;
            let d = link.dmu_deta(eta[i]);
            let sw = (d * d / variance.v(mu)).sqrt();
            for j in 0..k {
                a[(i, j)] = sw * design[(i, j)];
            }
            b[i] = sw * (eta[i] + (y[i] - mu) / d);
        }
        coef = solve_qr(a.clone(), b.clone())?;
        let new_eta = design * &coef;
        let mut pearson = 0.0;
        for i in 0..n {
            eta[i] = new_eta[i];
            let mu = link.inverse(eta[i]);
            variance.check(mu)?;
            pearson += (y[i] - mu).powi(2) / variance.v(mu);
        }
        sigma2 = opts.fixed_sigma2.unwrap_or(pearson / (n - k) as f64);
        if let Some(prev) = &coef_prev {
            let step = (&coef - prev).amax();
            if step < opts.tol && (sigma2 - sigma2_prev).abs() < opts.tol {
                converged = true;
                break;
            }
        }
        coef_prev = Some(coef.clone());
        sigma2_prev = sigma2;
    }
    if !coef.iter().all(|c| c.is_finite()) || !sigma2.is_finite() {
        return Err(Error::NonConvergence { iterations });
    }
    Ok(IrlsOutput {
        coef,
        sigma2,
        converged,
        iterations,
    })
}

fn finish(
    data: &Dataset,
    link: LinkFunction,
    variance: VarianceFunction,
    out: IrlsOutput,
    restricted: bool,
) -> Result<FitResult> {
    let r = data.r();
    let lambda_hat: Vec<f64> = out.coef.iter().take(r).copied().collect();
    let beta_hat: Vec<f64> = if restricted {
        vec![0.0; data.p()]
    } else {
        out.coef.iter().skip(r).copied().collect()
    };
    let info = info_at(data, link, variance, out.sigma2, &lambda_hat, &beta_hat)?;
    let info_beta_given_lambda = if data.p() > 0 {
        schur_complement(&info, r)?
    } else {
        DMatrix::zeros(0, 0)
    };
    Ok(FitResult {
        link,
        variance,
        lambda_hat,
        beta_hat,
        sigma2_hat: out.sigma2,
        info,
        info_beta_given_lambda,
        converged: out.converged,
        iterations: out.iterations,
        restricted,
    })
}

/// Quasi-likelihood fit of the full model by iteratively reweighted least squares.
///
/// Non-convergence is reported through `converged = false` rather than an error.
pub fn irls_fit(
    data: &Dataset,
    link: LinkFunction,
    variance: VarianceFunction,
    opts: &FitOptions,
) -> Result<FitResult> {
    let out = irls_core(&data.y, &data.design(), data.kind, link, variance, opts)?;
    finish(data, link, variance, out, false)
}

/// Fit under β = 0 using the adjustors only. The reported information is the
/// full (r + p) matrix at (λ̂⁽⁰⁾, 0).
pub fn restricted_fit(
    data: &Dataset,
    link: LinkFunction,
    variance: VarianceFunction,
    opts: &FitOptions,
) -> Result<FitResult> {
    let out = irls_core(&data.y, &data.z, data.kind, link, variance, opts)?;
    finish(data, link, variance, out, true)
}
