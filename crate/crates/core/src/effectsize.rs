//! Population effect sizes evaluated over a covariate sample: the true effect
//! f², 2SLiP (φ) and its approximation f²_φ, P2R2 (R²) and f²_R, and the
//! score-test effect f²_s.
//!
//! A covariate sample is either a large synthetic draw from a
//! [`CovariateDesign`] or the rows of a pilot dataset taken as the population.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::CovariateDesign;
use crate::distributions::{derive_stream, RngStream};
use crate::error::{Error, Result};
use crate::estimation::{irls_core, schur_complement, symmetrize_lower, FitOptions, InitRule};
use crate::model::{dot, mean_and_weight, weight_at_mean, Dataset, ModelSpec, OutcomeKind};

/// Rows per parallel work unit. Partial sums are combined in chunk order, so
/// results do not depend on the worker count.
const CHUNK: usize = 8192;
const SYNTHETIC_DOMAIN: u64 = 0x636f_7661_7269_6174;

/// Default Monte Carlo size for synthetic covariate samples.
pub const DEFAULT_MC_SIZE: usize = 1_000_000;

/// Covariate rows (Z, X) stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariateSample {
    r: usize,
    p: usize,
    z: Vec<f64>,
    x: Vec<f64>,
    mean_y: Option<f64>,
}

impl CovariateSample {
    /// `z` and `x` are row-major with `r` and `p` columns. `mean_y`, when
    /// given, is used for E[Y] in the 2SLiP weight instead of the model mean.
    pub fn new(r: usize, p: usize, z: Vec<f64>, x: Vec<f64>, mean_y: Option<f64>) -> Result<Self> {
        if r == 0 || z.len() % r != 0 {
            return Err(Error::DimensionMismatch("z length is not a multiple of r".into()));
        }
        let n = z.len() / r;
        if x.len() != n * p {
            return Err(Error::DimensionMismatch(format!(
                "x has {} entries, expected {}",
                x.len(),
                n * p
            )));
        }
        if n == 0 {
            return Err(Error::InvalidInput("covariate sample is empty".into()));
        }
        Ok(Self { r, p, z, x, mean_y })
    }

    /// Pilot mode: the dataset's rows are the covariate law and its sample
    /// mean of Y is E[Y].
    pub fn from_dataset(data: &Dataset) -> Self {
        let (n, r, p) = (data.n(), data.r(), data.p());
        let mut z = Vec::with_capacity(n * r);
        let mut x = Vec::with_capacity(n * p);
        for i in 0..n {
            z.extend((0..r).map(|j| data.z[(i, j)]));
            x.extend((0..p).map(|j| data.x[(i, j)]));
        }
        let mean_y = data.y.iter().sum::<f64>() / n as f64;
        Self {
            r,
            p,
            z,
            x,
            mean_y: Some(mean_y),
        }
    }

    /// Synthetic mode: `size` rows from the copula design. Chunk `c` draws from
    /// stream `derive_stream([domain, c])` of `seed`.
    pub fn synthetic(design: &CovariateDesign, size: usize, seed: u64) -> Result<Self> {
        design.validate()?;
        if size == 0 {
            return Err(Error::InvalidInput("Monte Carlo size must be positive".into()));
        }
        let p = design.p();
        let chunks: Vec<usize> = (0..size.div_ceil(CHUNK)).collect();
        let parts: Vec<Result<(Vec<f64>, Vec<f64>)>> = chunks
            .par_iter()
            .map(|&c| {
                let rows = CHUNK.min(size - c * CHUNK);
                let mut rng = RngStream::new(seed, derive_stream(&[SYNTHETIC_DOMAIN, c as u64]));
                let mut z = Vec::with_capacity(rows * 2);
                let mut x = vec![0.0; rows * p];
                for i in 0..rows {
                    let (z0, cat) = design.draw(&mut rng)?;
                    z.push(1.0);
                    z.push(z0);
                    if cat > 0 {
                        x[i * p + cat - 1] = 1.0;
                    }
                }
                Ok((z, x))
            })
            .collect();
        let mut z = Vec::with_capacity(size * 2);
        let mut x = Vec::with_capacity(size * p);
        for part in parts {
            let (zc, xc) = part?;
            z.extend(zc);
            x.extend(xc);
        }
        Ok(Self {
            r: 2,
            p,
            z,
            x,
            mean_y: None,
        })
    }

    pub fn n(&self) -> usize {
        self.z.len() / self.r
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn mean_y(&self) -> Option<f64> {
        self.mean_y
    }

    pub fn z_row(&self, i: usize) -> &[f64] {
        &self.z[i * self.r..(i + 1) * self.r]
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        spec.validate()?;
        if spec.r() != self.r || spec.p() != self.p {
            return Err(Error::DimensionMismatch(format!(
                "sample has r = {}, p = {}; model has r = {}, p = {}",
                self.r,
                self.p,
                spec.r(),
                spec.p()
            )));
        }
        Ok(())
    }

    /// Maps `f` over chunk ranges in parallel and returns results in chunk order.
    fn map_chunks<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(std::ops::Range<usize>) -> Result<T> + Sync,
    {
        let n = self.n();
        (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(n)))
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    }
}

/// Weighted projection of X on Z: A = Ê[wXZ′] Ê[wZZ′]⁻¹ (p × r).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectionA {
    pub a: Vec<Vec<f64>>,
}

impl ProjectionA {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self {
            a: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectSizeReport {
    pub f2: f64,
    pub phi: f64,
    pub r2: f64,
    pub f2_phi: f64,
    pub f2_r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f2_s: Option<f64>,
    pub w_one: f64,
    /// E[Y] used for `w_one`.
    pub mean_y: f64,
    pub mc_size: usize,
    pub mc_se_f2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSlip {
    pub phi: f64,
    pub f2_phi: f64,
    pub w_one: f64,
}

/// How the score effect treats the dispersion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionRule {
    /// Pearson estimate (restricted fit in data; its population limit for f²_s).
    #[default]
    Estimated,
    /// Dispersion held at a known value.
    Fixed(f64),
}

impl DispersionRule {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            fixed_sigma2: match self {
                DispersionRule::Estimated => None,
                DispersionRule::Fixed(s) => Some(*s),
            },
            ..Default::default()
        }
    }
}

struct Moments {
    mzz: DMatrix<f64>,
    mxz: DMatrix<f64>,
    sum_mu: f64,
}

fn first_pass(spec: &ModelSpec, sample: &CovariateSample) -> Result<Moments> {
    let (r, p) = (sample.r, sample.p);
    let parts = sample.map_chunks(|rows| {
        let mut mzz = DMatrix::zeros(r, r);
        let mut mxz = DMatrix::zeros(p, r);
        let mut sum_mu = 0.0;
        for i in rows {
            let (z, x) = (sample.z_row(i), sample.x_row(i));
            let eta = dot(&spec.lambda, z) + dot(&spec.beta, x);
            let (mu, w) = mean_and_weight(spec.link, spec.variance, spec.sigma2, eta)?;
            sum_mu += mu;
            for a in 0..r {
                let wa = w * z[a];
                for b in 0..=a {
                    mzz[(a, b)] += wa * z[b];
                }
                for b in 0..p {
                    mxz[(b, a)] += wa * x[b];
                }
            }
        }
        Ok(Moments { mzz, mxz, sum_mu })
    })?;
    let mut acc = Moments {
        mzz: DMatrix::zeros(r, r),
        mxz: DMatrix::zeros(p, r),
        sum_mu: 0.0,
    };
    for m in parts {
        acc.mzz += m.mzz;
        acc.mxz += m.mxz;
        acc.sum_mu += m.sum_mu;
    }
    symmetrize_lower(&mut acc.mzz);
    Ok(acc)
}

fn projection(m: &Moments) -> Result<DMatrix<f64>> {
    let chol = m.mzz.clone().cholesky().ok_or(Error::SingularMoment)?;
    // A Mzz = Mxz  <=>  Mzz A′ = Mzx
    let at = chol.solve(&m.mxz.transpose());
    if at.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMoment);
    }
    Ok(at.transpose())
}

pub fn projection_a(spec: &ModelSpec, sample: &CovariateSample) -> Result<ProjectionA> {
    sample.check(spec)?;
    let m = first_pass(spec, sample)?;
    Ok(ProjectionA::from_matrix(&projection(&m)?))
}

#[derive(Default)]
struct Sums {
    we2: f64,
    we2_sq: f64,
    e: f64,
    e2: f64,
    fr: f64,
}

fn core_report(spec: &ModelSpec, sample: &CovariateSample) -> Result<EffectSizeReport> {
    sample.check(spec)?;
    let m = first_pass(spec, sample)?;
    let a = projection(&m)?;
    let beta = DVector::from_column_slice(&spec.beta);
    // c = A′β, so η_{x|z} = β′x − c′z and λ₀ = λ + c
    let c: Vec<f64> = (a.transpose() * beta).iter().copied().collect();
    let lambda0: Vec<f64> = spec.lambda.iter().zip(&c).map(|(l, ci)| l + ci).collect();
    let parts = sample.map_chunks(|rows| {
        let mut s = Sums::default();
        for i in rows {
            let (z, x) = (sample.z_row(i), sample.x_row(i));
            let bx = dot(&spec.beta, x);
            let eta = dot(&spec.lambda, z) + bx;
            let (mu, w) = mean_and_weight(spec.link, spec.variance, spec.sigma2, eta)?;
            let e = bx - dot(&c, z);
            let mu_z = spec.link.inverse(dot(&lambda0, z));
            let we2 = w * e * e;
            s.we2 += we2;
            s.we2_sq += we2 * we2;
            s.e += e;
            s.e2 += e * e;
            s.fr += (mu - mu_z).powi(2) / (spec.sigma2 * spec.variance.v(mu));
        }
        Ok(s)
    })?;
    let mut s = Sums::default();
    for part in parts {
        s.we2 += part.we2;
        s.we2_sq += part.we2_sq;
        s.e += part.e;
        s.e2 += part.e2;
        s.fr += part.fr;
    }
    let n = sample.n() as f64;
    let f2 = s.we2 / n;
    let mc_se_f2 = ((s.we2_sq / n - f2 * f2).max(0.0) / n).sqrt();
    let var_e = (s.e2 / n - (s.e / n).powi(2)).max(0.0);
    let phi = 2.0 * var_e.sqrt();
    let mean_y = sample.mean_y.unwrap_or(m.sum_mu / n);
    let w_one = weight_at_mean(spec.link, spec.variance, spec.sigma2, mean_y)?;
    let f2_r = s.fr / n;
    Ok(EffectSizeReport {
        f2,
        phi,
        r2: f2_r / (1.0 + f2_r),
        f2_phi: w_one * phi * phi / 4.0,
        f2_r,
        f2_s: None,
        w_one,
        mean_y,
        mc_size: sample.n(),
        mc_se_f2,
    })
}

/// f² = Ê[w η²_{x|z}] with its Monte Carlo standard error.
pub fn true_f2(spec: &ModelSpec, sample: &CovariateSample) -> Result<(f64, f64)> {
    let r = core_report(spec, sample)?;
    Ok((r.f2, r.mc_se_f2))
}

/// β′ (I_XX − I_XZ I_ZZ⁻¹ I_ZX) β / n from the per-row information matrix.
pub fn f2_from_information(spec: &ModelSpec, sample: &CovariateSample) -> Result<f64> {
    sample.check(spec)?;
    let (r, p) = (sample.r, sample.p);
    let k = r + p;
    let parts = sample.map_chunks(|rows| {
        let mut m = DMatrix::zeros(k, k);
        let mut d = vec![0.0; k];
        for i in rows {
            d[..r].copy_from_slice(sample.z_row(i));
            d[r..].copy_from_slice(sample.x_row(i));
            let eta = dot(&spec.lambda, &d[..r]) + dot(&spec.beta, &d[r..]);
            let (_, w) = mean_and_weight(spec.link, spec.variance, spec.sigma2, eta)?;
            for a in 0..k {
                for b in 0..k {
                    m[(a, b)] += w * d[a] * d[b];
                }
            }
        }
        Ok(m)
    })?;
    let mut info = DMatrix::zeros(k, k);
    for m in parts {
        info += m;
    }
    let s = schur_complement(&info, r).map_err(|_| Error::SingularMoment)?;
    let beta = DVector::from_column_slice(&spec.beta);
    Ok(beta.dot(&(s * &beta)) / sample.n() as f64)
}

/// φ = 2 sd(η_{x|z}), w₁ at μ = E[Y], and f²_φ = w₁ φ² / 4.
pub fn two_slip(spec: &ModelSpec, sample: &CovariateSample) -> Result<TwoSlip> {
    let r = core_report(spec, sample)?;
    Ok(TwoSlip {
        phi: r.phi,
        f2_phi: r.f2_phi,
        w_one: r.w_one,
    })
}

/// (R², f²_R) in population form.
pub fn p2r2(spec: &ModelSpec, sample: &CovariateSample) -> Result<(f64, f64)> {
    let r = core_report(spec, sample)?;
    Ok((r.r2, r.f2_r))
}

/// Score-test effect f²_s = Ū′ Ī⁻¹ Ū at the population restricted solution.
///
/// Stage one solves Ê[U_λ(λ, 0)] = 0. Because E[Y | covariates] = μ*, this is
/// the restricted IRLS fit with outcome μ* on the covariate sample. Stage two
/// averages the score and information there. Under `Estimated`, the
/// dispersion is the population Pearson limit Ê[(σ² v(μ*) + (μ* − μ₀)²) / v(μ₀)].
pub fn score_f2(spec: &ModelSpec, sample: &CovariateSample, dispersion: DispersionRule) -> Result<f64> {
    sample.check(spec)?;
    let (n, r, p) = (sample.n(), sample.r, sample.p);
    if spec.beta.iter().all(|&b| b == 0.0) {
        return Ok(0.0);
    }
    let mut mu_star = Vec::with_capacity(n);
    for i in 0..n {
        let eta = dot(&spec.lambda, sample.z_row(i)) + dot(&spec.beta, sample.x_row(i));
        let mu = spec.link.inverse(eta);
        spec.variance.check(mu)?;
        mu_star.push(mu);
    }
    let zmat = DMatrix::from_row_slice(n, r, &sample.z);
    let opts = FitOptions {
        max_iter: 200,
        tol: 1e-12,
        init: InitRule::Coefficients(spec.lambda.clone()),
        fixed_sigma2: Some(1.0),
    };
    let fit = irls_core(&mu_star, &zmat, OutcomeKind::Real, spec.link, spec.variance, &opts)?;
    if !fit.converged {
        return Err(Error::NonConvergence {
            iterations: fit.iterations,
        });
    }
    let lambda0: Vec<f64> = fit.coef.iter().copied().collect();
    let k = r + p;
    let parts = sample.map_chunks(|rows| {
        let mut su = DVector::zeros(k);
        let mut si = DMatrix::zeros(k, k);
        let mut pearson = 0.0;
        let mut d = vec![0.0; k];
        for i in rows {
            d[..r].copy_from_slice(sample.z_row(i));
            d[r..].copy_from_slice(sample.x_row(i));
            let eta0 = dot(&lambda0, &d[..r]);
            let mu0 = spec.link.inverse(eta0);
            spec.variance.check(mu0)?;
            let v0 = spec.variance.v(mu0);
            let g = spec.link.dmu_deta(eta0);
            let resid = mu_star[i] - mu0;
            let u = g * resid / v0;
            let w = g * g / v0;
            for a in 0..k {
                su[a] += u * d[a];
                for b in 0..=a {
                    si[(a, b)] += w * d[a] * d[b];
                }
            }
            pearson += (spec.sigma2 * spec.variance.v(mu_star[i]) + resid * resid) / v0;
        }
        Ok((su, si, pearson))
    })?;
    let mut su = DVector::zeros(k);
    let mut si = DMatrix::zeros(k, k);
    let mut pearson = 0.0;
    for (a, b, c) in parts {
        su += a;
        si += b;
        pearson += c;
    }
    symmetrize_lower(&mut si);
    let sigma0 = match dispersion {
        DispersionRule::Estimated => pearson / n as f64,
        DispersionRule::Fixed(s) => s,
    };
    let chol = si.cholesky().ok_or(Error::SingularInformation)?;
    let q = su.dot(&chol.solve(&su));
    Ok((q / (n as f64 * sigma0)).max(0.0))
}

/// Every effect size on one covariate sample. `score` adds f²_s.
pub fn effect_sizes(
    spec: &ModelSpec,
    sample: &CovariateSample,
    score: Option<DispersionRule>,
) -> Result<EffectSizeReport> {
    let mut report = core_report(spec, sample)?;
    if let Some(rule) = score {
        report.f2_s = Some(score_f2(spec, sample, rule)?);
    }
    Ok(report)
}

/// Synthetic-mode convenience: draws `mc_size` rows from `design` and
/// evaluates every effect size.
pub fn synthetic_effect_sizes(
    spec: &ModelSpec,
    design: &CovariateDesign,
    mc_size: usize,
    seed: u64,
    score: Option<DispersionRule>,
) -> Result<EffectSizeReport> {
    let sample = CovariateSample::synthetic(design, mc_size, seed)?;
    effect_sizes(spec, &sample, score)
}
