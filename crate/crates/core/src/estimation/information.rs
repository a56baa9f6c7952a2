use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{dot, mean_and_weight, Dataset, LinkFunction, ModelSpec, VarianceFunction};

/// Σᵢ wᵢ dᵢdᵢ′ with dᵢ = (Zᵢ, Xᵢ) and wᵢ evaluated at the model's coefficients.
pub fn information(data: &Dataset, spec: &ModelSpec) -> Result<DMatrix<f64>> {
    check_dims(data, spec)?;
    info_at(data, spec.link, spec.variance, spec.sigma2, &spec.lambda, &spec.beta)
}

pub(crate) fn check_dims(data: &Dataset, spec: &ModelSpec) -> Result<()> {
    if data.r() != spec.r() || data.p() != spec.p() {
        return Err(Error::DimensionMismatch(format!(
            "data has r = {}, p = {}; model has r = {}, p = {}",
            data.r(),
            data.p(),
            spec.r(),
            spec.p()
        )));
    }
    Ok(())
}

fn row(data: &Dataset, i: usize, buf: &mut [f64]) {
    let r = data.r();
    for (j, b) in buf[..r].iter_mut().enumerate() {
        *b = data.z[(i, j)];
    }
    for (j, b) in buf[r..r + data.p()].iter_mut().enumerate() {
        *b = data.x[(i, j)];
    }
}

pub(crate) fn info_at(
    data: &Dataset,
    link: LinkFunction,
    variance: VarianceFunction,
    sigma2: f64,
    lambda: &[f64],
    beta: &[f64],
) -> Result<DMatrix<f64>> {
    let k = data.r() + data.p();
    let coef: Vec<f64> = lambda.iter().chain(beta).copied().collect();
    let mut out = DMatrix::zeros(k, k);
    let mut d = vec![0.0; k];
    for i in 0..data.n() {
        row(data, i, &mut d);
        let (_, w) = mean_and_weight(link, variance, sigma2, dot(&coef, &d))?;
        for a in 0..k {
            let wa = w * d[a];
            for b in 0..=a {
                out[(a, b)] += wa * d[b];
            }
        }
    }
    symmetrize_lower(&mut out);
    Ok(out)
}

/// Summed quasi-score Σᵢ (dμ/dη)ᵢ (Yᵢ − μᵢ) / (σ² v(μᵢ)) · dᵢ.
pub fn quasi_score(
    data: &Dataset,
    link: LinkFunction,
    variance: VarianceFunction,
    sigma2: f64,
    lambda: &[f64],
    beta: &[f64],
) -> Result<DVector<f64>> {
    let k = data.r() + data.p();
    if lambda.len() != data.r() || beta.len() != data.p() {
        return Err(Error::DimensionMismatch(
            "coefficient lengths do not match the data".into(),
        ));
    }
    let coef: Vec<f64> = lambda.iter().chain(beta).copied().collect();
    let mut u = DVector::zeros(k);
    let mut d = vec![0.0; k];
    for i in 0..data.n() {
        row(data, i, &mut d);
        let eta = dot(&coef, &d);
        let mu = link.inverse(eta);
        variance.check(mu)?;
        let s = link.dmu_deta(eta) * (data.y[i] - mu) / (sigma2 * variance.v(mu));
        for a in 0..k {
            u[a] += s * d[a];
        }
    }
    Ok(u)
}

pub(crate) fn symmetrize_lower(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for a in 0..k {
        for b in (a + 1)..k {
            m[(a, b)] = m[(b, a)];
        }
    }
}

/// I_XX − I_XZ I_ZZ⁻¹ I_ZX for the partition with the first `r` rows and
/// columns as the Z block.
pub fn schur_complement(info: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    let k = info.nrows();
    if info.ncols() != k || r == 0 || r > k {
        return Err(Error::DimensionMismatch(format!(
            "cannot partition a {}x{} matrix at {r}",
            info.nrows(),
            info.ncols()
        )));
    }
    let p = k - r;
    let izz = info.view((0, 0), (r, r)).into_owned();
    let izx = info.view((0, r), (r, p)).into_owned();
    let ixx = info.view((r, r), (p, p)).into_owned();
    let chol = izz.cholesky().ok_or(Error::SingularBlock)?;
    let solved = chol.solve(&izx);
    let mut s = ixx - izx.transpose() * solved;
    // exact symmetry
    for a in 0..p {
        for b in (a + 1)..p {
            let m = 0.5 * (s[(a, b)] + s[(b, a)]);
            s[(a, b)] = m;
            s[(b, a)] = m;
        }
    }
    Ok(s)
}
