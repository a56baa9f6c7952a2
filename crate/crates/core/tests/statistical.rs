//! Larger-sample checks with fixed seeds: copula marginals, local agreement
//! of the tests, Monte Carlo exactness of the effect sizes and an
//! independent quadrature oracle for f² at ρ = 0.

use nalgebra::{Matrix2, Vector2};

use qlpower::datagen::{coefficient_search, gen_covariates, gen_dataset, CovariateDesign, OutcomeCase, SearchOptions};
use qlpower::distributions::{ncp_for_power, RngStream};
use qlpower::effectsize::{effect_sizes, CovariateSample};
use qlpower::estimation::{irls_fit, restricted_fit, FitOptions};
use qlpower::inference::{score_statistic, wald_statistic};
use qlpower::model::{LinkFunction, ModelSpec, VarianceFunction};

/// f² = β′(M_xx − M_xz M_zz⁻¹ M_zx)β at ρ = 0, with Z = (1, U), U uniform and
/// three equiprobable categories. `w` maps η to the weight. Composite Simpson
/// in u.
fn f2_quadrature(lambda: [f64; 2], beta: [f64; 2], w: impl Fn(f64) -> f64) -> f64 {
    let m = 4000;
    let h = 1.0 / m as f64;
    let mut mzz = Matrix2::zeros();
    let mut mxz = Matrix2::zeros();
    let mut mxx = Vector2::zeros();
    for c in 0..3 {
        let b = if c == 0 { 0.0 } else { beta[c - 1] };
        for k in 0..=m {
            let u = k as f64 * h;
            let simpson = if k == 0 || k == m {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let wt = simpson * h / 3.0 / 3.0 * w(lambda[0] + lambda[1] * u + b);
            let z = Vector2::new(1.0, u);
            mzz += wt * z * z.transpose();
            if c > 0 {
                mxz.set_row(c - 1, &(mxz.row(c - 1) + wt * z.transpose()));
                mxx[c - 1] += wt;
            }
        }
    }
    let cond = Matrix2::from_diagonal(&mxx) - mxz * mzz.try_inverse().unwrap() * mxz.transpose();
    let b = Vector2::new(beta[0], beta[1]);
    (b.transpose() * cond * b)[(0, 0)]
}

fn poisson(beta: [f64; 2]) -> ModelSpec {
    ModelSpec::new(
        LinkFunction::Log,
        VarianceFunction::Mean,
        1.0,
        vec![1.0, 0.15],
        beta.to_vec(),
    )
    .unwrap()
}

#[test]
fn copula_marginals() {
    let n = 100_000;
    for (i, rho) in [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6].into_iter().enumerate() {
        let cols = gen_covariates(
            &CovariateDesign::new(rho).unwrap(),
            n,
            &mut RngStream::new(31, i as u64),
        )
        .unwrap();
        let mut z = cols.z.clone();
        z.sort_by(f64::total_cmp);
        let d = z
            .iter()
            .enumerate()
            .map(|(k, &x)| ((k + 1) as f64 / n as f64 - x).max(x - k as f64 / n as f64))
            .fold(0.0, f64::max);
        // 1% Kolmogorov critical value
        assert!(d < 1.628 / (n as f64).sqrt(), "rho {rho}: D = {d}");
        let se = (1.0 / 3.0 * 2.0 / 3.0 / n as f64).sqrt();
        for c in 0..3 {
            let freq = cols.category.iter().filter(|&&k| k == c).count() as f64 / n as f64;
            assert!((freq - 1.0 / 3.0).abs() < 4.0 * se, "rho {rho} category {c}: {freq}");
        }
    }
}

#[test]
fn wald_and_score_agree_locally() {
    let design = CovariateDesign::new(0.3).unwrap();
    let spec = poisson([0.02, 0.03]);
    let opts = FitOptions::default();
    let (link, var) = (LinkFunction::Log, VarianceFunction::Mean);
    let (mut ws, mut ss) = (Vec::new(), Vec::new());
    for rep in 0..60 {
        let data = gen_dataset(
            &spec,
            &design,
            &OutcomeCase::poisson(),
            10_000,
            &mut RngStream::new(77, rep),
        )
        .unwrap();
        ws.push(wald_statistic(&irls_fit(&data, link, var, &opts).unwrap()).unwrap());
        ss.push(score_statistic(&data, &restricted_fit(&data, link, var, &opts).unwrap()).unwrap());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mw, ms) = (mean(&ws), mean(&ss));
    let cov: f64 = ws.iter().zip(&ss).map(|(a, b)| (a - mw) * (b - ms)).sum();
    let vw: f64 = ws.iter().map(|a| (a - mw).powi(2)).sum();
    let vs: f64 = ss.iter().map(|b| (b - ms).powi(2)).sum();
    let corr = cov / (vw * vs).sqrt();
    assert!(corr > 0.99, "correlation {corr}");
}

#[test]
fn constant_weight_f2_phi_matches_f2() {
    let cases = [
        (
            LinkFunction::Log,
            VarianceFunction::MeanSquared,
            0.16,
            [1.0, 0.15],
            [0.1, 0.15],
        ),
        (
            LinkFunction::Identity,
            VarianceFunction::Unit,
            0.5,
            [4.0, 0.4],
            [0.4, 0.81],
        ),
    ];
    for (rho, (link, var, s2, l, b)) in [0.0, 0.3, 0.6].into_iter().flat_map(|r| cases.map(|c| (r, c))) {
        let spec = ModelSpec::new(link, var, s2, l.to_vec(), b.to_vec()).unwrap();
        let sample = CovariateSample::synthetic(&CovariateDesign::new(rho).unwrap(), 200_000, 5).unwrap();
        let r = effect_sizes(&spec, &sample, None).unwrap();
        assert!(
            (r.f2_phi - r.f2).abs() <= 4.0 * r.mc_se_f2,
            "{link:?}/{var:?} rho {rho}: {} vs {}",
            r.f2_phi,
            r.f2
        );
    }
}

#[test]
fn f2_non_increasing_in_rho() {
    let spec = poisson([0.1, 0.25]);
    let mut prev = f64::INFINITY;
    for rho in [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6] {
        let sample = CovariateSample::synthetic(&CovariateDesign::new(rho).unwrap(), 200_000, 11).unwrap();
        let f2 = effect_sizes(&spec, &sample, None).unwrap().f2;
        assert!(f2 <= prev, "rho {rho}: {f2} > {prev}");
        prev = f2;
    }
}

#[test]
fn monte_carlo_f2_matches_quadrature() {
    let beta = [0.1, 0.25];
    let exact = f2_quadrature([1.0, 0.15], beta, f64::exp);
    // frozen from the quadrature oracle
    assert!((exact - 0.035_545_14).abs() < 1e-8, "{exact}");
    let sample = CovariateSample::synthetic(&CovariateDesign::new(0.0).unwrap(), 1_000_000, 2).unwrap();
    let r = effect_sizes(&poisson(beta), &sample, None).unwrap();
    assert!((r.f2 - exact).abs() <= 4.0 * r.mc_se_f2, "{} vs {exact}", r.f2);
}

#[test]
fn coefficient_search_hits_target() {
    let delta = ncp_for_power(2, 0.05, 0.8).unwrap();
    let design = CovariateDesign::new(0.0).unwrap();
    let opts = SearchOptions {
        mc_size: 200_000,
        seed: 4,
        ..Default::default()
    };
    let out = coefficient_search(400, &[1.0, 0.15], 0.1, delta, &poisson([0.1, 0.25]), &design, &opts).unwrap();
    assert!(out.n.abs_diff(400) <= 1, "n = {}", out.n);
    let exact_n = (delta / f2_quadrature([1.0, 0.15], [0.1, out.beta2], f64::exp)).ceil();
    assert!(
        (exact_n - 400.0).abs() <= 4.0,
        "quadrature n = {exact_n} at beta2 {}",
        out.beta2
    );
}
