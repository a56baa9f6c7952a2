//! Pilot-study planning: fit a model to pilot data, treat (λ̂, δβ̂) as truth
//! over the pilot's own covariate rows, and trace sample sizes along δ.

mod demo;
mod ingest;

pub use demo::{case_study_mapping, case_study_model, synthetic_case_study, CaseStudy};
pub use ingest::{read_pilot, ColumnKind, ColumnSpec, PilotData, PilotMapping};

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::ncp_for_power;
use crate::effectsize::{effect_sizes, CovariateSample, EffectSizeReport};
use crate::error::{domain, Error, Result};
use crate::estimation::{irls_fit, FitOptions, FitResult};
use crate::model::{Dataset, LinkFunction, ModelSpec, VarianceFunction};
use crate::power::sample_size_for_ncp;

/// `k` evenly spaced points on [lo, hi].
pub fn delta_grid(lo: f64, hi: f64, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::EmptyGrid);
    }
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && (hi > lo || (k == 1 && hi == lo))) {
        return Err(domain(format!("need 0 < lo < hi, got [{lo}, {hi}]")));
    }
    if k == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect())
}

/// 21 points on [0.5, 1.5].
pub fn default_delta_grid() -> Vec<f64> {
    (0..21).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaPoint {
    pub delta: f64,
    pub f2: f64,
    pub f2_phi: f64,
    pub f2_r: f64,
    pub phi: f64,
    pub r2: f64,
    pub n: u64,
    pub n_phi: u64,
    pub n_r: u64,
    pub ratio_phi: f64,
    pub ratio_r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PilotReport {
    pub fit: FitResult,
    /// Effect sizes at the fitted coefficients (δ = 1).
    pub effects: EffectSizeReport,
    /// Non-centrality reaching the target power.
    pub ncp: f64,
    pub df: u32,
    pub alpha: f64,
    pub target_power: f64,
    pub delta_curve: Vec<DeltaPoint>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if grid.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(domain("delta values must be finite and positive"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("delta grid must be strictly increasing"));
    }
    Ok(())
}

/// Fits the full model and sweeps the δ grid over the pilot's covariate rows.
pub fn pilot_analyze(
    data: &Dataset,
    link: LinkFunction,
    variance: VarianceFunction,
    alpha: f64,
    target_power: f64,
    delta_grid: &[f64],
) -> Result<PilotReport> {
    check_grid(delta_grid)?;
    let df = data.p() as u32;
    let ncp = ncp_for_power(df, alpha, target_power)?;
    let fit = irls_fit(data, link, variance, &FitOptions::default())?;
    if !fit.converged {
        return Err(Error::NonConvergence {
            iterations: fit.iterations,
        });
    }
    let sample = CovariateSample::from_dataset(data);
    let spec_at = |delta: f64| {
        ModelSpec::new(
            link,
            variance,
            fit.sigma2_hat,
            fit.lambda_hat.clone(),
            fit.beta_hat.iter().map(|b| delta * b).collect(),
        )
    };
    let effects = effect_sizes(&spec_at(1.0)?, &sample, None)?;
    let delta_curve = delta_grid
        .par_iter()
        .map(|&delta| {
            let rep = effect_sizes(&spec_at(delta)?, &sample, None)?;
            let n = sample_size_for_ncp(rep.f2, ncp)?;
            let n_phi = sample_size_for_ncp(rep.f2_phi, ncp)?;
            let n_r = sample_size_for_ncp(rep.f2_r, ncp)?;
            Ok(DeltaPoint {
                delta,
                f2: rep.f2,
                f2_phi: rep.f2_phi,
                f2_r: rep.f2_r,
                phi: rep.phi,
                r2: rep.r2,
                n,
                n_phi,
                n_r,
                ratio_phi: n_phi as f64 / n as f64,
                ratio_r: n_r as f64 / n as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PilotReport {
        fit,
        effects,
        ncp,
        df,
        alpha,
        target_power,
        delta_curve,
    })
}

/// Pilot analysis of a CSV plus mapping, with the column bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PilotOutput {
    pub rows_read: usize,
    pub rows_used: usize,
    pub rows_dropped: usize,
    pub z_names: Vec<String>,
    pub x_names: Vec<String>,
    pub report: PilotReport,
}

pub fn analyze_csv<R: Read>(
    input: R,
    mapping: &PilotMapping,
    alpha: f64,
    target_power: f64,
    delta_grid: &[f64],
) -> Result<PilotOutput> {
    let data = read_pilot(input, mapping)?;
    let report = pilot_analyze(
        &data.dataset,
        mapping.link,
        mapping.variance,
        alpha,
        target_power,
        delta_grid,
    )?;
    Ok(PilotOutput {
        rows_read: data.rows_read,
        rows_used: data.dataset.n(),
        rows_dropped: data.rows_dropped,
        z_names: data.z_names,
        x_names: data.x_names,
        report,
    })
}

pub const DELTA_CURVE_HEADER: [&str; 11] = [
    "delta",
    "f2",
    "f2_phi",
    "f2_r",
    "phi",
    "r2",
    "n",
    "n_phi",
    "n_r",
    "ratio_phi",
    "ratio_r",
];

pub fn write_delta_curve_csv<W: Write>(curve: &[DeltaPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DELTA_CURVE_HEADER)?;
    for p in curve {
        w.write_record([
            p.delta.to_string(),
            p.f2.to_string(),
            p.f2_phi.to_string(),
            p.f2_r.to_string(),
            p.phi.to_string(),
            p.r2.to_string(),
            p.n.to_string(),
            p.n_phi.to_string(),
            p.n_r.to_string(),
            p.ratio_phi.to_string(),
            p.ratio_r.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pilot() -> CaseStudy {
        synthetic_case_study(600, 5).unwrap()
    }

    #[test]
    fn default_grid() {
        let g = default_delta_grid();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 0.5);
        assert_eq!(g[10], 1.0);
        assert_eq!(g[20], 1.5);
        assert_eq!(delta_grid(0.5, 1.5, 3).unwrap(), [0.5, 1.0, 1.5]);
        assert!(matches!(delta_grid(0.5, 1.5, 0), Err(Error::EmptyGrid)));
    }

    #[test]
    fn grid_validation() {
        let cs = pilot();
        let d = read_pilot(cs.csv.as_bytes(), &cs.mapping).unwrap().dataset;
        let run = |g: &[f64]| pilot_analyze(&d, LinkFunction::Log, VarianceFunction::Mean, 0.05, 0.8, g);
        assert!(matches!(run(&[]), Err(Error::EmptyGrid)));
        assert!(run(&[1.0, 0.5]).is_err());
        assert!(run(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn curve_is_monotone_and_unit_delta_matches_effects() {
        let cs = pilot();
        let out = analyze_csv(cs.csv.as_bytes(), &cs.mapping, 0.05, 0.8, &default_delta_grid()).unwrap();
        let c = &out.report.delta_curve;
        for w in c.windows(2) {
            assert!(w[1].f2 > w[0].f2);
            assert!(w[1].n <= w[0].n);
        }
        let one = c.iter().find(|p| p.delta == 1.0).unwrap();
        assert_eq!(one.f2, out.report.effects.f2);
        assert_eq!(out.report.df, 4);
        assert_eq!(out.x_names.len(), 4);
        assert!(c.iter().all(|p| p.ratio_phi > 0.0 && p.ratio_r > 0.0));
    }

    #[test]
    fn curve_csv_shape() {
        let cs = pilot();
        let out = analyze_csv(cs.csv.as_bytes(), &cs.mapping, 0.05, 0.8, &[0.5, 1.0]).unwrap();
        let mut buf = Vec::new();
        write_delta_curve_csv(&out.report.delta_curve, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("delta,f2,f2_phi"));
    }
}
