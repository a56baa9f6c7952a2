//! Declarative simulation scenarios: effect sizes and implied sample sizes at
//! each grid point, then replicated tests under the null and the alternative.

mod output;
mod presets;

pub use output::{write_outputs, write_rates_csv, write_sizes_csv, RATES_HEADER, SIZES_HEADER};
pub use presets::{find_preset, preset_families, scenario_presets, PresetFamily, DEFAULT_RHO_GRID};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{check_admissible, gen_dataset, CovariateDesign, OutcomeCase};
use crate::distributions::{chisq_quantile, derive_stream, RngStream};
use crate::effectsize::{effect_sizes, CovariateSample, DispersionRule, EffectSizeReport};
use crate::error::{domain, Error, Result};
use crate::estimation::{irls_fit, restricted_fit, FitOptions};
use crate::inference::{score_statistic, wald_statistic};
use crate::model::{LinkFunction, ModelSpec};
use crate::power::{sample_sizes, SampleSizes};

const REPLICATE_DOMAIN: u64 = 0x7265_706c_6963_6174;
const EFFECT_DOMAIN: u64 = 0x6566_6665_6374_7321;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Wald,
    Score,
}

/// Grid swept by a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sweep {
    /// Copula correlation values with fixed coefficients.
    Rho { values: Vec<f64> },
    /// Values of the second predictor coefficient at a fixed correlation.
    Beta2 { rho: f64, values: Vec<f64> },
}

impl Sweep {
    pub fn values(&self) -> &[f64] {
        match self {
            Sweep::Rho { values } | Sweep::Beta2 { values, .. } => values,
        }
    }
}

fn default_replicates() -> usize {
    10_000
}
fn default_alpha() -> f64 {
    0.05
}
fn default_power() -> f64 {
    0.8
}
fn default_mc() -> usize {
    crate::effectsize::DEFAULT_MC_SIZE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub label: String,
    pub outcome_case: OutcomeCase,
    pub link: LinkFunction,
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    pub sweep: Sweep,
    pub test: TestKind,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_power")]
    pub target_power: f64,
    #[serde(default = "default_mc")]
    pub mc_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Dispersion handling in the fits and in f²_s.
    #[serde(default)]
    pub dispersion: DispersionRule,
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        if self.label.is_empty() {
            return Err(Error::InvalidInput("scenario label is empty".into()));
        }
        if self.sweep.values().is_empty() {
            return Err(Error::EmptyGrid);
        }
        if self.replicates == 0 {
            return Err(Error::InvalidInput("replicates must be at least 1".into()));
        }
        if self.mc_size == 0 {
            return Err(Error::InvalidInput("mc_size must be at least 1".into()));
        }
        if self.lambda.len() != 2 || self.beta.len() != 2 {
            return Err(Error::DimensionMismatch(
                "scenarios use lambda = (intercept, adjustor) and two predictor coefficients".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < self.target_power && self.target_power < 1.0) {
            return Err(domain(format!(
                "need 0 < alpha < target_power < 1, got {} and {}",
                self.alpha, self.target_power
            )));
        }
        self.outcome_case.validate()?;
        let rhos: Vec<f64> = match &self.sweep {
            Sweep::Rho { values } => values.clone(),
            Sweep::Beta2 { rho, values } => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(domain("beta2 grid values must be finite"));
                }
                vec![*rho]
            }
        };
        for rho in rhos {
            CovariateDesign::new(rho)?;
        }
        Ok(())
    }

    /// Model and copula design at grid value `g`.
    pub fn point(&self, g: f64) -> Result<(ModelSpec, CovariateDesign)> {
        let (rho, beta) = match &self.sweep {
            Sweep::Rho { .. } => (g, self.beta.clone()),
            Sweep::Beta2 { rho, .. } => (*rho, vec![self.beta[0], g]),
        };
        let spec = ModelSpec::new(
            self.link,
            self.outcome_case.variance_function(),
            self.outcome_case.sigma2(),
            self.lambda.clone(),
            beta,
        )?;
        Ok((spec, CovariateDesign::new(rho)?))
    }

    /// Sample-size variants simulated at each grid point.
    pub fn variants(&self) -> &'static [&'static str] {
        match self.test {
            TestKind::Wald => &["n", "n_phi", "n_r"],
            TestKind::Score => &["n_s", "n_phi", "n_r"],
        }
    }
}

/// Empirical rejection rate for one (grid point, variant, hypothesis).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n_variant: String,
    /// `type_i_error` under β = 0, `power` under the alternative.
    pub label: String,
    pub n: u64,
    pub rejections: usize,
    pub replicates: usize,
    /// Replicates whose fit did not converge; counted as non-rejections.
    pub nonconverged: usize,
    /// Replicates that raised an error; counted as non-rejections.
    pub failed: usize,
    pub rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl RateRow {
    fn new(n_variant: &str, label: &str, n: u64, tally: Tally, replicates: usize) -> Self {
        let q = tally.rejections as f64 / replicates as f64;
        let half = 1.96 * (q * (1.0 - q) / replicates as f64).sqrt();
        Self {
            n_variant: n_variant.into(),
            label: label.into(),
            n,
            rejections: tally.rejections,
            replicates,
            nonconverged: tally.nonconverged,
            failed: tally.failed,
            rate: q,
            ci_lo: q - half,
            ci_hi: q + half,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub grid_value: f64,
    pub effects: EffectSizeReport,
    pub sizes: SampleSizes,
    pub rows: Vec<RateRow>,
}

impl GridResult {
    pub fn row(&self, n_variant: &str, label: &str) -> Option<&RateRow> {
        self.rows.iter().find(|r| r.n_variant == n_variant && r.label == label)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub scenario: String,
    pub test: TestKind,
    pub seed: u64,
    pub replicates: usize,
    pub grid: Vec<GridResult>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Tally {
    rejections: usize,
    nonconverged: usize,
    failed: usize,
}

enum Outcome {
    Reject,
    Accept,
    NonConverged,
    Failed,
}

/// Effect sizes and implied sample sizes at every grid point, without
/// running any replicates.
pub fn scenario_sizes(s: &SimScenario, seed: u64) -> Result<Vec<(f64, EffectSizeReport, SampleSizes)>> {
    s.validate()?;
    s.sweep
        .values()
        .iter()
        .map(|&g| {
            let (spec, design) = s.point(g)?;
            let (report, sizes) = point_sizes(s, &spec, &design, seed)?;
            Ok((g, report, sizes))
        })
        .collect()
}

fn point_sizes(
    s: &SimScenario,
    spec: &ModelSpec,
    design: &CovariateDesign,
    seed: u64,
) -> Result<(EffectSizeReport, SampleSizes)> {
    // one covariate sample per correlation value, shared across a beta2 sweep
    let sample_seed = derive_stream(&[seed, EFFECT_DOMAIN, design.rho.to_bits()]);
    let sample = CovariateSample::synthetic(design, s.mc_size, sample_seed)?;
    check_admissible(spec, &s.outcome_case, &sample)?;
    let score = match s.test {
        TestKind::Score => Some(s.dispersion),
        TestKind::Wald => None,
    };
    let report = effect_sizes(spec, &sample, score)?;
    let sizes = sample_sizes(&report, spec.p() as u32, s.alpha, s.target_power)?;
    Ok((report, sizes))
}

fn one_replicate(
    s: &SimScenario,
    spec: &ModelSpec,
    design: &CovariateDesign,
    n: usize,
    crit: f64,
    opts: &FitOptions,
    rng: &mut RngStream,
) -> Outcome {
    let mut run = || -> Result<Option<f64>> {
        let data = gen_dataset(spec, design, &s.outcome_case, n, rng)?;
        let (fit, stat) = match s.test {
            TestKind::Wald => {
                let fit = irls_fit(&data, spec.link, spec.variance, opts)?;
                if !fit.converged {
                    return Ok(None);
                }
                let w = wald_statistic(&fit)?;
                (fit, w)
            }
            TestKind::Score => {
                let fit = restricted_fit(&data, spec.link, spec.variance, opts)?;
                if !fit.converged {
                    return Ok(None);
                }
                let st = score_statistic(&data, &fit)?;
                (fit, st)
            }
        };
        debug_assert!(fit.converged);
        Ok(Some(stat))
    };
    match run() {
        Ok(Some(stat)) if stat > crit => Outcome::Reject,
        Ok(Some(_)) => Outcome::Accept,
        Ok(None) => Outcome::NonConverged,
        Err(_) => Outcome::Failed,
    }
}

/// Runs every grid point. `progress(done, total)` is called after each grid
/// point completes.
pub fn run_scenario_with_progress(
    s: &SimScenario,
    seed: u64,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<SimResult> {
    s.validate()?;
    let opts = s.dispersion.fit_options();
    let total = s.sweep.values().len();
    let mut grid = Vec::with_capacity(total);
    for (gi, &g) in s.sweep.values().iter().enumerate() {
        let (spec, design) = s.point(g)?;
        let (effects, sizes) = point_sizes(s, &spec, &design, seed)?;
        let null_spec = spec.null();
        let crit = chisq_quantile(spec.p() as u32, 1.0 - s.alpha)?;
        let mut rows = Vec::new();
        for (vi, &variant) in s.variants().iter().enumerate() {
            let n = match variant {
                "n" => sizes.n,
                "n_phi" => sizes.n_phi,
                "n_r" => sizes.n_r,
                _ => sizes.n_s.ok_or_else(|| Error::ScenarioFailed("missing n_s".into()))?,
            };
            for (hi, (label, model)) in [("type_i_error", &null_spec), ("power", &spec)].into_iter().enumerate() {
                let outcomes: Vec<Outcome> = (0..s.replicates)
                    .into_par_iter()
                    .map(|rep| {
                        let stream = derive_stream(&[REPLICATE_DOMAIN, gi as u64, vi as u64, hi as u64, rep as u64]);
                        let mut rng = RngStream::new(seed, stream);
                        one_replicate(s, model, &design, n as usize, crit, &opts, &mut rng)
                    })
                    .collect();
                let mut tally = Tally::default();
                for o in outcomes {
                    match o {
                        Outcome::Reject => tally.rejections += 1,
                        Outcome::Accept => {}
                        Outcome::NonConverged => tally.nonconverged += 1,
                        Outcome::Failed => tally.failed += 1,
                    }
                }
                if tally.failed * 100 > s.replicates {
                    return Err(Error::ScenarioFailed(format!(
                        "{}: {} of {} replicates failed at grid value {g}, variant {variant}, {label}",
                        s.label, tally.failed, s.replicates
                    )));
                }
                rows.push(RateRow::new(variant, label, n, tally, s.replicates));
            }
        }
        grid.push(GridResult {
            grid_value: g,
            effects,
            sizes,
            rows,
        });
        progress(gi + 1, total);
    }
    Ok(SimResult {
        scenario: s.label.clone(),
        test: s.test,
        seed,
        replicates: s.replicates,
        grid,
    })
}

pub fn run_scenario(s: &SimScenario, seed: u64) -> Result<SimResult> {
    run_scenario_with_progress(s, seed, &|_, _| {})
}
