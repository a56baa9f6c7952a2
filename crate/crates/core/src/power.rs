//! Conversions between effect size, sample size and power.

use serde::{Deserialize, Serialize};

use crate::distributions::{chisq_quantile, ncchisq_cdf, ncp_for_power};
use crate::effectsize::EffectSizeReport;
use crate::error::{domain, Error, Result};

/// Largest sample size reported before giving up with `TooSmallEffect`.
pub const MAX_SAMPLE_SIZE: u64 = 1_000_000_000;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// 1 − F_{χ²_df(n f²)}(χ²_df quantile at 1 − α).
pub fn power_at(f2: f64, n: u64, df: u32, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(f2 >= 0.0 && f2.is_finite()) {
        return Err(domain(format!("f2 must be finite and >= 0, got {f2}")));
    }
    if n == 0 {
        return Err(domain("n must be positive"));
    }
    let crit = chisq_quantile(df, 1.0 - alpha)?;
    Ok(1.0 - ncchisq_cdf(crit, df, n as f64 * f2)?)
}

/// ⌈Δ / f²⌉ with Δ the non-centrality reaching `target_power`.
pub fn sample_size(f2: f64, df: u32, alpha: f64, target_power: f64) -> Result<u64> {
    let delta = ncp_for_power(df, alpha, target_power)?;
    sample_size_for_ncp(f2, delta)
}

/// ⌈Δ / f²⌉ for a precomputed Δ.
pub fn sample_size_for_ncp(f2: f64, delta: f64) -> Result<u64> {
    if !(f2 > 0.0 && f2.is_finite()) {
        return Err(domain(format!("f2 must be positive, got {f2}")));
    }
    let raw = (delta / f2).ceil().max(1.0);
    if !(raw <= MAX_SAMPLE_SIZE as f64) {
        return Err(Error::TooSmallEffect {
            f2,
            cap: MAX_SAMPLE_SIZE,
        });
    }
    let mut n = raw as u64;
    // guard against n f² rounding just below Δ
    if (n as f64) * f2 < delta {
        n += 1;
    }
    Ok(n)
}

/// Smallest f² reaching `target_power` with n observations: Δ / n.
pub fn required_f2(n: u64, df: u32, alpha: f64, target_power: f64) -> Result<f64> {
    if n == 0 {
        return Err(domain("n must be positive"));
    }
    Ok(ncp_for_power(df, alpha, target_power)? / n as f64)
}

/// f²_φ = w₁ φ² / 4.
pub fn f2_from_phi(phi: f64, w_one: f64) -> Result<f64> {
    if !(phi.is_finite() && w_one > 0.0 && w_one.is_finite()) {
        return Err(domain(format!(
            "need finite phi and positive w_one, got {phi}, {w_one}"
        )));
    }
    Ok(w_one * phi * phi / 4.0)
}

/// f²_R = R² / (1 − R²).
pub fn f2_from_r2(r2: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&r2) {
        return Err(domain(format!("R^2 must lie in [0, 1), got {r2}")));
    }
    Ok(r2 / (1.0 - r2))
}

/// Exactly one unknown among power, sample size and effect size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solve_for", rename_all = "snake_case")]
pub enum PowerQuery {
    Power { f2: f64, n: u64, df: u32, alpha: f64 },
    SampleSize { f2: f64, df: u32, alpha: f64, power: f64 },
    EffectSize { n: u64, df: u32, alpha: f64, power: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerAnswer {
    pub f2: f64,
    pub n: u64,
    pub power: f64,
    /// Non-centrality: n f² for a power query, the solved Δ otherwise.
    pub delta: f64,
    pub df: u32,
    pub alpha: f64,
}

pub fn solve(query: &PowerQuery) -> Result<PowerAnswer> {
    match *query {
        PowerQuery::Power { f2, n, df, alpha } => Ok(PowerAnswer {
            f2,
            n,
            power: power_at(f2, n, df, alpha)?,
            delta: n as f64 * f2,
            df,
            alpha,
        }),
        PowerQuery::SampleSize { f2, df, alpha, power } => {
            let delta = ncp_for_power(df, alpha, power)?;
            Ok(PowerAnswer {
                f2,
                n: sample_size_for_ncp(f2, delta)?,
                power,
                delta,
                df,
                alpha,
            })
        }
        PowerQuery::EffectSize { n, df, alpha, power } => {
            if n == 0 {
                return Err(domain("n must be positive"));
            }
            let delta = ncp_for_power(df, alpha, power)?;
            Ok(PowerAnswer {
                f2: delta / n as f64,
                n,
                power,
                delta,
                df,
                alpha,
            })
        }
    }
}

/// Sample sizes implied by each effect size in a report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSizes {
    pub delta: f64,
    pub n: u64,
    pub n_phi: u64,
    pub n_r: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_s: Option<u64>,
}

impl SampleSizes {
    pub fn ratio_phi(&self) -> f64 {
        self.n_phi as f64 / self.n as f64
    }

    pub fn ratio_r(&self) -> f64 {
        self.n_r as f64 / self.n as f64
    }
}

pub fn sample_sizes(report: &EffectSizeReport, df: u32, alpha: f64, target_power: f64) -> Result<SampleSizes> {
    let delta = ncp_for_power(df, alpha, target_power)?;
    Ok(SampleSizes {
        delta,
        n: sample_size_for_ncp(report.f2, delta)?,
        n_phi: sample_size_for_ncp(report.f2_phi, delta)?,
        n_r: sample_size_for_ncp(report.f2_r, delta)?,
        n_s: report.f2_s.map(|f| sample_size_for_ncp(f, delta)).transpose()?,
    })
}
