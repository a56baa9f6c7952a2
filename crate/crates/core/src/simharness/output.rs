use std::io::Write;
use std::path::{Path, PathBuf};

use super::SimResult;
use crate::error::Result;

pub const RATES_HEADER: [&str; 10] = [
    "scenario",
    "label",
    "grid_value",
    "n_variant",
    "n",
    "rejections",
    "replicates",
    "rate",
    "ci_lo",
    "ci_hi",
];

pub const SIZES_HEADER: [&str; 19] = [
    "scenario",
    "grid_value",
    "f2",
    "mc_se_f2",
    "phi",
    "r2",
    "w_one",
    "f2_phi",
    "f2_r",
    "f2_s",
    "delta",
    "n",
    "n_phi",
    "n_r",
    "n_s",
    "ratio_phi",
    "ratio_r",
    "nonconverged",
    "failed",
];

/// One row per (grid point, sample-size variant, hypothesis).
pub fn write_rates_csv<W: Write>(results: &[SimResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RATES_HEADER)?;
    for res in results {
        for g in &res.grid {
            for row in &g.rows {
                w.write_record([
                    res.scenario.clone(),
                    row.label.clone(),
                    g.grid_value.to_string(),
                    row.n_variant.clone(),
                    row.n.to_string(),
                    row.rejections.to_string(),
                    row.replicates.to_string(),
                    row.rate.to_string(),
                    row.ci_lo.to_string(),
                    row.ci_hi.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per grid point with effect sizes and sample sizes.
pub fn write_sizes_csv<W: Write>(results: &[SimResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SIZES_HEADER)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for res in results {
        for g in &res.grid {
            let (e, s) = (&g.effects, &g.sizes);
            let nonconv: usize = g.rows.iter().map(|r| r.nonconverged).sum();
            let failed: usize = g.rows.iter().map(|r| r.failed).sum();
            w.write_record([
                res.scenario.clone(),
                g.grid_value.to_string(),
                e.f2.to_string(),
                e.mc_se_f2.to_string(),
                e.phi.to_string(),
                e.r2.to_string(),
                e.w_one.to_string(),
                e.f2_phi.to_string(),
                e.f2_r.to_string(),
                opt(e.f2_s.map(|v| v.to_string())),
                s.delta.to_string(),
                s.n.to_string(),
                s.n_phi.to_string(),
                s.n_r.to_string(),
                opt(s.n_s.map(|v| v.to_string())),
                s.ratio_phi().to_string(),
                s.ratio_r().to_string(),
                nonconv.to_string(),
                failed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `rates.csv`, `sizes.csv` and `result.json` under `dir`.
pub fn write_outputs(results: &[SimResult], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let rates = dir.join("rates.csv");
    let sizes = dir.join("sizes.csv");
    let json = dir.join("result.json");
    write_rates_csv(results, std::fs::File::create(&rates)?)?;
    write_sizes_csv(results, std::fs::File::create(&sizes)?)?;
    let mut f = std::fs::File::create(&json)?;
    serde_json::to_writer_pretty(&mut f, results)?;
    f.write_all(b"\n")?;
    Ok(vec![rates, sizes, json])
}
