//! Command-line front end. `run` is the whole program minus process exit so
//! tests can drive it in-process.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::datagen::CovariateDesign;
use crate::effectsize::{synthetic_effect_sizes, DispersionRule, DEFAULT_MC_SIZE};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::planner::{
    analyze_csv, default_delta_grid, delta_grid, synthetic_case_study, write_delta_curve_csv, PilotMapping,
};
use crate::power::{f2_from_phi, f2_from_r2, solve, PowerQuery};
use crate::simharness::{
    find_preset, preset_families, run_scenario_with_progress, write_outputs, write_rates_csv, SimResult, SimScenario,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "qlpower",
    version,
    about = "Power and sample size for quasi-likelihood regression"
)]
pub struct Cli {
    /// Seed for randomized commands; generated and printed when absent.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample size for a target power, or power at a sample size.
    Power(PowerArgs),
    /// Monte Carlo effect sizes for a model over the copula covariate design.
    Effectsize(EffectsizeArgs),
    /// Run a simulation scenario or preset.
    Simulate(SimulateArgs),
    /// Fit a pilot dataset and trace sample sizes along the δ grid.
    Pilot(PilotArgs),
    /// Write a synthetic pilot CSV and its mapping.
    DemoPilot(DemoPilotArgs),
    /// List the scenario presets.
    Presets,
    /// Serve the HTTP API.
    #[cfg(feature = "server")]
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("effect").required(true).args(["f2", "phi", "r2"]))]
#[command(group = clap::ArgGroup::new("target").required(true).args(["power", "n"]))]
pub struct PowerArgs {
    #[arg(long)]
    pub f2: Option<f64>,
    /// 2SLiP; needs --w-one.
    #[arg(long, requires = "w_one")]
    pub phi: Option<f64>,
    #[arg(long, requires = "phi")]
    pub w_one: Option<f64>,
    /// P2R2.
    #[arg(long)]
    pub r2: Option<f64>,
    #[arg(long)]
    pub df: u32,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Target power; solves for n.
    #[arg(long)]
    pub power: Option<f64>,
    /// Sample size; solves for power.
    #[arg(long)]
    pub n: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EffectsizeArgs {
    /// ModelSpec JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// CovariateDesign JSON.
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MC_SIZE)]
    pub mc: usize,
    /// Also compute the score-test effect f²_s.
    #[arg(long)]
    pub score: bool,
    /// Hold the dispersion fixed in f²_s instead of its Pearson limit.
    #[arg(long, requires = "score")]
    pub fixed_dispersion: Option<f64>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["scenario", "preset"]))]
pub struct SimulateArgs {
    /// SimScenario JSON.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Preset family or scenario label.
    #[arg(long)]
    pub preset: Option<String>,
    /// Directory for rates.csv, sizes.csv and result.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the replicate count.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Override the Monte Carlo size for effect sizes.
    #[arg(long)]
    pub mc: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PilotArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// PilotMapping JSON.
    #[arg(long)]
    pub mapping: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.8)]
    pub power: f64,
    /// lo:hi:count, default 0.5:1.5:21.
    #[arg(long)]
    pub delta_range: Option<String>,
}

#[derive(Debug, Args)]
pub struct DemoPilotArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[cfg(feature = "server")]
#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value_t = crate::api::DEFAULT_MAX_REPLICATES)]
    pub max_replicates: usize,
}

/// Output of `power`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerOutput {
    /// Which effect-size form was given: `f2`, `phi` or `r2`.
    pub input: &'static str,
    pub f2: f64,
    pub n: u64,
    pub power: f64,
    pub delta: f64,
    pub df: u32,
    pub alpha: f64,
}

struct Io<'a> {
    out: &'a mut (dyn Write + Send),
    err: &'a mut (dyn Write + Send),
}

fn parse_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::InvalidInput(format!("delta range {s:?} is not lo:hi:count"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let k: usize = parts[2].parse().map_err(|_| bad())?;
    delta_grid(lo, hi, k)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn resolve_seed(given: Option<u64>, io: &mut Io) -> Result<u64> {
    Ok(match given {
        Some(s) => s,
        None => {
            let s = rand::random::<u64>();
            writeln!(io.err, "seed: {s}")?;
            s
        }
    })
}

/// One header row plus one value row; nested values are written as JSON.
fn write_flat_csv<T: Serialize>(value: &T, out: &mut dyn Write) -> Result<()> {
    let v = serde_json::to_value(value)?;
    let obj = v
        .as_object()
        .ok_or_else(|| Error::InvalidInput("value is not an object".into()))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(obj.keys())?;
    w.write_record(obj.values().map(|v| match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Null => String::new(),
        other => other.to_string(),
    }))?;
    w.flush()?;
    Ok(())
}

fn emit<T: Serialize>(value: &T, format: Format, io: &mut Io) -> Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *io.out, value)?;
            writeln!(io.out)?;
        }
        Format::Csv => write_flat_csv(value, io.out)?,
    }
    Ok(())
}

pub fn power_output(a: &PowerArgs) -> Result<PowerOutput> {
    let (input, f2) = match (a.f2, a.phi, a.w_one, a.r2) {
        (Some(f2), None, None, None) => ("f2", f2),
        (None, Some(phi), Some(w), None) => ("phi", f2_from_phi(phi, w)?),
        (None, None, None, Some(r2)) => ("r2", f2_from_r2(r2)?),
        _ => {
            return Err(Error::InvalidInput(
                "give exactly one of --f2, --phi with --w-one, or --r2".into(),
            ))
        }
    };
    let query = match (a.power, a.n) {
        (Some(power), None) => PowerQuery::SampleSize {
            f2,
            df: a.df,
            alpha: a.alpha,
            power,
        },
        (None, Some(n)) => PowerQuery::Power {
            f2,
            n,
            df: a.df,
            alpha: a.alpha,
        },
        _ => return Err(Error::InvalidInput("give exactly one of --power or --n".into())),
    };
    let ans = solve(&query)?;
    Ok(PowerOutput {
        input,
        f2: ans.f2,
        n: ans.n,
        power: ans.power,
        delta: ans.delta,
        df: ans.df,
        alpha: ans.alpha,
    })
}

#[derive(Serialize)]
struct EffectsizeOutput {
    seed: u64,
    #[serde(flatten)]
    report: crate::effectsize::EffectSizeReport,
}

fn cmd_effectsize(a: &EffectsizeArgs, cli: &Cli, io: &mut Io) -> Result<()> {
    let spec: ModelSpec = read_json(&a.model)?;
    spec.validate()?;
    let design: CovariateDesign = read_json(&a.design)?;
    design.validate()?;
    let seed = resolve_seed(cli.seed, io)?;
    let score = a.score.then_some(match a.fixed_dispersion {
        Some(s) => DispersionRule::Fixed(s),
        None => DispersionRule::Estimated,
    });
    let report = synthetic_effect_sizes(&spec, &design, a.mc, seed, score)?;
    emit(&EffectsizeOutput { seed, report }, cli.format, io)
}

fn load_scenarios(a: &SimulateArgs) -> Result<Vec<SimScenario>> {
    let mut scenarios = match (&a.scenario, &a.preset) {
        (Some(path), None) => vec![read_json::<SimScenario>(path)?],
        (None, Some(name)) => {
            find_preset(name).ok_or_else(|| Error::InvalidInput(format!("unknown preset {name:?}")))?
        }
        _ => return Err(Error::InvalidInput("give exactly one of --scenario or --preset".into())),
    };
    for s in &mut scenarios {
        if let Some(r) = a.replicates {
            s.replicates = r;
        }
        if let Some(m) = a.mc {
            s.mc_size = m;
        }
        s.validate()?;
    }
    Ok(scenarios)
}

fn cmd_simulate(a: &SimulateArgs, cli: &Cli, io: &mut Io) -> Result<()> {
    let scenarios = load_scenarios(a)?;
    let file_seed = scenarios.iter().find_map(|s| s.seed);
    let seed = resolve_seed(cli.seed.or(file_seed), io)?;
    let mut results: Vec<SimResult> = Vec::with_capacity(scenarios.len());
    for s in &scenarios {
        let label = s.label.clone();
        let err = std::sync::Mutex::new(&mut *io.err);
        let progress = |done: usize, total: usize| {
            if let Ok(mut e) = err.lock() {
                let _ = writeln!(e, "{label}: {done}/{total}");
            }
        };
        results.push(run_scenario_with_progress(s, seed, &progress)?);
    }
    match &a.out {
        Some(dir) => {
            for p in write_outputs(&results, dir)? {
                writeln!(io.out, "{}", p.display())?;
            }
        }
        None => match cli.format {
            Format::Json => {
                serde_json::to_writer_pretty(&mut *io.out, &results)?;
                writeln!(io.out)?;
            }
            Format::Csv => write_rates_csv(&results, &mut *io.out)?,
        },
    }
    Ok(())
}

fn cmd_pilot(a: &PilotArgs, cli: &Cli, io: &mut Io) -> Result<()> {
    let mapping: PilotMapping = read_json(&a.mapping)?;
    let grid = match &a.delta_range {
        Some(r) => parse_range(r)?,
        None => default_delta_grid(),
    };
    let file = std::fs::File::open(&a.data)?;
    let out = analyze_csv(file, &mapping, a.alpha, a.power, &grid)?;
    match cli.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *io.out, &out)?;
            writeln!(io.out)?;
        }
        Format::Csv => write_delta_curve_csv(&out.report.delta_curve, &mut *io.out)?,
    }
    Ok(())
}

fn cmd_demo_pilot(a: &DemoPilotArgs, cli: &Cli, io: &mut Io) -> Result<()> {
    let seed = resolve_seed(cli.seed, io)?;
    let cs = synthetic_case_study(a.n, seed)?;
    std::fs::create_dir_all(&a.out)?;
    let data = a.out.join("pilot.csv");
    let mapping = a.out.join("mapping.json");
    std::fs::write(&data, &cs.csv)?;
    std::fs::write(&mapping, serde_json::to_string_pretty(&cs.mapping)? + "\n")?;
    writeln!(io.out, "{}", data.display())?;
    writeln!(io.out, "{}", mapping.display())?;
    Ok(())
}

fn cmd_presets(cli: &Cli, io: &mut Io) -> Result<()> {
    let families = preset_families();
    match cli.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *io.out, &families)?;
            writeln!(io.out)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut *io.out);
            w.write_record(["family", "scenario", "test", "grid_points"])?;
            for f in &families {
                for s in &f.scenarios {
                    let test = match s.test {
                        crate::simharness::TestKind::Wald => "wald",
                        crate::simharness::TestKind::Score => "score",
                    };
                    w.write_record([
                        f.name.as_str(),
                        s.label.as_str(),
                        test,
                        &s.sweep.values().len().to_string(),
                    ])?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli, io: &mut Io) -> Result<()> {
    match &cli.command {
        Command::Power(a) => emit(&power_output(a)?, cli.format, io),
        Command::Effectsize(a) => cmd_effectsize(a, cli, io),
        Command::Simulate(a) => cmd_simulate(a, cli, io),
        Command::Pilot(a) => cmd_pilot(a, cli, io),
        Command::DemoPilot(a) => cmd_demo_pilot(a, cli, io),
        Command::Presets => cmd_presets(cli, io),
        #[cfg(feature = "server")]
        Command::Serve(a) => {
            let config = crate::api::ApiConfig {
                max_replicates: a.max_replicates,
                ..Default::default()
            };
            writeln!(io.err, "listening on {}:{}", a.host, a.port)?;
            crate::api::serve_blocking(&a.host, a.port, config)
        }
    }
}

/// Runs the CLI and returns the process exit code: 0 on success, 1 on a
/// domain error, 2 on a usage or input error.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let display = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let target: &mut (dyn Write + Send) = if display { out } else { err };
            let _ = write!(target, "{}", e.render());
            return if display { 0 } else { 2 };
        }
    };
    let mut io = Io { out, err };
    let result = match cli.threads {
        Some(0) => Err(Error::InvalidInput("--threads must be at least 1".into())),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| dispatch(&cli, &mut io)),
            Err(e) => Err(Error::InvalidInput(format!("cannot build thread pool: {e}"))),
        },
        None => dispatch(&cli, &mut io),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(io.err, "error [{}]: {e}", e.code());
            if e.is_domain() {
                1
            } else {
                2
            }
        }
    }
}
