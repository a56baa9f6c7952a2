use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use qlpower::cli::run;
use qlpower::simharness::{find_preset, SimScenario, Sweep, RATES_HEADER};

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn qlpower(args: &[&str]) -> Outcome {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(
        std::iter::once("qlpower").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn json(o: &Outcome) -> serde_json::Value {
    assert_eq!(o.code, 0, "stderr: {}", o.stderr);
    serde_json::from_str(&o.stdout).unwrap()
}

fn small_scenario(dir: &Path, replicates: usize) -> String {
    let mut s: SimScenario = find_preset("wald-count-log-poisson").unwrap().remove(0);
    s.sweep = Sweep::Rho { values: vec![0.0, 0.3] };
    s.replicates = replicates;
    s.mc_size = 50_000;
    let path = dir.join("scenario.json");
    std::fs::write(&path, serde_json::to_string(&s).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn power_sample_size_from_f2() {
    let v = json(&qlpower(&[
        "power", "--f2", "0.022", "--df", "4", "--alpha", "0.05", "--power", "0.8",
    ]));
    assert_eq!(v["n"], 543);
    assert!((v["delta"].as_f64().unwrap() - 11.94).abs() < 0.01);
}

#[test]
fn power_sample_size_from_r2() {
    let v = json(&qlpower(&["power", "--r2", "0.020", "--df", "4", "--power", "0.8"]));
    let f2 = v["f2"].as_f64().unwrap();
    assert_eq!(f2, 0.020 / 0.980);
    let delta = v["delta"].as_f64().unwrap();
    assert_eq!(v["n"].as_u64().unwrap(), (delta / f2).ceil() as u64);
    assert_eq!(v["n"], 585);
}

#[test]
fn power_from_n_matches_library() {
    let v = json(&qlpower(&[
        "power", "--phi", "0.1", "--w-one", "2.5", "--df", "2", "--n", "300",
    ]));
    let f2 = qlpower::power::f2_from_phi(0.1, 2.5).unwrap();
    assert_eq!(v["f2"].as_f64().unwrap(), f2);
    assert_eq!(
        v["power"].as_f64().unwrap(),
        qlpower::power::power_at(f2, 300, 2, 0.05).unwrap()
    );
}

#[test]
fn power_csv_is_one_row() {
    let o = qlpower(&[
        "--format", "csv", "power", "--f2", "0.022", "--df", "4", "--power", "0.8",
    ]);
    assert_eq!(o.code, 0);
    let lines: Vec<&str> = o.stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "input,f2,n,power,delta,df,alpha");
    assert!(lines[1].starts_with("f2,0.022,543,"));
}

#[test]
fn exit_codes() {
    assert_eq!(qlpower(&["power", "--f2", "0", "--df", "4", "--power", "0.8"]).code, 1);
    assert_eq!(
        qlpower(&["power", "--f2", "0.02", "--r2", "0.02", "--df", "4", "--power", "0.8"]).code,
        2
    );
    assert_eq!(qlpower(&["power", "--f2", "0.02", "--df", "4"]).code, 2);
    assert_eq!(
        qlpower(&["power", "--f2", "0.02", "--df", "4", "--power", "0.8", "--bogus"]).code,
        2
    );
    assert_eq!(qlpower(&["--help"]).code, 0);
    assert_eq!(qlpower(&["--version"]).code, 0);
    assert_eq!(
        qlpower(&[
            "effectsize",
            "--model",
            "/nonexistent.json",
            "--design",
            "/nonexistent.json"
        ])
        .code,
        2
    );
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_qlpower");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap();
    let ok = status(&["power", "--f2", "0.022", "--df", "4", "--power", "0.8"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("543"));
    assert_eq!(
        status(&["power", "--f2", "0", "--df", "4", "--power", "0.8"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(status(&["power", "--nope"]).status.code(), Some(2));
}

fn effectsize_inputs(dir: &Path, beta: [f64; 2]) -> (String, String) {
    let model = dir.join("model.json");
    let design = dir.join("design.json");
    std::fs::write(
        &model,
        format!(
            r#"{{"link":"log","variance":"mean","sigma2":1.0,"lambda":[1.0,0.15],"beta":[{},{}]}}"#,
            beta[0], beta[1]
        ),
    )
    .unwrap();
    std::fs::write(&design, r#"{"rho":0.3}"#).unwrap();
    (model.to_str().unwrap().to_owned(), design.to_str().unwrap().to_owned())
}

#[test]
fn effectsize_zero_beta_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (m, d) = effectsize_inputs(dir.path(), [0.0, 0.0]);
    let v = json(&qlpower(&[
        "--seed",
        "1",
        "effectsize",
        "--model",
        &m,
        "--design",
        &d,
        "--mc",
        "20000",
    ]));
    for key in ["f2", "phi", "r2", "f2_phi", "f2_r"] {
        assert_eq!(v[key].as_f64().unwrap(), 0.0, "{key}");
    }
}

#[test]
fn effectsize_se_shrinks_with_mc() {
    let dir = tempfile::tempdir().unwrap();
    let (m, d) = effectsize_inputs(dir.path(), [0.1, 0.25]);
    let se = |mc: &str| {
        json(&qlpower(&[
            "--seed",
            "3",
            "effectsize",
            "--model",
            &m,
            "--design",
            &d,
            "--mc",
            mc,
        ]))["mc_se_f2"]
            .as_f64()
            .unwrap()
    };
    let ratio = se("200000") / se("400000");
    assert!((ratio - 2f64.sqrt()).abs() < 0.05, "{ratio}");
}

#[test]
fn randomized_commands_print_generated_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (m, d) = effectsize_inputs(dir.path(), [0.1, 0.25]);
    let o = qlpower(&["effectsize", "--model", &m, "--design", &d, "--mc", "1000"]);
    assert_eq!(o.code, 0);
    let line = o.stderr.lines().find(|l| l.starts_with("seed: ")).expect("seed line");
    let seed: u64 = line["seed: ".len()..].parse().unwrap();
    assert_eq!(json(&o)["seed"].as_u64().unwrap(), seed);
    // the printed seed reproduces the run
    let again = qlpower(&[
        "--seed",
        &seed.to_string(),
        "effectsize",
        "--model",
        &m,
        "--design",
        &d,
        "--mc",
        "1000",
    ]);
    assert_eq!(again.stdout, o.stdout);
}

#[test]
fn simulate_csv_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path(), 200);
    let one = qlpower(&[
        "--seed",
        "42",
        "--threads",
        "1",
        "--format",
        "csv",
        "simulate",
        "--scenario",
        &scenario,
    ]);
    let four = qlpower(&[
        "--seed",
        "42",
        "--threads",
        "4",
        "--format",
        "csv",
        "simulate",
        "--scenario",
        &scenario,
    ]);
    assert_eq!(one.code, 0, "{}", one.stderr);
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(one.stdout.lines().next().unwrap(), RATES_HEADER.join(","));
    assert!(one.stderr.contains(": 2/2"));
}

#[test]
fn simulate_writes_output_files() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path(), 100);
    let out = dir.path().join("out");
    let o = qlpower(&[
        "--seed",
        "5",
        "simulate",
        "--scenario",
        &scenario,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    for f in ["rates.csv", "sizes.csv", "result.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let result: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(result[0]["seed"], 5);
}

#[test]
fn simulate_smoke_within_a_minute() {
    let start = Instant::now();
    let o = qlpower(&[
        "--seed",
        "9",
        "--format",
        "csv",
        "simulate",
        "--preset",
        "wald-count-log-poisson",
        "--replicates",
        "500",
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(start.elapsed() < Duration::from_secs(60), "{:?}", start.elapsed());
    // header plus 7 grid points × 3 variants × 2 hypotheses
    assert_eq!(o.stdout.lines().count(), 1 + 7 * 6);
}

#[test]
fn simulate_rejects_bad_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    std::fs::write(&path, "{\"label\": 3}").unwrap();
    assert_eq!(
        qlpower(&["--seed", "1", "simulate", "--scenario", path.to_str().unwrap()]).code,
        2
    );
    assert_eq!(
        qlpower(&["--seed", "1", "simulate", "--preset", "no-such-preset"]).code,
        2
    );
}

#[test]
fn demo_pilot_then_pilot() {
    let dir = tempfile::tempdir().unwrap();
    let o = qlpower(&[
        "--seed",
        "2",
        "demo-pilot",
        "--n",
        "800",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let data = dir.path().join("pilot.csv");
    let mapping = dir.path().join("mapping.json");
    let (data, mapping) = (data.to_str().unwrap(), mapping.to_str().unwrap());

    let v = json(&qlpower(&[
        "pilot",
        "--data",
        data,
        "--mapping",
        mapping,
        "--delta-range",
        "0.5:1.5:11",
    ]));
    assert_eq!(v["rows_used"], 800);
    assert_eq!(v["report"]["delta_curve"].as_array().unwrap().len(), 11);
    assert_eq!(v["x_names"].as_array().unwrap().len(), 4);

    let csv = qlpower(&["--format", "csv", "pilot", "--data", data, "--mapping", mapping]);
    assert_eq!(csv.code, 0);
    assert_eq!(csv.stdout.lines().count(), 1 + 21);

    assert_eq!(
        qlpower(&[
            "pilot",
            "--data",
            data,
            "--mapping",
            mapping,
            "--delta-range",
            "1:0.5:3"
        ])
        .code,
        1
    );
}

#[test]
fn presets_lists_ten_families() {
    let v = json(&qlpower(&["presets"]));
    assert_eq!(v.as_array().unwrap().len(), 10);
    let csv = qlpower(&["--format", "csv", "presets"]);
    assert!(csv.stdout.starts_with("family,scenario,test,grid_points\n"));
}
