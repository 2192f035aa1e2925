use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hawkesmf::Method;
use hawkesmf_cli::bench::run_bench;
use hawkesmf_cli::fit::FitOutput;
use hawkesmf_cli::sweep::run_sweep;
use hawkesmf_cli::ExperimentConfig;
use serde_json::{json, Value};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hawkesmf"));
    cmd.env_remove("HAWKESMF_THREADS").env("RUST_LOG", "error");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn minimal() -> Value {
    json!({
        "d": 1, "p": 1, "kernel": {"family": "exp", "betas": [1.0]},
        "blocks": {"n_blocks": 1, "phi_norm": 0.0},
        "mu": 1.0, "T": 100.0, "seed": 7, "methods": ["mf"]
    })
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn minimal_simulation_writes_about_one_hundred_events() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", &minimal());
    let out = dir.path().join("ev.csv");
    let res = run(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,node"));
    let n = lines.count();
    // Poisson(100): within 3 standard deviations
    assert!((70..=130).contains(&n), "{n} events");
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("seed=7") && stdout.contains("lambda_bar=") && stdout.contains("phi_norm_1="));

    let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("ev.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["config"]["estimator"]["mle_max_iter"], 1000);
}

#[test]
fn unstable_configuration_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = minimal();
    v["blocks"]["phi_norm"] = json!(1.1);
    let cfg = write_config(dir.path(), "cfg.json", &v);
    let res = run(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("ev.csv"))]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("||Phi||_1 = 1.1"));
}

#[test]
fn runtime_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&["fit", "--events", s(&dir.path().join("missing.csv")), "--method", "mf", "--betas", "1", "--T", "10", "--d", "1"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = minimal();
    v["d"] = json!(3);
    v["blocks"] = json!({"n_blocks": 1, "phi_norm": 0.5});
    let cfg = write_config(dir.path(), "cfg.json", &v);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&a)]).status.success());
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&b)]).status.success());
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&c), "--seed", "8"]).status.success());
    let (a, b, c) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), std::fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
}

fn fit_file(dir: &Path, events: &Path, extra: &[&str]) -> FitOutput {
    let out = dir.join("fit.json");
    let mut args = vec!["fit", "--events", s(events), "--out", s(&out)];
    args.extend_from_slice(extra);
    let res = run(&args);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("nll=") && stdout.contains("preprocess_s="), "{stdout}");
    serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap()
}

#[test]
fn fit_command_runs_every_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = minimal();
    v["d"] = json!(2);
    v["mu"] = json!(2.0);
    v["T"] = json!(5000.0);
    let cfg = write_config(dir.path(), "cfg.json", &v);
    let events = dir.path().join("ev.csv");
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&events)]).status.success());

    let mf = fit_file(dir.path(), &events, &["--method", "mf"]);
    assert_eq!(mf.method, Method::Mf);
    assert_eq!(mf.seed, Some(7));
    assert!(mf.config.is_some());
    let rates = {
        let text = std::fs::read_to_string(&events).unwrap();
        let mut c = [0.0; 2];
        for line in text.lines().skip(1) {
            c[line.split(',').nth(1).unwrap().parse::<usize>().unwrap()] += 1.0;
        }
        c.map(|n| n / 5000.0)
    };
    let se = mf.result.std_errors().unwrap();
    for i in 0..2 {
        assert!((mf.result.theta[(i, 0)] - rates[i]).abs() <= 3.0 * se[(i, 0)]);
        for a in 1..3 {
            assert!(mf.result.theta[(i, a)].abs() <= 3.0 * se[(i, a)]);
        }
    }

    let mle = fit_file(dir.path(), &events, &["--method", "mle", "--max-iter", "0"]);
    assert_eq!(mle.result.iterations, Some(0));
    assert_eq!(mle.result.converged, Some(false));
    for i in 0..2 {
        assert_eq!(mle.result.theta[(i, 0)], rates[i]);
    }

    let cf = fit_file(dir.path(), &events, &["--method", "cf", "--betas", "1.0"]);
    let raw: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    assert_eq!(raw["result"]["method"], "CF");
    assert_eq!(cf.n_events, mf.n_events);

    let approx = fit_file(dir.path(), &events, &["--method", "mf_approx", "--config", s(&cfg)]);
    assert_eq!(approx.method, Method::MfApprox);
}

#[test]
fn fit_without_kernel_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("ev.csv");
    std::fs::write(&events, "t,node\n0.5,0\n").unwrap();
    let res = run(&["fit", "--events", s(&events), "--method", "mf", "--T", "1", "--d", "1"]);
    assert_eq!(res.status.code(), Some(2));
}

fn sweep_config() -> Value {
    json!({
        "d": 8, "p": 1, "kernel": {"betas": [1.0]},
        "blocks": {"n_blocks": 2, "phi_norm": 0.3},
        "mu": 1.0, "T": 1000.0, "seed": 3, "n_seeds": 2, "methods": ["mf", "mle"],
        "sweep": {"T": [1000.0, 2000.0]}
    })
}

#[test]
fn sweep_writes_one_row_per_point_method_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sweep.json", &sweep_config());
    let out = dir.path().join("sweep.csv");
    let res = run(&["sweep", "--config", s(&cfg), "--out", s(&out), "--threads", "2"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let echoed = ExperimentConfig::from_json(header.strip_prefix("# config=").unwrap()).unwrap();
    assert_eq!(echoed.n_seeds, 2);
    let columns = lines.next().unwrap();
    for col in ["mode", "T", "method", "rel_error", "abs_error", "nll", "r_empirical", "r_theoretical", "bound", "error"] {
        assert!(columns.split(',').any(|c| c == col), "missing column {col}");
    }
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2 * 2 * 2);
    assert!(rows[0].starts_with("standard,8,1000.0,0.3,1,1,3,mf,"), "{}", rows[0]);
    assert!(rows[7].starts_with("standard,8,2000.0,0.3,1,1,4,mle,"), "{}", rows[7]);
}

#[test]
fn sweep_rows_are_reproducible_apart_from_timings() {
    let cfg = ExperimentConfig::from_json(&sweep_config().to_string()).unwrap();
    let strip = |rows: Vec<hawkesmf_cli::sweep::SweepRow>| {
        rows.into_iter()
            .map(|r| hawkesmf_cli::sweep::SweepRow { preprocess_s: None, solve_s: None, total_s: None, ..r })
            .collect::<Vec<_>>()
    };
    let one = strip(run_sweep(&cfg).unwrap());
    let two = strip(run_sweep(&cfg).unwrap());
    assert_eq!(one, two);
    assert!(one.iter().all(|r| r.error.is_none()));
    assert!(one.iter().filter(|r| r.method == "mf").all(|r| r.bound.is_some() && r.se_abs.is_some()));
}

#[test]
fn misspecified_decay_sweep_fits_each_rate() {
    let mut v = sweep_config();
    v["n_seeds"] = json!(1);
    v["methods"] = json!(["mf"]);
    v["sweep"] = json!({"mode": "beta_misspec", "beta_in": [0.5, 1.0, 2.0]});
    let cfg = ExperimentConfig::from_json(&v.to_string()).unwrap();
    let rows = run_sweep(&cfg).unwrap();
    let got: Vec<&str> = rows.iter().map(|r| r.beta_in.as_str()).collect();
    assert_eq!(got, ["0.5", "1", "2"]);
    assert!(rows.iter().all(|r| r.beta_true == "1"));
}

#[test]
fn failures_are_recorded_per_row() {
    let mut v = sweep_config();
    v["n_seeds"] = json!(1);
    v["T"] = json!(0.05);
    v["sweep"] = json!({});
    v["methods"] = json!(["mf", "mle"]);
    let cfg = ExperimentConfig::from_json(&v.to_string()).unwrap();
    let rows = run_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.error.is_some()));
}

#[test]
fn bench_accounting_and_determinism() {
    let cfg = ExperimentConfig::from_json(
        &json!({
            "d": 4, "p": 1, "kernel": {"betas": [1.0]},
            "blocks": {"n_blocks": 2, "phi_norm": 0.3},
            "mu": 1.0, "T": 2000.0, "seed": 1, "methods": ["mf", "mle", "cf"]
        })
        .to_string(),
    )
    .unwrap();
    let (rows, summaries) = run_bench(&cfg).unwrap();
    let (again, summaries2) = run_bench(&cfg).unwrap();
    assert_eq!(summaries[0].mle_trajectory, summaries2[0].mle_trajectory);
    assert_eq!(rows.len(), again.len());

    let get = |method: &str, phase: &str| rows.iter().find(|r| r.method == method && r.phase == phase).unwrap().seconds.unwrap();
    let split = get("mf", "preprocess") + get("mf", "solve");
    assert!((split - get("mf", "total")).abs() <= 0.01 * get("mf", "total"));
    let mle = summaries[0].totals.iter().find(|t| t.0 == Method::Mle).unwrap();
    assert!(mle.3, "the converged fit meets its own target");
    assert!(summaries[0].mle_to_target.unwrap() <= mle.1);
    assert!(rows.iter().filter(|r| r.phase == "iter").count() == summaries[0].mle_trajectory.len());
}

#[test]
fn bench_command_embeds_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = minimal();
    v["methods"] = json!(["mf", "mle"]);
    let cfg = write_config(dir.path(), "bench.json", &v);
    let out = dir.path().join("bench.csv");
    let res = bin().args(["bench", "--config", s(&cfg), "--out", s(&out)]).env("HAWKESMF_THREADS", "1").output().unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# config={"));
    assert!(text.lines().nth(1).unwrap().starts_with("seed,method,phase,iteration,seconds,nll,target,reached"));
}

#[test]
fn shipped_recipes_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 6);
}
