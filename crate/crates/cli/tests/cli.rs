use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sieve-gmrf"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_kind(o: &Output) -> String {
    let err = String::from_utf8(o.stderr.clone()).unwrap();
    let line = err.lines().last().expect("error line");
    let v: serde_json::Value = serde_json::from_str(line).expect("error json");
    v["error"]["kind"].as_str().unwrap().to_string()
}

#[test]
fn run_writes_results_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"replications": 2, "chain": {"iterations": 60, "burn_in": 10}}"#,
    )
    .unwrap();
    let mut csvs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = run(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--graph",
            "torus:8x8+5",
            "--levels",
            "0,1,2",
            "--wavelets",
            "haar,d4",
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("wavelet"));
        for f in ["results.csv", "results.json", "results.txt", "replications.csv"] {
            assert!(out.join(f).exists(), "{f}");
        }
        csvs.push(std::fs::read_to_string(out.join("results.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0].lines().count(), 7);
    assert!(csvs[0].starts_with("wavelet,j,mean_l2,sd_l2,ref_mean_l2,ref_sd_l2,n_reps\n"));
}

#[test]
fn run_dry_run_applies_overrides() {
    let o = run(&["run", "--preset", "univariate", "--reps", "3", "--dry-run"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["replications"], 3);
    assert_eq!(v["function"]["kind"], "univariate");
}

#[test]
fn eta_out_of_range_is_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"etas": [0.12, 0.4, 0.12]}"#).unwrap();
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--graph", "torus:6x6"]);
    assert!(!o.status.success());
    assert_eq!(error_kind(&o), "eta_out_of_range");
}

#[test]
fn eta_range_of_even_torus() {
    let o = run(&["eta-range", "--graph", "torus:6x6"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["eta_min"].as_f64().unwrap() + 0.25).abs() < 1e-6);
    assert!((v["eta_max"].as_f64().unwrap() - 0.25).abs() < 1e-6);
}

#[test]
fn simulate_fit_predict() {
    let dir = tempfile::tempdir().unwrap();
    let field = dir.path().join("field.csv");
    let o = run(&[
        "simulate", "--graph", "torus:5x5", "--eta", "-0.1", "--method", "direct", "--seed", "2",
        "--out", field.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&field).unwrap();
    assert_eq!(text.lines().count(), 26);

    let data = dir.path().join("data.csv");
    let rows: String = (0..40)
        .map(|i| {
            let x = (i as f64 + 0.5) / 40.0;
            format!("{x},{}\n", 1.0 + 2.0 * x)
        })
        .collect();
    std::fs::write(&data, format!("x,y\n{rows}")).unwrap();
    let fit = dir.path().join("fit.json");
    let o = run(&[
        "fit", "--data", data.to_str().unwrap(), "--wavelet", "d4", "--level", "1", "--out",
        fit.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&[
        "predict", "--fit", fit.to_str().unwrap(), "--data", data.to_str().unwrap(), "--with-response",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(out.lines().next(), Some("x1,yhat"));
    for line in out.lines().skip(1) {
        let (x, y) = line.split_once(',').unwrap();
        let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
        // D4 reproduces linear functions
        assert!((y - (1.0 + 2.0 * x)).abs() < 1e-3, "{line}");
    }
}

#[test]
fn phi_rate_and_covering() {
    let o = run(&["phi", "--wavelet", "haar", "--resolution", "2"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 6);

    let o = run(&["rate-curve", "--sizes", "256,1024"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("size,rate\n256,"));

    let o = run(&["covering", "--v", "2", "--width", "1", "--eps", "0.1"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let e = std::f64::consts::E;
    let want = 3f64.ln() + 2.0 * (20.0 * e * (30.0 * e).ln()).ln();
    assert!((v["log_covering_bound"].as_f64().unwrap() - want).abs() < 1e-12);

    let o = run(&["covering", "--v", "2", "--width", "1", "--eps", "0.25"]);
    assert!(!o.status.success());
    assert_eq!(error_kind(&o), "invalid_argument");
}

#[test]
fn missing_file_and_bad_threads() {
    let o = run(&["fit", "--data", "/nonexistent/data.csv"]);
    assert!(!o.status.success());
    assert_eq!(error_kind(&o), "io");

    let o = bin()
        .env("SIEVE_GMRF_THREADS", "zero")
        .args(["eta-range", "--graph", "torus:4x4"])
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert_eq!(error_kind(&o), "cli");
}
