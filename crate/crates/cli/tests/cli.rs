use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn dirinfo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dirinfo")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn rows(text: &str) -> Vec<(u32, u32)> {
    text.lines()
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect()
}

/// First-order plug-in DI `I(Y_1; X_0 X_1 | Y_0)` by direct counting.
fn direct_di(rows: &[(u32, u32)]) -> f64 {
    let n = (rows.len() - 1) as f64;
    let mut full = HashMap::new();
    let mut xs = HashMap::new();
    let mut yy = HashMap::new();
    let mut ypast = HashMap::new();
    for w in rows.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        *full.entry((x0, y0, x1, y1)).or_insert(0.0) += 1.0;
        *xs.entry((x0, x1, y0)).or_insert(0.0) += 1.0;
        *yy.entry((y0, y1)).or_insert(0.0) += 1.0;
        *ypast.entry(y0).or_insert(0.0) += 1.0;
    }
    full.iter()
        .map(|(&(x0, y0, x1, y1), &c)| c / n * (c * ypast[&y0] / (xs[&(x0, x1, y0)] * yy[&(y0, y1)])).ln())
        .sum()
}

#[test]
fn simulate_copy_model_shifts_x_into_y() {
    let out = dirinfo(&["simulate", "--model", "copy", "--n", "10", "--seed", "5"]);
    assert!(out.status.success());
    let r = rows(std::str::from_utf8(&out.stdout).unwrap());
    assert_eq!(r.len(), 11);
    for t in 1..r.len() {
        assert_eq!(r[t].1, r[t - 1].0);
    }
}

#[test]
fn simulate_is_deterministic_in_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let out = dirinfo(&[
            "simulate",
            "--model",
            "noisy-copy:0.1",
            "--n",
            "500",
            "--seed",
            "42",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let other = dirinfo(&["simulate", "--model", "noisy-copy:0.1", "--n", "500", "--seed", "43"]);
    assert_ne!(other.stdout, std::fs::read(&a).unwrap());
}

#[test]
fn simulate_million_steps_under_a_second() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.csv");
    let start = Instant::now();
    let out = dirinfo(&[
        "simulate",
        "--model",
        "copy",
        "--n",
        "1000000",
        "--out",
        path.to_str().unwrap(),
    ]);
    let secs = start.elapsed().as_secs_f64();
    assert!(out.status.success());
    assert!(secs < 1.0, "{secs}");
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1_000_001);
}

#[test]
fn test_report_matches_golden_file() {
    let out = dirinfo(&["test", "--data", golden("noisy_copy.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let got = stdout_json(&out);
    let want: Value = serde_json::from_str(&std::fs::read_to_string(golden("report.json")).unwrap()).unwrap();
    let (got, want) = (got.as_object().unwrap(), want.as_object().unwrap());
    assert_eq!(got.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>());
    for (key, w) in want {
        let g = &got[key];
        match (g.as_f64(), w.as_f64()) {
            (Some(g), Some(w)) => assert!((g - w).abs() <= 1e-12 * w.abs().max(1e-300), "{key}: {g} vs {w}"),
            _ => assert_eq!(g, w, "{key}"),
        }
    }
}

#[test]
fn test_report_agrees_with_direct_count() {
    let text = std::fs::read_to_string(golden("noisy_copy.csv")).unwrap();
    let r = rows(&text);
    let oracle = direct_di(&r);
    let report = stdout_json(&dirinfo(&[
        "test",
        "--data",
        golden("noisy_copy.csv").to_str().unwrap(),
    ]));
    let est = report["estimate_nats"].as_f64().unwrap();
    assert!((est - oracle).abs() < 1e-12, "{est} vs {oracle}");
    let n = (r.len() - 1) as f64;
    let stat = report["statistic"].as_f64().unwrap();
    assert!((stat - 2.0 * n * oracle).abs() < 1e-9 * stat);
}

#[test]
fn copy_model_data_rejects_with_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("copy.csv");
    assert!(dirinfo(&[
        "simulate",
        "--model",
        "copy",
        "--n",
        "10000",
        "--seed",
        "1",
        "--out",
        data.to_str().unwrap()
    ])
    .status
    .success());
    let report = dir.path().join("report.json");
    let out = dirinfo(&[
        "test",
        "--data",
        data.to_str().unwrap(),
        "--alpha",
        "0.05",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(v["decision"], "reject");
}

#[test]
fn independent_data_mostly_retains() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("independent.json");
    // X and Y are independent i.i.d. fair bits
    std::fs::write(
        &model,
        r#"{"k": 1, "m": 2, "ell": 2, "transition": [[0.25,0.25,0.25,0.25],[0.25,0.25,0.25,0.25],[0.25,0.25,0.25,0.25],[0.25,0.25,0.25,0.25]], "initial": [0.25,0.25,0.25,0.25]}"#,
    )
    .unwrap();
    let data = dir.path().join("d.csv");
    let mut retained = 0;
    for seed in 0..9 {
        let seed = seed.to_string();
        dirinfo(&[
            "simulate",
            "--model",
            model.to_str().unwrap(),
            "--n",
            "10000",
            "--seed",
            &seed,
            "--out",
            data.to_str().unwrap(),
        ]);
        let code = dirinfo(&["test", "--data", data.to_str().unwrap()]).status.code();
        assert!(matches!(code, Some(0) | Some(3)));
        retained += (code == Some(0)) as usize;
    }
    assert!(retained >= 5, "{retained} of 9 retained");
}

#[test]
fn malformed_file_exits_one_and_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "0,1\n1,0\n1;0\n").unwrap();
    let out = dirinfo(&["test", "--data", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn out_of_range_symbol_with_explicit_alphabet() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "0,1\n1,0\n2,0\n0,0\n").unwrap();
    let out = dirinfo(&["estimate", "--data", data.to_str().unwrap(), "--m", "2", "--ell", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn missing_file_exits_one() {
    let out = dirinfo(&["estimate", "--data", "/nonexistent/data.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/data.csv"));
}

#[test]
fn bits_flag_rescales_estimate() {
    let path = golden("noisy_copy.csv");
    let nats = stdout_json(&dirinfo(&["estimate", "--data", path.to_str().unwrap()]));
    let bits = stdout_json(&dirinfo(&["estimate", "--data", path.to_str().unwrap(), "--bits"]));
    assert_eq!(nats["units"], "nats");
    assert_eq!(bits["units"], "bits");
    let (n, b) = (nats["estimate"].as_f64().unwrap(), bits["estimate"].as_f64().unwrap());
    assert!((b * std::f64::consts::LN_2 - n).abs() < 1e-15);

    let report = stdout_json(&dirinfo(&["test", "--data", path.to_str().unwrap(), "--bits"]));
    assert!((report["estimate_bits"].as_f64().unwrap() - b).abs() < 1e-15);
}

#[test]
fn mi_test_uses_x_column() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    // X alternates deterministically, so consecutive symbols are fully dependent
    let text: String = (0..1001).map(|i| format!("{},{}\n", i % 2, (i / 7) % 2)).collect();
    std::fs::write(&data, text).unwrap();
    let out = dirinfo(&["test", "--data", data.to_str().unwrap(), "--mi"]);
    assert_eq!(out.status.code(), Some(3));
    let v = stdout_json(&out);
    assert_eq!(v["dof"], 1);
    assert!(v["ell"].is_null());
    assert!((v["estimate_nats"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    let out = dirinfo(&["test", "--data", data.to_str().unwrap(), "--mi", "--k", "2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn variance_of_model_file() {
    let v = stdout_json(&dirinfo(&[
        "variance",
        "--model",
        golden("model.json").to_str().unwrap(),
    ]));
    assert_eq!(v["estimator"], "di");
    assert!(v["sigma_sq"].as_f64().unwrap() > 0.0);
    let copy = stdout_json(&dirinfo(&["variance", "--model", "copy"]));
    assert!((copy["rate"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    assert!(copy["sigma_sq"].as_f64().unwrap().abs() < 1e-12);
    let iid = stdout_json(&dirinfo(&["variance", "--model", "iid:3", "--bits"]));
    assert_eq!(iid["estimator"], "mi");
    assert!(iid["sigma_sq"].as_f64().unwrap().abs() < 1e-10);
    assert_eq!(dirinfo(&["variance", "--model", "copy", "--mi"]).status.code(), Some(1));
}

#[test]
fn experiment_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let out = dirinfo(&[
            "experiment",
            "--kind",
            "chi2-null",
            "--model",
            "iid:2",
            "--trials",
            "50",
            "--n",
            "1000",
            "--seed",
            "9",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let csv = std::fs::read_to_string(&a).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "trial,n,i_hat,statistic,p_value");
    assert_eq!(csv.lines().count(), 51);
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["kind"], "chi2-null");
    assert_eq!(summary["dof"], 1);
    assert!(summary["ks_distance"].as_f64().is_some());
}

#[test]
fn experiment_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(golden("model.json"), dir.path().join("model.json")).unwrap();
    let config = dir.path().join("exp.json");
    std::fs::write(
        &config,
        r#"{"kind": "rate-dichotomy", "model": "model.json", "trials": 4, "n": [256, 512, 1024], "seed": 3}"#,
    )
    .unwrap();
    let out = dirinfo(&["experiment", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "trial,n,i_hat,abs_error");
    assert_eq!(csv.lines().count(), 1 + 4 * 3);

    let grid = dirinfo(&["experiment", "--config", config.to_str().unwrap(), "--n", "2^8..2^10"]);
    assert_eq!(grid.stdout, csv.into_bytes());
}

#[test]
fn experiment_rejects_bad_grid() {
    let out = dirinfo(&[
        "experiment",
        "--kind",
        "rate-dichotomy",
        "--model",
        "copy",
        "--trials",
        "2",
        "--n",
        "512,256",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("strictly increasing"));
}
