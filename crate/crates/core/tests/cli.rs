use std::path::Path;
use std::process::{Command, Output};

fn swarmdec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swarmdec"))
        .args(args)
        .current_dir(dir)
        .env_remove("SWARMDEC_SEED")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = swarmdec(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    swarmdec(dir, args).status.code().unwrap()
}

/// Data rows of a CSV written by the binary, split into fields.
fn rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect()
}

fn fixed_points(text: &str) -> Vec<serde_json::Value> {
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    serde_json::from_str(&body).unwrap()
}

#[test]
fn drift_curve_and_its_complement() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "drift",
            "--agents",
            "101",
            "--group",
            "7",
            "--rules",
            "MMM",
            "--epsilon",
            "0",
            "--grid",
            "201",
            "--out",
            "mmm0.csv",
        ],
    );
    ok(
        d,
        &[
            "drift",
            "--agents",
            "101",
            "--group",
            "7",
            "--rules",
            "mmm",
            "--epsilon",
            "0",
            "--grid",
            "201",
            "--out",
            "inv0.csv",
        ],
    );
    let text = std::fs::read_to_string(d.join("mmm0.csv")).unwrap();
    assert!(text.starts_with("# swarmdec "));
    assert!(text
        .lines()
        .next()
        .unwrap()
        .ends_with("agents=101 group=7 rules=MMM epsilon=0 seed=0"));
    assert_eq!(text.lines().nth(1), Some("z,dzdt"));

    let a = rows(&d.join("mmm0.csv"));
    let b = rows(&d.join("inv0.csv"));
    assert_eq!(a.len(), 201);
    assert_eq!(a[0], vec![-1.0, 0.0]);
    assert_eq!(a[200], vec![1.0, 0.0]);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x[0], y[0]);
        assert_eq!(x[1], -y[1]);
    }
}

#[test]
fn drift_rejects_short_polarity_string() {
    let dir = tempfile::tempdir().unwrap();
    let out = swarmdec(dir.path(), &["drift", "--rules", "MM", "--group", "7"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("length 2") && err.contains("expected 3"),
        "{err}"
    );
}

#[test]
fn drift_empirical_writes_sibling_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "drift",
            "--agents",
            "21",
            "--group",
            "5",
            "--rules",
            "Mm",
            "--grid",
            "11",
            "--empirical",
            "--samples",
            "200",
            "--seed",
            "5",
            "--out",
            "c.csv",
            "--plot-script",
        ],
    );
    let mc = rows(&d.join("c.empirical.csv"));
    assert_eq!(mc.len(), 22);
    let script = std::fs::read_to_string(d.join("c.gp")).unwrap();
    assert!(script.contains("c.csv"));
    assert_eq!(code(d, &["drift", "--empirical", "--samples", "10"]), 2);
}

#[test]
fn probs_rows_normalized_and_noise_independent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "probs", "--agents", "101", "--group", "7", "--out", "p7.csv",
        ],
    );
    ok(
        d,
        &[
            "probs",
            "--agents",
            "101",
            "--group",
            "7",
            "--epsilon",
            "0.1",
            "--out",
            "p7n.csv",
        ],
    );
    let p = rows(&d.join("p7.csv"));
    assert_eq!(p.len(), 102);
    for r in &p {
        assert_eq!(r.len(), 9);
        let s: f64 = r[1..].iter().sum();
        assert!((s - 1.0).abs() <= 1e-12);
    }
    let body = |f: &str| -> Vec<String> {
        std::fs::read_to_string(d.join(f))
            .unwrap()
            .lines()
            .skip(1)
            .map(String::from)
            .collect()
    };
    assert_eq!(body("p7.csv"), body("p7n.csv"));
}

#[test]
fn simulate_reaches_consensus_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = |out: &'static str| {
        vec![
            "simulate",
            "--rules",
            "MMM",
            "--group",
            "7",
            "--epsilon",
            "0",
            "--events",
            "100000",
            "--seed",
            "7",
            "--init-z",
            "0.0099",
            "--out",
            out,
        ]
    };
    let first = ok(d, &args("a.csv"));
    let second = ok(d, &args("b.csv"));
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(
        std::fs::read(d.join("a.csv")).unwrap(),
        std::fs::read(d.join("b.csv")).unwrap()
    );

    let summary: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(summary["final_z"].as_f64().unwrap().abs(), 1.0);
    assert_eq!(summary["initial_count_x1"], 51);
    assert_eq!(summary["seed"], 7);

    let text = std::fs::read_to_string(d.join("a.csv")).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "time,event,k,count_x1,z");
}

#[test]
fn simulate_rejects_out_of_range_start() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(dir.path(), &["simulate", "--init-z", "2.0"]), 2);
    assert_eq!(code(dir.path(), &["simulate", "--init-k", "102"]), 2);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_swarmdec"))
        .args(["simulate", "--events", "10"])
        .env("SWARMDEC_SEED", "99")
        .current_dir(dir.path())
        .output()
        .unwrap();
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["seed"], 99);
    let out = Command::new(env!("CARGO_BIN_EXE_swarmdec"))
        .args(["simulate", "--events", "10"])
        .env("SWARMDEC_SEED", "abc")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fixed_points_of_minority_rules() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        dir.path(),
        &[
            "fixed-points",
            "--rules",
            "mmm",
            "--group",
            "7",
            "--epsilon",
            "0",
        ],
    );
    let fps = fixed_points(&String::from_utf8(out.stdout).unwrap());
    let got: Vec<(f64, &str)> = fps
        .iter()
        .map(|p| (p["z"].as_f64().unwrap(), p["stability"].as_str().unwrap()))
        .collect();
    assert_eq!(got.len(), 3);
    assert_eq!(got[0], (-1.0, "unstable"));
    assert!(got[1].0.abs() < 1e-6 && got[1].1 == "stable");
    assert_eq!(got[2], (1.0, "unstable"));
    for p in &fps {
        let b = p["bracket"].as_array().unwrap();
        assert!(b[0].as_f64().unwrap() <= p["z"].as_f64().unwrap());
    }
}

#[test]
fn fixed_points_with_noise_move_inside() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "fixed-points",
            "--rules",
            "MMM",
            "--group",
            "7",
            "--epsilon",
            "0.1",
            "--out",
            "fp.json",
        ],
    );
    let fps = fixed_points(&std::fs::read_to_string(dir.path().join("fp.json")).unwrap());
    let stable: Vec<f64> = fps
        .iter()
        .filter(|p| p["stability"] == "stable")
        .map(|p| p["z"].as_f64().unwrap())
        .collect();
    assert_eq!(stable.len(), 2);
    assert!(stable.iter().all(|z| z.abs() < 1.0 - 1.0 / 101.0));
}

#[test]
fn rulesets_listing() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = String::from_utf8(ok(d, &["rulesets", "--group", "7"]).stdout).unwrap();
    let labels: Vec<&str> = out
        .lines()
        .filter(|l| l.chars().all(|c| c == 'M' || c == 'm') && !l.is_empty())
        .collect();
    assert_eq!(labels.len(), 8);
    assert_eq!(out.matches("->").count(), 8 * 6);
    let out = String::from_utf8(ok(d, &["rulesets", "--group", "5"]).stdout).unwrap();
    assert_eq!(
        out.split("\n\n").filter(|b| !b.trim().is_empty()).count(),
        4
    );
    assert_eq!(code(d, &["rulesets", "--group", "4"]), 2);
}

#[test]
fn schema_file_drives_rules() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("r.txt"),
        "# Mm\nX1+4X2 -> 5X2\n2X1+3X2 -> 3X1+2X2\n3X1+2X2 -> 2X1+3X2\n4X1+X2 -> 5X1\n",
    )
    .unwrap();
    ok(
        d,
        &[
            "drift", "--schema", "r.txt", "--grid", "11", "--out", "s.csv",
        ],
    );
    ok(
        d,
        &["drift", "--rules", "Mm", "--grid", "11", "--out", "r.csv"],
    );
    assert_eq!(
        std::fs::read(d.join("s.csv")).unwrap(),
        std::fs::read(d.join("r.csv")).unwrap()
    );
    assert_eq!(code(d, &["drift", "--schema", "r.txt", "--group", "7"]), 2);
    assert_eq!(code(d, &["drift", "--schema", "missing.txt"]), 3);
    std::fs::write(d.join("bad.txt"), "X1+4X2 -> 5X2\n2X1+3x2 -> 3X1+2X2\n").unwrap();
    let out = swarmdec(d, &["drift", "--schema", "bad.txt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn config_file_merges_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("c.json"),
        r#"{"agents": 51, "rules": "mmm", "grid": 11, "seed": 3}"#,
    )
    .unwrap();
    ok(
        d,
        &[
            "drift",
            "--config",
            "c.json",
            "--epsilon",
            "0.1",
            "--out",
            "x.csv",
        ],
    );
    let text = std::fs::read_to_string(d.join("x.csv")).unwrap();
    assert!(text
        .lines()
        .next()
        .unwrap()
        .ends_with("agents=51 group=7 rules=mmm epsilon=0.1 seed=3"));
    assert_eq!(rows(&d.join("x.csv")).len(), 11);
}

#[test]
fn io_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["drift", "--out", "no/such/dir/x.csv"]), 3);
    assert_eq!(code(d, &["drift", "--bogus"]), 2);
    assert_eq!(code(d, &["drift", "--rules", "M", "--schema", "x"]), 2);
    assert_eq!(code(d, &["--version"]), 0);
    assert_eq!(code(d, &["drift", "--agents", "100"]), 2);
}

#[test]
fn validate_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["validate"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], true);
    let names: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    for want in [
        "pmf_vs_bruteforce",
        "drift_antisymmetry",
        "complement_negation",
        "noise_superposition",
    ] {
        assert!(names.contains(&want), "{want}");
    }
}
