use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cs-lab"));
    c.env_remove("CS_LAB_MAX_MEM_MB");
    c
}

struct Case {
    dir: TempDir,
}

impl Case {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn config(&self, json: &str) -> PathBuf {
        let p = self.dir.path().join("config.json");
        fs::write(&p, json).unwrap();
        p
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str], out: &str, config: Option<&str>) -> Output {
        let mut c = bin();
        c.args(args).arg("--out").arg(self.out(out));
        if let Some(json) = config {
            c.arg("--config").arg(self.config(json));
        }
        c.output().unwrap()
    }
}

fn csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    assert!(text.ends_with('\n'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("not a number: {s:?}"))
}

#[test]
fn coherence_ratio_table_for_two_vanishing_moments() {
    let case = Case::new();
    let out = case.run(
        &["coherence"],
        "c",
        Some(r#"{"wavelet": {"nu": 2, "j0": 3}, "scheme": {"levels_count": 8}}"#),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, rows) = csv(&case.out("c").join("ratios.csv"));
    assert_eq!(header[0], "k");
    assert_eq!(header[1], "l1");
    assert_eq!(rows[0][0], "2");
    assert!((num(&rows[0][1]) - 3.017).abs() <= 2e-2);
    assert_eq!(rows[0][2], "");
    let (header, rows) = csv(&case.out("c").join("coherence.csv"));
    assert_eq!(header.len(), 9);
    assert_eq!(rows.len(), 8);
}

#[test]
fn haar_coherence_is_diagonal() {
    let case = Case::new();
    let out = case.run(
        &["coherence"],
        "c",
        Some(r#"{"wavelet": {"nu": 1, "j0": 2}}"#),
    );
    assert!(out.status.success());
    let (_, rows) = csv(&case.out("c").join("coherence.csv"));
    for (k, row) in rows.iter().enumerate() {
        for (l, v) in row[1..].iter().enumerate() {
            let v = num(v);
            let want = if k == l {
                (-(2.0 + k as f64)).exp2()
            } else {
                0.0
            };
            assert!((v - want).abs() <= 1e-15, "({k},{l}) {v}");
        }
    }
}

#[test]
fn balancing_scans() {
    let case = Case::new();
    let out = case.run(
        &["balancing", "--theta-target", "0.9"],
        "haar",
        Some(r#"{"wavelet": {"nu": 1, "j0": 0}, "balancing": {"k": 6}}"#),
    );
    assert!(out.status.success());
    let (header, rows) = csv(&case.out("haar").join("theta_scan.csv"));
    assert_eq!(header, ["q", "theta"]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "0");
    assert!((num(&rows[0][1]) - 1.0).abs() < 1e-12);

    let out = case.run(
        &["balancing", "--theta-target", "0.95"],
        "db4",
        Some(r#"{"balancing": {"k": 6}}"#),
    );
    assert!(out.status.success());
    let (_, rows) = csv(&case.out("db4").join("theta_scan.csv"));
    let thetas: Vec<f64> = rows.iter().map(|r| num(&r[1])).collect();
    assert!(thetas.windows(2).all(|w| w[1] >= w[0]));
    // frozen from the exact cell-average route at quality 16
    let frozen = [
        0.422188725477,
        0.848200059941,
        0.948090623448,
        0.986081724003,
    ];
    assert_eq!(thetas.len(), frozen.len());
    for (t, f) in thetas.iter().zip(frozen) {
        assert!((t - f).abs() < 1e-10, "{t} vs {f}");
    }
    assert_eq!(manifest(&case.out("db4"))["details"]["q"], 3);
}

#[test]
fn balancing_cap_exits_three() {
    let case = Case::new();
    let out = case.run(
        &["balancing", "--theta-target", "0.999999999"],
        "b",
        Some(r#"{"balancing": {"k": 5, "max_q": 1}}"#),
    );
    assert_eq!(out.status.code(), Some(3));
}

const RIPL: &str = r#"{
    "wavelet": {"nu": 1, "j0": 1},
    "scheme": {"levels": [4, 8, 16], "s": [1, 1, 2], "m": [4, 3, 6]},
    "ripl": {"patterns": 3}
}"#;

#[test]
fn ripl_report_is_reproducible() {
    let case = Case::new();
    assert!(case
        .run(&["ripl", "--seed", "4"], "a", Some(RIPL))
        .status
        .success());
    assert!(case
        .run(&["ripl", "--seed", "4"], "b", Some(RIPL))
        .status
        .success());
    let a = fs::read_to_string(case.out("a").join("ripl_report.csv")).unwrap();
    let b = fs::read_to_string(case.out("b").join("ripl_report.csv")).unwrap();
    assert_eq!(a, b);
    let (header, rows) = csv(&case.out("a").join("ripl_report.csv"));
    assert_eq!(header[0], "seed");
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][0], "4");
    assert!(rows.iter().all(|r| r[5] == "true"));
    assert_eq!(
        manifest(&case.out("a"))["details"]["gram_is_identity"],
        true
    );
}

#[test]
fn ripl_full_sampling_is_exact() {
    let case = Case::new();
    let cfg = r#"{
        "scheme": {"levels": [16, 32], "n": [16, 64], "s": [1, 2]},
        "wavelet": {"nu": 4, "j0": 3},
        "ripl": {"patterns": 1}
    }"#;
    let out = case.run(&["ripl"], "f", Some(cfg));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (_, rows) = csv(&case.out("f").join("ripl_report.csv"));
    assert!(num(&rows[0][2]) <= 1e-10);
    assert_eq!(rows[0][5], "false");
}

#[test]
fn ripl_cap_exits_three() {
    let case = Case::new();
    let cfg = r#"{"wavelet": {"nu": 1, "j0": 1}, "scheme": {"levels": [4, 64], "s": [1, 8]}, "ripl": {"cap": 10}}"#;
    assert_eq!(case.run(&["ripl"], "x", Some(cfg)).status.code(), Some(3));
}

#[test]
fn allocation_rows_audit() {
    let case = Case::new();
    let cfg = r#"{
        "wavelet": {"nu": 4, "j0": 3},
        "scheme": {"levels": [16, 32, 64, 128], "s": [0, 2, 3, 1], "r0": 1, "q": 1},
        "allocation": {"theta": 0.8}
    }"#;
    let out = case.run(
        &["allocate", "--delta", "0.9", "--c-univ", "0.01"],
        "a",
        Some(cfg),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, rows) = csv(&case.out("a").join("allocation.csv"));
    assert_eq!(
        header,
        [
            "level",
            "n_lower",
            "n_upper",
            "s",
            "bracket",
            "log_term",
            "demand",
            "m",
            "saturated"
        ]
    );
    // r0 = 1: first level fully sampled
    assert_eq!(rows[0][7], "16");
    assert_eq!(rows[0][8], "true");
    for (k, row) in rows.iter().enumerate() {
        let r = rows.len();
        let factor = 0.01 / 0.81 / 0.8 * ((k + 2).saturating_sub(r) as f64).exp2();
        let want = factor * num(&row[4]) * num(&row[5]);
        assert!(
            (num(&row[6]) - want).abs() <= 1e-9 * want.max(1.0),
            "row {k}"
        );
        let width = num(&row[2]) - num(&row[1]);
        let m = num(&row[7]);
        assert!(m <= width);
        if k >= 1 {
            assert_eq!(m, num(&row[6]).ceil().max(1.0).min(width));
        }
    }
}

#[test]
fn allocation_bracket_doubles_with_sparsity() {
    let case = Case::new();
    let run = |s: &str, name: &str| {
        let cfg = format!(
            r#"{{"wavelet": {{"nu": 1, "j0": 1}}, "scheme": {{"levels": [4, 8, 16], "s": {s}}}, "allocation": {{"theta": 1.0}}}}"#
        );
        assert!(case.run(&["allocate"], name, Some(&cfg)).status.success());
        csv(&case.out(name).join("allocation.csv")).1
    };
    let a = run("[0, 1, 0]", "a");
    let b = run("[0, 2, 0]", "b");
    assert_eq!(num(&b[1][4]), 2.0 * num(&a[1][4]));
}

fn reconstruct(case: &Case, mode: &str, samples: usize) -> Value {
    let cfg = format!(r#"{{"reconstruct": {{"samples": {samples}}}}}"#);
    let out = case.run(&["reconstruct", "--mode", mode], mode, Some(&cfg));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    manifest(&case.out(mode))
}

#[test]
fn reconstruction_modes() {
    let case = Case::new();
    let inf = reconstruct(&case, "infinite", 16);
    assert!(inf["details"]["grid_error"].as_f64().unwrap() <= 1e-3);
    assert_eq!(inf["details"]["solver"]["status"], "converged");
    let fin = reconstruct(&case, "finite", 16);
    assert!(fin["details"]["grid_error"].as_f64().unwrap() >= 0.05);
    let ser = reconstruct(&case, "series", 32);
    assert!(ser["details"]["grid_error"].as_f64().unwrap() >= 0.05);

    let (header, rows) = csv(&case.out("infinite").join("reconstruction.csv"));
    assert_eq!(header, ["t", "reference", "reconstruction"]);
    assert_eq!(rows.len(), 1024);
    for row in &rows {
        row.iter().for_each(|v| {
            num(v);
        });
    }
    let svg = fs::read_to_string(case.out("infinite").join("reconstruction.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert_eq!(
        inf["outputs"],
        serde_json::json!(["reconstruction.csv", "reconstruction.svg", "manifest.json"])
    );
}

#[test]
fn manifest_replays_identically() {
    let case = Case::new();
    let out = case.run(
        &["reconstruct", "--seed", "3", "--mode", "finite"],
        "first",
        None,
    );
    assert!(out.status.success());
    let m = manifest(&case.out("first"));
    assert_eq!(m["seed"], 3);
    let mut cfg = m["config"].clone();
    cfg["out"] = Value::String(case.out("second").display().to_string());
    let path = case.config(&cfg.to_string());
    let again = bin()
        .arg("reconstruct")
        .arg("--config")
        .arg(path)
        .output()
        .unwrap();
    assert!(again.status.success());
    let a = fs::read_to_string(case.out("first").join("reconstruction.csv")).unwrap();
    let b = fs::read_to_string(case.out("second").join("reconstruction.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn flags_override_config() {
    let case = Case::new();
    let cfg = r#"{"seed": 5, "reconstruct": {"mode": "finite"}}"#;
    let out = case.run(
        &["reconstruct", "--seed", "7", "--mode", "series"],
        "o",
        Some(cfg),
    );
    assert!(out.status.success());
    let m = manifest(&case.out("o"));
    assert_eq!(m["seed"], 7);
    assert_eq!(m["details"]["mode"], "series");
}

#[test]
fn exit_codes() {
    let case = Case::new();
    let unknown = case.run(
        &["coherence"],
        "u",
        Some(r#"{"wavelet": {"nu": 2, "j0": 3, "famly": "db"}}"#),
    );
    assert_eq!(unknown.status.code(), Some(2));
    let invalid = case.run(
        &["coherence"],
        "v",
        Some(r#"{"wavelet": {"nu": 4, "j0": 1}}"#),
    );
    assert_eq!(invalid.status.code(), Some(2));
    let bad_mode = case.run(&["reconstruct", "--mode", "dense"], "w", None);
    assert_eq!(bad_mode.status.code(), Some(2));

    let capped = bin()
        .env("CS_LAB_MAX_MEM_MB", "0")
        .args(["coherence", "--out"])
        .arg(case.out("m"))
        .output()
        .unwrap();
    assert_eq!(capped.status.code(), Some(3));

    let stalled = case.run(
        &["reconstruct", "--mode", "finite"],
        "s",
        Some(r#"{"solver": {"max_iters": 1}}"#),
    );
    assert_eq!(stalled.status.code(), Some(4));
    let m = manifest(&case.out("s"));
    assert!(m["status"].as_str().unwrap().starts_with("not converged"));
}

#[test]
fn guarantee_flag_rejects_two_vanishing_moments() {
    let case = Case::new();
    let base = r#"{"wavelet": {"nu": 2, "j0": 2}, "scheme": {"levels": [8, 16]}, "allocation": {"theta": 0.9}}"#;
    let warned = case.run(&["allocate"], "a", Some(base));
    assert!(warned.status.success());
    assert!(String::from_utf8_lossy(&warned.stderr).contains("warning"));
    let strict = base.replacen('{', r#"{"guarantee": true, "#, 1);
    assert_eq!(
        case.run(&["allocate"], "b", Some(&strict)).status.code(),
        Some(2)
    );
}
