use std::path::Path;
use std::process::{Command, Output};

const EXPERIMENTS: [&str; 7] = ["qme-flow", "counterterms-phi4-d4", "rg-roundtrip", "obstruction", "graph-tables", "cs-propagator", "gaussian-lemma"];

fn bvren(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bvren")).args(args).output().expect("binary runs")
}

fn run_in(dir: &Path, experiment: &str, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec![experiment, "--out", out];
    args.extend_from_slice(extra);
    bvren(&args)
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap()).map(|e| (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())).collect();
    v.sort();
    v
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn every_experiment_passes_with_defaults() {
    for x in EXPERIMENTS {
        let dir = tempfile::tempdir().unwrap();
        let o = run_in(dir.path(), x, &[]);
        assert_eq!(o.status.code(), Some(0), "{x}: {}", String::from_utf8_lossy(&o.stderr));
        let s = summary(dir.path());
        assert_eq!(s["experiment"], x);
        assert_eq!(s["pass"], true);
        assert!(read_dir_sorted(dir.path()).len() >= 2, "{x} wrote no tables");
    }
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    for x in EXPERIMENTS {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        assert!(run_in(a.path(), x, &["--seed", "7"]).status.success());
        assert!(run_in(b.path(), x, &["--seed", "7"]).status.success());
        assert_eq!(read_dir_sorted(a.path()), read_dir_sorted(b.path()), "{x}");
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), "no-such-experiment", &[]).status.code(), Some(2));
    assert_eq!(run_in(dir.path(), "qme-flow", &["--truncation", "2"]).status.code(), Some(2));
    assert_eq!(run_in(dir.path(), "qme-flow", &["--bogus"]).status.code(), Some(2));
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "this line has no equals sign\n").unwrap();
    assert_eq!(run_in(dir.path(), "qme-flow", &["--config", bad.to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.path().join("missing.cfg");
    assert_eq!(run_in(dir.path(), "qme-flow", &["--config", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn failing_check_exits_with_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fake.cfg");
    // a scale-dependent subtraction breaks T-independence
    std::fs::write(&cfg, "scheme = fake\naction = 0:3:0.7, 0:4:-0.3\n").unwrap();
    let o = run_in(&dir.path().join("out"), "counterterms-phi4-d4", &["--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scale independence"));
    assert_eq!(summary(&dir.path().join("out"))["pass"], false);
}

#[test]
fn config_drives_the_qme_flow_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("su2.cfg");
    std::fs::write(&cfg, "# su(2) seed flowed to infinity\nkind = su2\nt1 = 1/4\nt2 = inf\n").unwrap();
    let out = dir.path().join("out");
    let o = run_in(&out, "qme-flow", &["--config", cfg.to_str().unwrap(), "--seed", "7", "--truncation", "1,4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["results"]["dimension"], "3|3");
    assert_eq!(s["results"]["t2"], "inf");
    assert_eq!(s["results"]["residual_terms_t2"], 0);
    assert_eq!(s["truncation"], serde_json::json!([1, 4]));
}

#[test]
fn counterterm_table_carries_the_bubble_log() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), "counterterms-phi4-d4", &[]).status.success());
    let s = summary(dir.path());
    let oracle = s["results"]["bubble_log_oracle"].as_f64().unwrap();
    let csv = std::fs::read_to_string(dir.path().join("counterterms.csv")).unwrap();
    let row = csv.lines().find(|l| l.contains(",1,4,") && l.contains(",0.0,1,")).expect("ln ε row at (1,4)");
    let c: f64 = row.split(',').nth(6).unwrap().parse().unwrap();
    assert!((c - oracle).abs() <= 1e-6 * oracle.abs());
    let curves = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    assert!(curves.starts_with("i,k,monomial,eps,raw,subtracted"));
}

#[test]
fn finite_backend_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fd.cfg");
    std::fs::write(&cfg, "backend = finite\nhalf = 2\n").unwrap();
    let out = dir.path().join("out");
    let o = run_in(&out, "rg-roundtrip", &["--config", cfg.to_str().unwrap(), "--truncation", "1,3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["results"]["recovery_discrepancy"], 0.0);
    assert_eq!(s["results"]["rg_discrepancy"], 0.0);
}

#[test]
fn cs_table_covers_requested_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cs.cfg");
    std::fs::write(&cfg, "n = 2, 3, 4\nsamples = 10\n").unwrap();
    let out = dir.path().join("out");
    assert!(run_in(&out, "cs-propagator", &["--config", cfg.to_str().unwrap()]).status.success());
    let table = std::fs::read_to_string(out.join("cs_propagator.csv")).unwrap();
    // one row per component: 10·(2+3+4)
    assert_eq!(table.lines().count(), 1 + 90);
}
