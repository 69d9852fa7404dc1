use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const TOY: &str = "shape 2,2\n0,0,2\n0,1,8\n1,0,4\n";

fn lli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lli"))
        .args(args)
        .env_remove("LLI_DATA_DIR")
        .output()
        .expect("spawn lli")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn cell(out: &str, index: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{index},")))
        .unwrap_or_else(|| panic!("no cell {index} in {out}"))
        .parse()
        .unwrap()
}

/// Small MovieLens-1M style files where every user rates several movies.
fn movielens(dir: &Path) -> (String, String) {
    let ages = [1, 18, 25, 35, 45, 50, 56];
    let mut ratings = String::new();
    let mut users = String::new();
    for u in 1..=40u64 {
        let gender = if u % 2 == 0 { "M" } else { "F" };
        users += &format!("{u}::{gender}::{}::{}::00000\n", ages[u as usize % 7], u % 21);
        for m in 1..=25u64 {
            if u == 1 || m == 1 || (u * 7 + m * 3) % 5 < 2 {
                let r = 1 + (u + 2 * m) % 5;
                ratings += &format!("{u}::{m}::{r}::{}\n", 978_300_000 + u * 100 + m);
            }
        }
    }
    let r = dir.join("ratings.dat");
    let p = dir.join("users.dat");
    fs::write(&r, ratings).unwrap();
    fs::write(&p, users).unwrap();
    (r.to_str().unwrap().into(), p.to_str().unwrap().into())
}

#[test]
fn completes_the_two_by_two_corner() {
    let dir = TempDir::new().unwrap();
    let toy = write(&dir, "toy.txt", TOY);
    let o = lli(&[
        "complete",
        "--dataset",
        "tensor",
        "--ratings",
        &toy,
        "--epsilon",
        "1e-20",
        "--max-sweeps",
        "100000",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!((cell(&stdout(&o), "1,1") - 16.0).abs() < 1e-8);
    assert!(stdout(&o).starts_with("shape 2,2\n"));

    let o = lli(&["complete", "--dataset", "tensor", "--ratings", &toy]);
    assert!(o.status.success());
    assert!((cell(&stdout(&o), "1,1") - 16.0).abs() < 1e-4);
    assert!(stderr(&o).contains("sweeps:"));
}

#[test]
fn fully_observed_input_is_returned_unchanged() {
    let dir = TempDir::new().unwrap();
    let full = write(
        &dir,
        "full.txt",
        "shape 2,3\n0,0,1\n0,1,2\n0,2,3\n1,0,4\n1,1,5\n1,2,6\n",
    );
    let out = dir.path().join("out.txt");
    let o = lli(&[
        "complete",
        "--dataset",
        "tensor",
        "--ratings",
        &full,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out).unwrap();
    for (n, idx) in ["0,0", "0,1", "0,2", "1,0", "1,1", "1,2"].iter().enumerate() {
        assert_eq!(cell(&text, idx), (n + 1) as f64);
    }
}

#[test]
fn missing_input_reports_an_error() {
    let o = lli(&["complete", "--dataset", "tensor", "--ratings", "/nonexistent/t.txt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error"));
}

#[test]
fn malformed_tensor_names_the_line() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.txt", "shape 2,2\n0,0,1\n0,1\n");
    let o = lli(&["complete", "--dataset", "tensor", "--ratings", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn recommends_from_a_saved_model() {
    let dir = TempDir::new().unwrap();
    let toy = write(&dir, "toy.txt", TOY);
    let model = dir.path().join("model.json");
    let model = model.to_str().unwrap();
    let o = lli(&[
        "complete",
        "--dataset",
        "tensor",
        "--ratings",
        &toy,
        "--epsilon",
        "1e-20",
        "--max-sweeps",
        "100000",
        "--model-out",
        model,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = lli(&["recommend", "--model", model, "--user", "1", "--n", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    let first: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(&first[..2], &["1", "1"]);
    assert!((first[2].parse::<f64>().unwrap() - 16.0).abs() < 1e-8);
    assert_eq!(first[3], "completed");
    assert_eq!(lines[1], "2,0,4,observed");

    let o = lli(&["recommend", "--model", model, "--user", "7"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown user 7"));

    let o = lli(&["recommend", "--model", model, "--user", "0", "--exclude-observed"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "");
}

#[test]
fn evaluation_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let (ratings, _) = movielens(dir.path());
    let run = |out: &str| {
        let o = lli(&[
            "evaluate",
            "--dataset",
            "movielens1m",
            "--ratings",
            &ratings,
            "--seed",
            "3",
            "--out",
            out,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("RMSE:"));
        fs::read(out).unwrap()
    };
    let a = run(dir.path().join("a.json").to_str().unwrap());
    let b = run(dir.path().join("b.json").to_str().unwrap());
    assert_eq!(a, b);
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert!(report["rmse_mean"].as_f64().unwrap() > 0.0);
}

#[test]
fn three_d_evaluation_uses_user_features() {
    let dir = TempDir::new().unwrap();
    let (ratings, users) = movielens(dir.path());
    let o = lli(&[
        "evaluate",
        "--dataset",
        "movielens1m",
        "--ratings",
        &ratings,
        "--users",
        &users,
        "--mode",
        "3d",
        "--features",
        "age",
        "--folds",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("3d"));
}

#[test]
fn three_d_mode_needs_feature_data() {
    let dir = TempDir::new().unwrap();
    let (ratings, _) = movielens(dir.path());
    let o = lli(&[
        "evaluate",
        "--dataset",
        "movielens10m",
        "--ratings",
        &ratings,
        "--mode",
        "3d",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("features unavailable"), "{}", stderr(&o));
}

#[test]
fn check_passes_at_defaults() {
    let o = lli(&["check", "--cases", "10"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 7);
}

#[test]
fn check_flags_a_loose_tolerance() {
    let o = lli(&["check", "--cases", "10", "--epsilon", "1e-2"]);
    assert_eq!(o.status.code(), Some(1));
    let line = stdout(&o)
        .lines()
        .find(|l| l.contains("constraints"))
        .unwrap()
        .to_string();
    assert!(line.starts_with("FAIL constraints: max |prod - 1| = "), "{line}");
}

#[test]
fn injected_faults_are_caught() {
    for name in ["two-by-two", "consensus-ordering", "full-support"] {
        let o = lli(&["check", "--cases", "8", "--inject-fault", name]);
        assert_eq!(o.status.code(), Some(1));
        let fails: Vec<String> = stdout(&o)
            .lines()
            .filter(|l| l.starts_with("FAIL"))
            .map(String::from)
            .collect();
        assert_eq!(fails.len(), 1, "{fails:?}");
        assert!(fails[0].starts_with(&format!("FAIL {name}:")));
    }
}

#[test]
fn unknown_flags_are_usage_errors() {
    assert_eq!(lli(&["complete", "--bogus"]).status.code(), Some(2));
    assert_eq!(lli(&[]).status.code(), Some(2));
}
