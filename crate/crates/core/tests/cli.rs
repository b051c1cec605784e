use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn zbias(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zbias"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

#[test]
fn transform_of_signs_is_uniform() {
    let out = zbias(&["transform", "--input", fixture("signs.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).trim(),
        r#"{"breakpoints":[-1,1],"densities":[0.5]}"#
    );
}

#[test]
fn transform_of_three_atoms_and_skewed_law() {
    let v = json(&zbias(&[
        "transform",
        "--input",
        fixture("three_atom.json").to_str().unwrap(),
    ]));
    assert_eq!(v["breakpoints"], serde_json::json!([-1, 0, 1]));
    assert_eq!(v["densities"], serde_json::json!([0.5, 0.5]));
    let v = json(&zbias(&[
        "transform",
        "--input",
        fixture("skew.json").to_str().unwrap(),
    ]));
    assert_eq!(v["breakpoints"], serde_json::json!([-2, 0.5]));
    assert!((v["densities"][0].as_f64().unwrap() - 0.4).abs() < 1e-15);
}

#[test]
fn invalid_input_exits_2() {
    let out = zbias(&["transform", "--input", fixture("nonzero_mean.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mean"));
    let out = zbias(&["transform", "--input", "/nonexistent/law.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = zbias(&["verify"]);
    assert_eq!(out.status.code(), Some(2), "missing seed");
    let out = zbias(&["srs-experiment", "--seed", "1", "--n-grid", "8,4"]);
    assert_eq!(out.status.code(), Some(2), "decreasing grid");
    let out = zbias(&["srs-experiment", "--seed", "1", "--h", "tan"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes_fixtures_and_flags_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("verify.csv");
    let mut args = vec![
        "verify",
        "--seed",
        "5",
        "--reps",
        "5000",
        "--out",
        csv.to_str().unwrap(),
    ];
    let inputs: Vec<String> = ["pop4.txt", "pop5_skew.txt", "signs.json", "family_independent.json"]
        .iter()
        .map(|f| fixture(f).to_string_lossy().into_owned())
        .collect();
    for i in &inputs {
        args.extend(["--input", i.as_str()]);
    }
    let out = zbias(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("suite,input,check,residual,tolerance,pass\n"));
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")));

    let bad = fixture("family_corrupted.json");
    let out = zbias(&["verify", "--seed", "5", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text
        .lines()
        .any(|l| l.starts_with("family,family_corrupted.json,marginal") && l.ends_with(",false")));
}

#[test]
fn bound_examples() {
    let v = json(&zbias(&[
        "bound", "--method", "iid", "--n", "10", "--ex4", "1", "--h3", "1", "--h4", "1",
    ]));
    assert!((v["bound"].as_f64().unwrap() - 0.05).abs() < 1e-15);

    let pop = fixture("signs4.txt");
    let v = json(&zbias(&[
        "bound",
        "--method",
        "srs",
        "--input",
        pop.to_str().unwrap(),
        "--n",
        "2",
        "--h",
        "cos",
    ]));
    assert_eq!(v["c2"].as_f64().unwrap(), 14.0);
    assert!((v["second_term"].as_f64().unwrap() - 5.25).abs() < 1e-12);
    assert!((v["sigma"].as_f64().unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);

    let out = zbias(&[
        "bound",
        "--method",
        "zero-bias",
        "--sigma",
        "1",
        "--h3",
        "1",
        "--cond-var",
        "0.1",
        "--sq-diff",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2), "missing fourth-derivative norm");
}

fn digest(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

#[test]
fn experiment_is_reproducible_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let p = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_zbias"))
            .env("ZB_THREADS", threads)
            .args(["srs-experiment", "--seed", "9", "--n-grid", "4,8", "--y-input"])
            .arg(fixture("skew.json"))
            .arg("--out")
            .arg(&p)
            .status()
            .unwrap();
        assert!(status.success());
        digest(&p)
    };
    let a = run("a.csv", "1");
    assert_eq!(a, run("b.csv", "1"));
    assert_eq!(a, run("c.csv", "4"));
    let record: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a.csv.run.json")).unwrap()).unwrap();
    assert_eq!(record["config"]["seed"], 9);
    assert_eq!(record["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn monte_carlo_fallback_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let pop = dir.path().join("pop.txt");
    let values: String = (1..=20).flat_map(|i| [format!("{i}\n"), format!("-{i}\n")]).collect();
    std::fs::write(&pop, values).unwrap();
    let run = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_zbias"))
            .env("ZB_THREADS", threads)
            .args([
                "srs-experiment",
                "--seed",
                "2",
                "--n-grid",
                "20",
                "--reps",
                "20000",
                "--input",
            ])
            .arg(&pop)
            .output()
            .unwrap();
        assert!(out.status.success());
        out.stdout
    };
    let a = run("1");
    assert_eq!(a, run("3"));
    let text = String::from_utf8(a).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert!(
        row[8].parse::<f64>().unwrap() > 0.0,
        "stderr reported for Monte Carlo rows"
    );
}

#[test]
fn failed_run_leaves_no_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("grid.csv");
    let out = zbias(&[
        "srs-experiment",
        "--seed",
        "1",
        "--fraction",
        "0.3",
        "--n-grid",
        "4",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_path.exists());
    assert_eq!(
        std::fs::read_dir(dir.path()).unwrap().count(),
        0,
        "no temporary files left behind"
    );
}
