use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn skysample(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skysample"))
        .args(args)
        .env_remove("SKYSAMPLE_PAGE_BYTES")
        .output()
        .expect("spawn skysample")
}

fn ok(args: &[&str]) -> String {
    let out = skysample(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(ok(args).trim()).unwrap()
}

fn gen(dir: &Path, name: &str, n: u64, d: u32, dist: &str, seed: u64) -> PathBuf {
    let p = dir.join(name);
    ok(&[
        "generate",
        "--n",
        &n.to_string(),
        "--d",
        &d.to_string(),
        "--dist",
        dist,
        "--seed",
        &seed.to_string(),
        "--out",
        p.to_str().unwrap(),
    ]);
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_is_byte_identical_for_same_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.skyr", 5000, 3, "anticorrelated", 11);
    let b = gen(dir.path(), "b.skyr", 5000, 3, "anticorrelated", 11);
    let c = gen(dir.path(), "c.skyr", 5000, 3, "anticorrelated", 12);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.skyr");
    let r = skysample(&["generate", "--n", "10", "--d", "2", "--dist", "gaussian", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    let r = skysample(&["exact", "--input", s(&out), "--engine", "quick"]);
    assert_eq!(r.status.code(), Some(2));
    let rel = gen(dir.path(), "r.skyr", 100, 2, "independent", 0);
    let r = skysample(&["baseline", "--input", s(&rel), "--m", "101", "--trials", "1"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn io_and_integrity_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.skyr");
    assert_eq!(skysample(&["exact", "--input", s(&missing)]).status.code(), Some(3));

    let bad = dir.path().join("bad.skyr");
    fs::write(&bad, vec![0u8; 8192]).unwrap();
    assert_eq!(skysample(&["exact", "--input", s(&bad)]).status.code(), Some(4));

    let csv = dir.path().join("nan.csv");
    fs::write(&csv, "1,2\n3,NaN\n").unwrap();
    let r = skysample(&["ingest", "--input", s(&csv), "--out", s(&dir.path().join("o.skyr"))]);
    assert_eq!(r.status.code(), Some(4));
}

#[test]
fn exact_engines_agree_and_dump_matches() {
    let dir = tempfile::tempdir().unwrap();
    let rel = gen(dir.path(), "r.skyr", 20_000, 3, "anticorrelated", 5);
    let mut sizes = Vec::new();
    for engine in ["brute", "bnl", "sfs", "dc"] {
        let v = json(&["exact", "--input", s(&rel), "--engine", engine, "--window", "16"]);
        assert!(v["pages_read"].as_u64().unwrap() > 0);
        assert!(v["wall_nanos"].is_u64());
        sizes.push(v["skyline_size"].as_u64().unwrap());
    }
    assert!(sizes.iter().all(|&x| x == sizes[0]), "{sizes:?}");

    let dump = dir.path().join("sky.csv");
    let v = json(&["exact", "--input", s(&rel), "--engine", "dc", "--dump", s(&dump)]);
    let rows = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(&dump)
        .unwrap()
        .records()
        .map(|r| r.unwrap().len())
        .collect::<Vec<_>>();
    assert_eq!(rows.len() as u64, v["skyline_size"].as_u64().unwrap());
    assert!(rows.iter().all(|&w| w == 4));
}

#[test]
fn empty_relation_has_empty_skyline() {
    let dir = tempfile::tempdir().unwrap();
    let rel = gen(dir.path(), "e.skyr", 0, 2, "independent", 0);
    for engine in ["bnl", "sfs", "dc", "brute"] {
        let v = json(&["exact", "--input", s(&rel), "--engine", engine]);
        assert_eq!(v["skyline_size"], 0);
    }
}

#[test]
fn ingest_negates_and_selects_columns() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("hotels.csv");
    // price (min), name, rating (max): only the first two rows survive.
    fs::write(&csv, "price,name,rating\n50,a,3\n80,b,5\n90,c,4\n60,d,2\n").unwrap();
    let out = dir.path().join("hotels.skyr");
    let h = json(&[
        "ingest", "--input", s(&csv), "--out", s(&out), "--header", "--columns", "0,2", "--negate", "0,1",
    ]);
    assert_eq!(h["n"], 4);
    assert_eq!(h["d"], 2);
    let v = json(&["exact", "--input", s(&out), "--engine", "brute"]);
    assert_eq!(v["skyline_size"], 2);
}

#[test]
fn page_size_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.skyr");
    let r = Command::new(env!("CARGO_BIN_EXE_skysample"))
        .args(["generate", "--n", "100", "--d", "2", "--dist", "independent", "--out", s(&out)])
        .env("SKYSAMPLE_PAGE_BYTES", "4096")
        .output()
        .unwrap();
    assert!(r.status.success());
    let h: Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(h["page_bytes"], 4096);
    assert_eq!(fs::metadata(&out).unwrap().len(), 4096 * 5);
}

#[test]
fn baseline_full_sample_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let rel = gen(dir.path(), "r.skyr", 2000, 3, "independent", 2);
    let out = ok(&["baseline", "--input", s(&rel), "--m", "2000", "--trials", "2", "--seed", "1"]);
    let mut reader = csv::Reader::from_reader(out.as_bytes());
    let headers = reader.headers().unwrap().clone();
    assert!(headers.iter().any(|h| h == "predicted_error"));
    let row = reader.records().next().unwrap().unwrap();
    let col = |name: &str| &row[headers.iter().position(|h| h == name).unwrap()];
    assert_eq!(col("mean_error").parse::<f64>().unwrap(), 0.0);
    assert_eq!(col("predicted_error").parse::<f64>().unwrap(), 0.0);
    assert_eq!(col("distribution"), "independent");
}

#[test]
fn baseline_is_deterministic_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let rel = gen(dir.path(), "r.skyr", 5000, 2, "correlated", 2);
    let run = || {
        let mut v = json(&["baseline", "--input", s(&rel), "--m", "200", "--trials", "5", "--seed", "9", "--json"]);
        v["rows"][0]["mean_wall_nanos"] = Value::Null;
        v
    };
    let a = run();
    assert_eq!(a, run());
    assert!(a["rows"][0]["stddev_error"].is_f64());
}

#[test]
fn double_reads_far_fewer_pages_than_a_scan() {
    let dir = tempfile::tempdir().unwrap();
    let rel = gen(dir.path(), "r.skyr", 1_000_000, 2, "independent", 3);
    let trace = dir.path().join("trace.jsonl");
    let v = json(&[
        "double", "--input", s(&rel), "--preset", "double1", "--seed", "4", "--oracle", "--trace", s(&trace),
    ]);
    assert_eq!(v["terminated"], true);
    assert_eq!(v["fell_back_to_exact"], false);
    let pages = v["pages_read"].as_u64().unwrap();
    let scan = v["full_scan_pages"].as_u64().unwrap();
    assert!(pages * 5 < scan, "pages {pages} vs scan {scan}");
    assert!(v["true_error"].as_f64().unwrap() <= 0.1);
    let lines = fs::read_to_string(&trace).unwrap();
    assert_eq!(lines.lines().count() as u64, v["rounds"].as_u64().unwrap());
    for l in lines.lines() {
        let r: Value = serde_json::from_str(l).unwrap();
        assert!(r["eps_hat"].is_f64());
    }
}

#[test]
fn double_needs_epsilon_or_preset() {
    let dir = tempfile::tempdir().unwrap();
    let rel = gen(dir.path(), "r.skyr", 100, 2, "independent", 3);
    assert_eq!(skysample(&["double", "--input", s(&rel)]).status.code(), Some(2));
    assert_eq!(
        skysample(&["double", "--input", s(&rel), "--epsilon", "1.5"]).status.code(),
        Some(2)
    );
}

#[test]
fn error_table_grid_round_trips_to_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("t.csv");
    let json_path = dir.path().join("t.json");
    ok(&[
        "error-table", "--n", "20000", "--d", "2,3", "--m", "100,1000", "--trials", "3", "--seed", "1",
        "--csv", s(&csv_path), "--json", s(&json_path),
    ]);
    let text = fs::read_to_string(&csv_path).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "dataset,distribution,n,d,m,engine,trials,mean_error,stddev_error,predicted_error,\
         sample_estimate,mean_pages_read,mean_wall_nanos"
    );
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let rows: Vec<_> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);

    let report: Value = serde_json::from_str(&fs::read_to_string(&json_path).unwrap()).unwrap();
    let jrows = report["rows"].as_array().unwrap();
    assert_eq!(jrows.len(), 4);
    for (row, j) in rows.iter().zip(jrows) {
        for (h, cell) in headers.iter().zip(row.iter()) {
            match &j[h] {
                Value::String(s) => assert_eq!(s, cell),
                Value::Number(n) => assert_eq!(n.as_f64().unwrap(), cell.parse::<f64>().unwrap(), "{h}"),
                other => panic!("{h}: {other}"),
            }
        }
    }
    // Error shrinks with the sample size in every dimension.
    let err = |k: usize| jrows[k]["mean_error"].as_f64().unwrap();
    assert!(err(1) < err(0) && err(3) < err(2));
}

#[test]
fn predict_reports_mean_and_bound() {
    let v = json(&["predict", "--d", "3", "--m", "1000", "--n", "1000000"]);
    let mean = v["predicted_mean"].as_f64().unwrap();
    assert!(mean > 0.0 && mean < 0.05);
    assert!(v["bound_sum"].as_f64().unwrap() >= mean);
}
