use std::path::Path;
use std::process::{Command, Output};

fn tuna(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tuna"))
        .args(args)
        .output()
        .expect("spawn tuna")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_field(csv: &str, name: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let at = header.iter().position(|h| *h == name).unwrap();
    row[at].to_string()
}

fn best_radix(args: &[&str]) -> usize {
    let mut all = vec!["sweep", "--sweep", "radix"];
    all.extend_from_slice(args);
    let o = tuna(&all);
    assert_eq!(o.status.code(), Some(0));
    let err = String::from_utf8(o.stderr).unwrap();
    let tail = err.split("best r=").nth(1).expect("summary on stderr");
    tail.split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn verify_exit_codes() {
    let ok = tuna(&["verify", "--algo", "tuna", "--P", "16", "--r", "4", "--dist", "uniform", "--S", "256", "--seed", "1"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).starts_with("verified"));

    let bad = tuna(&["verify", "--algo", "tuna", "--P", "16", "--r", "1"]);
    assert_eq!(bad.status.code(), Some(2));

    let hier = tuna(&["verify", "--algo", "htuna_coalesced", "--P", "15", "--Q", "5", "--r", "2"]);
    assert_eq!(hier.status.code(), Some(0));

    let uneven = tuna(&["verify", "--algo", "htuna_staggered", "--P", "10", "--Q", "4"]);
    assert_eq!(uneven.status.code(), Some(2));

    let unknown = tuna(&["verify", "--algo", "bruck", "--P", "8"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn every_algorithm_verifies() {
    for algo in [
        "direct",
        "spread_out",
        "scattered",
        "pairwise",
        "pairwise_xor",
        "linear",
        "tuna",
        "htuna_coalesced",
        "htuna_staggered",
    ] {
        let o = tuna(&["verify", "--algo", algo, "--P", "16", "--Q", "4", "--r", "3", "--dist", "powerlaw", "--S", "300", "--seed", "5"]);
        assert_eq!(o.status.code(), Some(0), "{algo}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let go = |tag: &str| {
        let trace = dir.path().join(format!("{tag}.jsonl"));
        let o = tuna(&["run", "--algo", "htuna_staggered", "--P", "12", "--Q", "3", "--r", "2", "--block-count", "4", "--dist", "normal", "--seed", "9", "--trace-out", trace.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        (stdout(&o), std::fs::read(trace).unwrap())
    };
    let a = go("a");
    let b = go("b");
    assert_eq!(a, b);
    assert!(!a.1.is_empty());
    assert_eq!(csv_field(&a.0, "schema"), "tuna-run/1");
    assert_eq!(csv_field(&a.0, "verified"), "true");
}

#[test]
fn run_reports_round_counts() {
    let o = tuna(&["run", "--algo", "tuna", "--P", "8", "--r", "2", "--dist", "uniform", "--S", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(csv_field(&stdout(&o), "rounds"), "3");

    let o = tuna(&["run", "--algo", "pairwise", "--P", "8"]);
    let csv = stdout(&o);
    assert_eq!(csv_field(&csv, "r"), "");
    assert_eq!(csv_field(&csv, "block_count"), "");
}

#[test]
fn coalesced_inter_messages_per_rank() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let o = tuna(&["run", "--algo", "htuna_coalesced", "--P", "15", "--Q", "5", "--r", "2", "--block-count", "2", "--trace-out", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(trace).unwrap();
    let mut per_rank = [0usize; 15];
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        if v["phase"] == "data" && v["link"] == "inter_node" {
            per_rank[v["src"].as_u64().unwrap() as usize] += 1;
        }
    }
    assert_eq!(per_rank, [2; 15]);
}

#[test]
fn radix_sweep_extremes() {
    assert_eq!(best_radix(&["--P", "16", "--beta-intra", "0", "--beta-inter", "0"]), 2);
    assert_eq!(best_radix(&["--P", "16", "--alpha-intra", "0", "--alpha-inter", "0"]), 16);
}

#[test]
fn message_size_sweep_is_monotone() {
    let o = tuna(&["sweep", "--sweep", "message_size", "--P", "64", "--sizes", "16,256,4096,65536", "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = stdout(&o);
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let at = header.iter().position(|h| *h == "best_r").unwrap();
    let best: Vec<usize> = lines
        .map(|l| l.split(',').nth(at).unwrap().parse().unwrap())
        .collect();
    assert_eq!(best.len(), 4);
    assert!(best.windows(2).all(|w| w[0] <= w[1]), "{best:?}");
}

#[test]
fn block_count_sweep_is_job_independent() {
    let go = |jobs: &str| {
        let o = tuna(&["sweep", "--sweep", "block_count", "--algo", "htuna_staggered", "--P", "16", "--Q", "4", "--jobs", jobs]);
        assert_eq!(o.status.code(), Some(0));
        stdout(&o)
    };
    assert_eq!(go("1"), go("4"));
}

#[test]
fn config_file_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"algo": "tuna", "P": 8, "r": 8, "S": 1}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    let o = tuna(&["run", "--config", cfg]);
    assert_eq!(csv_field(&stdout(&o), "r"), "8");
    let o = tuna(&["run", "--config", cfg, "--r", "2"]);
    let csv = stdout(&o);
    assert_eq!(csv_field(&csv, "r"), "2");
    assert_eq!(csv_field(&csv, "P"), "8");

    std::fs::write(dir.path().join("bad.json"), r#"{"radix": 2}"#).unwrap();
    let bad = dir.path().join("bad.json");
    let o = tuna(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!Path::new("missing.json").exists());
    let o = tuna(&["run", "--config", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn csv_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = tuna(&["run", "--algo", "linear", "--P", "6", "--csv-out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let csv = std::fs::read_to_string(out).unwrap();
    assert_eq!(csv_field(&csv, "algo"), "linear");
}
