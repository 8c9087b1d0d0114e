//! End-to-end runs of the `narrative` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_narrative");

fn pairs50() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/pairs50.jsonl")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json_file(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn json_lines(p: &Path) -> Vec<Value> {
    fs::read_to_string(p).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn assert_manifest(path: &Path) -> Value {
    let m = json_file(path);
    assert_eq!(m["schema_version"], 1);
    let hash = m["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    assert!(m["started_at_unix"].as_u64().unwrap() <= m["finished_at_unix"].as_u64().unwrap());
    assert!(!m["outputs"].as_array().unwrap().is_empty());
    m
}

/// Preprocessed corpus and trained trigram in `dir`.
fn train(dir: &Path) -> PathBuf {
    let proc = dir.join("proc.jsonl");
    let model = dir.join("model.json");
    ok(&["preprocess", "--input", s(&pairs50()), "--out", s(&proc)]);
    ok(&["train", "--input", s(&proc), "--out", s(&model)]);
    model
}

fn sweep(model: &Path, out: &Path) -> Output {
    ok(&[
        "sweep-p", "--model", s(model), "--prompts", s(&pairs50()), "--grid", "0,0.7,1", "--seed", "7", "--out", s(out),
    ])
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let proc = d.join("proc.jsonl");
    let out = ok(&["preprocess", "--input", s(&pairs50()), "--out", s(&proc), "--stats"]);
    let stats: Value = serde_json::from_slice(&out.stdout).unwrap();
    let examples = json_lines(&proc);
    assert_eq!(stats["example_count"].as_u64().unwrap() as usize, examples.len());
    for ex in &examples {
        let text = ex["text"].as_str().unwrap();
        assert!(text.starts_with("<|startoftext|> [WP] ") && text.ends_with(" <|endoftext|>"));
        assert!(ex["response_token_count"].as_u64().unwrap() <= 256);
        assert_eq!(ex["length_class"], "medium");
    }
    assert_manifest(&d.join("proc.jsonl.manifest.json"));

    let model = d.join("model.json");
    let out = ok(&["train", "--input", s(&proc), "--out", s(&model), "--heldout", s(&proc)]);
    let ppl: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(ppl["perplexity"].as_f64().unwrap() >= 1.0);
    assert_manifest(&d.join("model.json.manifest.json"));

    let sw = d.join("sweep");
    sweep(&model, &sw);
    let records = json_lines(&sw.join("records.jsonl"));
    assert_eq!(records.len(), 3 * examples.len());
    assert!(fs::read_to_string(sw.join("failures.jsonl")).unwrap().is_empty());
    assert_eq!(fs::read_dir(sw.join("shards")).unwrap().count(), records.len());
    let m = assert_manifest(&sw.join("manifest.json"));
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config"]["spec"]["p_grid"], serde_json::json!([0.0, 0.7, 1.0]));
    for r in &records {
        let steps = r["record"]["steps"].as_array().unwrap();
        assert!(!steps.is_empty() && steps.len() <= 256);
        if r["cell"]["grid_value"] == 0.0 {
            assert!(steps.iter().all(|s| s["sampled_space_size"] == 1));
        }
    }

    let report = d.join("report.json");
    let csv = d.join("report.csv");
    ok(&[
        "metrics", "--records", s(&sw), "--dist", "1,2,3", "--sent-div", "--report", s(&report), "--csv", s(&csv),
    ]);
    let reports = json_file(&report);
    let reports = reports.as_array().unwrap();
    assert_eq!(reports.len(), 3);
    for (r, p) in reports.iter().zip([0.0, 0.7, 1.0]) {
        assert_eq!(r["config_key"]["p"], p);
        assert_eq!(r["config_key"]["strategy"], "nucleus");
        assert_eq!(r["config_key"]["length_class"], "medium");
        assert_eq!(r["records"].as_u64().unwrap() as usize, examples.len());
        for key in ["dist1", "dist2", "sent_div"] {
            let v = r[key].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&v), "{key} = {v}");
        }
        assert!(r["extra_dist"]["3"].as_f64().is_some());
    }
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 4);
    assert_manifest(&d.join("report.json.manifest.json"));

    let cdf = d.join("cdf.csv");
    let out = ok(&["cdf", "--records", s(&sw), "--out", s(&cdf)]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("p=0 median=1"));
    assert!(!stdout.contains("p=1 "));
    let text = fs::read_to_string(&cdf).unwrap();
    assert!(text.starts_with("schema_version,p,size,cumulative_fraction\n"));
    let last_fracs: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(last_fracs.iter().all(|f| (0.0..=1.0).contains(f)));
    assert_manifest(&d.join("cdf.csv.manifest.json"));

    let out = ok(&["cdf", "--records", s(&sw), "--out", s(&cdf), "--include-p1"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("p=1 median="));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let model = train(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    sweep(&model, &a);
    sweep(&model, &b);
    let ra = fs::read(a.join("records.jsonl")).unwrap();
    assert_eq!(ra, fs::read(b.join("records.jsonl")).unwrap());
    let hash = |d: &Path| json_file(&d.join("manifest.json"))["config_hash"].clone();
    assert_eq!(hash(&a), hash(&b));

    // A second run into the same directory resumes every cell from shards.
    let out = sweep(&model, &a);
    assert!(String::from_utf8_lossy(&out.stderr).contains("(138 resumed)"));
    assert_eq!(ra, fs::read(a.join("records.jsonl")).unwrap());
    assert_eq!(hash(&a), hash(&b));
}

#[test]
fn generate_matches_sweep_cells() {
    let dir = tempfile::tempdir().unwrap();
    let model = train(dir.path());
    let sw = dir.path().join("sweep");
    sweep(&model, &sw);
    let trace = dir.path().join("trace.jsonl");
    let out = ok(&[
        "generate", "--model", s(&model), "--prompt", s(&pairs50()), "--p", "0.7", "--seed", "7", "--max-class", "medium",
        "--trace", s(&trace),
    ]);
    let generated = json_lines(&trace);
    let swept: Vec<Value> = json_lines(&sw.join("records.jsonl"))
        .into_iter()
        .filter(|r| r["cell"]["grid_value"] == 0.7)
        .map(|r| r["record"].clone())
        .collect();
    assert_eq!(generated, swept);
    let lines: Vec<&str> = std::str::from_utf8(&out.stdout).unwrap().lines().collect();
    assert_eq!(lines.len(), generated.len());
    assert_manifest(&dir.path().join("trace.jsonl.manifest.json"));
}

#[test]
fn config_file_sits_below_flags() {
    let dir = tempfile::tempdir().unwrap();
    let model = train(dir.path());
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"p": 0.3, "max_tokens": 12, "seed": 5}"#).unwrap();
    let trace = dir.path().join("t.jsonl");
    let gen = |extra: &[&str]| {
        let mut args = vec!["--config", s(&config), "generate", "--model", s(&model), "--prompt", "the whale", "--trace", s(&trace)];
        args.extend_from_slice(extra);
        ok(&args);
        json_lines(&trace).remove(0)["config"].clone()
    };
    let cfg = gen(&[]);
    assert_eq!((cfg["p"].as_f64(), cfg["max_tokens"].as_u64()), (Some(0.3), Some(12)));
    let cfg = gen(&["--p", "0.9", "--max-tokens", "5"]);
    assert_eq!((cfg["p"].as_f64(), cfg["max_tokens"].as_u64()), (Some(0.9), Some(5)));
}

#[test]
fn exit_codes() {
    let out = run(&["generate", "--model", "missing.json", "--prompt", "x", "--p", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p must be in [0,1]"));

    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["sweep-p", "--help"]).status.code(), Some(0));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["train", "--input", "/nonexistent/proc.jsonl", "--out", "/tmp/x"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{not json\n").unwrap();
    assert_eq!(run(&["preprocess", "--input", s(&bad), "--out", s(&dir.path().join("o"))]).status.code(), Some(2));

    let out = run(&["generate", "--model", "bridge", "--bridge-tcp", "127.0.0.1:1", "--prompt", "x"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bridge_check_against_stdio_mock() {
    let cmd = format!("{BIN} mock-bridge");
    let out = ok(&["bridge-check", "--bridge-cmd", &cmd]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 10);
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
}

#[test]
fn generate_through_bridge() {
    let cmd = format!("{BIN} mock-bridge");
    let args = ["generate", "--model", "bridge", "--bridge-cmd", &cmd, "--prompt", "the sea", "--max-tokens", "8", "--seed", "1"];
    let a = ok(&args);
    let b = ok(&args);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8(a.stdout).unwrap().lines().count(), 1);
}

#[test]
fn agreement_and_correlation() {
    let dir = tempfile::tempdir().unwrap();
    // Two items, both rated unanimously but in different categories:
    // observed agreement 1, chance agreement 0.5, so kappa = 1.
    let ratings = dir.path().join("ratings.csv");
    fs::write(&ratings, "item_id,metric,annotator_id,score\na,fluency,w1,1\na,fluency,w2,1\nb,fluency,w1,2\nb,fluency,w2,2\n").unwrap();
    let out = ok(&["agreement", "--ratings", s(&ratings), "--categories", "2"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["fluency"]["fleiss_kappa"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((v["fluency"]["likert_mean"].as_f64().unwrap() - 1.5).abs() < 1e-12);

    // Ranks 1..7 against [2,1,3,5,6,7,4]: sum of squared rank differences
    // is 14, so rho = 1 - 6*14/(7*48) = 0.75. Both columns average 4, so
    // both t statistics are 0.
    let table = dir.path().join("t.csv");
    let y = [2, 1, 3, 5, 6, 7, 4];
    let mut text = String::from("x,y\n");
    for (i, v) in y.iter().enumerate() {
        text.push_str(&format!("{},{v}\n", i + 1));
    }
    fs::write(&table, text).unwrap();
    let out_path = dir.path().join("corr.json");
    let out = ok(&["correlate", "--input", s(&table), "--x", "x", "--y", "y", "--out", s(&out_path)]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["spearman"]["rho"].as_f64().unwrap() - 0.75).abs() < 1e-12);
    assert_eq!(v["t_test"]["kind"], "welch");
    assert!(v["t_test"]["t"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(json_file(&out_path), v);
    assert_manifest(&dir.path().join("corr.json.manifest.json"));
    let out = ok(&["correlate", "--input", s(&table), "--x", "x", "--y", "y", "--paired"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["t_test"]["kind"], "paired");
    assert!((v["t_test"]["df"].as_f64().unwrap() - 6.0).abs() < 1e-12);

    assert_eq!(run(&["correlate", "--input", s(&table), "--x", "x", "--y", "nope"]).status.code(), Some(1));
}
