use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(rel: &str) -> String {
    root().join("data/fixtures").join(rel).display().to_string()
}

fn golden(name: &str) -> String {
    fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("tests/golden")
            .join(name),
    )
    .unwrap()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feedmatch"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", stderr(o));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn synthetic_match(extra: &[&str]) -> Output {
    let reviews = fixture("synthetic/reviews.jsonl");
    let bugs = fixture("synthetic/bugs.jsonl");
    let mut args = vec!["match", "--reviews", &reviews, "--bugs", &bugs, "--test-backend"];
    args.extend_from_slice(extra);
    run(&args)
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn import_github_export() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "issues.json",
        r#"[{"number": 7, "title": "App crashes on login", "state": "open", "created_at": "2016-01-17T00:00:00Z", "labels": []},
            {"number": 8, "title": "Dark mode", "state": "open", "created_at": "2016-01-18T00:00:00Z", "labels": [{"name": "enhancement"}]}]"#,
    );
    let out = dir.path().join("bugs.jsonl");
    let o = run(&[
        "import",
        "--format",
        "github-json",
        "--in",
        &input,
        "--out",
        out.to_str().unwrap(),
        "--app",
        "demo",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["id"], "7");
    assert_eq!(lines[0]["summary"], "App crashes on login");
    assert_eq!(lines[0]["status"], "open");
}

#[test]
fn import_errors_and_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.jsonl");
    let out = out.to_str().unwrap();

    let o = run(&["import", "--format", "yaml", "--in", "x", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));

    let empty = write(dir.path(), "empty.jsonl", "");
    let o = run(&[
        "import",
        "--format",
        "normalized-jsonl",
        "--kind",
        "reviews",
        "--in",
        &empty,
        "--out",
        out,
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(out).unwrap(), "");

    let o = run(&["import", "--format", "normalized-jsonl", "--in", &empty, "--out", out]);
    assert_eq!(o.status.code(), Some(2));

    let line = |id: &str| {
        format!(
            r#"{{"id":"{id}","app":"a","summary":"Crash","status":"open","created_at":"2020-01-01T00:00:00Z","tracker":"github"}}"#
        )
    };
    let dup = write(
        dir.path(),
        "dup.jsonl",
        &format!("{}\n{}\n{}\n", line("1"), line("2"), line("1")),
    );
    let o = run(&[
        "import",
        "--format",
        "normalized-jsonl",
        "--kind",
        "bugs",
        "--in",
        &dup,
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dup.jsonl:3:"), "{}", stderr(&o));

    let missing = write(
        dir.path(),
        "missing.jsonl",
        r#"{"id":"r1","app":"signal","text":"notifications broken","source":"google-play"}"#,
    );
    let o = run(&[
        "import",
        "--format",
        "normalized-jsonl",
        "--kind",
        "reviews",
        "--in",
        &missing,
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains(":1: missing required field \"created_at\""),
        "{}",
        stderr(&o)
    );
}

#[test]
fn match_writes_k_results_per_report() {
    let o = synthetic_match(&["--k", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out, golden("match-synthetic.jsonl"));
    let rows: Vec<Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let mut per_report = std::collections::BTreeMap::<String, usize>::new();
    for r in &rows {
        *per_report
            .entry(r["query_id"].as_str().unwrap().to_string())
            .or_default() += 1;
    }
    assert_eq!(per_report.len(), 20);
    assert!(per_report.values().all(|&n| n == 3));
    assert!(stderr(&o).contains("problem reports: 20"));
}

#[test]
fn match_threshold_and_errors() {
    let o = synthetic_match(&["--k", "3", "--threshold", "0.99"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().count() < 60);

    let reviews = fixture("synthetic/reviews.jsonl");
    let o = run(&[
        "match",
        "--reviews",
        &reviews,
        "--bugs",
        "/nonexistent/bugs.jsonl",
        "--test-backend",
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = synthetic_match(&["--threshold", "2"]);
    assert_eq!(o.status.code(), Some(2));

    let bugs = fixture("synthetic/bugs.jsonl");
    let o = run(&["match", "--reviews", &reviews, "--bugs", &bugs]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no embedding backend"));

    let o = run(&[
        "match",
        "--reviews",
        &reviews,
        "--bugs",
        &bugs,
        "--model-dir",
        "/nonexistent/model",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn match_writes_problem_reports() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pr.jsonl");
    let o = synthetic_match(&["--problem-reports-out", path.to_str().unwrap(), "--min-words", "10"]);
    assert!(o.status.success());
    let text = fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 20);
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["label_source"], "heuristic");

    let o = synthetic_match(&["--no-classify"]);
    assert!(stderr(&o).contains("problem reports: 24"), "{}", stderr(&o));
}

#[test]
fn evaluate_fixture() {
    let m = fixture("evaluation/matches.jsonl");
    let a = fixture("evaluation/annotations.jsonl");
    let v = json(&run(&["evaluate", "--matches", &m, "--annotations", &a, "--k", "3"]));
    assert!((v["map"].as_f64().unwrap() - 0.5556).abs() < 1e-4);
    assert_eq!(v["hit_ratio"].as_f64(), Some(1.0));
    assert!((v["agreement"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(v["per_app"]["all"]["reports"], 1);

    let v = json(&run(&["evaluate", "--matches", &m, "--annotations", &a, "--k", "1"]));
    assert!((v["map"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let o = run(&["evaluate", "--matches", &m, "--annotations", &a, "--exclude", "q1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["evaluate", "--matches", &m, "--annotations", &a, "--k", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evaluate_rejects_unknown_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture("evaluation/matches.jsonl");
    let a = write(
        dir.path(),
        "a.jsonl",
        r#"{"problem_report_id":"q1","bug_report_id":"b9","coder":"alice","relevant":true,"annotated_at":"2021-03-01T10:00:00Z"}"#,
    );
    let o = run(&["evaluate", "--matches", &m, "--annotations", &a]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("\"b9\""), "{}", stderr(&o));
}

#[test]
fn evaluate_per_app_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(
        dir.path(),
        "m.jsonl",
        "{\"query_id\":\"r01\",\"item_id\":\"b20\",\"score\":0.6,\"rank\":1}\n\
         {\"query_id\":\"r02\",\"item_id\":\"b01\",\"score\":0.4,\"rank\":1}\n",
    );
    let reviews = write(
        dir.path(),
        "reviews.jsonl",
        "{\"id\":\"r01\",\"app\":\"one\",\"text\":\"x\",\"created_at\":\"2020-01-01T00:00:00Z\",\"source\":\"google-play\"}\n\
         {\"id\":\"r02\",\"app\":\"two\",\"text\":\"y\",\"created_at\":\"2020-01-01T00:00:00Z\",\"source\":\"google-play\"}\n",
    );
    let a = write(
        dir.path(),
        "a.jsonl",
        "{\"problem_report_id\":\"r01\",\"bug_report_id\":\"b20\",\"coder\":\"c\",\"relevant\":true,\"annotated_at\":\"2021-01-01T00:00:00Z\"}\n\
         {\"problem_report_id\":\"r02\",\"bug_report_id\":\"b01\",\"coder\":\"c\",\"relevant\":false,\"annotated_at\":\"2021-01-01T00:00:00Z\"}\n",
    );
    let csv = dir.path().join("scores.csv");
    let args = [
        "evaluate",
        "--matches",
        &m,
        "--annotations",
        &a,
        "--reviews",
        &reviews,
        "--k",
        "1",
    ];
    let mut with_csv = args.to_vec();
    with_csv.extend(["--distribution-csv", csv.to_str().unwrap()]);
    let v = json(&run(&with_csv));
    assert_eq!(v["per_app"]["one"]["map"].as_f64(), Some(1.0));
    assert_eq!(v["per_app"]["two"]["map"].as_f64(), Some(0.0));
    assert_eq!(v["map"].as_f64(), Some(0.5));
    assert_eq!(
        fs::read_to_string(csv).unwrap(),
        "app,label,score\none,relevant,0.600000\ntwo,irrelevant,0.400000\n"
    );
    let mut micro = args.to_vec();
    micro.extend(["--averaging", "micro"]);
    assert_eq!(json(&run(&micro))["averaging"], "micro");
}

#[test]
fn aggregate_table_two() {
    let v = json(&run(&["evaluate", "--aggregate", &fixture("evaluation/table2.json")]));
    assert_eq!(v["map_rounded"].as_f64(), Some(0.55));
    assert_eq!(v["hit_ratio_rounded"].as_f64(), Some(0.71));
    assert!((v["map"].as_f64().unwrap() - 0.5525).abs() < 1e-12);
    assert!((v["hit_ratio"].as_f64().unwrap() - 0.705).abs() < 1e-12);
}

#[test]
fn overlap_examples() {
    let reviews = fixture("overlap/reviews.jsonl");
    let bugs = fixture("overlap/bugs.jsonl");
    let v = json(&run(&["overlap", "--reviews", &reviews, "--bugs", &bugs]));
    assert_eq!(v["demo"]["overlap"].as_f64(), Some(0.5));
    let v = json(&run(&["overlap", "--reviews", &reviews, "--bugs", &reviews]));
    assert_eq!(v["demo"]["overlap"].as_f64(), Some(1.0));
    let v = json(&run(&[
        "overlap",
        "--reviews",
        &reviews,
        "--bugs",
        &fixture("overlap/disjoint.jsonl"),
    ]));
    assert_eq!(v["demo"]["overlap"].as_f64(), Some(0.0));

    let dir = tempfile::tempdir().unwrap();
    let plain = write(dir.path(), "plain.txt", "The camera freezes.\n\nScreen flickers\n");
    let v = json(&run(&["overlap", "--reviews", &plain, "--bugs", &plain]));
    assert_eq!(v["all"]["overlap"].as_f64(), Some(1.0));
    assert_eq!(v["all"]["shared"], 2);
}

#[test]
fn unmatched_thresholds() {
    let reviews = fixture("synthetic/reviews.jsonl");
    let bugs = fixture("synthetic/bugs.jsonl");
    let base = ["unmatched", "--reviews", &reviews, "--bugs", &bugs, "--test-backend"];
    let at = |t: &str| {
        let mut args = base.to_vec();
        args.extend(["--threshold", t]);
        let o = run(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
            .lines()
            .map(|l| {
                serde_json::from_str::<Value>(l).unwrap()["problem_report_id"]
                    .as_str()
                    .unwrap()
                    .to_string()
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(at("1.0").len(), 20);
    assert!(at("-1.0").is_empty());
    let mid = at("0.5");
    assert!(mid.iter().all(|id| at("0.6").contains(id)));
}

#[test]
fn datestats_nextcloud_pair() {
    let v = json(&run(&[
        "datestats",
        "--annotations",
        &fixture("nextcloud/annotations.jsonl"),
        "--reviews",
        &fixture("nextcloud/reviews.jsonl"),
        "--bugs",
        &fixture("nextcloud/bugs.jsonl"),
    ]));
    assert_eq!(v["per_pair"][0]["gap_days"], 284);
    assert_eq!(v["per_pair"][0]["review_first"], true);
    assert_eq!(v["mean_gap_days"].as_f64(), Some(284.0));
}

#[test]
fn tokens_table() {
    let text = "The app crashes when I upload photos to Nextcloud.";
    let o = run(&["tokens", "--text", text, "--test-backend"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), golden("tokens.tsv"));

    let o = run(&["tokens", "--text", "Wi-Fi fails"]);
    let rows: Vec<Vec<String>> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split('\t').map(String::from).collect())
        .collect();
    assert_eq!(rows[0][1..4], ["Wi-Fi", "0", "5"]);
    assert_eq!(rows[1][1..4], ["fails", "6", "11"]);
    assert_eq!(rows[0].len(), 6);
}

#[test]
fn train_tagger_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(
        dir.path(),
        "c.txt",
        "the/DET app/NOUN crashes/VERB\nthe/DET battery/NOUN drains/VERB ./PUNCT\nI/PRON love/VERB apples/NOUN\n",
    );
    let train = |out: &Path| {
        let o = run(&[
            "train-tagger",
            "--corpus",
            &corpus,
            "--name",
            "tiny",
            "--iterations",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stderr(&o).contains("perceptron:tiny:"));
        fs::read(out).unwrap()
    };
    let a = train(&dir.path().join("a.json"));
    let b = train(&dir.path().join("b.json"));
    assert_eq!(a, b);

    let o = run(&[
        "tokens",
        "--text",
        "the app crashes",
        "--tagger-model",
        dir.path().join("a.json").to_str().unwrap(),
    ]);
    let tags: Vec<String> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(4).unwrap().to_string())
        .collect();
    assert_eq!(tags, ["DET", "NOUN", "VERB"]);

    let bad = write(dir.path(), "bad.txt", "word/NOTATAG\n");
    let o = run(&[
        "train-tagger",
        "--corpus",
        &bad,
        "--out",
        dir.path().join("c.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn serve_logs_readiness() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "cfg.toml",
        "bind = \"127.0.0.1:0\"\ndata_dir = \"data\"\n\n[backend]\nkind = \"hashing\"\ndimension = 64\n",
    );
    let mut child = Command::new(env!("CARGO_BIN_EXE_feedmatch"))
        .args(["serve", "--config", &config])
        .stderr(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let mut ready = None;
    for line in BufReader::new(child.stderr.take().unwrap()).lines() {
        let line = line.unwrap();
        if let Some(i) = line.find("listening on http://") {
            ready = Some(line[i..].to_string());
            break;
        }
    }
    child.kill().unwrap();
    child.wait().unwrap();
    let ready = ready.expect("readiness line");
    assert!(ready.starts_with("listening on http://127.0.0.1:"), "{ready}");
    assert!(dir.path().join("data/events.jsonl").exists());

    let o = run(&["serve"]);
    assert_eq!(o.status.code(), Some(2));
}
