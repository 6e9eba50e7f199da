use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rationale-eval"))
        .args(args)
        .env_remove("RATIONALE_EVAL_JOBS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert_eq!(
        code(&out),
        0,
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8")
}

struct Work(tempfile::TempDir);

impl Work {
    fn new() -> Self {
        Work(tempfile::tempdir().expect("tempdir"))
    }

    fn path(&self, name: &str) -> String {
        self.0.path().join(name).to_string_lossy().into_owned()
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&std::fs::read_to_string(self.path(name)).expect("readable"))
            .expect("json")
    }
}

fn read_lines(path: &str) -> Vec<Value> {
    std::fs::read_to_string(path)
        .expect("readable")
        .lines()
        .map(|l| serde_json::from_str(l).expect("json line"))
        .collect()
}

#[test]
fn validate_reports_each_bad_line() {
    let out = run(&["validate", "--dataset", &fixture("invalid.jsonl")]);
    assert_eq!(code(&out), 1);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("line 2:"), "{text}");
    assert!(
        text.contains("line 3: rationale_sets: UnsortedRationaleSet"),
        "{text}"
    );
    assert!(text.contains("line 4: segments: SegmentCount"), "{text}");
    assert!(text.ends_with("3 violations\n"), "{text}");
    assert_eq!(
        ok(&["validate", "--dataset", &fixture("sa.jsonl")]),
        "0 violations\n"
    );
}

#[test]
fn strict_parse_fails_and_lenient_skips() {
    let w = Work::new();
    let out = run(&[
        "stats",
        "--dataset",
        &fixture("invalid.jsonl"),
        "--out",
        &w.path("s.json"),
    ]);
    assert_eq!(code(&out), 1);
    assert!(!Path::new(&w.path("s.json")).exists());
    let out = run(&["stats", "--dataset", &fixture("invalid.jsonl"), "--lenient"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["stats"]["examples"], 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipped line 2"));
}

#[test]
fn usage_errors_exit_2_and_leave_outputs_alone() {
    let w = Work::new();
    let target = w.path("scores.jsonl");
    std::fs::write(&target, "sentinel\n").unwrap();
    let sa = fixture("sa.jsonl");
    let cases: Vec<Vec<&str>> = vec![
        vec![
            "extract",
            "--method",
            "att",
            "--model",
            "bow",
            "--dataset",
            &sa,
            "--out",
            &target,
        ],
        vec![
            "extract",
            "--method",
            "ig",
            "--model",
            "oracle",
            "--triggers",
            "good=positive",
            "--dataset",
            &sa,
            "--out",
            &target,
        ],
        vec![
            "extract",
            "--method",
            "lime",
            "--model",
            "oracle",
            "--dataset",
            &sa,
            "--out",
            &target,
        ],
        vec![
            "extract",
            "--method",
            "ig",
            "--model",
            "bow",
            "--ig-steps",
            "0",
            "--dataset",
            &sa,
            "--out",
            &target,
        ],
        vec![
            "extract",
            "--method",
            "ig",
            "--dataset",
            &sa,
            "--out",
            &target,
        ],
        vec![
            "select-topk",
            "--scores",
            &sa,
            "--rlr",
            "1.5",
            "--out",
            &target,
        ],
        vec!["select-topk", "--scores", &sa, "--out", &target],
        vec!["--jobs", "0", "stats", "--dataset", &sa, "--out", &target],
        vec![
            "eval-faithfulness",
            "--dataset",
            &sa,
            "--scores",
            &sa,
            "--model",
            "bow",
            "--probs",
            &sa,
            "--out",
            &target,
        ],
        vec![
            "stats",
            "--dataset",
            &sa,
            "--format",
            "xml",
            "--out",
            &target,
        ],
        vec!["frobnicate"],
    ];
    for args in cases {
        let out = run(&args);
        assert_eq!(
            code(&out),
            2,
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert_eq!(
            std::fs::read_to_string(&target).unwrap(),
            "sentinel\n",
            "{args:?} touched the output"
        );
    }
}

#[test]
fn data_errors_exit_1() {
    let w = Work::new();
    let out = run(&["stats", "--dataset", &w.path("missing.jsonl")]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: opening"));

    // LIME is not defined for reading comprehension.
    let out = run(&[
        "extract",
        "--method",
        "lime",
        "--model",
        "attn",
        "--dataset",
        &fixture("mrc.jsonl"),
        "--out",
        &w.path("m.jsonl"),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("lime"));
    assert!(!Path::new(&w.path("m.jsonl")).exists());
}

#[test]
fn help_and_version_exit_0() {
    assert!(ok(&["--help"]).contains("eval-faithfulness"));
    assert!(ok(&["--version"]).starts_with("rationale-eval"));
}

#[test]
fn checkpoint_round_trip_reproduces_scores() {
    let w = Work::new();
    let sa = fixture("sa.jsonl");
    ok(&[
        "--seed",
        "5",
        "extract",
        "--method",
        "ig",
        "--model",
        "attn",
        "--dataset",
        &sa,
        "--out",
        &w.path("a.jsonl"),
        "--save-checkpoint",
        &w.path("ck.json"),
    ]);
    let ck = w.json("ck.json");
    assert_eq!(ck["type"], "attn");
    assert_eq!(ck["seed"], 5);
    // A different seed must not matter once the weights come from the file.
    ok(&[
        "--seed",
        "9",
        "extract",
        "--method",
        "ig",
        "--model",
        "attn",
        "--checkpoint",
        &w.path("ck.json"),
        "--dataset",
        &sa,
        "--out",
        &w.path("b.jsonl"),
    ]);
    assert_eq!(
        std::fs::read(w.path("a.jsonl")).unwrap(),
        std::fs::read(w.path("b.jsonl")).unwrap()
    );

    let out = run(&[
        "extract",
        "--method",
        "ig",
        "--model",
        "bow",
        "--checkpoint",
        &w.path("ck.json"),
        "--dataset",
        &sa,
        "--out",
        &w.path("c.jsonl"),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn sts_pipeline_with_oracle() {
    let w = Work::new();
    let sts = fixture("sts.jsonl");
    let triggers = "cook=similar,rice=similar,train=dissimilar,moon=dissimilar";
    ok(&[
        "extract",
        "--method",
        "lime",
        "--model",
        "oracle",
        "--triggers",
        triggers,
        "--dataset",
        &sts,
        "--out",
        &w.path("s.jsonl"),
        "--lime-samples",
        "300",
    ]);
    let maps = read_lines(&w.path("s.jsonl"));
    assert_eq!(maps.len(), 3);
    assert_eq!(maps[0]["scores"].as_array().unwrap().len(), 12);
    ok(&[
        "eval-faithfulness",
        "--dataset",
        &sts,
        "--scores",
        &w.path("s.jsonl"),
        "--model",
        "oracle",
        "--triggers",
        triggers,
        "--rationale",
        "gold",
        "--out",
        &w.path("f.json"),
    ]);
    let f = w.json("f.json");
    for row in f["faithfulness"]["per_instance"].as_array().unwrap() {
        assert_eq!(row["suf"].as_f64().unwrap(), 0.0, "{row}");
        assert!(row["com"].as_f64().unwrap() > 0.0, "{row}");
    }
    assert_eq!(f["faithfulness"]["pairs"], 1);
    assert_eq!(f["config"]["rationale"], "gold");
}

#[test]
fn mrc_attention_scores_passage_only() {
    let w = Work::new();
    let mrc = fixture("mrc.jsonl");
    ok(&[
        "extract",
        "--method",
        "att",
        "--model",
        "attn",
        "--dataset",
        &mrc,
        "--out",
        &w.path("m.jsonl"),
    ]);
    let maps = read_lines(&w.path("m.jsonl"));
    let first: Vec<f64> = maps[0]["scores"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(first.len(), 12);
    assert!(first[..4].iter().all(|&s| s == 0.0), "{first:?}");
    assert!(
        (first[4..].iter().sum::<f64>() - 1.0).abs() < 1e-9,
        "{first:?}"
    );
    ok(&[
        "select-topk",
        "--scores",
        &w.path("m.jsonl"),
        "--dataset",
        &mrc,
        "--out",
        &w.path("p.jsonl"),
    ]);
    for p in read_lines(&w.path("p.jsonl")) {
        assert!(
            p["indices"]
                .as_array()
                .unwrap()
                .iter()
                .all(|i| i.as_u64().unwrap() >= 4),
            "{p}"
        );
    }
    // MAP is defined for MRC; sufficiency and comprehensiveness are not.
    ok(&[
        "eval-faithfulness",
        "--dataset",
        &mrc,
        "--scores",
        &w.path("m.jsonl"),
        "--model",
        "attn",
        "--out",
        &w.path("f.json"),
    ]);
    let f = w.json("f.json");
    assert!(f["faithfulness"]["map"].is_number());
    assert!(f["faithfulness"].get("suf").is_none());
}

#[test]
fn offline_probabilities() {
    let w = Work::new();
    let sa = fixture("sa.jsonl");
    ok(&[
        "extract",
        "--method",
        "ig",
        "--model",
        "bow",
        "--dataset",
        &sa,
        "--out",
        &w.path("s.jsonl"),
    ]);
    let mut probs = String::new();
    for id in ["sa-1", "sa-1-d", "sa-2", "sa-2-s", "sa-3", "sa-3-i", "sa-4"] {
        for (variant, p) in [("full", 0.8), ("rationale", 0.7), ("nonrationale", 0.4)] {
            probs += &format!(
                "{{\"id\":\"{id}\",\"variant\":\"{variant}\",\"probs\":[{},{p}]}}\n",
                1.0 - p
            );
        }
    }
    std::fs::write(w.path("probs.jsonl"), probs).unwrap();
    ok(&[
        "eval-faithfulness",
        "--dataset",
        &sa,
        "--scores",
        &w.path("s.jsonl"),
        "--probs",
        &w.path("probs.jsonl"),
        "--classes",
        "negative,positive",
        "--out",
        &w.path("f.json"),
    ]);
    let f = w.json("f.json");
    assert!((f["faithfulness"]["suf"].as_f64().unwrap() - 0.1).abs() < 1e-6);
    assert!((f["faithfulness"]["com"].as_f64().unwrap() - 0.4).abs() < 1e-6);
    assert!(f["faithfulness"].get("accuracy").is_none());
}

#[test]
fn qc_routes_fixture_ratings() {
    let w = Work::new();
    ok(&[
        "qc",
        "--dataset",
        &fixture("sa.jsonl"),
        "--ratings",
        &fixture("ratings.jsonl"),
        "--out",
        &w.path("q.json"),
    ]);
    let q = w.json("q.json");
    let ex: Vec<(String, String)> = q["qc"]["examples"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            (
                e["id"].as_str().unwrap().into(),
                e["status"].as_str().unwrap().into(),
            )
        })
        .collect();
    assert_eq!(
        ex,
        [
            ("sa-2".into(), "needs_revision".into()),
            ("sa-3".into(), "qualified".into()),
            ("sa-4".into(), "qualified".into())
        ]
    );
    assert_eq!(q["qc"]["unrated"], 4);
}

#[test]
fn report_merges_and_checks_consistency() {
    let w = Work::new();
    let sa = fixture("sa.jsonl");
    ok(&[
        "extract",
        "--method",
        "ig",
        "--model",
        "bow",
        "--dataset",
        &sa,
        "--out",
        &w.path("s.jsonl"),
    ]);
    ok(&[
        "select-topk",
        "--scores",
        &w.path("s.jsonl"),
        "--dataset",
        &sa,
        "--out",
        &w.path("p.jsonl"),
    ]);
    ok(&[
        "eval-plausibility",
        "--dataset",
        &sa,
        "--predictions",
        &w.path("p.jsonl"),
        "--out",
        &w.path("pl.json"),
    ]);
    ok(&["stats", "--dataset", &sa, "--out", &w.path("st.json")]);
    let merged = ok(&["report", "--input", &w.path("pl.json"), &w.path("st.json")]);
    let v: Value = serde_json::from_str(&merged).unwrap();
    assert_eq!(
        v["command"],
        serde_json::json!(["eval-plausibility", "stats"])
    );
    assert!(v["plausibility"]["token_f1"].is_number() && v["stats"]["rlr"].is_number());

    let csv = ok(&["report", "--input", &w.path("pl.json"), "--format", "csv"]);
    assert!(csv.starts_with("section,id,metric,value\n"));
    assert!(csv.contains("plausibility.per_instance,sa-1,"));

    // A tampered mean no longer matches its per-instance rows.
    let mut bad = w.json("pl.json");
    bad["plausibility"]["token_f1"] = serde_json::json!(0.999);
    std::fs::write(w.path("bad.json"), bad.to_string()).unwrap();
    let out = run(&["report", "--input", &w.path("bad.json")]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("token_f1"));
}

#[test]
fn jobs_from_environment() {
    let w = Work::new();
    let sa = fixture("sa.jsonl");
    let with_env = |jobs: &str, out: &PathBuf| {
        let status = Command::new(env!("CARGO_BIN_EXE_rationale-eval"))
            .args([
                "extract",
                "--method",
                "lime",
                "--model",
                "bow",
                "--lime-samples",
                "200",
                "--dataset",
                &sa,
                "--out",
            ])
            .arg(out)
            .env("RATIONALE_EVAL_JOBS", jobs)
            .output()
            .unwrap();
        assert!(status.status.success());
    };
    let a = PathBuf::from(w.path("a.jsonl"));
    let b = PathBuf::from(w.path("b.jsonl"));
    with_env("1", &a);
    with_env("4", &b);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    let out = Command::new(env!("CARGO_BIN_EXE_rationale-eval"))
        .args(["stats", "--dataset", &sa])
        .env("RATIONALE_EVAL_JOBS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}
