mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use agentslice::eval::load_benchmark;
use agentslice::llm::{Cassette, CassetteEntry, ChatRequest, ChatResponse, Message, Usage};
use agentslice::slice::{SliceDocument, SliceLine};
use common::fixtures_dir;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_agentslice"));
    c.env_remove("SLICEMATE_MODEL")
        .env_remove("SLICEMATE_API_KEY")
        .env_remove("SLICEMATE_API_BASE")
        .env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn running_max() -> PathBuf {
    fixtures_dir().join("running_max")
}

fn bench() -> PathBuf {
    fixtures_dir().join("bench")
}

#[test]
fn slice_replay_writes_slice_and_transcript() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("slice.json");
    let transcript = tmp.path().join("t.jsonl");
    let manifest = tmp.path().join("run.json");
    let o = run(&[
        "slice",
        "--workspace",
        p(&running_max()),
        "--criterion",
        "Main.java:17",
        "--replay",
        p(&running_max().join("cassette.jsonl")),
        "--out",
        p(&out),
        "--transcript",
        p(&transcript),
        "--run-manifest",
        p(&manifest),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: SliceDocument = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let lines: Vec<usize> = doc.lines.iter().map(|l| l.line).collect();
    assert_eq!(lines, vec![1, 2, 3, 5, 6, 8, 9, 10, 11, 12, 13, 14, 16, 17, 23, 24, 25, 26, 28]);
    assert_eq!(std::fs::read_to_string(&transcript).unwrap().lines().count(), 6);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["instances"][0]["status"], "ok");
}

#[test]
fn bad_criterion_is_a_usage_error() {
    for crit in ["Main.java", "Main.java:x", "Main.java:0", "Missing.java:3", "Main.java:999"] {
        let o = run(&[
            "slice",
            "--workspace",
            p(&running_max()),
            "--criterion",
            crit,
            "--replay",
            p(&running_max().join("cassette.jsonl")),
        ]);
        assert_eq!(code(&o), 2, "{crit}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn missing_workspace_is_a_usage_error() {
    let o = run(&["slice", "--criterion", "a.py:1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_replay_file_is_a_usage_error() {
    let o = run(&[
        "slice",
        "--workspace",
        p(&running_max()),
        "--criterion",
        "Main.java:17",
        "--replay",
        "/nonexistent/cassette.jsonl",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn replay_miss_is_a_pipeline_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("slice.json");
    let transcript = tmp.path().join("t.jsonl");
    // A different criterion makes prompts the cassette has never seen.
    let o = run(&[
        "slice",
        "--workspace",
        p(&running_max()),
        "--criterion",
        "Main.java:19",
        "--replay",
        p(&running_max().join("cassette.jsonl")),
        "--out",
        p(&out),
        "--transcript",
        p(&transcript),
    ]);
    assert_eq!(code(&o), 3);
    let err: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(err["error"].as_str().unwrap().contains("no cassette entry"), "{err}");
    assert_eq!(err["last_valid_slice"]["lines"].as_array().unwrap().len(), 1);
}

#[test]
fn scoring_ground_truth_gives_all_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let preds = tmp.path().join("preds");
    std::fs::create_dir(&preds).unwrap();
    for inst in load_benchmark(&bench().join("benchmark.json")).unwrap() {
        let ws = inst.workspace().unwrap();
        let lines = inst
            .ground_truth_refs()
            .into_iter()
            .map(|r| SliceLine {
                text: ws.line_text(&r.file, r.line).unwrap().to_string(),
                file: r.file,
                line: r.line,
            })
            .collect();
        let doc = SliceDocument {
            criterion: inst.criterion.clone(),
            lines,
            hallucinated: Vec::new(),
        };
        std::fs::write(preds.join(format!("{}.json", inst.id)), serde_json::to_string(&doc).unwrap()).unwrap();
    }
    let report = tmp.path().join("report.json");
    let o = run(&[
        "eval",
        "--benchmark",
        p(&bench().join("benchmark.json")),
        "--predictions",
        p(&preds),
        "--out",
        p(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let groups = summary["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 4);
    for g in groups {
        for key in ["precision", "recall", "f1", "accuracy", "acc_em"] {
            assert_eq!(g[key].as_f64(), Some(1.0), "{g}");
        }
    }
    assert_eq!(summary["ratios"]["ratio_1"].as_f64(), Some(1.0));
    assert_eq!(summary["ratios"]["ratio_all"].as_f64(), Some(1.0));
}

#[test]
fn csv_report_has_fixed_header() {
    let tmp = tempfile::tempdir().unwrap();
    let report = tmp.path().join("r.csv");
    let o = run(&[
        "eval",
        "--benchmark",
        p(&bench().join("benchmark.json")),
        "--replay",
        p(&bench().join("cassette.jsonl")),
        "--format",
        "csv",
        "--out",
        p(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().next().unwrap(), "group,n,precision,recall,f1,accuracy,acc_em");
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn end_to_end_eval_needs_a_cassette_mode() {
    let o = run(&["eval", "--benchmark", p(&bench().join("benchmark.json"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn malformed_benchmark_is_a_schema_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("bad.json", "{\"instances\": [{\"id\": 1}]}".to_string()),
        ("notjson.json", "not json".to_string()),
        (
            "range.json",
            r#"{"instances":[{"id":"a","language":"python","files":[{"path":"a.py","content":"x = 1\n"}],
            "criterion":{"file":"a.py","line":1},"ground_truth":[{"file":"a.py","lines":[99]}],"source_tag":"codenet"}]}"#
                .to_string(),
        ),
    ];
    for (name, text) in cases {
        let path = tmp.path().join(name);
        std::fs::write(&path, text).unwrap();
        let o = run(&["eval", "--benchmark", p(&path), "--predictions", p(tmp.path())]);
        assert_eq!(code(&o), 4, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

fn entry(prompt: &str, answer: &str) -> CassetteEntry {
    CassetteEntry::new(
        ChatRequest::new("gpt-4o", vec![Message::user(prompt)]),
        ChatResponse {
            text: answer.into(),
            usage: Usage {
                prompt_tokens: 1,
                completion_tokens: 1,
            },
            latency_ms: 0,
        },
    )
}

fn cassette_file(dir: &Path, name: &str, entries: &[(&str, &str)]) -> PathBuf {
    let mut c = Cassette::default();
    for (p, a) in entries {
        c.insert(entry(p, a)).unwrap();
    }
    let path = dir.join(name);
    c.save(&path).unwrap();
    path
}

#[test]
fn cassette_merge_verify_and_conflict() {
    let tmp = tempfile::tempdir().unwrap();
    let a = cassette_file(tmp.path(), "a.jsonl", &[("one", "1"), ("two", "2")]);
    let b = cassette_file(tmp.path(), "b.jsonl", &[("three", "3")]);
    let clash = cassette_file(tmp.path(), "c.jsonl", &[("one", "uno")]);
    let merged = tmp.path().join("m.jsonl");

    let o = run(&["cassette", "merge", "--out", p(&merged), p(&a), p(&b)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(Cassette::load(&merged).unwrap().len(), 3);

    let o = run(&["cassette", "verify", p(&merged)]);
    assert_eq!(code(&o), 0);
    let o = run(&["cassette", "inspect", p(&merged)]);
    assert_eq!(code(&o), 0);
    let info: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(info["entries"], 3);

    let o = run(&["cassette", "merge", "--out", p(&tmp.path().join("x.jsonl")), p(&a), p(&clash)]);
    assert_eq!(code(&o), 5);

    // Editing a stored request without re-hashing breaks verification.
    let text = std::fs::read_to_string(&a).unwrap().replacen("\"content\":\"one\"", "\"content\":\"ONE\"", 1);
    std::fs::write(&a, text).unwrap();
    let o = run(&["cassette", "verify", p(&a)]);
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn bundled_cassettes_verify() {
    for path in [running_max().join("cassette.jsonl"), bench().join("cassette.jsonl")] {
        let o = run(&["cassette", "verify", p(&path)]);
        assert_eq!(code(&o), 0, "{}", path.display());
    }
}

#[test]
fn help_lists_every_flag() {
    let text = |args: &[&str]| String::from_utf8(run(args).stdout).unwrap();
    let slice = text(&["slice", "--help"]);
    for flag in [
        "--workspace", "--criterion", "--out", "--transcript", "--model", "--max-iters", "--budget", "--replay",
        "--record",
    ] {
        assert!(slice.contains(flag), "slice --help lacks {flag}");
    }
    let eval = text(&["eval", "--help"]);
    for flag in ["--benchmark", "--predictions", "--format", "--workers", "--replay", "--record", "--run-manifest"] {
        assert!(eval.contains(flag), "eval --help lacks {flag}");
    }
    let cassette = text(&["cassette", "--help"]);
    for sub in ["inspect", "merge", "verify"] {
        assert!(cassette.contains(sub));
    }
}
