mod common;

use std::fs;
use std::process::Command;

use common::{every_subcommand, listing, prepare, qchain, workspace};

#[test]
fn chain_matches_worked_example() {
    let dir = workspace();
    let out = qchain(
        dir.path(),
        &["chain", "--scene", "fig2.json", "--target", "below(orange,red)"],
    );
    assert_eq!(out.status.code(), Some(0));
    let chain: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let ids: Vec<&str> = chain["steps"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, ["q1", "q2", "q3", "q4", "t"]);
    assert_eq!(chain["steps"][4]["rule"], "trans-below");
}

#[test]
fn exit_codes() {
    let dir = workspace();
    let code = |args: &[&str]| qchain(dir.path(), args).status.code();
    assert_eq!(code(&["softeval", "--constraints", "c.json"]), Some(2));
    assert_eq!(
        code(&[
            "constraints",
            "--scene",
            "fig2.json",
            "--target",
            "below(orange,red)",
            "--out",
            "c.json"
        ]),
        Some(0)
    );
    assert_eq!(
        code(&["softeval", "--constraints", "c.json", "--probs", "missing.json"]),
        Some(2)
    );
    assert_eq!(
        code(&["softeval", "--constraints", "c.json", "--probs", "fig2.json"]),
        Some(2)
    );
    assert_eq!(
        code(&["chain", "--scene", "fig2.json", "--target", "left(orange,red)"]),
        Some(1)
    );
    assert_eq!(
        code(&["chain", "--scene", "fig2.json", "--target", "atop(orange,red)"]),
        Some(2)
    );
    assert_eq!(code(&["close", "--scene", "fig2.json", "--format", "yaml"]), Some(2));
    assert_eq!(code(&["close", "--scene", "fig2.json", "--frobnicate"]), Some(2));
    assert_eq!(
        code(&["constraints", "--include-templates", "bogus", "--input", "c.json"]),
        Some(2)
    );
    assert_eq!(code(&["selftest"]), Some(0));
    let err = qchain(
        dir.path(),
        &["softeval", "--constraints", "c.json", "--probs", "missing.json"],
    );
    assert!(err.stdout.is_empty());
    assert!(String::from_utf8(err.stderr).unwrap().contains("missing.json"));
}

#[test]
fn kb_path_comes_from_environment() {
    let dir = workspace();
    fs::write(dir.path().join("kb.json"), r#"{"rules":[]}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qchain"))
        .current_dir(dir.path())
        .env("SPATIAL_KB_PATH", "kb.json")
        .args(["chain", "--scene", "fig2.json", "--target", "below(orange,red)"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = Command::new(env!("CARGO_BIN_EXE_qchain"))
        .current_dir(dir.path())
        .env("SPATIAL_KB_PATH", "absent.json")
        .args(["close", "--scene", "fig2.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn softeval_lines() {
    let dir = workspace();
    qchain(
        dir.path(),
        &[
            "constraints",
            "--scene",
            "fig2.json",
            "--target",
            "below(orange,red)",
            "--out",
            "c.json",
        ],
    );
    let out = qchain(
        dir.path(),
        &["softeval", "--constraints", "c.json", "--probs", "probs.json"],
    );
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert!((lines[0]["value"].as_f64().unwrap() - 0.6 / 0.9).abs() < 1e-12);
    assert!((lines[2]["violation"].as_f64().unwrap() - (1.0 - 0.3 / 0.42)).abs() < 1e-12);
}

#[test]
fn batch_pipeline_keeps_input_order() {
    let dir = workspace();
    fs::write(
        dir.path().join("gen100.json"),
        r#"{"n_entities":6,"n_blocks":2,"k_target":2,"n_scenes":100}"#,
    )
    .unwrap();
    assert!(
        qchain(dir.path(), &["gen", "--config", "gen100.json", "--out", "d.jsonl"])
            .status
            .success()
    );
    let out = qchain(dir.path(), &["pipeline", "--data", "d.jsonl"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let data = fs::read_to_string(dir.path().join("d.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 100);
    for (rec, line) in data.lines().zip(text.lines()) {
        let rec: serde_json::Value = serde_json::from_str(rec).unwrap();
        let out: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(rec["question"]["fact"], out["target"]);
        assert_eq!(rec["gold"], out["answer"]);
    }
}

#[test]
fn subcommands_are_deterministic_and_write_only_their_outputs() {
    let dir = workspace();
    prepare(dir.path());
    for args in every_subcommand() {
        let before = listing(dir.path());
        let a = qchain(dir.path(), &args);
        assert!(a.status.success(), "{args:?}: {}", String::from_utf8_lossy(&a.stderr));
        let files: Vec<Vec<u8>> = ["m.json", "r.json"]
            .iter()
            .map(|f| fs::read(dir.path().join(f)).unwrap_or_default())
            .collect();
        let b = qchain(dir.path(), &args);
        assert_eq!(a.stdout, b.stdout, "{args:?}");
        let again: Vec<Vec<u8>> = ["m.json", "r.json"]
            .iter()
            .map(|f| fs::read(dir.path().join(f)).unwrap_or_default())
            .collect();
        assert_eq!(files, again, "{args:?}");
        let mut expected = before.clone();
        for (i, a) in args.iter().enumerate() {
            if matches!(*a, "--out" | "--report") {
                expected.push(dir.path().join(args[i + 1]));
            }
        }
        expected.sort();
        expected.dedup();
        assert_eq!(listing(dir.path()), expected, "{args:?}");
    }
}
