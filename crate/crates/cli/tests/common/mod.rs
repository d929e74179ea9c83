#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const FIG2: &str = r#"{"entities":[{"id":"white"},{"id":"orange"},{"id":"red"}],
"facts":[{"rel":"above","subj":"white","obj":"orange"},{"rel":"above","subj":"red","obj":"white"}]}"#;

pub fn qchain(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qchain"))
        .current_dir(dir)
        .env_remove("SPATIAL_KB_PATH")
        .args(args)
        .output()
        .unwrap()
}

pub fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let w = |name: &str, text: &str| fs::write(dir.path().join(name), text).unwrap();
    w("fig2.json", FIG2);
    w(
        "qs.json",
        r#"[{"id":"q1","type":"yn","fact":{"rel":"below","subj":"orange","obj":"red"}},{"id":"q2","type":"fr","subj":"red","obj":"orange"}]"#,
    );
    w("probs.json", r#"{"q1":0.9,"q2":0.8,"q3":0.6,"q4":0.7,"t":0.3}"#);
    w(
        "gen.json",
        r#"{"n_entities":6,"n_blocks":2,"k_choices":[1,2,3],"n_scenes":40,"question_mix":0.8}"#,
    );
    w("train.json", r#"{"epochs":3,"dim":256}"#);
    dir
}

pub fn listing(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

pub fn every_subcommand() -> Vec<Vec<&'static str>> {
    vec![
        vec!["close", "--scene", "fig2.json"],
        vec!["close", "--scene", "fig2.json", "--format", "text"],
        vec!["answer", "--scene", "fig2.json", "--questions", "qs.json"],
        vec!["chain", "--scene", "fig2.json", "--target", "below(orange,red)"],
        vec!["constraints", "--scene", "fig2.json", "--target", "below(orange,red)"],
        vec!["softeval", "--constraints", "c.json", "--probs", "probs.json"],
        vec!["gen", "--config", "gen.json", "--seed", "3"],
        vec![
            "render",
            "--input",
            "chain.json",
            "--scene",
            "fig2.json",
            "--format",
            "cos",
        ],
        vec![
            "train",
            "--data",
            "d.jsonl",
            "--config",
            "train.json",
            "--out",
            "m.json",
            "--report",
            "r.json",
        ],
        vec!["eval", "--model", "m.json", "--data", "d.jsonl"],
        vec![
            "pipeline",
            "--scene",
            "fig2.json",
            "--target",
            "below(orange,red)",
            "--format",
            "lr",
        ],
        vec!["selftest"],
    ]
}

pub fn prepare(dir: &Path) {
    for args in [
        &[
            "constraints",
            "--scene",
            "fig2.json",
            "--target",
            "below(orange,red)",
            "--out",
            "c.json",
        ][..],
        &[
            "chain",
            "--scene",
            "fig2.json",
            "--target",
            "below(orange,red)",
            "--out",
            "chain.json",
        ],
        &["gen", "--config", "gen.json", "--out", "d.jsonl"],
    ] {
        assert!(qchain(dir, args).status.success());
    }
}
