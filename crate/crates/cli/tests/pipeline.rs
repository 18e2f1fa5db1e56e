use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lifelog(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lifelog"))
        .args(args)
        .args(["--seed", "4", "--out"])
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) {
    let o = lifelog(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

const SMALL: [&str; 4] = ["--n-max", "110", "--epochs", "2"];

fn with_small<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().copied().chain(SMALL).collect()
}

fn small_pipeline(out: &Path) {
    ok(out, &["synth", "--users-per-archetype", "2", "--days", "4"]);
    ok(out, &with_small(&["build"]));
    ok(out, &with_small(&["train"]));
    ok(out, &with_small(&["train", "--baseline"]));
    ok(out, &with_small(&["embed"]));
    ok(out, &with_small(&["analyze", "--runs", "2", "--tsne-iterations", "250"]));
}

#[test]
fn end_to_end_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    small_pipeline(out);
    for rel in [
        "events.tsv",
        "users.tsv",
        "graphs/manifest.tsv",
        "graphs/graphs.jsonl",
        "checkpoints/ae.ckpt",
        "checkpoints/ccm-aae.ckpt",
        "checkpoints/ccm-aae.log.tsv",
        "embeddings/ae.tsv",
        "embeddings/ccm-aae.tsv",
        "projection/ccm-aae.tsv",
        "reports/accuracy.txt",
        "reports/accuracy.tsv",
        "reports/clusters-ccm-aae.txt",
    ] {
        assert!(out.join(rel).is_file(), "missing {rel}");
    }
    let log = fs::read_to_string(out.join("checkpoints/ccm-aae.log.tsv")).unwrap();
    assert!(log.starts_with("# lifelog train config_sha256="));
    assert!(log.lines().any(|l| l == "epoch\tL_AE\tL_Dis\tL_Enc\tmean_deviation"));
    let svg = fs::read_to_string(out.join("projection/ccm-aae-sex.svg")).unwrap();
    assert!(svg.contains("<svg"));
}

#[test]
fn rerunning_a_stage_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["synth", "--users-per-archetype", "1", "--days", "3"]);
    ok(out, &with_small(&["build"]));
    let first = fs::read(out.join("graphs/graphs.jsonl")).unwrap();
    let manifest = fs::read(out.join("graphs/manifest.tsv")).unwrap();
    ok(out, &with_small(&["build"]));
    assert_eq!(fs::read(out.join("graphs/graphs.jsonl")).unwrap(), first);
    assert_eq!(fs::read(out.join("graphs/manifest.tsv")).unwrap(), manifest);
}

#[test]
fn missing_predecessor_exits_with_pipeline_order() {
    let dir = tempfile::tempdir().unwrap();
    let o = lifelog(dir.path(), &["train"]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    let line = err.lines().find(|l| l.starts_with("error ")).expect("error line");
    assert!(line.contains("kind=pipeline_order code=3"), "{line}");
    assert!(line.contains("file=") && line.contains("manifest.tsv"), "{line}");
}

#[test]
fn shape_mismatch_exits_with_compatibility() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["synth", "--users-per-archetype", "1", "--days", "3"]);
    ok(out, &with_small(&["build"]));
    ok(out, &with_small(&["train"]));
    let o = lifelog(out, &["embed", "--n-max", "110", "--d", "3", "--model", "ccm-aae"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let o = lifelog(out, &["train", "--n-max", "120", "--epochs", "1"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kind=compatibility"));
}

#[test]
fn empty_day_viz_has_fixed_nodes_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["synth", "--users-per-archetype", "1", "--days", "2"]);
    ok(out, &["viz", "--user", "nobody", "--date", "2001-01-01", "--format", "both"]);
    let dot = fs::read_to_string(out.join("viz/nobody_2001-01-01.dot")).unwrap();
    assert!(dot.starts_with("// lifelog viz config_sha256="), "{}", &dot[..80.min(dot.len())]);
    assert_eq!(dot.matches("->").count(), 95);
    let nodes = dot.lines().filter(|l| l.contains("[label=") && !l.contains("->")).count();
    assert_eq!(nodes, 103);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("viz/nobody_2001-01-01.json")).unwrap()).unwrap();
    assert_eq!(json["nodes"].as_array().unwrap().len(), 103);
}

#[test]
fn bad_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = lifelog(dir.path(), &["build", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_lifelog")).arg("build").output().unwrap();
    assert_eq!(o.status.code(), Some(2), "missing seed");
}
