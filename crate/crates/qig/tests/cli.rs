//! End-to-end checks of the CLI surface: simulate, learn, score, facets,
//! vertices, verify, exit codes, and the Sachs-shaped manifest layout.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qig() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qig"))
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qig-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn qig")
}

#[test]
fn simulate_learn_score_round_trip() {
    let dir = tmpdir("roundtrip");
    let data = dir.join("data");
    let out = run(qig()
        .args(["simulate", "--nodes", "6", "--seed", "11", "--samples", "1500"])
        .arg("--out")
        .arg(&data));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let manifest = data.join("manifest.json");
    let report_dir = dir.join("report");
    let out = run(qig()
        .arg("learn")
        .arg("--manifest")
        .arg(&manifest)
        .arg("--out")
        .arg(&report_dir));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(report_dir.join("report.json").exists());
    assert!(report_dir.join("essential.dot").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report_dir.join("report.json")).unwrap())
            .unwrap();
    assert!(report["score"].is_f64());

    // Score the simulated ground truth against the same data.
    let out = run(qig()
        .arg("score")
        .arg("--manifest")
        .arg(&manifest)
        .arg("--graph")
        .arg(data.join("ground_truth.json")));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    // 12-significant-digit scientific notation like -1.23456789012e4.
    let score: f64 = text
        .trim()
        .parse()
        .unwrap_or_else(|_| panic!("unparsable score output {text:?}"));
    assert!(score.is_finite());

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn facets_and_vertices_on_paper_star() {
    let dir = tmpdir("facets");
    let graph = dir.join("star.json");
    std::fs::write(
        &graph,
        serde_json::json!({
            "nodes": ["a", "b", "c", "d"],
            "edges": [["a", "c"], ["b", "c"], ["c", "d"]],
            "targets": ["a", "d"],
        })
        .to_string(),
    )
    .unwrap();

    let out = run(qig().arg("facets").arg("--graph").arg(&graph));
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7, "expected the 7 star facets, got:\n{text}");
    assert!(text.contains("x_{abc} - x_{abcd} >= 0"));
    assert!(text.contains("x_{aa'c}"));

    let out = run(qig().arg("facets").arg("--graph").arg(&graph).arg("--json"));
    assert!(out.status.success());
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 7);

    let out = run(qig().arg("vertices").arg("--graph").arg(&graph));
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    // 2^3 - 3 + 2 = 7 equivalence classes, one JSON object per line.
    assert_eq!(text.lines().count(), 7);
    for line in text.lines() {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(row["imset"].is_object());
        assert!(row["dot"].as_str().unwrap().contains("digraph"));
    }

    // Degree-two targets add affine-span equalities.
    let path = dir.join("path.json");
    std::fs::write(
        &path,
        serde_json::json!({
            "nodes": ["1", "2", "3"],
            "edges": [["1", "2"], ["2", "3"]],
            "targets": [],
        })
        .to_string(),
    )
    .unwrap();
    let out = run(qig().args(["facets", "--j", "2"]).arg("--graph").arg(&path));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("[affine-span]"));
    assert!(text.contains("x_{122'} + x_{22'3} = 1"));

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn vertices_on_four_leaf_star_with_two_targets() {
    let dir = tmpdir("star4");
    let graph = dir.join("star4.json");
    std::fs::write(
        &graph,
        serde_json::json!({
            "nodes": ["c", "l0", "l1", "l2", "l3"],
            "edges": [["c", "l0"], ["c", "l1"], ["c", "l2"], ["c", "l3"]],
            "targets": ["l0", "l1"],
        })
        .to_string(),
    )
    .unwrap();
    let out = run(qig().arg("vertices").arg("--graph").arg(&graph));
    assert!(out.status.success());
    // 2^4 - 4 + 2 = 14 interventional Markov equivalence classes.
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 14);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn verify_star_counts_suite_exits_zero() {
    let out = run(qig().args(["verify", "--suite", "star-counts"]));
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("PASS"));
}

#[test]
fn data_errors_exit_code_two() {
    let out = run(qig().args(["learn", "--manifest", "/nonexistent/manifest.json"]));
    assert_eq!(out.status.code(), Some(2));
}

/// Synthetic stand-in shaped like the protein mass-spectrometry layout:
/// 11 variables, 5 interventional contexts with the published sample sizes.
#[test]
fn sachs_shaped_manifest_runs_end_to_end() {
    let names = [
        "Raf", "Mek", "PLCg", "PIP2", "PIP3", "Erk", "Akt", "PKA", "PKC", "p38", "Jnk",
    ];
    // A polytree over the molecules; PIP2 and PKC sit internally so their
    // contexts are discarded by the leaf filter, as with the real data.
    let arcs = [
        ("PKC", "PKA"),
        ("PKA", "Erk"),
        ("Erk", "Akt"),
        ("PKC", "Mek"),
        ("Mek", "Raf"),
        ("PKC", "Jnk"),
        ("PKC", "p38"),
        ("PIP3", "PIP2"),
        ("PIP2", "PLCg"),
        ("PIP2", "PKC"),
    ];
    let dag = qig::graphs::Dag::new(names.to_vec(), &arcs).unwrap();
    let targets: Vec<String> = ["Akt", "PKC", "PIP2", "Mek", "PIP3"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(8);
    let params = qig::gaussian::random_params(&dag, &targets, &mut rng);
    let sizes = [1755usize, 911, 723, 810, 799, 848];
    let ds = qig::gaussian::simulate(&dag, &targets, &params, &sizes, 33).unwrap();

    let dir = tmpdir("sachs");
    let manifest = qig::data::write_dataset(&ds, &dir).unwrap();
    let out = run(qig().arg("learn").arg("--manifest").arg(&manifest));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let retained: Vec<String> = report["retained_targets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let discarded: Vec<String> = report["discarded_targets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert_eq!(retained.len() + discarded.len(), 5);
    // Retained targets must be leaves of the learned skeleton.
    let edges = report["skeleton"]["edges"].as_array().unwrap();
    for t in &retained {
        let degree = edges
            .iter()
            .filter(|e| e[0].as_str() == Some(t) || e[1].as_str() == Some(t))
            .count();
        assert_eq!(degree, 1, "retained target {t} is not a leaf");
    }
    std::fs::remove_dir_all(Path::new(&dir)).ok();
}
