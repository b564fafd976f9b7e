use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/articles.jsonl")
}

fn originality(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_originality"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `root`, keyed by relative path.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn help_exits_zero() {
    let out = originality(&["run", "--help"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("Usage: originality run"));
}

#[test]
fn unknown_flag_prints_usage_and_exits_one() {
    let out = originality(&["run", "--no-such-flag"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage:"));
    assert_eq!(code(&originality(&[])), 1);
}

#[test]
fn run_writes_the_declared_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = originality(&["run", s(&fixture()), "--out-dir", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    // latest publication is b3
    let snap = out_dir.join("20240502T120000Z");
    assert_eq!(stdout(&out).trim(), s(&snap));
    for name in [
        "graph.tsv",
        "pagerank.jsonl",
        "clusters.jsonl",
        "scores.jsonl",
        "stats.json",
    ] {
        assert!(snap.join(name).is_file(), "{name} missing");
    }

    let graph = fs::read_to_string(snap.join("graph.tsv")).unwrap();
    let mut edges: Vec<&str> = graph.lines().collect();
    edges.sort_unstable();
    assert_eq!(
        edges,
        ["a2\ta1", "a3\ta1", "a4\ta1", "a4\ta2", "b2\tb1", "b3\tb1", "b3\tb2"]
    );

    let scores = fs::read_to_string(snap.join("scores.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = scores.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 7, "the malformed line is rejected");
    let cluster = |id: &str| {
        records.iter().find(|r| r["id"] == id).unwrap()["cluster"]
            .as_u64()
            .unwrap()
    };
    assert_eq!(cluster("a1"), cluster("a4"));
    assert_eq!(cluster("b1"), cluster("b3"));
    assert_ne!(cluster("a1"), cluster("b1"));
    let best = |prefix: &str| {
        records
            .iter()
            .filter(|r| r["id"].as_str().unwrap().starts_with(prefix))
            .max_by(|x, y| {
                x["originality"]
                    .as_f64()
                    .partial_cmp(&y["originality"].as_f64())
                    .unwrap()
            })
            .unwrap()["id"]
            .clone()
    };
    assert_eq!(best("a"), "a1");
    assert_eq!(best("b"), "b1");

    let stats: serde_json::Value = serde_json::from_str(&fs::read_to_string(snap.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["rejected"], 1);
}

#[test]
fn refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let fx = fixture();
    let args = ["run", s(&fx), "--out-dir", s(&out_dir)];
    assert_eq!(code(&originality(&args)), 0);
    let again = originality(&args);
    assert_eq!(code(&again), 2);
    assert!(String::from_utf8_lossy(&again.stderr).contains("already exists"));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(code(&originality(&forced)), 0);
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"theta": 2.0}"#).unwrap();
    let out = originality(&["--config", s(&config), "run", s(&fixture()), "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 1);
    fs::write(&config, r#"{"thetta": 0.5}"#).unwrap();
    let out = originality(&["run", s(&fixture()), "--out-dir", s(dir.path()), "--config", s(&config)]);
    assert_eq!(code(&out), 1);
}

#[test]
fn series_over_three_ticks_makes_three_directories() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("series");
    let out = originality(&[
        "series",
        s(&fixture()),
        "--out-dir",
        s(&out_dir),
        "--start",
        "2024-05-01T06:00:00Z",
        "--end",
        "2024-05-01T08:00:00Z",
        "--interval",
        "1h",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> = fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "20240501T060000Z",
            "20240501T070000Z",
            "20240501T080000Z",
            "series.jsonl"
        ]
    );
    // a3 is published at 08:00 and only the last tick sees it
    let series = fs::read_to_string(out_dir.join("series.jsonl")).unwrap();
    let a3: serde_json::Value = series
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .find(|v| v["id"] == "a3")
        .unwrap();
    assert_eq!(a3["series"].as_array().unwrap().len(), 1);
}

#[test]
fn stage_commands_compose_to_the_run_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let fx = fixture();
    let time = "2024-05-02T12:00:00Z";
    assert_eq!(code(&originality(&["run", s(&fx), "--out-dir", s(&d.join("run"))])), 0);
    let snap = d.join("run/20240502T120000Z");

    let steps: [Vec<&str>; 4] = [
        vec!["graph", s(&fx), "--snapshot-time", time],
        vec!["pagerank", "GRAPH"],
        vec!["cluster", s(&fx), "--snapshot-time", time],
        vec!["score", "--pagerank", "PR", "--clusters", "CL"],
    ];
    let graph = d.join("graph.tsv");
    let pr = d.join("pagerank.jsonl");
    let cl = d.join("clusters.jsonl");
    let sc = d.join("scores.jsonl");
    for (step, target) in steps.iter().zip([&graph, &pr, &cl, &sc]) {
        let args: Vec<&str> = step
            .iter()
            .map(|&a| match a {
                "GRAPH" => s(&graph),
                "PR" => s(&pr),
                "CL" => s(&cl),
                a => a,
            })
            .chain(["--out", s(target)])
            .collect();
        let out = originality(&args);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    for (mine, name) in [(&graph, "graph.tsv"), (&cl, "clusters.jsonl"), (&sc, "scores.jsonl")] {
        assert_eq!(fs::read(mine).unwrap(), fs::read(snap.join(name)).unwrap(), "{name}");
    }
    // a graph read back from TSV numbers vertices by first appearance
    let sorted = |p: &Path| {
        let mut lines: Vec<String> = fs::read_to_string(p).unwrap().lines().map(String::from).collect();
        lines.sort();
        lines
    };
    assert_eq!(sorted(&pr), sorted(&snap.join("pagerank.jsonl")));
}

#[test]
fn synth_run_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let synth = d.join("synth");
    let out = originality(&[
        "synth",
        "--events",
        "10",
        "--followers",
        "4",
        "--seed",
        "3",
        "--out-dir",
        s(&synth),
    ]);
    assert_eq!(code(&out), 0);
    for name in ["corpus.jsonl", "truth.tsv", "pairs.tsv", "labels.tsv"] {
        assert!(synth.join(name).is_file());
    }
    let out = originality(&["run", s(&synth.join("corpus.jsonl")), "--out-dir", s(&d.join("out"))]);
    assert_eq!(code(&out), 0);
    let snap = stdout(&out).trim().to_string();
    let out = originality(&[
        "eval",
        "--run-dir",
        &snap,
        "--corpus",
        s(&synth.join("corpus.jsonl")),
        "--pairs",
        s(&synth.join("pairs.tsv")),
        "--labels",
        s(&synth.join("labels.tsv")),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["clustering"]["precision"], 1.0);
    assert_eq!(report["clustering"]["recall"], 1.0);
    assert_eq!(report["originality"]["top_is_original"], 1.0);
    assert_eq!(report["lift"].as_array().unwrap().len(), 5);

    // pairs without titles is a usage problem
    let out = originality(&["eval", "--run-dir", &snap, "--pairs", s(&synth.join("pairs.tsv"))]);
    assert_eq!(code(&out), 1);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let synth = d.join("synth");
    assert_eq!(
        code(&originality(&[
            "synth",
            "--events",
            "30",
            "--followers",
            "6",
            "--noise",
            "10",
            "--out-dir",
            s(&synth)
        ])),
        0
    );
    let corpus = synth.join("corpus.jsonl");
    let run = |name: &str, seed: &str| {
        let out_dir = d.join(name);
        let out = originality(&[
            "run",
            s(&corpus),
            "--out-dir",
            s(&out_dir),
            "--seed",
            seed,
            "--dump-subgraphs",
        ]);
        assert_eq!(code(&out), 0);
        tree(&out_dir)
    };
    let first = run("a", "7");
    assert!(first
        .keys()
        .any(|k| k.components().any(|c| c.as_os_str() == "subgraphs")));
    assert_eq!(first, run("b", "7"));
}
