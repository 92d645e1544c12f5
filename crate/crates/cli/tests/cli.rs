use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn slate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slate"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = slate(args);
    assert!(
        out.status.success(),
        "slate {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn toy_t3(dir: &Path) -> String {
    let edges = dir.join("t3.edges");
    fs::write(&edges, "0 1 0\n1 2 0\n3 4 0\n0 1 1\n0 1 2\n1 2 2\n2 3 2\n").unwrap();
    fs::write(dir.join("t3.meta"), "name = t3\nnum_nodes = 5\nnum_snapshots = 3\n").unwrap();
    edges.to_str().unwrap().to_string()
}

const SMALL: &[&str] = &[
    "--d", "8", "--k", "2", "--heads", "2", "--nhead_xa", "2", "--ffn_dim", "8", "--d_time", "4",
    "--epochs", "3", "--w", "2",
];

#[test]
fn generate_is_deterministic_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    for o in ["a", "b"] {
        let o = dir.path().join(o);
        ok(&[
            "generate", "--kind", "er", "--n", "10", "--p", "0.3", "--t", "3", "--seed", "7", "--name", "toy",
            "--out", o.to_str().unwrap(),
        ]);
    }
    let a = fs::read(dir.path().join("a/toy.edges")).unwrap();
    let b = fs::read(dir.path().join("b/toy.edges")).unwrap();
    assert_eq!(a, b);
    let meta = fs::read_to_string(dir.path().join("a/toy.meta")).unwrap();
    assert!(meta.contains("num_nodes = 10") && meta.contains("num_snapshots = 3"), "{meta}");
    for line in String::from_utf8(a).unwrap().lines() {
        let f: Vec<usize> = line.split_whitespace().map(|x| x.parse().unwrap()).collect();
        assert!(f[0] < f[1] && f[1] < 10 && f[2] < 3, "{line}");
    }
}

#[test]
fn inspect_toy_t3() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_t3(dir.path());
    let out = dir.path().join("inspect");
    let stdout = ok(&["inspect", "--data", &data, "--w", "3", "--k", "2", "--out", out.to_str().unwrap()]);
    assert!(stdout.contains("transformed: rows 14"), "{stdout}");

    let csv = fs::read_to_string(out.join("transformed/projections.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("node,tau,lambda_index,eigenvalue,projection"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 15);
    let flagged: Vec<(&str, &str)> = rows
        .iter()
        .filter(|r| r[4].is_empty())
        .map(|r| (r[0], r[1]))
        .collect();
    assert_eq!(flagged, vec![("2", "1"), ("3", "1"), ("4", "1"), ("4", "2")]);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["transformed"]["rows"], 14);
    assert_eq!(summary["transformed"]["components"], 1);
    // {012},{34} | {01},2,3,4 | {0123},{4}
    assert_eq!(summary["untransformed"]["components"], 8);
    assert_eq!(summary["untransformed"]["rows"], 15);
    let coo = fs::read_to_string(out.join("transformed/supra_coo.txt")).unwrap();
    assert!(!coo.trim().is_empty());
    let index = fs::read_to_string(out.join("transformed/index_map.txt")).unwrap();
    assert_eq!(index.lines().filter(|l| !l.starts_with('#')).count(), 11);
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = slate(&["generate", "--colour", "red", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn config_file_and_flags_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "kind = er\nn = 6\nt = 2\np = 0.5\n").unwrap();
    let out = dir.path().join("g");
    ok(&["generate", "--config", cfg.to_str().unwrap(), "--n", "7", "--out", out.to_str().unwrap()]);
    let echo = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(echo.contains("n = 7") && echo.contains("kind = er"), "{echo}");
    assert!(fs::read_to_string(out.join("graph.meta")).unwrap().contains("num_nodes = 7"));
}

fn train_and_eval(dir: &Path, data: &str, name: &str) -> Vec<u8> {
    let out = dir.join(name);
    let mut args = vec!["train", "--data", data, "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    ok(&args);
    args[0] = "eval";
    args.extend_from_slice(&["--strategies", "random,historical"]);
    ok(&args);
    for f in ["checkpoint.bin", "trace.csv", "history.json", "report_random.json", "report_historical.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    fs::read(out.join("report_random.json")).unwrap()
}

#[test]
fn train_eval_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    ok(&[
        "generate", "--kind", "sbm", "--n", "12", "--p_in", "0.6", "--p_out", "0.1", "--t", "8", "--seed", "2",
        "--name", "sbm", "--out", g.to_str().unwrap(),
    ]);
    let data = g.join("sbm.edges");
    let data = data.to_str().unwrap();
    let a = train_and_eval(dir.path(), data, "a");
    let b = train_and_eval(dir.path(), data, "b");
    let strip = |bytes: &[u8]| {
        let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
        v["config"].as_object_mut().unwrap().remove("out");
        v
    };
    assert_eq!(strip(&a), strip(&b));
    let report = strip(&a);
    let auc = report["aggregate"]["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert_eq!(
        fs::read(dir.path().join("a/trace.csv")).unwrap(),
        fs::read(dir.path().join("b/trace.csv")).unwrap()
    );
}

#[test]
fn eval_rejects_mismatched_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_t3(dir.path());
    fs::write(dir.path().join("checkpoint.bin"), b"not a checkpoint").unwrap();
    let out = slate(&[
        "eval", "--data", &data, "--checkpoint", dir.path().join("checkpoint.bin").to_str().unwrap(),
        "--out", dir.path().join("e").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}

#[test]
fn ablate_grid_counts_cells() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    ok(&[
        "generate", "--kind", "sbm", "--n", "12", "--p_in", "0.6", "--p_out", "0.1", "--t", "8", "--seed", "4",
        "--name", "sbm", "--out", g.to_str().unwrap(),
    ]);
    let out = dir.path().join("ab");
    let data = g.join("sbm.edges");
    let mut args = vec![
        "ablate", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--encodings", "slate,lappe_time", "--edge_modules", "true,false", "--poolings", "mean:1",
        "--ws", "1,2", "--seeds", "2", "--strategy", "random", "--jobs", "1",
    ];
    args.extend_from_slice(&SMALL[..12]);
    args.extend_from_slice(&["--epochs", "2"]);
    let stdout = ok(&args);
    let cells = fs::read_to_string(out.join("cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 1 + 2 * 2 * 2 * 2);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 2 * 2);
    assert!(stdout.contains('±'), "{stdout}");
}
