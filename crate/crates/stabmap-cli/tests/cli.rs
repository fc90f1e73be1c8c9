//! End-to-end command-line flows: every subcommand against generated files,
//! exit-code conventions, and config-file handling.

use std::path::PathBuf;
use std::process::Output;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_stabmap")
}

fn run(args: &[&str]) -> Output {
    std::process::Command::new(bin())
        .args(args)
        .output()
        .expect("spawn stabmap")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "stabmap {:?} failed ({:?}): {}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        let root = dir.path().to_path_buf();
        Workspace { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

fn generate(ws: &Workspace) -> (String, String, String, String) {
    run_ok(&[
        "gen",
        "--blocks",
        "3x40",
        "--p-in",
        "0.5",
        "--p-across",
        "0.03",
        "--seed",
        "7",
        "--out",
        &ws.arg("data"),
    ]);
    (
        ws.arg("data/graph.edges"),
        ws.arg("data/features.csv"),
        ws.arg("data/labels.txt"),
        ws.arg("data/outputs.csv"),
    )
}

#[test]
fn full_pipeline_through_files() {
    let ws = Workspace::new();
    let (graph, features, labels, outputs) = generate(&ws);
    for name in ["data/graph.edges", "data/features.csv", "data/labels.txt", "data/outputs.csv", "data/meta.json"] {
        assert!(ws.path(name).exists(), "{name} missing");
    }

    // Embedding + eigengap diagnostics.
    let stdout = run_ok(&[
        "embed",
        "--graph",
        &graph,
        "--k",
        "12",
        "--classes",
        "3",
        "--seed",
        "7",
        "--out",
        &ws.arg("embed"),
    ]);
    assert!(stdout.contains("suggested k"));
    assert!(ws.path("embed.sgmx").exists());
    let gap: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("embed.json")).unwrap()).unwrap();
    assert_eq!(gap["config"]["command"], "embed");
    assert_eq!(gap["eigengap"]["heuristic_k"], 30);

    // Input manifold.
    run_ok(&[
        "manifold",
        "--graph",
        &graph,
        "--features",
        &features,
        "--k",
        "20",
        "--seed",
        "7",
        "--out",
        &ws.arg("mani"),
    ]);
    assert!(ws.path("mani.edges").exists() && ws.path("mani.json").exists());

    // Scores from raw outputs.
    run_ok(&[
        "score",
        "--input-manifold",
        &ws.arg("mani"),
        "--outputs",
        &outputs,
        "--s",
        "10",
        "--fraction",
        "0.05",
        "--seed",
        "7",
        "--out",
        &ws.arg("report.json"),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("report.json")).unwrap()).unwrap();
    assert_eq!(report["nodes"].as_array().unwrap().len(), 120);
    assert_eq!(report["stable"].as_array().unwrap().len(), 6);
    assert_eq!(report["config"]["command"], "score");

    // Perturbations: gaussian features and dice edges.
    run_ok(&[
        "perturb",
        "--graph",
        &graph,
        "--features",
        &features,
        "--kind",
        "gaussian",
        "--level",
        "0.8",
        "--seed",
        "7",
        "--out",
        &ws.arg("xp.csv"),
    ]);
    run_ok(&[
        "perturb",
        "--graph",
        &graph,
        "--labels",
        &labels,
        "--kind",
        "dice",
        "--level",
        "10",
        "--seed",
        "7",
        "--out",
        &ws.arg("gp.edges"),
    ]);
    let dice: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("gp.json")).unwrap()).unwrap();
    assert_eq!(dice["additions"], 10);

    // Forward pass on perturbed inputs, then evaluation against clean.
    run_ok(&[
        "forward",
        "--graph",
        &graph,
        "--features",
        &ws.arg("xp.csv"),
        "--hidden",
        "32",
        "--classes",
        "3",
        "--seed",
        "7",
        "--out",
        &ws.arg("yp.csv"),
    ]);
    let stdout = run_ok(&[
        "eval",
        "--report",
        &ws.arg("report.json"),
        "--clean",
        &outputs,
        "--perturbed",
        &ws.arg("yp.csv"),
        "--level",
        "0.8",
        "--out",
        &ws.arg("eval"),
    ]);
    assert!(stdout.contains("stable"));
    let csv = std::fs::read_to_string(ws.path("eval.csv")).unwrap();
    assert!(csv.starts_with("segment,level,mean_cos,mean_kld,n\n"));
    assert_eq!(csv.lines().count(), 4);

    // Fractional segments.
    run_ok(&[
        "eval",
        "--report",
        &ws.arg("report.json"),
        "--clean",
        &outputs,
        "--perturbed",
        &ws.arg("yp.csv"),
        "--fractions",
        "0.2,0.6,0.2",
        "--out",
        &ws.arg("eval3"),
    ]);
    let csv = std::fs::read_to_string(ws.path("eval3.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    // Enhancement writes an edge list and provenance.
    let stdout = run_ok(&[
        "enhance",
        "--graph",
        &graph,
        "--manifold",
        &ws.arg("mani"),
        "--out",
        &ws.arg("enh"),
    ]);
    assert!(stdout.contains("enhanced graph"));
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("enh.json")).unwrap()).unwrap();
    assert!(side["enhanced_edges"].as_u64().unwrap() >= side["original_edges"].as_u64().unwrap());
}

#[test]
fn gen_is_byte_deterministic() {
    let ws = Workspace::new();
    run_ok(&["gen", "--blocks", "2x30", "--seed", "3", "--out", &ws.arg("a")]);
    run_ok(&["gen", "--blocks", "2x30", "--seed", "3", "--out", &ws.arg("b")]);
    for name in ["graph.edges", "features.csv", "labels.txt", "outputs.csv", "meta.json"] {
        let a = std::fs::read(ws.path(&format!("a/{name}"))).unwrap();
        let b = std::fs::read(ws.path(&format!("b/{name}"))).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn config_file_supplies_defaults() {
    let ws = Workspace::new();
    std::fs::write(ws.path("run.cfg"), "blocks=2x25\nseed=4\n").unwrap();
    run_ok(&[
        "gen",
        "--config",
        &ws.arg("run.cfg"),
        "--out",
        &ws.arg("cfg_data"),
    ]);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("cfg_data/meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["n_nodes"], 50);
    assert_eq!(meta["config"]["seed"], "4");

    // Explicit flag beats the config value.
    run_ok(&[
        "gen",
        "--config",
        &ws.arg("run.cfg"),
        "--blocks",
        "2x10",
        "--out",
        &ws.arg("cfg_data2"),
    ]);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("cfg_data2/meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["n_nodes"], 20);
}

#[test]
fn validation_errors_exit_2() {
    let ws = Workspace::new();
    // Missing file.
    let out = run(&["embed", "--graph", &ws.arg("nope.edges"), "--out", &ws.arg("x")]);
    assert_eq!(out.status.code(), Some(2));

    // Disconnected graph rejected by embed.
    std::fs::write(ws.path("disc.edges"), "0\t1\n2\t3\n").unwrap();
    let out = run(&["embed", "--graph", &ws.arg("disc.edges"), "--k", "2", "--out", &ws.arg("x")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("disconnected"));

    // Bad perturbation kind.
    let (graph, features, ..) = generate(&ws);
    let out = run(&[
        "perturb", "--graph", &graph, "--features", &features, "--kind", "banana", "--level", "1",
        "--out", &ws.arg("x"),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Dimension mismatch between graph and features.
    std::fs::write(ws.path("short.csv"), "1.0,2.0\n3.0,4.0\n").unwrap();
    let out = run(&[
        "manifold", "--graph", &graph, "--features", &ws.arg("short.csv"), "--out", &ws.arg("x"),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn selftest_runs_clean() {
    let stdout = run_ok(&["selftest"]);
    assert!(stdout.contains("selftest passed"));
    assert!(!stdout.contains("FAIL"));
}
