//! End-to-end tests driving the `glow` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use glow_core::topology::{AgentId, Topology};

fn glow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glow"))
        .args(args)
        .current_dir(dir)
        .env_remove("GLOW_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn topo_sweep_emits_the_8_agent_family() {
    let tmp = tempfile::tempdir().unwrap();
    let out = glow(
        &[
            "topo",
            "--sweep",
            "--agents",
            "8",
            "--disconnected",
            "8,9",
            "--empty",
            "0,4,9",
            "--out",
            "topos",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let dir = tmp.path().join("topos");
    let mut files: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(
        files,
        vec![
            "topo0.topo",
            "topo2.topo",
            "topo4.topo",
            "topo6.topo",
            "topo7.topo"
        ]
    );
    let t = Topology::load(dir.join("topo2.topo")).unwrap();
    assert_eq!(t.total_agents(), 10);
    assert_eq!(t.edge_count(), 8);
    assert_eq!(t.degree(AgentId(8)), 0);
    assert_eq!(t.label, "topo2");
}

#[test]
fn topo_sweep_emits_nine_files_for_16_agents() {
    let tmp = tempfile::tempdir().unwrap();
    let out = glow(
        &[
            "topo",
            "--sweep",
            "--agents",
            "16",
            "--disconnected",
            "16,17,18,19",
            "--empty",
            "0,5,10,18,19",
            "--out",
            "topos",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    assert_eq!(fs::read_dir(tmp.path().join("topos")).unwrap().count(), 9);
}

#[test]
fn topo_single_ring_writes_one_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = glow(
        &["topo", "--agents", "8", "--degree", "2", "--out", "."],
        tmp.path(),
    );
    assert_ok(&out);
    let t = Topology::load(tmp.path().join("topo2.topo")).unwrap();
    assert_eq!(t.edge_count(), 8);
}

#[test]
fn topo_rejects_odd_intermediate_degree() {
    let tmp = tempfile::tempdir().unwrap();
    let out = glow(
        &["topo", "--agents", "8", "--degree", "3", "--out", "."],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("odd degree"));
}

#[test]
fn topo_special_family_needs_no_degree() {
    let tmp = tempfile::tempdir().unwrap();
    let out = glow(
        &[
            "topo",
            "--family",
            "star_chain",
            "--agents",
            "6",
            "--out",
            ".",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let t = Topology::load(tmp.path().join("star_chain.topo")).unwrap();
    assert_eq!(t.edge_count(), 9);
}

const GLOW_SYNTH_CONFIG: &str = "\
system = glow
dataset = synthetic
synthetic_classes = 4
synthetic_dim = 8
synthetic_train = 240
synthetic_test = 80
synthetic_separation = 7.0
topology_family = ring_k
topology_agents = 4
topology_degree = 2
learner = softmax_regression
communication_rounds = 3
local_epochs = 2
master_seed = 11
output_dir = runs
run_name = demo
";

#[test]
fn run_writes_a_complete_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("run.conf"), GLOW_SYNTH_CONFIG).unwrap();
    let out = glow(&["run", "--config", "run.conf"], tmp.path());
    assert_ok(&out);
    let dir = tmp.path().join("runs/demo");
    for file in [
        "config.snapshot",
        "metrics.csv",
        "summary.json",
        "loss.svg",
        "topology.topo",
    ] {
        assert!(dir.join(file).is_file(), "missing {file}");
    }
    // 4 agents x 3 rounds = 12 data rows plus the header.
    let csv = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);

    let summary = fs::read_to_string(dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"agent_notation\": \"4+0\""), "{summary}");
}

#[test]
fn identical_configs_give_byte_identical_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("a.conf"), GLOW_SYNTH_CONFIG).unwrap();
    fs::write(
        tmp.path().join("b.conf"),
        GLOW_SYNTH_CONFIG.replace("run_name = demo", "run_name = other"),
    )
    .unwrap();
    assert_ok(&glow(&["run", "--config", "a.conf"], tmp.path()));
    assert_ok(&glow(&["run", "--config", "b.conf"], tmp.path()));
    let a = fs::read(tmp.path().join("runs/demo/metrics.csv")).unwrap();
    let b = fs::read(tmp.path().join("runs/other/metrics.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn snapshot_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("run.conf"), GLOW_SYNTH_CONFIG).unwrap();
    assert_ok(&glow(&["run", "--config", "run.conf"], tmp.path()));
    let metrics = fs::read(tmp.path().join("runs/demo/metrics.csv")).unwrap();

    assert_ok(&glow(
        &["run", "--config", "runs/demo/config.snapshot"],
        tmp.path(),
    ));
    let again = fs::read(tmp.path().join("runs/demo/metrics.csv")).unwrap();
    assert_eq!(metrics, again);
}

#[test]
fn run_from_topology_file_matches_generator_spec() {
    let tmp = tempfile::tempdir().unwrap();
    assert_ok(&glow(
        &["topo", "--agents", "4", "--degree", "2", "--out", "."],
        tmp.path(),
    ));
    let file_cfg = GLOW_SYNTH_CONFIG
        .replace(
            "topology_family = ring_k\ntopology_agents = 4\ntopology_degree = 2\n",
            "topology_file = topo2.topo\n",
        )
        .replace("run_name = demo", "run_name = from_file");
    fs::write(tmp.path().join("file.conf"), file_cfg).unwrap();
    fs::write(tmp.path().join("gen.conf"), GLOW_SYNTH_CONFIG).unwrap();
    assert_ok(&glow(&["run", "--config", "file.conf"], tmp.path()));
    assert_ok(&glow(&["run", "--config", "gen.conf"], tmp.path()));
    assert_eq!(
        fs::read(tmp.path().join("runs/from_file/metrics.csv")).unwrap(),
        fs::read(tmp.path().join("runs/demo/metrics.csv")).unwrap()
    );
}

#[test]
fn missing_dataset_dir_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = GLOW_SYNTH_CONFIG
        .replace("dataset = synthetic", "dataset = mnist")
        .replace("synthetic_classes = 4\nsynthetic_dim = 8\n", "")
        .replace(
            "synthetic_train = 240\nsynthetic_test = 80\nsynthetic_separation = 7.0\n",
            "data_dir = does_not_exist\n",
        );
    fs::write(tmp.path().join("run.conf"), cfg).unwrap();
    let out = glow(&["run", "--config", "run.conf"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does_not_exist"));
}

#[test]
fn unknown_config_key_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("run.conf"),
        format!("{GLOW_SYNTH_CONFIG}typo_key = 1\n"),
    )
    .unwrap();
    let out = glow(&["run", "--config", "run.conf"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo_key"));
}

#[test]
fn epochs_sweep_produces_sibling_run_dirs() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("run.conf"), GLOW_SYNTH_CONFIG).unwrap();
    let out = glow(
        &["run", "--config", "run.conf", "--epochs-sweep", "1,2"],
        tmp.path(),
    );
    assert_ok(&out);
    assert!(tmp.path().join("runs/demo_e1/metrics.csv").is_file());
    assert!(tmp.path().join("runs/demo_e2/metrics.csv").is_file());
    let snap = fs::read_to_string(tmp.path().join("runs/demo_e2/config.snapshot")).unwrap();
    assert!(snap.contains("local_epochs = 2"));
    assert!(snap.contains("run_name = demo_e2"));
}

const CNL_CONFIG: &str = "\
system = cnl
dataset = synthetic
synthetic_classes = 4
synthetic_dim = 8
synthetic_train = 240
synthetic_test = 80
synthetic_separation = 7.0
learner = softmax_regression
local_epochs = 2
master_seed = 11
output_dir = runs
run_name = cnl_demo
";

const FL_CONFIG: &str = "\
system = fl
dataset = synthetic
synthetic_classes = 4
synthetic_dim = 8
synthetic_train = 240
synthetic_test = 80
synthetic_separation = 7.0
learner = softmax_regression
fl_agents = 4
fl_empty = 1
communication_rounds = 3
local_epochs = 2
master_seed = 11
output_dir = runs
run_name = fl_demo
";

#[test]
fn report_builds_the_three_system_table() {
    let tmp = tempfile::tempdir().unwrap();
    let glow_cfg = GLOW_SYNTH_CONFIG.replace(
        "topology_agents = 4",
        "topology_agents = 4\ntopology_disconnected = 4,5\ntopology_empty = 0,5",
    );
    fs::write(tmp.path().join("glow.conf"), glow_cfg).unwrap();
    fs::write(tmp.path().join("cnl.conf"), CNL_CONFIG).unwrap();
    fs::write(tmp.path().join("fl.conf"), FL_CONFIG).unwrap();
    assert_ok(&glow(&["run", "--config", "glow.conf"], tmp.path()));
    assert_ok(&glow(&["run", "--config", "cnl.conf"], tmp.path()));
    assert_ok(&glow(&["run", "--config", "fl.conf"], tmp.path()));

    let out = glow(
        &["report", "runs/fl_demo", "runs/demo", "runs/cnl_demo"],
        tmp.path(),
    );
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("System"));
    assert!(lines[0].contains("Average Accuracy"));
    // Sorted by system: cnl, fl, glow. The cnl row has no rounds.
    assert!(lines[1].starts_with("cnl"));
    assert!(lines[2].starts_with("fl"));
    assert!(lines[3].starts_with("glow"));
    let cnl_fields: Vec<&str> = lines[1].split_whitespace().collect();
    assert_eq!(cnl_fields[2], "-");
    assert_eq!(cnl_fields[3], "-");
    // Glow agent notation counts connected + disconnected.
    assert!(lines[3].contains("4+2"));
}

#[test]
fn report_on_missing_summary_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir(tmp.path().join("empty_run")).unwrap();
    let out = glow(&["report", "empty_run"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}
