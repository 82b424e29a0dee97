//! Run execution: load data, run the selected system, write the run
//! directory (config.snapshot, metrics.csv, summary.json, loss.svg).

use std::path::{Path, PathBuf};

use glow_core::baselines::{self, FlConfig};
use glow_core::data::{self, Dataset};
use glow_core::engine::{self, EngineError, SimConfig, SimResult};
use glow_core::reporting::{self, RunMeta, SystemKind};
use glow_core::seeds;
use glow_core::topology::{self, AgentProfile, Topology};

use crate::config::{DatasetKind, RunConfig, TopologySource};

/// Failure classes mapped onto the process exit codes: configuration
/// problems exit 1, dataset problems exit 2, runtime failures exit 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Runtime(m) => m,
        }
    }
}

fn engine_err(e: EngineError) -> CliError {
    match e {
        EngineError::InvalidConfig(msg) => CliError::Config(msg),
        EngineError::Data(d) => CliError::Data(d.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

/// Resolve the directory holding a named dataset: the explicit `data_dir`
/// key if present, otherwise `$GLOW_DATA_DIR/<dataset>`.
fn dataset_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    if let Some(dir) = &cfg.data_dir {
        return Ok(dir.clone());
    }
    match std::env::var_os("GLOW_DATA_DIR") {
        Some(root) => Ok(PathBuf::from(root).join(cfg.dataset.name())),
        None => Err(CliError::Data(format!(
            "no data_dir configured for dataset `{}` and GLOW_DATA_DIR is unset",
            cfg.dataset.name()
        ))),
    }
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let dataset = match cfg.dataset {
        DatasetKind::Synthetic => data::gen_synthetic(&cfg.synthetic),
        DatasetKind::Mnist | DatasetKind::Cifar10 => {
            let dir = dataset_dir(cfg)?;
            if !dir.is_dir() {
                return Err(CliError::Data(format!(
                    "dataset directory {} does not exist",
                    dir.display()
                )));
            }
            let result = match cfg.dataset {
                DatasetKind::Mnist => data::load_mnist(&dir),
                _ => data::load_cifar10(&dir),
            };
            result.map_err(|e| CliError::Data(e.to_string()))?
        }
    };
    Ok(dataset.with_train_limit(cfg.train_limit, seeds::subset_seed(cfg.master_seed)))
}

pub fn build_topology(source: &TopologySource) -> Result<Topology, CliError> {
    match source {
        TopologySource::File(path) => {
            Topology::load(path).map_err(|e| CliError::Config(e.to_string()))
        }
        TopologySource::Generator {
            family,
            agents,
            degree,
            disconnected,
            empty,
        } => {
            let base = if family == "ring_k" {
                topology::ring_k(*agents, *degree)
            } else {
                let kind = family.parse().map_err(|e: String| CliError::Config(e))?;
                topology::special(kind, *agents)
            }
            .map_err(|e| CliError::Config(e.to_string()))?;
            topology::extend_and_annotate(base, disconnected, empty)
                .map_err(|e| CliError::Config(e.to_string()))
        }
    }
}

struct Finished {
    result: SimResult,
    profiles: Vec<AgentProfile>,
    meta: RunMeta,
    topology: Option<Topology>,
}

fn run_system(cfg: &RunConfig, dataset: &Dataset) -> Result<Finished, CliError> {
    let spec = cfg.learner_spec(dataset.input_dim, dataset.num_classes);
    match cfg.system {
        SystemKind::Glow => {
            let source = cfg
                .topology
                .as_ref()
                .expect("validated: glow has a topology");
            let topo = build_topology(source)?;
            let sim = SimConfig {
                topology: topo.clone(),
                learner: spec,
                communication_rounds: cfg.communication_rounds,
                local_epochs: cfg.local_epochs,
                head_policy: cfg.head_policy,
                master_seed: cfg.master_seed,
            };
            let result = engine::run(&sim, dataset).map_err(engine_err)?;
            Ok(Finished {
                result,
                profiles: topo.profiles(),
                meta: RunMeta {
                    system: SystemKind::Glow,
                    dataset: dataset.name.clone(),
                    topology: topo.label.clone(),
                    agent_notation: format!(
                        "{}+{}",
                        topo.connected_count(),
                        topo.disconnected_count()
                    ),
                    communication_rounds: Some(cfg.communication_rounds),
                    local_epochs: cfg.local_epochs,
                },
                topology: Some(topo),
            })
        }
        SystemKind::Fl => {
            let fl = FlConfig {
                num_agents: cfg.fl_agents,
                communication_rounds: cfg.communication_rounds,
                local_epochs: cfg.local_epochs,
                learner: spec,
                master_seed: cfg.master_seed,
                empty: cfg.fl_empty.clone(),
            };
            let result = baselines::run_fedavg(&fl, dataset).map_err(engine_err)?;
            Ok(Finished {
                result,
                profiles: Vec::new(),
                meta: RunMeta {
                    system: SystemKind::Fl,
                    dataset: dataset.name.clone(),
                    topology: "-".into(),
                    agent_notation: cfg.fl_agents.to_string(),
                    communication_rounds: Some(cfg.communication_rounds),
                    local_epochs: cfg.local_epochs,
                },
                topology: None,
            })
        }
        SystemKind::Cnl => {
            let result = baselines::run_cnl(&spec, dataset, cfg.local_epochs, cfg.master_seed)
                .map_err(engine_err)?;
            Ok(Finished {
                result,
                profiles: Vec::new(),
                meta: RunMeta {
                    system: SystemKind::Cnl,
                    dataset: dataset.name.clone(),
                    topology: "-".into(),
                    agent_notation: "-".into(),
                    communication_rounds: None,
                    local_epochs: cfg.local_epochs,
                },
                topology: None,
            })
        }
    }
}

/// Execute one run and write its directory. Returns the run directory path.
pub fn execute(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dataset = load_dataset(cfg)?;
    let finished = run_system(cfg, &dataset)?;

    let run_dir = cfg.output_dir.join(&cfg.run_name);
    std::fs::create_dir_all(&run_dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", run_dir.display())))?;
    let io_err = |path: &Path, e: String| CliError::Runtime(format!("{}: {e}", path.display()));

    // Keep the run self-contained: file-sourced topologies are copied in and
    // the snapshot points at the copy, which parses relative to itself.
    let mut snapshot_cfg = cfg.clone();
    if let Some(topo) = &finished.topology {
        let topo_path = run_dir.join("topology.topo");
        topo.save(&topo_path)
            .map_err(|e| io_err(&topo_path, e.to_string()))?;
        if matches!(cfg.topology, Some(TopologySource::File(_))) {
            snapshot_cfg.topology = Some(TopologySource::File("topology.topo".into()));
        }
    }
    let snapshot_path = run_dir.join("config.snapshot");
    std::fs::write(&snapshot_path, snapshot_cfg.to_snapshot())
        .map_err(|e| io_err(&snapshot_path, e.to_string()))?;

    let metrics_path = run_dir.join("metrics.csv");
    reporting::write_metrics_csv(&finished.result.metrics, &metrics_path)
        .map_err(|e| io_err(&metrics_path, e.to_string()))?;

    let summary =
        reporting::summarize(&finished.result.metrics, &finished.profiles, &finished.meta)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    let summary_path = run_dir.join("summary.json");
    reporting::write_summary_json(&summary, &summary_path)
        .map_err(|e| io_err(&summary_path, e.to_string()))?;

    let svg_path = run_dir.join("loss.svg");
    reporting::emit_plot_svg(&finished.result.metrics, &svg_path)
        .map_err(|e| io_err(&svg_path, e.to_string()))?;

    Ok(run_dir)
}

/// Build the comparison table over finished run directories.
pub fn report(dirs: &[PathBuf]) -> Result<String, CliError> {
    let mut rows = Vec::new();
    for dir in dirs {
        let path = dir.join("summary.json");
        let summary = reporting::read_summary_json(&path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        rows.push(summary);
    }
    rows.sort_by(|a, b| {
        (
            &a.system,
            &a.dataset,
            &a.agent_notation,
            a.communication_rounds,
            a.local_epochs,
            &a.topology,
        )
            .cmp(&(
                &b.system,
                &b.dataset,
                &b.agent_notation,
                b.communication_rounds,
                b.local_epochs,
                &b.topology,
            ))
    });

    let header = [
        "System",
        "Dataset",
        "Agent Number",
        "Communication Rounds",
        "Local Epochs",
        "Average Accuracy",
    ];
    let mut table: Vec<[String; 6]> = vec![header.map(str::to_string)];
    for row in &rows {
        table.push([
            row.system.clone(),
            row.dataset.clone(),
            row.agent_notation.clone(),
            row.communication_rounds
                .map_or_else(|| "-".to_string(), |r| r.to_string()),
            row.local_epochs.to_string(),
            row.connected
                .as_ref()
                .map_or_else(|| "-".to_string(), |s| format!("{:.6}", s.avg_accuracy)),
        ]);
    }

    let mut widths = [0usize; 6];
    for row in &table {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for row in &table {
        let line: Vec<String> = row
            .iter()
            .zip(widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    Ok(out)
}
