//! The flat key-value run configuration.
//!
//! One `key = value` pair per line, `#` starts a comment. Unknown or
//! duplicate keys are hard errors so a typo cannot silently fall back to a
//! default in the middle of an experiment sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use glow_core::data::SyntheticSpec;
use glow_core::engine::HeadPolicy;
use glow_core::learner::{LearnerSpec, ModelFamily};
use glow_core::reporting::SystemKind;
use glow_core::seeds;
use glow_core::topology::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Cifar10,
    Synthetic,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
            DatasetKind::Synthetic => "synthetic",
        }
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mnist" => Ok(DatasetKind::Mnist),
            "cifar10" => Ok(DatasetKind::Cifar10),
            "synthetic" => Ok(DatasetKind::Synthetic),
            other => Err(format!("unknown dataset `{other}`")),
        }
    }
}

/// Where the glow topology comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum TopologySource {
    /// Path to a topology file, resolved relative to the config file.
    File(PathBuf),
    Generator {
        family: String,
        agents: usize,
        degree: usize,
        disconnected: Vec<AgentId>,
        empty: Vec<AgentId>,
    },
}

/// A fully parsed and validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub system: SystemKind,
    pub dataset: DatasetKind,
    pub data_dir: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
    pub train_limit: usize,
    pub topology: Option<TopologySource>,
    pub learner_family: ModelFamily,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub init_scale: f64,
    pub communication_rounds: u32,
    pub local_epochs: u32,
    pub head_policy: HeadPolicy,
    pub master_seed: u64,
    pub fl_agents: usize,
    pub fl_empty: Vec<AgentId>,
    pub output_dir: PathBuf,
    pub run_name: String,
}

impl RunConfig {
    /// Learner spec with the dataset geometry filled in.
    pub fn learner_spec(&self, input_dim: usize, num_classes: usize) -> LearnerSpec {
        LearnerSpec {
            family: self.learner_family,
            input_dim,
            num_classes,
            hidden_dim: self.hidden_dim,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            init_scale: self.init_scale,
        }
    }

    pub fn parse_file(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        RunConfig::parse(&text, base)
    }

    /// Parse the flat key-value format. Paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<RunConfig, String> {
        let mut pairs: BTreeMap<String, String> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", idx + 1))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if pairs.insert(key.clone(), value).is_some() {
                return Err(format!("line {}: duplicate key `{key}`", idx + 1));
            }
        }
        RunConfig::from_pairs(pairs, base)
    }

    fn from_pairs(mut pairs: BTreeMap<String, String>, base: &Path) -> Result<RunConfig, String> {
        fn take<T: FromStr>(
            pairs: &mut BTreeMap<String, String>,
            key: &str,
        ) -> Result<Option<T>, String>
        where
            T::Err: std::fmt::Display,
        {
            match pairs.remove(key) {
                None => Ok(None),
                Some(raw) => raw
                    .parse()
                    .map(Some)
                    .map_err(|e| format!("key `{key}`: {e}")),
            }
        }
        fn require<T: FromStr>(pairs: &mut BTreeMap<String, String>, key: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            take(pairs, key)?.ok_or_else(|| format!("missing required key `{key}`"))
        }
        fn id_list(
            pairs: &mut BTreeMap<String, String>,
            key: &str,
        ) -> Result<Vec<AgentId>, String> {
            match pairs.remove(key) {
                None => Ok(Vec::new()),
                Some(raw) if raw.is_empty() || raw == "-" => Ok(Vec::new()),
                Some(raw) => raw
                    .split(',')
                    .map(|part| {
                        part.trim()
                            .parse::<usize>()
                            .map(AgentId)
                            .map_err(|e| format!("key `{key}`: `{part}`: {e}"))
                    })
                    .collect(),
            }
        }

        let system: SystemKind = require(&mut pairs, "system")?;
        let dataset: DatasetKind = require(&mut pairs, "dataset")?;
        let master_seed: u64 = require(&mut pairs, "master_seed")?;
        let run_name: String = require(&mut pairs, "run_name")?;
        if run_name.is_empty() || run_name.contains(['/', '\\']) {
            return Err(format!("invalid run_name `{run_name}`"));
        }
        let local_epochs: u32 = require(&mut pairs, "local_epochs")?;

        let data_dir: Option<PathBuf> = pairs.remove("data_dir").map(PathBuf::from);
        let synthetic = SyntheticSpec {
            num_classes: take(&mut pairs, "synthetic_classes")?.unwrap_or(10),
            input_dim: take(&mut pairs, "synthetic_dim")?.unwrap_or(16),
            n_train: take(&mut pairs, "synthetic_train")?.unwrap_or(2000),
            n_test: take(&mut pairs, "synthetic_test")?.unwrap_or(500),
            separation: take(&mut pairs, "synthetic_separation")?.unwrap_or(6.0),
            // All randomness flows from the master seed.
            seed: seeds::derive(master_seed, &[0x5eed]),
        };
        let train_limit: usize = take(&mut pairs, "train_limit")?.unwrap_or(0);

        let topology_file: Option<PathBuf> = pairs.remove("topology_file").map(PathBuf::from);
        let topology_family: Option<String> = take(&mut pairs, "topology_family")?;
        let topology = match (topology_file, topology_family) {
            (Some(_), Some(_)) => {
                return Err("specify either topology_file or topology_family, not both".into())
            }
            (Some(file), None) => Some(TopologySource::File(base.join(file))),
            (None, Some(family)) => Some(TopologySource::Generator {
                family,
                agents: require(&mut pairs, "topology_agents")?,
                degree: take(&mut pairs, "topology_degree")?.unwrap_or(0),
                disconnected: id_list(&mut pairs, "topology_disconnected")?,
                empty: id_list(&mut pairs, "topology_empty")?,
            }),
            (None, None) => None,
        };

        let config = RunConfig {
            system,
            dataset,
            data_dir,
            synthetic,
            train_limit,
            topology,
            learner_family: take(&mut pairs, "learner")?.unwrap_or(ModelFamily::Mlp1),
            hidden_dim: take(&mut pairs, "hidden_dim")?.unwrap_or(64),
            learning_rate: take(&mut pairs, "learning_rate")?.unwrap_or(0.05),
            batch_size: take(&mut pairs, "batch_size")?.unwrap_or(32),
            init_scale: take(&mut pairs, "init_scale")?.unwrap_or(0.05),
            communication_rounds: take(&mut pairs, "communication_rounds")?.unwrap_or(0),
            local_epochs,
            head_policy: take(&mut pairs, "head_policy")?.unwrap_or(HeadPolicy::RoundRobin),
            master_seed,
            fl_agents: take(&mut pairs, "fl_agents")?.unwrap_or(0),
            fl_empty: id_list(&mut pairs, "fl_empty")?,
            output_dir: pairs
                .remove("output_dir")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("runs")),
            run_name,
        };

        if let Some(stray) = pairs.keys().next() {
            return Err(format!("unknown key `{stray}`"));
        }
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), String> {
        if self.local_epochs == 0 {
            return Err("local_epochs must be positive".into());
        }
        if self.learning_rate <= 0.0 && self.learning_rate != 0.0 {
            return Err("learning_rate must be non-negative".into());
        }
        if self.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        match self.system {
            SystemKind::Glow => {
                if self.topology.is_none() {
                    return Err("glow runs need topology_file or topology_family".into());
                }
                if self.communication_rounds == 0 {
                    return Err("glow runs need a positive communication_rounds".into());
                }
            }
            SystemKind::Fl => {
                if self.fl_agents == 0 {
                    return Err("fl runs need a positive fl_agents".into());
                }
                if self.communication_rounds == 0 {
                    return Err("fl runs need a positive communication_rounds".into());
                }
                for id in &self.fl_empty {
                    if id.0 >= self.fl_agents {
                        return Err(format!(
                            "fl_empty agent {id} out of range for {} agents",
                            self.fl_agents
                        ));
                    }
                }
            }
            // cnl ignores topology and rounds; local_epochs is the total.
            SystemKind::Cnl => {}
        }
        if self.learner_family == ModelFamily::Mlp1 && self.hidden_dim == 0 {
            return Err("mlp1 needs a positive hidden_dim".into());
        }
        Ok(())
    }

    /// Serialize back to the flat format, with resolved values, so the
    /// snapshot written into a run directory re-executes identically.
    pub fn to_snapshot(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("system", self.system.to_string());
        kv("dataset", self.dataset.name().to_string());
        if let Some(dir) = &self.data_dir {
            kv("data_dir", dir.display().to_string());
        }
        if self.dataset == DatasetKind::Synthetic {
            kv("synthetic_classes", self.synthetic.num_classes.to_string());
            kv("synthetic_dim", self.synthetic.input_dim.to_string());
            kv("synthetic_train", self.synthetic.n_train.to_string());
            kv("synthetic_test", self.synthetic.n_test.to_string());
            kv(
                "synthetic_separation",
                format!("{}", self.synthetic.separation),
            );
        }
        if self.train_limit > 0 {
            kv("train_limit", self.train_limit.to_string());
        }
        match &self.topology {
            Some(TopologySource::File(path)) => kv("topology_file", path.display().to_string()),
            Some(TopologySource::Generator {
                family,
                agents,
                degree,
                disconnected,
                empty,
            }) => {
                kv("topology_family", family.clone());
                kv("topology_agents", agents.to_string());
                kv("topology_degree", degree.to_string());
                if !disconnected.is_empty() {
                    kv("topology_disconnected", join_ids(disconnected));
                }
                if !empty.is_empty() {
                    kv("topology_empty", join_ids(empty));
                }
            }
            None => {}
        }
        kv("learner", self.learner_family.to_string());
        kv("hidden_dim", self.hidden_dim.to_string());
        kv("learning_rate", format!("{}", self.learning_rate));
        kv("batch_size", self.batch_size.to_string());
        kv("init_scale", format!("{}", self.init_scale));
        if self.communication_rounds > 0 {
            kv(
                "communication_rounds",
                self.communication_rounds.to_string(),
            );
        }
        kv("local_epochs", self.local_epochs.to_string());
        kv("head_policy", self.head_policy.to_string());
        kv("master_seed", self.master_seed.to_string());
        if self.system == SystemKind::Fl {
            kv("fl_agents", self.fl_agents.to_string());
            if !self.fl_empty.is_empty() {
                kv("fl_empty", join_ids(&self.fl_empty));
            }
        }
        kv("output_dir", self.output_dir.display().to_string());
        kv("run_name", self.run_name.clone());
        out
    }
}

fn join_ids(ids: &[AgentId]) -> String {
    ids.iter()
        .map(|id| id.0.to_string())
        .collect::<Vec<_>>()
        .join(",")
}
