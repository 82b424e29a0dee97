//! Dataset ingestion and IID partitioning.
//!
//! Supported sources: MNIST-style IDX files, the CIFAR-10 binary batch
//! layout, and deterministic synthetic Gaussian blobs for fast tests.
//! Features are always scaled into [0, 1]; labels are dense class indices.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::topology::{AgentId, AgentProfile};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic: expected {expected:#010x}, got {got:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        got: u32,
    },
    #[error("{path}: {detail}")]
    BadSize { path: String, detail: String },
    #[error("count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: label {label} out of range (10 classes)")]
    BadLabel { path: String, label: u8 },
    #[error("shard geometry invalid: {0}")]
    BadShape(String),
    #[error("no data-holding agents to partition across")]
    NoDataAgents,
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One agent's local examples: an `n x input_dim` feature matrix plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DataShard {
    features: Vec<f64>,
    labels: Vec<u32>,
    input_dim: usize,
}

impl DataShard {
    pub fn new(features: Vec<f64>, labels: Vec<u32>, input_dim: usize) -> Result<Self, DataError> {
        if input_dim == 0 {
            return Err(DataError::BadShape("input_dim must be positive".into()));
        }
        if features.len() != labels.len() * input_dim {
            return Err(DataError::BadShape(format!(
                "{} feature values cannot hold {} rows of width {}",
                features.len(),
                labels.len(),
                input_dim
            )));
        }
        Ok(DataShard {
            features,
            labels,
            input_dim,
        })
    }

    /// Shard with zero examples, as held by empty-role agents.
    pub fn empty(input_dim: usize) -> DataShard {
        DataShard {
            features: Vec::new(),
            labels: Vec::new(),
            input_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// New shard holding the given rows, in order.
    pub fn select(&self, indices: &[usize]) -> DataShard {
        let mut features = Vec::with_capacity(indices.len() * self.input_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        DataShard {
            features,
            labels,
            input_dim: self.input_dim,
        }
    }
}

/// A train/test pair with its class count and feature width.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: DataShard,
    pub test: DataShard,
    pub num_classes: usize,
    pub input_dim: usize,
    pub name: String,
}

impl Dataset {
    /// Replace the train split by a seeded-shuffle subset of `limit`
    /// examples. `limit == 0` or a limit covering the whole split is a no-op.
    pub fn with_train_limit(mut self, limit: usize, seed: u64) -> Dataset {
        if limit == 0 || limit >= self.train.len() {
            return self;
        }
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order.truncate(limit);
        self.train = self.train.select(&order);
        self
    }
}

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, DataError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| DataError::BadSize {
            path: path.display().to_string(),
            detail: "truncated header".into(),
        })
}

/// Parse an IDX image file: big-endian magic 0x00000803, then count, rows,
/// cols, then one byte per pixel. Pixels are scaled to [0, 1] by /255.
fn parse_idx_images(path: &Path) -> Result<(Vec<f64>, usize, usize), DataError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let magic = read_u32_be(&bytes, 0, path)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(DataError::BadMagic {
            path: path.display().to_string(),
            expected: IDX_IMAGE_MAGIC,
            got: magic,
        });
    }
    let count = read_u32_be(&bytes, 4, path)? as usize;
    let rows = read_u32_be(&bytes, 8, path)? as usize;
    let cols = read_u32_be(&bytes, 12, path)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() != expected {
        return Err(DataError::BadSize {
            path: path.display().to_string(),
            detail: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    let features = bytes[16..].iter().map(|&b| b as f64 / 255.0).collect();
    Ok((features, count, rows * cols))
}

/// Parse an IDX label file: big-endian magic 0x00000801, count, then one
/// byte per label.
fn parse_idx_labels(path: &Path) -> Result<Vec<u32>, DataError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let magic = read_u32_be(&bytes, 0, path)?;
    if magic != IDX_LABEL_MAGIC {
        return Err(DataError::BadMagic {
            path: path.display().to_string(),
            expected: IDX_LABEL_MAGIC,
            got: magic,
        });
    }
    let count = read_u32_be(&bytes, 4, path)? as usize;
    if bytes.len() != 8 + count {
        return Err(DataError::BadSize {
            path: path.display().to_string(),
            detail: format!("expected {} bytes, found {}", 8 + count, bytes.len()),
        });
    }
    bytes[8..]
        .iter()
        .map(|&b| {
            if b > 9 {
                Err(DataError::BadLabel {
                    path: path.display().to_string(),
                    label: b,
                })
            } else {
                Ok(b as u32)
            }
        })
        .collect()
}

fn idx_split(dir: &Path, images: &str, labels: &str) -> Result<DataShard, DataError> {
    let (features, count, dim) = parse_idx_images(&dir.join(images))?;
    let labels = parse_idx_labels(&dir.join(labels))?;
    if labels.len() != count {
        return Err(DataError::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    DataShard::new(features, labels, dim)
}

/// Load the four MNIST IDX files from `dir`.
pub fn load_mnist(dir: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let dir = dir.as_ref();
    let train = idx_split(dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte")?;
    let test = idx_split(dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")?;
    let input_dim = train.input_dim();
    Ok(Dataset {
        train,
        test,
        num_classes: 10,
        input_dim,
        name: "mnist".into(),
    })
}

const CIFAR_RECORD: usize = 3073; // 1 label byte + 32*32*3 pixels
const CIFAR_DIM: usize = 3072;

fn parse_cifar_batch(
    path: &Path,
    features: &mut Vec<f64>,
    labels: &mut Vec<u32>,
) -> Result<(), DataError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() % CIFAR_RECORD != 0 {
        return Err(DataError::BadSize {
            path: path.display().to_string(),
            detail: format!("{} bytes is not a multiple of {CIFAR_RECORD}", bytes.len()),
        });
    }
    for record in bytes.chunks_exact(CIFAR_RECORD) {
        let label = record[0];
        if label > 9 {
            return Err(DataError::BadLabel {
                path: path.display().to_string(),
                label,
            });
        }
        labels.push(label as u32);
        features.extend(record[1..].iter().map(|&b| b as f64 / 255.0));
    }
    Ok(())
}

/// Load the six CIFAR-10 binary batch files (`data_batch_1..5.bin` for
/// training, `test_batch.bin` for test) from `dir`.
pub fn load_cifar10(dir: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let dir = dir.as_ref();
    let mut train_features = Vec::new();
    let mut train_labels = Vec::new();
    for i in 1..=5 {
        parse_cifar_batch(
            &dir.join(format!("data_batch_{i}.bin")),
            &mut train_features,
            &mut train_labels,
        )?;
    }
    let mut test_features = Vec::new();
    let mut test_labels = Vec::new();
    parse_cifar_batch(
        &dir.join("test_batch.bin"),
        &mut test_features,
        &mut test_labels,
    )?;
    Ok(Dataset {
        train: DataShard::new(train_features, train_labels, CIFAR_DIM)?,
        test: DataShard::new(test_features, test_labels, CIFAR_DIM)?,
        num_classes: 10,
        input_dim: CIFAR_DIM,
        name: "cifar10".into(),
    })
}

/// Parameters of the synthetic Gaussian-blob dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub input_dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Pairwise distance between class means, in units of the unit noise
    /// deviation (approximate when num_classes exceeds input_dim).
    pub separation: f64,
    pub seed: u64,
}

/// Gaussian source on top of a uniform RNG (Box-Muller, pair-cached).
struct NormalSource {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalSource {
    fn new(rng: ChaCha8Rng) -> NormalSource {
        NormalSource { rng, spare: None }
    }

    fn next(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let u1: f64 = self.rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = self.rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

/// Deterministic Gaussian blobs, one per class, with class means at pairwise
/// distance `separation` and unit noise. Features are affinely rescaled
/// per column into [0, 1] over train and test combined.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Dataset {
    assert!(spec.num_classes >= 1, "num_classes must be positive");
    assert!(spec.input_dim >= 1, "input_dim must be positive");
    assert!(
        spec.n_train >= 1 && spec.n_test >= 1,
        "split sizes must be positive"
    );
    assert!(spec.separation >= 0.0, "separation must be non-negative");

    let dim = spec.input_dim;
    // Means on scaled basis axes: distance between any two axis placements
    // is separation. Classes beyond input_dim wrap onto further shells.
    let mut means = vec![vec![0.0f64; dim]; spec.num_classes];
    for (k, mean) in means.iter_mut().enumerate() {
        let shell = 1.0 + (k / dim) as f64;
        mean[k % dim] = spec.separation / std::f64::consts::SQRT_2 * shell;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let make_labels = |n: usize, rng: &mut ChaCha8Rng| -> Vec<u32> {
        let mut labels: Vec<u32> = (0..n).map(|i| (i % spec.num_classes) as u32).collect();
        labels.shuffle(rng);
        labels
    };
    let train_labels = make_labels(spec.n_train, &mut rng);
    let test_labels = make_labels(spec.n_test, &mut rng);

    let mut normals = NormalSource::new(ChaCha8Rng::seed_from_u64(rng.gen()));
    let mut draw = |labels: &[u32]| -> Vec<f64> {
        let mut features = Vec::with_capacity(labels.len() * dim);
        for &label in labels {
            let mean = &means[label as usize];
            for m in mean {
                features.push(m + normals.next());
            }
        }
        features
    };
    let mut train_features = draw(&train_labels);
    let mut test_features = draw(&test_labels);

    // Per-column min/max rescale over both splits.
    for col in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for chunk in train_features
            .chunks_exact(dim)
            .chain(test_features.chunks_exact(dim))
        {
            lo = lo.min(chunk[col]);
            hi = hi.max(chunk[col]);
        }
        let range = hi - lo;
        for values in [&mut train_features, &mut test_features] {
            for row in values.chunks_exact_mut(dim) {
                row[col] = if range > 0.0 {
                    (row[col] - lo) / range
                } else {
                    0.5
                };
            }
        }
    }

    Dataset {
        train: DataShard::new(train_features, train_labels, dim).unwrap(),
        test: DataShard::new(test_features, test_labels, dim).unwrap(),
        num_classes: spec.num_classes,
        input_dim: dim,
        name: "synthetic".into(),
    }
}

/// The IID split: which shard each agent trains on.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    pub shards: BTreeMap<AgentId, DataShard>,
    pub seed: u64,
}

/// Split the train set across the data-holding agents: one seeded global
/// shuffle, then contiguous slices in ascending agent id. Sizes differ by at
/// most one, with the larger shards on the lower ids. Agents without data
/// get an empty shard.
pub fn partition_iid(
    dataset: &Dataset,
    profiles: &[AgentProfile],
    seed: u64,
) -> Result<PartitionPlan, DataError> {
    let mut data_agents: Vec<AgentId> = profiles
        .iter()
        .filter(|p| p.has_data)
        .map(|p| p.id)
        .collect();
    data_agents.sort();
    if data_agents.is_empty() {
        return Err(DataError::NoDataAgents);
    }

    let n = dataset.train.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let k = data_agents.len();
    let base = n / k;
    let remainder = n % k;
    let mut shards = BTreeMap::new();
    let mut cursor = 0usize;
    for (rank, &id) in data_agents.iter().enumerate() {
        let size = base + usize::from(rank < remainder);
        shards.insert(id, dataset.train.select(&order[cursor..cursor + size]));
        cursor += size;
    }
    for p in profiles {
        if !p.has_data {
            shards.insert(p.id, DataShard::empty(dataset.input_dim));
        }
    }
    Ok(PartitionPlan { shards, seed })
}
