//! Simulator for fully decentralized gossip learning over agent topologies,
//! with federated-averaging and centralized baselines for comparison.
//!
//! The gossip system runs iterations in which one agent at a time acts as
//! head: it trains on its local shard, pulls current weights from its graph
//! neighbors, and keeps the example-count-weighted average. Topologies,
//! special-agent roles (with or without data, connected or not), datasets,
//! and schedules are all configurable; every run is bit-reproducible from a
//! single master seed.
//!
//! Module map:
//! - [`topology`]: graph generators, role annotations, topology file format
//! - [`learner`]: softmax-regression / one-hidden-layer MLP training in f64
//! - [`data`]: MNIST IDX and CIFAR-10 binary ingestion, synthetic blobs,
//!   IID partitioning
//! - [`engine`]: the gossip iteration loop and weighted aggregation
//! - [`baselines`]: centralized (cnl) and federated-averaging (fl) runs
//! - [`reporting`]: metrics CSV, summary JSON, loss SVG
//! - [`seeds`]: seed derivation that keeps every stage deterministic
//! - [`parallel`]: rayon-backed map helpers with a sequential fallback

pub mod baselines;
pub mod data;
pub mod engine;
pub mod learner;
pub mod parallel;
pub mod reporting;
pub mod seeds;
pub mod topology;
