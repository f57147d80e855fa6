//! Monte Carlo and exact experiments. Each run is a pure function of its
//! configuration: replication `k` of experiment `e` draws from the seed
//! `(seed, e, k)`, results are collected in replication order and reduced
//! serially, so any number of workers produces the same bytes.

pub mod config;
pub mod deviation;
pub mod exact_tables;
pub mod normal;
pub mod paths;
pub mod stats;
pub mod trends;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{BmcError, Result};
use crate::kernels::Model;
use crate::seed::{ReplicationSeed, PERMUTATION_STREAM};
use crate::tree::{generation, sample_permutation, GenerationPermutation};
use config::ResolvedFunctional;
use crate::simulate::{simulate_tree, TreePopulation};

pub use config::{ExperimentConfig, ExperimentSpec, FunctionalSpec, ModelSpec};

/// CSV text plus a JSON summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub name: String,
    pub csv: String,
    pub summary: Value,
}

impl ExperimentOutput {
    pub fn verdict(&self, key: &str) -> Option<bool> {
        self.summary["verdicts"][key].as_bool()
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        s.push('\n');
        s
    }
}

/// Long-format CSV accumulator.
pub(crate) struct Csv {
    text: String,
}

impl Csv {
    pub(crate) fn new(columns: &[&str]) -> Self {
        let mut text = columns.join(",");
        text.push('\n');
        Csv { text }
    }

    pub(crate) fn push(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub(crate) fn finish(self) -> String {
        self.text
    }
}

/// Shorthand for CSV cells.
pub(crate) fn cell<T: std::fmt::Display>(v: T) -> String {
    v.to_string()
}

/// Runs `f(k)` for `k = 0..n` on the current pool, results in index order.
pub fn replicate<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Like [`replicate`] for fallible bodies; the first error in index order wins.
pub fn try_replicate<T, F>(n: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    replicate(n, f).into_iter().collect()
}

/// Seed of replication `k` of a labelled sub-experiment.
pub fn replication_seed(base: u64, label: &str, k: u64) -> ReplicationSeed {
    ReplicationSeed::new(base, label, k)
}

pub(crate) fn tree(model: &Model, depth: u32, seed: ReplicationSeed) -> Result<TreePopulation> {
    simulate_tree(model, depth, seed)
}

/// A tree deep enough for the first `n_max` permuted nodes, and the permutation.
pub(crate) fn permuted_tree(
    model: &Model,
    func: &ResolvedFunctional,
    n_max: u64,
    seed: ReplicationSeed,
) -> Result<(TreePopulation, GenerationPermutation)> {
    let r = generation(n_max)?;
    let pop = simulate_tree(model, r + func.extra_depth(), seed)?;
    let pi = sample_permutation(r, &mut seed.stream(PERMUTATION_STREAM));
    Ok((pop, pi))
}

/// Dispatches on the experiment type.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let (csv, mut summary) = match &config.experiment {
        ExperimentSpec::Deviation { .. } => deviation::run(config)?,
        ExperimentSpec::Clt { .. } => normal::clt(config)?,
        ExperimentSpec::EstimatorClt { .. } => normal::estimator_clt(config)?,
        ExperimentSpec::Mdp { .. } => trends::mdp(config)?,
        ExperimentSpec::Superexp { .. } => trends::superexp(config)?,
        ExperimentSpec::Lil { .. } => paths::lil(config)?,
        ExperimentSpec::Asclt { .. } => paths::asclt(config)?,
        ExperimentSpec::Slln { .. } => paths::slln(config)?,
        ExperimentSpec::MomentsExact { .. } => exact_tables::moments(config)?,
        ExperimentSpec::EventsExact { .. } => exact_tables::events(config)?,
    };
    summary["experiment"] = json!(config.experiment.type_name());
    summary["config"] = serde_json::to_value(config).expect("config serializes");
    Ok(ExperimentOutput {
        name: config.name(),
        csv,
        summary,
    })
}

/// Runs on a pool of `workers` threads (all cores when `None`).
pub fn run_with_workers(config: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentOutput> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = workers {
        if k == 0 {
            return Err(BmcError::InvalidParameter("--workers must be >= 1".into()));
        }
        builder = builder.num_threads(k);
    }
    let pool = builder
        .build()
        .map_err(|e| BmcError::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| run_experiment(config))
}

/// Writes `<dir>/<name>.csv` and `<dir>/<name>.json`; returns both paths.
pub fn write_outputs(dir: &Path, output: &ExperimentOutput) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{}.csv", output.name));
    let json = dir.join(format!("{}.json", output.name));
    std::fs::write(&csv, &output.csv)?;
    std::fs::write(&json, output.summary_json())?;
    Ok((csv, json))
}
