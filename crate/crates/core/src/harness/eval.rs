use std::collections::BTreeSet;

use serde::Serialize;

use super::evaluate_episodes;
use crate::corpus::{Dataset, EmbeddingTable};
use crate::episodes::{sample_task, Episode, EpisodeSpec};
use crate::exec::try_map_indexed;
use crate::model::Mlada;
use crate::{seeded_rng, Error, Execution, Result};

const TEST_STREAM: u64 = 3 << 40;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mean_accuracy: f64,
    /// Sample standard deviation of the per-episode accuracies.
    pub std: f64,
    /// Normal-approximation 95% half-width, `1.96 std / sqrt(n)`; 0 for one episode.
    pub ci95: f64,
    pub accuracies: Vec<f64>,
    /// Episodes per seed.
    pub n_episodes: usize,
    pub seeds: Vec<u64>,
    pub per_seed_mean: Vec<f64>,
}

impl EvalReport {
    pub fn from_accuracies(accuracies: Vec<f64>, n_episodes: usize, seeds: Vec<u64>) -> Self {
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let std = if accuracies.len() > 1 {
            (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let per_seed_mean = accuracies
            .chunks(n_episodes.max(1))
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        EvalReport {
            mean_accuracy: mean,
            std,
            ci95: if accuracies.len() > 1 { 1.96 * std / n.sqrt() } else { 0.0 },
            accuracies,
            n_episodes,
            seeds,
            per_seed_mean,
        }
    }
}

/// Test task `index` under `seed`. Each task owns its generator, so tasks
/// can be drawn in any order or in parallel.
pub fn test_task(
    dataset: &Dataset,
    classes: &BTreeSet<usize>,
    spec: &EpisodeSpec,
    seed: u64,
    index: usize,
) -> Result<Episode> {
    sample_task(dataset, classes, spec, &mut seeded_rng(seed, TEST_STREAM | index as u64))
}

/// Episodic evaluation on held-out classes. Per task the ridge head is fit
/// on the support set with β frozen and scored on the query set.
///
/// When `train_classes` is given it must be disjoint from `test_classes`.
#[allow(clippy::too_many_arguments)]
pub fn meta_test(
    model: &Mlada,
    dataset: &Dataset,
    table: &EmbeddingTable,
    test_classes: &BTreeSet<usize>,
    train_classes: Option<&BTreeSet<usize>>,
    spec: &EpisodeSpec,
    n_episodes: usize,
    seeds: &[u64],
    exec: Execution,
) -> Result<EvalReport> {
    if let Some(train) = train_classes {
        if !train.is_disjoint(test_classes) {
            return Err(Error::Invalid("test classes overlap the training classes".into()));
        }
    }
    if n_episodes == 0 || seeds.is_empty() {
        return Err(Error::Invalid("meta-test needs at least one episode and one seed".into()));
    }
    let mut accuracies = Vec::with_capacity(n_episodes * seeds.len());
    for &seed in seeds {
        let tasks = try_map_indexed(n_episodes, exec, |i| test_task(dataset, test_classes, spec, seed, i))?;
        accuracies.extend(evaluate_episodes(model, dataset, table, &tasks, exec)?);
    }
    Ok(EvalReport::from_accuracies(accuracies, n_episodes, seeds.to_vec()))
}
