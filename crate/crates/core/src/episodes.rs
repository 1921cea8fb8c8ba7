//! N-way K-shot episode sampling.
//!
//! An episode draws `N` classes, then `K` support and `L` query examples per
//! class, plus a source set of `N * L` examples from the remaining allowed
//! classes. The source set stands in for the "other domain" the
//! discriminator learns to tell apart from the query set.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::{Error, Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    /// Classes per episode (N).
    pub n_way: usize,
    /// Support examples per class (K).
    pub k_shot: usize,
    /// Query examples per class (L); the source set has `n_way * n_query` examples.
    pub n_query: usize,
}

impl EpisodeSpec {
    pub fn new(n_way: usize, k_shot: usize, n_query: usize) -> Result<Self> {
        let spec = EpisodeSpec {
            n_way,
            k_shot,
            n_query,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_way < 2 {
            return Err(Error::Invalid(format!("n_way must be at least 2, got {}", self.n_way)));
        }
        if self.k_shot < 1 || self.n_query < 1 {
            return Err(Error::Invalid("k_shot and n_query must be at least 1".into()));
        }
        Ok(())
    }

    pub fn per_class(&self) -> usize {
        self.k_shot + self.n_query
    }
}

/// Which classes the source set must avoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceExclusion {
    /// No source example belongs to any of the episode's classes.
    #[default]
    All,
    /// Per episode class `y`, its `L` source draws only avoid `y` itself.
    Current,
}

/// One sampled task. Example references are indices into the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Episode {
    /// Global class ids, sorted; position is the local label.
    pub classes: Vec<usize>,
    /// `(example index, local label)`, grouped by class.
    pub support: Vec<(usize, usize)>,
    pub query: Vec<(usize, usize)>,
    /// Empty for evaluation episodes.
    pub source: Vec<usize>,
}

impl Episode {
    pub fn n_way(&self) -> usize {
        self.classes.len()
    }
}

/// Bijection between an episode's global class ids and local labels `0..N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    to_local: BTreeMap<usize, usize>,
    to_global: Vec<usize>,
}

impl LabelMap {
    pub fn local(&self, global: usize) -> Option<usize> {
        self.to_local.get(&global).copied()
    }

    pub fn global(&self, local: usize) -> Option<usize> {
        self.to_global.get(local).copied()
    }

    pub fn len(&self) -> usize {
        self.to_global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_global.is_empty()
    }
}

/// Local labels follow the sorted order of global class ids.
pub fn relabel(episode: &Episode) -> LabelMap {
    let mut to_global = episode.classes.clone();
    to_global.sort_unstable();
    to_global.dedup();
    let to_local = to_global.iter().enumerate().map(|(l, &g)| (g, l)).collect();
    LabelMap {
        to_local,
        to_global,
    }
}

/// Samples a training episode with its source set.
pub fn sample_episode(
    dataset: &Dataset,
    allowed: &BTreeSet<usize>,
    spec: &EpisodeSpec,
    exclusion: SourceExclusion,
    rng: &mut Rng,
) -> Result<Episode> {
    let mut ep = sample_task(dataset, allowed, spec, rng)?;
    ep.source = sample_source(dataset, allowed, &ep.classes, spec.n_query, exclusion, rng)?;
    Ok(ep)
}

/// Samples support and query sets only (used at validation and test time).
pub fn sample_task(
    dataset: &Dataset,
    allowed: &BTreeSet<usize>,
    spec: &EpisodeSpec,
    rng: &mut Rng,
) -> Result<Episode> {
    spec.validate()?;
    let eligible = eligible_classes(dataset, allowed, spec)?;
    let mut classes: Vec<usize> = index::sample(rng, eligible.len(), spec.n_way)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    classes.sort_unstable();

    let mut support = Vec::with_capacity(spec.n_way * spec.k_shot);
    let mut query = Vec::with_capacity(spec.n_way * spec.n_query);
    for (local, &class) in classes.iter().enumerate() {
        let pool = dataset.class_examples(class);
        let picks = index::sample(rng, pool.len(), spec.per_class()).into_vec();
        support.extend(picks[..spec.k_shot].iter().map(|&i| (pool[i], local)));
        query.extend(picks[spec.k_shot..].iter().map(|&i| (pool[i], local)));
    }
    Ok(Episode {
        classes,
        support,
        query,
        source: Vec::new(),
    })
}

/// Allowed classes with at least `K + L` examples, sorted. Smaller classes
/// are dropped with a warning as long as `N` classes remain.
fn eligible_classes(dataset: &Dataset, allowed: &BTreeSet<usize>, spec: &EpisodeSpec) -> Result<Vec<usize>> {
    if let Some(&bad) = allowed.iter().find(|&&c| c >= dataset.num_classes()) {
        return Err(Error::Sampling(format!("class {bad} is not in the dataset")));
    }
    let (eligible, small): (Vec<usize>, Vec<usize>) = allowed
        .iter()
        .partition(|&&c| dataset.class_examples(c).len() >= spec.per_class());
    if eligible.len() < spec.n_way {
        return Err(Error::Sampling(if allowed.len() < spec.n_way {
            format!("{} classes available for a {}-way episode", allowed.len(), spec.n_way)
        } else {
            format!(
                "only {} of {} classes have the {} examples a {}-shot, {}-query episode needs",
                eligible.len(),
                allowed.len(),
                spec.per_class(),
                spec.k_shot,
                spec.n_query
            )
        }));
    }
    if !small.is_empty() {
        log::warn!(
            "{} classes with fewer than {} examples excluded from sampling",
            small.len(),
            spec.per_class()
        );
    }
    Ok(eligible)
}

fn sample_source(
    dataset: &Dataset,
    allowed: &BTreeSet<usize>,
    episode_classes: &[usize],
    n_query: usize,
    exclusion: SourceExclusion,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    let pool_excluding = |skip: &dyn Fn(usize) -> bool| -> Vec<usize> {
        allowed
            .iter()
            .filter(|&&c| !skip(c))
            .flat_map(|&c| dataset.class_examples(c).iter().copied())
            .collect()
    };
    let draw = |pool: &[usize], n: usize, rng: &mut Rng| -> Result<Vec<usize>> {
        if pool.len() < n {
            return Err(Error::Sampling(format!(
                "source pool has {} examples, {n} needed",
                pool.len()
            )));
        }
        Ok(index::sample(rng, pool.len(), n).into_iter().map(|i| pool[i]).collect())
    };
    match exclusion {
        SourceExclusion::All => {
            let pool = pool_excluding(&|c| episode_classes.binary_search(&c).is_ok());
            draw(&pool, n_query * episode_classes.len(), rng)
        }
        SourceExclusion::Current => {
            let mut out = Vec::with_capacity(n_query * episode_classes.len());
            for &y in episode_classes {
                let pool = pool_excluding(&|c| c == y);
                out.extend(draw(&pool, n_query, rng)?);
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Example;
    use crate::seeded_rng;

    fn toy(classes: usize, per_class: usize) -> Dataset {
        let mut ex = Vec::new();
        for c in 0..classes {
            for i in 0..per_class {
                ex.push(Example {
                    token_ids: vec![(c * per_class + i) as u32],
                    label: c,
                });
            }
        }
        Dataset::new(ex, (0..classes).map(|c| format!("c{c}")).collect()).unwrap()
    }

    fn all(n: usize) -> BTreeSet<usize> {
        (0..n).collect()
    }

    #[test]
    fn three_way_two_shot_sizes() {
        let d = toy(6, 5);
        let spec = EpisodeSpec::new(3, 2, 1).unwrap();
        let ep = sample_episode(&d, &all(6), &spec, SourceExclusion::All, &mut seeded_rng(1, 0)).unwrap();
        assert_eq!((ep.support.len(), ep.query.len(), ep.source.len()), (6, 3, 3));
        for &s in &ep.source {
            assert!(!ep.classes.contains(&d.example(s).label));
        }
    }

    #[test]
    fn same_seed_same_episode() {
        let d = toy(8, 6);
        let spec = EpisodeSpec::new(4, 1, 3).unwrap();
        let a = sample_episode(&d, &all(8), &spec, SourceExclusion::All, &mut seeded_rng(5, 0)).unwrap();
        let b = sample_episode(&d, &all(8), &spec, SourceExclusion::All, &mut seeded_rng(5, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let d = toy(8, 6);
        let spec = EpisodeSpec::new(4, 1, 3).unwrap();
        let mut r1 = seeded_rng(1, 0);
        let mut r2 = seeded_rng(2, 0);
        for _ in 0..10 {
            let a = sample_episode(&d, &all(8), &spec, SourceExclusion::All, &mut r1).unwrap();
            let b = sample_episode(&d, &all(8), &spec, SourceExclusion::All, &mut r2).unwrap();
            assert_ne!(a, b);
        }
    }

    #[test]
    fn class_frequency_matches_hypergeometric() {
        // P(class in episode) = N / C = 5/8
        let d = toy(8, 4);
        let spec = EpisodeSpec::new(5, 1, 1).unwrap();
        let mut rng = seeded_rng(17, 0);
        let mut counts = [0usize; 8];
        let n = 10_000;
        for _ in 0..n {
            let ep = sample_task(&d, &all(8), &spec, &mut rng).unwrap();
            for c in ep.classes {
                counts[c] += 1;
            }
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - 0.625).abs() < 0.02, "{f}");
        }
    }

    #[test]
    fn relabel_is_sorted_bijection() {
        let ep = Episode {
            classes: vec![7, 2, 9],
            support: vec![],
            query: vec![],
            source: vec![],
        };
        let m = relabel(&ep);
        assert_eq!((m.local(2), m.local(7), m.local(9)), (Some(0), Some(1), Some(2)));
        for l in 0..3 {
            assert_eq!(m.local(m.global(l).unwrap()), Some(l));
        }
        assert!(EpisodeSpec::new(1, 1, 1).is_err());
    }

    #[test]
    fn insufficient_data_errors() {
        let d = toy(4, 3);
        let spec = EpisodeSpec::new(5, 1, 1).unwrap();
        assert!(matches!(sample_task(&d, &all(4), &spec, &mut seeded_rng(0, 0)), Err(Error::Sampling(_))));
        let spec = EpisodeSpec::new(2, 2, 2).unwrap();
        assert!(sample_task(&d, &all(4), &spec, &mut seeded_rng(0, 0)).is_err());
        // every class is in the episode, nothing left for the source set
        let spec = EpisodeSpec::new(4, 1, 1).unwrap();
        assert!(sample_episode(&d, &all(4), &spec, SourceExclusion::All, &mut seeded_rng(0, 0)).is_err());
        assert!(sample_task(&d, &all(4), &spec, &mut seeded_rng(0, 0)).is_ok());
    }

    #[test]
    fn small_classes_skipped() {
        let mut ex = Vec::new();
        for c in 0..4 {
            let n = if c == 3 { 1 } else { 5 };
            for _ in 0..n {
                ex.push(Example { token_ids: vec![0], label: c });
            }
        }
        let d = Dataset::new(ex, (0..4).map(|c| c.to_string()).collect()).unwrap();
        let spec = EpisodeSpec::new(3, 1, 2).unwrap();
        for s in 0..20 {
            let ep = sample_task(&d, &all(4), &spec, &mut seeded_rng(s, 0)).unwrap();
            assert_eq!(ep.classes, vec![0, 1, 2]);
        }
    }

    #[test]
    fn current_exclusion_only_avoids_own_class() {
        let d = toy(5, 10);
        let spec = EpisodeSpec::new(4, 1, 3).unwrap();
        let mut rng = seeded_rng(3, 0);
        let mut saw_episode_class = false;
        for _ in 0..50 {
            let ep = sample_episode(&d, &all(5), &spec, SourceExclusion::Current, &mut rng).unwrap();
            assert_eq!(ep.source.len(), 12);
            for (k, chunk) in ep.source.chunks(3).enumerate() {
                for &s in chunk {
                    let c = d.example(s).label;
                    assert_ne!(c, ep.classes[k]);
                    saw_episode_class |= ep.classes.contains(&c);
                }
            }
        }
        assert!(saw_episode_class);
    }
}
