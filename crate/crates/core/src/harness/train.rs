use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checkpoint::save_checkpoint;
use crate::corpus::{ClassSplit, Dataset, EmbeddingTable};
use crate::episodes::{sample_episode, sample_task, Episode, EpisodeSpec, SourceExclusion};
use crate::exec::try_map_indexed;
use crate::model::{episode_update, EpisodeBatch, EpisodeMetrics, Mlada, Optimizers};
use crate::{seeded_rng, Error, Execution, Result};

const TRAIN_STREAM: u64 = 1;
const VAL_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Upper bound on epochs; early stopping usually ends training sooner.
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub n_way: usize,
    pub k_shot: usize,
    pub n_query: usize,
    pub seed: u64,
    pub val_episodes: usize,
    pub lr: f64,
    pub source_excludes: SourceExclusion,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            episodes_per_epoch: 100,
            patience: 20,
            n_way: 5,
            k_shot: 1,
            n_query: 25,
            seed: 0,
            val_episodes: 100,
            lr: 0.001,
            source_excludes: SourceExclusion::All,
            execution: Execution::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn spec(&self) -> EpisodeSpec {
        EpisodeSpec {
            n_way: self.n_way,
            k_shot: self.k_shot,
            n_query: self.n_query,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.episodes_per_epoch == 0 || self.val_episodes == 0 {
            return Err(Error::Config(
                "epochs, episodes_per_epoch and val_episodes must be at least 1".into(),
            ));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        self.spec().validate().map_err(|e| Error::Config(e.to_string()))
    }
}

/// One training episode's losses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub episode: usize,
    #[serde(flatten)]
    pub metrics: EpisodeMetrics,
    /// Seconds since training started. Kept out of `metrics.jsonl` so that
    /// seeded runs produce identical metric files.
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValRecord {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy.
    pub best: Mlada,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub history: Vec<MetricsRecord>,
    pub validation: Vec<ValRecord>,
    pub epochs_run: usize,
}

/// Files written while training into an output directory.
pub struct TrainFiles;

impl TrainFiles {
    pub const METRICS: &'static str = "metrics.jsonl";
    pub const TIMINGS: &'static str = "timings.jsonl";
    pub const VALIDATION: &'static str = "val.jsonl";
    pub const SUMMARY: &'static str = "metrics.csv";
    pub const CHECKPOINT: &'static str = "best.json";
    pub const DIAGNOSTIC: &'static str = "diagnostic.json";
}

struct Sink {
    dir: PathBuf,
    metrics: BufWriter<File>,
    timings: BufWriter<File>,
    validation: BufWriter<File>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_line<T: Serialize>(w: &mut BufWriter<File>, path: &Path, value: &T) -> Result<()> {
    let line = serde_json::to_string(value).map_err(|e| Error::Invalid(e.to_string()))?;
    writeln!(w, "{line}")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

impl Sink {
    fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            metrics: create(&dir.join(TrainFiles::METRICS))?,
            timings: create(&dir.join(TrainFiles::TIMINGS))?,
            validation: create(&dir.join(TrainFiles::VALIDATION))?,
        })
    }

    fn record(&mut self, r: &MetricsRecord) -> Result<()> {
        write_line(&mut self.metrics, &self.dir.join(TrainFiles::METRICS), r)?;
        let timing = serde_json::json!({ "epoch": r.epoch, "episode": r.episode, "wall_time": r.wall_time });
        write_line(&mut self.timings, &self.dir.join(TrainFiles::TIMINGS), &timing)
    }

    fn validation(&mut self, v: &ValRecord) -> Result<()> {
        write_line(&mut self.validation, &self.dir.join(TrainFiles::VALIDATION), v)
    }
}

/// Mean query accuracy of `model` over pre-sampled evaluation tasks.
pub fn evaluate_episodes(
    model: &Mlada,
    dataset: &Dataset,
    table: &EmbeddingTable,
    episodes: &[Episode],
    exec: Execution,
) -> Result<Vec<f64>> {
    try_map_indexed(episodes.len(), exec, |i| {
        model.evaluate(&EpisodeBatch::from_episode(dataset, table, &episodes[i])?)
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Meta-trains `model` on the split's training classes with early stopping
/// on validation accuracy.
///
/// Every epoch runs `episodes_per_epoch` three-phase episode updates, then
/// scores a fixed set of validation tasks (the classifier refit per task,
/// β and μ frozen). Training stops once `patience` consecutive epochs fail to
/// beat the best validation accuracy so far; with `patience = 0` it stops
/// after the first epoch. When `out` is given, metrics are streamed there and
/// the best parameters are checkpointed.
pub fn train(
    dataset: &Dataset,
    table: &EmbeddingTable,
    split: &ClassSplit,
    cfg: &TrainConfig,
    mut model: Mlada,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let spec = cfg.spec();
    let mut sink = out.map(Sink::open).transpose()?;
    let mut train_rng = seeded_rng(cfg.seed, TRAIN_STREAM);
    let mut val_rng = seeded_rng(cfg.seed, VAL_STREAM);
    let val_tasks: Vec<Episode> = (0..cfg.val_episodes)
        .map(|_| sample_task(dataset, &split.val, &spec, &mut val_rng))
        .collect::<Result<_>>()?;

    let started = Instant::now();
    let mut opt = Optimizers::adam(cfg.lr);
    let mut history = Vec::with_capacity(cfg.episodes_per_epoch);
    let initial = mean(&evaluate_episodes(&model, dataset, table, &val_tasks, cfg.execution)?);
    let mut validation = vec![ValRecord {
        epoch: 0,
        accuracy: initial,
    }];
    if let Some(s) = sink.as_mut() {
        s.validation(&validation[0])?;
    }
    let mut best = model.clone();
    let (mut best_epoch, mut best_acc) = (0, initial);
    let mut stale = 0;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.epochs {
        for episode in 0..cfg.episodes_per_epoch {
            let ep = sample_episode(dataset, &split.train, &spec, cfg.source_excludes, &mut train_rng)?;
            let batch = EpisodeBatch::from_episode(dataset, table, &ep)?;
            let snapshot = sink.is_some().then(|| model.clone());
            let metrics = match episode_update(&mut model, &batch, &mut opt) {
                Ok(m) => m,
                Err(e) => {
                    if let (Some(s), Some(snap)) = (sink.as_ref(), snapshot) {
                        write_diagnostic(&s.dir, &snap, &e, epoch, episode, &ep)?;
                    }
                    return Err(e);
                }
            };
            let record = MetricsRecord {
                epoch,
                episode,
                metrics,
                wall_time: started.elapsed().as_secs_f64(),
            };
            if let Some(s) = sink.as_mut() {
                s.record(&record)?;
            }
            history.push(record);
        }
        epochs_run = epoch;
        model.classifier = None;
        let acc = mean(&evaluate_episodes(&model, dataset, table, &val_tasks, cfg.execution)?);
        let v = ValRecord { epoch, accuracy: acc };
        if let Some(s) = sink.as_mut() {
            s.validation(&v)?;
        }
        validation.push(v);
        log::info!("epoch {epoch}: validation accuracy {acc:.4}");
        if acc > best_acc {
            best_acc = acc;
            best_epoch = epoch;
            best = model.clone();
            stale = 0;
            if let Some(s) = sink.as_ref() {
                save_checkpoint(&s.dir.join(TrainFiles::CHECKPOINT), &best, dataset, split, cfg)?;
            }
        } else {
            stale += 1;
        }
        if stale >= cfg.patience {
            break;
        }
    }

    if let Some(s) = sink.as_ref() {
        if best_epoch == 0 {
            save_checkpoint(&s.dir.join(TrainFiles::CHECKPOINT), &best, dataset, split, cfg)?;
        }
        write_summary(&s.dir.join(TrainFiles::SUMMARY), &history)?;
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_accuracy: best_acc,
        history,
        validation,
        epochs_run,
    })
}

fn write_diagnostic(
    dir: &Path,
    model: &Mlada,
    err: &Error,
    epoch: usize,
    episode: usize,
    ep: &Episode,
) -> Result<()> {
    let mut store = model.to_store()?;
    store.meta.insert(
        "failure".into(),
        serde_json::json!({
            "error": err.to_string(),
            "epoch": epoch,
            "episode": episode,
            "classes": ep.classes,
            "support": ep.support,
            "query": ep.query,
            "source": ep.source,
        }),
    );
    let path = dir.join(TrainFiles::DIAGNOSTIC);
    store.write(&path)?;
    log::error!("non-finite training state; parameters before the failing update written to {}", path.display());
    Ok(())
}

fn opt_field(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Per-episode CSV written once training ends.
fn write_summary(path: &Path, history: &[MetricsRecord]) -> Result<()> {
    let mut w = create(path)?;
    let mut body = String::from("epoch,episode,rr_loss,disc_loss,gen_loss,query_ce,query_accuracy\n");
    for r in history {
        let m = &r.metrics;
        body.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.epoch,
            r.episode,
            m.rr_loss,
            opt_field(m.disc_loss),
            m.gen_loss,
            m.query_ce,
            m.query_accuracy
        ));
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Class ids of `names`, failing on any the dataset lacks.
pub fn class_ids(dataset: &Dataset, names: &[String]) -> Result<BTreeSet<usize>> {
    names
        .iter()
        .map(|n| {
            dataset
                .class_id(n)
                .ok_or_else(|| Error::Data(format!("class {n:?} is not in the dataset")))
        })
        .collect()
}
