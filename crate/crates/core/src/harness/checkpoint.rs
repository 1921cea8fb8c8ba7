use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::corpus::{ClassSplit, Dataset};
use crate::model::Mlada;
use crate::nn::ArrayStore;
use crate::{Error, Result};

/// A class split recorded by name, so it survives re-loading a dataset
/// whose class ids were assigned in a different order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl NamedSplit {
    pub fn from_split(dataset: &Dataset, split: &ClassSplit) -> Self {
        let names = |s: &BTreeSet<usize>| s.iter().map(|&c| dataset.class_name(c).to_string()).collect();
        NamedSplit {
            train: names(&split.train),
            val: names(&split.val),
            test: names(&split.test),
        }
    }

    pub fn resolve(&self, dataset: &Dataset) -> Result<ClassSplit> {
        ClassSplit::new(
            super::class_ids(dataset, &self.train)?,
            super::class_ids(dataset, &self.val)?,
            super::class_ids(dataset, &self.test)?,
        )
    }
}

/// A trained model with the context it was trained in.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Mlada,
    pub train: Option<TrainConfig>,
    pub split: Option<NamedSplit>,
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save_checkpoint(
    path: &Path,
    model: &Mlada,
    dataset: &Dataset,
    split: &ClassSplit,
    cfg: &TrainConfig,
) -> Result<()> {
    let mut store = model.to_store()?;
    store.meta.insert("train".into(), to_value(cfg)?);
    store
        .meta
        .insert("split".into(), to_value(&NamedSplit::from_split(dataset, split))?);
    store.write(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let store = ArrayStore::read(path)?;
    let model = Mlada::from_store(&store)?;
    let parse_err = |e: serde_json::Error| Error::Checkpoint(format!("{}: {e}", path.display()));
    let train = store
        .meta
        .get("train")
        .map(|v| serde_json::from_value(v.clone()))
        .transpose()
        .map_err(parse_err)?;
    let split = store
        .meta
        .get("split")
        .map(|v| serde_json::from_value(v.clone()))
        .transpose()
        .map_err(parse_err)?;
    Ok(Checkpoint { model, train, split })
}
