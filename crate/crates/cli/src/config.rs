use mlada::harness::{NamedSplit, TrainConfig};
use mlada::model::ModelConfig;
use mlada::{Error, Result};
use serde_json::{Map, Value};

const TRAIN_KEYS: &[&str] = &[
    "epochs",
    "episodes_per_epoch",
    "patience",
    "n_way",
    "k_shot",
    "n_query",
    "seed",
    "val_episodes",
    "lr",
    "source_excludes",
    "execution",
];
const MODEL_KEYS: &[&str] = &[
    "dim",
    "hidden",
    "lambda",
    "disc_hidden",
    "no_adversarial",
    "concat_fusion",
    "max_len",
];

/// How the classes are divided: counts drawn with a seed, or explicit names.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    Counts { counts: (usize, usize, usize), seed: u64 },
    Named(NamedSplit),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
    /// Whether `dim` was given explicitly; otherwise it follows the embeddings.
    pub dim_set: bool,
    pub split: SplitSpec,
}

/// Parses a config file body: a JSON object, or `key = value` lines with
/// `#` comments. Values on `key = value` lines are read as JSON when they
/// parse as JSON and as bare strings otherwise.
pub fn parse_entries(text: &str) -> Result<Map<String, Value>> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        return match serde_json::from_str(trimmed) {
            Ok(Value::Object(m)) => Ok(m),
            Ok(_) => Err(Error::Config("config must be a JSON object".into())),
            Err(e) => Err(Error::Config(format!("config is not valid JSON: {e}"))),
        };
    }
    let mut map = Map::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = parse_assignment(line).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        map.insert(k, v);
    }
    Ok(map)
}

/// One `key=value` assignment, as in a config line or a `--set` flag.
pub fn parse_assignment(s: &str) -> std::result::Result<(String, Value), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return Err(format!("empty key in {s:?}"));
    }
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

pub fn build(entries: Map<String, Value>) -> Result<RunConfig> {
    let mut train = Map::new();
    let mut model = Map::new();
    let mut split = None;
    let mut split_seed = None;
    for (k, v) in entries {
        match k.as_str() {
            "split" => split = Some(v),
            "split_seed" => split_seed = Some(v),
            k if TRAIN_KEYS.contains(&k) => {
                train.insert(k.to_string(), v);
            }
            k if MODEL_KEYS.contains(&k) => {
                model.insert(k.to_string(), v);
            }
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
    }
    let dim_set = model.contains_key("dim");
    let train: TrainConfig = from_map(train, "training")?;
    let model: ModelConfig = from_map(model, "model")?;
    let split_seed = match split_seed {
        None => train.seed,
        Some(v) => serde_json::from_value(v).map_err(|e| Error::Config(format!("split_seed: {e}")))?,
    };
    let split = match split {
        None => return Err(Error::Config("config needs a split, e.g. split = 8/5/7".into())),
        Some(Value::String(s)) => SplitSpec::Counts {
            counts: parse_counts(&s)?,
            seed: split_seed,
        },
        Some(v) => SplitSpec::Named(
            serde_json::from_value(v).map_err(|e| Error::Config(format!("split: {e}")))?,
        ),
    };
    train.validate()?;
    Ok(RunConfig {
        train,
        model,
        dim_set,
        split,
    })
}

fn from_map<T: serde::de::DeserializeOwned>(map: Map<String, Value>, what: &str) -> Result<T> {
    serde_json::from_value(Value::Object(map)).map_err(|e| Error::Config(format!("{what} settings: {e}")))
}

fn parse_counts(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split('/').map(str::trim).collect();
    let bad = || Error::Config(format!("split must look like train/val/test counts, got {s:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let n = |p: &str| p.parse::<usize>().map_err(|_| bad());
    Ok((n(parts[0])?, n(parts[1])?, n(parts[2])?))
}
