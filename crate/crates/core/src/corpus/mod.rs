//! Labeled text, vocabularies, pretrained word vectors and class splits.

mod embeddings;
mod jsonl;
mod split;

use std::collections::HashMap;

pub use embeddings::{load_embeddings, write_embeddings, EmbeddingStats, EmbeddingTable};
pub use jsonl::{load_jsonl_dataset, JsonlFields, LoadStats, DEFAULT_MAX_LEN};
pub use split::{split_classes, ClassSplit};

pub use crate::nn::SentenceMatrix;
use crate::{Error, Result};

/// Lowercases, splits on whitespace and strips non-alphanumeric characters
/// from both ends of each token. Tokens that end up empty are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Ordered set of token strings with dense ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab::new();
        for t in tokens {
            v.intern(t);
        }
        v
    }

    /// Id of `token`, adding it if new.
    pub fn intern(&mut self, token: impl Into<String>) -> u32 {
        let token = token.into();
        if let Some(&id) = self.index.get(&token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
        id
    }

    pub fn lookup(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One labeled sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub token_ids: Vec<u32>,
    pub label: usize,
}

/// Labeled examples with a per-class index.
///
/// Class ids are dense, `0..num_classes()`, and every class owns at least
/// one example.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    class_names: Vec<String>,
    class_index: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn new(examples: Vec<Example>, class_names: Vec<String>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Data("no examples".into()));
        }
        let mut class_index = vec![Vec::new(); class_names.len()];
        for (i, ex) in examples.iter().enumerate() {
            if ex.token_ids.is_empty() {
                return Err(Error::Data(format!("example {i} has no tokens")));
            }
            class_index
                .get_mut(ex.label)
                .ok_or_else(|| Error::Data(format!("example {i} has unknown label {}", ex.label)))?
                .push(i);
        }
        if let Some(c) = class_index.iter().position(Vec::is_empty) {
            return Err(Error::Data(format!("class {} has no examples", class_names[c])));
        }
        Ok(Dataset {
            examples,
            class_names,
            class_index,
        })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn example(&self, i: usize) -> &Example {
        &self.examples[i]
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn classes(&self) -> std::ops::Range<usize> {
        0..self.class_names.len()
    }

    pub fn class_name(&self, class: usize) -> &str {
        &self.class_names[class]
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|n| n == name)
    }

    /// Indices of the examples labeled `class`.
    pub fn class_examples(&self, class: usize) -> &[usize] {
        &self.class_index[class]
    }

    /// Largest token id in use plus one.
    pub fn max_token_id(&self) -> usize {
        self.examples
            .iter()
            .flat_map(|e| e.token_ids.iter())
            .map(|&t| t as usize + 1)
            .max()
            .unwrap_or(0)
    }
}

/// Word-vector matrix of `example`: column `i` is the table row of token `i`.
pub fn embed_sentence(example: &Example, table: &EmbeddingTable) -> Result<SentenceMatrix> {
    embed_tokens(&example.token_ids, table)
}

pub fn embed_tokens(token_ids: &[u32], table: &EmbeddingTable) -> Result<SentenceMatrix> {
    if token_ids.is_empty() {
        return Err(Error::Invalid("cannot embed an empty sentence".into()));
    }
    let d = table.dim();
    let mut data = Vec::with_capacity(d * token_ids.len());
    for &t in token_ids {
        let row = table
            .row(t)
            .ok_or_else(|| Error::Invalid(format!("token id {t} outside a table of {} rows", table.len())))?;
        data.extend_from_slice(row);
    }
    Ok(SentenceMatrix::from_token_major(d, data))
}
