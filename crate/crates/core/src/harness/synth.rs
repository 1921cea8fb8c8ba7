use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{embed_sentence, write_embeddings, Dataset, EmbeddingTable, Example, Vocab};
use crate::model::{generate_attention, Mlada};
use crate::nn::{argmax, Mat};
use crate::{seeded_rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub examples_per_class: usize,
    pub sentence_len: usize,
    pub keywords_per_class: usize,
    /// Distractor tokens shared by every class.
    pub vocab_noise_size: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_classes: 24,
            examples_per_class: 50,
            sentence_len: 12,
            keywords_per_class: 1,
            vocab_noise_size: 4,
            dim: 32,
            seed: 0,
        }
    }
}

/// Keyword-driven corpus. Class signal lives only in each class's own
/// keywords; everything else is shared distractor noise.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub dataset: Dataset,
    pub table: EmbeddingTable,
    pub vocab: Vocab,
    /// Token ids of each class's keywords.
    pub keywords: Vec<Vec<u32>>,
}

impl SyntheticCorpus {
    pub fn is_keyword_of(&self, token: u32, class: usize) -> bool {
        self.keywords[class].contains(&token)
    }

    /// Share of sentences in `classes` whose highest-attention token is one
    /// of their own class's keywords.
    pub fn keyword_hit_rate(&self, model: &Mlada, classes: &BTreeSet<usize>) -> Result<f64> {
        let mut hits = 0;
        let mut total = 0;
        for &c in classes {
            for &i in self.dataset.class_examples(c) {
                let ex = self.dataset.example(i);
                let k = generate_attention(&embed_sentence(ex, &self.table)?, &model.generator, None)?;
                if self.is_keyword_of(ex.token_ids[argmax(&k)], c) {
                    hits += 1;
                }
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::Invalid("no sentences in the requested classes".into()));
        }
        Ok(hits as f64 / total as f64)
    }

    /// Writes `data.jsonl` and `embeddings.vec` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(SYNTH_DATA);
        let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
        for ex in self.dataset.examples() {
            let text: Vec<&str> = ex
                .token_ids
                .iter()
                .map(|&t| self.vocab.token(t).expect("synthetic tokens are interned"))
                .collect();
            let line = serde_json::json!({
                "label": self.dataset.class_name(ex.label),
                "text": text.join(" "),
            });
            writeln!(w, "{line}").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        write_embeddings(&dir.join(SYNTH_EMBEDDINGS), &self.vocab, &self.table)
    }
}

pub const SYNTH_DATA: &str = "data.jsonl";
pub const SYNTH_EMBEDDINGS: &str = "embeddings.vec";

/// Builds the corpus: every sentence holds 1 to 3 keywords of its own class
/// at random positions, the remaining positions are distractors, and every
/// token's embedding is an independent random unit vector.
pub fn gen_synthetic_corpus(cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    let counts = [
        cfg.n_classes,
        cfg.examples_per_class,
        cfg.sentence_len,
        cfg.keywords_per_class,
        cfg.dim,
    ];
    if counts.contains(&0) {
        return Err(Error::Invalid("synthetic corpus counts must be at least 1".into()));
    }
    let max_keywords = cfg.sentence_len.min(3);
    if cfg.vocab_noise_size == 0 && cfg.sentence_len > 1 {
        return Err(Error::Invalid(
            "vocab too small: sentences longer than one token need distractor words".into(),
        ));
    }
    let total = cfg
        .n_classes
        .checked_mul(cfg.keywords_per_class)
        .and_then(|k| k.checked_add(cfg.vocab_noise_size))
        .filter(|&v| v <= u32::MAX as usize)
        .ok_or_else(|| Error::Invalid("vocab too large for 32-bit token ids".into()))?;

    let width = (cfg.n_classes - 1).to_string().len();
    let mut vocab = Vocab::new();
    let keywords: Vec<Vec<u32>> = (0..cfg.n_classes)
        .map(|c| {
            (0..cfg.keywords_per_class)
                .map(|j| vocab.intern(format!("kw{c:0width$}x{j}")))
                .collect()
        })
        .collect();
    let noise: Vec<u32> = (0..cfg.vocab_noise_size)
        .map(|j| vocab.intern(format!("noise{j}")))
        .collect();
    debug_assert_eq!(vocab.len(), total);

    let mut rng = seeded_rng(cfg.seed, 0);
    let mut examples = Vec::with_capacity(cfg.n_classes * cfg.examples_per_class);
    for (c, own) in keywords.iter().enumerate() {
        for _ in 0..cfg.examples_per_class {
            let n_kw = rng.random_range(1..=max_keywords);
            let mut tokens: Vec<u32> = (0..cfg.sentence_len)
                .map(|_| {
                    if noise.is_empty() {
                        own[0]
                    } else {
                        noise[rng.random_range(0..noise.len())]
                    }
                })
                .collect();
            for pos in index::sample(&mut rng, cfg.sentence_len, n_kw) {
                tokens[pos] = own[rng.random_range(0..own.len())];
            }
            examples.push(Example {
                token_ids: tokens,
                label: c,
            });
        }
    }
    let class_names = (0..cfg.n_classes).map(|c| format!("class{c:0width$}")).collect();
    let dataset = Dataset::new(examples, class_names)?;

    let mut emb_rng = seeded_rng(cfg.seed, 1);
    let mut matrix = Mat::zeros(vocab.len(), cfg.dim);
    for r in 0..vocab.len() {
        let row = matrix.row_mut(r);
        loop {
            for x in row.iter_mut() {
                *x = emb_rng.sample(StandardNormal);
            }
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                row.iter_mut().for_each(|x| *x /= norm);
                break;
            }
        }
    }
    Ok(SyntheticCorpus {
        dataset,
        table: EmbeddingTable::new(matrix)?,
        vocab,
        keywords,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn construction_contract() {
        let cfg = SynthConfig {
            n_classes: 16,
            keywords_per_class: 3,
            ..Default::default()
        };
        let c = gen_synthetic_corpus(&cfg).unwrap();
        assert_eq!(c.dataset.len(), 800);
        assert_eq!(c.dataset.num_classes(), 16);
        for ex in c.dataset.examples() {
            assert_eq!(ex.token_ids.len(), 12);
            let own = ex.token_ids.iter().filter(|&&t| c.is_keyword_of(t, ex.label)).count();
            assert!((1..=3).contains(&own));
            for other in (0..16).filter(|&o| o != ex.label) {
                assert!(!ex.token_ids.iter().any(|&t| c.is_keyword_of(t, other)));
            }
        }
        let mut seen = BTreeSet::new();
        for kw in &c.keywords {
            for &t in kw {
                assert!(seen.insert(t));
            }
        }
        for r in 0..c.table.len() {
            let n: f64 = c.table.row(r as u32).unwrap().iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded() {
        let a = gen_synthetic_corpus(&SynthConfig::default()).unwrap();
        let b = gen_synthetic_corpus(&SynthConfig::default()).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.table, b.table);
        let c = gen_synthetic_corpus(&SynthConfig {
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn rejects_degenerate_requests() {
        for cfg in [
            SynthConfig {
                n_classes: 0,
                ..Default::default()
            },
            SynthConfig {
                vocab_noise_size: 0,
                ..Default::default()
            },
        ] {
            assert!(gen_synthetic_corpus(&cfg).is_err());
        }
    }
}
