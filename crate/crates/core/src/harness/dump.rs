use std::io::Write;

use crate::corpus::{embed_tokens, EmbeddingTable, Vocab};
use crate::model::{encode_forward, EpisodeBatch, Mlada};
use crate::{Error, Result};

/// `(token, weight)` pairs in sentence order.
pub fn dump_attention(
    model: &Mlada,
    token_ids: &[u32],
    vocab: &Vocab,
    table: &EmbeddingTable,
) -> Result<Vec<(String, f64)>> {
    let w = embed_tokens(token_ids, table)?;
    let enc = encode_forward(&w, &model.generator, &model.config)?;
    let k = enc
        .attention
        .ok_or_else(|| Error::Invalid("this model variant has no attention weights".into()))?;
    token_ids
        .iter()
        .zip(k)
        .map(|(&t, weight)| {
            let token = vocab
                .token(t)
                .ok_or_else(|| Error::Invalid(format!("token id {t} is not in the vocabulary")))?;
            Ok((token.to_string(), weight))
        })
        .collect()
}

/// Tab-separated `token<TAB>weight` lines.
pub fn write_attention<W: Write>(out: &mut W, pairs: &[(String, f64)]) -> std::io::Result<()> {
    for (token, weight) in pairs {
        writeln!(out, "{token}\t{weight}")?;
    }
    Ok(())
}

/// CSV of query-set classifier inputs: a header `label,s1,...,sd`, then one
/// row per query sentence. Values use shortest round-trip formatting.
pub fn dump_embeddings<W: Write>(model: &Mlada, batch: &EpisodeBatch, out: &mut W) -> Result<usize> {
    let features = model.features(&batch.query)?;
    let dim = model.config.feature_dim();
    let io = |e| Error::Invalid(format!("writing embeddings: {e}"));
    let header: Vec<String> = std::iter::once("label".to_string())
        .chain((1..=dim).map(|i| format!("s{i}")))
        .collect();
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for (f, label) in features.iter().zip(&batch.query_labels) {
        let row: Vec<String> = f.iter().map(f64::to_string).collect();
        writeln!(out, "{label},{}", row.join(",")).map_err(io)?;
    }
    Ok(features.len())
}
