//! The MLADA network: meta-knowledge generator, interaction layer, domain
//! discriminator, ridge-regression head, and the three-phase episode update.

mod discriminator;
mod generator;
mod mlada;
mod ridge;

use serde::{Deserialize, Serialize};

pub use discriminator::{
    discriminate, disc_loss, disc_loss_backward, DiscLossGrad, Discriminator, LABEL_QUERY, LABEL_SOURCE,
};
pub use generator::{
    encode, encode_backward, encode_forward, fuse, fuse_concat, generate_attention, AttentionVector,
    Encoding, Generator,
};
pub use mlada::{episode_update, EpisodeBatch, EpisodeMetrics, GeneratorStep, Mlada, Optimizers};
pub use ridge::{one_hot, ridge_fit, ridge_loss, ridge_loss_grad, ridge_predict, with_bias, RidgeClassifier};

use crate::{Error, Result};

/// Which sentence encoder the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Attention from the generator fused with word vectors, `s = W k`.
    Full,
    /// Mean-pooled BiLSTM states through a learned affine map; no discriminator.
    NoAdversarial,
    /// Attention weights (zero-padded) concatenated with the mean word vector.
    ConcatFusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Word-vector dimension `d`.
    pub dim: usize,
    /// BiLSTM hidden size per direction.
    pub hidden: usize,
    /// Ridge regularization strength.
    pub lambda: f64,
    /// Discriminator hidden widths.
    pub disc_hidden: [usize; 2],
    pub no_adversarial: bool,
    pub concat_fusion: bool,
    /// Longest sentence the concatenation encoder accepts.
    pub max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 300,
            hidden: 128,
            lambda: 1.0,
            disc_hidden: [256, 128],
            no_adversarial: false,
            concat_fusion: false,
            max_len: crate::corpus::DEFAULT_MAX_LEN,
        }
    }
}

impl ModelConfig {
    pub fn with_dim(dim: usize) -> Self {
        ModelConfig {
            dim,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.no_adversarial && self.concat_fusion {
            return Err(Error::Config(
                "no_adversarial and concat_fusion cannot both be set".into(),
            ));
        }
        if self.dim == 0 || self.hidden == 0 || self.disc_hidden.contains(&0) {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.concat_fusion && self.max_len == 0 {
            return Err(Error::Config("max_len must be positive".into()));
        }
        Ok(())
    }

    pub fn variant(&self) -> Variant {
        if self.no_adversarial {
            Variant::NoAdversarial
        } else if self.concat_fusion {
            Variant::ConcatFusion
        } else {
            Variant::Full
        }
    }

    /// Length of a sentence feature vector, before the bias entry.
    pub fn feature_dim(&self) -> usize {
        match self.variant() {
            Variant::ConcatFusion => self.max_len + self.dim,
            _ => self.dim,
        }
    }
}
