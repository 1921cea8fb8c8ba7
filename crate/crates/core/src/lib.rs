//! Few-shot text classification by episodic meta-learning with an
//! adversarial domain-adaptation network.
//!
//! A BiLSTM "meta-knowledge generator" produces per-word attention weights,
//! the interaction layer fuses them with word vectors into a sentence
//! embedding, and a ridge-regression head is refit in closed form on every
//! episode's support set. A feed-forward domain discriminator tries to tell
//! query embeddings from embeddings of sentences drawn from other training
//! classes, and the generator is trained to both classify and fool it.
//!
//! Module map:
//!
//! * [`corpus`] - datasets, vocabularies, embedding tables, class splits
//! * [`episodes`] - N-way K-shot episode sampling, including the source set
//! * [`nn`] - dense numerics with hand-written reverse passes, Adam, gradient checking
//! * [`model`] - generator, discriminator, ridge head, losses, per-episode update
//! * [`harness`] - training with early stopping, meta-testing, synthetic corpora, dumps

pub mod corpus;
pub mod episodes;
mod error;
pub mod exec;
pub mod harness;
pub mod model;
pub mod nn;

pub use error::{Error, ErrorKind, Result};
pub use exec::Execution;

/// Deterministic seeded generator used everywhere randomness is needed.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds a generator from a base seed and a stream tag.
///
/// Distinct tags give statistically independent streams from one user seed.
pub fn seeded_rng(seed: u64, stream: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
