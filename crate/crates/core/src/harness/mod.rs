//! Meta-training with early stopping, meta-testing, synthetic corpora,
//! checkpoints and diagnostic dumps.

mod checkpoint;
mod dump;
mod eval;
mod gradcheck;
pub mod reference;
mod synth;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, NamedSplit};
pub use dump::{dump_attention, dump_embeddings, write_attention};
pub use eval::{meta_test, test_task, EvalReport};
pub use gradcheck::{
    check_discriminator, check_generator, run_gradcheck_suite, tiny_batch, tiny_config, GradCheckOutcome,
    GRADCHECK_COORDS, GRADCHECK_EPS, GRADCHECK_TOLERANCE,
};
pub use synth::{gen_synthetic_corpus, SynthConfig, SyntheticCorpus, SYNTH_DATA, SYNTH_EMBEDDINGS};
pub use train::{
    class_ids, evaluate_episodes, train, MetricsRecord, TrainConfig, TrainFiles, TrainOutcome, ValRecord,
};
