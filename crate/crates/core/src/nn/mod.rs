//! Dense numerics for the fixed MLADA computation graphs.
//!
//! Everything is `f64`. Forward functions are pure; the `*_cached` variants
//! keep the activations that the matching `*_backward` needs, and reverse
//! passes accumulate (`+=`) into [`Param::grad`]. Callers zero gradients
//! between phases.

mod checkpoint;
mod ffn;
mod gradcheck;
mod linalg;
mod lstm;
mod mat;
mod ops;
mod optim;
mod param;
mod real;
mod sentence;

pub use checkpoint::{ArrayStore, NamedArray, FORMAT_VERSION};
pub use ffn::{ffn_backward, ffn_forward, ffn_forward_cached, Dense, FfnCache};
pub use gradcheck::{grad_check, sample_coordinates, GradCheckReport};
pub use linalg::{cholesky, spd_solve};
pub use lstm::{bilstm_backward, bilstm_forward, bilstm_forward_cached, lstm_cell, BiLstmCache, LstmParams};
pub use mat::{axpy, dot, matmul, Mat};
pub use ops::{
    argmax, cross_entropy, cross_entropy_with_grad, sigmoid, softmax, softmax_backward, Activation,
};
pub use optim::{adam_step, AdamState, Optimizer};
pub use param::{Param, ParamSet};
pub use real::{Dd, Real};
pub use sentence::SentenceMatrix;
