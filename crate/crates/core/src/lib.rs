//! Numerics for implicit-feedback top-N recommendation with review text.
//!
//! Everything here needs only an allocator: dataset filtering and splitting,
//! tokenization and document assembly, the latent-factor, generalized-MF,
//! topic-regularized, paragraph-vector-regularized and convolutional models,
//! the BPR training engine, ranking metrics, significance testing and the
//! two-stage retrieval/rerank evaluation protocol.
//!
//! File formats, timing and the command line live in the `reviewrank` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod conv;
pub mod data;
pub mod dense;
pub mod eval;
pub mod linalg;
pub mod math;
pub mod metrics;
pub mod mf;
pub mod model;
pub mod optim;
pub mod pv;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod text;
pub mod topic;
pub mod train;

mod error;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use rng::Rng64;
