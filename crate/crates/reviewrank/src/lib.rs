//! File formats, configuration, checkpoints, benchmarking and the
//! command-line pipeline around `reviewrank-core`.

pub mod bench;
pub mod checkpoint;
pub mod config;
mod hash;
pub mod manifest;
pub mod models;
pub mod pipeline;
pub mod report;
pub mod reviews;
pub mod textfiles;

pub use hash::sha256_hex;
