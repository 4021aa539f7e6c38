use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{kind} index {index} out of range (len {len}); id mapping is corrupted")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        len: usize,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("user {user} has interacted with every item; no negative can be sampled")]
    DegenerateUser { user: usize },
    #[error(
        "non-finite loss at epoch {epoch}, batch {batch}; \
         try a smaller learning rate (current {learning_rate})"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        learning_rate: f64,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("no users with held-out items to evaluate")]
    NoEvaluableUsers,
    #[error("paired t-test needs two aligned vectors of length >= 2 (got {a} and {b})")]
    TTestInput { a: usize, b: usize },
    #[error("representation cache is stale (built at version {cached}, model is at {current})")]
    StaleCache { cached: u64, current: u64 },
}
