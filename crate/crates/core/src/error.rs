//! Crate-wide error type.
//!
//! Four failure families, kept deliberately coarse: bad caller input,
//! refusal to start a computation whose size would be infeasible (scale
//! guards are hard errors, never silent truncation), total ruin of an
//! online strategy (every component at zero wealth, so no portfolio vector
//! is defined), and failed verification suites (a checked property turned
//! out false).

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Malformed or out-of-domain input: negative returns, ragged rows,
    /// zero-width sequences, mismatched dimensions, and the like.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The requested computation is combinatorially infeasible at this size;
    /// the limit and the offending quantity are spelled out in the message.
    #[error("scale guard: {0}")]
    ScaleGuard(String),

    /// Every pair engine has hit zero wealth, so the aggregate portfolio is
    /// undefined from this session on.
    #[error("bankrupt aggregate: {0}")]
    Bankrupt(String),

    /// A verification suite ran to completion and found a claimed property
    /// violated; the message carries the numbers.
    #[error("verification failure: {0}")]
    Verification(String),
}
