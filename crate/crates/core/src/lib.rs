//! Online matrix factorization competitive with the offline `γ₂` norm, plus
//! the two things such a factorization buys you: online differentially
//! private answers to statistical queries, and online discrepancy
//! minimization against an oblivious stream.
//!
//! The factorization engine keeps a growing pair of matrices `L_t`, `R_t`
//! with `L_t R_t = Q_t` as the rows of `Q` arrive one at a time. Rows may
//! only be appended to `R_t`, and each arriving query row `q_t` must be
//! answered immediately with a coefficient row `ℓ_t` satisfying
//! `ℓ_t R_t = q_t`. Quality is the largest `‖ℓ_t‖₂` relative to the best
//! factorization any offline algorithm could have produced for the same
//! prefix.
//!
//! Module map:
//!
//! - [`linalg`]: dense symmetric eigendecomposition and PSD primitives.
//! - [`avg`]: the online primal-dual SDP solving the bounded *average*
//!   factorization problem, the engine everything else wraps.
//! - [`transforms`]: insertion, one-time-deletion, zone kick-out, and
//!   doubling wrappers that turn the average engine into a full online
//!   factorizer in both row- and column-arrival models.
//! - [`vcnet`]: a layered-net average factorizer for Boolean rows with
//!   bounded shatter function exponent.
//! - [`dp`]: the Gaussian-mechanism release pipeline and transcript
//!   harnesses.
//! - [`median`]: the small-dataset competitive algorithm (AboveThreshold,
//!   inner/outer median mechanism) plus brute-force hereditary discrepancy
//!   oracles.
//! - [`walk`]: the self-balancing walk sign chooser and the composed
//!   online discrepancy pipeline.
//! - [`oracles`]: offline reference computations (dual ascent lower bounds,
//!   certified upper bounds, workload generators, lower-bound harness).
//! - [`io`] and [`report`]: the CSV and JSON formats used by the CLI.

pub mod avg;
pub mod dp;
pub mod io;
pub mod linalg;
pub mod median;
pub mod oracles;
pub mod report;
pub mod rng;
pub mod transforms;
pub mod vcnet;
pub mod walk;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
