//! Black-box reductions that turn the bounded *average* factorization
//! engine into a full online factorizer:
//!
//! - [`layout`]: the binary-counter bookkeeping that partitions a growing
//!   universe into power-of-two instances.
//! - [`insertion`]: runs one engine per instance and combines their
//!   outputs, supporting column insertion.
//! - [`semidynamic`]: adds one-time column deletion on top of the
//!   insertion wrapper via bar/star difference rows.
//! - [`zones`]: the kick-out reduction; columns whose right-matrix norm
//!   grows past 2 move to the next zone, giving `‖R_t‖_{1→2} ≤ 1` overall.
//! - [`doubling`]: guesses `γ` by doubling, in the row- and column-arrival
//!   models.

pub mod doubling;
pub mod insertion;
pub mod layout;
pub mod semidynamic;
pub mod zones;

pub use doubling::{ColumnStep, DoublingColumn, DoublingRow, RowStep};
pub use insertion::InsertionWrapper;
pub use semidynamic::SemiDynamicWrapper;
pub use zones::ZonePipeline;

use crate::avg::{self, AvgFactorConfig, DualCertificate};
use crate::Result;
use std::collections::HashMap;

/// Identifier of a right row in a composed pipeline's output. Ids are
/// stable: a row keeps its id for the lifetime of the run, and absent ids
/// in a left row mean zero-padding.
pub type RowId = u64;

/// One step of an average factorization engine over its local universe.
#[derive(Debug, Clone)]
pub enum EngineStep {
    Extended {
        /// Rows appended this step, dense over the engine's local columns.
        new_rows: Vec<Vec<f64>>,
        /// Sparse coefficients over the engine's cumulative row ordinals
        /// (bootstrap rows included, in emission order).
        left: Vec<(usize, f64)>,
    },
    Asserted {
        certificate: DualCertificate,
    },
}

/// The contract the wrappers need from an average factorization engine:
/// per arriving row, either extend with `‖R‖_F² ≤ (local universe size)`
/// and `‖ℓ‖₂` within the factory's cap, or assert.
pub trait AverageEngine {
    /// Rows of the initial right matrix. Called exactly once, right after
    /// creation, before any `step`.
    fn bootstrap_rows(&mut self) -> Vec<Vec<f64>>;
    fn step(&mut self, q: &[f64]) -> Result<EngineStep>;
}

/// Creates engines for restricted universes.
pub trait EngineFactory {
    fn make(&self, universe_size: usize) -> Box<dyn AverageEngine>;
    /// Upper bound on `‖ℓ‖₂` for rows the engines emit (`Cγ` for the SDP
    /// engine).
    fn left_norm_cap(&self) -> f64;
}

/// The SDP engine as an [`AverageEngine`].
pub struct AvgEngine {
    state: avg::AvgFactorState,
    bootstrapped: bool,
}

impl AverageEngine for AvgEngine {
    fn bootstrap_rows(&mut self) -> Vec<Vec<f64>> {
        assert!(!self.bootstrapped, "bootstrap_rows called twice");
        self.bootstrapped = true;
        self.state.right_rows().iter().map(|(_, r)| r.clone()).collect()
    }

    fn step(&mut self, q: &[f64]) -> Result<EngineStep> {
        match self.state.step(q)? {
            avg::StepOutcome::Extended { new_right_rows, left_row } => {
                let left = left_row
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c != 0.0)
                    .map(|(i, &c)| (i, c))
                    .collect();
                Ok(EngineStep::Extended { new_rows: new_right_rows, left })
            }
            avg::StepOutcome::Asserted { certificate } => {
                Ok(EngineStep::Asserted { certificate })
            }
        }
    }
}

/// Factory for [`AvgEngine`] instances at a fixed `γ` guess.
#[derive(Debug, Clone)]
pub struct AvgEngineFactory {
    pub gamma: f64,
}

impl EngineFactory for AvgEngineFactory {
    fn make(&self, universe_size: usize) -> Box<dyn AverageEngine> {
        let state = avg::init(AvgFactorConfig::new(self.gamma, universe_size));
        Box::new(AvgEngine { state, bootstrapped: false })
    }

    fn left_norm_cap(&self) -> f64 {
        AvgFactorConfig::comp_c() * self.gamma
    }
}

/// The accumulated output of a row-arrival factorizer: append-only right
/// rows keyed by id, one sparse left row per step, and the norm caps the
/// run promises. `push_step` re-verifies reconstruction and both caps.
#[derive(Debug, Clone)]
pub struct GrowingFactorization {
    pub right_rows: Vec<(RowId, Vec<f64>)>,
    pub left_rows: Vec<Vec<(RowId, f64)>>,
    pub column_norm_cap: f64,
    pub left_norm_cap: f64,
    dim_n: usize,
    col_norm_sq: Vec<f64>,
    id_index: HashMap<RowId, usize>,
    max_left_norm: f64,
}

impl GrowingFactorization {
    pub fn new(dim_n: usize, column_norm_cap: f64, left_norm_cap: f64) -> Self {
        Self {
            right_rows: Vec::new(),
            left_rows: Vec::new(),
            column_norm_cap,
            left_norm_cap,
            dim_n,
            col_norm_sq: vec![0.0; dim_n],
            id_index: HashMap::new(),
            max_left_norm: 0.0,
        }
    }

    pub fn dim_n(&self) -> usize {
        self.dim_n
    }

    /// Caps can grow over a run (phase advances); callers refresh this
    /// before each `push_step`.
    pub fn set_left_norm_cap(&mut self, cap: f64) {
        self.left_norm_cap = cap;
    }

    pub fn max_left_norm(&self) -> f64 {
        self.max_left_norm
    }

    pub fn max_column_norm(&self) -> f64 {
        self.col_norm_sq.iter().fold(0.0_f64, |m, &x| m.max(x)).sqrt()
    }

    pub fn column_norm(&self, col: usize) -> f64 {
        self.col_norm_sq[col].sqrt()
    }

    /// Ingests one step, checking `ℓ_t R_t = q_t` to `1e-6·(1+‖q‖_∞)` and
    /// both norm caps to `+1e-6`.
    pub fn push_step(&mut self, step: &RowStep, q: &[f64]) -> Result<()> {
        for (id, row) in &step.new_rows {
            if row.len() != self.dim_n {
                return Err(crate::Error::PipelineError(format!(
                    "right row {id} has width {}, expected {}",
                    row.len(),
                    self.dim_n
                )));
            }
            self.id_index.insert(*id, self.right_rows.len());
            for (c, v) in row.iter().enumerate() {
                self.col_norm_sq[c] += v * v;
            }
            self.right_rows.push((*id, row.clone()));
        }
        let mut recon = vec![0.0; self.dim_n];
        let mut lnorm_sq = 0.0;
        for &(id, c) in &step.left {
            let &idx = self.id_index.get(&id).ok_or_else(|| {
                crate::Error::PipelineError(format!("left row references unknown id {id}"))
            })?;
            lnorm_sq += c * c;
            for (i, v) in self.right_rows[idx].1.iter().enumerate() {
                recon[i] += c * v;
            }
        }
        let qmax = q.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        for i in 0..self.dim_n {
            let err = (recon[i] - q[i]).abs();
            if err > 1e-6 * (1.0 + qmax) {
                return Err(crate::Error::PipelineError(format!(
                    "reconstruction error {err:e} at column {i} (step {})",
                    self.left_rows.len() + 1
                )));
            }
        }
        let lnorm = lnorm_sq.sqrt();
        if lnorm > self.left_norm_cap + 1e-6 {
            return Err(crate::Error::PipelineError(format!(
                "left row norm {lnorm} exceeds cap {}",
                self.left_norm_cap
            )));
        }
        let colmax = self.max_column_norm();
        if colmax > self.column_norm_cap + 1e-6 {
            return Err(crate::Error::PipelineError(format!(
                "column norm {colmax} exceeds cap {}",
                self.column_norm_cap
            )));
        }
        self.max_left_norm = self.max_left_norm.max(lnorm);
        self.left_rows.push(step.left.clone());
        Ok(())
    }
}

/// A full online factorizer in the row arrival model.
pub trait RowArrivalFactorizer {
    fn dim_n(&self) -> usize;
    fn step(&mut self, q: &[f64]) -> Result<RowStep>;
    /// Cap promised for `‖ℓ_t‖₂` after the last step.
    fn left_norm_cap(&self) -> f64;
}
