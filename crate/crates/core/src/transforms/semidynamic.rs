//! One-time column deletion on top of the insertion wrapper.
//!
//! For every row `r` the inner wrapper emits, a *bar* row `r̄ = r|_{U'_{t₀}}`
//! (restricted to the columns alive at its birth) is stored. Deletion
//! events are decomposed into dyadic segments: at a bar row's `i`-th event
//! after birth, a *star* row `-r̄|_{S_i}` is appended, where `S_i` covers
//! the last `f(i)` events and `f(i)` is the largest power of two dividing
//! `i`. A row restricted to the current alive set is then the bar row plus
//! the star rows of the binary decomposition of its event count, so every
//! inner coefficient expands into at most `1 + log₂(2N)` output
//! coefficients. Output rows carry a `1/√log₂(4N)` rescale, left rows the
//! inverse.

use super::insertion::{InsertionWrapper, WrapperStep};
use super::{DualCertificate, EngineFactory};
use crate::{Error, Result};

/// Largest power of two dividing `i` (for `i ≥ 1`).
pub fn pow2_divisor(i: usize) -> usize {
    debug_assert!(i >= 1);
    1usize << i.trailing_zeros()
}

/// Segment indices `{2^k · ⌊a/2^k⌋ : bin(a)_k = 1}` whose `S_i` sets tile
/// the events `1..=a` disjointly.
pub fn decomposition_indices(a: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for k in 0..usize::BITS {
        if a & (1usize << k) != 0 {
            out.push((a >> k) << k);
        }
    }
    out
}

/// The event range `[i + 1 - f(i), i]` covered by `S_i`.
pub fn segment_range(i: usize) -> (usize, usize) {
    (i + 1 - pow2_divisor(i), i)
}

#[derive(Debug, Clone)]
struct BarRow {
    out_ordinal: usize,
    /// Number of global deletion events that predate this row's birth.
    birth_offset: usize,
    /// Star-row ordinals per event (1-based event `i` at index `i-1`);
    /// `None` when the restriction was identically zero and was dropped.
    stars: Vec<Option<usize>>,
}

/// Output of [`SemiDynamicWrapper::absorb`].
#[derive(Debug, Clone)]
pub struct SdStep {
    /// `(ordinal, row)` pairs appended this step (stars first, then bars).
    pub new_rows: Vec<(usize, Vec<f64>)>,
    pub left: Vec<(usize, f64)>,
}

/// Result of advancing the inner insertion wrapper.
#[derive(Debug)]
pub enum Advance {
    Proceed,
    Asserted { certificate: DualCertificate, universe: Vec<usize> },
}

struct Pending {
    new_inner: Vec<(usize, Vec<f64>)>,
    left: Vec<(usize, f64)>,
}

/// See the module docs. Strictly sequential; `advance_inner` must be
/// followed by `absorb` before the next step.
pub struct SemiDynamicWrapper<F: EngineFactory> {
    inner: InsertionWrapper<F>,
    dim_n: usize,
    scale: f64,
    alive: Vec<bool>,
    inserted: Vec<bool>,
    deleted_step: Vec<Option<usize>>,
    bars: Vec<BarRow>,
    rows: Vec<Vec<f64>>,
    col_norm_sq: Vec<f64>,
    /// Deletion sets in event order.
    global_events: Vec<Vec<usize>>,
    step: usize,
    pending: Option<Pending>,
    asserted: bool,
}

impl<F: EngineFactory> SemiDynamicWrapper<F> {
    pub fn new(factory: F, dim_n: usize) -> Self {
        Self {
            inner: InsertionWrapper::new(factory, dim_n),
            dim_n,
            scale: 1.0 / (4.0 * dim_n as f64).log2().sqrt(),
            alive: vec![false; dim_n],
            inserted: vec![false; dim_n],
            deleted_step: vec![None; dim_n],
            bars: Vec::new(),
            rows: Vec::new(),
            col_norm_sq: vec![0.0; dim_n],
            global_events: Vec::new(),
            step: 0,
            pending: None,
            asserted: false,
        }
    }

    pub fn inner(&self) -> &InsertionWrapper<F> {
        &self.inner
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn col_norm_sq(&self, col: usize) -> f64 {
        self.col_norm_sq[col]
    }

    pub fn is_alive(&self, col: usize) -> bool {
        self.alive[col]
    }

    pub fn deleted_step(&self, col: usize) -> Option<usize> {
        self.deleted_step[col]
    }

    /// `‖ℓ'‖₂` cap: inner cap × `log₂(4N)`.
    pub fn left_norm_cap(&self) -> f64 {
        self.inner.left_norm_cap() * (4.0 * self.dim_n as f64).log2()
    }

    /// Universe setup before the stream starts; returns new output rows.
    pub fn insert_columns(&mut self, cols: &[usize]) -> Result<Vec<(usize, Vec<f64>)>> {
        self.guard_ready()?;
        self.check_fresh(cols)?;
        let inner_rows = self.inner.insert_columns(cols)?;
        for &c in cols {
            self.inserted[c] = true;
            self.alive[c] = true;
        }
        Ok(self.append_bars(inner_rows))
    }

    /// Feeds `(q_t, inserts)` to the inner insertion wrapper. On `Proceed`
    /// the caller inspects the inner state, decides deletions, and calls
    /// [`absorb`](Self::absorb).
    pub fn advance_inner(&mut self, q: &[f64], inserts: &[usize]) -> Result<Advance> {
        self.guard_ready()?;
        self.check_fresh(inserts)?;
        self.step += 1;
        match self.inner.step(q, inserts)? {
            WrapperStep::Asserted { certificate, universe } => {
                self.asserted = true;
                Ok(Advance::Asserted { certificate, universe })
            }
            WrapperStep::Extended { new_rows, left } => {
                for &c in inserts {
                    self.inserted[c] = true;
                    self.alive[c] = true;
                }
                self.pending = Some(Pending { new_inner: new_rows, left });
                Ok(Advance::Proceed)
            }
        }
    }

    /// Applies this step's deletions and emits the output factorization of
    /// `q_t|_{U'_t}` over bar and star rows.
    pub fn absorb(&mut self, deletes: &[usize]) -> Result<SdStep> {
        let pending = self
            .pending
            .take()
            .ok_or_else(|| Error::InvalidState("absorb without advance_inner".into()))?;
        let mut new_rows = self.apply_deletions(deletes)?;
        new_rows.extend(self.append_bars(pending.new_inner));

        let mut left = Vec::with_capacity(pending.left.len());
        for (inner_ord, c) in pending.left {
            let bar = &self.bars[inner_ord];
            let c_out = c / self.scale;
            left.push((bar.out_ordinal, c_out));
            let a = bar.stars.len();
            for i in decomposition_indices(a) {
                if let Some(star_ord) = bar.stars[i - 1] {
                    left.push((star_ord, c_out));
                }
            }
        }
        left.sort_unstable_by_key(|&(ord, _)| ord);
        Ok(SdStep { new_rows, left })
    }

    /// Convenience for callers that know the deletions upfront.
    pub fn step(
        &mut self,
        q: &[f64],
        inserts: &[usize],
        deletes: &[usize],
    ) -> Result<std::result::Result<SdStep, (DualCertificate, Vec<usize>)>> {
        match self.advance_inner(q, inserts)? {
            Advance::Asserted { certificate, universe } => Ok(Err((certificate, universe))),
            Advance::Proceed => Ok(Ok(self.absorb(deletes)?)),
        }
    }

    fn guard_ready(&self) -> Result<()> {
        if self.asserted {
            return Err(Error::InvalidState("semi-dynamic wrapper already asserted".into()));
        }
        if self.pending.is_some() {
            return Err(Error::InvalidState("previous step not absorbed".into()));
        }
        Ok(())
    }

    fn check_fresh(&self, cols: &[usize]) -> Result<()> {
        for &c in cols {
            if c >= self.dim_n {
                return Err(Error::BadInput(format!("column {c} out of range")));
            }
            if self.deleted_step[c].is_some() {
                return Err(Error::ContractViolation(format!(
                    "column {c} re-inserted after deletion"
                )));
            }
        }
        Ok(())
    }

    fn apply_deletions(&mut self, deletes: &[usize]) -> Result<Vec<(usize, Vec<f64>)>> {
        if deletes.is_empty() {
            return Ok(Vec::new());
        }
        let mut set = std::collections::HashSet::new();
        for &c in deletes {
            if c >= self.dim_n || !self.alive[c] {
                return Err(Error::ContractViolation(format!(
                    "deletion of column {c} which is not alive"
                )));
            }
            if !set.insert(c) {
                return Err(Error::ContractViolation(format!("column {c} deleted twice")));
            }
            self.alive[c] = false;
            self.deleted_step[c] = Some(self.step);
        }
        self.global_events.push(deletes.to_vec());
        let total_events = self.global_events.len();

        let mut out = Vec::new();
        for bar_idx in 0..self.bars.len() {
            let (birth_offset, out_ordinal, event_count) = {
                let b = &self.bars[bar_idx];
                (b.birth_offset, b.out_ordinal, b.stars.len())
            };
            if birth_offset >= total_events {
                continue; // born this step; the event predates nothing
            }
            let a = total_events - birth_offset;
            debug_assert_eq!(event_count + 1, a);
            // S_a covers the last f(a) events of this row.
            let (from, to) = segment_range(a);
            let mut star = vec![0.0; self.dim_n];
            let mut nonzero = false;
            let bar_row = &self.rows[out_ordinal];
            for j in from..=to {
                for &col in &self.global_events[birth_offset + j - 1] {
                    let v = bar_row[col];
                    if v != 0.0 {
                        star[col] = -v;
                        nonzero = true;
                    }
                }
            }
            if nonzero {
                let ordinal = self.push_row(star.clone());
                self.bars[bar_idx].stars.push(Some(ordinal));
                out.push((ordinal, star));
            } else {
                self.bars[bar_idx].stars.push(None);
            }
        }
        Ok(out)
    }

    fn append_bars(&mut self, inner_rows: Vec<(usize, Vec<f64>)>) -> Vec<(usize, Vec<f64>)> {
        let mut out = Vec::new();
        for (inner_ord, row) in inner_rows {
            debug_assert_eq!(inner_ord, self.bars.len());
            let bar: Vec<f64> = row
                .iter()
                .enumerate()
                .map(|(c, &v)| if self.alive[c] { v * self.scale } else { 0.0 })
                .collect();
            let ordinal = self.push_row(bar.clone());
            self.bars.push(BarRow {
                out_ordinal: ordinal,
                birth_offset: self.global_events.len(),
                stars: Vec::new(),
            });
            out.push((ordinal, bar));
        }
        out
    }

    fn push_row(&mut self, row: Vec<f64>) -> usize {
        for (c, v) in row.iter().enumerate() {
            self.col_norm_sq[c] += v * v;
        }
        self.rows.push(row);
        self.rows.len() - 1
    }
}
