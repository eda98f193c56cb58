//! The insertion wrapper: runs one average engine per binary-counter
//! instance and combines their factorizations. Supports inserting new
//! columns at any step; the output satisfies `ℓ'_t R'_t = q_t|_{U_t}` with
//! `‖R'_t‖_F ≤ √|U_t|` after the built-in `1/√log₂(2N)` rescale.

use super::layout::CounterLayout;
use super::{AverageEngine, DualCertificate, EngineFactory, EngineStep};
use crate::{Error, Result};

/// Outcome of one insertion-wrapper step. Ordinals index the wrapper's
/// cumulative output rows.
#[derive(Debug, Clone)]
pub enum WrapperStep {
    Extended {
        /// `(ordinal, row)` pairs appended this step; rows are dense over
        /// the global columns and already carry the wrapper's rescale.
        new_rows: Vec<(usize, Vec<f64>)>,
        left: Vec<(usize, f64)>,
    },
    Asserted {
        certificate: DualCertificate,
        /// Global columns of the instance whose engine asserted.
        universe: Vec<usize>,
    },
}

struct EngineSlot {
    engine: Option<Box<dyn AverageEngine>>,
    universe: Vec<usize>,
    /// Wrapper ordinals of this engine's rows, indexed by engine ordinal.
    row_map: Vec<usize>,
}

/// See the module docs. One wrapper instance is strictly sequential.
pub struct InsertionWrapper<F: EngineFactory> {
    factory: F,
    dim_n: usize,
    layout: CounterLayout,
    slots: Vec<EngineSlot>,
    /// All output rows (instance rows embedded into global columns and
    /// scaled), in emission order.
    rows: Vec<Vec<f64>>,
    col_norm_sq: Vec<f64>,
    row_scale: f64,
    asserted: bool,
}

impl<F: EngineFactory> InsertionWrapper<F> {
    /// `dim_n` is the number of columns of the full matrix; the rescale
    /// factor `1/√log₂(2N)` is fixed from it.
    pub fn new(factory: F, dim_n: usize) -> Self {
        let row_scale = 1.0 / log2_2n(dim_n).sqrt();
        Self {
            factory,
            dim_n,
            layout: CounterLayout::new(),
            slots: Vec::new(),
            rows: Vec::new(),
            col_norm_sq: vec![0.0; dim_n],
            row_scale,
            asserted: false,
        }
    }

    pub fn universe_size(&self) -> usize {
        self.layout.universe_size()
    }

    pub fn layout(&self) -> &CounterLayout {
        &self.layout
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Squared `ℓ₂` norm of a column of the output right matrix.
    pub fn col_norm_sq(&self, col: usize) -> f64 {
        self.col_norm_sq[col]
    }

    pub fn frob_norm_sq(&self) -> f64 {
        self.col_norm_sq.iter().sum()
    }

    /// `‖ℓ'‖₂` cap: engine cap × `log₂(2N)`.
    pub fn left_norm_cap(&self) -> f64 {
        self.factory.left_norm_cap() * log2_2n(self.dim_n)
    }

    /// Inserts columns without feeding a row (universe setup before the
    /// stream starts). Returns the new output rows.
    pub fn insert_columns(&mut self, new_cols: &[usize]) -> Result<Vec<(usize, Vec<f64>)>> {
        self.check_active()?;
        self.validate_new_cols(new_cols)?;
        Ok(self.apply_insertions(new_cols))
    }

    /// Feeds `q_t` (dense over global columns) after inserting
    /// `new_cols`. Only entries on inserted columns are reconstructed.
    pub fn step(&mut self, q: &[f64], new_cols: &[usize]) -> Result<WrapperStep> {
        self.check_active()?;
        if q.len() != self.dim_n {
            return Err(Error::BadInput(format!(
                "row has {} entries, expected {}",
                q.len(),
                self.dim_n
            )));
        }
        self.validate_new_cols(new_cols)?;
        let mut new_rows = self.apply_insertions(new_cols);
        let mut left: Vec<(usize, f64)> = Vec::new();

        let active: Vec<usize> =
            (0..self.slots.len()).filter(|&i| self.layout.instances[i].active).collect();
        for slot_idx in active {
            let q_local: Vec<f64> =
                self.slots[slot_idx].universe.iter().map(|&c| q[c]).collect();
            let engine = self.slots[slot_idx]
                .engine
                .as_mut()
                .expect("active instance has no engine");
            match engine.step(&q_local)? {
                EngineStep::Extended { new_rows: local_rows, left: local_left } => {
                    for row in &local_rows {
                        let ordinal = self.embed_row(slot_idx, row);
                        new_rows.push((ordinal, self.rows[ordinal].clone()));
                    }
                    for (eng_ord, c) in local_left {
                        let ordinal = self.slots[slot_idx].row_map[eng_ord];
                        // Rows shrink by the rescale, coefficients grow.
                        left.push((ordinal, c / self.row_scale));
                    }
                }
                EngineStep::Asserted { certificate } => {
                    self.asserted = true;
                    return Ok(WrapperStep::Asserted {
                        certificate,
                        universe: self.slots[slot_idx].universe.clone(),
                    });
                }
            }
        }
        left.sort_unstable_by_key(|&(ord, _)| ord);
        Ok(WrapperStep::Extended { new_rows, left })
    }

    fn check_active(&self) -> Result<()> {
        if self.asserted {
            return Err(Error::InvalidState("insertion wrapper already asserted".into()));
        }
        Ok(())
    }

    fn validate_new_cols(&self, new_cols: &[usize]) -> Result<()> {
        let mut seen: std::collections::HashSet<usize> =
            self.layout.order.iter().copied().collect();
        for &c in new_cols {
            if c >= self.dim_n {
                return Err(Error::BadInput(format!("column {c} out of range")));
            }
            if !seen.insert(c) {
                return Err(Error::ContractViolation(format!(
                    "column {c} inserted twice"
                )));
            }
        }
        Ok(())
    }

    fn apply_insertions(&mut self, new_cols: &[usize]) -> Vec<(usize, Vec<f64>)> {
        let delta = self.layout.insert(new_cols);
        for &idx in &delta.deactivated {
            // Inactive instances are never executed again; their rows stay.
            self.slots[idx].engine = None;
        }
        let mut out = Vec::new();
        for &idx in &delta.created {
            let universe = self.layout.instances[idx].members.clone();
            let mut engine = self.factory.make(universe.len());
            let bootstrap = engine.bootstrap_rows();
            debug_assert_eq!(idx, self.slots.len());
            self.slots.push(EngineSlot { engine: Some(engine), universe, row_map: Vec::new() });
            for row in &bootstrap {
                let ordinal = self.embed_row(idx, row);
                out.push((ordinal, self.rows[ordinal].clone()));
            }
        }
        out
    }

    fn embed_row(&mut self, slot_idx: usize, local_row: &[f64]) -> usize {
        let universe = &self.slots[slot_idx].universe;
        debug_assert_eq!(local_row.len(), universe.len());
        let mut global = vec![0.0; self.dim_n];
        for (i, &c) in universe.iter().enumerate() {
            let v = local_row[i] * self.row_scale;
            global[c] = v;
            self.col_norm_sq[c] += v * v;
        }
        let ordinal = self.rows.len();
        self.rows.push(global);
        self.slots[slot_idx].row_map.push(ordinal);
        ordinal
    }
}

pub(super) fn log2_2n(n: usize) -> f64 {
    (2.0 * n as f64).log2()
}

#[cfg(test)]
mod tests {
    use super::super::AvgEngineFactory;
    use super::*;

    fn reconstruct(w: &InsertionWrapper<AvgEngineFactory>, left: &[(usize, f64)]) -> Vec<f64> {
        let mut out = vec![0.0; w.dim_n];
        for &(ord, c) in left {
            for (i, v) in w.rows()[ord].iter().enumerate() {
                out[i] += c * v;
            }
        }
        out
    }

    #[test]
    fn reconstructs_restricted_rows_across_insertions() {
        let n = 6;
        let mut w = InsertionWrapper::new(AvgEngineFactory { gamma: 2.0 }, n);
        w.insert_columns(&[0, 1, 2]).unwrap();
        // Row arrives while columns 3..6 are absent.
        let q = vec![1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        match w.step(&q, &[]).unwrap() {
            WrapperStep::Extended { left, .. } => {
                let rec = reconstruct(&w, &left);
                assert!((rec[0] - 1.0).abs() < 1e-6);
                assert!((rec[2] - 1.0).abs() < 1e-6);
                // Uninserted columns reconstruct to zero.
                assert!(rec[3].abs() < 1e-9 && rec[4].abs() < 1e-9);
            }
            _ => panic!("unexpected assertion"),
        }
        // Insert the rest mid-stream; the full row is now covered.
        match w.step(&q, &[3, 4, 5]).unwrap() {
            WrapperStep::Extended { left, .. } => {
                let rec = reconstruct(&w, &left);
                for i in 0..n {
                    assert!((rec[i] - q[i]).abs() < 1e-6, "col {i}: {} vs {}", rec[i], q[i]);
                }
            }
            _ => panic!("unexpected assertion"),
        }
        let sizes = w.layout().active_sizes();
        assert_eq!(sizes, vec![2, 4]);
        // Frobenius bound before considering the rescale would be
        // |U| log₂(2N); after it, |U|.
        assert!(w.frob_norm_sq() <= n as f64 + 1e-9);
    }

    #[test]
    fn rejects_duplicate_insertion() {
        let mut w = InsertionWrapper::new(AvgEngineFactory { gamma: 1.0 }, 4);
        w.insert_columns(&[0, 1]).unwrap();
        assert!(matches!(
            w.insert_columns(&[1]),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn propagates_assertion() {
        // γ too small: the engine asserts quickly on repeated large rows.
        let n = 2;
        let mut w = InsertionWrapper::new(AvgEngineFactory { gamma: 0.25 }, n);
        w.insert_columns(&[0, 1]).unwrap();
        let mut asserted = false;
        for _ in 0..6 {
            match w.step(&[4.0, 4.0], &[]) {
                Ok(WrapperStep::Asserted { certificate, universe }) => {
                    assert_eq!(universe.len(), 2);
                    assert!(certificate.sum_y < 1.0);
                    asserted = true;
                    break;
                }
                Ok(WrapperStep::Extended { .. }) => continue,
                Err(e) => panic!("{e}"),
            }
        }
        assert!(asserted);
        assert!(matches!(w.step(&[0.0, 0.0], &[]), Err(Error::InvalidState(_))));
    }
}
