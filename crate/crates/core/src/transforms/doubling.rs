//! Doubling wrappers over the bounded pipeline: guess `γ`, run until the
//! pipeline asserts, then double the guess and replay the offending
//! row into a fresh phase.
//!
//! Row model: phase-`φ` right rows are scaled by `1/√f(φ)` with
//! `f(x) = x^{1+2c}·Σ_{y≥1} y^{-(1+2c)}`, so the per-column scales sum to
//! one across phases and `‖R_t‖_{1→2} ≤ 1` holds globally.
//!
//! Column model: the row pipeline runs on the transposed stream and the
//! decision-version equivalence converts each step; phase blocks are
//! diagonal in `R`, so no rescale is needed.

use super::zones::{BoundedStep, ZonePipeline};
use super::{EngineFactory, RowArrivalFactorizer, RowId};
use crate::{Error, Result};

/// Safety cap on phase advances while replaying one row.
const MAX_PHASE_ADVANCES: usize = 256;

/// One step of a row-arrival factorizer: appended right rows and the
/// sparse left row, both keyed by stable ids.
#[derive(Debug, Clone, Default)]
pub struct RowStep {
    pub new_rows: Vec<(RowId, Vec<f64>)>,
    pub left: Vec<(RowId, f64)>,
}

/// `Σ_{y≥1} y^{-(1+2c)}`, by direct summation with an integral tail.
pub fn zeta_sum(c_exp: f64) -> f64 {
    assert!(c_exp > 0.0);
    let s = 1.0 + 2.0 * c_exp;
    let cutoff = 200_000u64;
    let head: f64 = (1..=cutoff).map(|y| (y as f64).powf(-s)).sum();
    let tail = (cutoff as f64 + 0.5).powf(1.0 - s) / (s - 1.0);
    head + tail
}

/// `f(φ) = φ^{1+2c} · ζ(1+2c)`; `Σ_φ 1/f(φ) = 1`.
pub fn phase_scale(phi: usize, c_exp: f64, zeta: f64) -> f64 {
    (phi as f64).powf(1.0 + 2.0 * c_exp) * zeta
}

#[derive(Debug, Clone)]
pub struct PhaseEvent {
    /// 1-based step at which the phase began.
    pub step: usize,
    pub phase: usize,
    pub gamma: f64,
}

/// Row-arrival doubling wrapper. `F` builds the per-phase engine factory
/// from the phase's `γ`.
pub struct DoublingRow<F: EngineFactory + Clone> {
    dim_n: usize,
    c_exp: f64,
    zeta: f64,
    make_factory: Box<dyn Fn(f64) -> F + Send + Sync>,
    gamma_initial: Option<f64>,
    phase: usize,
    gamma_phase: f64,
    pipeline: Option<ZonePipeline<F>>,
    /// Global id of each current-phase pipeline ordinal.
    phase_map: Vec<RowId>,
    next_id: RowId,
    step: usize,
    phase_log: Vec<PhaseEvent>,
}

impl<F: EngineFactory + Clone> DoublingRow<F> {
    /// `gamma_initial` overrides the default `γ^(1) = ‖q₁‖_∞`.
    pub fn new(
        dim_n: usize,
        c_exp: f64,
        gamma_initial: Option<f64>,
        make_factory: impl Fn(f64) -> F + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim_n,
            c_exp,
            zeta: zeta_sum(c_exp),
            make_factory: Box::new(make_factory),
            gamma_initial,
            phase: 0,
            gamma_phase: 0.0,
            pipeline: None,
            phase_map: Vec::new(),
            next_id: 0,
            step: 0,
            phase_log: Vec::new(),
        }
    }

    pub fn phase(&self) -> usize {
        self.phase
    }

    pub fn gamma_phase(&self) -> f64 {
        self.gamma_phase
    }

    pub fn phase_log(&self) -> &[PhaseEvent] {
        &self.phase_log
    }

    fn start_phase(&mut self, gamma: f64) -> Result<Vec<(RowId, Vec<f64>)>> {
        self.phase += 1;
        self.gamma_phase = gamma;
        self.phase_log.push(PhaseEvent { step: self.step, phase: self.phase, gamma });
        let pipeline = ZonePipeline::new((self.make_factory)(gamma), self.dim_n)?;
        self.phase_map.clear();
        let scale = 1.0 / phase_scale(self.phase, self.c_exp, self.zeta).sqrt();
        let mut out = Vec::new();
        for (ord, row) in pipeline.bootstrap_rows() {
            let id = self.alloc_id(ord);
            out.push((id, row.iter().map(|v| v * scale).collect()));
        }
        self.pipeline = Some(pipeline);
        Ok(out)
    }

    fn alloc_id(&mut self, ordinal: usize) -> RowId {
        debug_assert_eq!(ordinal, self.phase_map.len());
        let id = self.next_id;
        self.next_id += 1;
        self.phase_map.push(id);
        id
    }
}

impl<F: EngineFactory + Clone> RowArrivalFactorizer for DoublingRow<F> {
    fn dim_n(&self) -> usize {
        self.dim_n
    }

    fn left_norm_cap(&self) -> f64 {
        match &self.pipeline {
            Some(p) => {
                phase_scale(self.phase, self.c_exp, self.zeta).sqrt() * p.left_norm_cap()
            }
            None => 0.0,
        }
    }

    fn step(&mut self, q: &[f64]) -> Result<RowStep> {
        if q.len() != self.dim_n {
            return Err(Error::BadInput(format!(
                "row has {} entries, expected {}",
                q.len(),
                self.dim_n
            )));
        }
        self.step += 1;
        let mut new_rows: Vec<(RowId, Vec<f64>)> = Vec::new();
        if self.pipeline.is_none() {
            if q.iter().all(|&x| x == 0.0) {
                // No phase yet and nothing to reconstruct.
                return Ok(RowStep::default());
            }
            let gamma = self.gamma_initial.unwrap_or_else(|| {
                q.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
            });
            new_rows.extend(self.start_phase(gamma)?);
        }
        for _ in 0..MAX_PHASE_ADVANCES {
            let scale = 1.0 / phase_scale(self.phase, self.c_exp, self.zeta).sqrt();
            let outcome = self.pipeline.as_mut().unwrap().step(q)?;
            match outcome {
                BoundedStep::Extended { new_rows: rows, left } => {
                    for (ord, row) in rows {
                        let id = self.alloc_id(ord);
                        new_rows.push((id, row.iter().map(|v| v * scale).collect()));
                    }
                    let left = left
                        .into_iter()
                        .map(|(ord, c)| (self.phase_map[ord], c / scale))
                        .collect();
                    return Ok(RowStep { new_rows, left });
                }
                BoundedStep::Asserted { .. } => {
                    // γ₂(Q_t) > γ^(φ): double the guess and replay q_t
                    // into the fresh phase.
                    let gamma = self.gamma_phase * 2.0;
                    new_rows.extend(self.start_phase(gamma)?);
                }
            }
        }
        Err(Error::PipelineError(format!(
            "row at step {} forced more than {MAX_PHASE_ADVANCES} phase advances",
            self.step
        )))
    }
}

/// One step of the column-arrival factorizer: new columns appended to the
/// left matrix (each of length `m`) and the sparse right column `r_t` with
/// `‖r_t‖₂ ≤ 1`, satisfying `L_t r_t = a_t`.
#[derive(Debug, Clone, Default)]
pub struct ColumnStep {
    pub new_left_cols: Vec<(RowId, Vec<f64>)>,
    pub right_col: Vec<(RowId, f64)>,
}

/// Column-arrival doubling wrapper: runs the row pipeline on the
/// transposed stream and converts via the decision-version equivalence
/// (`L = Cγ·R_pipeᵀ`, `r_t = ℓ_tᵀ/(Cγ)`).
pub struct DoublingColumn<F: EngineFactory + Clone> {
    dim_m: usize,
    make_factory: Box<dyn Fn(f64) -> F + Send + Sync>,
    gamma_initial: Option<f64>,
    phase: usize,
    gamma_phase: f64,
    pipeline: Option<ZonePipeline<F>>,
    phase_map: Vec<RowId>,
    next_id: RowId,
    step: usize,
    phase_log: Vec<PhaseEvent>,
}

impl<F: EngineFactory + Clone> DoublingColumn<F> {
    /// `dim_m` is the length of arriving columns.
    pub fn new(
        dim_m: usize,
        gamma_initial: Option<f64>,
        make_factory: impl Fn(f64) -> F + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim_m,
            make_factory: Box::new(make_factory),
            gamma_initial,
            phase: 0,
            gamma_phase: 0.0,
            pipeline: None,
            phase_map: Vec::new(),
            next_id: 0,
            step: 0,
            phase_log: Vec::new(),
        }
    }

    pub fn dim_m(&self) -> usize {
        self.dim_m
    }

    pub fn phase(&self) -> usize {
        self.phase
    }

    pub fn phase_log(&self) -> &[PhaseEvent] {
        &self.phase_log
    }

    /// Conversion scale of the current phase (`Cγ^(φ)`).
    pub fn conversion_cap(&self) -> f64 {
        match &self.pipeline {
            Some(p) => p.left_norm_cap(),
            None => 0.0,
        }
    }

    /// `‖L_t‖_{2→∞}` cap: phases telescope as `Σ_ψ 4^{ψ-φ} ≤ 4/3`.
    pub fn left_matrix_row_cap(&self) -> f64 {
        (4.0 / 3.0_f64).sqrt() * self.conversion_cap()
    }

    fn start_phase(&mut self, gamma: f64) -> Result<Vec<(RowId, Vec<f64>)>> {
        self.phase += 1;
        self.gamma_phase = gamma;
        self.phase_log.push(PhaseEvent { step: self.step, phase: self.phase, gamma });
        let pipeline = ZonePipeline::new((self.make_factory)(gamma), self.dim_m)?;
        self.phase_map.clear();
        let cap = pipeline.left_norm_cap();
        let mut out = Vec::new();
        for (ord, row) in pipeline.bootstrap_rows() {
            let id = self.alloc_id(ord);
            out.push((id, row.iter().map(|v| v * cap).collect()));
        }
        self.pipeline = Some(pipeline);
        Ok(out)
    }

    fn alloc_id(&mut self, ordinal: usize) -> RowId {
        debug_assert_eq!(ordinal, self.phase_map.len());
        let id = self.next_id;
        self.next_id += 1;
        self.phase_map.push(id);
        id
    }

    pub fn step(&mut self, a: &[f64]) -> Result<ColumnStep> {
        if a.len() != self.dim_m {
            return Err(Error::BadInput(format!(
                "column has {} entries, expected {}",
                a.len(),
                self.dim_m
            )));
        }
        self.step += 1;
        let mut new_left_cols: Vec<(RowId, Vec<f64>)> = Vec::new();
        if self.pipeline.is_none() {
            if a.iter().all(|&x| x == 0.0) {
                return Ok(ColumnStep::default());
            }
            let gamma = self.gamma_initial.unwrap_or_else(|| {
                a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
            });
            new_left_cols.extend(self.start_phase(gamma)?);
        }
        for _ in 0..MAX_PHASE_ADVANCES {
            let cap = self.pipeline.as_ref().unwrap().left_norm_cap();
            let outcome = self.pipeline.as_mut().unwrap().step(a)?;
            match outcome {
                BoundedStep::Extended { new_rows, left } => {
                    for (ord, row) in new_rows {
                        let id = self.alloc_id(ord);
                        new_left_cols.push((id, row.iter().map(|v| v * cap).collect()));
                    }
                    let right_col: Vec<(RowId, f64)> =
                        left.into_iter().map(|(ord, c)| (self.phase_map[ord], c / cap)).collect();
                    debug_assert!({
                        let norm_sq: f64 = right_col.iter().map(|&(_, c)| c * c).sum();
                        norm_sq <= 1.0 + 1e-9
                    });
                    return Ok(ColumnStep { new_left_cols, right_col });
                }
                BoundedStep::Asserted { .. } => {
                    let gamma = self.gamma_phase * 2.0;
                    new_left_cols.extend(self.start_phase(gamma)?);
                }
            }
        }
        Err(Error::PipelineError(format!(
            "column at step {} forced more than {MAX_PHASE_ADVANCES} phase advances",
            self.step
        )))
    }
}
