//! Online discrepancy minimization: the column-arrival factorizer feeds a
//! self-balancing walk that picks signs keeping the running sum
//! `u_t = Σ x_i r_i` subgaussian in every direction, conditional on the
//! high-probability event `|⟨w,v⟩| ≤ c`. The prefix identity
//! `Σ x_i a_i = L_t(Σ x_i r_i)` converts the walk's guarantee into a
//! discrepancy bound on the actual columns.

use crate::rng::{self, SeededRng};
use crate::transforms::{ColumnStep, DoublingColumn, EngineFactory, RowId};
use crate::{Error, Result};
use std::collections::HashMap;

/// Default walk scale `c = 30·ln(4·N_coords·T)`; `n_coords` is an upper
/// bound on the number of walk coordinates ever touched.
pub fn default_walk_scale(n_coords: usize, stream_len: usize) -> f64 {
    30.0 * (4.0 * (n_coords.max(1) as f64) * (stream_len.max(1) as f64)).ln()
}

/// The self-balancing walk over a growing coordinate space. Coordinates
/// absent from `w` are zero.
#[derive(Debug, Clone)]
pub struct WalkState {
    w: HashMap<RowId, f64>,
    c_param: f64,
    failed: bool,
}

impl WalkState {
    pub fn new(c_param: f64) -> Self {
        assert!(c_param > 0.0);
        Self { w: HashMap::new(), c_param, failed: false }
    }

    pub fn c_param(&self) -> f64 {
        self.c_param
    }

    pub fn failed(&self) -> bool {
        self.failed
    }

    pub fn coordinate(&self, id: RowId) -> f64 {
        self.w.get(&id).copied().unwrap_or(0.0)
    }

    pub fn coordinates(&self) -> &HashMap<RowId, f64> {
        &self.w
    }

    /// One step: with `d = ⟨w,v⟩`, returns `+1` with probability
    /// `1/2 - d/(2c)` (clamped), then updates `w += sign·v`. If `|d| > c`
    /// before the draw, the walk enters the failed state permanently (the
    /// low-probability bad event) and the step errors.
    pub fn sign(&mut self, v: &[(RowId, f64)], rng: &mut SeededRng) -> Result<i8> {
        if self.failed {
            return Err(Error::WalkFailed(f64::NAN, self.c_param));
        }
        let norm_sq: f64 = v.iter().map(|&(_, x)| x * x).sum();
        if norm_sq > 1.0 + 1e-9 {
            return Err(Error::BadInput(format!("walk input norm {} exceeds 1", norm_sq.sqrt())));
        }
        let dot: f64 = v.iter().map(|&(id, x)| x * self.coordinate(id)).sum();
        if dot.abs() > self.c_param {
            self.failed = true;
            return Err(Error::WalkFailed(dot.abs(), self.c_param));
        }
        let p = (0.5 - dot / (2.0 * self.c_param)).clamp(0.0, 1.0);
        let sign: i8 = if rng::uniform(rng) < p { 1 } else { -1 };
        for &(id, x) in v {
            *self.w.entry(id).or_insert(0.0) += sign as f64 * x;
        }
        Ok(sign)
    }
}

/// Record of one discrepancy run.
#[derive(Debug, Clone, Default)]
pub struct DiscRun {
    pub signs: Vec<i8>,
    /// `‖x₁a₁ + … + x_t a_t‖_∞` per step.
    pub prefix_inf: Vec<f64>,
    pub max_prefix_inf: f64,
}

/// The composed pipeline: column-arrival factorizer plus walk, checking
/// the prefix identity at every step.
pub struct DiscPipeline<F: EngineFactory + Clone> {
    factorizer: DoublingColumn<F>,
    walk: WalkState,
    left_cols: HashMap<RowId, Vec<f64>>,
    prefix_direct: Vec<f64>,
    run: DiscRun,
}

impl<F: EngineFactory + Clone> DiscPipeline<F> {
    pub fn new(factorizer: DoublingColumn<F>, walk_scale: f64) -> Self {
        let m = factorizer.dim_m();
        Self {
            factorizer,
            walk: WalkState::new(walk_scale),
            left_cols: HashMap::new(),
            prefix_direct: vec![0.0; m],
            run: DiscRun::default(),
        }
    }

    pub fn run(&self) -> &DiscRun {
        &self.run
    }

    pub fn walk(&self) -> &WalkState {
        &self.walk
    }

    pub fn phase_count(&self) -> usize {
        self.factorizer.phase()
    }

    /// Feeds one column: factorize to `r_t`, draw the sign, update both
    /// the direct prefix sum and the walk, and check that `L_t·w` agrees
    /// with the direct sum to 1e-6.
    pub fn step(&mut self, a: &[f64], rng: &mut SeededRng) -> Result<i8> {
        let ColumnStep { new_left_cols, right_col } = self.factorizer.step(a)?;
        for (id, col) in new_left_cols {
            self.left_cols.insert(id, col);
        }
        let sign = self.walk.sign(&right_col, rng)?;
        for (i, &x) in a.iter().enumerate() {
            self.prefix_direct[i] += sign as f64 * x;
        }

        // Prefix identity: Σ x_i a_i = L_t (Σ x_i r_i).
        let mut via_walk = vec![0.0; self.prefix_direct.len()];
        for (&id, &wv) in self.walk.coordinates() {
            if wv == 0.0 {
                continue;
            }
            let col = self.left_cols.get(&id).ok_or_else(|| {
                Error::PipelineError(format!("walk coordinate {id} has no left column"))
            })?;
            for (i, &lv) in col.iter().enumerate() {
                via_walk[i] += wv * lv;
            }
        }
        let amax = a.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        for i in 0..self.prefix_direct.len() {
            let err = (via_walk[i] - self.prefix_direct[i]).abs();
            if err > 1e-6 * (1.0 + amax) {
                return Err(Error::PipelineError(format!(
                    "prefix identity violated at row {i}: {err:e}"
                )));
            }
        }

        let inf = self.prefix_direct.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        self.run.signs.push(sign);
        self.run.prefix_inf.push(inf);
        self.run.max_prefix_inf = self.run.max_prefix_inf.max(inf);
        Ok(sign)
    }
}

/// Exact best prefix discrepancy
/// `min_{x ∈ {±1}^n} max_t ‖x₁a₁ + … + x_t a_t‖_∞` by branch-and-bound
/// enumeration. Guarded at 22 columns.
pub fn brute_prefix_disc(columns: &[Vec<f64>]) -> Result<f64> {
    let n = columns.len();
    if n > 22 {
        return Err(Error::ScaleGuard(1u128 << n, 1u128 << 22));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let m = columns[0].len();
    let mut best = f64::INFINITY;
    let mut prefix = vec![0.0; m];
    fn rec(
        columns: &[Vec<f64>],
        t: usize,
        prefix: &mut Vec<f64>,
        current_max: f64,
        best: &mut f64,
    ) {
        if current_max >= *best {
            return; // prune: prefix maxima only grow
        }
        if t == columns.len() {
            *best = current_max;
            return;
        }
        for sign in [1.0, -1.0] {
            for (i, &x) in columns[t].iter().enumerate() {
                prefix[i] += sign * x;
            }
            let inf = prefix.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            rec(columns, t + 1, prefix, current_max.max(inf), best);
            for (i, &x) in columns[t].iter().enumerate() {
                prefix[i] -= sign * x;
            }
        }
    }
    rec(columns, 0, &mut prefix, 0.0, &mut best);
    Ok(best)
}
