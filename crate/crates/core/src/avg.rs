//! The online primal-dual SDP behind everything else: the `(γ, √3)`-bounded
//! online *average* factorization engine.
//!
//! Per arriving row `q_t` the engine either extends a factorization
//! `L_t R_t = Q_t` with `‖R_t‖_F ≤ √N` and `‖ℓ_t‖₂ ≤ √3·γ`, or emits a dual
//! certificate proving `γ_F(Q_tᵀ) > γ√N` (which implies `γ₂(Q_t) > γ`).
//!
//! The primal iterate is `X(y) = γ²I + 2γ√N·√(Σ y_i q_iᵀq_i)`, maintained
//! through the eigendecomposition of `W = Σ y_i q_iᵀq_i`. The dual weight
//! `y_t` of the arriving row is raised until either `X(y) ⪰ q_tᵀq_t` or
//! `tr(X(y))` hits the budget `3γ²N`; in the latter case the accumulated
//! weights witness the assertion by weak duality.

use crate::linalg::{
    dot, eigen_from_parts, gram_pinv_solve_eig, psd_factor_abs, sym_eig, EigenDecomposition,
    SymMatrix, CLAMP_TOL, DROP_TOL, RANK_TOL,
};
use crate::{Error, Result};

/// Relative tolerance of the binary search on `y_t`.
pub const BIN_SEARCH_TOL: f64 = 1e-10;
/// Relative slack under which hitting the trace budget exactly still counts
/// as Extended.
const BUDGET_TIE_TOL: f64 = 1e-9;

/// Configuration of one engine instance. The competitive ratio is hardwired
/// to `C = √3`, so the trace budget is `3γ²N`.
#[derive(Debug, Clone)]
pub struct AvgFactorConfig {
    /// The guess `γ` the engine is competing against.
    pub gamma: f64,
    /// Number of columns `N` of the (restricted) input matrix.
    pub dim_n: usize,
    /// Relative tolerance for the binary search on `y`.
    pub bin_search_tol: f64,
}

impl AvgFactorConfig {
    pub fn new(gamma: f64, dim_n: usize) -> Self {
        assert!(gamma > 0.0 && dim_n > 0);
        Self { gamma, dim_n, bin_search_tol: BIN_SEARCH_TOL }
    }

    /// The hardwired competitive ratio `C = √3`.
    pub fn comp_c() -> f64 {
        3.0_f64.sqrt()
    }

    /// `3γ²N`, the trace level at which the engine asserts.
    pub fn trace_budget(&self) -> f64 {
        3.0 * self.gamma * self.gamma * self.dim_n as f64
    }
}

/// Simplex weights witnessing `γ_F(Q_tᵀ) > γ√N` through the dual value
/// `tr(√(Σ y_i q_iᵀq_i)) = γ√N` with `Σ y_i < 1`.
#[derive(Debug, Clone)]
pub struct DualCertificate {
    /// `(1-based arrival step, y_i)` for every positive weight.
    pub weights: Vec<(usize, f64)>,
    pub sum_y: f64,
    /// `tr(√W)` at assertion time.
    pub dual_value: f64,
}

/// Outcome of feeding one row to the engine.
#[derive(Debug, Clone)]
pub enum StepOutcome {
    Extended {
        /// Rows appended to `R_t` this step (possibly none).
        new_right_rows: Vec<Vec<f64>>,
        /// Coefficients over *all* right rows held so far, in order.
        left_row: Vec<f64>,
    },
    Asserted {
        certificate: DualCertificate,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Active,
    Asserted,
}

/// State of one engine instance.
#[derive(Debug, Clone)]
pub struct AvgFactorState {
    cfg: AvgFactorConfig,
    /// `W = Σ y_i q_iᵀ q_i`, stored exactly; `X` is recomputed from it
    /// after every accepted `y_t` to prevent drift.
    w: SymMatrix,
    w_eig: EigenDecomposition,
    x: SymMatrix,
    /// `(arrival step, y_i)` for every processed row, zeros included.
    y_history: Vec<(usize, f64)>,
    /// All rows of `R_t` in arrival order, each tagged with the step that
    /// appended it (step 0 for the initial rows).
    right_rows: Vec<(usize, Vec<f64>)>,
    /// Rows seen so far, kept for certificate verification.
    seen_rows: Vec<Vec<f64>>,
    step_count: usize,
    status: Status,
}

/// Initializes the engine: `W = 0`, `X₀ = γ²I`, and `R₀` the symmetric
/// square root of `X₀/(3γ²) = I/3`, i.e. `N` rows `e_i/√3`.
pub fn init(cfg: AvgFactorConfig) -> AvgFactorState {
    let n = cfg.dim_n;
    let w = SymMatrix::zeros(n);
    let w_eig = sym_eig(&w).expect("zero matrix eigendecomposition");
    let x = SymMatrix::scaled_identity(n, cfg.gamma * cfg.gamma);
    let inv_sqrt3 = 1.0 / 3.0_f64.sqrt();
    let right_rows = (0..n)
        .map(|i| {
            let mut r = vec![0.0; n];
            r[i] = inv_sqrt3;
            (0, r)
        })
        .collect();
    AvgFactorState {
        cfg,
        w,
        w_eig,
        x,
        y_history: Vec::new(),
        right_rows,
        seen_rows: Vec::new(),
        step_count: 0,
        status: Status::Active,
    }
}

/// Threshold below which eigenvalues of `W` count as zero: the Jacobi
/// sweep resolves the spectrum to about `1e-12 * ‖W‖_F`.
fn value_cut(eig: &EigenDecomposition) -> f64 {
    let frob = eig.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    1e-12 * (1.0 + frob)
}

impl AvgFactorState {
    pub fn config(&self) -> &AvgFactorConfig {
        &self.cfg
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn x_matrix(&self) -> &SymMatrix {
        &self.x
    }

    pub fn trace_x(&self) -> f64 {
        self.x.trace()
    }

    pub fn right_rows(&self) -> &[(usize, Vec<f64>)] {
        &self.right_rows
    }

    pub fn y_history(&self) -> &[(usize, f64)] {
        &self.y_history
    }

    pub fn seen_rows(&self) -> &[Vec<f64>] {
        &self.seen_rows
    }

    /// Eigenvalues of `X(y)` in the shared eigenbasis of `W`:
    /// `x_k = γ² + 2γ√N·√max(μ_k, 0)`. Eigenvalues below `cut` are treated
    /// as exact zeros; the square root otherwise amplifies eigensolver
    /// noise on the null space of `W` to its square root.
    fn x_value(&self, mu: f64, cut: f64) -> f64 {
        let g = self.cfg.gamma;
        let mu = if mu <= cut { 0.0 } else { mu };
        g * g + 2.0 * g * (self.cfg.dim_n as f64).sqrt() * mu.sqrt()
    }

    fn margin_of(&self, w_eig: &EigenDecomposition, q: &[f64]) -> f64 {
        let cut = value_cut(w_eig);
        let coords = w_eig.coords(q);
        coords
            .iter()
            .zip(w_eig.values())
            .map(|(c, &mu)| c * c / self.x_value(mu, cut))
            .sum()
    }

    fn trace_of(&self, w_eig: &EigenDecomposition) -> f64 {
        let cut = value_cut(w_eig);
        w_eig.values().iter().map(|&mu| self.x_value(mu, cut)).sum()
    }

    fn trial_eig(&self, q: &[f64], y: f64) -> Result<EigenDecomposition> {
        let mut w = self.w.clone();
        w.add_scaled_outer(q, y);
        sym_eig(&w)
    }

    /// Feeds the next row. Errors: `InvalidState` after an assertion,
    /// `BadInput` on malformed rows.
    pub fn step(&mut self, q: &[f64]) -> Result<StepOutcome> {
        if self.status != Status::Active {
            return Err(Error::InvalidState("step called after assertion".into()));
        }
        if q.len() != self.cfg.dim_n {
            return Err(Error::BadInput(format!(
                "row has {} entries, expected {}",
                q.len(),
                self.cfg.dim_n
            )));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::BadInput("non-finite row entry".into()));
        }
        self.step_count += 1;
        let t = self.step_count;
        self.seen_rows.push(q.to_vec());

        let margin0 = self.margin_of(&self.w_eig, q);
        if margin0 <= 1.0 {
            // X already dominates q_tᵀq_t: y_t = 0, no new rows.
            self.y_history.push((t, 0.0));
            let left_row = self.left_row(q)?;
            return Ok(StepOutcome::Extended { new_right_rows: Vec::new(), left_row });
        }

        let budget = self.cfg.trace_budget();
        let (y_dom, eig_dom) = self.search_min_dominating_y(q)?;
        let trace_dom = self.trace_of(&eig_dom);
        if trace_dom <= budget * (1.0 + BUDGET_TIE_TOL) {
            // Dominance reached within budget; ties at the boundary count
            // as Extended since assertion is only for failed dominance.
            return self.accept(t, q, y_dom, eig_dom);
        }

        // The budget binds first: raise y_t exactly to the budget and
        // assert, certified by the accumulated dual weights.
        let (y_budget, eig_budget) = self.search_budget_y(q, budget)?;
        let final_margin = self.margin_of(&eig_budget, q);
        if final_margin <= 1.0 {
            return Err(Error::NumericalFailure(format!(
                "budget path reached dominance (margin {final_margin}); search inconsistent"
            )));
        }
        self.y_history.push((t, y_budget));
        self.w.add_scaled_outer(q, y_budget);
        self.w_eig = eig_budget;
        let cut = value_cut(&self.w_eig);
        self.x = self.w_eig.spectral_map(|mu| self.x_value(mu, cut));
        self.status = Status::Asserted;

        let dual_value: f64 = self.w_eig.values().iter().map(|&mu| mu.max(0.0).sqrt()).sum();
        let weights: Vec<(usize, f64)> =
            self.y_history.iter().copied().filter(|&(_, y)| y > 0.0).collect();
        let sum_y: f64 = weights.iter().map(|&(_, y)| y).sum();
        let certificate = DualCertificate { weights, sum_y, dual_value };
        // Every emitted certificate is re-verified numerically; a failure
        // here means the binary search left the dual value off target.
        if !verify_certificate(&certificate, &self.seen_rows, self.cfg.gamma, self.cfg.dim_n) {
            return Err(Error::NumericalFailure(format!(
                "dual certificate failed verification: sum_y {sum_y}, value {dual_value}, target {}",
                self.cfg.gamma * (self.cfg.dim_n as f64).sqrt()
            )));
        }
        Ok(StepOutcome::Asserted { certificate })
    }

    /// Smallest `y` worth distinguishing from zero: the spectral mass
    /// `y‖q‖²` it adds to `W` must clear the eigensolver's noise floor by
    /// a wide margin, or the square root of the new tiny eigenvalue
    /// wobbles across steps and the increments `X_t - X_{t-1}` pick up
    /// spurious negative parts.
    fn y_floor(&self, q: &[f64]) -> f64 {
        let q_norm_sq: f64 = q.iter().map(|x| x * x).sum();
        let frob = self.w_eig.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        1e-8 * (1.0 + frob) / q_norm_sq
    }

    /// Minimal `y ≥ y_floor` with `margin(y) ≤ 1`, by doubling and then
    /// bisecting to relative width `bin_search_tol`. Valid because the
    /// margin is non-increasing in `y` (square-root monotonicity), which is
    /// also asserted on the evaluated points.
    fn search_min_dominating_y(&self, q: &[f64]) -> Result<(f64, EigenDecomposition)> {
        let mut lo = 0.0;
        let mut margin_lo = f64::INFINITY;
        let mut hi = self.y_floor(q);
        let mut first = true;
        let mut eig_hi = loop {
            let eig = self.trial_eig(q, hi)?;
            let m = self.margin_of(&eig, q);
            if m > margin_lo + 1e-9 {
                return Err(Error::NumericalFailure("dominance margin increased along y".into()));
            }
            if m <= 1.0 {
                if first {
                    // Already dominated at the floor; do not refine below
                    // it, the overshoot is within the trace tolerance.
                    return Ok((hi, eig));
                }
                break eig;
            }
            first = false;
            lo = hi;
            margin_lo = m;
            hi *= 2.0;
            if hi > 1e18 {
                return Err(Error::NumericalFailure("dominating y bracket overflow".into()));
            }
        };
        while hi - lo > self.cfg.bin_search_tol * hi {
            let mid = 0.5 * (lo + hi);
            let eig = self.trial_eig(q, mid)?;
            let m = self.margin_of(&eig, q);
            if m > margin_lo + 1e-9 {
                return Err(Error::NumericalFailure("dominance margin increased along y".into()));
            }
            if m <= 1.0 {
                hi = mid;
                eig_hi = eig;
            } else {
                lo = mid;
                margin_lo = m;
            }
        }
        Ok((hi, eig_hi))
    }

    /// The `y` at which `tr(X(y))` meets the budget, bisected until the
    /// trace matches to relative 1e-9 (the dual value inherits the
    /// precision of this stop).
    fn search_budget_y(&self, q: &[f64], budget: f64) -> Result<(f64, EigenDecomposition)> {
        let mut lo = 0.0;
        let mut hi = 1e-12;
        loop {
            let eig = self.trial_eig(q, hi)?;
            if self.trace_of(&eig) >= budget {
                break;
            }
            lo = hi;
            hi *= 2.0;
            if hi > 1e18 {
                return Err(Error::NumericalFailure("budget y bracket overflow".into()));
            }
        }
        let mut best = None;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let eig = self.trial_eig(q, mid)?;
            let tr = self.trace_of(&eig);
            if (tr - budget).abs() <= 1e-9 * budget {
                best = Some((mid, eig));
                break;
            }
            if tr >= budget {
                hi = mid;
                best = Some((mid, eig));
            } else {
                lo = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        best.ok_or_else(|| Error::NumericalFailure("budget bisection did not settle".into()))
    }

    fn accept(
        &mut self,
        t: usize,
        q: &[f64],
        y: f64,
        eig_new: EigenDecomposition,
    ) -> Result<StepOutcome> {
        let x_old = self.x.clone();
        self.y_history.push((t, y));
        self.w.add_scaled_outer(q, y);
        self.w_eig = eig_new;
        let cut = value_cut(&self.w_eig);
        self.x = self.w_eig.spectral_map(|mu| self.x_value(mu, cut));

        // Increment in Gram scale: M with MᵀM = (X_t - X_{t-1}) / (3γ²).
        let c2g2 = 3.0 * self.cfg.gamma * self.cfg.gamma;
        let delta = self.x.sub(&x_old).scaled(1.0 / c2g2);
        // The increment's rounding noise scales with X and with the
        // square-root amplification at the spectral cut, not with the
        // (possibly much smaller) difference itself.
        let g = self.cfg.gamma;
        let bound_x = 8.0 * g * (self.cfg.dim_n as f64).sqrt() * cut.sqrt()
            + CLAMP_TOL * (1.0 + self.x.max_abs());
        let new_right_rows = psd_factor_abs(&delta, bound_x / c2g2, DROP_TOL)?;
        for r in &new_right_rows {
            self.right_rows.push((t, r.clone()));
        }
        let left_row = self.left_row(q)?;
        Ok(StepOutcome::Extended { new_right_rows, left_row })
    }

    /// `ℓ_t` from the Gram matrix `X_t/(3γ²)` rather than from `R_t`:
    /// `v = (RᵀR)⁺qᵀ` and `ℓ = (R v)ᵀ`, so the solve cost is independent of
    /// the number of accumulated right rows.
    fn left_row(&self, q: &[f64]) -> Result<Vec<f64>> {
        let c2g2 = 3.0 * self.cfg.gamma * self.cfg.gamma;
        // Gram eigenvalues are x_k/(3γ²) in the shared eigenbasis; the map
        // is increasing in μ so the ascending order is preserved.
        let n = self.cfg.dim_n;
        let cut = value_cut(&self.w_eig);
        let values: Vec<f64> =
            self.w_eig.values().iter().map(|&mu| self.x_value(mu, cut) / c2g2).collect();
        let mut vectors = vec![0.0; n * n];
        for k in 0..n {
            vectors[k * n..(k + 1) * n].copy_from_slice(self.w_eig.vector(k));
        }
        let gram_eig = eigen_from_parts(values, vectors);
        let sol = gram_pinv_solve_eig(&gram_eig, q, RANK_TOL)?;
        let ell: Vec<f64> = self.right_rows.iter().map(|(_, r)| dot(r, &sol.coeff)).collect();
        debug_assert!({
            let lnorm_sq: f64 = ell.iter().map(|x| x * x).sum();
            (lnorm_sq - sol.left_norm_sq).abs() <= 1e-6 * (1.0 + lnorm_sq)
        });
        Ok(ell)
    }
}

/// `q·x⁻¹·qᵀ` for positive definite `x`; `X ⪰ qᵀq` iff the result is at
/// most 1. Errors with `NotPd` when `x` has a non-positive eigenvalue.
pub fn dominance_margin(x: &SymMatrix, q: &[f64]) -> Result<f64> {
    let eig = sym_eig(x)?;
    if eig.min_value() <= 0.0 {
        return Err(Error::NotPd(eig.min_value()));
    }
    let coords = eig.coords(q);
    Ok(coords.iter().zip(eig.values()).map(|(c, &v)| c * c / v).sum())
}

/// Recomputes the dual value from the referenced rows and checks the
/// certificate: `Σy < 1` and `tr(√(Σ y_i q_iᵀq_i)) = γ√N` to relative 1e-6.
/// A passing certificate proves `γ_F(Q_tᵀ) > γ√N` by weak duality.
pub fn verify_certificate(
    cert: &DualCertificate,
    rows: &[Vec<f64>],
    gamma: f64,
    dim_n: usize,
) -> bool {
    if cert.weights.iter().any(|&(_, y)| y < 0.0) {
        return false;
    }
    let sum_y: f64 = cert.weights.iter().map(|&(_, y)| y).sum();
    if sum_y >= 1.0 {
        return false;
    }
    let value = match certificate_dual_value(&cert.weights, rows, dim_n) {
        Some(v) => v,
        None => return false,
    };
    let target = gamma * (dim_n as f64).sqrt();
    (value - target).abs() <= 1e-6 * target
}

/// `tr(√(Σ y_i q_iᵀ q_i))` for 1-based step-indexed weights over `rows`.
pub fn certificate_dual_value(
    weights: &[(usize, f64)],
    rows: &[Vec<f64>],
    dim_n: usize,
) -> Option<f64> {
    let mut w = SymMatrix::zeros(dim_n);
    for &(step, y) in weights {
        if step == 0 || step > rows.len() || rows[step - 1].len() != dim_n {
            return None;
        }
        w.add_scaled_outer(&rows[step - 1], y);
    }
    let eig = sym_eig(&w).ok()?;
    Some(eig.values().iter().map(|&mu| mu.max(0.0).sqrt()).sum())
}

/// Smallest eigenvalue, shared by the monotonicity checks in tests.
pub fn min_eig(m: &SymMatrix) -> Result<f64> {
    Ok(sym_eig(m)?.min_value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2 as vnorm;

    fn reconstruct(state: &AvgFactorState, left: &[f64]) -> Vec<f64> {
        let n = state.config().dim_n;
        let mut out = vec![0.0; n];
        for ((_, r), &c) in state.right_rows().iter().zip(left) {
            for i in 0..n {
                out[i] += c * r[i];
            }
        }
        out
    }

    #[test]
    fn init_rows_are_scaled_basis() {
        let st = init(AvgFactorConfig::new(1.0, 2));
        let rows = st.right_rows();
        assert_eq!(rows.len(), 2);
        let s = 1.0 / 3.0_f64.sqrt();
        assert!((rows[0].1[0] - s).abs() < 1e-15 && rows[0].1[1] == 0.0);
        assert!((rows[1].1[1] - s).abs() < 1e-15 && rows[1].1[0] == 0.0);
        assert!((st.trace_x() - 2.0).abs() < 1e-12);
        // tr(X₀) = γ²N = budget / 3.
        assert!((st.trace_x() - st.config().trace_budget() / 3.0).abs() < 1e-12);
    }

    #[test]
    fn init_single_column() {
        let st = init(AvgFactorConfig::new(2.0, 1));
        assert_eq!(st.right_rows().len(), 1);
        assert!((st.right_rows()[0].1[0] - 1.0 / 3.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn step_already_dominated() {
        let mut st = init(AvgFactorConfig::new(1.0, 2));
        let out = st.step(&[1.0, 0.0]).unwrap();
        match out {
            StepOutcome::Extended { new_right_rows, left_row } => {
                assert!(new_right_rows.is_empty());
                assert!((vnorm(&left_row) - 3.0_f64.sqrt()).abs() < 1e-9);
                let rec = reconstruct(&st, &left_row);
                assert!((rec[0] - 1.0).abs() < 1e-9 && rec[1].abs() < 1e-9);
            }
            _ => panic!("expected Extended"),
        }
    }

    // The worked closed-form trace: γ=1, N=2, q=(2,0).
    #[test]
    fn step_closed_form_rank_one() {
        let mut st = init(AvgFactorConfig::new(1.0, 2));
        let out = st.step(&[2.0, 0.0]).unwrap();
        let (rows, left) = match out {
            StepOutcome::Extended { new_right_rows, left_row } => (new_right_rows, left_row),
            _ => panic!("expected Extended"),
        };
        // y₁ solves 4/(1+4√2·√y) = 1, i.e. y = 9/32.
        assert!((st.y_history()[0].1 - 9.0 / 32.0).abs() < 1e-9);
        // X₁ = diag(4,1), trace 5 ≤ 6.
        assert!((st.x_matrix().get(0, 0) - 4.0).abs() < 1e-9);
        assert!((st.x_matrix().get(1, 1) - 1.0).abs() < 1e-9);
        assert!(st.x_matrix().get(0, 1).abs() < 1e-9);
        assert!((st.trace_x() - 5.0).abs() < 1e-9);
        // One new right row (±1, 0) and ‖ℓ‖² = 3, exactly at the √3·γ cap.
        assert_eq!(rows.len(), 1);
        assert!((rows[0][0].abs() - 1.0).abs() < 1e-9);
        assert!(rows[0][1].abs() < 1e-9);
        let lnorm_sq: f64 = left.iter().map(|x| x * x).sum();
        assert!((lnorm_sq - 3.0).abs() < 1e-9);
        let rec = reconstruct(&st, &left);
        assert!((rec[0] - 2.0).abs() < 1e-9 && rec[1].abs() < 1e-9);
    }

    // Trace budget binds before dominance on the second row: Σy = 10/32 and
    // dual value √2.
    #[test]
    fn assertion_with_verified_certificate() {
        let mut st = init(AvgFactorConfig::new(1.0, 2));
        st.step(&[2.0, 0.0]).unwrap();
        let out = st.step(&[0.0, 2.0]).unwrap();
        let cert = match out {
            StepOutcome::Asserted { certificate } => certificate,
            _ => panic!("expected Asserted"),
        };
        assert_eq!(st.status(), Status::Asserted);
        assert!(cert.sum_y < 1.0);
        assert!((cert.sum_y - 10.0 / 32.0).abs() < 1e-8, "sum_y {}", cert.sum_y);
        assert!((cert.dual_value - 2.0_f64.sqrt()).abs() < 1e-6 * 2.0_f64.sqrt());
        assert!(verify_certificate(&cert, st.seen_rows(), 1.0, 2));
        // Further steps are rejected.
        assert!(matches!(st.step(&[1.0, 1.0]), Err(Error::InvalidState(_))));
    }

    #[test]
    fn zero_weights_do_not_verify() {
        let cert = DualCertificate { weights: vec![], sum_y: 0.0, dual_value: 0.0 };
        assert!(!verify_certificate(&cert, &[vec![1.0, 0.0]], 1.0, 2));
    }

    // Equality-case arithmetic of the dual value: uniform weights on the
    // identity rows give tr(√(I/N)) = √N.
    #[test]
    fn dual_value_uniform_identity() {
        let n = 4;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut r = vec![0.0; n];
                r[i] = 1.0;
                r
            })
            .collect();
        let weights: Vec<(usize, f64)> = (1..=n).map(|t| (t, 1.0 / n as f64)).collect();
        let v = certificate_dual_value(&weights, &rows, n).unwrap();
        assert!((v - (n as f64).sqrt()).abs() < 1e-12);
        // Σy = 1 exactly, so the certificate itself must be rejected.
        let cert = DualCertificate { weights, sum_y: 1.0, dual_value: v };
        assert!(!verify_certificate(&cert, &rows, 1.0, n));
    }

    #[test]
    fn dominance_margin_examples() {
        let m = dominance_margin(&SymMatrix::identity(2), &[1.0, 0.0]).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
        let m = dominance_margin(&SymMatrix::from_diag(&[4.0, 1.0]), &[2.0, 0.0]).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
        let m = dominance_margin(&SymMatrix::identity(2), &[2.0, 0.0]).unwrap();
        assert!((m - 4.0).abs() < 1e-12);
        let res = dominance_margin(&SymMatrix::from_diag(&[1.0, 0.0]), &[1.0, 0.0]);
        assert!(matches!(res, Err(Error::NotPd(_))));
    }

    #[test]
    fn rejects_bad_input() {
        let mut st = init(AvgFactorConfig::new(1.0, 2));
        assert!(matches!(st.step(&[f64::NAN, 0.0]), Err(Error::BadInput(_))));
        assert!(matches!(st.step(&[1.0]), Err(Error::BadInput(_))));
    }

    // Invariants along short random Boolean streams: dominance after each
    // Extended step, trace budget, X-monotonicity, reconstruction, and the
    // Frobenius identity ‖R_t‖_F² = tr(X_t)/(3γ²) ≤ N.
    #[test]
    fn invariants_random_boolean_stream() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for trial in 0..10 {
            let n = 4 + (trial % 3);
            let gamma = 1.5;
            let mut st = init(AvgFactorConfig::new(gamma, n));
            let mut x_prev = st.x_matrix().clone();
            for _ in 0..8 {
                let q: Vec<f64> =
                    (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
                match st.step(&q) {
                    Ok(StepOutcome::Extended { left_row, .. }) => {
                        let margin = dominance_margin(st.x_matrix(), &q).unwrap();
                        assert!(margin <= 1.0 + 1e-6, "margin {margin}");
                        assert!(st.trace_x() <= st.config().trace_budget() + 1e-6);
                        let diff = st.x_matrix().sub(&x_prev);
                        assert!(min_eig(&diff).unwrap() >= -1e-8);
                        x_prev = st.x_matrix().clone();
                        let rec = reconstruct(&st, &left_row);
                        let qmax = q.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
                        for i in 0..n {
                            assert!((rec[i] - q[i]).abs() <= 1e-6 * (1.0 + qmax));
                        }
                        let frob_sq: f64 = st
                            .right_rows()
                            .iter()
                            .map(|(_, r)| r.iter().map(|x| x * x).sum::<f64>())
                            .sum();
                        let want = st.trace_x() / (3.0 * gamma * gamma);
                        assert!((frob_sq - want).abs() <= 1e-6 * (1.0 + want));
                        assert!(frob_sq <= n as f64 + 1e-6);
                    }
                    Ok(StepOutcome::Asserted { certificate }) => {
                        assert!(verify_certificate(&certificate, st.seen_rows(), gamma, n));
                        break;
                    }
                    Err(e) => panic!("step failed: {e}"),
                }
            }
        }
    }
}
