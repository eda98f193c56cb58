//! Dense symmetric linear algebra used by every factorization engine:
//! eigendecomposition by cyclic Jacobi rotations, PSD square roots and
//! factor extraction, and Gram-pseudoinverse solves.
//!
//! Everything here is a pure function over immutable values; matrices are
//! small (dimension a few hundred at most) and stored dense.

use crate::{Error, Result};

/// Default clamping tolerance for nearly-PSD inputs.
pub const CLAMP_TOL: f64 = 1e-9;
/// Default tolerance below which extracted factor rows are omitted.
pub const DROP_TOL: f64 = 1e-9;
/// Default relative tolerance for span membership in pseudoinverse solves.
pub const RANK_TOL: f64 = 1e-7;

/// Convergence threshold for the off-diagonal Frobenius mass in the Jacobi
/// sweep, relative to `1 + ‖A‖_F`.
const JACOBI_TOL: f64 = 1e-12;

/// A dense real symmetric matrix. Construction symmetrizes by averaging and
/// rejects non-finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    a: Vec<f64>, // row-major n*n
}

impl SymMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 || entries.len() != n * n {
            return Err(Error::BadInput(format!(
                "expected {n}x{n} = {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::BadInput("non-finite matrix entry".into()));
        }
        let mut a = entries;
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (a[i * n + j] + a[j * n + i]);
                a[i * n + j] = avg;
                a[j * n + i] = avg;
            }
        }
        Ok(Self { n, a })
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, a: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, c: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = c;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &x) in d.iter().enumerate() {
            m.a[i * d.len() + i] = x;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    /// `A += c · vᵀv` for a row vector `v`.
    pub fn add_scaled_outer(&mut self, v: &[f64], c: f64) {
        assert_eq!(v.len(), self.n);
        for i in 0..self.n {
            let ci = c * v[i];
            if ci == 0.0 {
                continue;
            }
            for j in 0..self.n {
                self.a[i * self.n + j] += ci * v[j];
            }
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.n, other.n);
        let a = self.a.iter().zip(&other.a).map(|(x, y)| x - y).collect();
        SymMatrix { n: self.n, a }
    }

    pub fn scaled(&self, c: f64) -> SymMatrix {
        SymMatrix { n: self.n, a: self.a.iter().map(|x| c * x).collect() }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn frob_norm(&self) -> f64 {
        self.a.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `A v` for a column vector `v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                let row = &self.a[i * self.n..(i + 1) * self.n];
                dot(row, v)
            })
            .collect()
    }
}

/// Eigendecomposition of a symmetric matrix: `A = V Λ Vᵀ` with eigenvalues
/// ascending and orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    n: usize,
    values: Vec<f64>,
    vectors: Vec<f64>, // column-major: column k at [k*n .. (k+1)*n]
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min_value(&self) -> f64 {
        self.values[0]
    }

    /// Eigenvector paired with `values()[k]`.
    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.n..(k + 1) * self.n]
    }

    /// Coordinates `Vᵀ q` of a vector in the eigenbasis.
    pub fn coords(&self, q: &[f64]) -> Vec<f64> {
        assert_eq!(q.len(), self.n);
        (0..self.n).map(|k| dot(self.vector(k), q)).collect()
    }

    /// `V f(Λ) Vᵀ` for a spectral map `f`.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        for k in 0..n {
            let fv = f(self.values[k]);
            if fv == 0.0 {
                continue;
            }
            let vk = self.vector(k);
            for i in 0..n {
                let fi = fv * vk[i];
                for j in i..n {
                    a[i * n + j] += fi * vk[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                a[i * n + j] = a[j * n + i];
            }
        }
        SymMatrix { n, a }
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.spectral_map(|x| x)
    }
}

/// Assembles a decomposition from raw parts; callers are responsible for
/// orthonormal columns and value ordering.
pub(crate) fn eigen_from_parts(values: Vec<f64>, vectors: Vec<f64>) -> EigenDecomposition {
    let n = values.len();
    assert_eq!(vectors.len(), n * n);
    EigenDecomposition { n, values, vectors }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Eigendecomposition by cyclic Jacobi rotations. Sweeps run until the
/// off-diagonal Frobenius mass drops below `1e-12 * (1 + ‖A‖_F)`, with an
/// iteration cap of `100 * dim^2` sweeps.
pub fn sym_eig(a: &SymMatrix) -> Result<EigenDecomposition> {
    let n = a.n;
    let mut m = a.a.clone();
    // v is column-major; starts as the identity.
    let mut v = vec![0.0; n * n];
    for k in 0..n {
        v[k * n + k] = 1.0;
    }

    let tol = JACOBI_TOL * (1.0 + a.frob_norm());
    let max_sweeps = 100 * n * n;
    let mut converged = n <= 1;
    for _ in 0..max_sweeps {
        if converged {
            break;
        }
        let off: f64 = {
            let mut s = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    let x = m[i * n + j];
                    s += 2.0 * x * x;
                }
            }
            s.sqrt()
        };
        if off <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Rows/columns p and q of the working matrix.
                for i in 0..n {
                    if i != p && i != q {
                        let aip = m[i * n + p];
                        let aiq = m[i * n + q];
                        m[i * n + p] = c * aip - s * aiq;
                        m[p * n + i] = m[i * n + p];
                        m[i * n + q] = s * aip + c * aiq;
                        m[q * n + i] = m[i * n + q];
                    }
                }
                m[p * n + p] = app - t * apq;
                m[q * n + q] = aqq + t * apq;
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;

                // Accumulate the rotation into the eigenvector columns.
                let (vp, vq) = (p * n, q * n);
                for i in 0..n {
                    let xp = v[vp + i];
                    let xq = v[vq + i];
                    v[vp + i] = c * xp - s * xq;
                    v[vq + i] = s * xp + c * xq;
                }
            }
        }
    }
    if !converged {
        // Re-check once more after the last sweep.
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let x = m[i * n + j];
                off += 2.0 * x * x;
            }
        }
        if off.sqrt() > tol {
            return Err(Error::NumericalFailure(format!(
                "Jacobi sweep cap reached with off-diagonal mass {:e}",
                off.sqrt()
            )));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].partial_cmp(&m[j * n + j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (k, &src) in order.iter().enumerate() {
        vectors[k * n..(k + 1) * n].copy_from_slice(&v[src * n..(src + 1) * n]);
    }
    Ok(EigenDecomposition { n, values, vectors })
}

fn check_nearly_psd(eig: &EigenDecomposition, scale: f64, clamp_tol: f64) -> Result<()> {
    let bound = clamp_tol * scale;
    let min = eig.min_value();
    if min < -bound {
        return Err(Error::NotPsd { min_eig: min, tol: bound });
    }
    Ok(())
}

/// Positive semidefinite square root of a nearly-PSD matrix. Eigenvalues in
/// `[-clamp_tol * (1 + ‖a‖_max), 0)` are clamped to zero; anything lower is
/// an error.
pub fn psd_sqrt(a: &SymMatrix, clamp_tol: f64) -> Result<SymMatrix> {
    let eig = sym_eig(a)?;
    check_nearly_psd(&eig, 1.0 + a.max_abs(), clamp_tol)?;
    Ok(eig.spectral_map(|x| if x > 0.0 { x.sqrt() } else { 0.0 }))
}

/// Extracts rows `M` with `MᵀM` equal to the clamped-PSD part of `d`. Rows
/// with norm below `drop_tol` are omitted, so the zero matrix yields an
/// empty list. At most `d.dim()` rows are returned.
pub fn psd_factor(d: &SymMatrix, clamp_tol: f64, drop_tol: f64) -> Result<Vec<Vec<f64>>> {
    psd_factor_abs(d, clamp_tol * (1.0 + d.max_abs()), drop_tol)
}

/// As [`psd_factor`] but with an absolute bound on admissible negative
/// eigenvalues, for callers that know the rounding scale of the operands
/// the difference was formed from.
pub fn psd_factor_abs(d: &SymMatrix, neg_bound: f64, drop_tol: f64) -> Result<Vec<Vec<f64>>> {
    let eig = sym_eig(d)?;
    let min = eig.min_value();
    if min < -neg_bound {
        return Err(Error::NotPsd { min_eig: min, tol: neg_bound });
    }
    let mut rows = Vec::new();
    for k in 0..d.n {
        let lambda = eig.values()[k];
        if lambda <= 0.0 {
            continue;
        }
        let s = lambda.sqrt();
        if s < drop_tol {
            continue;
        }
        rows.push(eig.vector(k).iter().map(|x| s * x).collect());
    }
    Ok(rows)
}

/// Result of a Gram-pseudoinverse solve.
#[derive(Debug, Clone)]
pub struct GramSolution {
    /// `v = (RᵀR)⁺ qᵀ`.
    pub coeff: Vec<f64>,
    /// `‖ℓ‖₂² = q·v` for the induced left row `ℓ = (R v)ᵀ`.
    pub left_norm_sq: f64,
}

/// Solves `v = gram⁺ qᵀ` where `gram = RᵀR`, so that the left row
/// `ℓ = (R v)ᵀ` satisfies `ℓ R = q`. Errors with `NotInSpan` when the
/// projection of `q` onto the range of `gram` leaves a residual above
/// `rank_tol * (1 + ‖q‖₂)`.
pub fn gram_pinv_solve(gram: &SymMatrix, q: &[f64], rank_tol: f64) -> Result<GramSolution> {
    let eig = sym_eig(gram)?;
    gram_pinv_solve_eig(&eig, q, rank_tol)
}

/// Same as [`gram_pinv_solve`] when the eigendecomposition of the Gram
/// matrix is already available.
pub fn gram_pinv_solve_eig(
    eig: &EigenDecomposition,
    q: &[f64],
    rank_tol: f64,
) -> Result<GramSolution> {
    let n = eig.dim();
    assert_eq!(q.len(), n);
    let lambda_max = eig.values()[n - 1].max(0.0);
    let cut = rank_tol * lambda_max.max(1.0);
    let coords = eig.coords(q);
    let mut residual_sq = 0.0;
    let mut v = vec![0.0; n];
    let mut qv = 0.0;
    for k in 0..n {
        let lambda = eig.values()[k];
        let c = coords[k];
        if lambda <= cut {
            residual_sq += c * c;
            continue;
        }
        let w = c / lambda;
        qv += c * w;
        let vk = eig.vector(k);
        for i in 0..n {
            v[i] += w * vk[i];
        }
    }
    let residual = residual_sq.sqrt();
    let bound = rank_tol * (1.0 + norm2(q));
    if residual > bound {
        return Err(Error::NotInSpan { residual, tol: bound });
    }
    Ok(GramSolution { coeff: v, left_norm_sq: qv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &SymMatrix, b: &SymMatrix) -> f64 {
        let mut m = 0.0_f64;
        for i in 0..a.dim() {
            for j in 0..a.dim() {
                m = m.max((a.get(i, j) - b.get(i, j)).abs());
            }
        }
        m
    }

    fn random_sym(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        let entries: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        SymMatrix::new(n, entries).unwrap()
    }

    fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        let mut m = SymMatrix::zeros(n);
        for _ in 0..2 * n {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            m.add_scaled_outer(&v, rng.gen_range(0.0..1.0));
        }
        m
    }

    #[test]
    fn eig_diagonal() {
        let a = SymMatrix::from_diag(&[2.0, 3.0]);
        let eig = sym_eig(&a).unwrap();
        assert!((eig.values()[0] - 2.0).abs() < 1e-12);
        assert!((eig.values()[1] - 3.0).abs() < 1e-12);
        // Eigenvectors of a diagonal matrix are the standard basis up to sign.
        assert!((eig.vector(0)[0].abs() - 1.0).abs() < 1e-12);
        assert!(eig.vector(0)[1].abs() < 1e-12);
    }

    #[test]
    fn eig_off_diagonal_pair() {
        let a = SymMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let eig = sym_eig(&a).unwrap();
        assert!((eig.values()[0] + 1.0).abs() < 1e-12);
        assert!((eig.values()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = random_sym(6, &mut rng);
            let eig = sym_eig(&a).unwrap();
            let err = max_abs_diff(&eig.reconstruct(), &a);
            assert!(err <= 1e-10 * (1.0 + a.max_abs()), "reconstruction error {err:e}");
            for i in 0..6 {
                for j in 0..6 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    let got = dot(eig.vector(i), eig.vector(j));
                    assert!((got - want).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn psd_sqrt_identity_and_diag() {
        let s = psd_sqrt(&SymMatrix::identity(3), CLAMP_TOL).unwrap();
        assert!(max_abs_diff(&s, &SymMatrix::identity(3)) < 1e-12);
        let s = psd_sqrt(&SymMatrix::from_diag(&[4.0, 9.0]), CLAMP_TOL).unwrap();
        assert!(max_abs_diff(&s, &SymMatrix::from_diag(&[2.0, 3.0])) < 1e-12);
    }

    #[test]
    fn psd_sqrt_rank_one() {
        // W = qᵀq for q = (2,0): sqrt = qᵀq / ‖q‖.
        let mut w = SymMatrix::zeros(2);
        w.add_scaled_outer(&[2.0, 0.0], 1.0);
        let s = psd_sqrt(&w, CLAMP_TOL).unwrap();
        let want = SymMatrix::new(2, vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(max_abs_diff(&s, &want) < 1e-10);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_psd(5, &mut rng);
            let s = psd_sqrt(&a, CLAMP_TOL).unwrap();
            let eig = sym_eig(&s).unwrap();
            assert!(eig.min_value() >= -1e-12);
            let ss = eig.spectral_map(|x| x * x);
            assert!(max_abs_diff(&ss, &a) <= 1e-8 * (1.0 + a.max_abs()));
        }
    }

    #[test]
    fn psd_sqrt_rejects_indefinite() {
        let a = SymMatrix::from_diag(&[1.0, -0.5]);
        assert!(matches!(psd_sqrt(&a, CLAMP_TOL), Err(Error::NotPsd { .. })));
    }

    // Basis of the X_t monotonicity argument: the matrix square root is
    // operator monotone.
    #[test]
    fn psd_sqrt_operator_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let b = random_psd(4, &mut rng);
            let mut a = b.clone();
            // a = b + PSD increment, so a ⪰ b.
            let inc = random_psd(4, &mut rng);
            for i in 0..4 {
                for j in 0..4 {
                    a.a[i * 4 + j] += inc.get(i, j);
                }
            }
            let sa = psd_sqrt(&a, CLAMP_TOL).unwrap();
            let sb = psd_sqrt(&b, CLAMP_TOL).unwrap();
            let diff = sa.sub(&sb);
            let eig = sym_eig(&diff).unwrap();
            assert!(eig.min_value() >= -1e-8, "min eig {:e}", eig.min_value());
        }
    }

    #[test]
    fn psd_factor_zero_and_rank_one() {
        let rows = psd_factor(&SymMatrix::zeros(3), CLAMP_TOL, DROP_TOL).unwrap();
        assert!(rows.is_empty());

        let rows = psd_factor(&SymMatrix::from_diag(&[1.0, 0.0]), CLAMP_TOL, DROP_TOL).unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0][0].abs() - 1.0).abs() < 1e-12);
        assert!(rows[0][1].abs() < 1e-12);
    }

    #[test]
    fn psd_factor_gram_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let d = random_psd(5, &mut rng);
            let rows = psd_factor(&d, CLAMP_TOL, DROP_TOL).unwrap();
            assert!(rows.len() <= 5);
            let mut gram = SymMatrix::zeros(5);
            for r in &rows {
                gram.add_scaled_outer(r, 1.0);
            }
            assert!(max_abs_diff(&gram, &d) <= 1e-8 * (1.0 + d.max_abs()));
        }
    }

    #[test]
    fn gram_solve_identity_cases() {
        let sol = gram_pinv_solve(&SymMatrix::identity(3), &[1.0, 0.0, 0.0], RANK_TOL).unwrap();
        assert!((sol.coeff[0] - 1.0).abs() < 1e-12);
        assert!((sol.left_norm_sq - 1.0).abs() < 1e-12);

        let third = SymMatrix::scaled_identity(2, 1.0 / 3.0);
        let sol = gram_pinv_solve(&third, &[1.0, 0.0], RANK_TOL).unwrap();
        assert!((sol.coeff[0] - 3.0).abs() < 1e-10);
        assert!((sol.left_norm_sq - 3.0).abs() < 1e-10);
    }

    #[test]
    fn gram_solve_out_of_span() {
        let gram = SymMatrix::from_diag(&[1.0, 0.0]);
        let res = gram_pinv_solve(&gram, &[0.0, 1.0], RANK_TOL);
        assert!(matches!(res, Err(Error::NotInSpan { .. })));
    }

    #[test]
    fn gram_solve_norm_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..10 {
            let n = 5;
            // gram = RᵀR for a random full-rank R, q in the row span.
            let mut gram = SymMatrix::zeros(n);
            let mut rows = Vec::new();
            for _ in 0..n + 2 {
                let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                gram.add_scaled_outer(&r, 1.0);
                rows.push(r);
            }
            let q = rows[0].clone();
            let sol = gram_pinv_solve(&gram, &q, RANK_TOL).unwrap();
            // ℓ R = q and ‖ℓ‖² = q·v.
            let qv = dot(&q, &sol.coeff);
            assert!((sol.left_norm_sq - qv).abs() <= 1e-8 * (1.0 + qv.abs()));
            let ell: Vec<f64> = rows.iter().map(|r| dot(r, &sol.coeff)).collect();
            let mut recon = vec![0.0; n];
            for (r, &c) in rows.iter().zip(&ell) {
                for i in 0..n {
                    recon[i] += c * r[i];
                }
            }
            for i in 0..n {
                assert!((recon[i] - q[i]).abs() <= 1e-6 * (1.0 + q[i].abs()));
            }
            let lnorm: f64 = ell.iter().map(|x| x * x).sum();
            assert!((lnorm - sol.left_norm_sq).abs() <= 1e-8 * (1.0 + lnorm));
        }
    }
}
