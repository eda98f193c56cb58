//! The small-dataset competitive algorithm: AboveThreshold-style noisy
//! comparisons drive an inner median mechanism over the candidate set of
//! all datasets of size at most `s`, and an outer wrapper doubles `s`
//! until the queries are exhausted. Brute-force hereditary-discrepancy
//! oracles and sparse-approximation searches back the analysis at desk
//! scale.

use crate::dp::Dataset;
use crate::rng::{self, SeededRng};
use crate::{Error, Result};

/// Enumeration guard shared by the brute-force oracles.
pub const ENUM_GUARD: u128 = 10_000_000;

/// All datasets of size `1..=s` over a universe of size `N`, as ordered
/// tuples (`Σ_t N^t` of them), with an alive mask that the median updates
/// shrink. Codes are decoded on the fly; nothing is materialized per
/// member beyond the `u64` code.
pub struct CandidateSet {
    universe_size: usize,
    max_size: usize,
    /// Alive member codes. Code layout: sizes are consecutive blocks,
    /// block `t` holding `N^t` tuples in mixed-radix order.
    alive: Vec<u64>,
    initial_count: u128,
}

impl CandidateSet {
    pub fn new(universe_size: usize, max_size: usize) -> Result<Self> {
        Self::with_guard(universe_size, max_size, ENUM_GUARD)
    }

    pub fn with_guard(universe_size: usize, max_size: usize, guard: u128) -> Result<Self> {
        let n = universe_size as u128;
        let mut total: u128 = 0;
        let mut block = 1u128;
        for _ in 1..=max_size {
            block = block.saturating_mul(n);
            total = total.saturating_add(block);
            if total > guard {
                return Err(Error::ScaleGuard(total, guard));
            }
        }
        let alive: Vec<u64> = (0..total as u64).collect();
        Ok(Self { universe_size, max_size, alive, initial_count: total })
    }

    pub fn initial_count(&self) -> u128 {
        self.initial_count
    }

    pub fn alive_count(&self) -> usize {
        self.alive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alive.is_empty()
    }

    /// `log₂(Σ_t N^t)`, the composition length bound `c`.
    pub fn log2_size(&self) -> f64 {
        (self.initial_count as f64).log2()
    }

    /// Average of `q` over the records of the member dataset.
    pub fn query_value(&self, code: u64, q: &[f64]) -> f64 {
        let n = self.universe_size as u64;
        let mut rest = code;
        let mut size = 0u64;
        let mut block = 1u64;
        // Find the size block the code lives in.
        for t in 1..=self.max_size as u64 {
            block *= n;
            if rest < block {
                size = t;
                break;
            }
            rest -= block;
        }
        debug_assert!(size >= 1);
        let mut sum = 0.0;
        for _ in 0..size {
            sum += q[(rest % n) as usize];
            rest /= n;
        }
        sum / size as f64
    }

    /// Lower median of `{q(y)}` over the alive members.
    pub fn median(&self, q: &[f64]) -> f64 {
        assert!(!self.alive.is_empty());
        let mut values: Vec<f64> =
            self.alive.iter().map(|&code| self.query_value(code, q)).collect();
        let k = values.len();
        let idx = k.div_ceil(2) - 1; // lower median, 1-based ⌈k/2⌉
        let (_, med, _) =
            values.select_nth_unstable_by(idx, |a, b| a.partial_cmp(b).unwrap());
        *med
    }

    /// Keeps members with `q(y) > ν` (`above = true`) or `q(y) < ν`. The
    /// strict inequalities exclude the median itself, so every update
    /// removes at least half of the alive members; that is asserted.
    pub fn update(&mut self, q: &[f64], nu: f64, above: bool) -> usize {
        let before = self.alive.len();
        let keep: Vec<bool> = self
            .alive
            .iter()
            .map(|&code| {
                let v = self.query_value(code, q);
                if above {
                    v > nu
                } else {
                    v < nu
                }
            })
            .collect();
        let mut it = keep.iter();
        self.alive.retain(|_| *it.next().unwrap());
        let after = self.alive.len();
        assert!(
            after <= before / 2,
            "median split failed to halve: {before} -> {after}"
        );
        after
    }
}

/// `Lap(σ)` by inverse CDF on a seeded uniform.
pub fn laplace_sample(sigma: f64, rng: &mut SeededRng) -> f64 {
    rng::laplace(sigma, rng)
}

/// Parameters of one inner run (formulas exact).
#[derive(Debug, Clone, Copy)]
pub struct InnerParams {
    /// `log₂(Σ_{t=1..s} N^t)`: cap on AboveThreshold invocations.
    pub c: f64,
    pub eps0: f64,
    pub sigma: f64,
    pub tau: f64,
}

impl InnerParams {
    pub fn new(candidates: &CandidateSet, eps: f64, delta: f64, m: usize, beta: f64, n: usize) -> Self {
        let c = candidates.log2_size();
        let eps0 = eps / (6.0 * c * (1.0 / delta).ln()).sqrt();
        let sigma = 4.0 / (eps0 * n as f64);
        let tau = 4.0 * sigma * (3.0 * m as f64 / beta).ln();
        Self { c, eps0, sigma, tau }
    }
}

/// Outer-wrapper budget split across the `log₂ n` doubling rounds.
#[derive(Debug, Clone, Copy)]
pub struct OuterParams {
    pub eps0: f64,
    pub delta0: f64,
    pub beta0: f64,
}

impl OuterParams {
    pub fn new(eps: f64, delta: f64, beta: f64, n: usize) -> Self {
        let rounds = (n as f64).log2();
        Self { eps0: eps / rounds, delta0: delta / rounds, beta0: beta / rounds }
    }
}

/// Query source for the mechanism; answers so far are provided so adaptive
/// analysts can be driven through the same interface.
pub trait QueryStream {
    fn next(&mut self, answers: &[f64]) -> Option<Vec<f64>>;
}

/// A fixed workload consumed left to right, shared across inner runs.
pub struct SliceStream<'a> {
    rows: &'a [Vec<f64>],
    cursor: usize,
}

impl<'a> SliceStream<'a> {
    pub fn new(rows: &'a [Vec<f64>]) -> Self {
        Self { rows, cursor: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.rows.len() - self.cursor
    }
}

impl QueryStream for SliceStream<'_> {
    fn next(&mut self, _answers: &[f64]) -> Option<Vec<f64>> {
        let q = self.rows.get(self.cursor)?;
        self.cursor += 1;
        Some(q.clone())
    }
}

/// Why an inner run returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStop {
    /// The stream ran dry; answers cover every query asked.
    Exhausted,
    /// The candidate set emptied first.
    Halted,
}

/// Record of one inner run, including everything the per-seed audit needs.
#[derive(Debug, Clone)]
pub struct InnerRun {
    pub params: InnerParams,
    pub queries: Vec<Vec<f64>>,
    pub answers: Vec<f64>,
    pub stop: InnerStop,
    /// Every Laplace draw, for the `≤ τ/4` audit condition.
    pub laplace_draws: Vec<f64>,
    /// Alive counts after each update (halving trace).
    pub halving_trace: Vec<usize>,
    /// AboveThreshold invocations (outer-loop count), bounded by `c`.
    pub at_loops: usize,
}

/// Runs the inner median mechanism at sparsity `s` until the stream dries
/// up or the candidate set empties. `noiseless` zeroes every Laplace draw
/// (debug audit mode).
#[allow(clippy::too_many_arguments)]
pub fn inner_run(
    data: &Dataset,
    s: usize,
    eps: f64,
    delta: f64,
    m: usize,
    beta: f64,
    stream: &mut dyn QueryStream,
    rng: &mut SeededRng,
    noiseless: bool,
) -> Result<InnerRun> {
    let mut candidates = CandidateSet::new(data.universe_size(), s)?;
    let params = InnerParams::new(&candidates, eps, delta, m, beta, data.len());
    let mut run = InnerRun {
        params,
        queries: Vec::new(),
        answers: Vec::new(),
        stop: InnerStop::Exhausted,
        laplace_draws: Vec::new(),
        halving_trace: Vec::new(),
        at_loops: 0,
    };
    let draw = |rng: &mut SeededRng, draws: &mut Vec<f64>| -> f64 {
        let z = if noiseless { 0.0 } else { laplace_sample(params.sigma, rng) };
        draws.push(z);
        z
    };
    'outer: while !candidates.is_empty() {
        run.at_loops += 1;
        if run.at_loops as f64 > params.c.ceil() + 1.0 {
            return Err(Error::PipelineError(format!(
                "AboveThreshold loop count {} exceeded c = {}",
                run.at_loops, params.c
            )));
        }
        let tau_hat = params.tau + draw(rng, &mut run.laplace_draws);
        let (last_q, last_nu, last_a) = loop {
            let q = match stream.next(&run.answers) {
                Some(q) => q,
                None => break 'outer,
            };
            if q.len() != data.universe_size() {
                return Err(Error::AnalystError(format!(
                    "query width {} != universe {}",
                    q.len(),
                    data.universe_size()
                )));
            }
            let nu = candidates.median(&q);
            let qx = data.query_answer(&q);
            if (qx - nu).abs() + draw(rng, &mut run.laplace_draws) <= tau_hat {
                run.queries.push(q);
                run.answers.push(nu);
            } else {
                let a = qx + draw(rng, &mut run.laplace_draws);
                run.queries.push(q.clone());
                run.answers.push(a);
                break (q, nu, a);
            }
        };
        let after = candidates.update(&last_q, last_nu, last_a > last_nu);
        run.halving_trace.push(after);
    }
    if candidates.is_empty() {
        run.stop = InnerStop::Halted;
    }
    Ok(run)
}

/// Full outer run: doubles `s` from 1 while `s ≤ n`, handing the shared
/// stream to each inner run and splitting the budget per round.
#[derive(Debug, Clone)]
pub struct MedianRun {
    pub queries: Vec<Vec<f64>>,
    pub answers: Vec<f64>,
    /// Sparsity at which the queries were exhausted, if they were.
    pub s_star: Option<usize>,
    pub inner_runs: Vec<InnerRun>,
    /// True when `s` outgrew `n` without exhausting the stream.
    pub truncated: bool,
}

pub fn outer_run(
    data: &Dataset,
    eps: f64,
    delta: f64,
    m: usize,
    beta: f64,
    stream: &mut dyn QueryStream,
    rng: &mut SeededRng,
    noiseless: bool,
) -> Result<MedianRun> {
    if data.len() < 2 {
        return Err(Error::BadInput("outer run needs n >= 2".into()));
    }
    let outer = OuterParams::new(eps, delta, beta, data.len());
    let mut run = MedianRun {
        queries: Vec::new(),
        answers: Vec::new(),
        s_star: None,
        inner_runs: Vec::new(),
        truncated: false,
    };
    let mut s = 1usize;
    while s <= data.len() {
        let inner = inner_run(
            data,
            s,
            outer.eps0,
            outer.delta0,
            m,
            outer.beta0,
            stream,
            rng,
            noiseless,
        )?;
        run.queries.extend(inner.queries.iter().cloned());
        run.answers.extend(inner.answers.iter().cloned());
        let stop = inner.stop;
        run.inner_runs.push(inner);
        if stop == InnerStop::Exhausted {
            run.s_star = Some(s);
            return Ok(run);
        }
        s *= 2;
    }
    run.truncated = true;
    Ok(run)
}

/// Exact (modified) restricted hereditary discrepancy by enumeration of
/// all column subsets of size at most `w` and all sign patterns;
/// `modified` prepends the all-ones row.
pub fn hdisc_bruteforce(rows: &[Vec<f64>], w: usize, modified: bool) -> Result<f64> {
    hdisc_bruteforce_guarded(rows, w, modified, ENUM_GUARD)
}

pub fn hdisc_bruteforce_guarded(
    rows: &[Vec<f64>],
    w: usize,
    modified: bool,
    guard: u128,
) -> Result<f64> {
    assert!(!rows.is_empty());
    let n = rows[0].len();
    let w = w.min(n);
    // Guard: Σ_k C(n,k)·2^k pairs.
    let mut work: u128 = 0;
    let mut choose: u128 = 1;
    for k in 1..=w {
        choose = choose * (n - k + 1) as u128 / k as u128;
        work = work.saturating_add(choose << k);
        if work > guard {
            return Err(Error::ScaleGuard(work, guard));
        }
    }
    let mut q: Vec<&[f64]> = Vec::with_capacity(rows.len() + 1);
    let ones = vec![1.0; n];
    if modified {
        q.push(&ones);
    }
    q.extend(rows.iter().map(|r| r.as_slice()));

    let mut best = 0.0_f64;
    let mut subset = Vec::new();
    enumerate_subsets(n, w, &mut subset, &mut |s| {
        let k = s.len();
        let mut min_disc = f64::INFINITY;
        for mask in 0..(1u32 << k) {
            let mut disc = 0.0_f64;
            for row in &q {
                let mut sum = 0.0;
                for (j, &col) in s.iter().enumerate() {
                    let sign = if mask & (1 << j) != 0 { 1.0 } else { -1.0 };
                    sum += sign * row[col];
                }
                disc = disc.max(sum.abs());
                if disc >= min_disc {
                    break;
                }
            }
            min_disc = min_disc.min(disc);
            if min_disc == 0.0 {
                break;
            }
        }
        best = best.max(min_disc);
    });
    Ok(best)
}

fn enumerate_subsets(n: usize, w: usize, current: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    fn rec(
        start: usize,
        n: usize,
        w: usize,
        current: &mut Vec<usize>,
        visit: &mut impl FnMut(&[usize]),
    ) {
        if !current.is_empty() {
            visit(current);
        }
        if current.len() == w {
            return;
        }
        for i in start..n {
            current.push(i);
            rec(i + 1, n, w, current, visit);
            current.pop();
        }
    }
    rec(0, n, w, current, visit);
}

/// Smallest witness for the sparse-approximation bound: searches datasets
/// `y` (multisets over the universe) of size `1..=max_s` for one with
/// `‖𝒬(x) − 𝒬(y)‖_∞ ≤ alpha`.
pub fn sparse_approx_search(
    rows: &[Vec<f64>],
    data: &Dataset,
    alpha: f64,
    max_s: usize,
) -> Result<Option<(usize, Vec<usize>)>> {
    let truth: Vec<f64> = rows.iter().map(|q| data.query_answer(q)).collect();
    let n = data.universe_size();
    let mut enumerated: u128 = 0;
    for s in 1..=max_s {
        let mut found = None;
        let mut multiset = vec![0usize; s];
        loop {
            enumerated += 1;
            if enumerated > ENUM_GUARD {
                return Err(Error::ScaleGuard(enumerated, ENUM_GUARD));
            }
            let ok = rows.iter().zip(&truth).all(|(q, &tx)| {
                let v: f64 = multiset.iter().map(|&u| q[u]).sum::<f64>() / s as f64;
                (v - tx).abs() <= alpha
            });
            if ok {
                found = Some(multiset.clone());
                break;
            }
            // Next non-decreasing tuple.
            let mut i = s;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                if multiset[i] + 1 < n {
                    multiset[i] += 1;
                    let v = multiset[i];
                    for j in (i + 1)..s {
                        multiset[j] = v;
                    }
                    break;
                }
                if i == 0 {
                    multiset.clear();
                    break;
                }
            }
            if multiset.is_empty() {
                break;
            }
        }
        if let Some(w) = found {
            return Ok(Some((s, w)));
        }
    }
    Ok(None)
}

/// True when some dataset of size at most `s` matches `x` on every query
/// to within `tol` (the witness condition of the inner accuracy claim).
pub fn witness_exists(rows: &[Vec<f64>], data: &Dataset, s: usize, tol: f64) -> Result<bool> {
    Ok(sparse_approx_search(rows, data, tol, s)?.is_some())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_rows(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let mut r = vec![0.0; n];
                r[i] = 1.0;
                r
            })
            .collect()
    }

    #[test]
    fn laplace_tails_and_symmetry() {
        let mut rng = rng::seeded(17);
        let sigma = 1.0;
        let trials = 100_000;
        let mut exceed = 0usize;
        let mut draws: Vec<f64> = Vec::with_capacity(trials);
        for _ in 0..trials {
            let z = laplace_sample(sigma, &mut rng);
            if z.abs() > 3.0 * sigma {
                exceed += 1;
            }
            draws.push(z);
        }
        // Pr[|Lap(σ)| > tσ] = e^{-t} exactly for this parametrization.
        let p = exceed as f64 / trials as f64;
        let want = (-3.0_f64).exp();
        assert!(p >= 0.9 * want && p <= 1.1 * want, "tail {p} vs {want}");
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = draws[trials / 2];
        assert!(median.abs() < 0.02 * sigma, "median {median}");
    }

    #[test]
    fn laplace_scales_linearly_under_shared_seed() {
        let mut r1 = rng::seeded(3);
        let mut r2 = rng::seeded(3);
        for _ in 0..100 {
            let a = laplace_sample(1.0, &mut r1);
            let b = laplace_sample(2.0, &mut r2);
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn candidate_set_counts_and_median() {
        let cs = CandidateSet::new(3, 2).unwrap();
        // Σ N^t = 3 + 9 = 12 ordered tuples.
        assert_eq!(cs.initial_count(), 12);
        // Query picking out element 0: values are {1, 1/2, 0} with known
        // multiplicities: size-1: (1,0,0); size-2 tuples: count of zeros
        // among two digits.
        let q = vec![1.0, 0.0, 0.0];
        let med = cs.median(&q);
        // 12 values sorted: eight 0s... size-1: 1,0,0; size-2: 1 (00),
        // 0.5 (01,02,10,20), 0 (11,12,21,22,...): zeros: 2+4=6, halves 4,
        // ones 2. Lower median (6th of 12) = 0.
        assert_eq!(med, 0.0);
    }

    #[test]
    fn update_halves_and_empties() {
        let mut cs = CandidateSet::new(3, 2).unwrap();
        let q = vec![1.0, 0.0, 0.0];
        let nu = cs.median(&q);
        let after = cs.update(&q, nu, true); // keep q(y) > 0: 6 members
        assert_eq!(after, 6);
        // Keep q(y) > 1: none survive.
        let after = cs.update(&q, 1.0, true);
        assert_eq!(after, 0);
        assert!(cs.is_empty());
    }

    #[test]
    fn scale_guard_fires() {
        assert!(matches!(
            CandidateSet::new(6, 16),
            Err(Error::ScaleGuard(_, _))
        ));
    }

    #[test]
    fn hdisc_closed_forms() {
        // Identity: every row touches one ±1 entry.
        assert_eq!(hdisc_bruteforce(&identity_rows(4), 4, false).unwrap(), 1.0);
        assert_eq!(hdisc_bruteforce(&identity_rows(4), 1, false).unwrap(), 1.0);
        // Single all-ones row, w=3: odd subsets force |Σx| ≥ 1.
        let ones = vec![vec![1.0; 4]];
        assert_eq!(hdisc_bruteforce(&ones, 3, false).unwrap(), 1.0);
    }

    #[test]
    fn hdisc_monotone_and_modified_at_least_one() {
        use rand::Rng;
        let mut rng = rng::seeded(29);
        for _ in 0..20 {
            let rows: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..6).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect())
                .collect();
            let mut prev = 0.0;
            for w in 1..=4 {
                let h = hdisc_bruteforce(&rows, w, false).unwrap();
                assert!(h >= prev - 1e-12, "monotone in w");
                prev = h;
            }
            if rows.iter().any(|r| r.iter().any(|&x| x != 0.0)) {
                let h = hdisc_bruteforce(&rows, 2, true).unwrap();
                assert!(h >= 1.0 - 1e-12, "hdisc* ≥ 1 for nonzero Boolean Q");
            }
        }
    }

    // hdisc*(Q, c·w) ≤ c·hdisc*(Q, w), exhaustively at c=2, w=2.
    #[test]
    fn sublinear_scaling_of_modified_hdisc() {
        use rand::Rng;
        let mut rng = rng::seeded(31);
        for _ in 0..25 {
            let rows: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..6).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect())
                .collect();
            let h2 = hdisc_bruteforce(&rows, 2, true).unwrap();
            let h4 = hdisc_bruteforce(&rows, 4, true).unwrap();
            assert!(h4 <= 2.0 * h2 + 1e-12, "hdisc*(Q,4) = {h4} > 2·{h2}");
        }
    }

    #[test]
    fn sparse_witness_trivial_cases() {
        let rows = identity_rows(6);
        let data = Dataset::new(6, vec![0, 1, 2, 3]).unwrap();
        // x itself fits inside the budget: witness at s = n with error 0.
        let (s, w) = sparse_approx_search(&rows, &data, 1e-12, 4).unwrap().unwrap();
        assert!(s <= 4);
        let wd = Dataset::new(6, w).unwrap();
        for q in &rows {
            assert!((wd.query_answer(q) - data.query_answer(q)).abs() <= 1e-12);
        }
        // α ≥ 1 admits any singleton for Boolean queries.
        let (s, _) = sparse_approx_search(&rows, &data, 1.0, 4).unwrap().unwrap();
        assert_eq!(s, 1);
    }

    #[test]
    fn sparse_approx_theorem_bound() {
        // Q = I₆, x = 4 distinct records, α = 1/2: the bound gives
        // s ≤ (5/α)·hdisc*(Q, n) = 10·hdisc*; a witness must exist within.
        let rows = identity_rows(6);
        let data = Dataset::new(6, vec![0, 1, 2, 3]).unwrap();
        let h = hdisc_bruteforce(&rows, 4, true).unwrap();
        let bound = (5.0 / 0.5) * h;
        let (s, _) = sparse_approx_search(&rows, &data, 0.5, bound as usize)
            .unwrap()
            .expect("witness within the theorem bound");
        assert!(s as f64 <= bound);
    }

    #[test]
    fn inner_run_noiseless_answers_by_median() {
        // With σ = 0 and a query within τ of the median, the answer is
        // exactly ν.
        let data = Dataset::new(3, vec![0, 0, 1, 2]).unwrap();
        let rows = vec![vec![0.0, 0.0, 0.0]; 4];
        let mut stream = SliceStream::new(&rows);
        let mut rng = rng::seeded(5);
        let run = inner_run(&data, 2, 1.0, 1e-6, 4, 0.05, &mut stream, &mut rng, true).unwrap();
        assert_eq!(run.stop, InnerStop::Exhausted);
        assert!(run.answers.iter().all(|&a| a == 0.0));
        assert!(run.laplace_draws.iter().all(|&z| z == 0.0));
        assert!(run.at_loops as f64 <= run.params.c.ceil() + 1.0);
    }

    #[test]
    fn outer_run_constant_queries_stop_at_s1() {
        let data = Dataset::new(3, vec![0, 1, 1, 2]).unwrap();
        let rows = vec![vec![1.0, 1.0, 1.0]; 5];
        let mut stream = SliceStream::new(&rows);
        let mut rng = rng::seeded(11);
        let run = outer_run(&data, 1.0, 1e-6, 5, 0.05, &mut stream, &mut rng, false).unwrap();
        assert_eq!(run.s_star, Some(1), "constant queries answerable at s = 1");
        assert_eq!(run.answers.len(), 5);
        assert!(!run.truncated);
    }

    #[test]
    fn outer_run_truncates_when_s_exceeds_n() {
        // A tiny universe keeps the candidate sets legal up to s = n; an
        // adversarial τ̂ is impossible to arrange deterministically, so use
        // noiseless mode with queries far from every candidate median to
        // force halts.
        let data = Dataset::new(2, vec![0, 0, 0, 1]).unwrap();
        // q(x) = 0.75·q(0) + 0.25·q(1); candidates of small size have
        // coarse averages, so a fractional query row keeps |q(x) − ν|
        // above τ... that needs τ small, i.e. large ε.
        let rows: Vec<Vec<f64>> = (0..64).map(|_| vec![1.0, 0.0]).collect();
        let mut stream = SliceStream::new(&rows);
        let mut rng = rng::seeded(13);
        let run = outer_run(&data, 2e5, 1e-6, 64, 0.05, &mut stream, &mut rng, true).unwrap();
        // Either some inner run exhausted the queries or the wrapper
        // truncated; both are legal terminations. What must hold: if
        // truncated, every inner run halted.
        if run.truncated {
            assert!(run.inner_runs.iter().all(|r| r.stop == InnerStop::Halted));
            assert!(run.s_star.is_none());
        }
    }
}
