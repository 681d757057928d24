//! Hindsight-optimal rebalancing benchmarks.
//!
//! Given a full return history, these solvers find the constant-rebalanced
//! portfolio (fixed weight vector, rebalanced every session) that would have
//! maximized final wealth — over one fixed asset pair, over all pairs, or
//! over every size-`s` asset subset. These are the targets the online
//! machinery in [`crate::aggregator`] is guaranteed to track.
//!
//! For one pair the problem is one-dimensional and concave: wealth as a
//! function of the weight `b` on the lower-indexed asset is
//! `W(b) = Π_t (b·x_{t,i} + (1−b)·x_{t,j})`, so the log-wealth derivative
//! `f'(b) = Σ_t (x_{t,i} − x_{t,j}) / (b·x_{t,i} + (1−b)·x_{t,j})`
//! is monotone decreasing and a sign bisection pins the maximizer. Sessions
//! with `x_{t,i} = x_{t,j}` contribute a constant factor independent of `b`
//! and are folded out of the optimization. For size-`s` subsets the same
//! concave objective over the probability simplex is maximized by
//! exponentiated-gradient ascent.

use crate::{Error, PortfolioWeights, Result, ReturnSequence};
use serde::Serialize;

/// Derivative-magnitude stopping tolerance for the pair bisection.
const PAIR_GRAD_TOL: f64 = 1e-10;
/// Bracket-width stopping tolerance for the pair bisection.
const PAIR_BRACKET_TOL: f64 = 1e-12;
/// Gradient-residual stopping tolerance for the simplex optimizer.
const SIMPLEX_GRAD_TOL: f64 = 1e-8;
/// Iteration cap for the simplex optimizer.
const SIMPLEX_MAX_ITERS: usize = 100_000;
/// Refusal threshold on the number of size-`s` supports.
const MAX_SUPPORTS: f64 = 1e6;

/// A solved hindsight benchmark.
#[derive(Debug, Clone, Serialize)]
pub struct HindsightSolution {
    /// Optimal constant weights over the full `m`-asset universe.
    pub weights: PortfolioWeights,
    /// Assets carrying weight (pair solvers report both pair members even
    /// when the optimum sits on one of them).
    pub support: Vec<usize>,
    /// Natural log of final wealth per unit staked; `-inf` when bankrupt.
    pub log_wealth: f64,
    /// Linear final wealth, `exp(log_wealth)`.
    pub wealth: f64,
    /// True when every admissible portfolio finishes at zero wealth (a
    /// session wiped out every asset the rule may hold).
    pub bankrupt: bool,
}

impl HindsightSolution {
    fn new(weights: PortfolioWeights, support: Vec<usize>, log_wealth: f64) -> Self {
        Self { weights, support, log_wealth, wealth: log_wealth.exp(), bankrupt: false }
    }

    fn bankrupt_on(weights: PortfolioWeights, support: Vec<usize>) -> Self {
        Self { weights, support, log_wealth: f64::NEG_INFINITY, wealth: 0.0, bankrupt: true }
    }
}

/// The winning pair and its solved benchmark.
#[derive(Debug, Clone, Serialize)]
pub struct BestPairResult {
    /// Lexicographically earliest maximizing pair `(i, j)`, `i < j`.
    pub pair: (usize, usize),
    pub solution: HindsightSolution,
}

/// Log final wealth `Σ_t ln ⟨w, x_t⟩` of a constant-rebalanced portfolio;
/// `-inf` as soon as one session's growth factor is zero.
pub fn crp_log_wealth(weights: &PortfolioWeights, seq: &ReturnSequence) -> Result<f64> {
    if weights.len() != seq.assets() {
        return Err(Error::InvalidInput(format!(
            "portfolio has {} weights but the sequence has {} assets",
            weights.len(),
            seq.assets()
        )));
    }
    let mut log_wealth = 0.0;
    for row in seq.iter_rows() {
        let growth = weights.growth(row);
        if growth <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        log_wealth += growth.ln();
    }
    Ok(log_wealth)
}

/// Linear final wealth of a constant-rebalanced portfolio (exactly zero when
/// any session's growth factor is zero).
pub fn crp_wealth(weights: &PortfolioWeights, seq: &ReturnSequence) -> Result<f64> {
    Ok(crp_log_wealth(weights, seq)?.exp())
}

/// Best constant rebalancing rule over the fixed pair `(i, j)`, `i < j`:
/// maximizes `Π_t (b·x_{t,i} + (1−b)·x_{t,j})` over `b ∈ [0, 1]`.
///
/// A session with both returns zero bankrupts every choice of `b`; the
/// solution is then flagged bankrupt with the symmetric `b = 1/2`.
pub fn best_pair_rule(seq: &ReturnSequence, i: usize, j: usize) -> Result<HindsightSolution> {
    let m = seq.assets();
    if i >= j || j >= m {
        return Err(Error::InvalidInput(format!(
            "pair indices must satisfy i < j < m; got i = {i}, j = {j}, m = {m}"
        )));
    }
    let mut log_const = 0.0;
    let mut active: Vec<(f64, f64)> = Vec::new();
    for (xi, xj) in seq.pair_rows(i, j) {
        if xi == xj {
            if xi == 0.0 {
                // Every b is wiped out in this session.
                return Ok(HindsightSolution::bankrupt_on(pair_weights(m, i, j, 0.5), vec![i, j]));
            }
            log_const += xi.ln();
        } else {
            active.push((xi, xj));
        }
    }
    if active.is_empty() {
        // Wealth does not depend on b; report the symmetric split.
        return Ok(HindsightSolution::new(pair_weights(m, i, j, 0.5), vec![i, j], log_const));
    }
    let b = maximize_pair_log_wealth(&active);
    let log_wealth = log_const + pair_log_wealth(&active, b);
    let support = if b == 0.0 {
        vec![j]
    } else if b == 1.0 {
        vec![i]
    } else {
        vec![i, j]
    };
    Ok(HindsightSolution::new(pair_weights(m, i, j, b), support, log_wealth))
}

fn pair_weights(m: usize, i: usize, j: usize, b: f64) -> PortfolioWeights {
    let mut w = vec![0.0; m];
    w[i] = b;
    w[j] = 1.0 - b;
    PortfolioWeights::new(w).expect("pair weights lie on the simplex")
}

fn pair_log_wealth(active: &[(f64, f64)], b: f64) -> f64 {
    let mut acc = 0.0;
    for &(xi, xj) in active {
        let growth = b * xi + (1.0 - b) * xj;
        if growth <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += growth.ln();
    }
    acc
}

/// Maximizer of the concave `f(b) = Σ ln(b·x_i + (1−b)·x_j)` over `[0, 1]`
/// by sign bisection on the monotone derivative, with exact endpoint checks.
fn maximize_pair_log_wealth(active: &[(f64, f64)]) -> f64 {
    // f'(0) finite only when no session has x_j = 0; +inf otherwise.
    let grad_at_zero = if active.iter().any(|&(_, xj)| xj == 0.0) {
        f64::INFINITY
    } else {
        active.iter().map(|&(xi, xj)| (xi - xj) / xj).sum()
    };
    if grad_at_zero <= 0.0 {
        return 0.0;
    }
    let grad_at_one = if active.iter().any(|&(xi, _)| xi == 0.0) {
        f64::NEG_INFINITY
    } else {
        active.iter().map(|&(xi, xj)| (xi - xj) / xi).sum()
    };
    if grad_at_one >= 0.0 {
        return 1.0;
    }
    // Interior optimum: every growth factor is positive on (0, 1).
    let grad = |b: f64| -> f64 {
        active.iter().map(|&(xi, xj)| (xi - xj) / (b * xi + (1.0 - b) * xj)).sum()
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > PAIR_BRACKET_TOL {
        let mid = 0.5 * (lo + hi);
        let g = grad(mid);
        if g.abs() <= PAIR_GRAD_TOL {
            return mid;
        }
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Best pair rule over every pair `i < j`; ties in final wealth keep the
/// lexicographically earliest pair. If every pair is bankrupt the result is
/// the (bankrupt) solution of pair `(0, 1)`.
pub fn best_pairs_rule_overall(seq: &ReturnSequence) -> Result<BestPairResult> {
    let m = seq.assets();
    if m < 2 {
        return Err(Error::InvalidInput("pair search needs at least two assets".into()));
    }
    let mut best: Option<BestPairResult> = None;
    for i in 0..m {
        for j in (i + 1)..m {
            let solution = best_pair_rule(seq, i, j)?;
            let better = match &best {
                None => true,
                Some(cur) => solution.log_wealth > cur.solution.log_wealth,
            };
            if better {
                best = Some(BestPairResult { pair: (i, j), solution });
            }
        }
    }
    Ok(best.expect("m >= 2 guarantees at least one pair"))
}

/// Best constant rebalancing rule allowed to hold up to `s` assets: exact
/// enumeration of all `C(m, s)` supports, each optimized over its simplex by
/// exponentiated-gradient ascent (uniform start, step `0.5/T`, gradient
/// residual `≤ 1e-8`, iteration cap `1e5`).
///
/// Refuses universes with more than `1e6` supports.
pub fn best_s_rule(seq: &ReturnSequence, s: usize) -> Result<HindsightSolution> {
    let m = seq.assets();
    if s == 0 || s > m {
        return Err(Error::InvalidInput(format!(
            "support size must satisfy 1 <= s <= m; got s = {s}, m = {m}"
        )));
    }
    let n_supports = combinations_count(m, s);
    if n_supports > MAX_SUPPORTS {
        return Err(Error::ScaleGuard(format!(
            "best_s_rule over C({m}, {s}) ≈ {n_supports:.3e} supports exceeds the {MAX_SUPPORTS:.0e} cap"
        )));
    }
    let mut best: Option<(Vec<usize>, Vec<f64>, f64)> = None;
    let mut support: Vec<usize> = (0..s).collect();
    loop {
        if let Some((weights, log_wealth)) = optimize_support(seq, &support) {
            let better = match &best {
                None => true,
                Some((_, _, cur)) => log_wealth > *cur,
            };
            if better {
                best = Some((support.clone(), weights, log_wealth));
            }
        } else if best.is_none() {
            // Dead support: remember something so a fully bankrupt market
            // still yields a well-formed (bankrupt) solution.
            best = Some((support.clone(), vec![1.0 / s as f64; s], f64::NEG_INFINITY));
        }
        if !next_combination(&mut support, m) {
            break;
        }
    }
    let (support, local_weights, log_wealth) = best.expect("at least one support enumerated");
    let mut full = vec![0.0; m];
    for (&asset, &w) in support.iter().zip(&local_weights) {
        full[asset] = w;
    }
    let weights = PortfolioWeights::new(full)?;
    if log_wealth == f64::NEG_INFINITY {
        return Ok(HindsightSolution::bankrupt_on(weights, support));
    }
    // Report only the assets that actually carry weight.
    let carrying: Vec<usize> =
        support.iter().copied().zip(&local_weights).filter(|(_, &w)| w > 1e-12).map(|(a, _)| a).collect();
    Ok(HindsightSolution::new(weights, carrying, log_wealth))
}

pub(crate) fn combinations_count(m: usize, s: usize) -> f64 {
    let s = s.min(m - s);
    let mut acc = 1.0f64;
    for i in 1..=s {
        acc = acc * (m - s + i) as f64 / i as f64;
        if acc > 1e18 {
            return acc; // saturate well past every guard
        }
    }
    acc
}

/// Advances `support` to the next size-`s` combination of `{0, …, m−1}` in
/// lexicographic order; returns `false` after the last one.
pub(crate) fn next_combination(support: &mut [usize], m: usize) -> bool {
    let s = support.len();
    let mut i = s;
    while i > 0 {
        i -= 1;
        if support[i] < m - s + i {
            support[i] += 1;
            for k in (i + 1)..s {
                support[k] = support[k - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exponentiated-gradient ascent of `Σ_t ln ⟨b, x_t⟩` over the simplex of
/// one support. Returns `None` when some session zeroes the whole support
/// (wealth is zero for every interior portfolio).
///
/// Uses the identity `⟨b, ∇⟩ = T` for this objective: at an interior optimum
/// every gradient coordinate equals `T`, so the residual is measured against
/// `T` directly, and coordinates at (numerical) zero only need their
/// gradient to not exceed `T`.
fn optimize_support(seq: &ReturnSequence, support: &[usize]) -> Option<(Vec<f64>, f64)> {
    let s = support.len();
    let t_len = seq.sessions();
    // Dense support-local returns for cache locality.
    let mut cols = vec![0.0f64; t_len * s];
    for t in 0..t_len {
        let row = seq.row(t);
        for (k, &asset) in support.iter().enumerate() {
            cols[t * s + k] = row[asset];
        }
    }
    if cols.chunks_exact(s).any(|row| row.iter().all(|&x| x == 0.0)) {
        return None;
    }
    if s == 1 {
        let log_wealth: f64 = cols.iter().map(|&x| x.ln()).sum();
        return Some((vec![1.0], log_wealth));
    }
    let tf = t_len as f64;
    let step = 0.5 / tf;
    let mut b = vec![1.0 / s as f64; s];
    let mut grad = vec![0.0f64; s];
    let mut next = vec![0.0f64; s];
    for _ in 0..SIMPLEX_MAX_ITERS {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for row in cols.chunks_exact(s) {
            let dot: f64 = row.iter().zip(&b).map(|(x, w)| x * w).sum();
            let inv = 1.0 / dot;
            for (g, &x) in grad.iter_mut().zip(row) {
                *g += x * inv;
            }
        }
        let residual = b
            .iter()
            .zip(&grad)
            .map(|(&w, &g)| if w > 1e-14 { (g - tf).abs() } else { (g - tf).max(0.0) })
            .fold(0.0f64, f64::max);
        if residual <= SIMPLEX_GRAD_TOL {
            break;
        }
        let mut norm = 0.0;
        for k in 0..s {
            let arg = (step * (grad[k] - tf)).clamp(-60.0, 60.0);
            next[k] = b[k] * arg.exp();
            norm += next[k];
        }
        let mut moved = false;
        for k in 0..s {
            next[k] /= norm;
            moved |= next[k] != b[k];
        }
        std::mem::swap(&mut b, &mut next);
        if !moved {
            break; // machine-precision fixed point
        }
    }
    let log_wealth: f64 =
        cols.chunks_exact(s).map(|row| row.iter().zip(&b).map(|(x, w)| x * w).sum::<f64>().ln()).sum();
    Some((b, log_wealth))
}
