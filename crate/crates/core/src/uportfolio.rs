//! Horizon-aware universal portfolio engines.
//!
//! # The pair engine
//!
//! Over a fixed horizon `T`, consider all `2^T` "pick paths" through a pair:
//! at each session the path holds exactly one of the two assets. The engine
//! spreads its deposit over these paths, giving a path that picks asset `i`
//! (the lower-indexed one) `k` times the weight
//!
//! ```text
//! w(path) = (k/T)^k ((T−k)/T)^{T−k} / p(T, 2),
//! ```
//!
//! where `p(T, 2)` (see [`crate::pricing`]) normalizes the weights to sum to
//! one over all paths. Running all paths in parallel and pooling their wealth
//! reproduces, per unit deposited, at least `1/p(T,2)` times the best pair
//! rebalancing rule in hindsight — with equality on unit-odds winner paths.
//!
//! Because `w` depends on a path only through its final pick count, the
//! engine's state collapses to one number per *current* pick count `k`: the
//! dynamic-programming row
//!
//! ```text
//! dp_row[k] = E_t(k) = Σ over t-session pick paths with k picks of i
//!             of Π_s (picked return at s),
//! ```
//!
//! updated in `O(t)` per session. The other ingredient is the *marginal
//! weight* `μ_t(k)`: the total path weight consistent with a given t-session
//! prefix holding `k` picks of `i` (see [`MarginalWeights`]). Wealth and
//! portfolio weights are mixtures:
//!
//! ```text
//! wealth(t)  = Σ_k μ_t(k) E_t(k),
//! b(t → t+1) = Σ_k μ_{t+1}(k+1) E_t(k) / wealth(t).
//! ```
//!
//! Internally the engine stores the *product* `F_t(k) = μ_t(k)·E_t(k)`
//! rather than `E_t(k)` itself: the update factors `μ_{t+1}(k+1)/μ_t(k)` and
//! `μ_{t+1}(k)/μ_t(k)` are conditional probabilities in `(0, 1)`, so the row
//! stays perfectly scaled at any horizon, while raw `μ` and `E` values can
//! each traverse hundreds of orders of magnitude. `E` stays recoverable (see
//! [`PairEngine::log_path_sums`]); the row is carried as a normalized
//! mantissa vector plus one shared log-scale factor.
//!
//! # The small-universe mixture engine
//!
//! [`OcMixtureEngine`] is the same construction over `m ≤ 3` assets with the
//! full count-vector state space (`C(t+m−1, m−1)` entries per session). It is
//! exponentially sized in general and guarded to testing scales; it serves as
//! an oracle for the pair engine (`m = 2` must agree) and as the building
//! block for size-`s` guarantees in [`crate::game`].

use crate::{log_add, log_sum_exp, pricing, Error, PortfolioWeights, Result};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Marginal-weight table cap: the two `O(T²)` triangles reach ~3 GB here.
const MAX_TABLE_HORIZON: usize = 16_384;
/// Mantissa band outside which the engine row is renormalized.
const RESCALE_HI: f64 = 1e140;
const RESCALE_LO: f64 = 1e-140;
/// Headroom bound: rescale before a step that could push mantissas past it.
const OVERFLOW_GUARD: f64 = 1e250;

/// Cached marginal weights `μ_t(k)` of the horizon-`T` pair engine, for all
/// `0 ≤ k ≤ t ≤ T`, plus the derived one-step conditional probabilities.
///
/// `μ_t(k)` is the total weight of full pick paths whose first `t` sessions
/// contain `k` picks of the lower-indexed asset:
///
/// ```text
/// μ_t(k) = Σ_{a=0}^{T−t} C(T−t, a) ((k+a)/T)^{k+a} ((T−k−a)/T)^{T−k−a} / p(T, 2),
/// ```
///
/// computed in log space via the Pascal-style recursion
/// `μ_t(k) = μ_{t+1}(k+1) + μ_{t+1}(k)` from the single-path weights at
/// `t = T` (the direct sum above is kept as a test oracle). By construction
/// `μ_0(0) = 1` and each row inherits the `k ↔ t−k` symmetry bit-exactly.
#[derive(Debug)]
pub struct MarginalWeights {
    horizon: usize,
    /// `ln μ_t(k)`, triangle rows `t = 0..=T`, row `t` holding `t+1` entries.
    log_mu: Vec<f64>,
    /// `μ_{t+1}(k+1) / μ_t(k)` — the probability, under the path-weight
    /// measure, that the next session picks the lower-indexed asset given
    /// `k` picks in `t` sessions. Triangle rows `t = 0..=T−1`.
    win_prob: Vec<f64>,
    /// `ln p(T, 2)`, the normalizer.
    log_price: f64,
}

#[inline]
fn tri_offset(t: usize) -> usize {
    t * (t + 1) / 2
}

/// One session of the pair-tree folding: reads the `t+1` current scaled
/// path sums and the session's win-probability row, writes the `t+2` next
/// sums. Interior entries climb from `k−1` on an i-return and stay at `k`
/// on a j-return; written as exact-length slice zips so the loop stays free
/// of bounds checks and vectorizes on whatever SIMD the host offers (the
/// arithmetic order is identical on every dispatch target).
#[multiversion::multiversion(targets = "simd")]
fn fold_step(dst: &mut [f64], row: &[f64], up: &[f64], xi: f64, xj: f64) {
    let t = row.len() - 1;
    debug_assert_eq!(dst.len(), t + 2);
    debug_assert_eq!(up.len(), t + 1);
    dst[0] = row[0] * (1.0 - up[0]) * xj;
    dst[t + 1] = row[t] * up[t] * xi;
    let mid = &mut dst[1..=t];
    let climb = &row[..t];
    let climb_p = &up[..t];
    let stay = &row[1..=t];
    let stay_p = &up[1..=t];
    for ((((d, &f_lo), &u_lo), &f_hi), &u_hi) in mid
        .iter_mut()
        .zip(climb)
        .zip(climb_p)
        .zip(stay)
        .zip(stay_p)
    {
        *d = f_lo * u_lo * xi + f_hi * (1.0 - u_hi) * xj;
    }
}

/// Sum and max of a slice of non-negative values in one pass, accumulated
/// over four independent lanes so the loop pipelines/vectorizes instead of
/// serializing on floating-point add latency. The fold order is fixed, so
/// results are deterministic; slices shorter than one lane block reduce in
/// plain sequential order.
#[multiversion::multiversion(targets = "simd")]
fn sum_and_max(values: &[f64]) -> (f64, f64) {
    const LANES: usize = 4;
    let mut s = [0.0f64; LANES];
    let mut m = [0.0f64; LANES];
    let mut chunks = values.chunks_exact(LANES);
    for c in chunks.by_ref() {
        for l in 0..LANES {
            s[l] += c[l];
            m[l] = m[l].max(c[l]);
        }
    }
    let mut sum = (s[0] + s[1]) + (s[2] + s[3]);
    let mut max = m[0].max(m[1]).max(m[2].max(m[3]));
    for &v in chunks.remainder() {
        sum += v;
        max = max.max(v);
    }
    (sum, max)
}

/// Dot product with the same four-lane accumulation as [`sum_and_max`].
#[multiversion::multiversion(targets = "simd")]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    const LANES: usize = 4;
    debug_assert_eq!(a.len(), b.len());
    let mut s = [0.0f64; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in ca.by_ref().zip(cb.by_ref()) {
        for l in 0..LANES {
            s[l] += x[l] * y[l];
        }
    }
    let mut sum = (s[0] + s[1]) + (s[2] + s[3]);
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        sum += x * y;
    }
    sum
}

impl MarginalWeights {
    pub fn new(horizon: usize) -> Result<Arc<Self>> {
        if horizon == 0 {
            return Err(Error::InvalidInput("pair engine horizon must be >= 1".into()));
        }
        if horizon > MAX_TABLE_HORIZON {
            return Err(Error::ScaleGuard(format!(
                "marginal-weight table for T = {horizon} needs O(T^2) memory; cap is {MAX_TABLE_HORIZON}"
            )));
        }
        let t_max = horizon;
        let log_price = pricing::price(&pricing::PriceQuery::new(t_max, 2, 2)?)?.log_value;
        let mut log_mu = vec![0.0f64; tri_offset(t_max + 1)];
        let mut win_prob = vec![0.0f64; tri_offset(t_max)];
        let tf = t_max as f64;
        let h = |n: usize| if n == 0 { 0.0 } else { n as f64 * (n as f64 / tf).ln() };
        // Base row: one specific full path with k picks.
        {
            let row = &mut log_mu[tri_offset(t_max)..tri_offset(t_max + 1)];
            for (k, slot) in row.iter_mut().enumerate() {
                *slot = h(k) + h(t_max - k) - log_price;
            }
        }
        // Backward recursion, deriving the conditional probabilities from
        // each child row as a logistic (exactly 1/2 on symmetric ties).
        for t in (0..t_max).rev() {
            let (head, tail) = log_mu.split_at_mut(tri_offset(t + 1));
            let row_t = &mut head[tri_offset(t)..];
            let row_next = &tail[..t + 2];
            let probs = &mut win_prob[tri_offset(t)..tri_offset(t) + t + 1];
            for k in 0..=t {
                let stay = row_next[k]; // next session picks j
                let climb = row_next[k + 1]; // next session picks i
                row_t[k] = log_add(climb, stay);
                probs[k] = 1.0 / (1.0 + (stay - climb).exp());
            }
        }
        Ok(Arc::new(Self { horizon, log_mu, win_prob, log_price }))
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `ln p(T, 2)` for this horizon.
    pub fn log_price(&self) -> f64 {
        self.log_price
    }

    /// `ln μ_t(k)`; requires `k ≤ t ≤ T`.
    pub fn log_marginal(&self, t: usize, k: usize) -> f64 {
        assert!(t <= self.horizon && k <= t, "marginal weight index out of range");
        self.log_mu[tri_offset(t) + k]
    }

    /// Linear `μ_t(k)`; underflows to zero at very long horizons — prefer
    /// [`Self::log_marginal`] there.
    pub fn marginal(&self, t: usize, k: usize) -> f64 {
        self.log_marginal(t, k).exp()
    }

    /// Probability that the next session picks the lower-indexed asset,
    /// given `k` picks among `t` sessions. Requires `k ≤ t < T`.
    pub fn win_probability(&self, t: usize, k: usize) -> f64 {
        assert!(t < self.horizon && k <= t, "win probability index out of range");
        self.win_prob[tri_offset(t) + k]
    }

    fn win_prob_row(&self, t: usize) -> &[f64] {
        &self.win_prob[tri_offset(t)..tri_offset(t) + t + 1]
    }
}

/// Online universal portfolio over one asset pair at a fixed horizon.
///
/// Feed it the pair's gross returns session by session ([`Self::step`]);
/// it maintains its wealth per unit deposited and the weight it places on
/// the lower-indexed asset for the next session. A session in which *both*
/// returns are zero is absorbing ruin: wealth is zero forever after and the
/// weight pins to the symmetric `1/2`.
#[derive(Debug, Clone)]
pub struct PairEngine {
    table: Arc<MarginalWeights>,
    t: usize,
    /// Normalized mantissas of `F_t(k) = μ_t(k) E_t(k)`, length `t+1`.
    row: Vec<f64>,
    /// Ping-pong buffer for [`fold_step`]; same capacity as `row`.
    scratch: Vec<f64>,
    /// Shared log scale: `F_t(k) = exp(log_scale) · row[k]`.
    log_scale: f64,
    row_max: f64,
    log_wealth: f64,
    weight_b: f64,
    bankrupt: bool,
}

impl PairEngine {
    pub fn new(table: Arc<MarginalWeights>) -> Self {
        let weight_b = table.win_probability(0, 0); // exactly 1/2 by symmetry
        // Full-horizon capacity up front: the hot loop never reallocates.
        let mut row = Vec::with_capacity(table.horizon() + 2);
        row.push(1.0);
        let scratch = Vec::with_capacity(table.horizon() + 2);
        Self {
            table,
            t: 0,
            row,
            scratch,
            log_scale: 0.0,
            row_max: 1.0,
            log_wealth: 0.0,
            weight_b,
            bankrupt: false,
        }
    }

    /// Sessions observed so far.
    pub fn sessions_seen(&self) -> usize {
        self.t
    }

    pub fn horizon(&self) -> usize {
        self.table.horizon()
    }

    /// Natural log of wealth per unit deposited; `-inf` after ruin.
    pub fn log_wealth(&self) -> f64 {
        self.log_wealth
    }

    pub fn wealth(&self) -> f64 {
        self.log_wealth.exp()
    }

    /// Weight on the lower-indexed asset for the *next* session. Meaningful
    /// while `sessions_seen() < horizon()`; always in `[0, 1]`.
    pub fn weight_on_first(&self) -> f64 {
        self.weight_b
    }

    pub fn is_bankrupt(&self) -> bool {
        self.bankrupt
    }

    /// Audit view of the underlying path sums: `ln E_t(k)` for the current
    /// session count (`-inf` where no surviving path has `k` picks).
    pub fn log_path_sums(&self) -> Vec<f64> {
        (0..=self.t)
            .map(|k| {
                if self.row[k] == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    self.log_scale + self.row[k].ln() - self.table.log_marginal(self.t, k)
                }
            })
            .collect()
    }

    /// Advances one session on the pair's gross returns `(xi, xj)`, `xi`
    /// belonging to the lower-indexed asset.
    pub fn step(&mut self, xi: f64, xj: f64) -> Result<()> {
        if self.t >= self.table.horizon() {
            return Err(Error::InvalidInput(format!(
                "pair engine horizon {} exhausted",
                self.table.horizon()
            )));
        }
        if !(xi.is_finite() && xj.is_finite() && xi >= 0.0 && xj >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "pair returns must be finite and >= 0, got ({xi}, {xj})"
            )));
        }
        let t = self.t;
        self.t += 1;
        if self.bankrupt {
            return Ok(());
        }
        // Keep the mantissas inside the representable band whatever the
        // returns are.
        let growth_cap = xi.max(xj).max(1.0);
        if self.row_max * growth_cap > OVERFLOW_GUARD
            || !(RESCALE_LO..=RESCALE_HI).contains(&self.row_max)
        {
            self.rescale();
        }

        let up = self.table.win_prob_row(t);
        self.scratch.resize(t + 2, 0.0);
        fold_step(&mut self.scratch, &self.row, up, xi, xj);
        std::mem::swap(&mut self.row, &mut self.scratch);

        let (sum, max) = sum_and_max(&self.row);
        self.row_max = max;
        if max == 0.0 {
            // Both returns were zero: ruin, absorbing.
            self.bankrupt = true;
            self.log_wealth = f64::NEG_INFINITY;
            self.weight_b = 0.5;
            return Ok(());
        }
        self.log_wealth = self.log_scale + sum.ln();
        if self.t < self.table.horizon() {
            let up_next = self.table.win_prob_row(self.t);
            self.weight_b = dot(&self.row, up_next) / sum;
        }
        Ok(())
    }

    fn rescale(&mut self) {
        if self.row_max > 0.0 && self.row_max.is_finite() {
            let inv = 1.0 / self.row_max;
            for v in &mut self.row {
                *v *= inv;
            }
            self.log_scale += self.row_max.ln();
            self.row_max = 1.0;
        }
    }
}

/// Full mixture engine over a small universe: identical construction to the
/// pair engine but with count *vectors* as the state, so its size is
/// `C(t+m−1, m−1)` per session. Guarded to `m ≤ 3`, `T ≤ 10`; intended as a
/// test oracle and for game-theoretic verification, not production runs.
#[derive(Debug, Clone)]
pub struct OcMixtureEngine {
    m: usize,
    horizon: usize,
    /// `levels[t]`: count vector ↦ `ln M_t(n)`, the total path weight
    /// consistent with a prefix of winner counts `n` (`Σ n = t`).
    levels: Vec<BTreeMap<Vec<u16>, f64>>,
    /// Current path sums `E_t(n)` (linear; testing scales only).
    state: BTreeMap<Vec<u16>, f64>,
    t: usize,
    log_wealth: f64,
    bankrupt: bool,
}

/// Maximum universe and horizon for the full mixture engine.
pub const OC_MAX_UNIVERSE: usize = 3;
pub const OC_MAX_HORIZON: usize = 10;

impl OcMixtureEngine {
    pub fn new(m: usize, horizon: usize) -> Result<Self> {
        if m < 2 || m > OC_MAX_UNIVERSE || horizon == 0 || horizon > OC_MAX_HORIZON {
            return Err(Error::ScaleGuard(format!(
                "full mixture engine is exponential: requires 2 <= m <= {OC_MAX_UNIVERSE} and \
                 1 <= T <= {OC_MAX_HORIZON}, got m = {m}, T = {horizon}"
            )));
        }
        let log_price =
            pricing::price(&pricing::PriceQuery::new(horizon, m, m)?)?.log_value;
        let tf = horizon as f64;
        // Terminal level: one specific winner path per count vector.
        let mut levels = vec![BTreeMap::new(); horizon + 1];
        build_count_vectors(m, horizon, &mut |counts: &[u16]| {
            let g: f64 = counts
                .iter()
                .map(|&n| if n == 0 { 0.0 } else { n as f64 * (n as f64 / tf).ln() })
                .sum();
            levels[horizon].insert(counts.to_vec(), g - log_price);
        });
        for t in (0..horizon).rev() {
            let (head, tail) = levels.split_at_mut(t + 1);
            let next = &tail[0];
            build_count_vectors(m, t, &mut |counts: &[u16]| {
                let mut child = counts.to_vec();
                let parts: Vec<f64> = (0..m)
                    .map(|i| {
                        child[i] += 1;
                        let v = next[&child];
                        child[i] -= 1;
                        v
                    })
                    .collect();
                head[t].insert(counts.to_vec(), log_sum_exp(&parts));
            });
        }
        let mut state = BTreeMap::new();
        state.insert(vec![0u16; m], 1.0);
        Ok(Self { m, horizon, levels, state, t: 0, log_wealth: 0.0, bankrupt: false })
    }

    pub fn universe(&self) -> usize {
        self.m
    }

    pub fn sessions_seen(&self) -> usize {
        self.t
    }

    pub fn log_wealth(&self) -> f64 {
        self.log_wealth
    }

    pub fn is_bankrupt(&self) -> bool {
        self.bankrupt
    }

    /// Portfolio for the next session; uniform at `t = 0`, defined while
    /// sessions remain and the engine is solvent.
    pub fn weights(&self) -> Result<PortfolioWeights> {
        if self.bankrupt {
            return Err(Error::Bankrupt("mixture engine at zero wealth".into()));
        }
        if self.t >= self.horizon {
            return Err(Error::InvalidInput("mixture engine horizon exhausted".into()));
        }
        let next = &self.levels[self.t + 1];
        let mut weights = vec![0.0f64; self.m];
        let mut child: Vec<u16> = Vec::new();
        for (counts, &e) in &self.state {
            if e == 0.0 {
                continue;
            }
            child.clone_from(counts);
            for i in 0..self.m {
                child[i] += 1;
                weights[i] += next[&child].exp() * e;
                child[i] -= 1;
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        PortfolioWeights::new(weights)
    }

    /// Advances one session on a full `m`-asset return row.
    pub fn observe(&mut self, returns: &[f64]) -> Result<()> {
        if returns.len() != self.m {
            return Err(Error::InvalidInput(format!(
                "expected {} returns, got {}",
                self.m,
                returns.len()
            )));
        }
        if self.t >= self.horizon {
            return Err(Error::InvalidInput("mixture engine horizon exhausted".into()));
        }
        if returns.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::InvalidInput("returns must be finite and >= 0".into()));
        }
        self.t += 1;
        if self.bankrupt {
            return Ok(());
        }
        let mut next_state: BTreeMap<Vec<u16>, f64> = BTreeMap::new();
        for (counts, &e) in &self.state {
            if e == 0.0 {
                continue;
            }
            for (i, &x) in returns.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let mut child = counts.clone();
                child[i] += 1;
                *next_state.entry(child).or_insert(0.0) += e * x;
            }
        }
        self.state = next_state;
        let level = &self.levels[self.t];
        let mut wealth = 0.0;
        for (counts, &e) in &self.state {
            wealth += level[counts].exp() * e;
        }
        if wealth <= 0.0 {
            self.bankrupt = true;
            self.log_wealth = f64::NEG_INFINITY;
        } else {
            self.log_wealth = wealth.ln();
        }
        Ok(())
    }
}

/// Calls `f` on every length-`m` count vector summing to `total`.
fn build_count_vectors(m: usize, total: usize, f: &mut impl FnMut(&[u16])) {
    fn recurse(counts: &mut Vec<u16>, remaining: usize, slots: usize, f: &mut impl FnMut(&[u16])) {
        if slots == 1 {
            counts.push(remaining as u16);
            f(counts);
            counts.pop();
            return;
        }
        for n in 0..=remaining {
            counts.push(n as u16);
            recurse(counts, remaining - n, slots - 1, f);
            counts.pop();
        }
    }
    let mut counts = Vec::with_capacity(m);
    recurse(&mut counts, total, m, f);
}

/// The full-mixture portfolio after replaying `history` (fewer than
/// `horizon` rows) on an `m`-asset universe. Testing scales only.
pub fn small_m_oc_strategy(
    m: usize,
    horizon: usize,
    history: &[Vec<f64>],
) -> Result<PortfolioWeights> {
    if history.len() >= horizon {
        return Err(Error::InvalidInput(format!(
            "history of {} sessions leaves no next session within horizon {horizon}",
            history.len()
        )));
    }
    let mut engine = OcMixtureEngine::new(m, horizon)?;
    for row in history {
        engine.observe(row)?;
    }
    engine.weights()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_err(got: f64, want: f64) -> f64 {
        (got - want).abs() / want.abs().max(1e-300)
    }

    /// Direct-sum oracle for the marginal weight, straight off its
    /// definition (log space, two-pass log-sum-exp).
    fn log_marginal_direct(t: usize, k: usize, horizon: usize) -> f64 {
        let tf = horizon as f64;
        let log_price =
            pricing::price(&pricing::PriceQuery::new(horizon, 2, 2).unwrap()).unwrap().log_value;
        let h = |n: usize| if n == 0 { 0.0 } else { n as f64 * (n as f64 / tf).ln() };
        let mut ln_choose_acc = 0.0f64;
        let remaining = horizon - t;
        let mut terms = Vec::with_capacity(remaining + 1);
        for a in 0..=remaining {
            if a > 0 {
                ln_choose_acc += ((remaining - a + 1) as f64).ln() - (a as f64).ln();
            }
            terms.push(ln_choose_acc + h(k + a) + h(horizon - k - a));
        }
        crate::log_sum_exp(&terms) - log_price
    }

    #[test]
    fn marginal_weights_frozen_values() {
        // T = 1: each of the two paths carries weight 1/p(1,2) = 1/2.
        let t1 = MarginalWeights::new(1).unwrap();
        assert!(rel_err(t1.marginal(1, 0), 0.5) < 1e-12);
        assert!(rel_err(t1.marginal(1, 1), 0.5) < 1e-12);
        assert!(rel_err(t1.marginal(0, 0), 1.0) < 1e-12);
        // T = 2, p = 2.5: path weights 0.4, 0.1, 0.4; prefix masses 0.5 / 0.5.
        let t2 = MarginalWeights::new(2).unwrap();
        assert!(rel_err(t2.marginal(2, 0), 0.4) < 1e-12);
        assert!(rel_err(t2.marginal(2, 1), 0.1) < 1e-12);
        assert!(rel_err(t2.marginal(2, 2), 0.4) < 1e-12);
        assert!(rel_err(t2.marginal(1, 0), 0.5) < 1e-12);
        assert!(rel_err(t2.marginal(1, 1), 0.5) < 1e-12);
    }

    #[test]
    fn marginal_weights_root_mass_is_one() {
        for horizon in [1usize, 2, 3, 7, 25, 100] {
            let table = MarginalWeights::new(horizon).unwrap();
            assert!(
                table.log_marginal(0, 0).abs() < 1e-12,
                "T = {horizon}: μ_0(0) = {} should be 1",
                table.marginal(0, 0)
            );
        }
    }

    #[test]
    fn marginal_weights_match_direct_sum() {
        for horizon in [1usize, 2, 5, 9, 12, 30] {
            let table = MarginalWeights::new(horizon).unwrap();
            for t in 0..=horizon {
                for k in 0..=t {
                    let want = log_marginal_direct(t, k, horizon);
                    let got = table.log_marginal(t, k);
                    assert!(
                        (got - want).abs() < 1e-10,
                        "T = {horizon}, t = {t}, k = {k}: recursion {got} vs direct {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn marginal_weights_symmetric_bitwise() {
        let table = MarginalWeights::new(17).unwrap();
        for t in 0..=17 {
            for k in 0..=t {
                assert_eq!(
                    table.log_marginal(t, k).to_bits(),
                    table.log_marginal(t, t - k).to_bits(),
                    "μ must inherit the pick/skip symmetry exactly (t = {t}, k = {k})"
                );
            }
        }
    }

    #[test]
    fn win_probabilities_are_conditional_masses() {
        let table = MarginalWeights::new(13).unwrap();
        assert_eq!(table.win_probability(0, 0), 0.5, "symmetric start must be exactly 1/2");
        for t in 0..13 {
            for k in 0..=t {
                let p = table.win_probability(t, k);
                assert!(p > 0.0 && p < 1.0);
                // p · μ_t(k) = μ_{t+1}(k+1)
                let lhs = p.ln() + table.log_marginal(t, k);
                let rhs = table.log_marginal(t + 1, k + 1);
                assert!((lhs - rhs).abs() < 1e-12, "conditional identity fails at ({t}, {k})");
            }
        }
    }

    #[test]
    fn engine_init_state() {
        let table = MarginalWeights::new(6).unwrap();
        let engine = PairEngine::new(table);
        assert_eq!(engine.weight_on_first(), 0.5);
        assert_eq!(engine.log_wealth(), 0.0);
        assert_eq!(engine.sessions_seen(), 0);
        assert!(!engine.is_bankrupt());
    }

    #[test]
    fn engine_on_winner_paths_earns_exact_path_weight() {
        let horizon = 6;
        let table = MarginalWeights::new(horizon).unwrap();
        for k in 0..=horizon {
            let mut engine = PairEngine::new(table.clone());
            for t in 0..horizon {
                let (xi, xj) = if t < k { (1.0, 0.0) } else { (0.0, 1.0) };
                engine.step(xi, xj).unwrap();
            }
            let want = table.log_marginal(horizon, k);
            assert!(
                (engine.log_wealth() - want).abs() < 1e-10,
                "k = {k}: wealth {} vs path weight {}",
                engine.log_wealth(),
                want
            );
        }
    }

    #[test]
    fn engine_wealth_telescopes_through_its_own_weights() {
        let horizon = 30;
        let table = MarginalWeights::new(horizon).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut engine = PairEngine::new(table);
        let mut prev_log_wealth = 0.0;
        for _ in 0..horizon {
            let b = engine.weight_on_first();
            let (xi, xj) = (rng.gen_range(0.0..2.5), rng.gen_range(0.0..2.5));
            engine.step(xi, xj).unwrap();
            let growth = b * xi + (1.0 - b) * xj;
            let want = prev_log_wealth + growth.ln();
            assert!(
                (engine.log_wealth() - want).abs() < 1e-10,
                "one-session wealth identity broken: {} vs {}",
                engine.log_wealth(),
                want
            );
            prev_log_wealth = engine.log_wealth();
        }
    }

    #[test]
    fn engine_super_replicates_the_pair_rule() {
        for seed in 0..60u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let horizon = rng.gen_range(1..=60);
            let table = MarginalWeights::new(horizon).unwrap();
            let mut engine = PairEngine::new(table.clone());
            let mut rows = Vec::new();
            for _ in 0..horizon {
                // Mostly positive returns with occasional hard zeros.
                let mut xi = rng.gen_range(0.0f64..2.5);
                let mut xj = rng.gen_range(0.0f64..2.5);
                if rng.gen_bool(0.05) {
                    xi = 0.0;
                }
                if rng.gen_bool(0.05) {
                    xj = 0.0;
                }
                if xi == 0.0 && xj == 0.0 {
                    xj = 1.0;
                }
                engine.step(xi, xj).unwrap();
                rows.push(vec![xi, xj]);
            }
            let seq = crate::ReturnSequence::from_rows(rows).unwrap();
            let best = crate::hindsight::best_pair_rule(&seq, 0, 1).unwrap();
            let guaranteed = table.log_price() + engine.log_wealth();
            if best.log_wealth == f64::NEG_INFINITY {
                continue; // benchmark is zero; any wealth super-replicates
            }
            assert!(
                guaranteed >= best.log_wealth + (1.0f64 - 1e-9).ln(),
                "seed {seed}: p(T,2)·W = {guaranteed} under benchmark {}",
                best.log_wealth
            );
        }
    }

    #[test]
    fn engine_ruin_is_absorbing() {
        let table = MarginalWeights::new(5).unwrap();
        let mut engine = PairEngine::new(table);
        engine.step(1.2, 0.8).unwrap();
        engine.step(0.0, 0.0).unwrap();
        assert!(engine.is_bankrupt());
        assert_eq!(engine.log_wealth(), f64::NEG_INFINITY);
        assert_eq!(engine.weight_on_first(), 0.5);
        engine.step(3.0, 3.0).unwrap();
        assert!(engine.is_bankrupt(), "ruin must be absorbing");
        assert_eq!(engine.log_wealth(), f64::NEG_INFINITY);
        assert_eq!(engine.sessions_seen(), 3);
    }

    #[test]
    fn engine_is_deterministic_bitwise() {
        let run = || {
            let table = MarginalWeights::new(12).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut engine = PairEngine::new(table);
            for _ in 0..12 {
                engine.step(rng.gen_range(0.01..3.0), rng.gen_range(0.01..3.0)).unwrap();
            }
            (engine.log_wealth().to_bits(), engine.weight_on_first().to_bits())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn engine_survives_extreme_scales() {
        // Returns far outside any realistic band must not overflow the row.
        let table = MarginalWeights::new(40).unwrap();
        let mut engine = PairEngine::new(table);
        for t in 0..40 {
            let (xi, xj) = if t % 2 == 0 { (1e120, 1e-120) } else { (1e-120, 1e120) };
            engine.step(xi, xj).unwrap();
        }
        assert!(engine.log_wealth().is_finite(), "log wealth must stay finite");
        let b = engine.weight_on_first();
        assert!((0.0..=1.0).contains(&b));
    }

    #[test]
    fn engine_path_sums_recover_on_winner_paths() {
        // On a winner path every surviving pick path is the path itself, so
        // E_t(k) is 1 at the realized count and 0 elsewhere.
        let table = MarginalWeights::new(4).unwrap();
        let mut engine = PairEngine::new(table);
        engine.step(1.0, 0.0).unwrap();
        engine.step(0.0, 1.0).unwrap();
        engine.step(1.0, 0.0).unwrap();
        let sums = engine.log_path_sums();
        for (k, &v) in sums.iter().enumerate() {
            if k == 2 {
                assert!(v.abs() < 1e-10, "realized count must carry E = 1, got ln E = {v}");
            } else {
                assert_eq!(v, f64::NEG_INFINITY, "unrealized count k = {k} must be empty");
            }
        }
    }

    #[test]
    fn engine_wealth_sums_to_one_over_all_winner_paths() {
        // Total final wealth over all 2^T winner paths is exactly 1: the
        // engine redistributes its deposit, it cannot create money.
        for horizon in [1usize, 2, 3, 5, 8, 12] {
            let table = MarginalWeights::new(horizon).unwrap();
            let mut total = crate::KahanSum::new();
            for path in 0u32..(1 << horizon) {
                let mut engine = PairEngine::new(table.clone());
                for t in 0..horizon {
                    if path >> t & 1 == 1 {
                        engine.step(1.0, 0.0).unwrap();
                    } else {
                        engine.step(0.0, 1.0).unwrap();
                    }
                }
                total.add(engine.wealth());
            }
            assert!(
                (total.value() - 1.0).abs() < 1e-10,
                "T = {horizon}: winner-path wealth sums to {}, not 1",
                total.value()
            );
        }
    }

    #[test]
    fn table_guards() {
        assert!(MarginalWeights::new(0).is_err());
        assert!(matches!(MarginalWeights::new(MAX_TABLE_HORIZON + 1), Err(Error::ScaleGuard(_))));
        let table = MarginalWeights::new(3).unwrap();
        let mut engine = PairEngine::new(table);
        assert!(engine.step(-1.0, 1.0).is_err());
        assert!(engine.step(f64::NAN, 1.0).is_err());
        engine.step(1.0, 1.0).unwrap();
        engine.step(1.0, 1.0).unwrap();
        engine.step(1.0, 1.0).unwrap();
        assert!(engine.step(1.0, 1.0).is_err(), "stepping past the horizon must fail");
    }

    #[test]
    fn mixture_engine_matches_pair_engine_on_two_assets() {
        let horizon = 8;
        let table = MarginalWeights::new(horizon).unwrap();
        let mut pair = PairEngine::new(table);
        let mut full = OcMixtureEngine::new(2, horizon).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..horizon {
            let w = full.weights().unwrap();
            assert!((w.get(0) - pair.weight_on_first()).abs() < 1e-10);
            let (xi, xj) = (rng.gen_range(0.05..2.5), rng.gen_range(0.05..2.5));
            pair.step(xi, xj).unwrap();
            full.observe(&[xi, xj]).unwrap();
            assert!(
                (full.log_wealth() - pair.log_wealth()).abs() < 1e-10,
                "mixture and pair engines disagree: {} vs {}",
                full.log_wealth(),
                pair.log_wealth()
            );
        }
    }

    #[test]
    fn mixture_engine_starts_uniform_and_conserves_wealth() {
        let engine = OcMixtureEngine::new(3, 5).unwrap();
        let w = engine.weights().unwrap();
        for j in 0..3 {
            assert!((w.get(j) - 1.0 / 3.0).abs() < 1e-12, "asset {j} weight {}", w.get(j));
        }
        // Σ over all 3^5 winner paths of final wealth = 1.
        let mut total = crate::KahanSum::new();
        let mut path = [0usize; 5];
        loop {
            let mut eng = OcMixtureEngine::new(3, 5).unwrap();
            for &w in &path {
                let mut row = [0.0; 3];
                row[w] = 1.0;
                eng.observe(&row).unwrap();
            }
            total.add(eng.log_wealth().exp());
            let mut i = 0;
            loop {
                if i == 5 {
                    assert!((total.value() - 1.0).abs() < 1e-10, "mass {}", total.value());
                    return;
                }
                path[i] += 1;
                if path[i] < 3 {
                    break;
                }
                path[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn mixture_engine_super_replicates_full_rule() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let horizon = rng.gen_range(1..=7);
            let mut engine = OcMixtureEngine::new(3, horizon).unwrap();
            let mut rows = Vec::new();
            for _ in 0..horizon {
                let row: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..2.5)).collect();
                engine.observe(&row).unwrap();
                rows.push(row);
            }
            let seq = crate::ReturnSequence::from_rows(rows).unwrap();
            let best = crate::hindsight::best_s_rule(&seq, 3).unwrap();
            let log_price = pricing::price(&pricing::PriceQuery::new(horizon, 3, 3).unwrap())
                .unwrap()
                .log_value;
            assert!(
                log_price + engine.log_wealth() >= best.log_wealth + (1.0f64 - 1e-9).ln(),
                "seed {seed}: p(T,3)·W under the full-rule benchmark"
            );
        }
    }

    #[test]
    fn mixture_engine_guards() {
        assert!(OcMixtureEngine::new(4, 5).is_err());
        assert!(OcMixtureEngine::new(3, 11).is_err());
        assert!(OcMixtureEngine::new(1, 5).is_err());
        assert!(small_m_oc_strategy(3, 4, &vec![vec![1.0, 1.0, 1.0]; 4]).is_err());
    }

    #[test]
    fn small_strategy_replays_history() {
        let history = vec![vec![2.0, 0.5, 1.0], vec![0.5, 2.0, 1.0]];
        let w = small_m_oc_strategy(3, 6, &history).unwrap();
        let mut engine = OcMixtureEngine::new(3, 6).unwrap();
        for row in &history {
            engine.observe(row).unwrap();
        }
        let w2 = engine.weights().unwrap();
        assert_eq!(w.as_slice(), w2.as_slice());
    }
}
