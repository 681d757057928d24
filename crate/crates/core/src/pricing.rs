//! Exact pricing of hindsight-optimal rebalancing guarantees.
//!
//! The central quantity is the *guarantee price*
//!
//! ```text
//! p(T, s) = Σ_{n_1 + … + n_s = T}  T! / (n_1! ⋯ n_s!) · Π_i (n_i / T)^{n_i},
//! ```
//!
//! with the convention `0^0 = 1`: the initial deposit required so that a
//! horizon-`T` universal portfolio over `s` assets is guaranteed to finish
//! with at least the wealth of the best constant-rebalanced portfolio over
//! those assets, whatever the market does. Degenerate edges are exact:
//! `p(T, 1) = 1` and `p(1, s) = s`.
//!
//! Guaranteeing the best *pair* rule over an `m`-asset universe costs
//! `C(m, 2) · p(T, 2)` (one pair-engine deposit per pair), giving the regret
//! bound `(ln C(m, 2) + ln p(T, 2)) / T` on excess growth rates, which decays
//! to zero like `ln T / T`; [`horizon_for_tolerance`] inverts it.
//!
//! Everything is computed in natural-log space. Each summand is a
//! multinomial probability mass (so its log is `≤ 0` and never underflows),
//! which lets the sums accumulate linearly with compensated summation.

use crate::{Error, KahanSum, Result};
use serde::Serialize;

/// Price query: horizon, rule support size, and asset-universe size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PriceQuery {
    /// Number of trading sessions `T ≥ 1`.
    pub horizon_t: usize,
    /// Number of assets the hindsight rule may hold, `s ≥ 1`.
    pub support_s: usize,
    /// Number of assets in the universe, `m ≥ s`.
    pub universe_m: usize,
}

impl PriceQuery {
    pub fn new(horizon_t: usize, support_s: usize, universe_m: usize) -> Result<Self> {
        let q = Self { horizon_t, support_s, universe_m };
        q.validate()?;
        Ok(q)
    }

    fn validate(&self) -> Result<()> {
        if self.horizon_t == 0 {
            return Err(Error::InvalidInput("horizon T must be >= 1".into()));
        }
        if self.support_s == 0 {
            return Err(Error::InvalidInput("support size s must be >= 1".into()));
        }
        if self.universe_m < self.support_s {
            return Err(Error::InvalidInput(format!(
                "universe m = {} is smaller than support s = {}",
                self.universe_m, self.support_s
            )));
        }
        Ok(())
    }
}

/// A priced guarantee, carried both linearly and in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Price {
    /// Linear value `exp(log_value)`; may overflow to `inf` at extreme sizes.
    pub value: f64,
    /// Natural log of the price — the authoritative representation.
    pub log_value: f64,
}

impl Price {
    fn from_log(log_value: f64) -> Self {
        Self { value: log_value.exp(), log_value }
    }
}

/// Beyond this support size, composition enumeration needs the small-horizon
/// escape hatch.
const MAX_EXACT_SUPPORT: usize = 3;
/// Horizon cap for full enumeration with `s > 3` (testing sizes only).
const MAX_ENUM_HORIZON: usize = 20;
/// Hard cap on enumerated compositions for the `s > 3` path.
const MAX_COMPOSITIONS: f64 = 2e7;
/// Horizon cap for the doubling search in [`horizon_for_tolerance`].
const MAX_HORIZON: u64 = 1 << 40;
/// Largest horizon for which log-factorial tables are materialized; longer
/// pair-price sums fall back to a table-free streaming loop.
const TABLE_LIMIT: usize = 1 << 22;

/// Reusable pricer with cached logarithm / log-factorial tables.
///
/// The free functions in this module build a fresh `Pricer` per call, which
/// is fine for one-off queries; sweeps over many horizons should reuse one
/// `Pricer` so the tables are built once.
#[derive(Debug, Default)]
pub struct Pricer {
    /// `ln_n[k] = ln k` (entry 0 unused).
    ln_n: Vec<f64>,
    /// `ln_fact[k] = ln k!`, accumulated with compensated summation.
    ln_fact: Vec<f64>,
    ln_fact_carry: f64,
}

impl Pricer {
    pub fn new() -> Self {
        Self { ln_n: vec![0.0], ln_fact: vec![0.0], ln_fact_carry: 0.0 }
    }

    fn ensure(&mut self, n: usize) {
        while self.ln_fact.len() <= n {
            let k = self.ln_fact.len();
            let lk = (k as f64).ln();
            self.ln_n.push(lk);
            // Kahan-compensated ln k! so table error stays O(eps), not O(k eps).
            let y = lk - self.ln_fact_carry;
            let prev = self.ln_fact[k - 1];
            let t = prev + y;
            self.ln_fact_carry = (t - prev) - y;
            self.ln_fact.push(t);
        }
    }

    /// `n ln n` with the `0 ln 0 = 0` convention, off the cached table.
    fn n_ln_n(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            n as f64 * self.ln_n[n]
        }
    }

    /// The guarantee price `p(T, s)`. Requires `universe_m == support_s`:
    /// the price concerns exactly the assets the rule may hold.
    pub fn price(&mut self, q: &PriceQuery) -> Result<Price> {
        q.validate()?;
        if q.universe_m != q.support_s {
            return Err(Error::InvalidInput(format!(
                "price is defined on the rule's own support: universe m = {} must equal s = {}",
                q.universe_m, q.support_s
            )));
        }
        Ok(Price::from_log(self.log_price(q.horizon_t, q.support_s)?))
    }

    /// `ln p(T, s)`, dispatching on the support size.
    fn log_price(&mut self, t: usize, s: usize) -> Result<f64> {
        match s {
            1 => Ok(0.0), // single composition n_1 = T, term (T/T)^T = 1
            2 => Ok(self.log_price_pairs(t)),
            3 => Ok(self.log_price_triples(t)),
            _ => self.log_price_enumerated(t, s),
        }
    }

    /// `ln p(T, 2)` — a `T + 1`-term sum of binomial masses.
    fn log_price_pairs(&mut self, t: usize) -> f64 {
        if t <= TABLE_LIMIT {
            self.ensure(t);
            let lf = &self.ln_fact;
            let base = lf[t] - self.n_ln_n(t);
            let mut sum = KahanSum::new();
            for n in 0..=t {
                let log_term = base - lf[n] - lf[t - n] + self.n_ln_n(n) + self.n_ln_n(t - n);
                sum.add(log_term.exp());
            }
            sum.value().ln()
        } else {
            log_price_pairs_streaming(t)
        }
    }

    /// `ln p(T, 3)` — exact enumeration of the `O(T^2)` compositions.
    fn log_price_triples(&mut self, t: usize) -> f64 {
        self.ensure(t);
        let mut sum = KahanSum::new();
        for n1 in 0..=t {
            for n2 in 0..=(t - n1) {
                let n3 = t - n1 - n2;
                let log_term = self.ln_fact[t] - self.ln_fact[n1] - self.ln_fact[n2]
                    - self.ln_fact[n3]
                    + self.n_ln_n(n1)
                    + self.n_ln_n(n2)
                    + self.n_ln_n(n3)
                    - self.n_ln_n(t);
                sum.add(log_term.exp());
            }
        }
        sum.value().ln()
    }

    /// `ln p(T, s)` for `s > 3` by full composition enumeration; only allowed
    /// at testing sizes.
    fn log_price_enumerated(&mut self, t: usize, s: usize) -> Result<f64> {
        if t > MAX_ENUM_HORIZON {
            return Err(Error::ScaleGuard(format!(
                "composition enumeration infeasible: s = {s} > {MAX_EXACT_SUPPORT} requires \
                 T <= {MAX_ENUM_HORIZON}, got T = {t}"
            )));
        }
        let count = ln_choose(t + s - 1, s - 1).exp();
        if count > MAX_COMPOSITIONS {
            return Err(Error::ScaleGuard(format!(
                "composition enumeration infeasible: C({}, {}) ≈ {count:.3e} compositions \
                 exceeds the {MAX_COMPOSITIONS:.0e} cap",
                t + s - 1,
                s - 1
            )));
        }
        self.ensure(t);
        let mut sum = KahanSum::new();
        // Depth-first walk over compositions of t into s parts, carrying
        // Σ (n_i ln n_i − ln n_i!) over the filled parts; the constant
        // ln T! − T ln T is hoisted.
        let base = self.ln_fact[t] - self.n_ln_n(t);
        self.enumerate_compositions(t, s, base, &mut sum);
        Ok(sum.value().ln())
    }

    fn enumerate_compositions(&self, remaining: usize, slots: usize, partial: f64, sum: &mut KahanSum) {
        if slots == 1 {
            let n = remaining;
            sum.add((partial + self.n_ln_n(n) - self.ln_fact[n]).exp());
            return;
        }
        for n in 0..=remaining {
            self.enumerate_compositions(
                remaining - n,
                slots - 1,
                partial + self.n_ln_n(n) - self.ln_fact[n],
                sum,
            );
        }
    }

    /// Cost of guaranteeing the best size-`s` rule across an `m`-asset
    /// universe: `C(m, s) · p(T, s)` (one engine deposit per support).
    pub fn hedge_cost(&mut self, q: &PriceQuery) -> Result<Price> {
        q.validate()?;
        let log_p = self.log_price(q.horizon_t, q.support_s)?;
        Ok(Price::from_log(ln_choose(q.universe_m, q.support_s) + log_p))
    }

    /// Worst-case excess growth rate of the pair guarantee:
    /// `(ln C(m, 2) + ln p(T, 2)) / T`. Defined for `s = 2` only.
    pub fn regret_bound(&mut self, q: &PriceQuery) -> Result<f64> {
        q.validate()?;
        if q.support_s != 2 {
            return Err(Error::InvalidInput(format!(
                "the regret bound is defined for pair rules (s = 2), got s = {}",
                q.support_s
            )));
        }
        if q.universe_m < 2 {
            return Err(Error::InvalidInput("regret bound needs m >= 2".into()));
        }
        let log_cost = ln_choose(q.universe_m, 2) + self.log_price_pairs(q.horizon_t);
        Ok(log_cost / q.horizon_t as f64)
    }
}

/// `ln C(n, k)` without factorial tables, exact for `k = 0`; symmetric in
/// `k ↔ n − k` to keep the loop short.
fn ln_choose(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    let k = k.min(n - k);
    let mut acc = 0.0;
    for i in 1..=k {
        acc += ((n - k + i) as f64).ln() - (i as f64).ln();
    }
    acc
}

/// Table-free `ln p(T, 2)` for horizons too long to tabulate: the log
/// binomial coefficient is carried incrementally across the sum.
fn log_price_pairs_streaming(t: usize) -> f64 {
    let tf = t as f64;
    let ln_t = tf.ln();
    let mut sum = KahanSum::new();
    sum.add(1.0); // n = 0 term
    let mut ln_choose_acc = 0.0;
    for n in 1..=t {
        let nf = n as f64;
        let rf = (t - n) as f64;
        ln_choose_acc += (rf + 1.0).ln() - nf.ln();
        let h_r = if n == t { 0.0 } else { rf * rf.ln() };
        let log_term = ln_choose_acc + nf * nf.ln() + h_r - tf * ln_t;
        sum.add(log_term.exp());
    }
    sum.value().ln()
}

/// The closed-form ceiling `p(T, 2) ≤ 2 √(T + 1)`.
pub fn price_upper_bound(horizon_t: usize) -> f64 {
    2.0 * ((horizon_t + 1) as f64).sqrt()
}

/// One-off price query; see [`Pricer::price`] for sweeps.
pub fn price(q: &PriceQuery) -> Result<Price> {
    Pricer::new().price(q)
}

/// One-off hedge cost `C(m, s) · p(T, s)`.
pub fn hedge_cost(q: &PriceQuery) -> Result<Price> {
    Pricer::new().hedge_cost(q)
}

/// One-off regret bound for pair rules.
pub fn regret_bound(q: &PriceQuery) -> Result<f64> {
    Pricer::new().regret_bound(q)
}

/// Least horizon `T` whose pair-rule regret bound drops below `epsilon` for
/// an `m`-asset universe.
///
/// The bound is strictly decreasing in `T`, so a doubling bracket followed by
/// bisection finds the threshold; minimality is re-checked linearly at the
/// end as a defense against any local non-monotonicity. Horizons are capped
/// at `2^40` (unreachable for any `epsilon > 1e-9`).
pub fn horizon_for_tolerance(epsilon: f64, universe_m: usize) -> Result<u64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidInput(format!(
            "tolerance must be a positive finite number, got {epsilon}"
        )));
    }
    if universe_m < 2 {
        return Err(Error::InvalidInput("horizon solver needs m >= 2".into()));
    }
    let mut pricer = Pricer::new();
    let bound = |t: u64, pricer: &mut Pricer| -> f64 {
        let q = PriceQuery { horizon_t: t as usize, support_s: 2, universe_m };
        pricer.regret_bound(&q).expect("validated query")
    };
    if bound(1, &mut pricer) < epsilon {
        return Ok(1);
    }
    // Doubling bracket: lo always fails the tolerance, hi eventually meets it.
    let mut lo = 1u64;
    let mut hi = 2u64;
    while bound(hi, &mut pricer) >= epsilon {
        lo = hi;
        hi = hi.saturating_mul(2);
        if hi > MAX_HORIZON {
            return Err(Error::ScaleGuard(format!(
                "no horizon under {MAX_HORIZON} meets tolerance {epsilon}"
            )));
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if bound(mid, &mut pricer) < epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // Defensive minimality fix-up (no-ops when the bound is monotone).
    while hi > 1 && bound(hi - 1, &mut pricer) < epsilon {
        hi -= 1;
    }
    Ok(hi)
}
