//! Universal pairs-trading portfolios.
//!
//! This crate prices and runs trading strategies that are guaranteed, in
//! hindsight, to track the best *pairs rebalancing rule*: the best-performing
//! way of continually rebalancing wealth between the best two assets, chosen
//! after the fact. The toolkit splits into:
//!
//! - [`pricing`] — exact cost of guaranteeing the hindsight-optimal
//!   rebalancing rule over a known horizon, plus the induced regret bound and
//!   horizon solver;
//! - [`hindsight`] — the benchmarks themselves: best constant-rebalanced
//!   portfolios over a fixed pair, over all pairs, and over all size-`s`
//!   asset subsets;
//! - [`uportfolio`] — the computable online engine for a single pair (a
//!   horizon-aware universal portfolio driven by a win-count dynamic
//!   program), plus a small-universe mixture engine used as a test oracle;
//! - [`aggregator`] — the full online strategy: one engine per asset pair,
//!   aggregated into a single portfolio vector each session;
//! - [`strategy`] — a minimal trait for online strategies and a few baseline
//!   implementations (uniform rebalancing, buy-and-hold, two-asset
//!   restriction);
//! - [`game`] — verification of the zero-sum-game structure by exhaustive
//!   enumeration of unit-odds market sequences: wealth conservation, the
//!   adversary's mixed strategy, and payoff bounds;
//! - [`simulate`] — seeded market generators (volatility-harvesting pair,
//!   correlated log-normal markets, horse races) for demonstrations and
//!   Monte Carlo checks.
//!
//! All wealth quantities are carried in natural-log space; a wealth of zero
//! is represented by `f64::NEG_INFINITY`. Aggregations of wealth across
//! portfolios use log-sum-exp, never raw exponentials.

pub mod aggregator;
mod error;
pub mod game;
pub mod hindsight;
pub mod pricing;
pub mod simulate;
pub mod strategy;
mod types;
pub mod uportfolio;

pub use error::Error;
pub use types::{PortfolioWeights, ReturnSequence};

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Library version, for embedding in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Natural-log-space sum of two values: `ln(exp(a) + exp(b))`.
///
/// Symmetric in its arguments (computed from max/min, so argument order
/// never changes the rounding) and exact for `-inf` inputs.
pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi; // covers both -inf: returns -inf
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Log-sum-exp over a slice: `ln(Σ exp(v))`, `-inf` for an empty or all
/// `-inf` slice.
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - hi).exp()).sum();
    hi + sum.ln()
}

/// Compensated (Kahan) accumulator for long sums that must hold tight
/// absolute tolerances.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_matches_direct_arithmetic() {
        let got = log_add(0.0_f64, 0.0);
        assert!((got - 2.0_f64.ln()).abs() < 1e-15, "ln(1+1) = ln 2, got {got}");
        let got = log_add(3.0, -1.0);
        let want = (3.0_f64.exp() + (-1.0_f64).exp()).ln();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn log_add_is_symmetric_bitwise() {
        let pairs = [(0.3, -4.1), (-700.0, -701.0), (12.5, 12.5)];
        for (a, b) in pairs {
            assert_eq!(log_add(a, b).to_bits(), log_add(b, a).to_bits());
        }
    }

    #[test]
    fn log_add_handles_negative_infinity() {
        assert_eq!(log_add(f64::NEG_INFINITY, 1.5), 1.5);
        assert_eq!(log_add(1.5, f64::NEG_INFINITY), 1.5);
        assert_eq!(log_add(f64::NEG_INFINITY, f64::NEG_INFINITY), f64::NEG_INFINITY);
    }

    #[test]
    fn log_sum_exp_empty_is_zero_wealth() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn kahan_sum_beats_naive_on_adversarial_input() {
        // 1 + 1e-16 added 10^6 times: naive summation loses the small terms.
        let mut kahan = KahanSum::new();
        kahan.add(1.0);
        for _ in 0..1_000_000 {
            kahan.add(1e-16);
        }
        assert!((kahan.value() - (1.0 + 1e-10)).abs() < 1e-14);
    }
}
