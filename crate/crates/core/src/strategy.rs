//! A common interface for sequential portfolio strategies, two classical
//! baselines, and a replay runner.
//!
//! A strategy announces a full-investment portfolio before each session and
//! then observes the session's gross returns. Wealth per unit deposited is
//! the running product of `⟨weights, returns⟩`. The interface is what the
//! game-theoretic checks in [`crate::game`] quantify over: the wealth
//! conservation identity there must hold for *every* implementor.

use crate::{Error, PortfolioWeights, Result, ReturnSequence};

/// A causal, self-financing trading strategy over a fixed universe.
pub trait TradingStrategy {
    /// Number of assets the strategy trades.
    fn universe(&self) -> usize;

    /// Portfolio for the upcoming session. Must be a full-investment
    /// simplex vector; called before the session's returns are revealed.
    fn weights(&self) -> Result<PortfolioWeights>;

    /// Reveals the gross returns of the session just traded.
    fn observe(&mut self, returns: &[f64]) -> Result<()>;
}

/// Rebalances to the uniform portfolio every session.
#[derive(Debug, Clone)]
pub struct UniformCrp {
    m: usize,
}

impl UniformCrp {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("universe must be nonempty".into()));
        }
        Ok(Self { m })
    }
}

impl TradingStrategy for UniformCrp {
    fn universe(&self) -> usize {
        self.m
    }

    fn weights(&self) -> Result<PortfolioWeights> {
        Ok(PortfolioWeights::uniform(self.m))
    }

    fn observe(&mut self, _returns: &[f64]) -> Result<()> {
        Ok(())
    }
}

/// Buys an initial allocation and never trades again: holdings drift with
/// returns, so the implied weights are the wealth shares of each position.
#[derive(Debug, Clone)]
pub struct BuyAndHold {
    holdings: Vec<f64>,
}

impl BuyAndHold {
    pub fn new(initial: PortfolioWeights) -> Self {
        Self { holdings: initial.as_slice().to_vec() }
    }

    pub fn uniform(m: usize) -> Self {
        Self::new(PortfolioWeights::uniform(m))
    }
}

impl TradingStrategy for BuyAndHold {
    fn universe(&self) -> usize {
        self.holdings.len()
    }

    fn weights(&self) -> Result<PortfolioWeights> {
        let total: f64 = self.holdings.iter().sum();
        if total <= 0.0 {
            return Err(Error::Bankrupt("buy-and-hold portfolio at zero value".into()));
        }
        PortfolioWeights::new(self.holdings.iter().map(|h| h / total).collect())
    }

    fn observe(&mut self, returns: &[f64]) -> Result<()> {
        if returns.len() != self.holdings.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} returns, got {}",
                self.holdings.len(),
                returns.len()
            )));
        }
        for (h, &x) in self.holdings.iter_mut().zip(returns) {
            *h *= x;
        }
        Ok(())
    }
}

/// Lifts a two-asset pair engine into an `m`-asset strategy that keeps all
/// wealth inside its pair (zero weight elsewhere).
#[derive(Debug, Clone)]
pub struct SinglePairStrategy {
    engine: crate::uportfolio::PairEngine,
    m: usize,
    i: usize,
    j: usize,
}

impl SinglePairStrategy {
    pub fn new(
        table: std::sync::Arc<crate::uportfolio::MarginalWeights>,
        m: usize,
        i: usize,
        j: usize,
    ) -> Result<Self> {
        if i >= j || j >= m {
            return Err(Error::InvalidInput(format!(
                "pair indices must satisfy i < j < m, got ({i}, {j}) with m = {m}"
            )));
        }
        Ok(Self { engine: crate::uportfolio::PairEngine::new(table), m, i, j })
    }

    pub fn engine(&self) -> &crate::uportfolio::PairEngine {
        &self.engine
    }
}

impl TradingStrategy for SinglePairStrategy {
    fn universe(&self) -> usize {
        self.m
    }

    fn weights(&self) -> Result<PortfolioWeights> {
        let b = self.engine.weight_on_first();
        let mut w = vec![0.0; self.m];
        w[self.i] = b;
        w[self.j] = 1.0 - b;
        PortfolioWeights::new(w)
    }

    fn observe(&mut self, returns: &[f64]) -> Result<()> {
        if returns.len() != self.m {
            return Err(Error::InvalidInput(format!(
                "expected {} returns, got {}",
                self.m,
                returns.len()
            )));
        }
        self.engine.step(returns[self.i], returns[self.j])
    }
}

impl TradingStrategy for crate::uportfolio::OcMixtureEngine {
    fn universe(&self) -> usize {
        crate::uportfolio::OcMixtureEngine::universe(self)
    }

    fn weights(&self) -> Result<PortfolioWeights> {
        crate::uportfolio::OcMixtureEngine::weights(self)
    }

    fn observe(&mut self, returns: &[f64]) -> Result<()> {
        crate::uportfolio::OcMixtureEngine::observe(self, returns)
    }
}

/// One full replay of a strategy on a return sequence.
#[derive(Debug, Clone)]
pub struct StrategyRun {
    /// `ln` wealth after each session (`-inf` once ruined).
    pub log_wealth_path: Vec<f64>,
    pub log_wealth: f64,
    pub wealth: f64,
}

/// Runs `strategy` over the whole sequence, compounding `⟨weights, x_t⟩`.
/// Ruin short-circuits: once wealth hits zero it stays zero.
pub fn run_strategy(
    strategy: &mut dyn TradingStrategy,
    seq: &ReturnSequence,
) -> Result<StrategyRun> {
    if strategy.universe() != seq.assets() {
        return Err(Error::InvalidInput(format!(
            "strategy trades {} assets but sequence has {}",
            strategy.universe(),
            seq.assets()
        )));
    }
    let mut log_wealth = 0.0f64;
    let mut path = Vec::with_capacity(seq.sessions());
    for t in 0..seq.sessions() {
        let row = seq.row(t);
        let growth = strategy.weights()?.growth(row);
        if growth <= 0.0 {
            log_wealth = f64::NEG_INFINITY;
            path.resize(seq.sessions(), f64::NEG_INFINITY);
            break;
        }
        log_wealth += growth.ln();
        path.push(log_wealth);
        strategy.observe(row)?;
    }
    Ok(StrategyRun { log_wealth_path: path, log_wealth, wealth: log_wealth.exp() })
}
