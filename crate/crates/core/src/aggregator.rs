//! The market-level online strategy: every pair of assets gets an equal
//! slice of the bankroll, each slice runs a [`crate::uportfolio::PairEngine`],
//! and the slices are pooled into one portfolio.
//!
//! Per dollar of trader capital the aggregate wealth is
//! `W_θ = Σ_{i<j} W_ij / C(m,2)`, and the weight on asset `k` for the next
//! session is the wealth-weighted average of the pair weights touching `k`:
//!
//! ```text
//! θ_k = [ Σ_{i<k} W_ik (1 − b_ik) + Σ_{k<j} W_kj b_kj ] / Σ_{i<j} W_ij,
//! ```
//!
//! where `b_ij` is pair `(i, j)`'s weight on its lower-indexed asset. The
//! pooled strategy super-replicates the best pair rebalancing rule in
//! hindsight at cost `C(m,2) p(T,2)`: equivalently, per dollar,
//! `C(m,2) p(T,2) W_θ ≥ D⁽²⁾` on every return sequence, with equality on
//! unit-odds two-winner markets.
//!
//! Pairs at zero wealth stay in the denominator (contributing nothing),
//! exactly as the formula states; the aggregate is bankrupt only when every
//! pair has been ruined, which requires a two-asset session of double zeros
//! for each pair and cannot happen while any pair keeps a positive return.

use crate::hindsight;
use crate::pricing;
use crate::strategy::TradingStrategy;
use crate::uportfolio::{MarginalWeights, PairEngine};
use crate::{log_sum_exp, Error, PortfolioWeights, Result, ReturnSequence};
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// Refuse configurations whose engine rows alone would exceed ~2 GB.
const MAX_ENGINE_BYTES: f64 = 2e9;

struct PairSlot {
    i: usize,
    j: usize,
    engine: PairEngine,
}

/// Snapshot of one pair engine, for reports and audit.
#[derive(Debug, Clone, Serialize)]
pub struct PairState {
    pub i: usize,
    pub j: usize,
    /// `ln W_ij` per unit deposited on the pair (`-inf` after ruin).
    pub log_wealth: f64,
    /// Pair weight on its lower-indexed asset for the next session.
    pub weight_on_first: f64,
    pub bankrupt: bool,
}

/// The pooled strategy over all pairs of an `m`-asset universe at a fixed
/// horizon. Step it with full return rows; query [`Self::weights`] before
/// each session and [`Self::log_wealth`] at any time.
pub struct AggregateState {
    m: usize,
    t: usize,
    table: Arc<MarginalWeights>,
    slots: Vec<PairSlot>,
}

impl AggregateState {
    pub fn new(m: usize, horizon: usize) -> Result<Self> {
        Self::with_table(MarginalWeights::new(horizon)?, m)
    }

    /// Builds the aggregate on an existing marginal-weight table (the table
    /// depends only on the horizon, so reruns and restarts can share it).
    pub fn with_table(table: Arc<MarginalWeights>, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput(format!(
                "pooling requires at least two assets, got m = {m}"
            )));
        }
        let pairs = m * (m - 1) / 2;
        let bytes = pairs as f64 * (table.horizon() as f64 + 2.0) * 16.0;
        if bytes > MAX_ENGINE_BYTES {
            return Err(Error::ScaleGuard(format!(
                "m = {m}, T = {} needs {pairs} pair engines (~{:.1} GB of rows)",
                table.horizon(),
                bytes / 1e9
            )));
        }
        let mut slots = Vec::with_capacity(pairs);
        for i in 0..m {
            for j in i + 1..m {
                slots.push(PairSlot { i, j, engine: PairEngine::new(table.clone()) });
            }
        }
        Ok(Self { m, t: 0, table, slots })
    }

    pub fn universe(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> usize {
        self.table.horizon()
    }

    pub fn sessions_seen(&self) -> usize {
        self.t
    }

    pub fn pair_count(&self) -> usize {
        self.slots.len()
    }

    pub fn table(&self) -> Arc<MarginalWeights> {
        self.table.clone()
    }

    /// `ln` of wealth per dollar of trader capital: the equal-split pool
    /// `Σ W_ij / C(m,2)`. `-inf` once every pair is ruined.
    pub fn log_wealth(&self) -> f64 {
        let logs: Vec<f64> = self.slots.iter().map(|s| s.engine.log_wealth()).collect();
        log_sum_exp(&logs) - (self.slots.len() as f64).ln()
    }

    pub fn wealth(&self) -> f64 {
        self.log_wealth().exp()
    }

    pub fn is_bankrupt(&self) -> bool {
        self.slots.iter().all(|s| s.engine.is_bankrupt())
    }

    /// Per-pair snapshots in `(i, j)` lexicographic order.
    pub fn pair_states(&self) -> Vec<PairState> {
        self.slots
            .iter()
            .map(|s| PairState {
                i: s.i,
                j: s.j,
                log_wealth: s.engine.log_wealth(),
                weight_on_first: s.engine.weight_on_first(),
                bankrupt: s.engine.is_bankrupt(),
            })
            .collect()
    }

    /// Pooled portfolio for the next session: each pair scatters its wealth
    /// share `b` / `1 − b` onto its two assets, in `(i, j)` order, and the
    /// totals are divided by the pooled wealth.
    pub fn weights(&self) -> Result<PortfolioWeights> {
        if self.t >= self.table.horizon() {
            return Err(Error::InvalidInput(format!(
                "horizon {} exhausted; no further session to weight",
                self.table.horizon()
            )));
        }
        let max_lw =
            self.slots.iter().map(|s| s.engine.log_wealth()).fold(f64::NEG_INFINITY, f64::max);
        if max_lw == f64::NEG_INFINITY {
            return Err(Error::Bankrupt("every pair engine is at zero wealth".into()));
        }
        let mut numer = vec![0.0f64; self.m];
        let mut denom = 0.0f64;
        for s in &self.slots {
            let w = (s.engine.log_wealth() - max_lw).exp();
            let b = s.engine.weight_on_first();
            numer[s.i] += w * b;
            numer[s.j] += w * (1.0 - b);
            denom += w;
        }
        PortfolioWeights::new(numer.into_iter().map(|n| n / denom).collect())
    }

    /// Advances one session: every pair engine sees its two coordinates of
    /// the return row. The realized growth factor equals
    /// `⟨weights(), returns⟩`.
    pub fn step(&mut self, returns: &[f64]) -> Result<()> {
        if returns.len() != self.m {
            return Err(Error::InvalidInput(format!(
                "expected {} returns, got {}",
                self.m,
                returns.len()
            )));
        }
        if self.t >= self.table.horizon() {
            return Err(Error::InvalidInput(format!(
                "horizon {} exhausted",
                self.table.horizon()
            )));
        }
        if returns.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::InvalidInput("returns must be finite and >= 0".into()));
        }
        if !returns.iter().any(|&x| x > 0.0) {
            return Err(Error::InvalidInput("return row must have a positive entry".into()));
        }
        // Inputs are fully validated and every engine is at the same session
        // count, so the per-engine steps cannot fail and may run in any
        // parallel order (each engine is independent).
        self.slots
            .par_iter_mut()
            .try_for_each(|s| s.engine.step(returns[s.i], returns[s.j]))?;
        self.t += 1;
        Ok(())
    }
}

impl TradingStrategy for AggregateState {
    fn universe(&self) -> usize {
        self.m
    }

    fn weights(&self) -> Result<PortfolioWeights> {
        AggregateState::weights(self)
    }

    fn observe(&mut self, returns: &[f64]) -> Result<()> {
        self.step(returns)
    }
}

/// Options for a full replay.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Engine horizon; defaults to the sequence length.
    pub horizon: Option<usize>,
    /// Re-arm fresh engines every `horizon` sessions instead of refusing
    /// sequences longer than the horizon. The guarantee quantifies over one
    /// committed horizon; restarted blocks compound it blockwise.
    pub restart: bool,
    /// Also solve the hindsight benchmark on every prefix, recording it and
    /// the running regret in the trajectory. Costs one benchmark solve per
    /// session — leave off for large universes.
    pub running_hindsight: bool,
}

/// One trajectory row: state after session `t` (1-based), with the weights
/// that were held *during* session `t`.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryPoint {
    pub t: usize,
    pub log_wealth: f64,
    pub weights: Vec<f64>,
    /// `ln` of the best pair rule's wealth over sessions `1..=t`.
    pub running_log_benchmark: Option<f64>,
    /// `(ln benchmark − ln wealth) / t`.
    pub running_regret: Option<f64>,
}

/// Full replay report: final wealth, hindsight comparison, the guarantee
/// bound, and the market-outperformance diagnostic.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub m: usize,
    pub horizon: usize,
    pub sessions: usize,
    /// Number of engine lifetimes (1 unless restart mode extended the run).
    pub blocks: usize,
    pub final_log_wealth: f64,
    pub final_wealth: f64,
    /// Best pair rebalancing rule in hindsight over the whole sequence.
    pub log_benchmark: f64,
    pub benchmark_pair: Option<(usize, usize)>,
    /// The benchmark's constant portfolio (full universe length).
    pub benchmark_weights: Vec<f64>,
    /// Realized excess growth rate `(ln benchmark − ln wealth) / sessions`.
    pub excess_growth: f64,
    /// A-priori bound `(ln C(m,2) + ln p(T,2)) / T` on the excess growth.
    pub regret_bound: f64,
    /// `ln` of the best single asset's total return.
    pub log_best_stock: f64,
    /// `(ln benchmark − ln best stock) / sessions`: positive means the pair
    /// benchmark (and asymptotically the trader) beats the market.
    pub market_outperformance: f64,
    /// Session (1-based) after which every pair was ruined, if that happened.
    pub ruined_at: Option<usize>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub pair_states: Vec<PairState>,
}

/// Replays the pooled strategy over a full sequence.
///
/// Without restart mode the sequence length must equal the horizon — the
/// strategy is horizon-committed by construction.
pub fn run_full(seq: &ReturnSequence, options: &RunOptions) -> Result<RunReport> {
    let m = seq.assets();
    if m < 2 {
        return Err(Error::InvalidInput("need at least two assets".into()));
    }
    let sessions = seq.sessions();
    let horizon = options.horizon.unwrap_or(sessions);
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be >= 1".into()));
    }
    if !options.restart && sessions != horizon {
        return Err(Error::InvalidInput(format!(
            "sequence has {sessions} sessions but the committed horizon is {horizon}; \
             enable restart mode to trade past the horizon"
        )));
    }
    let table = MarginalWeights::new(horizon)?;
    let mut state = AggregateState::with_table(table.clone(), m)?;
    let mut blocks = 1usize;
    let mut block_offset = 0.0f64; // ln wealth carried from finished blocks
    let mut trajectory = Vec::with_capacity(sessions);
    let mut ruined_at = None;
    for t in 0..sessions {
        if state.sessions_seen() == horizon {
            // Restart mode: bank this block's wealth and re-arm.
            block_offset += state.log_wealth();
            state = AggregateState::with_table(table.clone(), m)?;
            blocks += 1;
        }
        let theta = match state.weights() {
            Ok(w) => w,
            Err(Error::Bankrupt(msg)) => {
                ruined_at = Some(t);
                let _ = msg;
                break;
            }
            Err(e) => return Err(e),
        };
        state.step(seq.row(t))?;
        let log_wealth = block_offset + state.log_wealth();
        let (running_log_benchmark, running_regret) = if options.running_hindsight {
            let prefix = ReturnSequence::from_rows(
                (0..=t).map(|u| seq.row(u).to_vec()).collect(),
            )?;
            let bench = hindsight::best_pairs_rule_overall(&prefix)?;
            let regret = (bench.solution.log_wealth - log_wealth) / (t + 1) as f64;
            (Some(bench.solution.log_wealth), Some(regret))
        } else {
            (None, None)
        };
        trajectory.push(TrajectoryPoint {
            t: t + 1,
            log_wealth,
            weights: theta.as_slice().to_vec(),
            running_log_benchmark,
            running_regret,
        });
        // Catch ruin on the session that caused it — including the last one,
        // which no later weights() call would ever observe.
        if state.is_bankrupt() {
            ruined_at = Some(t + 1);
            break;
        }
    }
    let final_log_wealth = if ruined_at.is_some() {
        f64::NEG_INFINITY
    } else {
        block_offset + state.log_wealth()
    };
    let bench = hindsight::best_pairs_rule_overall(seq)?;
    let log_benchmark = bench.solution.log_wealth;
    let excess_growth = (log_benchmark - final_log_wealth) / sessions as f64;
    let regret_bound = pricing::regret_bound(&pricing::PriceQuery::new(horizon, 2, m)?)?;
    let log_best_stock = (0..m)
        .map(|j| (0..sessions).map(|t| seq.get(t, j).ln()).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let market_outperformance = (log_benchmark - log_best_stock) / sessions as f64;
    Ok(RunReport {
        m,
        horizon,
        sessions,
        blocks,
        final_log_wealth,
        final_wealth: final_log_wealth.exp(),
        log_benchmark,
        benchmark_pair: if bench.solution.bankrupt { None } else { Some(bench.pair) },
        benchmark_weights: bench.solution.weights.as_slice().to_vec(),
        excess_growth,
        regret_bound,
        log_best_stock,
        market_outperformance,
        ruined_at,
        trajectory,
        pair_states: state.pair_states(),
    })
}
