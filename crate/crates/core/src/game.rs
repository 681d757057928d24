//! The zero-sum trading game between a trader and a horse-race market, and
//! the exhaustive-enumeration machinery that verifies its value.
//!
//! The trader announces a strategy; the market (nature) picks a unit-odds
//! horse-race path — one winning asset per session. The payoff to the trader
//! is `W_θ(path) / D⁽ˢ⁾(path)`: realized wealth relative to the size-`s`
//! hindsight benchmark. Three facts are checked here by direct enumeration:
//!
//! 1. **Wealth conservation.** Summed over all `m^T` unit-odds paths, any
//!    full-investment strategy's final wealth is exactly 1 — strategies
//!    redistribute mass over paths, they cannot create it. This is the
//!    engine behind every guarantee bound in the crate.
//! 2. **Pure values.** The trader can guarantee `1/(C(m,s) p(T,s))` (the
//!    super-hedge does so with equality on two-winner paths when `s = 2`),
//!    while nature, moving second, can always hold any strategy to at most
//!    1 by backing the trader's worst single asset. Since the two differ,
//!    the game has no pure-strategy equilibrium.
//! 3. **Nature's mixture.** Randomizing over ≤ `s`-winner paths with
//!    probability proportional to `D⁽ˢ⁾` — built here exactly as a uniform
//!    mixture over (support, path-within-support) pairs, so degenerate
//!    paths shared by several supports carry the summed mass — yields a
//!    distribution with total mass exactly 1 under which expected payoffs
//!    are pinned at the game value `1/(C(m,s) p(T,s))` when `s = m`.
//!
//! Paths where the benchmark is zero (more than `s` distinct winners) have
//! an undefined payoff kernel; nature's mixture never plays them, and the
//! enumeration routines skip them explicitly.

use crate::hindsight::{combinations_count, next_combination};
use crate::pricing::{self, PriceQuery};
use crate::strategy::TradingStrategy;
use crate::uportfolio::OcMixtureEngine;
use crate::{aggregator::AggregateState, Error, KahanSum, PortfolioWeights, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;

/// Exhaustive enumerations refuse to walk more than this many paths.
const MAX_PATHS: f64 = 1e7;

/// A horse-race market realization: one winning asset per session, at unit
/// odds unless per-session gross odds are given.
#[derive(Debug, Clone, PartialEq)]
pub struct HorseRacePath {
    pub winners: Vec<usize>,
    pub odds: Option<Vec<f64>>,
}

impl HorseRacePath {
    pub fn unit(winners: Vec<usize>) -> Self {
        Self { winners, odds: None }
    }

    pub fn sessions(&self) -> usize {
        self.winners.len()
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.winners.is_empty() {
            return Err(Error::InvalidInput("a horse-race path needs >= 1 session".into()));
        }
        if let Some(w) = self.winners.iter().find(|&&j| j >= m) {
            return Err(Error::InvalidInput(format!(
                "winner index {w} out of range for m = {m}"
            )));
        }
        if let Some(odds) = &self.odds {
            if odds.len() != self.winners.len() {
                return Err(Error::InvalidInput(format!(
                    "{} odds for {} sessions",
                    odds.len(),
                    self.winners.len()
                )));
            }
            if odds.iter().any(|&o| !o.is_finite() || o <= 0.0) {
                return Err(Error::InvalidInput("odds must be finite and > 0".into()));
            }
        }
        Ok(())
    }

    /// The gross-return row of session `t`: the winner's odds (1 by
    /// default) on the winner, zero elsewhere.
    pub fn returns_row(&self, t: usize, m: usize) -> Vec<f64> {
        let mut row = vec![0.0; m];
        row[self.winners[t]] = self.odds.as_ref().map_or(1.0, |o| o[t]);
        row
    }
}

/// The game's announced values at one configuration.
#[derive(Debug, Clone, Serialize)]
pub struct GameValue {
    pub m: usize,
    pub s: usize,
    pub horizon: usize,
    /// What the trader can guarantee: `1/(C(m,s) p(T,s))`.
    pub lower_value: f64,
    /// What nature concedes at best against a known strategy: 1.
    pub upper_value: f64,
    /// Value under nature's mixture: equals the lower value.
    pub mixed_value: f64,
}

/// Computes the game's pure lower/upper values and the mixed value.
pub fn game_value(m: usize, s: usize, horizon: usize) -> Result<GameValue> {
    let q = PriceQuery::new(horizon, s, m)?;
    let lower = (-pricing::hedge_cost(&q)?.log_value).exp();
    Ok(GameValue {
        m,
        s,
        horizon,
        lower_value: lower,
        upper_value: 1.0,
        mixed_value: lower,
    })
}

fn guard_paths(label: &str, count: f64) -> Result<()> {
    if count > MAX_PATHS {
        return Err(Error::ScaleGuard(format!(
            "{label} would enumerate {count:.3e} paths; cap is {MAX_PATHS:.0e}"
        )));
    }
    Ok(())
}

/// Runs a fresh strategy down one unit-odds winner path; the wealth is the
/// product of the weights the strategy put on each session's winner.
fn wealth_on_winners(
    make: &mut dyn FnMut() -> Result<Box<dyn TradingStrategy>>,
    m: usize,
    winners: &[usize],
) -> Result<f64> {
    let mut strategy = make()?;
    if strategy.universe() != m {
        return Err(Error::InvalidInput(format!(
            "strategy trades {} assets, game has {m}",
            strategy.universe()
        )));
    }
    let mut wealth = 1.0f64;
    let mut row = vec![0.0f64; m];
    for &j in winners {
        let theta = strategy.weights()?;
        let g = theta.get(j);
        if g <= 0.0 {
            return Ok(0.0);
        }
        wealth *= g;
        row[j] = 1.0;
        strategy.observe(&row)?;
        row[j] = 0.0;
    }
    Ok(wealth)
}

/// Σ over all `m^T` unit-odds horse-race paths of the strategy's final
/// wealth. Equals 1 for every full-investment strategy; the factory is
/// called once per path (strategies are stateful).
pub fn wealth_conservation_check(
    m: usize,
    horizon: usize,
    mut make: impl FnMut() -> Result<Box<dyn TradingStrategy>>,
) -> Result<f64> {
    if m == 0 || horizon == 0 {
        return Err(Error::InvalidInput("need m >= 1 and T >= 1".into()));
    }
    guard_paths("wealth conservation", (m as f64).powi(horizon as i32))?;
    let mut total = KahanSum::new();
    let mut winners = vec![0usize; horizon];
    loop {
        total.add(wealth_on_winners(&mut make, m, &winners)?);
        // Odometer over base-m digit strings.
        let mut i = 0;
        loop {
            if i == horizon {
                return Ok(total.value());
            }
            winners[i] += 1;
            if winners[i] < m {
                break;
            }
            winners[i] = 0;
            i += 1;
        }
    }
}

/// `ln D⁽ˢ⁾` of a unit-odds path: `-inf` when more than `s` distinct assets
/// win; otherwise `Σ_i n_i ln(n_i/T)` over the winners' session counts.
pub fn log_hindsight_on_path(path: &HorseRacePath, s: usize, m: usize) -> Result<f64> {
    path.validate(m)?;
    if path.odds.is_some() {
        return Err(Error::InvalidInput(
            "hindsight-on-path is defined for unit odds; strip the odds first".into(),
        ));
    }
    if s == 0 {
        return Err(Error::InvalidInput("support size must be >= 1".into()));
    }
    let t = path.sessions() as f64;
    let mut counts = vec![0usize; m];
    for &j in &path.winners {
        counts[j] += 1;
    }
    if counts.iter().filter(|&&n| n > 0).count() > s {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(counts
        .iter()
        .filter(|&&n| n > 0)
        .map(|&n| n as f64 * (n as f64 / t).ln())
        .sum())
}

/// Linear-scale [`log_hindsight_on_path`].
pub fn hindsight_on_path(path: &HorseRacePath, s: usize, m: usize) -> Result<f64> {
    Ok(log_hindsight_on_path(path, s, m)?.exp())
}

/// One path in nature's mixed strategy.
#[derive(Debug, Clone, Serialize)]
pub struct MixtureAtom {
    pub winners: Vec<usize>,
    pub probability: f64,
    /// `ln D⁽ˢ⁾` of the path — finite on every atom by construction.
    pub log_hindsight: f64,
}

/// Nature's equilibrium mixture: a distribution over unit-odds paths with
/// at most `s` distinct winners, each weighted by its hindsight value.
#[derive(Debug, Clone, Serialize)]
pub struct NatureMixture {
    pub m: usize,
    pub s: usize,
    pub horizon: usize,
    /// `ln(C(m,s) p(T,s))` — the mixture's normalizer.
    pub log_normalizer: f64,
    atoms: Vec<MixtureAtom>,
}

impl NatureMixture {
    pub fn atoms(&self) -> &[MixtureAtom] {
        &self.atoms
    }

    /// Kahan-summed total probability; 1 up to roundoff by construction.
    pub fn total_mass(&self) -> f64 {
        let mut total = KahanSum::new();
        for a in &self.atoms {
            total.add(a.probability);
        }
        total.value()
    }

    /// `E[W_θ / D⁽ˢ⁾]` under the mixture, for a fresh strategy per path.
    pub fn expected_payoff(
        &self,
        mut make: impl FnMut() -> Result<Box<dyn TradingStrategy>>,
    ) -> Result<f64> {
        let mut total = KahanSum::new();
        for atom in &self.atoms {
            let w = wealth_on_winners(&mut make, self.m, &atom.winners)?;
            if w > 0.0 {
                total.add(atom.probability * (w.ln() - atom.log_hindsight).exp());
            }
        }
        Ok(total.value())
    }
}

/// Builds nature's mixture by enumerating (support, path-within-support)
/// pairs: every size-`s` support contributes its `s^T` paths with weight
/// `D⁽ˢ⁾/(C(m,s) p(T,s))`, and a path with fewer than `s` distinct winners
/// — playable under several supports — accumulates one share per support
/// containing its winner set. Total mass is exactly 1.
pub fn natures_mixed_strategy(m: usize, s: usize, horizon: usize) -> Result<NatureMixture> {
    let q = PriceQuery::new(horizon, s, m)?;
    let n_supports = combinations_count(m, s);
    guard_paths("nature's mixture", n_supports * (s as f64).powi(horizon as i32))?;
    let log_normalizer = pricing::hedge_cost(&q)?.log_value;
    let mut mass: std::collections::BTreeMap<Vec<usize>, f64> = std::collections::BTreeMap::new();
    let mut support: Vec<usize> = (0..s).collect();
    let tf = horizon as f64;
    loop {
        // All s^T winner paths inside this support, by odometer.
        let mut digits = vec![0usize; horizon];
        let mut counts = vec![0usize; s];
        loop {
            counts.iter_mut().for_each(|c| *c = 0);
            for &d in &digits {
                counts[d] += 1;
            }
            let log_d: f64 = counts
                .iter()
                .filter(|&&n| n > 0)
                .map(|&n| n as f64 * (n as f64 / tf).ln())
                .sum();
            let winners: Vec<usize> = digits.iter().map(|&d| support[d]).collect();
            *mass.entry(winners).or_insert(0.0) += (log_d - log_normalizer).exp();
            let mut i = 0;
            loop {
                if i == horizon {
                    break;
                }
                digits[i] += 1;
                if digits[i] < s {
                    break;
                }
                digits[i] = 0;
                i += 1;
            }
            if digits.iter().all(|&d| d == 0) {
                break;
            }
        }
        if !next_combination(&mut support, m) {
            break;
        }
    }
    let atoms = mass
        .into_iter()
        .map(|(winners, probability)| {
            let log_hindsight =
                log_hindsight_on_path(&HorseRacePath::unit(winners.clone()), s, m)?;
            Ok(MixtureAtom { winners, probability, log_hindsight })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NatureMixture { m, s, horizon, log_normalizer, atoms })
}

/// A strategy hitting the game's lower value: the pooled pair engines when
/// `s = 2`, the full mixture engine when `s = m` (small scales only).
pub fn super_hedge_strategy(m: usize, s: usize, horizon: usize) -> Result<Box<dyn TradingStrategy>> {
    if s == 2 {
        Ok(Box::new(AggregateState::new(m, horizon)?))
    } else if s == m {
        Ok(Box::new(OcMixtureEngine::new(m, horizon)?))
    } else {
        Err(Error::InvalidInput(format!(
            "no computable guarantee strategy for 2 < s = {s} < m = {m}; \
             supported: s = 2 (pair pooling) and s = m (full mixture)"
        )))
    }
}

/// Draws portfolio weights uniformly from the simplex at every history
/// node of the depth-`T` `m`-ary game tree; deterministic in the seed and
/// the observed history.
#[derive(Debug, Clone)]
pub struct RandomTreeStrategy {
    m: usize,
    node: u64,
}

impl RandomTreeStrategy {
    pub fn new(m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("universe must be nonempty".into()));
        }
        // Splitmix-style scramble so nearby seeds give unrelated draws.
        let node = seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0xD1B5_4A32_D192_ED03);
        Ok(Self { m, node })
    }
}

impl TradingStrategy for RandomTreeStrategy {
    fn universe(&self) -> usize {
        self.m
    }

    fn weights(&self) -> Result<PortfolioWeights> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.node);
        // Normalized standard exponentials are uniform on the simplex.
        let mut draws: Vec<f64> = (0..self.m).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = draws.iter().sum();
        draws.iter_mut().for_each(|d| *d /= total);
        PortfolioWeights::new(draws)
    }

    fn observe(&mut self, returns: &[f64]) -> Result<()> {
        if returns.len() != self.m {
            return Err(Error::InvalidInput(format!(
                "expected {} returns, got {}",
                self.m,
                returns.len()
            )));
        }
        let mut h = self.node;
        for &x in returns {
            h = (h ^ x.to_bits()).wrapping_mul(0x100_0000_01B3);
        }
        self.node = h.wrapping_mul(0x5851_F42D_4C95_7F2D).wrapping_add(1);
        Ok(())
    }
}

/// Checked pure-value analysis: confirms by enumeration and sampling that
/// (a) the guarantee strategy's payoff `W/D⁽ˢ⁾` is at least the lower value
/// on every enumerable horse-race path and on sampled random markets, and
/// (b) against any strategy, nature can pick a constant single-winner path
/// holding the payoff to at most the upper value 1. Returns the values on
/// success; a [`Error::Verification`] carries the first violation found.
pub fn pure_value_check(m: usize, s: usize, horizon: usize) -> Result<GameValue> {
    let value = game_value(m, s, horizon)?;
    guard_paths("pure value check", (m as f64).powi(horizon as i32))?;
    let log_lower = -pricing::hedge_cost(&PriceQuery::new(horizon, s, m)?)?.log_value;
    let slack = (1.0f64 - 1e-9).ln();

    // (a) the guarantee strategy clears the lower value on every path with
    // a defined kernel (nature never plays the others)…
    let mut hedge = || super_hedge_strategy(m, s, horizon);
    let mut winners = vec![0usize; horizon];
    'paths: loop {
        let path = HorseRacePath::unit(winners.clone());
        let log_d = log_hindsight_on_path(&path, s, m)?;
        if log_d > f64::NEG_INFINITY {
            let w = wealth_on_winners(&mut hedge, m, &winners)?;
            let log_payoff = w.ln() - log_d;
            if log_payoff < log_lower + slack {
                return Err(Error::Verification(format!(
                    "guarantee strategy pays {} on path {winners:?}, below the lower value {}",
                    log_payoff.exp(),
                    value.lower_value
                )));
            }
        }
        let mut i = 0;
        loop {
            if i == horizon {
                break 'paths;
            }
            winners[i] += 1;
            if winners[i] < m {
                break;
            }
            winners[i] = 0;
            i += 1;
        }
    }
    // …and on sampled non-degenerate markets, against the hindsight rule.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..20 {
        let rows: Vec<Vec<f64>> = (0..horizon)
            .map(|_| (0..m).map(|_| rng.gen_range(0.05f64..2.5)).collect())
            .collect();
        let seq = crate::ReturnSequence::from_rows(rows)?;
        let mut strategy = super_hedge_strategy(m, s, horizon)?;
        let run = crate::strategy::run_strategy(strategy.as_mut(), &seq)?;
        let bench = crate::hindsight::best_s_rule(&seq, s)?;
        if run.log_wealth < bench.log_wealth + log_lower + slack {
            return Err(Error::Verification(format!(
                "random market {trial}: wealth {} under value × benchmark {}",
                run.log_wealth,
                bench.log_wealth + log_lower
            )));
        }
    }

    // (b) nature holds any strategy to the upper value via the constant
    // path on the strategy's best-loved asset.
    for seed in 0..25u64 {
        let mut worst = f64::INFINITY;
        for j in 0..m {
            let winners = vec![j; horizon];
            let mut make: Box<dyn FnMut() -> Result<Box<dyn TradingStrategy>>> =
                Box::new(|| Ok(Box::new(RandomTreeStrategy::new(m, seed)?)));
            let w = wealth_on_winners(make.as_mut(), m, &winners)?;
            // Single-winner paths have D⁽ˢ⁾ = 1: payoff is the wealth itself.
            worst = worst.min(w);
        }
        if worst > value.upper_value + 1e-12 {
            return Err(Error::Verification(format!(
                "random strategy {seed} extracts {worst} > upper value even against \
                 nature's best reply"
            )));
        }
    }
    Ok(value)
}
