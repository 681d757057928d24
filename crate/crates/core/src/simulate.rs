//! Seeded market generators for experiments and verification: a two-stock
//! geometric-Brownian "volatility pumping" market, a correlated log-normal
//! random walk, and a horse race.
//!
//! Everything is deterministic in its spec: a counter-based generator
//! (ChaCha8) is seeded from the spec and, for Monte Carlo sweeps, each path
//! owns its own stream index, so results do not depend on scheduling.

use crate::game::HorseRacePath;
use crate::{Error, KahanSum, Result, ReturnSequence};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

/// Two i.i.d. sideways-drifting stocks: each price follows
/// `dS/S = (σ²/2) dt + σ dW`, whose exact solution has mean-zero log
/// increments `ln x = σ√dt · Z`. Neither stock grows asymptotically, yet the
/// half-and-half rebalanced portfolio grows at rate `σ²/4`.
#[derive(Debug, Clone, Serialize)]
pub struct GbmPairSpec {
    /// Volatility per unit √time.
    pub sigma: f64,
    /// Discretization step.
    pub dt: f64,
    /// Total simulated time; the number of sessions is `time/dt`.
    pub time: f64,
    pub seed: u64,
}

impl GbmPairSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidInput(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.steps() == 0 {
            return Err(Error::InvalidInput(format!(
                "time {} shorter than one step dt {}",
                self.time, self.dt
            )));
        }
        Ok(())
    }

    /// Per-asset price drift rate: exactly cancels the Itô correction, so
    /// log prices are driftless.
    pub fn drift(&self) -> f64 {
        self.sigma * self.sigma / 2.0
    }

    /// The continuous-time growth rate of the rebalanced mix, `σ²/4`.
    pub fn target_growth(&self) -> f64 {
        self.sigma * self.sigma / 4.0
    }

    pub fn steps(&self) -> usize {
        (self.time / self.dt).round() as usize
    }
}

/// Realized growth rates of one simulated path.
#[derive(Debug, Clone, Serialize)]
pub struct GbmDiagnostics {
    pub steps: usize,
    pub time: f64,
    /// `ln S_i(T)/S_i(0)` for the two stocks.
    pub log_stock: [f64; 2],
    /// Per-unit-time growth rates of the stocks (expected 0).
    pub stock_growth: [f64; 2],
    /// `ln V(T)` of the half-and-half per-step rebalanced portfolio.
    pub log_rebalanced: f64,
    /// `ln V(T)/T` (expected ≈ σ²/4).
    pub rebalanced_growth: f64,
    pub target_growth: f64,
}

/// Samples one path on the spec's base stream.
pub fn simulate_shannon_demon(spec: &GbmPairSpec) -> Result<(ReturnSequence, GbmDiagnostics)> {
    simulate_shannon_demon_path(spec, 0)
}

/// Samples path `path_index` of a Monte Carlo sweep: same seed, dedicated
/// RNG stream per path.
pub fn simulate_shannon_demon_path(
    spec: &GbmPairSpec,
    path_index: u64,
) -> Result<(ReturnSequence, GbmDiagnostics)> {
    spec.validate()?;
    let steps = spec.steps();
    let scale = spec.sigma * spec.dt.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(path_index);
    let mut rows = Vec::with_capacity(steps);
    let mut log_stock = [KahanSum::new(), KahanSum::new()];
    let mut log_rebalanced = KahanSum::new();
    for _ in 0..steps {
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let x0 = (scale * z0).exp();
        let x1 = (scale * z1).exp();
        log_stock[0].add(scale * z0);
        log_stock[1].add(scale * z1);
        log_rebalanced.add(((x0 + x1) / 2.0).ln());
        rows.push(vec![x0, x1]);
    }
    let time = steps as f64 * spec.dt;
    let diagnostics = GbmDiagnostics {
        steps,
        time,
        log_stock: [log_stock[0].value(), log_stock[1].value()],
        stock_growth: [log_stock[0].value() / time, log_stock[1].value() / time],
        log_rebalanced: log_rebalanced.value(),
        rebalanced_growth: log_rebalanced.value() / time,
        target_growth: spec.target_growth(),
    };
    Ok((ReturnSequence::from_rows(rows)?, diagnostics))
}

/// Monte Carlo summary over independent paths.
#[derive(Debug, Clone, Serialize)]
pub struct McSummary {
    pub paths: usize,
    pub mean_rebalanced_growth: f64,
    /// Standard error of the mean rebalanced growth.
    pub se_rebalanced_growth: f64,
    /// Mean per-stock growth, pooled over both stocks of every path.
    pub mean_stock_growth: f64,
    pub se_stock_growth: f64,
    pub target_growth: f64,
}

/// Runs `n_paths` independent paths (one RNG stream each, in parallel) and
/// summarizes the realized growth rates.
pub fn shannon_demon_monte_carlo(spec: &GbmPairSpec, n_paths: usize) -> Result<McSummary> {
    spec.validate()?;
    if n_paths < 2 {
        return Err(Error::InvalidInput("need >= 2 paths for a standard error".into()));
    }
    let stats: Vec<(f64, f64, f64)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let (_, d) = simulate_shannon_demon_path(spec, p)?;
            Ok((d.rebalanced_growth, d.stock_growth[0], d.stock_growth[1]))
        })
        .collect::<Result<_>>()?;
    let mean_se = |values: &[f64]| {
        let n = values.len() as f64;
        let mut sum = KahanSum::new();
        values.iter().for_each(|&v| sum.add(v));
        let mean = sum.value() / n;
        let mut var = KahanSum::new();
        values.iter().for_each(|&v| var.add((v - mean) * (v - mean)));
        (mean, (var.value() / (n - 1.0) / n).sqrt())
    };
    let reb: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let stocks: Vec<f64> = stats.iter().flat_map(|s| [s.1, s.2]).collect();
    let (mean_rebalanced_growth, se_rebalanced_growth) = mean_se(&reb);
    let (mean_stock_growth, se_stock_growth) = mean_se(&stocks);
    Ok(McSummary {
        paths: n_paths,
        mean_rebalanced_growth,
        se_rebalanced_growth,
        mean_stock_growth,
        se_stock_growth,
        target_growth: spec.target_growth(),
    })
}

/// I.i.d.-across-time log-normal returns `x_tj = exp(ν_j + σ_j ε_tj)` with
/// `Corr(ε_tj, ε_tk) = ρ_jk`.
#[derive(Debug, Clone, Serialize)]
pub struct LogNormalSpec {
    pub nu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Correlation matrix: symmetric positive semidefinite, unit diagonal.
    pub corr: Vec<Vec<f64>>,
    pub horizon: usize,
    pub seed: u64,
}

impl LogNormalSpec {
    /// Uncorrelated convenience constructor.
    pub fn independent(nu: Vec<f64>, sigma: Vec<f64>, horizon: usize, seed: u64) -> Self {
        let m = nu.len();
        let corr =
            (0..m).map(|i| (0..m).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        Self { nu, sigma, corr, horizon, seed }
    }

    fn validate(&self) -> Result<usize> {
        let m = self.nu.len();
        if m == 0 || self.horizon == 0 {
            return Err(Error::InvalidInput("need >= 1 asset and >= 1 session".into()));
        }
        if self.sigma.len() != m || self.corr.len() != m {
            return Err(Error::InvalidInput("nu, sigma, corr dimensions disagree".into()));
        }
        if self.nu.iter().chain(&self.sigma).any(|v| !v.is_finite())
            || self.sigma.iter().any(|&s| s < 0.0)
        {
            return Err(Error::InvalidInput("nu must be finite, sigma finite and >= 0".into()));
        }
        for (i, row) in self.corr.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidInput("corr must be square".into()));
            }
            if (row[i] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "corr diagonal entry ({i},{i}) = {} is not 1",
                    row[i]
                )));
            }
            for (j, &c) in row.iter().enumerate() {
                if !c.is_finite() || c.abs() > 1.0 + 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "corr({i},{j}) = {c} outside [-1, 1]"
                    )));
                }
                if (c - self.corr[j][i]).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!("corr not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(m)
    }
}

/// Samples the log-normal walk. Correlation is imposed through the
/// symmetric matrix square root `ρ^{1/2}` applied to i.i.d. normals; a
/// negative eigenvalue beyond roundoff rejects the matrix.
pub fn simulate_lognormal(spec: &LogNormalSpec) -> Result<ReturnSequence> {
    let m = spec.validate()?;
    let mat = DMatrix::from_fn(m, m, |i, j| spec.corr[i][j]);
    let eigen = mat.symmetric_eigen();
    if let Some(lambda) = eigen.eigenvalues.iter().find(|&&l| l < -1e-10) {
        return Err(Error::InvalidInput(format!(
            "correlation matrix is not positive semidefinite (eigenvalue {lambda})"
        )));
    }
    let sqrt_lambda =
        DMatrix::from_diagonal(&eigen.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let root = &eigen.eigenvectors * sqrt_lambda * eigen.eigenvectors.transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::with_capacity(spec.horizon);
    let mut z = vec![0.0f64; m];
    for _ in 0..spec.horizon {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let row = (0..m)
            .map(|j| {
                let eps: f64 = (0..m).map(|k| root[(j, k)] * z[k]).sum();
                (spec.nu[j] + spec.sigma[j] * eps).exp()
            })
            .collect();
        rows.push(row);
    }
    ReturnSequence::from_rows(rows)
}

/// A horse race: one winner per session, gross odds on the winner, zero on
/// everyone else. Winners are sampled from `win_probs` or replayed from a
/// fixed path.
#[derive(Debug, Clone, Serialize)]
pub struct HorseRaceSpec {
    pub m: usize,
    pub horizon: usize,
    /// Winner distribution per session; uniform when absent.
    pub win_probs: Option<Vec<f64>>,
    /// Deterministic winners, overriding sampling (exclusive with
    /// `win_probs`).
    pub fixed_path: Option<Vec<usize>>,
    /// Gross odds `O_tj` per session and asset; unit odds when absent.
    pub odds: Option<Vec<Vec<f64>>>,
    pub seed: u64,
}

impl HorseRaceSpec {
    pub fn unit_uniform(m: usize, horizon: usize, seed: u64) -> Self {
        Self { m, horizon, win_probs: None, fixed_path: None, odds: None, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.horizon == 0 {
            return Err(Error::InvalidInput("need >= 1 horse and >= 1 race".into()));
        }
        if self.win_probs.is_some() && self.fixed_path.is_some() {
            return Err(Error::InvalidInput(
                "give win probabilities or a fixed path, not both".into(),
            ));
        }
        if let Some(p) = &self.win_probs {
            if p.len() != self.m {
                return Err(Error::InvalidInput(format!(
                    "{} win probabilities for {} horses",
                    p.len(),
                    self.m
                )));
            }
            if p.iter().any(|&v| !v.is_finite() || v < 0.0)
                || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12
            {
                return Err(Error::InvalidInput("win probabilities must sum to 1".into()));
            }
        }
        if let Some(path) = &self.fixed_path {
            if path.len() != self.horizon {
                return Err(Error::InvalidInput(format!(
                    "fixed path has {} races, spec says {}",
                    path.len(),
                    self.horizon
                )));
            }
            if let Some(&j) = path.iter().find(|&&j| j >= self.m) {
                return Err(Error::InvalidInput(format!("winner {j} out of range")));
            }
        }
        if let Some(odds) = &self.odds {
            if odds.len() != self.horizon || odds.iter().any(|row| row.len() != self.m) {
                return Err(Error::InvalidInput("odds must be horizon × m".into()));
            }
            if odds.iter().flatten().any(|&o| !o.is_finite() || o <= 0.0) {
                return Err(Error::InvalidInput("odds must be finite and > 0".into()));
            }
        }
        Ok(())
    }
}

/// Samples (or replays) the race, returning both the return rows and the
/// realized winner path with its per-session winner odds.
pub fn simulate_horse_race(spec: &HorseRaceSpec) -> Result<(ReturnSequence, HorseRacePath)> {
    spec.validate()?;
    let winners: Vec<usize> = match &spec.fixed_path {
        Some(path) => path.clone(),
        None => {
            let uniform = vec![1.0 / spec.m as f64; spec.m];
            let probs = spec.win_probs.as_deref().unwrap_or(&uniform);
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            (0..spec.horizon)
                .map(|_| {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    for (j, &p) in probs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            return j;
                        }
                    }
                    spec.m - 1 // roundoff in the final bucket
                })
                .collect()
        }
    };
    let rows: Vec<Vec<f64>> = winners
        .iter()
        .enumerate()
        .map(|(t, &j)| {
            let mut row = vec![0.0; spec.m];
            row[j] = spec.odds.as_ref().map_or(1.0, |o| o[t][j]);
            row
        })
        .collect();
    let path_odds = spec
        .odds
        .as_ref()
        .map(|o| winners.iter().enumerate().map(|(t, &j)| o[t][j]).collect());
    let path = HorseRacePath { winners, odds: path_odds };
    Ok((ReturnSequence::from_rows(rows)?, path))
}
