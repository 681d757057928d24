//! Shared value types: per-session gross-return sequences and portfolio
//! weight vectors.

use crate::{Error, Result};
use serde::Serialize;

/// A `T × m` matrix of per-session gross returns.
///
/// Row `t` holds the session-`t` growth factor of one unit of each asset
/// (so `1.0` means unchanged, `0.0` means total loss). Entries are validated
/// to be finite and nonnegative, and every row must contain at least one
/// positive entry — a market in which *everything* goes to zero in the same
/// session is rejected at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSequence {
    assets: usize,
    data: Vec<f64>, // row-major, sessions × assets
}

impl ReturnSequence {
    /// Builds a sequence from one `Vec` per session.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("return sequence has no sessions".into()));
        }
        let assets = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * assets);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != assets {
                return Err(Error::InvalidInput(format!(
                    "ragged return sequence: session {t} has {} entries, expected {assets}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(assets, data)
    }

    /// Builds a sequence from a row-major flat buffer of `T × assets` entries.
    pub fn from_flat(assets: usize, data: Vec<f64>) -> Result<Self> {
        if assets == 0 {
            return Err(Error::InvalidInput("return sequence has zero assets".into()));
        }
        if data.is_empty() || data.len() % assets != 0 {
            return Err(Error::InvalidInput(format!(
                "return buffer length {} is not a positive multiple of asset count {assets}",
                data.len()
            )));
        }
        for (idx, &x) in data.iter().enumerate() {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "return at session {}, asset {} is {x}; returns must be finite and >= 0",
                    idx / assets,
                    idx % assets
                )));
            }
        }
        let seq = Self { assets, data };
        for t in 0..seq.sessions() {
            if seq.row(t).iter().all(|&x| x == 0.0) {
                return Err(Error::InvalidInput(format!(
                    "session {t} has all-zero returns; every session needs a positive entry"
                )));
            }
        }
        Ok(seq)
    }

    /// Number of sessions `T`.
    pub fn sessions(&self) -> usize {
        self.data.len() / self.assets
    }

    /// Number of assets `m`.
    pub fn assets(&self) -> usize {
        self.assets
    }

    /// Gross returns of session `t` (zero-based).
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.assets..(t + 1) * self.assets]
    }

    /// Single entry: session `t`, asset `j`.
    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.data[t * self.assets + j]
    }

    /// Iterator over session rows in time order.
    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.assets)
    }

    /// The `(x_{t,i}, x_{t,j})` return pairs of two assets, in time order.
    pub fn pair_rows(&self, i: usize, j: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.iter_rows().map(move |row| (row[i], row[j]))
    }
}

/// A portfolio vector: nonnegative weights over `m` assets summing to one.
///
/// Construction enforces the simplex constraints up to a `1e-12` tolerance on
/// the sum; weights are stored exactly as given (no silent renormalization).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PortfolioWeights(Vec<f64>);

impl PortfolioWeights {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("empty portfolio vector".into()));
        }
        for (j, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "portfolio weight {j} is {w}; weights must be finite and >= 0"
                )));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "portfolio weights sum to {sum}, outside 1 ± {}",
                Self::SUM_TOLERANCE
            )));
        }
        Ok(Self(weights))
    }

    /// Equal weight `1/m` on each of `m` assets.
    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    /// All wealth on asset `j`.
    pub fn basis(m: usize, j: usize) -> Self {
        let mut w = vec![0.0; m];
        w[j] = 1.0;
        Self(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Growth factor `⟨w, x⟩` of this portfolio over one session.
    pub fn growth(&self, returns: &[f64]) -> f64 {
        self.0.iter().zip(returns).map(|(w, x)| w * x).sum()
    }
}
