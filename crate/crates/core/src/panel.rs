//! Price and return panels.
//!
//! A [`ReturnPanel`] holds `N` return series of common length `T`. Storage is
//! a `T x N` column-major matrix, so every asset's series is one contiguous
//! column and the data matrix used for correlations is available without
//! copying.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::stats;

/// Tolerances for the standardized-panel invariant.
pub const STANDARDIZED_MEAN_TOL: f64 = 1e-10;
pub const STANDARDIZED_VAR_TOL: f64 = 1e-8;

/// Prices on a uniform time grid: `N` assets observed at `T + 1` instants.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    assets: Vec<String>,
    timestamps: Vec<i64>,
    prices: Vec<Vec<f64>>,
    bars_per_day: usize,
}

impl PricePanel {
    /// Validates shape and positivity. `timestamps` are seconds and must be
    /// strictly increasing.
    pub fn new(
        assets: Vec<String>,
        timestamps: Vec<i64>,
        prices: Vec<Vec<f64>>,
        bars_per_day: usize,
    ) -> Result<Self> {
        if assets.len() != prices.len() {
            return Err(Error::Dimension(format!(
                "{} asset labels for {} price rows",
                assets.len(),
                prices.len()
            )));
        }
        if prices.is_empty() {
            return Err(Error::Dimension("price panel has no assets".into()));
        }
        let expected = timestamps.len();
        for (row, p) in prices.iter().enumerate() {
            if p.len() != expected {
                return Err(Error::Ragged {
                    row,
                    len: p.len(),
                    expected,
                });
            }
        }
        if expected < 3 {
            return Err(Error::Dimension(format!(
                "need at least 3 price observations, got {expected}"
            )));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "timestamps must be strictly increasing".into(),
            ));
        }
        if bars_per_day == 0 {
            return Err(Error::InvalidParameter("bars_per_day must be positive".into()));
        }
        for (row, p) in prices.iter().enumerate() {
            if let Some((column, &value)) = p
                .iter()
                .enumerate()
                .find(|(_, v)| !(v.is_finite() && **v > 0.0))
            {
                return Err(Error::NonPositivePrice {
                    asset: assets[row].clone(),
                    row,
                    column,
                    value,
                });
            }
        }
        Ok(Self {
            assets,
            timestamps,
            prices,
            bars_per_day,
        })
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn prices(&self) -> &[Vec<f64>] {
        &self.prices
    }

    pub fn bars_per_day(&self) -> usize {
        self.bars_per_day
    }

    /// Most common step between consecutive timestamps, in seconds, so that
    /// overnight and weekend gaps do not masquerade as the bar length. Ties go
    /// to the shorter step.
    pub fn dt_seconds(&self) -> f64 {
        let mut steps: Vec<i64> = self.timestamps.windows(2).map(|w| w[1] - w[0]).collect();
        steps.sort_unstable();
        let mut best = (0usize, steps[0]);
        for run in steps.chunk_by(|a, b| a == b) {
            if run.len() > best.0 {
                best = (run.len(), run[0]);
            }
        }
        best.1 as f64
    }
}

/// `N` return series of length `T`, optionally standardized to zero mean and
/// unit population variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    assets: Vec<String>,
    data: DMatrix<f64>,
    standardized: bool,
    bars_per_day: usize,
    dt_seconds: f64,
}

impl ReturnPanel {
    /// Builds an unstandardized panel from per-asset rows.
    pub fn new(
        assets: Vec<String>,
        rows: Vec<Vec<f64>>,
        bars_per_day: usize,
        dt_seconds: f64,
    ) -> Result<Self> {
        if assets.len() != rows.len() {
            return Err(Error::Dimension(format!(
                "{} asset labels for {} return rows",
                assets.len(),
                rows.len()
            )));
        }
        if rows.is_empty() {
            return Err(Error::NoAssets);
        }
        let t = rows[0].len();
        for (row, r) in rows.iter().enumerate() {
            if r.len() != t {
                return Err(Error::Ragged {
                    row,
                    len: r.len(),
                    expected: t,
                });
            }
        }
        if t < 2 {
            return Err(Error::Dimension(format!(
                "return series need length >= 2, got {t}"
            )));
        }
        if bars_per_day == 0 {
            return Err(Error::InvalidParameter("bars_per_day must be positive".into()));
        }
        if !(dt_seconds.is_finite() && dt_seconds > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt_seconds must be positive, got {dt_seconds}"
            )));
        }
        if let Some(row) = rows.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("returns of `{}`", assets[row])));
        }
        let n = rows.len();
        let data = DMatrix::from_fn(t, n, |j, k| rows[k][j]);
        Ok(Self {
            assets,
            data,
            standardized: false,
            bars_per_day,
            dt_seconds,
        })
    }

    /// Marks the panel standardized after verifying every row has mean 0 and
    /// population variance 1 within [`STANDARDIZED_MEAN_TOL`] and
    /// [`STANDARDIZED_VAR_TOL`].
    pub fn mark_standardized(mut self) -> Result<Self> {
        for k in 0..self.n_assets() {
            let s = self.series(k);
            let m = stats::mean(s);
            let v = stats::pop_variance(s);
            if m.abs() >= STANDARDIZED_MEAN_TOL || (v - 1.0).abs() >= STANDARDIZED_VAR_TOL {
                return Err(Error::InvalidParameter(format!(
                    "series `{}` is not standardized (mean {m:e}, variance {v})",
                    self.assets[k]
                )));
            }
        }
        self.standardized = true;
        Ok(self)
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn n_assets(&self) -> usize {
        self.data.ncols()
    }

    /// Series length `T`.
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Aspect ratio `Q = T / N`.
    pub fn q(&self) -> f64 {
        self.len() as f64 / self.n_assets() as f64
    }

    pub fn series(&self, k: usize) -> &[f64] {
        let t = self.len();
        &self.data.as_slice()[k * t..(k + 1) * t]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.as_slice().chunks_exact(self.len())
    }

    /// The `T x N` data matrix (one column per asset).
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn bars_per_day(&self) -> usize {
        self.bars_per_day
    }

    pub fn dt_seconds(&self) -> f64 {
        self.dt_seconds
    }

    /// Rows as owned vectors.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Time slice `[start, start + len)`; the result is not standardized.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::Dimension(format!(
                "window [{start}, {}) exceeds series length {}",
                start + len,
                self.len()
            )));
        }
        let rows = self.rows().map(|r| r[start..start + len].to_vec()).collect();
        Self::new(self.assets.clone(), rows, self.bars_per_day, self.dt_seconds)
    }

    /// Same metadata, new rows. Asset labels must match the row count.
    pub(crate) fn with_rows(&self, assets: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(assets, rows, self.bars_per_day, self.dt_seconds)
    }
}

/// Elementwise sign/magnitude split of a return panel.
#[derive(Debug, Clone, PartialEq)]
pub struct SignMagnitudePanel {
    /// `T x N`, entries in {-1, 0, +1}.
    pub signs: DMatrix<f64>,
    /// `T x N`, entries >= 0.
    pub magnitudes: DMatrix<f64>,
}

impl SignMagnitudePanel {
    /// `signs * magnitudes` elementwise.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.signs.component_mul(&self.magnitudes)
    }
}

/// Sign with `sgn(0) = 0`.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Logarithmic price increments `ln p(t+1) - ln p(t)` for every asset.
pub fn log_returns(p: &PricePanel) -> Result<ReturnPanel> {
    let rows = p
        .prices
        .iter()
        .map(|row| row.windows(2).map(|w| w[1].ln() - w[0].ln()).collect())
        .collect();
    ReturnPanel::new(p.assets.clone(), rows, p.bars_per_day, p.dt_seconds())
}

/// `(x - mean) / std_pop` per row. Errors on the first constant row.
pub fn standardize(r: &ReturnPanel) -> Result<ReturnPanel> {
    let mut rows = Vec::with_capacity(r.n_assets());
    for (k, row) in r.rows().enumerate() {
        rows.push(standardize_series(row).ok_or_else(|| Error::ZeroVariance {
            asset: r.assets[k].clone(),
        })?);
    }
    let mut out = r.with_rows(r.assets.clone(), rows)?;
    out.standardized = true;
    Ok(out)
}

/// Like [`standardize`], but constant rows are dropped with a warning
/// instead of failing. Returns the labels of the dropped assets.
pub fn standardize_dropping(r: &ReturnPanel) -> Result<(ReturnPanel, Vec<String>)> {
    let mut assets = Vec::new();
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    for (k, row) in r.rows().enumerate() {
        match standardize_series(row) {
            Some(s) => {
                assets.push(r.assets[k].clone());
                rows.push(s);
            }
            None => {
                log::warn!("dropping `{}`: zero variance", r.assets[k]);
                dropped.push(r.assets[k].clone());
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::NoAssets);
    }
    let mut out = r.with_rows(assets, rows)?;
    out.standardized = true;
    Ok((out, dropped))
}

pub(crate) fn standardize_series(x: &[f64]) -> Option<Vec<f64>> {
    if stats::is_degenerate(x) {
        return None;
    }
    let m = stats::mean(x);
    let sd = stats::pop_variance(x).sqrt();
    Some(x.iter().map(|v| (v - m) / sd).collect())
}

/// Splits every return into `sign * magnitude`.
pub fn decompose(r: &ReturnPanel) -> SignMagnitudePanel {
    SignMagnitudePanel {
        signs: r.data.map(sign),
        magnitudes: r.data.map(f64::abs),
    }
}

/// Sums non-overlapping blocks of `factor` returns. A trailing partial block
/// is dropped. `factor` must divide `bars_per_day` so that blocks never
/// straddle a day boundary.
pub fn coarsen(r: &ReturnPanel, factor: usize) -> Result<ReturnPanel> {
    if factor == 0 {
        return Err(Error::InvalidParameter("coarsening factor must be >= 1".into()));
    }
    if !r.bars_per_day.is_multiple_of(factor) {
        return Err(Error::CoarsenFactor {
            factor,
            bars_per_day: r.bars_per_day,
        });
    }
    let rows = r
        .rows()
        .map(|row| row.chunks_exact(factor).map(|c| c.iter().sum()).collect())
        .collect();
    ReturnPanel::new(
        r.assets.clone(),
        rows,
        r.bars_per_day / factor,
        r.dt_seconds * factor as f64,
    )
}
