//! Eigensignals and collective-mode removal.
//!
//! An eigenvector `x_i` of the correlation matrix is a portfolio; its return
//! series `z_i = M^T x_i` is the eigensignal, with population variance equal
//! to `lambda_i`. Removing a mode regresses every asset on an eigensignal
//! (with intercept) and keeps the re-standardized residuals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{self, ReturnPanel};
use crate::spectrum::{self, EigenSpectrum};
use crate::stats;

/// Residual spread below this fraction of the asset's own spread counts as a
/// perfect fit.
const PERFECT_FIT_RATIO: f64 = 1e-10;

/// Return series of the portfolio given by eigenvector `index` (0 = largest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigensignal {
    pub index: usize,
    pub eigenvalue: f64,
    pub series: Vec<f64>,
}

/// Weighted row sum `G(j) = sum_s w_s g_s(j)`.
pub fn portfolio_return(r: &ReturnPanel, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != r.n_assets() {
        return Err(Error::Dimension(format!(
            "{} weights for {} assets",
            weights.len(),
            r.n_assets()
        )));
    }
    let w = nalgebra::DVector::from_column_slice(weights);
    Ok((r.matrix() * w).iter().copied().collect())
}

/// Eigensignals for the requested spectrum indices.
pub fn eigensignals(
    r: &ReturnPanel,
    s: &EigenSpectrum,
    indices: &[usize],
) -> Result<Vec<Eigensignal>> {
    if s.len() != r.n_assets() {
        return Err(Error::Dimension(format!(
            "spectrum of size {} for a panel of {} assets",
            s.len(),
            r.n_assets()
        )));
    }
    indices
        .iter()
        .map(|&i| {
            if i >= s.len() {
                return Err(Error::Dimension(format!(
                    "eigensignal index {i} out of range for {} modes",
                    s.len()
                )));
            }
            let x = s.eigenvectors.column(i);
            Ok(Eigensignal {
                index: i,
                eigenvalue: s.eigenvalues[i],
                series: (r.matrix() * x).iter().copied().collect(),
            })
        })
        .collect()
}

/// How later removal passes pick their regressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSource {
    /// Re-diagonalize the current residuals and remove their top mode.
    #[default]
    Sequential,
    /// Remove `Z_1, Z_2, ...` of the original matrix in turn.
    Original,
}

impl std::str::FromStr for ModeSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Self::Sequential),
            "original" => Ok(Self::Original),
            other => Err(Error::InvalidParameter(format!("unknown mode source `{other}`"))),
        }
    }
}

/// Coefficients of one removal pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalPass {
    /// Index of the removed mode in the spectrum it was taken from.
    pub mode_index: usize,
    pub eigenvalue: f64,
    /// Assets regressed in this pass, aligned with `alphas` and `betas`.
    pub assets: Vec<String>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Assets whose residual vanished in this pass.
    pub dropped: Vec<String>,
    /// Worst `|<eps_k, z>| / (T std(eps_k) std(z))` over assets.
    pub max_orthogonality: f64,
}

/// Re-standardized residuals plus the history of removed modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPanel {
    pub panel: ReturnPanel,
    pub passes: Vec<RemovalPass>,
}

impl ResidualPanel {
    pub fn removed_modes(&self) -> Vec<usize> {
        self.passes.iter().map(|p| p.mode_index).collect()
    }

    pub fn dropped_assets(&self) -> Vec<String> {
        self.passes.iter().flat_map(|p| p.dropped.clone()).collect()
    }
}

/// OLS of every asset on `(1, z)`; residuals are re-standardized. Assets the
/// regressor explains perfectly are dropped with a warning.
pub fn remove_mode(r: &ReturnPanel, z: &Eigensignal) -> Result<ResidualPanel> {
    let (panel, pass) = regress_out(r, z)?;
    Ok(ResidualPanel {
        panel,
        passes: vec![pass],
    })
}

fn regress_out(r: &ReturnPanel, z: &Eigensignal) -> Result<(ReturnPanel, RemovalPass)> {
    let t = r.len();
    if z.series.len() != t {
        return Err(Error::Dimension(format!(
            "regressor of length {} for series of length {t}",
            z.series.len()
        )));
    }
    let z_mean = stats::mean(&z.series);
    let z_var = stats::pop_variance(&z.series);
    if stats::is_degenerate(&z.series) {
        return Err(Error::ZeroVariance {
            asset: format!("eigensignal {}", z.index),
        });
    }
    let z_sd = z_var.sqrt();

    let mut alphas = Vec::with_capacity(r.n_assets());
    let mut betas = Vec::with_capacity(r.n_assets());
    let mut kept_assets = Vec::new();
    let mut kept_rows = Vec::new();
    let mut dropped = Vec::new();
    let mut max_orthogonality = 0.0_f64;

    for (k, g) in r.rows().enumerate() {
        let beta = stats::pop_covariance(g, &z.series) / z_var;
        let alpha = stats::mean(g) - beta * z_mean;
        let eps: Vec<f64> = g
            .iter()
            .zip(&z.series)
            .map(|(gj, zj)| gj - alpha - beta * zj)
            .collect();
        alphas.push(alpha);
        betas.push(beta);

        let eps_sd = stats::pop_variance(&eps).sqrt();
        let g_sd = stats::pop_variance(g).sqrt();
        if eps_sd <= PERFECT_FIT_RATIO * g_sd {
            log::warn!(
                "dropping `{}`: eigensignal {} explains it completely",
                r.assets()[k],
                z.index
            );
            dropped.push(r.assets()[k].clone());
            continue;
        }
        let dot: f64 = eps.iter().zip(&z.series).map(|(e, zj)| e * zj).sum();
        max_orthogonality = max_orthogonality.max(dot.abs() / (t as f64 * eps_sd * z_sd));
        kept_assets.push(r.assets()[k].clone());
        kept_rows.push(eps);
    }
    if kept_rows.is_empty() {
        return Err(Error::NoAssets);
    }
    let residuals = panel::standardize(&ReturnPanel::new(
        kept_assets,
        kept_rows,
        r.bars_per_day(),
        r.dt_seconds(),
    )?)?;
    let pass = RemovalPass {
        mode_index: z.index,
        eigenvalue: z.eigenvalue,
        assets: r.assets().to_vec(),
        alphas,
        betas,
        dropped,
        max_orthogonality,
    };
    Ok((residuals, pass))
}

/// Removes `count` modes one after another.
///
/// With [`ModeSource::Sequential`] each pass rebuilds the correlation matrix
/// of the current residuals and removes its top eigensignal. With
/// [`ModeSource::Original`] pass `p` removes eigensignal `p` of the original
/// panel.
pub fn remove_modes_iterative(
    r: &ReturnPanel,
    count: usize,
    source: ModeSource,
) -> Result<ResidualPanel> {
    if count == 0 {
        return Err(Error::InvalidParameter("mode-removal count must be >= 1".into()));
    }
    let original = match source {
        ModeSource::Original => {
            if count > r.n_assets() {
                return Err(Error::InvalidParameter(format!(
                    "cannot remove {count} original modes from {} assets",
                    r.n_assets()
                )));
            }
            let s = spectrum::eigendecompose(&spectrum::correlation_matrix(r)?)?;
            let indices: Vec<usize> = (0..count).collect();
            Some(eigensignals(r, &s, &indices)?)
        }
        ModeSource::Sequential => None,
    };

    let mut current = r.clone();
    let mut passes = Vec::with_capacity(count);
    for p in 0..count {
        let z = match &original {
            Some(signals) => signals[p].clone(),
            None => {
                let s = spectrum::eigendecompose(&spectrum::correlation_matrix(&current)?)?;
                eigensignals(&current, &s, &[0])?.remove(0)
            }
        };
        let (next, pass) = regress_out(&current, &z)?;
        current = next;
        passes.push(pass);
    }
    Ok(ResidualPanel {
        panel: current,
        passes,
    })
}
