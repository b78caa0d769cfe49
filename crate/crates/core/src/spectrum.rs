//! Correlation matrices, their eigenspectra and random-matrix reference bounds.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{self, ReturnPanel};
use crate::stats;

/// Symmetric `N x N` Pearson correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    values: DMatrix<f64>,
    t_length: usize,
}

impl CorrelationMatrix {
    /// Wraps an arbitrary square matrix. Symmetry is checked by
    /// [`eigendecompose`], not here, so that non-symmetric input can be
    /// reported there.
    pub fn from_values(values: DMatrix<f64>, t_length: usize) -> Result<Self> {
        if !values.is_square() || values.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "correlation matrix must be square and non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        Ok(Self { values, t_length })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_series(&self) -> usize {
        self.values.nrows()
    }

    pub fn t_length(&self) -> usize {
        self.t_length
    }

    pub fn trace(&self) -> f64 {
        self.values.trace()
    }

    /// Largest `|C_mn - C_nm|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.n_series();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.values[(i, j)] - self.values[(j, i)]).abs());
            }
        }
        worst
    }

    /// Entries above the diagonal, each unordered pair once, row by row.
    pub fn off_diagonal(&self) -> Vec<f64> {
        let n = self.n_series();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(self.values[(i, j)]);
            }
        }
        out
    }

    /// Row-major copy of the entries.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

/// `C = M M^T / T` for a standardized panel.
pub fn correlation_matrix(r: &ReturnPanel) -> Result<CorrelationMatrix> {
    if !r.is_standardized() {
        return Err(Error::NotStandardized);
    }
    let m = r.matrix();
    let t = r.len() as f64;
    let mut c = m.tr_mul(m) / t;
    let n = c.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(CorrelationMatrix {
        values: c,
        t_length: r.len(),
    })
}

/// Eigenvalues in descending order with their orthonormal eigenvectors.
///
/// Column `i` of `eigenvectors` is the eigenvector of `eigenvalues[i]`, and
/// its largest-magnitude component is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSpectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    /// `T / N` of the matrix the spectrum came from.
    pub source_q: f64,
}

impl EigenSpectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn largest(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn smallest(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    /// `lambda_max - lambda_min` of the empirical spectrum.
    pub fn support_width(&self) -> f64 {
        self.largest() - self.smallest()
    }

    pub fn eigenvector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i).iter().copied().collect()
    }

    pub fn sum(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// `max_ij |x_i . x_j - delta_ij|`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.eigenvectors.tr_mul(&self.eigenvectors);
        let n = g.nrows();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// `max |C - sum_i lambda_i x_i x_i^T|`.
    pub fn reconstruction_error(&self, c: &CorrelationMatrix) -> f64 {
        let x = &self.eigenvectors;
        let scaled = x * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.eigenvalues.clone()));
        let rebuilt = scaled * x.transpose();
        (c.values() - rebuilt).amax()
    }

    /// Row-major eigenvector matrix: `rows[k][i]` is component `k` of `x_i`.
    pub fn eigenvector_rows(&self) -> Vec<Vec<f64>> {
        self.eigenvectors
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

/// Diagonalizes a symmetric matrix.
pub fn eigendecompose(c: &CorrelationMatrix) -> Result<EigenSpectrum> {
    let scale = c.values.amax().max(1.0);
    let asym = c.asymmetry();
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    if c.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation matrix".into()));
    }
    let n = c.n_series();
    let eig = SymmetricEigen::new(c.values.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        let pivot = col.iamax();
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        eigenvectors.set_column(dst, &col);
    }
    Ok(EigenSpectrum {
        eigenvalues,
        eigenvectors,
        source_q: c.t_length as f64 / n as f64,
    })
}

/// Marchenko-Pastur support of a Wishart correlation matrix with `Q = T/N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpBounds {
    pub q: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl MpBounds {
    pub fn width(&self) -> f64 {
        self.lambda_max - self.lambda_min
    }

    pub fn contains(&self, lambda: f64) -> bool {
        self.lambda_min <= lambda && lambda <= self.lambda_max
    }

    /// Fraction of `eigenvalues` inside `[lambda_min, lambda_max]`.
    pub fn overlap(&self, eigenvalues: &[f64]) -> f64 {
        if eigenvalues.is_empty() {
            return 0.0;
        }
        let inside = eigenvalues.iter().filter(|&&l| self.contains(l)).count();
        inside as f64 / eigenvalues.len() as f64
    }
}

/// `lambda = 1 + 1/Q -/+ 2/sqrt(Q)`.
pub fn mp_bounds(q: f64) -> Result<MpBounds> {
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::InvalidParameter(format!("Q must be positive, got {q}")));
    }
    let centre = 1.0 + 1.0 / q;
    let half = 2.0 / q.sqrt();
    Ok(MpBounds {
        q,
        lambda_min: centre - half,
        lambda_max: centre + half,
    })
}

/// Fraction of eigenvalues inside the bounds.
pub fn overlap_fraction(s: &EigenSpectrum, b: &MpBounds) -> f64 {
    b.overlap(&s.eigenvalues)
}

/// Histogram of off-diagonal correlation entries with a moment-fitted normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementDistribution {
    pub bin_edges: Vec<f64>,
    /// Normalized to unit area.
    pub densities: Vec<f64>,
    pub n_entries: usize,
    pub gaussian_mu: f64,
    pub gaussian_sigma: f64,
    /// All entries equal; no meaningful fit.
    pub degenerate: bool,
    /// Empirical 99th percentile of the entries.
    pub percentile_99: f64,
    /// `(empirical - fit) / sigma_resid` in the bin holding the 99th
    /// percentile, where `sigma_resid` is the standard deviation of the
    /// per-bin residuals. `None` for degenerate input.
    pub tail_deviation: Option<f64>,
}

impl ElementDistribution {
    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn fitted_density(&self, x: f64) -> f64 {
        normal_pdf(x, self.gaussian_mu, self.gaussian_sigma)
    }
}

fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Distribution of the off-diagonal entries of `c`.
pub fn element_distribution(c: &CorrelationMatrix, n_bins: usize) -> Result<ElementDistribution> {
    if c.n_series() < 3 {
        return Err(Error::Dimension(format!(
            "element distribution needs N >= 3, got {}",
            c.n_series()
        )));
    }
    distribution_of(&c.off_diagonal(), n_bins)
}

/// Histogram and moment fit of an arbitrary set of matrix entries.
pub fn distribution_of(entries: &[f64], n_bins: usize) -> Result<ElementDistribution> {
    if n_bins < 10 {
        return Err(Error::InvalidParameter(format!("n_bins must be >= 10, got {n_bins}")));
    }
    if entries.is_empty() {
        return Err(Error::Dimension("no matrix entries to histogram".into()));
    }
    let mu = stats::mean(entries);
    let sigma = stats::pop_variance(entries).sqrt();
    let mut sorted = entries.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let degenerate = hi == lo;
    let (lo, hi) = if degenerate { (lo - 0.5, lo + 0.5) } else { (lo, hi) };
    let width = (hi - lo) / n_bins as f64;
    let bin_edges: Vec<f64> = (0..=n_bins).map(|b| lo + width * b as f64).collect();

    let mut counts = vec![0usize; n_bins];
    for &x in entries {
        counts[bin_index(x, lo, width, n_bins)] += 1;
    }
    let total = entries.len() as f64;
    let densities: Vec<f64> = counts.iter().map(|&c| c as f64 / (total * width)).collect();

    let rank = ((0.99 * total).ceil() as usize).clamp(1, sorted.len());
    let percentile_99 = sorted[rank - 1];

    let tail_deviation = if degenerate || sigma == 0.0 {
        None
    } else {
        let residuals: Vec<f64> = bin_edges
            .windows(2)
            .zip(&densities)
            .map(|(w, d)| d - normal_pdf(0.5 * (w[0] + w[1]), mu, sigma))
            .collect();
        let sigma_resid = stats::pop_variance(&residuals).sqrt();
        let b = bin_index(percentile_99, lo, width, n_bins);
        (sigma_resid > 0.0).then(|| residuals[b] / sigma_resid)
    };

    Ok(ElementDistribution {
        bin_edges,
        densities,
        n_entries: entries.len(),
        gaussian_mu: mu,
        gaussian_sigma: sigma,
        degenerate,
        percentile_99,
        tail_deviation,
    })
}

fn bin_index(x: f64, lo: f64, width: f64, n_bins: usize) -> usize {
    (((x - lo) / width).floor().max(0.0) as usize).min(n_bins - 1)
}

/// Cuts the panel into `floor(T / L)` windows of length `L = round(q_target * N)`,
/// standardizes each window separately and pools the off-diagonal entries of
/// all window correlation matrices into one distribution.
pub fn windowed_element_distribution(
    r: &ReturnPanel,
    q_target: f64,
    n_bins: usize,
) -> Result<ElementDistribution> {
    if !(q_target.is_finite() && q_target > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "q_target must be positive, got {q_target}"
        )));
    }
    let n = r.n_assets();
    if n < 3 {
        return Err(Error::Dimension(format!(
            "element distribution needs N >= 3, got {n}"
        )));
    }
    let window = (q_target * n as f64).round() as usize;
    if window < 2 || window > r.len() {
        return Err(Error::InvalidParameter(format!(
            "window length {window} does not fit a series of length {}",
            r.len()
        )));
    }
    let n_windows = r.len() / window;
    let per_window: Vec<Vec<f64>> = (0..n_windows)
        .into_par_iter()
        .map(|w| {
            let slice = panel::standardize(&r.window(w * window, window)?)?;
            Ok(correlation_matrix(&slice)?.off_diagonal())
        })
        .collect::<Result<_>>()?;
    let pooled: Vec<f64> = per_window.into_iter().flatten().collect();
    distribution_of(&pooled, n_bins)
}
