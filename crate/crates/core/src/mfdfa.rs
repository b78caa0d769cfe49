//! Multifractal detrended fluctuation analysis.
//!
//! The pipeline for one series `x` of length `L`:
//!
//! 1. profile `Y(j) = sum_{k <= j} (x_k - <x>)`;
//! 2. for every scale `n`, split `Y` into `floor(L / n)` segments from the
//!    start and as many again from the end, subtract an order-`l` polynomial
//!    least-squares fit from each and record the mean squared residual;
//! 3. `F_q(n)` is the generalized mean of order `q/2` of those variances,
//!    square-rooted (the logarithmic mean for `q = 0`);
//! 4. `h(q)` is the slope of `ln F_q(n)` against `ln n`;
//! 5. `alpha = h + q h'(q)` and `f(alpha) = q (alpha - h) + 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

const MONOTONE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfdfaConfig {
    /// Sorted moment orders.
    pub q_grid: Vec<f64>,
    /// Order of the detrending polynomial.
    pub detrend_order: usize,
    /// Strictly increasing segment lengths.
    pub scales: Vec<usize>,
    /// Inclusive scale interval used for the `h(q)` fit.
    pub fit_range: (usize, usize),
}

impl MfdfaConfig {
    /// `-4, -3.8, ..., 4`.
    pub fn default_q_grid() -> Vec<f64> {
        (-20..=20).map(|i| f64::from(i) / 5.0).collect()
    }

    /// 20 geometrically spaced scales from 16 to `len / 20`, rounded and
    /// deduplicated.
    pub fn default_scales(len: usize) -> Vec<usize> {
        geometric_scales(16, len / 20, 20)
    }

    /// Default configuration for a series of length `len`.
    pub fn for_length(len: usize) -> Self {
        let scales = Self::default_scales(len);
        let fit_range = (
            scales.first().copied().unwrap_or(0),
            scales.last().copied().unwrap_or(0),
        );
        Self {
            q_grid: Self::default_q_grid(),
            detrend_order: 2,
            scales,
            fit_range,
        }
    }

    pub fn fit_scales(&self) -> Vec<usize> {
        self.scales
            .iter()
            .copied()
            .filter(|&n| self.fit_range.0 <= n && n <= self.fit_range.1)
            .collect()
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if self.q_grid.is_empty() {
            return Err(Error::InvalidParameter("q grid is empty".into()));
        }
        if self.q_grid.iter().any(|q| !q.is_finite()) {
            return Err(Error::InvalidParameter("q grid has non-finite values".into()));
        }
        if self.q_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("q grid must be strictly increasing".into()));
        }
        if let Some(q) = self.q_grid.iter().find(|&&q| q != 0.0 && q.abs() < 0.1) {
            return Err(Error::InvalidParameter(format!(
                "q = {q} is too close to 0; use q = 0 exactly or |q| >= 0.1"
            )));
        }
        if self.detrend_order == 0 {
            return Err(Error::InvalidParameter("detrend order must be >= 1".into()));
        }
        if self.scales.is_empty() || self.scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "scales must be non-empty and strictly increasing".into(),
            ));
        }
        let min_scale = self.scales[0];
        if min_scale < self.detrend_order + 2 {
            return Err(Error::UnderdeterminedFit {
                scale: min_scale,
                order: self.detrend_order,
            });
        }
        if len < 4 * min_scale {
            return Err(Error::Dimension(format!(
                "series of length {len} is shorter than 4 x minimum scale {min_scale}"
            )));
        }
        let max_scale = *self.scales.last().expect("non-empty");
        if max_scale > len / 4 {
            return Err(Error::InvalidParameter(format!(
                "maximum scale {max_scale} exceeds a quarter of the series length {len}"
            )));
        }
        let fitted = self.fit_scales().len();
        if fitted < 5 {
            return Err(Error::InvalidParameter(format!(
                "fit range {:?} covers {fitted} scales, need at least 5",
                self.fit_range
            )));
        }
        Ok(())
    }
}

/// `count` geometrically spaced integers from `lo` to `hi`, deduplicated.
pub fn geometric_scales(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if hi <= lo || count < 2 {
        return vec![lo];
    }
    let ratio = (hi as f64 / lo as f64).ln();
    let mut out: Vec<usize> = (0..count)
        .map(|i| (lo as f64 * (ratio * i as f64 / (count - 1) as f64).exp()).round() as usize)
        .collect();
    out.dedup();
    out
}

/// Cumulative sum of the mean-subtracted series.
pub fn profile(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Dimension("cannot build the profile of an empty series".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("series".into()));
    }
    let m = stats::mean(x);
    let mut acc = 0.0;
    Ok(x.iter()
        .map(|v| {
            acc += v - m;
            acc
        })
        .collect())
}

/// Orthonormal polynomial basis of degree `<= order` on `n` equally spaced
/// points mapped to `[-1, 1]`. Columns are stored one after another.
fn polynomial_basis(n: usize, order: usize) -> Vec<Vec<f64>> {
    let half = (n as f64 - 1.0) / 2.0;
    let x: Vec<f64> = (0..n).map(|k| (k as f64 - half) / half).collect();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(order + 1);
    for degree in 0..=order {
        let mut v: Vec<f64> = x.iter().map(|xi| xi.powi(degree as i32)).collect();
        // two rounds of modified Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                v.iter_mut().zip(b).for_each(|(a, c)| *a -= proj * c);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        basis.push(v);
    }
    basis
}

fn detrended_variance(segment: &[f64], basis: &[Vec<f64>]) -> f64 {
    let mut resid = segment.to_vec();
    for b in basis {
        let coef: f64 = segment.iter().zip(b).map(|(y, c)| y * c).sum();
        resid.iter_mut().zip(b).for_each(|(r, c)| *r -= coef * c);
    }
    resid.iter().map(|r| r * r).sum::<f64>() / segment.len() as f64
}

/// Detrended variances of the `2 * floor(L / n)` segments of length `n`:
/// forward segments first, then the segments aligned to the end.
pub fn segment_variances(profile: &[f64], n: usize, order: usize) -> Result<Vec<f64>> {
    if order == 0 {
        return Err(Error::InvalidParameter("detrend order must be >= 1".into()));
    }
    if n <= order + 1 {
        return Err(Error::UnderdeterminedFit { scale: n, order });
    }
    let len = profile.len();
    if n > len / 4 {
        return Err(Error::InvalidParameter(format!(
            "scale {n} exceeds a quarter of the series length {len}"
        )));
    }
    let basis = polynomial_basis(n, order);
    let segments = len / n;
    let offset = len - segments * n;
    let forward = profile[..segments * n].chunks_exact(n);
    let backward = profile[offset..].chunks_exact(n);
    Ok(forward
        .chain(backward)
        .map(|s| detrended_variance(s, &basis))
        .collect())
}

/// `F_q = { mean_nu [F^2(nu)]^{q/2} }^{1/q}`, with the logarithmic mean
/// `exp(mean(ln F^2) / 2)` at `q = 0`.
pub fn fluctuation(variances: &[f64], q: f64) -> Result<f64> {
    if variances.is_empty() {
        return Err(Error::Dimension("no segment variances".into()));
    }
    if variances.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::NonFinite("segment variances".into()));
    }
    let max = variances.iter().fold(0.0_f64, |a, &v| a.max(v));
    if max == 0.0 {
        return Err(Error::InvalidParameter("all segment variances are zero".into()));
    }
    let min = variances.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if q <= 0.0 && min == 0.0 {
        return Err(Error::DivergentMoment { q });
    }
    let count = variances.len() as f64;
    if q == 0.0 {
        let mean_log = variances.iter().map(|v| v.ln()).sum::<f64>() / count;
        return Ok((0.5 * mean_log).exp());
    }
    // normalize by the extreme that keeps every power <= 1
    let pivot = if q > 0.0 { max } else { min };
    let mean = variances.iter().map(|v| (v / pivot).powf(q / 2.0)).sum::<f64>() / count;
    Ok(pivot.sqrt() * mean.powf(1.0 / q))
}

/// `F_q(n)` over the configured grid, indexed `[q][scale]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationSurface {
    pub q_grid: Vec<f64>,
    pub scales: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

/// Profile, segment variances and fluctuation functions of `x`.
pub fn fluctuation_surface(x: &[f64], cfg: &MfdfaConfig) -> Result<FluctuationSurface> {
    cfg.validate(x.len())?;
    let y = profile(x)?;
    let by_scale: Vec<Vec<f64>> = cfg
        .scales
        .par_iter()
        .map(|&n| {
            let v = segment_variances(&y, n, cfg.detrend_order)?;
            cfg.q_grid.iter().map(|&q| fluctuation(&v, q)).collect()
        })
        .collect::<Result<_>>()?;
    let values = (0..cfg.q_grid.len())
        .map(|i| by_scale.iter().map(|col| col[i]).collect())
        .collect();
    Ok(FluctuationSurface {
        q_grid: cfg.q_grid.clone(),
        scales: cfg.scales.clone(),
        values,
    })
}

/// Per-`q` log-log fit of `F_q(n)` against `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstFit {
    pub h: Vec<f64>,
    pub intercept: Vec<f64>,
    /// Root-mean-square residual of the log-log fit.
    pub residual_rms: Vec<f64>,
}

/// Generalized Hurst exponents by least squares over `cfg.fit_range`.
pub fn hurst_exponents(surface: &FluctuationSurface, cfg: &MfdfaConfig) -> Result<HurstFit> {
    let picked: Vec<usize> = surface
        .scales
        .iter()
        .enumerate()
        .filter(|(_, &n)| cfg.fit_range.0 <= n && n <= cfg.fit_range.1)
        .map(|(i, _)| i)
        .collect();
    if picked.len() < 5 {
        return Err(Error::InvalidParameter(format!(
            "fit range {:?} covers {} scales, need at least 5",
            cfg.fit_range,
            picked.len()
        )));
    }
    let log_n: Vec<f64> = picked.iter().map(|&i| (surface.scales[i] as f64).ln()).collect();
    let mut fit = HurstFit {
        h: Vec::with_capacity(surface.q_grid.len()),
        intercept: Vec::with_capacity(surface.q_grid.len()),
        residual_rms: Vec::with_capacity(surface.q_grid.len()),
    };
    for (qi, row) in surface.values.iter().enumerate() {
        let log_f: Vec<f64> = picked.iter().map(|&i| row[i].ln()).collect();
        if log_f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "fluctuation function at q = {}",
                surface.q_grid[qi]
            )));
        }
        let (slope, intercept) = linear_fit(&log_n, &log_f);
        let rms = (log_n
            .iter()
            .zip(&log_f)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum::<f64>()
            / log_n.len() as f64)
            .sqrt();
        fit.h.push(slope);
        fit.intercept.push(intercept);
        fit.residual_rms.push(rms);
    }
    Ok(fit)
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mx = stats::mean(x);
    let my = stats::mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Legendre representation `(alpha(q), f(q))` of a multifractal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularitySpectrum {
    pub q: Vec<f64>,
    pub h: Vec<f64>,
    pub alpha: Vec<f64>,
    pub f: Vec<f64>,
    /// `max alpha - min alpha`.
    pub width: f64,
    /// Non-fatal shape diagnostics (non-monotone alpha, f above 1).
    pub warnings: Vec<String>,
}

impl SingularitySpectrum {
    /// `alpha` at the maximum of `f`.
    pub fn apex(&self) -> f64 {
        let i = self
            .f
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("non-empty spectrum");
        self.alpha[i]
    }

    pub fn max_f(&self) -> f64 {
        self.f.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn h_at(&self, q: f64) -> Option<f64> {
        self.q.iter().position(|&x| x == q).map(|i| self.h[i])
    }
}

/// `alpha = h + q h'` and `f = q (alpha - h) + 1`, with `h'` from central
/// differences (one-sided at the grid ends).
pub fn singularity_spectrum(h: &[f64], q_grid: &[f64]) -> Result<SingularitySpectrum> {
    if h.len() != q_grid.len() {
        return Err(Error::Dimension(format!(
            "{} exponents for {} q values",
            h.len(),
            q_grid.len()
        )));
    }
    let m = h.len();
    if m < 5 {
        return Err(Error::InvalidParameter(format!(
            "singularity spectrum needs at least 5 q values, got {m}"
        )));
    }
    let dh: Vec<f64> = (0..m)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                i if i == m - 1 => (m - 2, m - 1),
                i => (i - 1, i + 1),
            };
            (h[b] - h[a]) / (q_grid[b] - q_grid[a])
        })
        .collect();
    let alpha: Vec<f64> = (0..m).map(|i| h[i] + q_grid[i] * dh[i]).collect();
    let f: Vec<f64> = (0..m).map(|i| q_grid[i] * (alpha[i] - h[i]) + 1.0).collect();
    Ok(assemble(q_grid.to_vec(), h.to_vec(), alpha, f))
}

fn assemble(q: Vec<f64>, h: Vec<f64>, alpha: Vec<f64>, f: Vec<f64>) -> SingularitySpectrum {
    let lo = alpha.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut warnings = Vec::new();
    if let Some(i) = alpha.windows(2).position(|w| w[1] > w[0] + MONOTONE_TOL) {
        warnings.push(format!(
            "alpha increases between q = {} and q = {}",
            q[i],
            q[i + 1]
        ));
    }
    let f_max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if f_max > 1.0 + MONOTONE_TOL {
        warnings.push(format!("f(alpha) reaches {f_max:.6} > 1"));
    }
    SingularitySpectrum {
        q,
        h,
        alpha,
        f,
        width: hi - lo,
        warnings,
    }
}

/// Pointwise mean of `h`, `alpha` and `f` at fixed `q` over several spectra.
pub fn average_spectra(spectra: &[SingularitySpectrum]) -> Result<SingularitySpectrum> {
    let first = spectra
        .first()
        .ok_or_else(|| Error::Dimension("no spectra to average".into()))?;
    if spectra.iter().any(|s| s.q != first.q) {
        return Err(Error::InvalidParameter("spectra use different q grids".into()));
    }
    let count = spectra.len() as f64;
    let mean_of = |pick: fn(&SingularitySpectrum) -> &Vec<f64>| -> Vec<f64> {
        (0..first.q.len())
            .map(|i| spectra.iter().map(|s| pick(s)[i]).sum::<f64>() / count)
            .collect()
    };
    Ok(assemble(
        first.q.clone(),
        mean_of(|s| &s.h),
        mean_of(|s| &s.alpha),
        mean_of(|s| &s.f),
    ))
}

/// Everything computed for one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfdfaResult {
    pub surface: FluctuationSurface,
    pub hurst: HurstFit,
    pub spectrum: SingularitySpectrum,
}

pub fn analyze(x: &[f64], cfg: &MfdfaConfig) -> Result<MfdfaResult> {
    let surface = fluctuation_surface(x, cfg)?;
    let hurst = hurst_exponents(&surface, cfg)?;
    let spectrum = singularity_spectrum(&hurst.h, &cfg.q_grid)?;
    Ok(MfdfaResult {
        surface,
        hurst,
        spectrum,
    })
}
