//! Seeded synthetic markets with known factor structure.
//!
//! Returns follow
//!
//! ```text
//! g_k(j) = (b_mkt F(j) + b_sec(k) S_sec(k)(j) + sigma e_k(j)) * u(j mod D) * w_k(j)
//! ```
//!
//! with independent standard normal `F`, `S`, `e`, an intraday multiplier
//! `u` over the `D` bars of a day and a log-AR(1) volatility `w_k`. Every
//! random series has its own stream keyed by `(seed, stream id)`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{self, ReturnPanel};
use crate::rng;

// Stream id ranges. Row-indexed ids below 2^40 are left to the surrogates so
// that a generated panel and its surrogates never share a stream.
const MARKET_STREAM: u64 = 1 << 40;
const VOL_STREAM: u64 = 1 << 41;
const NOISE_STREAM: u64 = 1 << 42;

fn default_dt() -> f64 {
    300.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorSpec {
    pub members: usize,
    pub loading: f64,
}

/// Multiplier applied to the bar at position `j mod bars_per_day`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntradayProfile {
    /// Explicit multipliers, one per bar; must have unit geometric mean.
    Values(Vec<f64>),
    /// `ln u(x) = amplitude * (|x|^exponent - mean)` on `x` evenly spaced in
    /// `[-1, 1]`: quiet mid-session, active open and close.
    UShape { amplitude: f64, exponent: f64 },
}

impl IntradayProfile {
    pub fn multipliers(&self, bars_per_day: usize) -> Result<Vec<f64>> {
        match self {
            Self::Values(v) => {
                if v.len() != bars_per_day {
                    return Err(Error::InvalidParameter(format!(
                        "intraday profile has {} values for {bars_per_day} bars per day",
                        v.len()
                    )));
                }
                if v.iter().any(|u| !(u.is_finite() && *u > 0.0)) {
                    return Err(Error::InvalidParameter(
                        "intraday multipliers must be positive".into(),
                    ));
                }
                let log_mean = v.iter().map(|u| u.ln()).sum::<f64>() / v.len() as f64;
                if log_mean.abs() > 1e-9 {
                    return Err(Error::InvalidParameter(format!(
                        "intraday profile must have unit geometric mean, got {}",
                        log_mean.exp()
                    )));
                }
                Ok(v.clone())
            }
            Self::UShape {
                amplitude,
                exponent,
            } => {
                if !(amplitude.is_finite() && exponent.is_finite() && *exponent > 0.0) {
                    return Err(Error::InvalidParameter("invalid U-shape parameters".into()));
                }
                let d = bars_per_day;
                let shape: Vec<f64> = (0..d)
                    .map(|i| {
                        let x = if d > 1 {
                            2.0 * i as f64 / (d - 1) as f64 - 1.0
                        } else {
                            0.0
                        };
                        amplitude * x.abs().powf(*exponent)
                    })
                    .collect();
                let mean = shape.iter().sum::<f64>() / d as f64;
                Ok(shape.iter().map(|s| (s - mean).exp()).collect())
            }
        }
    }
}

/// Log-AR(1) volatility: `ln w(j) = a ln w(j-1) + s eta(j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolClustering {
    pub persistence: f64,
    pub vol_of_vol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    pub n_assets: usize,
    pub t_length: usize,
    pub bars_per_day: usize,
    #[serde(default = "default_dt")]
    pub dt_seconds: f64,
    pub market_loading: f64,
    #[serde(default)]
    pub sectors: Vec<SectorSpec>,
    pub idiosyncratic_sigma: f64,
    #[serde(default)]
    pub intraday_profile: Option<IntradayProfile>,
    #[serde(default)]
    pub vol_clustering: Option<VolClustering>,
    #[serde(default)]
    pub seed: u64,
}

const PRESETS: [(&str, &str); 5] = [
    ("wishart", include_str!("../presets/wishart.toml")),
    ("one_factor", include_str!("../presets/one_factor.toml")),
    ("sectors", include_str!("../presets/sectors.toml")),
    ("intraday", include_str!("../presets/intraday.toml")),
    ("clustered", include_str!("../presets/clustered.toml")),
];

impl MarketModel {
    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(name, _)| *name)
    }

    /// Built-in preset by name.
    pub fn preset(name: &str) -> Result<Self> {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown preset `{name}`")))?;
        Self::from_toml(text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let model: Self = toml::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("invalid market model: {e}")))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("market model serializes")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_assets == 0 || self.t_length < 2 {
            return Err(Error::Dimension(format!(
                "need n_assets >= 1 and t_length >= 2, got {} x {}",
                self.n_assets, self.t_length
            )));
        }
        if self.bars_per_day == 0 {
            return Err(Error::InvalidParameter("bars_per_day must be positive".into()));
        }
        if !(self.dt_seconds.is_finite() && self.dt_seconds > 0.0) {
            return Err(Error::InvalidParameter("dt_seconds must be positive".into()));
        }
        if !(self.market_loading.is_finite() && self.market_loading >= 0.0) {
            return Err(Error::InvalidParameter("market_loading must be >= 0".into()));
        }
        if !(self.idiosyncratic_sigma.is_finite() && self.idiosyncratic_sigma > 0.0) {
            return Err(Error::InvalidParameter("idiosyncratic_sigma must be > 0".into()));
        }
        let members: usize = self.sectors.iter().map(|s| s.members).sum();
        if members > self.n_assets {
            return Err(Error::InvalidParameter(format!(
                "sectors hold {members} members but the market has {} assets",
                self.n_assets
            )));
        }
        if self.sectors.iter().any(|s| !(s.loading.is_finite() && s.loading >= 0.0)) {
            return Err(Error::InvalidParameter("sector loadings must be >= 0".into()));
        }
        if let Some(p) = &self.intraday_profile {
            p.multipliers(self.bars_per_day)?;
        }
        if let Some(v) = &self.vol_clustering {
            if !(0.0..1.0).contains(&v.persistence) || v.vol_of_vol.is_nan() || v.vol_of_vol < 0.0 {
                return Err(Error::InvalidParameter(
                    "vol clustering needs persistence in [0, 1) and vol_of_vol >= 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// Sector index of every asset (`None` outside all sectors).
    pub fn sector_of(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.n_assets];
        let mut next = 0;
        for (s, spec) in self.sectors.iter().enumerate() {
            for slot in out.iter_mut().skip(next).take(spec.members) {
                *slot = Some(s);
            }
            next += spec.members;
        }
        out
    }

    pub fn asset_names(&self) -> Vec<String> {
        let width = self.n_assets.to_string().len().max(3);
        (0..self.n_assets).map(|k| format!("S{k:0width$}")).collect()
    }
}

fn normals(seed: u64, stream: u64, len: usize) -> Vec<f64> {
    let mut rng = rng::stream(seed, stream);
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Generates the standardized return panel of `m`.
pub fn generate(m: &MarketModel) -> Result<ReturnPanel> {
    m.validate()?;
    let t = m.t_length;
    let market = normals(m.seed, MARKET_STREAM, t);
    let sectors: Vec<Vec<f64>> = (0..m.sectors.len())
        .map(|s| normals(m.seed, MARKET_STREAM + 1 + s as u64, t))
        .collect();
    let profile = match &m.intraday_profile {
        Some(p) => Some(p.multipliers(m.bars_per_day)?),
        None => None,
    };
    let sector_of = m.sector_of();

    let rows: Vec<Vec<f64>> = (0..m.n_assets)
        .into_par_iter()
        .map(|k| {
            let noise = normals(m.seed, NOISE_STREAM + k as u64, t);
            let vol = m.vol_clustering.map(|v| log_ar1(m.seed, VOL_STREAM + k as u64, t, v));
            let sector = sector_of[k].map(|s| (m.sectors[s].loading, &sectors[s]));
            (0..t)
                .map(|j| {
                    let mut g = m.market_loading * market[j] + m.idiosyncratic_sigma * noise[j];
                    if let Some((loading, series)) = sector {
                        g += loading * series[j];
                    }
                    if let Some(u) = &profile {
                        g *= u[j % m.bars_per_day];
                    }
                    if let Some(w) = &vol {
                        g *= w[j];
                    }
                    g
                })
                .collect()
        })
        .collect();
    let raw = ReturnPanel::new(m.asset_names(), rows, m.bars_per_day, m.dt_seconds)?;
    panel::standardize(&raw)
}

/// Stationary log-AR(1) volatility multipliers.
fn log_ar1(seed: u64, stream: u64, len: usize, v: VolClustering) -> Vec<f64> {
    let eta = normals(seed, stream, len + 1);
    let stationary_sd = v.vol_of_vol / (1.0 - v.persistence * v.persistence).sqrt();
    let mut x = stationary_sd * eta[0];
    eta[1..]
        .iter()
        .map(|e| {
            x = v.persistence * x + v.vol_of_vol * e;
            x.exp()
        })
        .collect()
}

/// Asymptotic (`T -> infinity`) largest eigenvalue `1 + (N - 1) rho` of a
/// one-factor market, `rho = b^2 / (b^2 + sigma^2)`.
pub fn expected_lambda1(m: &MarketModel) -> Result<f64> {
    m.validate()?;
    if !m.sectors.is_empty() || m.vol_clustering.is_some() {
        return Err(Error::InvalidParameter(
            "expected_lambda1 needs a single market factor without sectors or volatility clustering"
                .into(),
        ));
    }
    let b2 = m.market_loading * m.market_loading;
    let rho = b2 / (b2 + m.idiosyncratic_sigma * m.idiosyncratic_sigma);
    Ok(1.0 + (m.n_assets as f64 - 1.0) * rho)
}

/// Deterministic binomial multiplicative cascade of `2^levels` points:
/// `x_k = p^{n(k)} (1 - p)^{levels - n(k)}` with `n(k)` the number of ones
/// in the binary expansion of `k`.
pub fn binomial_cascade(p: f64, levels: u32) -> Result<Vec<f64>> {
    if !(0.0 < p && p < 1.0) {
        return Err(Error::InvalidParameter(format!("cascade weight must lie in (0, 1), got {p}")));
    }
    if levels == 0 || levels > 30 {
        return Err(Error::InvalidParameter(format!("cascade levels must be in 1..=30, got {levels}")));
    }
    Ok((0..1u64 << levels)
        .map(|k| {
            let ones = k.count_ones() as i32;
            p.powi(ones) * (1.0 - p).powi(levels as i32 - ones)
        })
        .collect())
}

/// Seeded i.i.d. standard normal series.
pub fn white_noise(len: usize, seed: u64) -> Vec<f64> {
    normals(seed, NOISE_STREAM, len)
}
