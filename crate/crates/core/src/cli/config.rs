use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::modes::ModeSource;
use crate::surrogate::SurrogateKind;

pub const DEFAULT_BARS_PER_DAY: usize = 78;
pub const DEFAULT_BINS: usize = 50;
pub const DEFAULT_REMOVE_COUNT: usize = 2;
pub const DEFAULT_DETREND_ORDER: usize = 2;
pub const SEED_ENV: &str = "XCORR_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PanelFormat {
    /// `timestamp,asset,price` rows.
    Long,
    /// `t,<asset>,<asset>,...` price matrix.
    Wide,
    /// Return panel as written by this tool.
    Panel,
}

/// One layer of settings; flags, the config file and defaults are merged
/// field by field, earlier layers winning.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub input: Option<PathBuf>,
    pub format: Option<PanelFormat>,
    pub bars_per_day: Option<usize>,
    pub q_target: Option<f64>,
    pub bins: Option<usize>,
    pub remove_count: Option<usize>,
    pub mode_source: Option<ModeSource>,
    pub surrogate_kind: Option<SurrogateKind>,
    pub seed: Option<u64>,
    pub q_grid: Option<Vec<f64>>,
    pub detrend_order: Option<usize>,
    pub scales: Option<Vec<usize>>,
    pub fit_range: Option<(usize, usize)>,
    /// 1-based eigensignal indices for `mfdfa`.
    pub eigensignals: Option<Vec<usize>>,
    pub preset: Option<String>,
    pub out: Option<PathBuf>,
}

impl ConfigLayer {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut layer: Self = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        // Relative paths in a config file are relative to the file.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut layer.input, &mut layer.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(preset) = &mut layer.preset {
            if preset.ends_with(".toml") && Path::new(preset.as_str()).is_relative() {
                *preset = base.join(&*preset).to_string_lossy().into_owned();
            }
        }
        Ok(layer)
    }

    /// Fills every unset field of `self` from `lower`.
    pub fn or(self, lower: Self) -> Self {
        Self {
            input: self.input.or(lower.input),
            format: self.format.or(lower.format),
            bars_per_day: self.bars_per_day.or(lower.bars_per_day),
            q_target: self.q_target.or(lower.q_target),
            bins: self.bins.or(lower.bins),
            remove_count: self.remove_count.or(lower.remove_count),
            mode_source: self.mode_source.or(lower.mode_source),
            surrogate_kind: self.surrogate_kind.or(lower.surrogate_kind),
            seed: self.seed.or(lower.seed),
            q_grid: self.q_grid.or(lower.q_grid),
            detrend_order: self.detrend_order.or(lower.detrend_order),
            scales: self.scales.or(lower.scales),
            fit_range: self.fit_range.or(lower.fit_range),
            eigensignals: self.eigensignals.or(lower.eigensignals),
            preset: self.preset.or(lower.preset),
            out: self.out.or(lower.out),
        }
    }
}

/// Fully resolved settings of one invocation.
///
/// `bars_per_day` stays optional so that metadata carried by a panel file can
/// fill it when neither a flag nor the config file set it. The output
/// directory is not part of the serialized form, so moving a run elsewhere
/// keeps its hash.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisConfig {
    pub command: String,
    pub input: Option<PathBuf>,
    pub format: Option<PanelFormat>,
    pub bars_per_day: Option<usize>,
    pub q_target: Option<f64>,
    pub bins: usize,
    pub remove_count: usize,
    pub mode_source: ModeSource,
    pub surrogate_kind: SurrogateKind,
    pub seed: u64,
    pub seed_explicit: bool,
    pub q_grid: Option<Vec<f64>>,
    pub detrend_order: usize,
    pub scales: Option<Vec<usize>>,
    pub fit_range: Option<(usize, usize)>,
    pub eigensignals: Option<Vec<usize>>,
    pub preset: Option<String>,
    #[serde(skip)]
    pub out: PathBuf,
}

impl AnalysisConfig {
    pub fn resolve(command: &str, layer: ConfigLayer) -> Result<Self, CliError> {
        let env_seed = match std::env::var(SEED_ENV) {
            Ok(s) => Some(s.trim().parse::<u64>().map_err(|_| {
                CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{s}`"))
            })?),
            Err(_) => None,
        };
        let seed = layer.seed.or(env_seed);
        let out = layer
            .out
            .ok_or_else(|| CliError::Usage("--out is required".into()))?;
        let cfg = Self {
            command: command.to_string(),
            input: layer.input,
            format: layer.format,
            bars_per_day: layer.bars_per_day,
            q_target: layer.q_target,
            bins: layer.bins.unwrap_or(DEFAULT_BINS),
            remove_count: layer.remove_count.unwrap_or(DEFAULT_REMOVE_COUNT),
            mode_source: layer.mode_source.unwrap_or_default(),
            surrogate_kind: layer.surrogate_kind.unwrap_or(SurrogateKind::RotateFree),
            seed: seed.unwrap_or(0),
            seed_explicit: seed.is_some(),
            q_grid: layer.q_grid,
            detrend_order: layer.detrend_order.unwrap_or(DEFAULT_DETREND_ORDER),
            scales: layer.scales,
            fit_range: layer.fit_range,
            eigensignals: layer.eigensignals,
            preset: layer.preset,
            out,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if let Some(input) = &self.input {
            if !input.is_file() {
                return bad(format!("input file {} does not exist", input.display()));
            }
        }
        if self.input.is_some() && self.preset.is_some() {
            return bad("give either --input or --preset, not both".into());
        }
        if self.bars_per_day == Some(0) {
            return bad("--bars-per-day must be positive".into());
        }
        if let Some(q) = self.q_target {
            if !(q.is_finite() && q > 0.0) {
                return bad(format!("--q-target must be positive, got {q}"));
            }
        }
        if self.bins < 10 {
            return bad(format!("--bins must be >= 10, got {}", self.bins));
        }
        if self.remove_count == 0 {
            return bad("--remove-count must be >= 1".into());
        }
        if self.detrend_order == 0 {
            return bad("--detrend-order must be >= 1".into());
        }
        if let Some(idx) = &self.eigensignals {
            if idx.is_empty() || idx.contains(&0) {
                return bad("--eigensignals takes 1-based indices".into());
            }
        }
        if let Some(p) = &self.preset {
            if p.ends_with(".toml") && !Path::new(p).is_file() {
                return bad(format!("preset file {p} does not exist"));
            }
        }
        Ok(())
    }

    /// Canonical JSON of the settings that determine the results.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty())
}

/// `lo:hi:step` or a comma-separated list.
pub fn parse_q_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<_, _>>()?;
        let (lo, hi, step) = (v[0], v[1], v[2]);
        if !(step > 0.0 && hi >= lo) {
            return Err("expected lo:hi:step with hi >= lo and step > 0".into());
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        // Snap to multiples of step so that 0 is hit exactly when on the grid.
        return Ok((0..=n)
            .map(|i| {
                let q = lo + i as f64 * step;
                if q.abs() < 1e-9 * step { 0.0 } else { q }
            })
            .collect());
    }
    split_list(s)
        .map(|p| p.parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect()
}

/// `min:max:count` (geometric) or a comma-separated list.
pub fn parse_scales(s: &str) -> Result<Vec<usize>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let v: Vec<usize> = parts
            .iter()
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<_, _>>()?;
        return Ok(crate::mfdfa::geometric_scales(v[0], v[1], v[2]));
    }
    split_list(s)
        .map(|p| p.parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect()
}

pub fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo = lo.trim().parse().map_err(|e| format!("`{lo}`: {e}"))?;
    let hi = hi.trim().parse().map_err(|e| format!("`{hi}`: {e}"))?;
    Ok((lo, hi))
}

pub fn parse_indices(s: &str) -> Result<Vec<usize>, String> {
    split_list(s)
        .map(|p| p.parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect()
}
