use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::AnalysisConfig;
use super::ingest::{self, FillReport, Ingested};
use super::{CliError, Command};
use crate::mfdfa::{self, MfdfaConfig};
use crate::modes;
use crate::panel::{self, ReturnPanel};
use crate::spectrum::{self, CorrelationMatrix, EigenSpectrum, MpBounds};
use crate::surrogate::{SurrogateKind, SurrogateSpec};
use crate::synth::{self, MarketModel};

pub fn run(command: Command, cfg: AnalysisConfig) -> Result<(), CliError> {
    let run = Run::start(cfg)?;
    info!("{} -> {}", command.name(), run.cfg.out.display());
    match command {
        Command::Spectrum => run.spectrum(),
        Command::Elements => run.elements(),
        Command::Remove => run.remove(),
        Command::Surrogate => run.surrogate(),
        Command::Mfdfa => run.mfdfa(),
        Command::Synth => run.synth(),
        Command::Report => run.report(),
    }
}

/// Removes the lock file when the run ends, however it ends.
struct Lock(PathBuf);

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

struct Run {
    cfg: AnalysisConfig,
    hash: String,
    _lock: Lock,
}

/// A standardized panel with its origin.
struct Loaded {
    panel: ReturnPanel,
    source: String,
    model: Option<MarketModel>,
    fill: FillReport,
    dropped_constant: Vec<String>,
}

impl Loaded {
    fn summary(&self) -> Value {
        json!({
            "source": self.source,
            "n_assets": self.panel.n_assets(),
            "t_length": self.panel.len(),
            "q": self.panel.q(),
            "bars_per_day": self.panel.bars_per_day(),
            "dt_seconds": self.panel.dt_seconds(),
            "filled_bars": self.fill.filled,
            "dropped_sparse": self.fill.dropped,
            "dropped_constant": self.dropped_constant,
        })
    }
}

struct SpectrumSummary {
    matrix: CorrelationMatrix,
    spectrum: EigenSpectrum,
    bounds: MpBounds,
    overlap: f64,
}

impl SpectrumSummary {
    fn of(r: &ReturnPanel) -> Result<Self, CliError> {
        let matrix = spectrum::correlation_matrix(r)?;
        let spectrum = spectrum::eigendecompose(&matrix)?;
        let bounds = spectrum::mp_bounds(r.q())?;
        let overlap = spectrum::overlap_fraction(&spectrum, &bounds);
        Ok(Self {
            matrix,
            spectrum,
            bounds,
            overlap,
        })
    }

    /// Eigenvalues, bounds and diagnostics, without the matrices.
    fn brief(&self) -> Value {
        json!({
            "eigenvalues": self.spectrum.eigenvalues,
            "bounds": self.bounds,
            "overlap_fraction": self.overlap,
            "support_width": self.spectrum.support_width(),
            "width_over_mp": self.spectrum.support_width() / self.bounds.width(),
            "trace": self.matrix.trace(),
            "reconstruction_error": self.spectrum.reconstruction_error(&self.matrix),
        })
    }
}

fn standardized(r: ReturnPanel) -> Result<(ReturnPanel, Vec<String>), CliError> {
    if r.is_standardized() {
        return Ok((r, Vec::new()));
    }
    let (p, dropped) = panel::standardize_dropping(&r)?;
    for a in &dropped {
        warn!("dropping constant series `{a}`");
    }
    Ok((p, dropped))
}

fn figure_of(kind: SurrogateKind) -> &'static str {
    match kind {
        SurrogateKind::RotateFree => "fig3a-analogue",
        SurrogateKind::RotateDaily => "fig3b-analogue",
        SurrogateKind::ShuffleSigns => "fig4a-analogue",
        SurrogateKind::ShuffleMagnitudes => "fig4b-analogue",
        SurrogateKind::SignsOnly => "fig5a-analogue",
        SurrogateKind::MagnitudesOnly => "fig5b-analogue",
    }
}

fn section<T: Serialize>(r: Result<T, CliError>) -> Value {
    match r {
        Ok(v) => serde_json::to_value(v).expect("section serializes"),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

impl Run {
    fn start(cfg: AnalysisConfig) -> Result<Self, CliError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CliError::Io { path, source }
        };
        std::fs::create_dir_all(&cfg.out).map_err(io(&cfg.out))?;
        let lock_path = cfg.out.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&lock_path) {
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(CliError::Locked(cfg.out.clone()));
            }
            Err(e) => return Err(io(&lock_path)(e)),
        }
        let lock = Lock(lock_path);
        let hash = cfg.hash();
        let run = Self {
            cfg,
            hash,
            _lock: lock,
        };
        run.write_json(
            "config.json",
            json!({ "config_hash": run.hash, "config": run.cfg }),
        )?;
        Ok(run)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn write_json(&self, name: &str, mut value: Value) -> Result<(), CliError> {
        if let Value::Object(map) = &mut value {
            map.insert("config_hash".into(), Value::String(self.hash.clone()));
            map.insert("command".into(), Value::String(self.cfg.command.clone()));
        }
        let mut text = serde_json::to_string_pretty(&value).expect("artifact serializes");
        text.push('\n');
        ingest::write_file(&self.path(name), text.as_bytes())
    }

    /// Two-column plot data with a header naming the figure it mirrors.
    fn write_plot(
        &self,
        name: &str,
        figure: &str,
        title: &str,
        columns: (&str, &str),
        points: impl IntoIterator<Item = (f64, f64)>,
    ) -> Result<(), CliError> {
        let mut s = String::new();
        writeln!(s, "# {figure}: {title}").unwrap();
        writeln!(s, "# config_hash: {}", self.hash).unwrap();
        writeln!(s, "# {} {}", columns.0, columns.1).unwrap();
        for (x, y) in points {
            writeln!(s, "{x} {y}").unwrap();
        }
        ingest::write_file(&self.path(name), s.as_bytes())
    }

    fn write_spectrum_plot(&self, name: &str, figure: &str, title: &str, s: &SpectrumSummary) -> Result<(), CliError> {
        let title = format!(
            "{title}; random-matrix bounds [{}, {}]",
            s.bounds.lambda_min, s.bounds.lambda_max
        );
        let points = s
            .spectrum
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &l)| ((i + 1) as f64, l));
        self.write_plot(name, figure, &title, ("rank", "eigenvalue"), points)
    }

    fn model(&self, name: &str) -> Result<MarketModel, CliError> {
        let mut model = if name.ends_with(".toml") {
            let text = std::fs::read_to_string(name).map_err(|source| CliError::Io {
                path: name.into(),
                source,
            })?;
            MarketModel::from_toml(&text)?
        } else {
            MarketModel::preset(name)?
        };
        if self.cfg.seed_explicit {
            model = model.with_seed(self.cfg.seed);
        }
        if let Some(bpd) = self.cfg.bars_per_day {
            model.bars_per_day = bpd;
            model.validate()?;
        }
        Ok(model)
    }

    fn load(&self) -> Result<Loaded, CliError> {
        if let Some(input) = &self.cfg.input {
            let (ingested, fill) = ingest::ingest(input, self.cfg.format, self.cfg.bars_per_day)?;
            let returns = match ingested {
                Ingested::Prices(p) => panel::log_returns(&p)?,
                Ingested::Returns(r) => r,
            };
            let (panel, dropped_constant) = standardized(returns)?;
            return Ok(Loaded {
                panel,
                source: format!("input:{}", input.display()),
                model: None,
                fill,
                dropped_constant,
            });
        }
        if let Some(name) = &self.cfg.preset {
            let model = self.model(name)?;
            let panel = synth::generate(&model)?;
            return Ok(Loaded {
                panel,
                source: format!("preset:{name}"),
                model: Some(model),
                fill: FillReport::default(),
                dropped_constant: Vec::new(),
            });
        }
        Err(CliError::Usage("no data: give --input or --preset".into()))
    }

    fn mfdfa_config(&self, len: usize) -> Result<MfdfaConfig, CliError> {
        let mut c = MfdfaConfig::for_length(len);
        if let Some(q) = &self.cfg.q_grid {
            c.q_grid = q.clone();
        }
        c.detrend_order = self.cfg.detrend_order;
        if let Some(s) = &self.cfg.scales {
            c.scales = s.clone();
            c.fit_range = (
                s.first().copied().unwrap_or(0),
                s.last().copied().unwrap_or(0),
            );
        }
        if let Some(r) = self.cfg.fit_range {
            c.fit_range = r;
        }
        c.validate(len)?;
        Ok(c)
    }

    fn spectrum(&self) -> Result<(), CliError> {
        let data = self.load()?;
        let s = SpectrumSummary::of(&data.panel)?;
        let expected = data
            .model
            .as_ref()
            .and_then(|m| synth::expected_lambda1(m).ok());
        self.write_json(
            "spectrum.json",
            json!({
                "panel": data.summary(),
                "assets": data.panel.assets(),
                "eigenvalues": s.spectrum.eigenvalues,
                "eigenvectors": s.spectrum.eigenvector_rows(),
                "bounds": s.bounds,
                "overlap_fraction": s.overlap,
                "trace": s.matrix.trace(),
                "orthonormality_error": s.spectrum.orthonormality_error(),
                "reconstruction_error": s.spectrum.reconstruction_error(&s.matrix),
                "expected_lambda1": expected,
                "correlation": s.matrix.to_rows(),
            }),
        )?;
        self.write_spectrum_plot("spectrum.txt", "fig2a-analogue", "eigenvalue spectrum", &s)
    }

    fn elements(&self) -> Result<(), CliError> {
        let data = self.load()?;
        let bins = self.cfg.bins;
        let (dist, window) = match self.cfg.q_target {
            Some(q) => {
                let len = (q * data.panel.n_assets() as f64).round() as usize;
                let d = spectrum::windowed_element_distribution(&data.panel, q, bins)?;
                (d, Some(len))
            }
            None => {
                let c = spectrum::correlation_matrix(&data.panel)?;
                (spectrum::element_distribution(&c, bins)?, None)
            }
        };
        self.write_json(
            "elements.json",
            json!({
                "panel": data.summary(),
                "q_target": self.cfg.q_target,
                "window_length": window,
                "distribution": dist,
            }),
        )?;
        let centers = dist.bin_centers();
        let label = match self.cfg.q_target {
            Some(q) => format!("Q = {q} windows"),
            None => format!("Q = {}", data.panel.q()),
        };
        self.write_plot(
            "elements.txt",
            "fig1-analogue",
            &format!("distribution of correlation entries, {label}"),
            ("c", "density"),
            centers.iter().copied().zip(dist.densities.iter().copied()),
        )?;
        self.write_plot(
            "elements_fit.txt",
            "fig1-analogue",
            &format!(
                "normal fit, mu = {}, sigma = {}",
                dist.gaussian_mu, dist.gaussian_sigma
            ),
            ("c", "density"),
            centers.iter().map(|&c| (c, dist.fitted_density(c))),
        )
    }

    fn remove(&self) -> Result<(), CliError> {
        let data = self.load()?;
        let original = SpectrumSummary::of(&data.panel)?;
        let mut stages = Vec::new();
        let mut current = data.panel.clone();
        let mut passes = Vec::new();
        // One pass at a time so every intermediate spectrum is reported.
        for k in 1..=self.cfg.remove_count {
            let step = match self.cfg.mode_source {
                modes::ModeSource::Sequential => modes::remove_modes_iterative(&current, 1, self.cfg.mode_source)?,
                modes::ModeSource::Original => {
                    let mut r = modes::remove_modes_iterative(&data.panel, k, self.cfg.mode_source)?;
                    r.passes.drain(..k - 1);
                    r
                }
            };
            current = step.panel;
            passes.extend(step.passes);
            let s = SpectrumSummary::of(&current)?;
            let figure = match k {
                1 => "fig2c-analogue",
                _ => "fig2e-analogue",
            };
            self.write_spectrum_plot(
                &format!("remove_{k}.txt"),
                figure,
                &format!("spectrum after removing {k} mode(s)"),
                &s,
            )?;
            let mut brief = s.brief();
            brief["removed"] = json!(k);
            brief["n_assets"] = json!(current.n_assets());
            stages.push(brief);
        }
        let dropped: Vec<&String> = passes.iter().flat_map(|p| &p.dropped).collect();
        ingest::write_panel(&self.path("residuals.csv"), &current)?;
        self.write_json(
            "remove.json",
            json!({
                "panel": data.summary(),
                "remove_count": self.cfg.remove_count,
                "mode_source": self.cfg.mode_source,
                "original": original.brief(),
                "passes": passes,
                "stages": stages,
                "dropped_assets": dropped,
            }),
        )?;
        self.write_spectrum_plot("spectrum.txt", "fig2a-analogue", "eigenvalue spectrum before removal", &original)
    }

    fn surrogate(&self) -> Result<(), CliError> {
        let data = self.load()?;
        let kind = self.cfg.surrogate_kind;
        let spec = SurrogateSpec::new(kind, self.cfg.seed);
        let original = SpectrumSummary::of(&data.panel)?;
        let (sur, dropped) = standardized(spec.apply(&data.panel)?)?;
        let s = SpectrumSummary::of(&sur)?;
        ingest::write_panel(&self.path("surrogate.csv"), &sur)?;
        self.write_json(
            "surrogate.json",
            json!({
                "panel": data.summary(),
                "kind": kind,
                "seed": if kind.is_seeded() { Some(self.cfg.seed) } else { None },
                "original": original.brief(),
                "surrogate": s.brief(),
                "lambda1_ratio": s.spectrum.largest() / original.spectrum.largest(),
                "dropped_constant": dropped,
            }),
        )?;
        self.write_spectrum_plot(
            "surrogate.txt",
            figure_of(kind),
            &format!("eigenvalue spectrum of the {kind} surrogate"),
            &s,
        )
    }

    fn mfdfa(&self) -> Result<(), CliError> {
        let data = self.load()?;
        let s = SpectrumSummary::of(&data.panel)?;
        let n = data.panel.n_assets();
        let explicit = self.cfg.eigensignals.is_some();
        let indices: Vec<usize> = match &self.cfg.eigensignals {
            Some(idx) => {
                if let Some(&bad) = idx.iter().find(|&&i| i > n) {
                    return Err(CliError::Usage(format!(
                        "eigensignal {bad} requested but the panel has {n} assets"
                    )));
                }
                idx.iter().map(|i| i - 1).collect()
            }
            None => (0..n).collect(),
        };
        let signals = modes::eigensignals(&data.panel, &s.spectrum, &indices)?;
        let cfg = self.mfdfa_config(data.panel.len())?;
        let results: Vec<mfdfa::MfdfaResult> = signals
            .par_iter()
            .map(|z| mfdfa::analyze(&z.series, &cfg))
            .collect::<Result<_, _>>()?;

        // Average over the non-market signals when there are any.
        let rest: Vec<_> = signals
            .iter()
            .zip(&results)
            .filter(|(z, _)| z.index != 0)
            .map(|(_, r)| r.spectrum.clone())
            .collect();
        let (average, averaged_over) = if rest.is_empty() {
            let all: Vec<_> = results.iter().map(|r| r.spectrum.clone()).collect();
            (mfdfa::average_spectra(&all)?, signals.iter().map(|z| z.index + 1).collect::<Vec<_>>())
        } else {
            let idx = signals.iter().filter(|z| z.index != 0).map(|z| z.index + 1).collect();
            (mfdfa::average_spectra(&rest)?, idx)
        };

        let per_signal: Vec<Value> = signals
            .iter()
            .zip(&results)
            .map(|(z, r)| {
                json!({
                    "index": z.index + 1,
                    "eigenvalue": z.eigenvalue,
                    "variance": crate::stats::pop_variance(&z.series),
                    "hurst": r.hurst,
                    "spectrum": r.spectrum,
                    "apex": r.spectrum.apex(),
                    "h2": r.spectrum.h_at(2.0),
                })
            })
            .collect();
        self.write_json(
            "mfdfa.json",
            json!({
                "panel": data.summary(),
                "mfdfa": cfg,
                "signals": per_signal,
                "average": {
                    "over": averaged_over,
                    "spectrum": average,
                    "apex": average.apex(),
                },
            }),
        )?;

        let to_plot: Vec<usize> = if explicit {
            (0..signals.len()).collect()
        } else {
            vec![0]
        };
        for i in to_plot {
            let (z, r) = (&signals[i], &results[i]);
            let k = z.index + 1;
            self.write_plot(
                &format!("mfdfa_z{k}.txt"),
                "fig7-analogue",
                &format!("singularity spectrum of Z{k}"),
                ("alpha", "f"),
                r.spectrum.alpha.iter().copied().zip(r.spectrum.f.iter().copied()),
            )?;
            self.write_plot(
                &format!("eigensignal_z{k}.txt"),
                "fig6-analogue",
                &format!("eigensignal Z{k}, lambda = {}", z.eigenvalue),
                ("bar", "return"),
                z.series.iter().enumerate().map(|(j, &v)| (j as f64, v)),
            )?;
        }
        self.write_plot(
            "mfdfa_average.txt",
            "fig7-analogue",
            &format!("singularity spectrum averaged over {} eigensignals", averaged_over.len()),
            ("alpha", "f"),
            average.alpha.iter().copied().zip(average.f.iter().copied()),
        )
    }

    fn synth(&self) -> Result<(), CliError> {
        if self.cfg.input.is_some() {
            return Err(CliError::Usage("synth takes --preset, not --input".into()));
        }
        let name = self
            .cfg
            .preset
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!(
                "synth needs --preset (built-in: {})",
                MarketModel::preset_names().collect::<Vec<_>>().join(", ")
            )))?;
        let data = self.load()?;
        let model = data.model.as_ref().expect("preset-backed panel");
        ingest::write_panel(&self.path("panel.csv"), &data.panel)?;
        self.write_json(
            "synth.json",
            json!({
                "panel": data.summary(),
                "preset": name,
                "model": model,
                "expected_lambda1": synth::expected_lambda1(model).ok(),
            }),
        )
    }

    fn report(&self) -> Result<(), CliError> {
        let data = self.load()?;
        let r = &data.panel;
        let full = SpectrumSummary::of(r)?;

        let elements = section((|| {
            let c = &full.matrix;
            let whole = spectrum::element_distribution(c, self.cfg.bins)?;
            let windowed = match self.cfg.q_target {
                Some(q) => Some(spectrum::windowed_element_distribution(r, q, self.cfg.bins)?),
                None => None,
            };
            let brief = |d: &spectrum::ElementDistribution| {
                json!({
                    "n_entries": d.n_entries,
                    "gaussian_mu": d.gaussian_mu,
                    "gaussian_sigma": d.gaussian_sigma,
                    "percentile_99": d.percentile_99,
                    "tail_deviation": d.tail_deviation,
                })
            };
            Ok(json!({
                "whole": brief(&whole),
                "q_target": self.cfg.q_target,
                "windowed": windowed.as_ref().map(brief),
            }))
        })());

        let removal = section((|| {
            let res = modes::remove_modes_iterative(r, self.cfg.remove_count, self.cfg.mode_source)?;
            let s = SpectrumSummary::of(&res.panel)?;
            Ok(json!({
                "remove_count": self.cfg.remove_count,
                "mode_source": self.cfg.mode_source,
                "removed_eigenvalues": res.passes.iter().map(|p| p.eigenvalue).collect::<Vec<_>>(),
                "dropped_assets": res.dropped_assets(),
                "residual": s.brief(),
            }))
        })());

        let surrogates: Vec<Value> = SurrogateKind::ALL
            .par_iter()
            .map(|&kind| {
                let mut v = section((|| {
                    let sur = SurrogateSpec::new(kind, self.cfg.seed).apply(r)?;
                    let (sur, _) = standardized(sur)?;
                    let s = SpectrumSummary::of(&sur)?;
                    Ok(json!({
                        "lambda1": s.spectrum.largest(),
                        "lambda1_ratio": s.spectrum.largest() / full.spectrum.largest(),
                        "overlap_fraction": s.overlap,
                        "width_over_mp": s.spectrum.support_width() / s.bounds.width(),
                    }))
                })());
                v["kind"] = json!(kind);
                v
            })
            .collect();

        let mfdfa_section = section((|| {
            let cfg = self.mfdfa_config(r.len())?;
            let idx: Vec<usize> = (0..r.n_assets()).collect();
            let signals = modes::eigensignals(r, &full.spectrum, &idx)?;
            let spectra: Vec<mfdfa::SingularitySpectrum> = signals
                .par_iter()
                .map(|z| mfdfa::analyze(&z.series, &cfg).map(|m| m.spectrum))
                .collect::<Result<_, _>>()?;
            let first = &spectra[0];
            let average = if spectra.len() > 1 {
                Some(mfdfa::average_spectra(&spectra[1..])?)
            } else {
                None
            };
            Ok(json!({
                "z1": { "width": first.width, "apex": first.apex(), "h2": first.h_at(2.0) },
                "average_rest": average.map(|a| json!({ "width": a.width, "apex": a.apex(), "h2": a.h_at(2.0) })),
            }))
        })());

        let bpd = r.bars_per_day();
        let coarsening: Vec<Value> = (1..=bpd)
            .filter(|f| bpd % f == 0)
            .map(|f| {
                let mut v = section((|| {
                    let c = panel::coarsen(r, f)?;
                    let (c, _) = standardized(c)?;
                    let s = SpectrumSummary::of(&c)?;
                    Ok(json!({
                        "dt_seconds": c.dt_seconds(),
                        "t_length": c.len(),
                        "q": c.q(),
                        "lambda1": s.spectrum.largest(),
                    }))
                })());
                v["factor"] = json!(f);
                v
            })
            .collect();

        let top: Vec<f64> = full.spectrum.eigenvalues.iter().take(5).copied().collect();
        self.write_json(
            "report.json",
            json!({
                "panel": data.summary(),
                "spectrum": {
                    "top_eigenvalues": top,
                    "smallest_eigenvalue": full.spectrum.smallest(),
                    "bounds": full.bounds,
                    "overlap_fraction": full.overlap,
                    "trace": full.matrix.trace(),
                    "reconstruction_error": full.spectrum.reconstruction_error(&full.matrix),
                    "expected_lambda1": data.model.as_ref().and_then(|m| synth::expected_lambda1(m).ok()),
                },
                "elements": elements,
                "removal": removal,
                "surrogates": surrogates,
                "mfdfa": mfdfa_section,
                "lambda1_vs_coarsening": coarsening,
            }),
        )?;
        let points: Vec<(f64, f64)> = coarsening
            .iter()
            .filter_map(|v| Some((v["dt_seconds"].as_f64()?, v["lambda1"].as_f64()?)))
            .collect();
        self.write_plot(
            "lambda1_vs_dt.txt",
            "epps-analogue",
            "largest eigenvalue against return interval",
            ("dt_seconds", "lambda1"),
            points,
        )
    }
}
