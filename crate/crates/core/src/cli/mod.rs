//! Command-line front end.
//!
//! Every subcommand reads a panel (a CSV file or a synthetic preset), runs one
//! stage of the analysis and writes its artifacts into the output directory:
//! JSON for structured results, two-column text for plot data and CSV for
//! panels. Every artifact carries the hash of the effective configuration,
//! which is also echoed to `config.json`.

pub mod commands;
pub mod config;
pub mod ingest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::modes::ModeSource;
use crate::surrogate::SurrogateKind;
use config::{ConfigLayer, PanelFormat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ANALYSIS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Analysis(#[from] crate::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate observation of `{asset}` at timestamp {timestamp}")]
    Duplicate { asset: String, timestamp: i64 },
    #[error("output directory {} is locked by another run", .0.display())]
    Locked(PathBuf),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            _ => EXIT_ANALYSIS,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Analysis(_) => "analysis",
            Self::Io { .. } => "io",
            Self::Parse { .. } => "parse",
            Self::Duplicate { .. } => "duplicate",
            Self::Locked(_) => "locked",
            Self::Usage(_) => "usage",
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}

#[derive(Debug, Parser)]
#[command(name = "xcorr", version, about = "Spectral and multifractal analysis of cross-correlated time series")]
#[command(propagate_version = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Correlation matrix, eigenvalues and random-matrix bounds.
    Spectrum,
    /// Distribution of off-diagonal correlation entries.
    Elements,
    /// Iterative removal of the most collective modes.
    Remove,
    /// Spectrum of a randomized surrogate panel.
    Surrogate,
    /// Multifractal spectra of the eigensignals.
    Mfdfa,
    /// Generate a synthetic panel from a preset.
    Synth,
    /// Summary combining all stages.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Spectrum => "spectrum",
            Self::Elements => "elements",
            Self::Remove => "remove",
            Self::Surrogate => "surrogate",
            Self::Mfdfa => "mfdfa",
            Self::Synth => "synth",
            Self::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// TOML file with default settings; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Input CSV file.
    #[arg(long, global = true, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Input layout; guessed from the file when omitted.
    #[arg(long, global = true, value_enum)]
    pub format: Option<PanelFormat>,
    /// Bars per trading day [default: 78, or the panel file's value].
    #[arg(long, global = true)]
    pub bars_per_day: Option<usize>,
    /// Window length as a multiple of the asset count for `elements`.
    #[arg(long, global = true)]
    pub q_target: Option<f64>,
    /// Histogram bins [default: 50].
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    /// Number of modes to remove [default: 2].
    #[arg(long, global = true)]
    pub remove_count: Option<usize>,
    /// `sequential` or `original` [default: sequential].
    #[arg(long, global = true)]
    pub mode_source: Option<ModeSource>,
    /// rotate_free, rotate_daily, shuffle_signs, shuffle_magnitudes,
    /// signs_only or magnitudes_only [default: rotate_free].
    #[arg(long, global = true)]
    pub surrogate_kind: Option<SurrogateKind>,
    /// Random seed [default: $XCORR_SEED, else 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Moment orders, `lo:hi:step` or a comma list [default: -4:4:0.2].
    #[arg(long, global = true, value_parser = config::parse_q_grid, allow_hyphen_values = true)]
    pub q_grid: Option<::std::vec::Vec<f64>>,
    /// Detrending polynomial order [default: 2].
    #[arg(long, global = true)]
    pub detrend_order: Option<usize>,
    /// Scales, `min:max:count` (geometric) or a comma list.
    #[arg(long, global = true, value_parser = config::parse_scales)]
    pub scales: Option<::std::vec::Vec<usize>>,
    /// Inclusive scale range of the Hurst fit, `lo:hi`.
    #[arg(long, global = true, value_parser = config::parse_range)]
    pub fit_range: Option<(usize, usize)>,
    /// 1-based eigensignal indices for `mfdfa` [default: all].
    #[arg(long, global = true, value_parser = config::parse_indices)]
    pub eigensignals: Option<::std::vec::Vec<usize>>,
    /// Built-in market preset or a model TOML file.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

impl Options {
    fn into_layer(self) -> ConfigLayer {
        ConfigLayer {
            input: self.input,
            format: self.format,
            bars_per_day: self.bars_per_day,
            q_target: self.q_target,
            bins: self.bins,
            remove_count: self.remove_count,
            mode_source: self.mode_source,
            surrogate_kind: self.surrogate_kind,
            seed: self.seed,
            q_grid: self.q_grid,
            detrend_order: self.detrend_order,
            scales: self.scales,
            fit_range: self.fit_range,
            eigensignals: self.eigensignals,
            preset: self.preset,
            out: self.out,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors go to stderr as one JSON line.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let file_layer = match &cli.options.config {
        Some(path) => ConfigLayer::from_file(path)?,
        None => ConfigLayer::default(),
    };
    let layer = cli.options.into_layer().or(file_layer);
    let cfg = config::AnalysisConfig::resolve(cli.command.name(), layer)?;
    commands::run(cli.command, cfg)
}
