//! Spectral analysis of cross-correlations in multivariate return series.
//!
//! The crate is organised around a small pipeline:
//!
//! - [`panel`]: price and return panels, standardization, sign/magnitude
//!   decomposition and time-scale coarsening;
//! - [`spectrum`]: correlation matrices, eigenspectra, Marchenko-Pastur bounds
//!   and the distribution of matrix elements;
//! - [`modes`]: eigensignals (principal-portfolio returns) and regression-based
//!   removal of collective modes;
//! - [`surrogate`]: randomized panels used as null hypotheses;
//! - [`mfdfa`]: multifractal detrended fluctuation analysis;
//! - [`synth`]: a seeded factor-model market generator;
//! - [`cli`]: file formats, configuration and the `xcorr` command line.

pub mod cli;
pub mod error;
pub mod mfdfa;
pub mod modes;
pub mod panel;
mod rng;
pub mod spectrum;
mod stats;
pub mod surrogate;
pub mod synth;

pub use error::{Error, Result};
pub use modes::{Eigensignal, ModeSource, RemovalPass, ResidualPanel};
pub use panel::{PricePanel, ReturnPanel, SignMagnitudePanel};
pub use spectrum::{CorrelationMatrix, EigenSpectrum, ElementDistribution, MpBounds};
pub use surrogate::{SurrogateKind, SurrogateSpec};
pub use synth::MarketModel;
