#![allow(dead_code)]

use std::path::PathBuf;

use xcorr::panel::{self, ReturnPanel};
use xcorr::synth::{self, MarketModel};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|k| format!("A{k}")).collect()
}

pub fn raw(rows: Vec<Vec<f64>>, bars_per_day: usize) -> ReturnPanel {
    ReturnPanel::new(names(rows.len()), rows, bars_per_day, 300.0).unwrap()
}

pub fn standardized(rows: Vec<Vec<f64>>) -> ReturnPanel {
    panel::standardize(&raw(rows, 1)).unwrap()
}

/// Deterministic, irregular rows without any shared structure.
pub fn hashed_rows(n: usize, t: usize, salt: u64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|k| {
            (0..t)
                .map(|j| {
                    let mut x = (k as u64 + 1)
                        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                        ^ (j as u64 + 1).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
                        ^ salt.wrapping_mul(0x1656_67B1_9E37_79F9);
                    x ^= x >> 33;
                    x = x.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
                    x ^= x >> 33;
                    (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                })
                .collect()
        })
        .collect()
}

/// i.i.d. Gaussian panel from the generator with every loading switched off.
pub fn gaussian_panel(n: usize, t: usize, seed: u64) -> ReturnPanel {
    let model = MarketModel {
        n_assets: n,
        t_length: t,
        market_loading: 0.0,
        ..MarketModel::preset("wishart").unwrap()
    }
    .with_seed(seed);
    synth::generate(&model).unwrap()
}

pub fn preset(name: &str, seed: u64) -> (MarketModel, ReturnPanel) {
    let model = MarketModel::preset(name).unwrap().with_seed(seed);
    let panel = synth::generate(&model).unwrap();
    (model, panel)
}

pub fn pop_var(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}
