//! Randomized panels for null-hypothesis tests of correlation spectra.
//!
//! Every randomized operation draws from one counter-based stream per row
//! (stream id = row index), so results depend only on `(seed, panel)` and not
//! on thread scheduling.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{self, ReturnPanel};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    /// Cyclic shift of each series by an independent uniform offset.
    RotateFree,
    /// Cyclic shift restricted to whole trading days.
    RotateDaily,
    /// Signs permuted, magnitudes in place.
    ShuffleSigns,
    /// Magnitudes permuted, signs in place.
    ShuffleMagnitudes,
    /// Sign series only.
    SignsOnly,
    /// Magnitude series only.
    MagnitudesOnly,
}

impl SurrogateKind {
    pub const ALL: [SurrogateKind; 6] = [
        Self::RotateFree,
        Self::RotateDaily,
        Self::ShuffleSigns,
        Self::ShuffleMagnitudes,
        Self::SignsOnly,
        Self::MagnitudesOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::RotateFree => "rotate_free",
            Self::RotateDaily => "rotate_daily",
            Self::ShuffleSigns => "shuffle_signs",
            Self::ShuffleMagnitudes => "shuffle_magnitudes",
            Self::SignsOnly => "signs_only",
            Self::MagnitudesOnly => "magnitudes_only",
        }
    }

    pub fn is_seeded(self) -> bool {
        !matches!(self, Self::SignsOnly | Self::MagnitudesOnly)
    }
}

impl fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SurrogateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown surrogate kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    pub kind: SurrogateKind,
    pub seed: u64,
}

impl SurrogateSpec {
    pub fn new(kind: SurrogateKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    /// Builds the surrogate panel. Rotations of a standardized panel stay
    /// standardized; the other kinds return unstandardized panels except
    /// `signs_only` / `magnitudes_only`, which standardize by definition.
    pub fn apply(&self, r: &ReturnPanel) -> Result<ReturnPanel> {
        match self.kind {
            SurrogateKind::RotateFree => Ok(rotate_free(r, self.seed)),
            SurrogateKind::RotateDaily => rotate_daily(r, self.seed),
            SurrogateKind::ShuffleSigns => Ok(shuffle_signs(r, self.seed)),
            SurrogateKind::ShuffleMagnitudes => Ok(shuffle_magnitudes(r, self.seed)),
            SurrogateKind::SignsOnly => signs_only(r),
            SurrogateKind::MagnitudesOnly => magnitudes_only(r),
        }
    }
}

fn map_rows<F>(r: &ReturnPanel, f: F) -> Vec<Vec<f64>>
where
    F: Fn(usize, &[f64]) -> Vec<f64> + Sync,
{
    let rows: Vec<&[f64]> = r.rows().collect();
    rows.par_iter().enumerate().map(|(k, row)| f(k, row)).collect()
}

fn rotate(row: &[f64], offset: usize) -> Vec<f64> {
    let mut out = row.to_vec();
    out.rotate_left(offset);
    out
}

/// Rotations preserve each row's value multiset, so a standardized input
/// remains standardized.
fn rebuild_rotated(r: &ReturnPanel, rows: Vec<Vec<f64>>) -> ReturnPanel {
    let out = ReturnPanel::new(r.assets().to_vec(), rows, r.bars_per_day(), r.dt_seconds())
        .expect("rotation preserves panel shape");
    if r.is_standardized() {
        out.mark_standardized()
            .expect("rotation preserves row moments")
    } else {
        out
    }
}

/// Shifts row `k` left by an offset drawn uniformly from `[0, T)`:
/// `out[j] = in[(j + offset) mod T]`.
pub fn rotate_free(r: &ReturnPanel, seed: u64) -> ReturnPanel {
    let t = r.len();
    let rows = map_rows(r, |k, row| {
        let offset = rng::stream(seed, k as u64).random_range(0..t);
        rotate(row, offset)
    });
    rebuild_rotated(r, rows)
}

/// Like [`rotate_free`] with offsets restricted to multiples of
/// `bars_per_day`. A trailing partial day is trimmed first.
pub fn rotate_daily(r: &ReturnPanel, seed: u64) -> Result<ReturnPanel> {
    let bpd = r.bars_per_day();
    let days = r.len() / bpd;
    if days == 0 {
        return Err(Error::InvalidParameter(format!(
            "series of length {} hold no complete day of {bpd} bars",
            r.len()
        )));
    }
    let whole = days * bpd;
    let trimmed = if whole < r.len() {
        log::warn!(
            "trimming {} trailing bars to whole days before daily rotation",
            r.len() - whole
        );
        r.window(0, whole)?
    } else {
        r.clone()
    };
    let rows = map_rows(&trimmed, |k, row| {
        let offset = bpd * rng::stream(seed, k as u64).random_range(0..days);
        rotate(row, offset)
    });
    Ok(rebuild_rotated(&trimmed, rows))
}

/// Shuffles `part(v)` across the non-zero entries of every row and
/// recombines with `join(shuffled, original)`. Zero returns have neither a
/// sign nor a magnitude to trade, so they stay where they are; this keeps
/// `|out| = |in|` for sign shuffles and `sign(out) = sign(in)` for magnitude
/// shuffles exactly.
fn shuffle_part<P, J>(r: &ReturnPanel, seed: u64, part: P, join: J) -> ReturnPanel
where
    P: Fn(f64) -> f64 + Sync,
    J: Fn(f64, f64) -> f64 + Sync,
{
    let rows = map_rows(r, |k, row| {
        let mut values: Vec<f64> = row.iter().filter(|v| **v != 0.0).map(|&v| part(v)).collect();
        values.shuffle(&mut rng::stream(seed, k as u64));
        let mut shuffled = values.into_iter();
        row.iter()
            .map(|&v| {
                if v == 0.0 {
                    v
                } else {
                    join(shuffled.next().expect("one value per non-zero entry"), v)
                }
            })
            .collect()
    });
    r.with_rows(r.assets().to_vec(), rows)
        .expect("shuffle preserves panel shape")
}

/// Permutes the sign sequence of every row; magnitudes stay in place.
pub fn shuffle_signs(r: &ReturnPanel, seed: u64) -> ReturnPanel {
    shuffle_part(r, seed, panel::sign, |s, v| s * v.abs())
}

/// Permutes the magnitude sequence of every row; signs stay in place.
pub fn shuffle_magnitudes(r: &ReturnPanel, seed: u64) -> ReturnPanel {
    shuffle_part(r, seed, f64::abs, |m, v| panel::sign(v) * m)
}

/// Standardized sign series. Rows with a single sign value are dropped.
pub fn signs_only(r: &ReturnPanel) -> Result<ReturnPanel> {
    let rows = map_rows(r, |_, row| row.iter().map(|&v| panel::sign(v)).collect());
    let (out, _) = panel::standardize_dropping(&r.with_rows(r.assets().to_vec(), rows)?)?;
    Ok(out)
}

/// Standardized magnitude series. Constant-magnitude rows are dropped.
pub fn magnitudes_only(r: &ReturnPanel) -> Result<ReturnPanel> {
    let rows = map_rows(r, |_, row| row.iter().map(|v| v.abs()).collect());
    let (out, _) = panel::standardize_dropping(&r.with_rows(r.assets().to_vec(), rows)?)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{correlation_matrix, eigendecompose};

    fn raw(rows: Vec<Vec<f64>>, bpd: usize) -> ReturnPanel {
        let assets = (0..rows.len()).map(|i| format!("A{i}")).collect();
        ReturnPanel::new(assets, rows, bpd, 60.0).unwrap()
    }

    fn sorted(x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn kind_strings_round_trip() {
        for k in SurrogateKind::ALL {
            assert_eq!(k.as_str().parse::<SurrogateKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.as_str()));
        }
        assert!("phase".parse::<SurrogateKind>().is_err());
    }

    #[test]
    fn single_series_rotation_has_unit_spectrum() {
        let p = panel::standardize(&raw(vec![vec![0.5, -1.0, 2.0, 0.1, -0.7]], 1)).unwrap();
        let rotated = rotate_free(&p, 17);
        let s = eigendecompose(&correlation_matrix(&rotated).unwrap()).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s.eigenvalues[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_preserves_row_multiset() {
        let rows = vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![6.0, 1.0, 5.0, 2.0, 4.0, 3.0]];
        let p = raw(rows, 3);
        for out in [rotate_free(&p, 3), rotate_daily(&p, 3).unwrap()] {
            for k in 0..2 {
                assert_eq!(sorted(out.series(k)), sorted(p.series(k)));
            }
        }
    }

    #[test]
    fn whole_series_day_forces_identity() {
        let p = raw(vec![vec![1.0, 2.0, 3.0, 4.0], vec![4.0, 3.0, 2.0, 1.0]], 4);
        assert_eq!(rotate_daily(&p, 99).unwrap(), p);
    }

    #[test]
    fn daily_rotation_trims_partial_day() {
        let p = raw(vec![vec![1.0, 2.0, 3.0, 4.0, 5.0]], 2);
        assert_eq!(rotate_daily(&p, 1).unwrap().len(), 4);
        let short = raw(vec![vec![1.0, 2.0]], 3);
        assert!(rotate_daily(&short, 1).is_err());
    }

    #[test]
    fn daily_periodic_panel_is_a_fixed_point() {
        let day = [0.3, -0.2, 0.5, -0.6];
        let other = [-0.1, 0.4, 0.2, -0.5];
        let rows = vec![day.repeat(5), other.repeat(5)];
        let p = panel::standardize(&raw(rows, 4)).unwrap();
        let before = correlation_matrix(&p).unwrap();
        for seed in 0..5 {
            let after = correlation_matrix(&rotate_daily(&p, seed).unwrap()).unwrap();
            assert!((before.values() - after.values()).amax() < 1e-12);
        }
    }

    #[test]
    fn shuffles_touch_only_their_component() {
        let p = raw(vec![vec![0.1, -0.2, 0.25, 0.4, -0.5, 0.3, -0.3]], 1);
        let s = shuffle_signs(&p, 5);
        for (a, b) in s.series(0).iter().zip(p.series(0)) {
            assert_eq!(a.abs(), b.abs());
        }
        // Zero returns stay put under both shuffles.
        let z = raw(vec![vec![0.1, -0.2, 0.0, 0.4, -0.5, 0.3, -0.3]], 1);
        for seed in 0..20 {
            let s = shuffle_signs(&z, seed);
            let m = shuffle_magnitudes(&z, seed);
            for ((a, b), c) in s.series(0).iter().zip(m.series(0)).zip(z.series(0)) {
                assert_eq!(a.abs(), c.abs());
                assert_eq!(panel::sign(*b), panel::sign(*c));
            }
        }
        let m = shuffle_magnitudes(&p, 5);
        for (a, b) in m.series(0).iter().zip(p.series(0)) {
            assert_eq!(panel::sign(*a), panel::sign(*b));
        }
        let abs = |x: &[f64]| sorted(&x.iter().map(|v| v.abs()).collect::<Vec<_>>());
        assert_eq!(abs(m.series(0)), abs(p.series(0)));
    }

    #[test]
    fn degenerate_shuffles_are_identities() {
        let positive = raw(vec![vec![0.1, 0.2, 0.3, 0.4]], 1);
        assert_eq!(shuffle_signs(&positive, 8), positive);
        let equal = raw(vec![vec![0.2, -0.2, -0.2, 0.2]], 1);
        assert_eq!(shuffle_magnitudes(&equal, 8), equal);
    }

    #[test]
    fn signs_only_of_positive_panel_drops_everything() {
        let p = raw(vec![vec![0.1, 0.2, 0.3], vec![0.5, 0.1, 0.4]], 1);
        assert!(matches!(signs_only(&p), Err(Error::NoAssets)));
    }

    #[test]
    fn signs_only_is_idempotent() {
        let p = raw(vec![vec![0.1, -0.2, 0.3, -0.1, -0.4], vec![-0.5, 0.1, 0.4, 0.2, -0.3]], 1);
        let once = signs_only(&p).unwrap();
        let twice = signs_only(&once).unwrap();
        for k in 0..2 {
            for (a, b) in once.series(k).iter().zip(twice.series(k)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_seed_same_panel() {
        let p = raw(vec![(0..50).map(|i| (i as f64).sin()).collect(); 3], 5);
        for k in SurrogateKind::ALL {
            let spec = SurrogateSpec::new(k, 42);
            assert_eq!(spec.apply(&p).ok(), spec.apply(&p).ok());
        }
        assert_ne!(rotate_free(&p, 1), rotate_free(&p, 2));
    }
}
