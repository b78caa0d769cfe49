mod common;

use xcorr::mfdfa::{self, MfdfaConfig};
use xcorr::synth;

fn fixture_series() -> Vec<f64> {
    common::hashed_rows(1, 200, 41).remove(0)
}

#[test]
fn profile_is_the_prefix_sum_of_deviations() {
    let x = fixture_series();
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let y = mfdfa::profile(&x).unwrap();
    for j in 0..x.len() {
        let direct: f64 = x[..=j].iter().map(|v| v - mean).sum();
        assert!((y[j] - direct).abs() < 1e-12, "bar {j}");
    }
    assert!(y.last().unwrap().abs() < 1e-12);
}

/// Least-squares polynomial of degree `order` via the normal equations,
/// solved by Gaussian elimination; returns the mean squared residual.
fn normal_equation_variance(y: &[f64], order: usize) -> f64 {
    let n = y.len();
    let c = (n as f64 - 1.0) / 2.0;
    let x: Vec<f64> = (0..n).map(|k| k as f64 - c).collect();
    let m = order + 1;
    let mut a = vec![vec![0.0; m + 1]; m];
    for i in 0..m {
        for j in 0..m {
            a[i][j] = x.iter().map(|xk| xk.powi((i + j) as i32)).sum();
        }
        a[i][m] = x.iter().zip(y).map(|(xk, yk)| xk.powi(i as i32) * yk).sum();
    }
    for col in 0..m {
        let pivot = (col..m).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs())).unwrap();
        a.swap(col, pivot);
        for row in 0..m {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..=m {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let coef: Vec<f64> = (0..m).map(|i| a[i][m] / a[i][i]).collect();
    x.iter()
        .zip(y)
        .map(|(xk, yk)| {
            let fit: f64 = coef.iter().enumerate().map(|(i, ci)| ci * xk.powi(i as i32)).sum();
            (yk - fit) * (yk - fit)
        })
        .sum::<f64>()
        / n as f64
}

#[test]
fn segment_variances_match_normal_equations() {
    let y = mfdfa::profile(&fixture_series()).unwrap();
    let (n, order) = (32, 2);
    let v = mfdfa::segment_variances(&y, n, order).unwrap();
    let segments = y.len() / n;
    let offset = y.len() - segments * n;
    assert_eq!(v.len(), 2 * segments);
    for s in 0..segments {
        let forward = normal_equation_variance(&y[s * n..(s + 1) * n], order);
        let backward = normal_equation_variance(&y[offset + s * n..offset + (s + 1) * n], order);
        assert!((v[s] / forward - 1.0).abs() < 1e-9, "forward {s}");
        assert!((v[segments + s] / backward - 1.0).abs() < 1e-9, "backward {s}");
    }
}

#[test]
fn negative_moment_by_hand() {
    // F_q = [ (1/2) sum (F^2)^{q/2} ]^{1/q} with F^2 in {1, 4} and q = -2.
    let expected = (0.5 * (1.0f64.powf(-1.0) + 4.0f64.powf(-1.0))).powf(-0.5);
    let got = mfdfa::fluctuation(&[1.0, 4.0], -2.0).unwrap();
    assert!((got - expected).abs() < 1e-14);
    assert!((got - 1.2649110640673518).abs() < 1e-12);
}

#[test]
fn white_noise_is_monofractal() {
    let x = synth::white_noise(40_000, 42);
    let res = mfdfa::analyze(&x, &MfdfaConfig::for_length(x.len())).unwrap();
    let h2 = res.spectrum.h_at(2.0).unwrap();
    assert!((h2 - 0.5).abs() <= 0.03, "h(2) = {h2}");
    assert!(res.spectrum.width <= 0.15, "width {}", res.spectrum.width);
    assert!((res.spectrum.apex() - 0.5).abs() <= 0.05, "apex {}", res.spectrum.apex());
}

fn cascade_h(p: f64, q: f64) -> f64 {
    1.0 / q - (p.powf(q) + (1.0 - p).powf(q)).log2() / q
}

#[test]
fn binomial_cascade_matches_its_analytic_spectrum() {
    let p = 0.3;
    let x = synth::binomial_cascade(p, 16).unwrap();
    let res = mfdfa::analyze(&x, &MfdfaConfig::for_length(x.len())).unwrap();
    let sp = &res.spectrum;
    for q in [-4.0, -2.0, 2.0, 4.0] {
        let h = sp.h_at(q).unwrap();
        assert!((h - cascade_h(p, q)).abs() <= 0.05, "q = {q}: {h} vs {}", cascade_h(p, q));
    }
    let span = ((1.0 - p) / p).log2();
    assert!((sp.width - span).abs() <= 0.1, "width {} vs {span}", sp.width);
    assert!(sp.f.iter().all(|f| *f <= 1.0 + 1e-6));
    assert!(sp.alpha.windows(2).all(|w| w[1] <= w[0] + 1e-6));
    assert!(sp.warnings.is_empty(), "{:?}", sp.warnings);
}

#[test]
fn min_scale_must_exceed_the_fit_order() {
    let x = fixture_series();
    let cfg = MfdfaConfig {
        q_grid: MfdfaConfig::default_q_grid(),
        detrend_order: 3,
        scales: vec![4, 6, 8, 10, 12, 14],
        fit_range: (4, 14),
    };
    assert!(matches!(
        mfdfa::analyze(&x, &cfg),
        Err(xcorr::Error::UnderdeterminedFit { scale: 4, order: 3 })
    ));
}
