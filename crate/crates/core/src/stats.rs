//! Small numeric helpers shared across modules. All variances use divisor T.

pub(crate) fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

pub(crate) fn pop_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

pub(crate) fn pop_covariance(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / x.len() as f64
}

/// A series counts as constant when its spread is at rounding level
/// relative to its largest magnitude.
pub(crate) fn is_degenerate(x: &[f64]) -> bool {
    let scale = x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let std = pop_variance(x).sqrt();
    std == 0.0 || std <= 1e-12 * scale
}
