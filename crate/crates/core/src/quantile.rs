//! The fixed empirical quantile rule shared by intervals and metrics.

/// Quantile of sorted data by linear interpolation at 1-based rank
/// (B - 1) * tau + 1. Pinning the rule keeps interval endpoints
/// reproducible bit-for-bit across implementations.
pub fn empirical_quantile(sorted: &[f64], tau: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    assert!((0.0..=1.0).contains(&tau), "tau must lie in [0, 1]");
    let pos = (sorted.len() - 1) as f64 * tau;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Sort a sample and take quantiles at several levels.
pub fn quantiles_of(values: &[f64], taus: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    taus.iter().map(|&t| empirical_quantile(&sorted, t)).collect()
}
