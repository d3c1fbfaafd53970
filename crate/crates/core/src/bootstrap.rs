//! Forward-recursion residual-resampling bootstrap for prediction
//! intervals and Bonferroni cubes.
//!
//! Each replicate rebuilds a pseudo series from resampled residuals,
//! re-estimates the model with the same method as the original fit, then
//! draws conditional futures from the re-estimated coefficients. Replicates
//! are driven by per-index RNG substreams, so results are independent of
//! execution order.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::ContinuousCDF;

use crate::error::{Error, Result};
use crate::estimation::{self, FitConfig, FitMethod, WeightedFit};
use crate::model::{forecast_error_cov, simulate_from_innovations, ArModelSpec};
use crate::quantile::empirical_quantile;
use crate::rng::InnovationSource;
use crate::series::SeriesMatrix;

const LANE_PATH: u64 = 0xB001;
const LANE_FUTURE: u64 = 0xB002;

/// Re-estimated coefficient sets, one per bootstrap replicate.
///
/// `models[b] = None` marks a replicate whose path went non-finite (or
/// whose re-fit failed) twice; excluded replicates are counted, never
/// silently dropped.
#[derive(Debug, Clone)]
pub struct BootstrapParams {
    pub models: Vec<Option<ArModelSpec>>,
    pub excluded: usize,
    pub redrawn: usize,
}

/// B conditional future draws plus the settings that produced them.
#[derive(Debug, Clone)]
pub struct BootstrapForecast {
    /// One H x N matrix per surviving replicate.
    pub draws: Vec<DMatrix<f64>>,
    pub gamma: f64,
    pub horizon: usize,
    pub estimator_tag: FitMethod,
    /// Replicates dropped across path generation and future drawing.
    pub excluded: usize,
    pub redrawn: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalKind {
    /// N = 1: marginal quantiles at gamma/2 and 1 - gamma/2.
    Marginal,
    /// N >= 2: per-component quantiles at gamma/(2N) and 1 - gamma/(2N).
    Bonferroni,
}

/// Per-horizon lower/upper bounds, componentwise.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet {
    /// H x N lower bounds.
    pub lower: DMatrix<f64>,
    /// H x N upper bounds.
    pub upper: DMatrix<f64>,
    pub gamma: f64,
    pub kind: IntervalKind,
}

impl IntervalSet {
    pub fn horizon(&self) -> usize {
        self.lower.nrows()
    }

    pub fn dim_n(&self) -> usize {
        self.lower.ncols()
    }

    /// Componentwise widths at horizon `h` (1-based).
    pub fn widths(&self, h: usize) -> DVector<f64> {
        (self.upper.row(h - 1) - self.lower.row(h - 1)).transpose()
    }

    /// Closed-interval membership of a point at horizon `h` (1-based).
    pub fn contains(&self, h: usize, point: &DVector<f64>) -> bool {
        (0..self.dim_n()).all(|c| {
            point[c] >= self.lower[(h - 1, c)] && point[c] <= self.upper[(h - 1, c)]
        })
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(Error::InvalidInput(format!(
            "significance level must lie in (0, 0.5), got {gamma}"
        )));
    }
    Ok(())
}

fn draw_pool(pool: &[DVector<f64>], count: usize, rng: &mut impl Rng) -> Vec<DVector<f64>> {
    (0..count)
        .map(|_| pool[rng.gen_range(0..pool.len())].clone())
        .collect()
}

/// Steps 3-4: resample a path seeded with the first p observations and
/// re-estimate with the configured method, B times.
pub fn bootstrap_paths(
    series: &SeriesMatrix,
    fit: &WeightedFit,
    pool: &[DVector<f64>],
    b_reps: usize,
    rng: &InnovationSource,
    config: &FitConfig,
) -> Result<BootstrapParams> {
    if pool.is_empty() {
        return Err(Error::InvalidInput("empty bootstrap residual pool".into()));
    }
    if b_reps == 0 {
        return Err(Error::InvalidInput("need at least one bootstrap replicate".into()));
    }
    let p = fit.model().order_p();
    let t = series.length_t();
    if p >= t {
        return Err(Error::SeriesTooShort { needed: p + 1, have: t });
    }
    let head: Vec<DVector<f64>> = (0..p).map(|i| series.row(i)).collect();
    let labels = series.labels().to_vec();

    let results: Vec<(Option<ArModelSpec>, usize)> = (0..b_reps)
        .into_par_iter()
        .map(|b| {
            let mut r = rng.substream(LANE_PATH, b as u64).rng();
            for attempt in 0..2usize {
                let draws = draw_pool(pool, t - p, &mut r);
                let refit = simulate_from_innovations(fit.model(), &head, &draws)
                    .and_then(|tail| {
                        let mut rows = head.clone();
                        rows.extend(tail);
                        SeriesMatrix::from_rows(&rows, labels.clone())
                    })
                    .and_then(|pseudo| estimation::fit(&pseudo, p, config));
                match refit {
                    Ok(f) => return (Some(f.model().clone()), attempt),
                    Err(_) => continue,
                }
            }
            (None, 2)
        })
        .collect();

    let excluded = results.iter().filter(|(m, _)| m.is_none()).count();
    let redrawn = results.iter().filter(|(_, a)| *a >= 1).count();
    Ok(BootstrapParams {
        models: results.into_iter().map(|(m, _)| m).collect(),
        excluded,
        redrawn,
    })
}

/// Step 5: conditional on the last p original observations, run the
/// forward recursion with each replicate's coefficients, adding a fresh
/// pool draw at every step.
pub fn bootstrap_future_draws(
    series: &SeriesMatrix,
    fit: &WeightedFit,
    params: &BootstrapParams,
    pool: &[DVector<f64>],
    horizon_h: usize,
    gamma: f64,
    rng: &InnovationSource,
) -> Result<BootstrapForecast> {
    check_gamma(gamma)?;
    if horizon_h == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    if pool.is_empty() {
        return Err(Error::InvalidInput("empty bootstrap residual pool".into()));
    }
    let p = fit.model().order_p();
    let n = series.dim_n();
    let tail = series.tail_rows(p);

    let results: Vec<(Option<DMatrix<f64>>, usize)> = params
        .models
        .par_iter()
        .enumerate()
        .map(|(b, model)| {
            let Some(model) = model else { return (None, 0) };
            let mut r = rng.substream(LANE_FUTURE, b as u64).rng();
            for attempt in 0..2usize {
                let draws = draw_pool(pool, horizon_h, &mut r);
                match simulate_from_innovations(model, &tail, &draws) {
                    Ok(path) => {
                        let mut m = DMatrix::zeros(horizon_h, n);
                        for (h, y) in path.iter().enumerate() {
                            m.row_mut(h).copy_from(&y.transpose());
                        }
                        return (Some(m), attempt);
                    }
                    Err(_) => continue,
                }
            }
            (None, 2)
        })
        .collect();

    let survivors = params.models.iter().filter(|m| m.is_some()).count();
    let dropped_here = results
        .iter()
        .zip(&params.models)
        .filter(|((d, _), m)| d.is_none() && m.is_some())
        .count();
    let redrawn = results.iter().filter(|(d, a)| d.is_some() && *a >= 1).count();
    let draws: Vec<DMatrix<f64>> = results.into_iter().filter_map(|(d, _)| d).collect();
    if draws.is_empty() {
        return Err(Error::Estimation(
            "every bootstrap replicate was excluded as non-finite".into(),
        ));
    }
    debug_assert_eq!(draws.len(), survivors - dropped_here);
    Ok(BootstrapForecast {
        draws,
        gamma,
        horizon: horizon_h,
        estimator_tag: fit.method(),
        excluded: params.excluded + dropped_here,
        redrawn: params.redrawn + redrawn,
    })
}

/// Componentwise empirical quantiles of the draws at each horizon:
/// marginal levels for N = 1, Bonferroni levels gamma/(2N) for N >= 2.
/// A single draw yields the degenerate interval at that draw.
pub fn interval_from_draws(forecast: &BootstrapForecast) -> Result<IntervalSet> {
    let b = forecast.draws.len();
    if b == 0 {
        return Err(Error::InvalidInput("no bootstrap draws".into()));
    }
    check_gamma(forecast.gamma)?;
    let h_max = forecast.horizon;
    let n = forecast.draws[0].ncols();
    let (tau, kind) = if n == 1 {
        (forecast.gamma / 2.0, IntervalKind::Marginal)
    } else {
        (forecast.gamma / (2.0 * n as f64), IntervalKind::Bonferroni)
    };
    let mut lower = DMatrix::zeros(h_max, n);
    let mut upper = DMatrix::zeros(h_max, n);
    let mut buf = vec![0.0; b];
    for h in 0..h_max {
        for c in 0..n {
            for (i, d) in forecast.draws.iter().enumerate() {
                buf[i] = d[(h, c)];
            }
            buf.sort_by(|a, b| a.total_cmp(b));
            lower[(h, c)] = empirical_quantile(&buf, tau);
            upper[(h, c)] = empirical_quantile(&buf, 1.0 - tau);
        }
    }
    Ok(IntervalSet {
        lower,
        upper,
        gamma: forecast.gamma,
        kind,
    })
}

/// Gaussian baseline: point forecast +/- z * sqrt(diag Sigma(h)), with z at
/// 1 - gamma/2 for N = 1 and 1 - gamma/(2N) per component for N >= 2.
pub fn normal_quantile_interval(
    point_forecast: &[DVector<f64>],
    model: &ArModelSpec,
    gamma: f64,
) -> Result<IntervalSet> {
    check_gamma(gamma)?;
    if point_forecast.is_empty() {
        return Err(Error::InvalidInput("empty point forecast".into()));
    }
    let h_max = point_forecast.len();
    let n = model.dim_n();
    let (tau, kind) = if n == 1 {
        (gamma / 2.0, IntervalKind::Marginal)
    } else {
        (gamma / (2.0 * n as f64), IntervalKind::Bonferroni)
    };
    let z = statrs::distribution::Normal::new(0.0, 1.0)
        .expect("unit normal")
        .inverse_cdf(1.0 - tau);
    let fec = forecast_error_cov(model, h_max)?;
    let mut lower = DMatrix::zeros(h_max, n);
    let mut upper = DMatrix::zeros(h_max, n);
    for h in 0..h_max {
        for c in 0..n {
            let sd = fec.sigmas[h][(c, c)].max(0.0).sqrt();
            lower[(h, c)] = point_forecast[h][c] - z * sd;
            upper[(h, c)] = point_forecast[h][c] + z * sd;
        }
    }
    Ok(IntervalSet {
        lower,
        upper,
        gamma,
        kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{fit_ols, prepare_bootstrap_residuals, RescaleMode};
    use crate::model::{forecast, simulate};
    use approx::assert_relative_eq;

    fn ar1_fixture(seed: u64, t: usize) -> (SeriesMatrix, WeightedFit) {
        let model = ArModelSpec::univariate(0.0, vec![0.5], 1.0).unwrap();
        let series = simulate(&model, t, &InnovationSource::gaussian(seed), 300).unwrap();
        let fit = fit_ols(&series, 1).unwrap();
        (series, fit)
    }

    #[test]
    fn degenerate_pool_gives_deterministic_paths() {
        let (series, fit) = ar1_fixture(70, 60);
        let pool = vec![DVector::zeros(1)];
        let src = InnovationSource::gaussian(1);
        let params = bootstrap_paths(&series, &fit, &pool, 8, &src, &FitConfig::ols()).unwrap();
        assert_eq!(params.excluded, 0);
        // zero innovations: the pseudo path is an exact AR realization, so
        // every re-fit interpolates the original coefficients
        for m in params.models.iter().flatten() {
            assert_relative_eq!(
                m.phis()[0][(0, 0)],
                fit.model().phis()[0][(0, 0)],
                epsilon = 1e-8
            );
            assert_relative_eq!(m.phi0()[0], fit.model().phi0()[0], epsilon = 1e-8);
        }
    }

    #[test]
    fn degenerate_pool_collapses_draws_to_point_forecast() {
        let (series, fit) = ar1_fixture(71, 60);
        let pool = vec![DVector::zeros(1)];
        let src = InnovationSource::gaussian(2);
        let params = bootstrap_paths(&series, &fit, &pool, 3, &src, &FitConfig::ols()).unwrap();
        let fc =
            bootstrap_future_draws(&series, &fit, &params, &pool, 5, 0.05, &src).unwrap();
        let point = forecast(fit.model(), &series, 5).unwrap();
        for d in &fc.draws {
            for h in 0..5 {
                assert_relative_eq!(d[(h, 0)], point[h][0], epsilon = 1e-8);
            }
        }
        let iv = interval_from_draws(&fc).unwrap();
        for h in 1..=5 {
            assert_relative_eq!(iv.widths(h)[0], 0.0, epsilon = 1e-8);
            assert_relative_eq!(iv.lower[(h - 1, 0)], point[h - 1][0], epsilon = 1e-8);
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let (series, fit) = ar1_fixture(72, 80);
        let pool = prepare_bootstrap_residuals(&fit, RescaleMode::CenterOnly).unwrap();
        let src = InnovationSource::gaussian(99).with_stream(7);
        let run = || {
            let params =
                bootstrap_paths(&series, &fit, &pool, 1, &src, &FitConfig::ols()).unwrap();
            let fc = bootstrap_future_draws(&series, &fit, &params, &pool, 4, 0.05, &src).unwrap();
            (
                params.models[0].as_ref().unwrap().phis()[0][(0, 0)],
                fc.draws[0].clone(),
            )
        };
        let (phi_a, draws_a) = run();
        let (phi_b, draws_b) = run();
        assert_eq!(phi_a.to_bits(), phi_b.to_bits());
        assert_eq!(draws_a, draws_b);
    }

    #[test]
    fn replicate_coefficients_track_sampling_distribution() {
        let (series, fit) = ar1_fixture(73, 100);
        let pool = prepare_bootstrap_residuals(&fit, RescaleMode::CenterOnly).unwrap();
        let src = InnovationSource::gaussian(4);
        let params =
            bootstrap_paths(&series, &fit, &pool, 1999, &src, &FitConfig::ols()).unwrap();
        assert_eq!(params.excluded, 0);
        let phis: Vec<f64> = params
            .models
            .iter()
            .flatten()
            .map(|m| m.phis()[0][(0, 0)])
            .collect();
        let mean = phis.iter().sum::<f64>() / phis.len() as f64;
        let sd = (phis.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / phis.len() as f64).sqrt();
        let phi_hat = fit.model().phis()[0][(0, 0)];
        let asym = ((1.0 - phi_hat * phi_hat) / 100.0).sqrt();
        assert!((mean - phi_hat).abs() < 3.0 * asym / (phis.len() as f64).sqrt() + 0.02);
        assert!(
            (sd - asym).abs() / asym < 0.3,
            "bootstrap sd {sd} vs asymptotic {asym}"
        );
    }

    #[test]
    fn one_step_draw_variance_matches_forecast_error_cov() {
        let (series, fit) = ar1_fixture(74, 100);
        let pool = prepare_bootstrap_residuals(&fit, RescaleMode::CenterOnly).unwrap();
        let src = InnovationSource::gaussian(5);
        let params =
            bootstrap_paths(&series, &fit, &pool, 2000, &src, &FitConfig::ols()).unwrap();
        let fc = bootstrap_future_draws(&series, &fit, &params, &pool, 1, 0.05, &src).unwrap();
        let vals: Vec<f64> = fc.draws.iter().map(|d| d[(0, 0)]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        let sigma1 = forecast_error_cov(fit.model(), 1).unwrap().sigmas[0][(0, 0)];
        assert!(
            (var - sigma1).abs() / sigma1 < 0.15,
            "draw variance {var} vs Sigma(1) {sigma1}"
        );
    }

    #[test]
    fn var_draw_array_shape() {
        let model = crate::model::tests::var2_paper_model();
        let series = simulate(&model, 100, &InnovationSource::gaussian(75), 300).unwrap();
        let fit = fit_ols(&series, 2).unwrap();
        let pool = prepare_bootstrap_residuals(&fit, RescaleMode::CenterOnly).unwrap();
        let src = InnovationSource::gaussian(6);
        let params = bootstrap_paths(&series, &fit, &pool, 25, &src, &FitConfig::ols()).unwrap();
        let fc = bootstrap_future_draws(&series, &fit, &params, &pool, 10, 0.05, &src).unwrap();
        assert_eq!(fc.draws.len(), 25);
        assert_eq!(fc.draws[0].nrows(), 10);
        assert_eq!(fc.draws[0].ncols(), 2);
        let iv = interval_from_draws(&fc).unwrap();
        assert_eq!(iv.kind, IntervalKind::Bonferroni);
        assert_eq!(iv.horizon(), 10);
    }

    #[test]
    fn interval_quantiles_follow_the_rank_rule() {
        let draws: Vec<DMatrix<f64>> = (1..=100)
            .map(|v| DMatrix::from_element(1, 1, v as f64))
            .collect();
        let fc = BootstrapForecast {
            draws,
            gamma: 0.05,
            horizon: 1,
            estimator_tag: FitMethod::OlsCml,
            excluded: 0,
            redrawn: 0,
        };
        let iv = interval_from_draws(&fc).unwrap();
        assert_relative_eq!(iv.lower[(0, 0)], 3.475, epsilon = 1e-12);
        assert_relative_eq!(iv.upper[(0, 0)], 97.525, epsilon = 1e-12);
        assert_eq!(iv.kind, IntervalKind::Marginal);
    }

    #[test]
    fn identical_draws_give_degenerate_interval() {
        let draws: Vec<DMatrix<f64>> = (0..10).map(|_| DMatrix::from_element(2, 1, 3.5)).collect();
        let fc = BootstrapForecast {
            draws,
            gamma: 0.1,
            horizon: 2,
            estimator_tag: FitMethod::OlsCml,
            excluded: 0,
            redrawn: 0,
        };
        let iv = interval_from_draws(&fc).unwrap();
        assert_eq!(iv.lower[(1, 0)], 3.5);
        assert_eq!(iv.upper[(1, 0)], 3.5);
    }

    #[test]
    fn bonferroni_levels_for_two_components() {
        // N = 2, gamma = 0.05: per-component levels 0.0125 and 0.9875
        let draws: Vec<DMatrix<f64>> = (1..=81)
            .map(|v| {
                DMatrix::from_fn(1, 2, |_, c| if c == 0 { v as f64 } else { -(v as f64) })
            })
            .collect();
        let fc = BootstrapForecast {
            draws,
            gamma: 0.05,
            horizon: 1,
            estimator_tag: FitMethod::OlsCml,
            excluded: 0,
            redrawn: 0,
        };
        let iv = interval_from_draws(&fc).unwrap();
        let sorted: Vec<f64> = (1..=81).map(|v| v as f64).collect();
        assert_relative_eq!(
            iv.lower[(0, 0)],
            empirical_quantile(&sorted, 0.0125),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            iv.upper[(0, 0)],
            empirical_quantile(&sorted, 0.9875),
            epsilon = 1e-12
        );
    }

    #[test]
    fn intervals_widen_as_gamma_shrinks() {
        let mut rng = InnovationSource::gaussian(76).rng();
        use rand::Rng;
        let draws: Vec<DMatrix<f64>> = (0..500)
            .map(|_| DMatrix::from_element(1, 1, rng.gen_range(-3.0..3.0)))
            .collect();
        let mut prev_width = 0.0;
        for gamma in [0.4, 0.2, 0.1, 0.05, 0.01] {
            let fc = BootstrapForecast {
                draws: draws.clone(),
                gamma,
                horizon: 1,
                estimator_tag: FitMethod::OlsCml,
                excluded: 0,
                redrawn: 0,
            };
            let iv = interval_from_draws(&fc).unwrap();
            let w = iv.widths(1)[0];
            assert!(iv.lower[(0, 0)] <= iv.upper[(0, 0)]);
            assert!(w >= prev_width - 1e-12, "interval must widen as gamma shrinks");
            prev_width = w;
        }
    }

    #[test]
    fn normal_interval_single_step_unit_variance() {
        let model = ArModelSpec::univariate(0.0, vec![0.0], 1.0).unwrap();
        let point = vec![DVector::zeros(1)];
        let iv = normal_quantile_interval(&point, &model, 0.05).unwrap();
        assert_relative_eq!(iv.lower[(0, 0)], -1.959964, epsilon = 1e-5);
        assert_relative_eq!(iv.upper[(0, 0)], 1.959964, epsilon = 1e-5);
    }

    #[test]
    fn normal_interval_flat_when_no_dynamics() {
        let model = ArModelSpec::univariate(0.3, vec![0.0], 2.0).unwrap();
        let point = vec![DVector::from_element(1, 0.3); 6];
        let iv = normal_quantile_interval(&point, &model, 0.05).unwrap();
        for h in 2..=6 {
            assert_relative_eq!(iv.widths(h)[0], iv.widths(1)[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn normal_interval_geometric_half_width() {
        let model = ArModelSpec::univariate(0.0, vec![0.9], 1.0).unwrap();
        let point = vec![DVector::zeros(1); 10];
        let iv = normal_quantile_interval(&point, &model, 0.05).unwrap();
        let var10: f64 = (0..10).map(|k| 0.81_f64.powi(k)).sum();
        let z = statrs::distribution::Normal::new(0.0, 1.0)
            .unwrap()
            .inverse_cdf(0.975);
        assert_relative_eq!(iv.upper[(9, 0)], z * var10.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn rejects_bad_gamma_and_single_draw_degenerates() {
        let (series, fit) = ar1_fixture(77, 50);
        let pool = vec![DVector::zeros(1)];
        let src = InnovationSource::gaussian(7);
        let params = bootstrap_paths(&series, &fit, &pool, 1, &src, &FitConfig::ols()).unwrap();
        assert!(bootstrap_future_draws(&series, &fit, &params, &pool, 3, 0.7, &src).is_err());
        let fc = bootstrap_future_draws(&series, &fit, &params, &pool, 3, 0.05, &src).unwrap();
        // B = 1: both quantiles coincide with the single draw
        let iv = interval_from_draws(&fc).unwrap();
        for h in 1..=3 {
            assert_eq!(iv.lower[(h - 1, 0)], fc.draws[0][(h - 1, 0)]);
            assert_eq!(iv.upper[(h - 1, 0)], fc.draws[0][(h - 1, 0)]);
        }
    }
}
