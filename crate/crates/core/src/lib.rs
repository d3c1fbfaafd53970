//! Robust bootstrap prediction intervals for AR and VAR time series.
//!
//! The crate fits autoregressions by OLS or by a weighted-likelihood
//! estimator that down-weights additive and innovative outliers, builds
//! forward-recursion residual-resampling bootstrap prediction intervals
//! (Bonferroni cubes in the multivariate case), and ships a Monte Carlo
//! harness that scores coverage, interval length, cube volume, and cube
//! error against the empirical cube.

pub mod bootstrap;
pub mod contamination;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod model;
pub mod quantile;
pub mod rng;
pub mod series;

pub use bootstrap::{
    bootstrap_future_draws, bootstrap_paths, interval_from_draws, normal_quantile_interval,
    BootstrapForecast, BootstrapParams, IntervalKind, IntervalSet,
};
pub use contamination::{
    contaminate_ao, contaminate_io, draw_positions, ContaminationAmount, OutlierKind,
    OutlierPlan, OutlierTarget,
};
pub use error::{Error, Result};
pub use estimation::{
    evaluate_fit, fit, fit_ols, fit_weighted_likelihood, fit_weighted_likelihood_var,
    pearson_residuals, prepare_bootstrap_residuals, raf_weight, FitConfig, FitMethod, Raf,
    RescaleMode, WeightedFit,
};
pub use evaluation::{
    coverage, cube_squared_error, cube_volume, interval_length, run_scenario, ContaminationSpec,
    MetricCell, MetricsReport, ScenarioConfig,
};
pub use model::{
    draw_innovations, forecast, forecast_error_cov, ma_coefficients, select_order_aic, simulate,
    simulate_from_innovations, ArModelSpec, ForecastErrorCov, OrderSelection, DEFAULT_BURN_IN,
};
pub use quantile::{empirical_quantile, quantiles_of};
pub use rng::{derive_stream, ErrorDistribution, InnovationSource};
pub use series::{
    apply_transform, load_csv, load_csv_opts, CsvOptions, SeriesMatrix, TransformKind,
    TransformSpec,
};
