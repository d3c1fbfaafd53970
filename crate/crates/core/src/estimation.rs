//! Classical OLS/CML fitting and the weighted-likelihood estimator.
//!
//! The weighted estimator compares a kernel density of the current
//! residuals against the smoothed Gaussian model density, converts the
//! discrepancy into Pearson residuals, maps those through the Hellinger
//! residual-adjustment function to per-time-point weights in [0, 1], and
//! re-solves the weighted score equations until the parameters settle.
//! Outlying time points end up with small weights, so both the coefficient
//! estimates and the residual pool fed to the bootstrap are robust.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ArModelSpec;
use crate::series::SeriesMatrix;

const SQRT_TWO_PI: f64 = 2.506_628_274_631_000_5;

/// Estimation method for a fit or a bootstrap re-fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitMethod {
    OlsCml,
    WeightedLikelihood,
}

impl FitMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            FitMethod::OlsCml => "ols",
            FitMethod::WeightedLikelihood => "weighted",
        }
    }
}

/// Residual adjustment function family. Only Hellinger is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Raf {
    Hellinger,
}

/// How the centered residual pool is rescaled before resampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RescaleMode {
    /// Center, then inflate by sqrt((T-p)/(T-p-Np-1)).
    CenterOnly,
    /// Center, then divide each component by its sample standard deviation.
    Standardize,
}

/// Tuning for [`fit`] and friends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub method: FitMethod,
    pub raf: Raf,
    /// Kernel bandwidth factor: g^2 = c * sigma^2.
    pub kernel_smoothing_c: f64,
    /// Convergence tolerance on the largest absolute parameter change.
    pub tol: f64,
    pub max_iter: usize,
    pub rescale_mode: RescaleMode,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            method: FitMethod::OlsCml,
            raf: Raf::Hellinger,
            // narrow relative to the residual scale: a wide kernel lets an
            // outlier-inflated scale absorb the outliers themselves and the
            // weights never leave 1
            kernel_smoothing_c: 0.1,
            tol: 1e-8,
            max_iter: 500,
            rescale_mode: RescaleMode::CenterOnly,
        }
    }
}

impl FitConfig {
    pub fn ols() -> Self {
        Self::default()
    }

    pub fn weighted() -> Self {
        Self {
            method: FitMethod::WeightedLikelihood,
            ..Self::default()
        }
    }

    pub fn with_method(mut self, method: FitMethod) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kernel_smoothing_c > 0.0 && self.kernel_smoothing_c.is_finite()) {
            return Err(Error::InvalidInput(
                "kernel smoothing factor must be positive".into(),
            ));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidInput("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// An estimated model with its residuals, weights, and diagnostics.
#[derive(Debug, Clone)]
pub struct WeightedFit {
    model: ArModelSpec,
    residuals: DMatrix<f64>,
    weights: DVector<f64>,
    pearson: DVector<f64>,
    converged: bool,
    iterations: usize,
    regularized: bool,
    method: FitMethod,
}

impl WeightedFit {
    pub fn model(&self) -> &ArModelSpec {
        &self.model
    }

    /// Residual rows for t = p+1 .. T.
    pub fn residuals(&self) -> &DMatrix<f64> {
        &self.residuals
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn pearson(&self) -> &DVector<f64> {
        &self.pearson
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn regularized(&self) -> bool {
        self.regularized
    }

    pub fn method(&self) -> FitMethod {
        self.method
    }

    /// Innovation variance for univariate fits.
    pub fn sigma2(&self) -> f64 {
        self.model.sigma_eps()[(0, 0)]
    }

    /// Per-row weighted residuals: row t is weights[t] * residuals[t].
    pub fn weighted_residuals(&self) -> DMatrix<f64> {
        let mut out = self.residuals.clone();
        for (t, mut row) in out.row_iter_mut().enumerate() {
            row *= self.weights[t];
        }
        out
    }
}

/// Regressand rows Y_t and design rows [1, Y_{t-1}', .., Y_{t-p}'].
pub(crate) fn lagged_design(series: &SeriesMatrix, p: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let t = series.length_t();
    let n = series.dim_n();
    let rows = t - p;
    let v = series.values();
    let mut x = DMatrix::zeros(rows, 1 + n * p);
    let mut y = DMatrix::zeros(rows, n);
    for r in 0..rows {
        let time = p + r;
        x[(r, 0)] = 1.0;
        for lag in 1..=p {
            for c in 0..n {
                x[(r, 1 + (lag - 1) * n + c)] = v[(time - lag, c)];
            }
        }
        for c in 0..n {
            y[(r, c)] = v[(time, c)];
        }
    }
    (x, y)
}

/// Least squares with optional per-row weights, solved through the SVD.
/// Rejects rank-deficient designs instead of silently pseudo-inverting.
pub(crate) fn weighted_least_squares(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    weights: Option<&DVector<f64>>,
) -> Result<DMatrix<f64>> {
    let (xw, yw) = match weights {
        None => (x.clone(), y.clone()),
        Some(w) => {
            let mut xw = x.clone();
            let mut yw = y.clone();
            for (r, &wt) in w.iter().enumerate() {
                let s = wt.max(0.0).sqrt();
                let mut xr = xw.row_mut(r);
                xr *= s;
                let mut yr = yw.row_mut(r);
                yr *= s;
            }
            (xw, yw)
        }
    };
    let svd = xw.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smax > 0.0) || smin <= 1e-10 * smax {
        return Err(Error::RankDeficient(format!(
            "smallest singular value {smin:.3e} vs largest {smax:.3e}"
        )));
    }
    svd.solve(&yw, 0.0)
        .map_err(|e| Error::Estimation(e.to_string()))
}

/// Reassemble an [`ArModelSpec`] from a stacked coefficient matrix.
fn model_from_coefficients(
    b: &DMatrix<f64>,
    n: usize,
    p: usize,
    sigma: DMatrix<f64>,
) -> Result<ArModelSpec> {
    let phi0 = b.row(0).transpose();
    let phis = (0..p)
        .map(|i| b.rows(1 + i * n, n).transpose())
        .collect();
    ArModelSpec::new(phi0, phis, sigma)
}

fn coefficients_from_model(model: &ArModelSpec) -> DMatrix<f64> {
    let n = model.dim_n();
    let p = model.order_p();
    let mut b = DMatrix::zeros(1 + n * p, n);
    b.row_mut(0).copy_from(&model.phi0().transpose());
    for (i, phi) in model.phis().iter().enumerate() {
        b.view_mut((1 + i * n, 0), (n, n)).copy_from(&phi.transpose());
    }
    b
}

fn check_sample_size(series: &SeriesMatrix, p: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::InvalidInput("lag order must be at least 1".into()));
    }
    let t = series.length_t();
    let n = series.dim_n();
    if t < p || t - p < n * p + 2 {
        return Err(Error::SeriesTooShort {
            needed: p + n * p + 2,
            have: t,
        });
    }
    Ok(())
}

/// Multivariate least squares on the lagged design with intercept.
///
/// Residual covariance uses the degrees-of-freedom divisor
/// T - p - Np - 1. Weights are all one.
pub fn fit_ols(series: &SeriesMatrix, order_p: usize) -> Result<WeightedFit> {
    check_sample_size(series, order_p)?;
    let n = series.dim_n();
    let (x, y) = lagged_design(series, order_p);
    let b = weighted_least_squares(&x, &y, None)?;
    let e = &y - &x * &b;
    let rows = e.nrows();
    let dof = rows - (n * order_p + 1);
    let sigma = (e.transpose() * &e) / dof as f64;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let model = model_from_coefficients(&b, n, order_p, sigma)?;
    Ok(WeightedFit {
        model,
        residuals: e,
        weights: DVector::from_element(rows, 1.0),
        pearson: DVector::zeros(rows),
        converged: true,
        iterations: 0,
        regularized: false,
        method: FitMethod::OlsCml,
    })
}

/// Pearson residuals for univariate residuals.
///
/// The kernel estimate f* averages Gaussian kernels of variance
/// g^2 = c * sigma^2 over the residuals; the smoothed model density m* is
/// the N(0, sigma^2 + g^2) density, the closed-form convolution of the
/// model with the kernel. delta_t = f*/m* - 1.
pub fn pearson_residuals(residuals: &[f64], sigma2: f64, smoothing_c: f64) -> Result<Vec<f64>> {
    if residuals.is_empty() {
        return Err(Error::InvalidInput("no residuals".into()));
    }
    if !(smoothing_c > 0.0 && smoothing_c.is_finite()) {
        return Err(Error::InvalidInput(
            "kernel smoothing factor must be positive".into(),
        ));
    }
    let g2 = smoothing_c * sigma2;
    if !(g2 > 0.0 && g2.is_finite()) {
        return Err(Error::DegenerateScale(format!(
            "kernel bandwidth g^2 = {g2} (sigma^2 = {sigma2})"
        )));
    }
    let n = residuals.len();
    let norm_k = 1.0 / (SQRT_TWO_PI * g2.sqrt());
    let half_inv_g2 = 0.5 / g2;
    // own-point kernel term, then symmetric pairwise accumulation
    let mut f = vec![norm_k; n];
    for t in 0..n {
        let et = residuals[t];
        for r in t + 1..n {
            let d = et - residuals[r];
            let k = norm_k * (-d * d * half_inv_g2).exp();
            f[t] += k;
            f[r] += k;
        }
    }
    let m_var = sigma2 + g2;
    let norm_m = 1.0 / (SQRT_TWO_PI * m_var.sqrt());
    let half_inv_m = 0.5 / m_var;
    Ok(residuals
        .iter()
        .zip(f)
        .map(|(&e, fsum)| {
            let fstar = fsum / n as f64;
            let m = norm_m * (-e * e * half_inv_m).exp();
            if m > 0.0 {
                fstar / m - 1.0
            } else {
                f64::INFINITY
            }
        })
        .collect())
}

/// Hellinger RAF weight: omega = min{1, [A(delta)+1]^+ / (delta+1)} with
/// A(delta) = 2 (sqrt(delta+1) - 1).
pub fn raf_weight(delta: f64) -> Result<f64> {
    if delta.is_nan() || delta <= -1.0 {
        return Err(Error::InvalidInput(format!(
            "Pearson residual must exceed -1, got {delta}"
        )));
    }
    if delta.is_infinite() {
        return Ok(0.0);
    }
    let s = (delta + 1.0).sqrt();
    let numerator = (2.0 * s - 1.0).max(0.0);
    Ok((numerator / (delta + 1.0)).min(1.0))
}

fn weights_from_deltas(deltas: &[f64]) -> Result<DVector<f64>> {
    let w: Result<Vec<f64>> = deltas.iter().map(|&d| raf_weight(d)).collect();
    Ok(DVector::from_vec(w?))
}

/// Weighted likelihood fit for univariate series.
///
/// Iteratively reweighted least squares initialized at OLS: residuals,
/// Pearson residuals, RAF weights, weighted LS for the coefficients, then
/// the closed-form weighted second moment for sigma^2. Stops when the
/// largest parameter change drops below `tol`. Non-convergence returns the
/// last iterate with `converged = false`.
pub fn fit_weighted_likelihood(
    series: &SeriesMatrix,
    order_p: usize,
    config: &FitConfig,
) -> Result<WeightedFit> {
    config.validate()?;
    if series.dim_n() != 1 {
        return Err(Error::InvalidInput(
            "fit_weighted_likelihood expects a univariate series; use fit_weighted_likelihood_var"
                .into(),
        ));
    }
    let ols = fit_ols(series, order_p)?;
    if config.max_iter == 0 {
        return Ok(WeightedFit {
            converged: false,
            method: FitMethod::WeightedLikelihood,
            ..ols
        });
    }
    let (x, y) = lagged_design(series, order_p);
    let mut b = coefficients_from_model(ols.model());
    let mut sigma2 = ols.sigma2();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=config.max_iter {
        let e = &y - &x * &b;
        let deltas = pearson_residuals(e.column(0).as_slice(), sigma2, config.kernel_smoothing_c)?;
        let w = weights_from_deltas(&deltas)?;
        let b_new = weighted_least_squares(&x, &y, Some(&w))?;
        let e_new = &y - &x * &b_new;
        let wsum = w.sum();
        if !(wsum > 0.0) {
            return Err(Error::Estimation("all observation weights are zero".into()));
        }
        let s2_new = e_new
            .column(0)
            .iter()
            .zip(w.iter())
            .map(|(e, w)| w * e * e)
            .sum::<f64>()
            / wsum;
        let change = (&b_new - &b).amax().max((s2_new - sigma2).abs());
        b = b_new;
        sigma2 = s2_new;
        iterations = it;
        if change < config.tol {
            converged = true;
            break;
        }
    }
    let e = &y - &x * &b;
    let deltas = pearson_residuals(e.column(0).as_slice(), sigma2, config.kernel_smoothing_c)?;
    let weights = weights_from_deltas(&deltas)?;
    let model = model_from_coefficients(&b, 1, order_p, DMatrix::from_element(1, 1, sigma2))?;
    Ok(WeightedFit {
        model,
        residuals: e,
        weights,
        pearson: DVector::from_vec(deltas),
        converged,
        iterations,
        regularized: false,
        method: FitMethod::WeightedLikelihood,
    })
}

/// Per-point log-density machinery for the multivariate case.
struct MvnKernel {
    inv_factor: DMatrix<f64>,
    norm: f64,
}

impl MvnKernel {
    /// Gaussian density with covariance `cov`; None if not positive definite.
    fn new(cov: &DMatrix<f64>) -> Option<Self> {
        let n = cov.nrows();
        let chol = Cholesky::new(cov.clone())?;
        let l = chol.l();
        let det_sqrt: f64 = (0..n).map(|i| l[(i, i)]).product();
        let inv_factor = l.try_inverse()?;
        Some(Self {
            inv_factor,
            norm: 1.0 / (SQRT_TWO_PI.powi(n as i32) * det_sqrt),
        })
    }

    fn density(&self, d: &DVector<f64>) -> f64 {
        let z = &self.inv_factor * d;
        self.norm * (-0.5 * z.norm_squared()).exp()
    }
}

/// Pearson residuals for multivariate residual rows: one scalar per time
/// point. f* averages Gaussian kernels with bandwidth matrix c * Sigma,
/// m* is the N(0, (1+c) * Sigma) density.
fn multivariate_pearson(
    residuals: &DMatrix<f64>,
    sigma: &mut DMatrix<f64>,
    smoothing_c: f64,
    regularized: &mut bool,
) -> Result<Vec<f64>> {
    let n_dim = residuals.ncols();
    let rows = residuals.nrows();
    let mut kernels = (
        MvnKernel::new(&(sigma.clone() * smoothing_c)),
        MvnKernel::new(&(sigma.clone() * (1.0 + smoothing_c))),
    );
    if kernels.0.is_none() || kernels.1.is_none() {
        // near-singular covariance: bump the diagonal once and retry
        let bump = 1e-8 * sigma.trace() / n_dim as f64;
        for i in 0..n_dim {
            sigma[(i, i)] += bump;
        }
        *regularized = true;
        kernels = (
            MvnKernel::new(&(sigma.clone() * smoothing_c)),
            MvnKernel::new(&(sigma.clone() * (1.0 + smoothing_c))),
        );
    }
    let (kern, model_density) = match kernels {
        (Some(k), Some(m)) => (k, m),
        _ => {
            return Err(Error::DegenerateScale(
                "residual covariance is singular even after regularization".into(),
            ))
        }
    };
    let rows_vec: Vec<DVector<f64>> = (0..rows).map(|t| residuals.row(t).transpose()).collect();
    let mut f = vec![kern.norm; rows];
    for t in 0..rows {
        for r in t + 1..rows {
            let k = kern.density(&(&rows_vec[t] - &rows_vec[r]));
            f[t] += k;
            f[r] += k;
        }
    }
    Ok((0..rows)
        .map(|t| {
            let fstar = f[t] / rows as f64;
            let m = model_density.density(&rows_vec[t]);
            if m > 0.0 {
                fstar / m - 1.0
            } else {
                f64::INFINITY
            }
        })
        .collect())
}

/// Weighted likelihood fit for multivariate series: one scalar weight per
/// time point applied to the whole residual vector. Near-singular residual
/// covariances get a one-off diagonal bump of 1e-8 * trace/N, reported via
/// `regularized`.
pub fn fit_weighted_likelihood_var(
    series: &SeriesMatrix,
    order_p: usize,
    config: &FitConfig,
) -> Result<WeightedFit> {
    config.validate()?;
    let n = series.dim_n();
    let ols = fit_ols(series, order_p)?;
    if config.max_iter == 0 {
        return Ok(WeightedFit {
            converged: false,
            method: FitMethod::WeightedLikelihood,
            ..ols
        });
    }
    let (x, y) = lagged_design(series, order_p);
    let mut b = coefficients_from_model(ols.model());
    let mut sigma = ols.model().sigma_eps().clone();
    let mut converged = false;
    let mut iterations = 0;
    let mut regularized = false;
    for it in 1..=config.max_iter {
        let e = &y - &x * &b;
        let deltas = multivariate_pearson(&e, &mut sigma, config.kernel_smoothing_c, &mut regularized)?;
        let w = weights_from_deltas(&deltas)?;
        let b_new = weighted_least_squares(&x, &y, Some(&w))?;
        let e_new = &y - &x * &b_new;
        let wsum = w.sum();
        if !(wsum > 0.0) {
            return Err(Error::Estimation("all observation weights are zero".into()));
        }
        let mut s_new = DMatrix::zeros(n, n);
        for (t, row) in e_new.row_iter().enumerate() {
            let v = row.transpose();
            s_new += &v * v.transpose() * w[t];
        }
        s_new /= wsum;
        s_new = (&s_new + s_new.transpose()) * 0.5;
        let change = (&b_new - &b).amax().max((&s_new - &sigma).amax());
        b = b_new;
        sigma = s_new;
        iterations = it;
        if change < config.tol {
            converged = true;
            break;
        }
    }
    let e = &y - &x * &b;
    let deltas = multivariate_pearson(&e, &mut sigma, config.kernel_smoothing_c, &mut regularized)?;
    let weights = weights_from_deltas(&deltas)?;
    let model = model_from_coefficients(&b, n, order_p, sigma)?;
    Ok(WeightedFit {
        model,
        residuals: e,
        weights,
        pearson: DVector::from_vec(deltas),
        converged,
        iterations,
        regularized,
        method: FitMethod::WeightedLikelihood,
    })
}

/// Evaluate a given model on a series without re-estimating: residuals at
/// the supplied parameters, and (for the weighted method) the Pearson
/// residuals and weights those parameters imply. Lets a stored fit drive
/// forecasts on fresh data.
pub fn evaluate_fit(
    series: &SeriesMatrix,
    model: &ArModelSpec,
    config: &FitConfig,
) -> Result<WeightedFit> {
    config.validate()?;
    let p = model.order_p();
    let n = model.dim_n();
    if series.dim_n() != n {
        return Err(Error::DimensionMismatch(format!(
            "series has {} components, model has {n}",
            series.dim_n()
        )));
    }
    check_sample_size(series, p)?;
    let (x, y) = lagged_design(series, p);
    let b = coefficients_from_model(model);
    let e = &y - &x * &b;
    let rows = e.nrows();
    let (weights, pearson) = match config.method {
        FitMethod::OlsCml => (DVector::from_element(rows, 1.0), DVector::zeros(rows)),
        FitMethod::WeightedLikelihood => {
            let deltas = if n == 1 {
                pearson_residuals(
                    e.column(0).as_slice(),
                    model.sigma_eps()[(0, 0)],
                    config.kernel_smoothing_c,
                )?
            } else {
                let mut sigma = model.sigma_eps().clone();
                let mut regularized = false;
                multivariate_pearson(&e, &mut sigma, config.kernel_smoothing_c, &mut regularized)?
            };
            (weights_from_deltas(&deltas)?, DVector::from_vec(deltas))
        }
    };
    Ok(WeightedFit {
        model: model.clone(),
        residuals: e,
        weights,
        pearson,
        converged: true,
        iterations: 0,
        regularized: false,
        method: config.method,
    })
}

/// Fit with the configured method, routing N = 1 weighted fits through the
/// scalar path.
pub fn fit(series: &SeriesMatrix, order_p: usize, config: &FitConfig) -> Result<WeightedFit> {
    match config.method {
        FitMethod::OlsCml => fit_ols(series, order_p),
        FitMethod::WeightedLikelihood => {
            if series.dim_n() == 1 {
                fit_weighted_likelihood(series, order_p, config)
            } else {
                fit_weighted_likelihood_var(series, order_p, config)
            }
        }
    }
}

/// Centered, rescaled weighted residuals: the pool the bootstrap draws from.
pub fn prepare_bootstrap_residuals(fit: &WeightedFit, mode: RescaleMode) -> Result<Vec<DVector<f64>>> {
    let e = fit.weighted_residuals();
    let rows = e.nrows();
    let n = e.ncols();
    if rows < 2 {
        return Err(Error::InvalidInput(
            "need at least 2 residual rows to build a bootstrap pool".into(),
        ));
    }
    let mut pool: Vec<DVector<f64>> = (0..rows).map(|t| e.row(t).transpose()).collect();
    let mut mean = DVector::zeros(n);
    for v in &pool {
        mean += v;
    }
    mean /= rows as f64;
    for v in &mut pool {
        *v -= &mean;
    }
    match mode {
        RescaleMode::CenterOnly => {
            let k = n * fit.model().order_p() + 1;
            if rows <= k {
                return Err(Error::InvalidInput(format!(
                    "{rows} residual rows cannot support {k} estimated parameters"
                )));
            }
            let inflate = (rows as f64 / (rows - k) as f64).sqrt();
            for v in &mut pool {
                *v *= inflate;
            }
        }
        RescaleMode::Standardize => {
            for c in 0..n {
                let var = pool.iter().map(|v| v[c] * v[c]).sum::<f64>() / (rows - 1) as f64;
                if !(var > 0.0) {
                    return Err(Error::DegenerateScale(format!(
                        "component {c} of the residual pool has zero variance"
                    )));
                }
                let sd = var.sqrt();
                for v in &mut pool {
                    v[c] /= sd;
                }
            }
        }
    }
    Ok(pool)
}
