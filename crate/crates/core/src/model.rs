//! AR/VAR model representation, simulation, and forecast machinery.
//!
//! The model is `Y_t = phi0 + Phi_1 Y_{t-1} + ... + Phi_p Y_{t-p} + eps_t`
//! with innovation covariance `sigma_eps`. One representation serves both
//! the univariate (N = 1) and multivariate cases.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::InnovationSource;
use crate::series::SeriesMatrix;

/// Intercept, lag coefficient matrices, and innovation covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModelSpec {
    phi0: DVector<f64>,
    phis: Vec<DMatrix<f64>>,
    sigma_eps: DMatrix<f64>,
}

impl ArModelSpec {
    /// Validate dimensions and require `sigma_eps` symmetric positive
    /// semidefinite. Positive definiteness is checked where a routine
    /// actually needs it (density evaluation, Cholesky sampling of a
    /// non-degenerate law); semidefinite covariances are allowed so
    /// deterministic (zero-variance) simulations stay expressible.
    pub fn new(
        phi0: DVector<f64>,
        phis: Vec<DMatrix<f64>>,
        sigma_eps: DMatrix<f64>,
    ) -> Result<Self> {
        let n = phi0.len();
        if n == 0 {
            return Err(Error::InvalidInput("model dimension must be positive".into()));
        }
        if phis.is_empty() {
            return Err(Error::InvalidInput("lag order must be at least 1".into()));
        }
        for (i, phi) in phis.iter().enumerate() {
            if phi.nrows() != n || phi.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "lag matrix {} is {}x{}, expected {n}x{n}",
                    i + 1,
                    phi.nrows(),
                    phi.ncols()
                )));
            }
        }
        if sigma_eps.nrows() != n || sigma_eps.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "innovation covariance is {}x{}, expected {n}x{n}",
                sigma_eps.nrows(),
                sigma_eps.ncols()
            )));
        }
        let scale = sigma_eps.amax().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (sigma_eps[(i, j)] - sigma_eps[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::InvalidInput(
                        "innovation covariance is not symmetric".into(),
                    ));
                }
            }
        }
        let eig = sigma_eps.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
            return Err(Error::InvalidInput(
                "innovation covariance is not positive semidefinite".into(),
            ));
        }
        Ok(Self {
            phi0,
            phis,
            sigma_eps,
        })
    }

    /// Univariate AR(p) with scalar lag coefficients and innovation variance.
    pub fn univariate(phi0: f64, phis: Vec<f64>, sigma2: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, phi0),
            phis.into_iter()
                .map(|c| DMatrix::from_element(1, 1, c))
                .collect(),
            DMatrix::from_element(1, 1, sigma2),
        )
    }

    pub fn dim_n(&self) -> usize {
        self.phi0.len()
    }

    pub fn order_p(&self) -> usize {
        self.phis.len()
    }

    pub fn phi0(&self) -> &DVector<f64> {
        &self.phi0
    }

    pub fn phis(&self) -> &[DMatrix<f64>] {
        &self.phis
    }

    pub fn sigma_eps(&self) -> &DMatrix<f64> {
        &self.sigma_eps
    }

    /// The Np x Np companion matrix of the lag polynomial.
    pub fn companion_matrix(&self) -> DMatrix<f64> {
        let n = self.dim_n();
        let p = self.order_p();
        let mut c = DMatrix::zeros(n * p, n * p);
        for (i, phi) in self.phis.iter().enumerate() {
            c.view_mut((0, i * n), (n, n)).copy_from(phi);
        }
        for i in 1..p {
            c.view_mut((i * n, (i - 1) * n), (n, n))
                .copy_from(&DMatrix::identity(n, n));
        }
        c
    }

    /// Spectral radius of the companion matrix; < 1 means stationary.
    pub fn companion_spectral_radius(&self) -> f64 {
        self.companion_matrix()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_stationary(&self) -> bool {
        self.companion_spectral_radius() < 1.0
    }

    /// A factor F with F F' = sigma_eps, tolerant of semidefinite input.
    pub fn innovation_factor(&self) -> DMatrix<f64> {
        psd_factor(&self.sigma_eps)
    }
}

/// Factor a symmetric PSD matrix: Cholesky when definite, eigenvalue
/// square root with negatives clamped otherwise.
pub(crate) fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = Cholesky::new(m.clone()) {
        return chol.l();
    }
    let eig = m.clone().symmetric_eigen();
    let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &eig.eigenvectors * sqrt
}

/// Draw `count` innovation vectors with covariance shaped by `factor`.
///
/// Component draws come from the base distribution in time-major order, so
/// a fixed `(seed, stream_id)` pins the whole sequence.
pub fn draw_innovations(
    source: &InnovationSource,
    count: usize,
    factor: &DMatrix<f64>,
) -> Vec<DVector<f64>> {
    let n = factor.nrows();
    let mut rng = source.rng();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let z = DVector::from_fn(n, |_, _| source.distribution.sample(&mut rng));
        out.push(factor * z);
    }
    out
}

/// Run the AR recursion over a fixed innovation sequence.
///
/// `initial` holds the p states preceding the first innovation, oldest
/// first. Returns one state per innovation. Errors with the 0-based index
/// into `innovations` if a non-finite value appears (explosive model).
pub fn simulate_from_innovations(
    model: &ArModelSpec,
    initial: &[DVector<f64>],
    innovations: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let p = model.order_p();
    let n = model.dim_n();
    if initial.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "{} initial states for order {p}",
            initial.len()
        )));
    }
    let mut path: Vec<DVector<f64>> = Vec::with_capacity(p + innovations.len());
    path.extend_from_slice(initial);
    for (t, eps) in innovations.iter().enumerate() {
        if eps.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "innovation {t} has {} entries, expected {n}",
                eps.len()
            )));
        }
        let mut y = model.phi0.clone() + eps;
        for (i, phi) in model.phis.iter().enumerate() {
            y += phi * &path[path.len() - 1 - i];
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { time_index: t });
        }
        path.push(y);
    }
    Ok(path.split_off(p))
}

/// Simulate a stationary-start path of length `length_t`.
///
/// The recursion starts from zero states, runs `burn_in` extra steps, and
/// discards them. Fully determined by the innovation source's
/// `(seed, stream_id)` regardless of caller threading.
pub fn simulate(
    model: &ArModelSpec,
    length_t: usize,
    innovations: &InnovationSource,
    burn_in: usize,
) -> Result<SeriesMatrix> {
    if length_t == 0 {
        return Err(Error::InvalidInput("simulation length must be positive".into()));
    }
    innovations.distribution.validate()?;
    let factor = model.innovation_factor();
    let eps = draw_innovations(innovations, burn_in + length_t, &factor);
    let zero = vec![DVector::zeros(model.dim_n()); model.order_p()];
    let path = simulate_from_innovations(model, &zero, &eps)?;
    let labels = (1..=model.dim_n()).map(|i| format!("c{i}")).collect();
    SeriesMatrix::from_rows(&path[burn_in..], labels)
}

/// Default burn-in for stationary simulation start-up.
pub const DEFAULT_BURN_IN: usize = 500;

/// Plug-in point forecasts for horizons 1..=H given observed history.
pub fn forecast(
    model: &ArModelSpec,
    history: &SeriesMatrix,
    horizon_h: usize,
) -> Result<Vec<DVector<f64>>> {
    let p = model.order_p();
    if history.length_t() < p {
        return Err(Error::SeriesTooShort {
            needed: p,
            have: history.length_t(),
        });
    }
    if history.dim_n() != model.dim_n() {
        return Err(Error::DimensionMismatch(format!(
            "history has {} components, model has {}",
            history.dim_n(),
            model.dim_n()
        )));
    }
    if horizon_h == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    let mut states = history.tail_rows(p);
    let mut out = Vec::with_capacity(horizon_h);
    for _ in 0..horizon_h {
        let mut y = model.phi0.clone();
        for (i, phi) in model.phis.iter().enumerate() {
            y += phi * &states[states.len() - 1 - i];
        }
        states.push(y.clone());
        out.push(y);
    }
    Ok(out)
}

/// Moving-average coefficients of the forecast-error expansion.
#[derive(Debug, Clone)]
pub struct ForecastErrorCov {
    /// Psi_0 .. Psi_{H-1}, with Psi_0 = I.
    pub psis: Vec<DMatrix<f64>>,
    /// Sigma(1) .. Sigma(H).
    pub sigmas: Vec<DMatrix<f64>>,
}

/// Psi_0 = I, Psi_k = sum_{j=1}^{min(k,p)} Psi_{k-j} Phi_j.
pub fn ma_coefficients(model: &ArModelSpec, horizon_h: usize) -> Result<Vec<DMatrix<f64>>> {
    if horizon_h == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    let n = model.dim_n();
    let p = model.order_p();
    let mut psis: Vec<DMatrix<f64>> = Vec::with_capacity(horizon_h);
    psis.push(DMatrix::identity(n, n));
    for k in 1..horizon_h {
        let mut psi = DMatrix::zeros(n, n);
        for j in 1..=k.min(p) {
            psi += &psis[k - j] * &model.phis[j - 1];
        }
        psis.push(psi);
    }
    Ok(psis)
}

/// Forecast-error covariances Sigma(h) = sum_{k<h} Psi_k Sigma_eps Psi_k'.
pub fn forecast_error_cov(model: &ArModelSpec, horizon_h: usize) -> Result<ForecastErrorCov> {
    let psis = ma_coefficients(model, horizon_h)?;
    let mut sigmas = Vec::with_capacity(horizon_h);
    let mut acc = DMatrix::zeros(model.dim_n(), model.dim_n());
    for psi in &psis {
        acc += psi * &model.sigma_eps * psi.transpose();
        // symmetrize away accumulation roundoff
        let sym = (&acc + acc.transpose()) * 0.5;
        acc = sym.clone();
        sigmas.push(sym);
    }
    Ok(ForecastErrorCov { psis, sigmas })
}

/// Lag-order choice by AIC over p = 1..=p_max on a common effective sample.
#[derive(Debug, Clone)]
pub struct OrderSelection {
    pub selected: usize,
    /// (candidate p, AIC value) in ascending p.
    pub table: Vec<(usize, f64)>,
}

/// AIC(p) = ln det Sigma_hat(p) + 2 (p N^2 + N) / T_eff with
/// T_eff = T - p_max, so every candidate scores the same target rows.
/// Ties break to the smaller order.
pub fn select_order_aic(
    series: &SeriesMatrix,
    p_max: usize,
    config: &crate::estimation::FitConfig,
) -> Result<OrderSelection> {
    let t = series.length_t();
    let n = series.dim_n();
    if p_max == 0 {
        return Err(Error::InvalidInput("p_max must be at least 1".into()));
    }
    if t <= p_max * n + p_max + 1 {
        return Err(Error::SeriesTooShort {
            needed: p_max * n + p_max + 2,
            have: t,
        });
    }
    let t_eff = (t - p_max) as f64;
    let mut table = Vec::with_capacity(p_max);
    let mut best: Option<(usize, f64)> = None;
    for p in 1..=p_max {
        let sub = series.slice_rows(p_max - p, t)?;
        let fit = crate::estimation::fit(&sub, p, config)?;
        let sigma = match config.method {
            crate::estimation::FitMethod::OlsCml => {
                // maximum-likelihood normalization for the criterion
                let e = fit.residuals();
                (e.transpose() * e) / t_eff
            }
            crate::estimation::FitMethod::WeightedLikelihood => fit.model().sigma_eps().clone(),
        };
        let det = sigma.determinant().max(1e-300);
        let aic = det.ln() + 2.0 * ((p * n * n + n) as f64) / t_eff;
        table.push((p, aic));
        if best.map_or(true, |(_, b)| aic < b) {
            best = Some((p, aic));
        }
    }
    let (selected, _) = best.expect("at least one candidate");
    Ok(OrderSelection { selected, table })
}
