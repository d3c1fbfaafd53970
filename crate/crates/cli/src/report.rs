//! JSON report shapes written by `fit` and `forecast`.

use arboot_core::{ArModelSpec, IntervalSet, OrderSelection, WeightedFit};
use nalgebra::DVector;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct ModelDto {
    pub n: usize,
    pub p: usize,
    pub intercept: Vec<f64>,
    /// One row-major N x N block per lag.
    pub coefficients: Vec<Vec<f64>>,
    /// Row-major N x N innovation covariance.
    pub sigma: Vec<f64>,
    pub companion_spectral_radius: f64,
    pub stationary: bool,
}

impl ModelDto {
    pub fn from_model(model: &ArModelSpec) -> Self {
        let row_major = |m: &nalgebra::DMatrix<f64>| {
            let mut v = Vec::with_capacity(m.len());
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    v.push(m[(r, c)]);
                }
            }
            v
        };
        let rho = model.companion_spectral_radius();
        Self {
            n: model.dim_n(),
            p: model.order_p(),
            intercept: model.phi0().iter().cloned().collect(),
            coefficients: model.phis().iter().map(|m| row_major(m)).collect(),
            sigma: row_major(model.sigma_eps()),
            companion_spectral_radius: rho,
            stationary: rho < 1.0,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct AicRow {
    pub p: usize,
    pub aic: f64,
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub method: String,
    pub order: usize,
    pub labels: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    pub regularized: bool,
    pub model: ModelDto,
    /// Residual row i belongs to observation `residual_offset + i` (0-based).
    pub residual_offset: usize,
    pub residuals: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub pearson: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aic_table: Option<Vec<AicRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected_order: Option<usize>,
}

impl FitReport {
    pub fn new(fit: &WeightedFit, labels: &[String], selection: Option<&OrderSelection>) -> Self {
        let e = fit.residuals();
        Self {
            method: fit.method().tag().to_string(),
            order: fit.model().order_p(),
            labels: labels.to_vec(),
            converged: fit.converged(),
            iterations: fit.iterations(),
            regularized: fit.regularized(),
            model: ModelDto::from_model(fit.model()),
            residual_offset: fit.model().order_p(),
            residuals: (0..e.nrows())
                .map(|t| e.row(t).iter().cloned().collect())
                .collect(),
            weights: fit.weights().iter().cloned().collect(),
            pearson: fit.pearson().iter().cloned().collect(),
            aic_table: selection.map(|s| {
                s.table
                    .iter()
                    .map(|&(p, aic)| AicRow { p, aic })
                    .collect()
            }),
            selected_order: selection.map(|s| s.selected),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct IntervalsDto {
    pub kind: String,
    /// lower[h][component], h running 1..=H in order.
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

impl IntervalsDto {
    pub fn from_intervals(iv: &IntervalSet) -> Self {
        let take = |m: &nalgebra::DMatrix<f64>| {
            (0..m.nrows())
                .map(|h| m.row(h).iter().cloned().collect())
                .collect()
        };
        Self {
            kind: match iv.kind {
                arboot_core::IntervalKind::Marginal => "marginal".into(),
                arboot_core::IntervalKind::Bonferroni => "bonferroni".into(),
            },
            lower: take(&iv.lower),
            upper: take(&iv.upper),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ForecastReport {
    pub method: String,
    pub order: usize,
    pub labels: Vec<String>,
    pub horizon: usize,
    pub gamma: f64,
    pub b_reps: usize,
    pub effective_b: usize,
    pub excluded_replicates: usize,
    pub redrawn_replicates: usize,
    pub seed: u64,
    /// point[h][component].
    pub point: Vec<Vec<f64>>,
    pub bootstrap: IntervalsDto,
    pub normal: IntervalsDto,
}

/// Flat CSV companion to [`ForecastReport`]:
/// h,component,point,lower,upper,normal_lower,normal_upper.
pub fn forecast_csv(
    labels: &[String],
    point: &[DVector<f64>],
    boot: &IntervalSet,
    normal: &IntervalSet,
) -> String {
    let mut out = String::from("h,component,point,lower,upper,normal_lower,normal_upper\n");
    for h in 0..boot.horizon() {
        for (c, label) in labels.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                h + 1,
                label,
                point[h][c],
                boot.lower[(h, c)],
                boot.upper[(h, c)],
                normal.lower[(h, c)],
                normal.upper[(h, c)],
            ));
        }
    }
    out
}
