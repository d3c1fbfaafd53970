//! Monte Carlo harness: scenario generation, the four performance
//! metrics, and aggregation over replications.
//!
//! Each replication simulates a training path (optionally contaminated),
//! simulates R true futures from the underlying process, runs every
//! configured estimator's bootstrap, and scores coverage, interval length
//! or cube volume, squared cube error against the empirical cube, and the
//! normal-quantile baseline. Replications run on independent,
//! replicate-indexed RNG substreams and are aggregated in fixed order, so
//! the report does not depend on thread scheduling.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::bootstrap::{
    bootstrap_future_draws, bootstrap_paths, interval_from_draws, normal_quantile_interval,
    IntervalKind, IntervalSet,
};
use crate::contamination::{
    contaminate_ao, contaminate_io, draw_positions, shift_innovations, ContaminationAmount,
    OutlierKind, OutlierPlan, OutlierTarget,
};
use crate::error::{Error, Result};
use crate::estimation::{self, prepare_bootstrap_residuals, FitConfig, FitMethod};
use crate::model::{draw_innovations, forecast, simulate_from_innovations, ArModelSpec};
use crate::quantile::quantiles_of;
use crate::rng::{ErrorDistribution, InnovationSource};
use crate::series::SeriesMatrix;

const LANE_REP: u64 = 0xE000;
const LANE_TRAIN: u64 = 0xE001;
const LANE_TRAIN_POS: u64 = 0xE002;
const LANE_FUTURE: u64 = 0xE003;
const LANE_FUTURE_POS: u64 = 0xE004;
const LANE_BOOT: u64 = 0xE005;

/// Outlier template applied afresh in every replication.
#[derive(Debug, Clone)]
pub struct ContaminationSpec {
    pub kind: OutlierKind,
    pub target: OutlierTarget,
    pub amount: ContaminationAmount,
    pub delta: DVector<f64>,
    pub component_mask: Vec<bool>,
}

/// Full definition of one Monte Carlo experiment.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    /// True data-generating process.
    pub model: ArModelSpec,
    pub sample_t: usize,
    pub mc_reps: usize,
    pub b_reps: usize,
    pub r_futures: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub contamination: Option<ContaminationSpec>,
    pub error_dist: ErrorDistribution,
    pub estimators: Vec<FitMethod>,
    /// Solver settings shared by all estimators; `method` is overridden.
    pub fit: FitConfig,
    pub seed: u64,
    pub burn_in: usize,
    /// Lag order used for fitting; defaults to the true order.
    pub fit_order: Option<usize>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_t == 0
            || self.mc_reps == 0
            || self.b_reps == 0
            || self.r_futures == 0
            || self.horizon == 0
        {
            return Err(Error::InvalidInput("all scenario counts must be >= 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 0.5) {
            return Err(Error::InvalidInput(format!(
                "significance level must lie in (0, 0.5), got {}",
                self.gamma
            )));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidInput("no estimators configured".into()));
        }
        self.error_dist.validate()?;
        self.fit.validate()?;
        let n = self.model.dim_n();
        if let Some(c) = &self.contamination {
            if c.delta.len() != n || c.component_mask.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "contamination is {}-dimensional, model is {n}-dimensional",
                    c.delta.len()
                )));
            }
            if !c.component_mask.iter().any(|&m| m) {
                return Err(Error::InvalidInput("component mask selects nothing".into()));
            }
        }
        let p = self.fit_order.unwrap_or(self.model.order_p());
        if self.sample_t < p || self.sample_t - p < n * p + 2 {
            return Err(Error::SeriesTooShort {
                needed: p + n * p + 2,
                have: self.sample_t,
            });
        }
        Ok(())
    }
}

/// One aggregated metric row.
#[derive(Debug, Clone, Serialize)]
pub struct MetricCell {
    pub estimator: String,
    pub h: usize,
    pub coverage: f64,
    /// Mean interval length for N = 1, mean cube volume for N >= 2.
    pub length_or_volume: f64,
    /// Mean squared cube error against the empirical cube (N >= 2 only).
    pub sq_error: Option<f64>,
    pub normal_coverage: f64,
}

/// Aggregated results of [`run_scenario`].
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub dim_n: usize,
    pub mc_reps: usize,
    pub b_reps: usize,
    pub r_futures: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub cells: Vec<MetricCell>,
    /// Bootstrap replicates excluded as non-finite, per estimator.
    pub excluded_replicates: BTreeMap<String, usize>,
    pub redrawn_replicates: BTreeMap<String, usize>,
    /// Set when any estimator lost more than 2% of its replicates.
    pub unreliable: bool,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    /// Flat CSV: estimator, h, coverage, length_or_volume, sq_error,
    /// normal_coverage. `sq_error` is empty for univariate runs.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("estimator,h,coverage,length_or_volume,sq_error,normal_coverage\n");
        for c in &self.cells {
            let sq = c.sq_error.map_or(String::new(), |v| format!("{v}"));
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.estimator, c.h, c.coverage, c.length_or_volume, sq, c.normal_coverage
            ));
        }
        out
    }

    pub fn cell(&self, estimator: FitMethod, h: usize) -> Option<&MetricCell> {
        self.cells
            .iter()
            .find(|c| c.estimator == estimator.tag() && c.h == h)
    }
}

/// Fraction of the R futures at horizon `h` (1-based) inside the interval
/// (all components simultaneously; boundaries count as covered).
pub fn coverage(futures_at_h: &DMatrix<f64>, intervals: &IntervalSet, h: usize) -> f64 {
    let r = futures_at_h.nrows();
    let inside = (0..r)
        .filter(|&i| intervals.contains(h, &futures_at_h.row(i).transpose()))
        .count();
    inside as f64 / r as f64
}

/// Componentwise interval widths at horizon `h` (1-based).
pub fn interval_length(intervals: &IntervalSet, h: usize) -> DVector<f64> {
    intervals.widths(h)
}

/// Product of the componentwise widths at horizon `h` (1-based).
pub fn cube_volume(intervals: &IntervalSet, h: usize) -> f64 {
    intervals.widths(h).iter().product()
}

/// Sum over components and endpoints of squared endpoint differences.
pub fn cube_squared_error(
    boot: &IntervalSet,
    empirical: &IntervalSet,
    h: usize,
) -> Result<f64> {
    if boot.dim_n() != empirical.dim_n() || boot.horizon() != empirical.horizon() {
        return Err(Error::DimensionMismatch(format!(
            "cube shapes differ: {}x{} vs {}x{}",
            boot.horizon(),
            boot.dim_n(),
            empirical.horizon(),
            empirical.dim_n()
        )));
    }
    if (boot.gamma - empirical.gamma).abs() > 1e-12 {
        return Err(Error::InvalidInput(
            "cubes were built at different significance levels".into(),
        ));
    }
    let mut sum = 0.0;
    for c in 0..boot.dim_n() {
        sum += (boot.lower[(h - 1, c)] - empirical.lower[(h - 1, c)]).powi(2);
        sum += (boot.upper[(h - 1, c)] - empirical.upper[(h - 1, c)]).powi(2);
    }
    Ok(sum)
}

struct EstimatorRep {
    coverage: Vec<f64>,
    len_or_vol: Vec<f64>,
    sq_err: Vec<Option<f64>>,
    normal_cov: Vec<f64>,
    excluded: usize,
    redrawn: usize,
}

struct RepResult {
    estimators: Vec<EstimatorRep>,
}

fn training_io_plan(spec: &ContaminationSpec, positions: &[usize], burn_in: usize) -> Result<OutlierPlan> {
    let offset: Vec<usize> = positions.iter().map(|s| s + burn_in).collect();
    OutlierPlan::new(
        OutlierKind::Io,
        spec.delta.clone(),
        offset,
        spec.component_mask.clone(),
        OutlierTarget::Training,
    )
}

fn run_replication(config: &ScenarioConfig, j: usize) -> Result<RepResult> {
    let model = &config.model;
    let n = model.dim_n();
    let t = config.sample_t;
    let h_max = config.horizon;
    let p_fit = config.fit_order.unwrap_or(model.order_p());
    let factor = model.innovation_factor();
    let rep = InnovationSource::new(config.error_dist, config.seed).substream(LANE_REP, j as u64);

    // Training span. The clean path is the underlying process; additive
    // outliers perturb observations only, innovative outliers re-enter the
    // recursion and become part of the process.
    let train_src = rep.substream(LANE_TRAIN, 0);
    let eps = draw_innovations(&train_src, config.burn_in + t, &factor);
    let zero = vec![DVector::zeros(n); model.order_p()];
    let full_clean = simulate_from_innovations(model, &zero, &eps)?;
    let labels: Vec<String> = (1..=n).map(|i| format!("c{i}")).collect();
    let clean = SeriesMatrix::from_rows(&full_clean[config.burn_in..], labels)?;

    let mut observed = clean.clone();
    let mut future_plan: Option<OutlierPlan> = None;

    if let Some(spec) = &config.contamination {
        match spec.target {
            OutlierTarget::Training => {
                let pos_src = rep.substream(LANE_TRAIN_POS, 0);
                let positions = draw_positions(spec.amount, t, &pos_src)?;
                match spec.kind {
                    OutlierKind::Ao => {
                        let plan = OutlierPlan::new(
                            OutlierKind::Ao,
                            spec.delta.clone(),
                            positions,
                            spec.component_mask.clone(),
                            OutlierTarget::Training,
                        )?;
                        observed = contaminate_ao(&clean, &plan)?;
                    }
                    OutlierKind::Io => {
                        let plan = training_io_plan(spec, &positions, config.burn_in)?;
                        let full = contaminate_io(model, &eps, &plan)?;
                        observed = full.slice_rows(config.burn_in, config.burn_in + t)?;
                    }
                }
            }
            OutlierTarget::Future => {
                let pos_src = rep.substream(LANE_FUTURE_POS, 0);
                let positions = draw_positions(spec.amount, h_max, &pos_src)?;
                future_plan = Some(OutlierPlan::new(
                    spec.kind,
                    spec.delta.clone(),
                    positions,
                    spec.component_mask.clone(),
                    OutlierTarget::Future,
                )?);
            }
        }
    }

    // True futures condition on the observed terminal states, the same
    // states the forecasts see.
    let process_tail = observed.tail_rows(model.order_p());

    // R true futures of the process, one recursion per draw.
    let fut_src = rep.substream(LANE_FUTURE, 0);
    let mut fut_rng = fut_src.rng();
    let r_futures = config.r_futures;
    let mut futures_by_h: Vec<DMatrix<f64>> = vec![DMatrix::zeros(r_futures, n); h_max];
    for r in 0..r_futures {
        let mut eps_h: Vec<DVector<f64>> = (0..h_max)
            .map(|_| {
                let z = DVector::from_fn(n, |_, _| config.error_dist.sample(&mut fut_rng));
                &factor * z
            })
            .collect();
        if let Some(plan) = &future_plan {
            if plan.kind == OutlierKind::Io {
                eps_h = shift_innovations(&eps_h, plan)?;
            }
        }
        let mut path = simulate_from_innovations(model, &process_tail, &eps_h)?;
        if let Some(plan) = &future_plan {
            if plan.kind == OutlierKind::Ao {
                for &s in &plan.positions {
                    for (c, &on) in plan.component_mask.iter().enumerate() {
                        if on {
                            path[s][c] += plan.delta[c];
                        }
                    }
                }
            }
        }
        for h in 0..h_max {
            futures_by_h[h].row_mut(r).copy_from(&path[h].transpose());
        }
    }

    // Empirical interval/cube from the true futures, same quantile levels
    // and rank rule as the bootstrap cube.
    let empirical = {
        let tau = if n == 1 {
            config.gamma / 2.0
        } else {
            config.gamma / (2.0 * n as f64)
        };
        let mut lower = DMatrix::zeros(h_max, n);
        let mut upper = DMatrix::zeros(h_max, n);
        for h in 0..h_max {
            for c in 0..n {
                let col: Vec<f64> = futures_by_h[h].column(c).iter().cloned().collect();
                let q = quantiles_of(&col, &[tau, 1.0 - tau]);
                lower[(h, c)] = q[0];
                upper[(h, c)] = q[1];
            }
        }
        IntervalSet {
            lower,
            upper,
            gamma: config.gamma,
            kind: if n == 1 {
                IntervalKind::Marginal
            } else {
                IntervalKind::Bonferroni
            },
        }
    };

    let mut estimators = Vec::with_capacity(config.estimators.len());
    for (ie, &method) in config.estimators.iter().enumerate() {
        let fit_cfg = config.fit.with_method(method);
        let fit = estimation::fit(&observed, p_fit, &fit_cfg)?;
        let pool = prepare_bootstrap_residuals(&fit, fit_cfg.rescale_mode)?;
        let boot_src = rep.substream(LANE_BOOT, ie as u64);
        let params = bootstrap_paths(&observed, &fit, &pool, config.b_reps, &boot_src, &fit_cfg)?;
        let fc = bootstrap_future_draws(
            &observed,
            &fit,
            &params,
            &pool,
            h_max,
            config.gamma,
            &boot_src,
        )?;
        let boot_iv = interval_from_draws(&fc)?;
        let point = forecast(fit.model(), &observed, h_max)?;
        let normal_iv = normal_quantile_interval(&point, fit.model(), config.gamma)?;

        let mut est = EstimatorRep {
            coverage: Vec::with_capacity(h_max),
            len_or_vol: Vec::with_capacity(h_max),
            sq_err: Vec::with_capacity(h_max),
            normal_cov: Vec::with_capacity(h_max),
            excluded: fc.excluded,
            redrawn: fc.redrawn,
        };
        for h in 1..=h_max {
            est.coverage.push(coverage(&futures_by_h[h - 1], &boot_iv, h));
            est.normal_cov
                .push(coverage(&futures_by_h[h - 1], &normal_iv, h));
            if n == 1 {
                est.len_or_vol.push(interval_length(&boot_iv, h)[0]);
                est.sq_err.push(None);
            } else {
                est.len_or_vol.push(cube_volume(&boot_iv, h));
                est.sq_err
                    .push(Some(cube_squared_error(&boot_iv, &empirical, h)?));
            }
        }
        estimators.push(est);
    }
    Ok(RepResult { estimators })
}

/// Run a full scenario and aggregate mean metrics over the replications.
pub fn run_scenario(config: &ScenarioConfig) -> Result<MetricsReport> {
    config.validate()?;
    let n = config.model.dim_n();
    let h_max = config.horizon;

    let rep_results: Vec<Result<RepResult>> = (0..config.mc_reps)
        .into_par_iter()
        .map(|j| {
            run_replication(config, j)
                .map_err(|e| Error::Estimation(format!("replication {j}: {e}")))
        })
        .collect();

    let n_est = config.estimators.len();
    let mut cov_sum = vec![vec![0.0; h_max]; n_est];
    let mut len_sum = vec![vec![0.0; h_max]; n_est];
    let mut sq_sum = vec![vec![0.0; h_max]; n_est];
    let mut norm_sum = vec![vec![0.0; h_max]; n_est];
    let mut excluded = vec![0usize; n_est];
    let mut redrawn = vec![0usize; n_est];

    // fixed-order reduction keeps the aggregate independent of scheduling
    for rep in rep_results {
        let rep = rep?;
        for (ie, est) in rep.estimators.iter().enumerate() {
            excluded[ie] += est.excluded;
            redrawn[ie] += est.redrawn;
            for h in 0..h_max {
                cov_sum[ie][h] += est.coverage[h];
                len_sum[ie][h] += est.len_or_vol[h];
                norm_sum[ie][h] += est.normal_cov[h];
                if let Some(sq) = est.sq_err[h] {
                    sq_sum[ie][h] += sq;
                }
            }
        }
    }

    let mc = config.mc_reps as f64;
    let mut cells = Vec::with_capacity(n_est * h_max);
    let mut excluded_map = BTreeMap::new();
    let mut redrawn_map = BTreeMap::new();
    let mut unreliable = false;
    for (ie, &method) in config.estimators.iter().enumerate() {
        for h in 0..h_max {
            cells.push(MetricCell {
                estimator: method.tag().to_string(),
                h: h + 1,
                coverage: cov_sum[ie][h] / mc,
                length_or_volume: len_sum[ie][h] / mc,
                sq_error: (n > 1).then(|| sq_sum[ie][h] / mc),
                normal_coverage: norm_sum[ie][h] / mc,
            });
        }
        excluded_map.insert(method.tag().to_string(), excluded[ie]);
        redrawn_map.insert(method.tag().to_string(), redrawn[ie]);
        let total = config.mc_reps * config.b_reps;
        if excluded[ie] as f64 > 0.02 * total as f64 {
            unreliable = true;
        }
    }

    Ok(MetricsReport {
        dim_n: n,
        mc_reps: config.mc_reps,
        b_reps: config.b_reps,
        r_futures: config.r_futures,
        horizon: h_max,
        gamma: config.gamma,
        cells,
        excluded_replicates: excluded_map,
        redrawn_replicates: redrawn_map,
        unreliable,
    })
}
