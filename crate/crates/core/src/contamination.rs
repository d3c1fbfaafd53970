//! Additive and innovative outlier injection.
//!
//! An additive outlier shifts the observed value at a single time point and
//! leaves the dynamics untouched. An innovative outlier shifts the
//! innovation, so the recursion propagates the shock into later values.

use nalgebra::DVector;
use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::model::{simulate_from_innovations, ArModelSpec};
use crate::rng::InnovationSource;
use crate::series::SeriesMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutlierKind {
    Ao,
    Io,
}

/// Which span of a Monte Carlo replication the outliers land in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutlierTarget {
    Training,
    Future,
}

/// Where, what size, and which components to perturb.
#[derive(Debug, Clone)]
pub struct OutlierPlan {
    pub kind: OutlierKind,
    /// Outlier magnitude per component.
    pub delta: DVector<f64>,
    /// 0-based time indices within the targeted span.
    pub positions: Vec<usize>,
    /// Components the shift applies to; must select at least one.
    pub component_mask: Vec<bool>,
    pub target: OutlierTarget,
}

impl OutlierPlan {
    pub fn new(
        kind: OutlierKind,
        delta: DVector<f64>,
        positions: Vec<usize>,
        component_mask: Vec<bool>,
        target: OutlierTarget,
    ) -> Result<Self> {
        if delta.len() != component_mask.len() {
            return Err(Error::DimensionMismatch(format!(
                "delta has {} entries, mask has {}",
                delta.len(),
                component_mask.len()
            )));
        }
        if !component_mask.iter().any(|&m| m) {
            return Err(Error::InvalidInput("component mask selects nothing".into()));
        }
        Ok(Self {
            kind,
            delta,
            positions,
            component_mask,
            target,
        })
    }

    fn check_span(&self, span_len: usize) -> Result<()> {
        if let Some(&bad) = self.positions.iter().find(|&&s| s >= span_len) {
            return Err(Error::InvalidInput(format!(
                "outlier position {bad} outside span of length {span_len}"
            )));
        }
        Ok(())
    }
}

/// Additive outliers: X_s = Y_s + delta on masked components.
pub fn contaminate_ao(series: &SeriesMatrix, plan: &OutlierPlan) -> Result<SeriesMatrix> {
    if plan.kind != OutlierKind::Ao {
        return Err(Error::InvalidInput("plan is not an AO plan".into()));
    }
    if plan.component_mask.len() != series.dim_n() {
        return Err(Error::DimensionMismatch(format!(
            "mask has {} components, series has {}",
            plan.component_mask.len(),
            series.dim_n()
        )));
    }
    plan.check_span(series.length_t())?;
    let mut values = series.values().clone();
    for &s in &plan.positions {
        for (c, &on) in plan.component_mask.iter().enumerate() {
            if on {
                values[(s, c)] += plan.delta[c];
            }
        }
    }
    SeriesMatrix::new(values, series.labels().to_vec())
}

/// Shift masked innovation components at the planned positions.
pub fn shift_innovations(
    innovations: &[DVector<f64>],
    plan: &OutlierPlan,
) -> Result<Vec<DVector<f64>>> {
    plan.check_span(innovations.len())?;
    let mut shocked = innovations.to_vec();
    for &s in &plan.positions {
        if shocked[s].len() != plan.component_mask.len() {
            return Err(Error::DimensionMismatch(format!(
                "innovation has {} components, mask has {}",
                shocked[s].len(),
                plan.component_mask.len()
            )));
        }
        for (c, &on) in plan.component_mask.iter().enumerate() {
            if on {
                shocked[s][c] += plan.delta[c];
            }
        }
    }
    Ok(shocked)
}

/// Innovative outliers: shift the innovations, then regenerate the whole
/// path from zero initial states so the shock propagates forward.
///
/// Positions index into `innovations`; callers that simulated with a
/// burn-in pass the full innovation span with offset positions and slice
/// the tail themselves.
pub fn contaminate_io(
    model: &ArModelSpec,
    innovations: &[DVector<f64>],
    plan: &OutlierPlan,
) -> Result<SeriesMatrix> {
    if plan.kind != OutlierKind::Io {
        return Err(Error::InvalidInput("plan is not an IO plan".into()));
    }
    let shocked = shift_innovations(innovations, plan)?;
    let zero = vec![DVector::zeros(model.dim_n()); model.order_p()];
    let path = simulate_from_innovations(model, &zero, &shocked)?;
    let labels = (1..=model.dim_n()).map(|i| format!("c{i}")).collect();
    SeriesMatrix::from_rows(&path, labels)
}

/// How many outliers to place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContaminationAmount {
    /// Fraction of the span; the count is round(T * C), half up.
    Rate(f64),
    /// Exact count.
    Count(usize),
}

impl ContaminationAmount {
    pub fn count_for(&self, span_len: usize) -> Result<usize> {
        let count = match self {
            ContaminationAmount::Rate(c) => {
                if !(0.0..=1.0).contains(c) {
                    return Err(Error::InvalidInput(format!(
                        "contamination rate {c} outside [0, 1]"
                    )));
                }
                (span_len as f64 * c).round() as usize
            }
            ContaminationAmount::Count(k) => *k,
        };
        if count > span_len {
            return Err(Error::InvalidInput(format!(
                "cannot place {count} outliers in a span of {span_len}"
            )));
        }
        Ok(count)
    }
}

/// Uniform positions without replacement within `0..span_len`, sorted.
pub fn draw_positions(
    amount: ContaminationAmount,
    span_len: usize,
    rng: &InnovationSource,
) -> Result<Vec<usize>> {
    let count = amount.count_for(span_len)?;
    let mut r = rng.rng();
    let mut positions = sample(&mut r, span_len, count).into_vec();
    positions.sort_unstable();
    Ok(positions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{draw_innovations, ma_coefficients, simulate_from_innovations};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn ao_plan(delta: f64, positions: Vec<usize>) -> OutlierPlan {
        OutlierPlan::new(
            OutlierKind::Ao,
            DVector::from_element(1, delta),
            positions,
            vec![true],
            OutlierTarget::Training,
        )
        .unwrap()
    }

    #[test]
    fn ao_shifts_only_planned_points() {
        let series = SeriesMatrix::univariate(vec![0.0; 10]).unwrap();
        let out = contaminate_ao(&series, &ao_plan(5.0, vec![3])).unwrap();
        for t in 0..10 {
            let expect = if t == 3 { 5.0 } else { 0.0 };
            assert_eq!(out.values()[(t, 0)], expect);
        }
    }

    #[test]
    fn zero_delta_is_identity() {
        let series = SeriesMatrix::univariate(vec![1.0, -2.0, 3.0]).unwrap();
        let out = contaminate_ao(&series, &ao_plan(0.0, vec![0, 2])).unwrap();
        assert_eq!(out.values(), series.values());
    }

    #[test]
    fn var_ao_hits_both_masked_components() {
        let values = DMatrix::zeros(6, 2);
        let series = SeriesMatrix::new(values, vec!["a".into(), "b".into()]).unwrap();
        let plan = OutlierPlan::new(
            OutlierKind::Ao,
            DVector::from_vec(vec![5.0, 5.0]),
            vec![2],
            vec![true, true],
            OutlierTarget::Training,
        )
        .unwrap();
        let out = contaminate_ao(&series, &plan).unwrap();
        assert_eq!(out.values()[(2, 0)], 5.0);
        assert_eq!(out.values()[(2, 1)], 5.0);
        assert_eq!(out.values()[(1, 0)], 0.0);
        assert_eq!(out.values()[(3, 1)], 0.0);
    }

    #[test]
    fn ao_changes_exactly_masked_cells() {
        let model = crate::model::tests::var2_paper_model();
        let series = crate::model::simulate(&model, 40, &InnovationSource::gaussian(5), 50).unwrap();
        let plan = OutlierPlan::new(
            OutlierKind::Ao,
            DVector::from_vec(vec![3.0, 3.0]),
            vec![1, 7, 20],
            vec![true, false],
            OutlierTarget::Training,
        )
        .unwrap();
        let out = contaminate_ao(&series, &plan).unwrap();
        let changed = out
            .values()
            .iter()
            .zip(series.values().iter())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 3);
    }

    #[test]
    fn ao_position_out_of_range() {
        let series = SeriesMatrix::univariate(vec![0.0; 5]).unwrap();
        assert!(contaminate_ao(&series, &ao_plan(1.0, vec![5])).is_err());
    }

    #[test]
    fn io_without_dynamics_shifts_single_point() {
        let model = ArModelSpec::univariate(0.0, vec![0.0], 1.0).unwrap();
        let eps: Vec<DVector<f64>> = (0..8).map(|_| DVector::zeros(1)).collect();
        let plan = OutlierPlan::new(
            OutlierKind::Io,
            DVector::from_element(1, 3.0),
            vec![4],
            vec![true],
            OutlierTarget::Training,
        )
        .unwrap();
        let out = contaminate_io(&model, &eps, &plan).unwrap();
        for t in 0..8 {
            let expect = if t == 4 { 3.0 } else { 0.0 };
            assert_eq!(out.values()[(t, 0)], expect);
        }
    }

    #[test]
    fn io_propagates_geometrically() {
        let model = ArModelSpec::univariate(0.0, vec![0.5], 1.0).unwrap();
        let src = InnovationSource::gaussian(64);
        let eps = draw_innovations(&src, 30, &model.innovation_factor());
        let s = 12;
        let plan = OutlierPlan::new(
            OutlierKind::Io,
            DVector::from_element(1, 3.0),
            vec![s],
            vec![true],
            OutlierTarget::Training,
        )
        .unwrap();
        let zero = vec![DVector::zeros(1)];
        let clean = simulate_from_innovations(&model, &zero, &eps).unwrap();
        let shocked = contaminate_io(&model, &eps, &plan).unwrap();
        assert_relative_eq!(shocked.values()[(s, 0)] - clean[s][0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(
            shocked.values()[(s + 1, 0)] - clean[s + 1][0],
            1.5,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            shocked.values()[(s + 2, 0)] - clean[s + 2][0],
            0.75,
            epsilon = 1e-12
        );
    }

    #[test]
    fn var_io_masks_first_component_only() {
        let eps: Vec<DVector<f64>> = (0..6).map(|_| DVector::zeros(2)).collect();
        let plan = OutlierPlan::new(
            OutlierKind::Io,
            DVector::from_vec(vec![5.0, 5.0]),
            vec![2],
            vec![true, false],
            OutlierTarget::Training,
        )
        .unwrap();
        let shocked = shift_innovations(&eps, &plan).unwrap();
        assert_eq!(shocked[2][0], 5.0);
        assert_eq!(shocked[2][1], 0.0);
        assert_eq!(shocked[1][0], 0.0);
    }

    #[test]
    fn io_difference_matches_impulse_response() {
        // contaminated minus clean equals Psi_{t-s} * delta
        let model = crate::model::tests::var2_paper_model();
        let src = InnovationSource::gaussian(65);
        let eps = draw_innovations(&src, 40, &model.innovation_factor());
        let s = 10;
        let delta = DVector::from_vec(vec![5.0, 0.0]);
        let plan = OutlierPlan::new(
            OutlierKind::Io,
            delta.clone(),
            vec![s],
            vec![true, false],
            OutlierTarget::Training,
        )
        .unwrap();
        let zero = vec![DVector::zeros(2); 2];
        let clean = simulate_from_innovations(&model, &zero, &eps).unwrap();
        let shocked = contaminate_io(&model, &eps, &plan).unwrap();
        let psis = ma_coefficients(&model, 6).unwrap();
        for lag in 0..6 {
            let diff = shocked.row(s + lag) - &clean[s + lag];
            let expect = &psis[lag] * &delta;
            assert_relative_eq!((diff - expect).amax(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn position_counts_match_rates() {
        let rng = InnovationSource::gaussian(8);
        let p = draw_positions(ContaminationAmount::Rate(0.05), 100, &rng).unwrap();
        assert_eq!(p.len(), 5);
        let p = draw_positions(ContaminationAmount::Count(1), 10, &rng).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p[0] < 10);
        let p = draw_positions(ContaminationAmount::Rate(0.0), 100, &rng).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn position_sampling_is_without_replacement() {
        let rng = InnovationSource::gaussian(9);
        let p = draw_positions(ContaminationAmount::Rate(0.5), 40, &rng).unwrap();
        assert_eq!(p.len(), 20);
        let mut q = p.clone();
        q.dedup();
        assert_eq!(p, q);
    }

    #[test]
    fn too_many_positions_rejected() {
        let rng = InnovationSource::gaussian(10);
        assert!(draw_positions(ContaminationAmount::Count(11), 10, &rng).is_err());
    }

    #[test]
    fn rate_rounds_half_up() {
        // 25 * 0.1 = 2.5 rounds to 3
        let rng = InnovationSource::gaussian(11);
        let p = draw_positions(ContaminationAmount::Rate(0.1), 25, &rng).unwrap();
        assert_eq!(p.len(), 3);
    }
}
