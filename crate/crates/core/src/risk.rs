//! Empirical risks, Hoeffding p-values and whole-grid risk surfaces.
//!
//! Both the per-pair estimators and the batched surface reduce a dataset to
//! a [`TierTally`] (how many records each tier answered, split by
//! correctness) and derive the means from the counts. Sharing that last step
//! is what makes the fast surface bit-identical to per-pair evaluation.

use serde::{Deserialize, Serialize};

use crate::cascade::{route, CascadeRecord, CostModel, ThresholdGrid, Thresholds, Tier};
use crate::error::{CascadeError, Result};

/// Routing outcome counts of a dataset under one threshold pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TierTally {
    pub edge_correct: usize,
    pub edge_wrong: usize,
    pub cloud_correct: usize,
    pub cloud_wrong: usize,
    pub human: usize,
}

impl TierTally {
    pub fn of(dataset: &[CascadeRecord], thresholds: Thresholds) -> Self {
        let mut tally = Self::default();
        for record in dataset {
            tally.add(record, route(record, thresholds));
        }
        tally
    }

    pub fn add(&mut self, record: &CascadeRecord, tier: Tier) {
        match tier {
            Tier::Edge if record.edge_correct => self.edge_correct += 1,
            Tier::Edge => self.edge_wrong += 1,
            Tier::Cloud if record.cloud_correct => self.cloud_correct += 1,
            Tier::Cloud => self.cloud_wrong += 1,
            Tier::Human => self.human += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.edge() + self.cloud() + self.human
    }

    pub fn edge(&self) -> usize {
        self.edge_correct + self.edge_wrong
    }

    pub fn cloud(&self) -> usize {
        self.cloud_correct + self.cloud_wrong
    }

    pub fn misaligned(&self) -> usize {
        self.edge_wrong + self.cloud_wrong
    }

    pub fn mean_misalignment(&self) -> f64 {
        self.misaligned() as f64 / self.total() as f64
    }

    pub fn mean_cost(&self, costs: &CostModel) -> f64 {
        let sum = self.edge() as f64 * costs.tier_cost(Tier::Edge)
            + self.cloud() as f64 * costs.tier_cost(Tier::Cloud)
            + self.human as f64 * costs.tier_cost(Tier::Human);
        sum / self.total() as f64
    }
}

fn non_empty(dataset: &[CascadeRecord]) -> Result<()> {
    if dataset.is_empty() {
        Err(CascadeError::EmptyDataset)
    } else {
        Ok(())
    }
}

/// Fraction of records whose cascade answer disagrees with the expert.
pub fn empirical_misalignment(dataset: &[CascadeRecord], thresholds: Thresholds) -> Result<f64> {
    non_empty(dataset)?;
    Ok(TierTally::of(dataset, thresholds).mean_misalignment())
}

/// Mean per-query cost.
pub fn empirical_cost(
    dataset: &[CascadeRecord],
    thresholds: Thresholds,
    costs: &CostModel,
) -> Result<f64> {
    non_empty(dataset)?;
    Ok(TierTally::of(dataset, thresholds).mean_cost(costs))
}

/// Hoeffding p-value `exp(-2 n (alpha - r_hat)_+^2)` for the null
/// hypothesis "true misalignment exceeds `alpha`".
pub fn hoeffding_p_value(r_hat: f64, alpha: f64, n: usize) -> f64 {
    let margin = (alpha - r_hat).max(0.0);
    ((-2.0 * n as f64) * (margin * margin)).exp()
}

/// Empirical misalignment, empirical cost and p-value for every grid pair.
///
/// Matrices are row-major: entry `(m, q)` is at `m * Q + q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSurface {
    pub grid: ThresholdGrid,
    pub alpha: f64,
    pub n: usize,
    pub misalignment: Vec<f64>,
    pub cost: Vec<f64>,
    pub p_value: Vec<f64>,
}

impl RiskSurface {
    fn from_tallies(grid: ThresholdGrid, costs: &CostModel, alpha: f64, n: usize, tallies: &[TierTally]) -> Self {
        let misalignment: Vec<f64> = tallies.iter().map(TierTally::mean_misalignment).collect();
        let cost = tallies.iter().map(|t| t.mean_cost(costs)).collect();
        let p_value = misalignment
            .iter()
            .map(|&r| hoeffding_p_value(r, alpha, n))
            .collect();
        Self {
            grid,
            alpha,
            n,
            misalignment,
            cost,
            p_value,
        }
    }

    fn index(&self, m: usize, q: usize) -> usize {
        debug_assert!(m < self.grid.m_count() && q < self.grid.q_count());
        m * self.grid.q_count() + q
    }

    pub fn misalignment_at(&self, m: usize, q: usize) -> f64 {
        self.misalignment[self.index(m, q)]
    }

    pub fn cost_at(&self, m: usize, q: usize) -> f64 {
        self.cost[self.index(m, q)]
    }

    pub fn p_value_at(&self, m: usize, q: usize) -> f64 {
        self.p_value[self.index(m, q)]
    }

    /// Same surface with p-values recomputed for a different `alpha`; the
    /// risk matrices do not depend on it.
    pub fn with_alpha(&self, alpha: f64) -> Self {
        let p_value = self
            .misalignment
            .iter()
            .map(|&r| hoeffding_p_value(r, alpha, self.n))
            .collect();
        Self {
            alpha,
            p_value,
            ..self.clone()
        }
    }
}

/// Confidences of the records whose candidate tier (ignoring the confidence
/// test) is `Edge`/`Cloud`, split by correctness and sorted ascending.
#[derive(Default)]
struct RowCandidates {
    edge_correct: Vec<f64>,
    edge_wrong: Vec<f64>,
    cloud_correct: Vec<f64>,
    cloud_wrong: Vec<f64>,
}

fn count_above(sorted: &[f64], lambda: f64) -> usize {
    sorted.len() - sorted.partition_point(|&c| c <= lambda)
}

fn row_tallies(dataset: &[CascadeRecord], grid: &ThresholdGrid, m: usize) -> Vec<TierTally> {
    let epsilon = grid.epsilon(m);
    let mut row = RowCandidates::default();
    for r in dataset {
        if r.u_edge < epsilon {
            if r.edge_correct {
                row.edge_correct.push(r.c_edge);
            } else {
                row.edge_wrong.push(r.c_edge);
            }
        } else if r.u_cloud < epsilon {
            if r.cloud_correct {
                row.cloud_correct.push(r.c_cloud);
            } else {
                row.cloud_wrong.push(r.c_cloud);
            }
        }
    }
    for v in [
        &mut row.edge_correct,
        &mut row.edge_wrong,
        &mut row.cloud_correct,
        &mut row.cloud_wrong,
    ] {
        v.sort_by(f64::total_cmp);
    }
    (0..grid.q_count())
        .map(|q| {
            let lambda = grid.lambda(q);
            let mut t = TierTally {
                edge_correct: count_above(&row.edge_correct, lambda),
                edge_wrong: count_above(&row.edge_wrong, lambda),
                cloud_correct: count_above(&row.cloud_correct, lambda),
                cloud_wrong: count_above(&row.cloud_wrong, lambda),
                human: 0,
            };
            t.human = dataset.len() - t.edge() - t.cloud();
            t
        })
        .collect()
}

/// Evaluates the whole grid with one sort per `epsilon` row, in
/// `O(M (N log N + Q log N))`.
pub fn risk_surface(
    dataset: &[CascadeRecord],
    grid: &ThresholdGrid,
    costs: &CostModel,
    alpha: f64,
) -> Result<RiskSurface> {
    non_empty(dataset)?;
    let tallies: Vec<TierTally> = (0..grid.m_count())
        .flat_map(|m| row_tallies(dataset, grid, m))
        .collect();
    Ok(RiskSurface::from_tallies(*grid, costs, alpha, dataset.len(), &tallies))
}

/// Per-pair evaluation in `O(M Q N)`. Output is identical to
/// [`risk_surface`].
pub fn risk_surface_naive(
    dataset: &[CascadeRecord],
    grid: &ThresholdGrid,
    costs: &CostModel,
    alpha: f64,
) -> Result<RiskSurface> {
    non_empty(dataset)?;
    let tallies: Vec<TierTally> = grid.pairs().map(|t| TierTally::of(dataset, t)).collect();
    Ok(RiskSurface::from_tallies(*grid, costs, alpha, dataset.len(), &tallies))
}
