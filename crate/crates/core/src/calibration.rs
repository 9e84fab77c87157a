//! Threshold selection.
//!
//! Every grid pair `(eps_m, lambda_q)` carries the null hypothesis "its
//! misalignment rate exceeds `alpha`". The procedures differ in which nulls
//! they reject:
//!
//! - **MHT-ERM** runs one fixed-sequence test per `eps_m`, walking `lambda`
//!   from 1 downwards at level `delta / M` and stopping at the first
//!   non-rejection. Misalignment can only grow as `lambda` drops, so the
//!   chain order costs nothing and Bonferroni is paid across `M` chains
//!   only.
//! - **MHT-ERM-B** tests all `M * Q` pairs at level `delta / (M Q)`.
//! - **C-ERM** keeps every pair with empirical misalignment `<= alpha` and
//!   offers no guarantee.
//!
//! An empty certified set falls back to the all-human pair `(0, 1)`. The
//! cheapest certified pair is then selected with [`select_min_cost`]'s
//! tie-break.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cascade::{route, CascadeRecord, CostModel, ThresholdGrid, Thresholds, Tier};
use crate::error::{CascadeError, Result};
use crate::risk::{empirical_cost, empirical_misalignment, risk_surface, RiskSurface, TierTally};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MhtErm,
    MhtErmB,
    CErm,
    EdgeOnly,
    CloudOnly,
    HumanOnly,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::MhtErm,
        Method::MhtErmB,
        Method::CErm,
        Method::EdgeOnly,
        Method::CloudOnly,
        Method::HumanOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::MhtErm => "mht-erm",
            Method::MhtErmB => "mht-erm-b",
            Method::CErm => "c-erm",
            Method::EdgeOnly => "edge-only",
            Method::CloudOnly => "cloud-only",
            Method::HumanOnly => "human-only",
        }
    }

    /// Tier of a single-tier baseline, `None` for calibrated methods.
    pub fn fixed_tier(self) -> Option<Tier> {
        match self {
            Method::EdgeOnly => Some(Tier::Edge),
            Method::CloudOnly => Some(Tier::Cloud),
            Method::HumanOnly => Some(Tier::Human),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = CascadeError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| CascadeError::param("method", format!("unknown method '{s}'")))
    }
}

/// A deployable routing rule: a threshold pair, or a baseline that sends
/// every query to one tier regardless of its scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Thresholds(Thresholds),
    Fixed(Tier),
}

impl Policy {
    pub fn route(&self, record: &CascadeRecord) -> Tier {
        match *self {
            Policy::Thresholds(t) => route(record, t),
            Policy::Fixed(tier) => tier,
        }
    }

    pub fn tally(&self, dataset: &[CascadeRecord]) -> TierTally {
        let mut tally = TierTally::default();
        for r in dataset {
            tally.add(r, self.route(r));
        }
        tally
    }

    pub fn thresholds(&self) -> Option<Thresholds> {
        match *self {
            Policy::Thresholds(t) => Some(t),
            Policy::Fixed(_) => None,
        }
    }
}

/// Result of one calibration run.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOutcome {
    pub method: Method,
    pub selected: Policy,
    /// Grid coordinates `(m, q)` (zero-based) of the selected pair.
    pub selected_index: Option<(usize, usize)>,
    /// Certified pairs after the fallback, chain by chain (`m` ascending,
    /// `lambda` descending within a chain).
    pub certified: Vec<(usize, usize)>,
    pub certified_set: Vec<Thresholds>,
    pub fallback_used: bool,
    /// MHT-ERM only: one-based index `q_m` of the first non-rejected pair in
    /// each chain, so the chain certified exactly `q > q_m`; 0 means the
    /// whole chain was certified.
    pub stop_indices: Vec<usize>,
    pub surface: Option<RiskSurface>,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
}

impl CalibrationOutcome {
    pub fn grid(&self) -> Option<ThresholdGrid> {
        self.surface.as_ref().map(|s| s.grid)
    }

    /// Empirical `(misalignment, cost)` of the selected pair on the
    /// calibration data.
    pub fn calibration_risks(&self) -> Option<(f64, f64)> {
        let surface = self.surface.as_ref()?;
        let (m, q) = self.selected_index?;
        Some((surface.misalignment_at(m, q), surface.cost_at(m, q)))
    }
}

fn check_level(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(CascadeError::param(name, format!("{v} is not in (0, 1)")))
    }
}

/// Ordering used for the cost-minimizing selection: lower cost, then lower
/// misalignment, then larger `lambda`, then smaller `epsilon`.
fn preference(a: (Thresholds, f64, f64), b: (Thresholds, f64, f64)) -> Ordering {
    let (ta, cost_a, mis_a) = a;
    let (tb, cost_b, mis_b) = b;
    cost_a
        .total_cmp(&cost_b)
        .then(mis_a.total_cmp(&mis_b))
        .then(tb.lambda.total_cmp(&ta.lambda))
        .then(ta.epsilon.total_cmp(&tb.epsilon))
}

/// Picks the cheapest candidate by empirical cost with a deterministic
/// tie-break (lower misalignment, larger `lambda`, smaller `epsilon`).
pub fn select_min_cost(
    candidates: &[Thresholds],
    dataset: &[CascadeRecord],
    costs: &CostModel,
) -> Result<Thresholds> {
    let mut best: Option<(Thresholds, f64, f64)> = None;
    for &t in candidates {
        let item = (
            t,
            empirical_cost(dataset, t, costs)?,
            empirical_misalignment(dataset, t)?,
        );
        if best.is_none_or(|b| preference(item, b) == Ordering::Less) {
            best = Some(item);
        }
    }
    best.map(|b| b.0).ok_or(CascadeError::EmptyCandidates)
}

fn select_from_surface(surface: &RiskSurface, certified: &[(usize, usize)]) -> (usize, usize) {
    let grid = surface.grid;
    let key = |&(m, q): &(usize, usize)| (grid.at(m, q), surface.cost_at(m, q), surface.misalignment_at(m, q));
    *certified
        .iter()
        .min_by(|a, b| preference(key(a), key(b)))
        .expect("certified set is non-empty after fallback")
}

fn finish(
    method: Method,
    surface: RiskSurface,
    mut certified: Vec<(usize, usize)>,
    stop_indices: Vec<usize>,
    delta: Option<f64>,
) -> CalibrationOutcome {
    let grid = surface.grid;
    let fallback_used = certified.is_empty();
    if fallback_used {
        certified.push(grid.all_human_index());
    }
    let (m, q) = select_from_surface(&surface, &certified);
    CalibrationOutcome {
        method,
        selected: Policy::Thresholds(grid.at(m, q)),
        selected_index: Some((m, q)),
        certified_set: certified.iter().map(|&(m, q)| grid.at(m, q)).collect(),
        certified,
        fallback_used,
        stop_indices,
        alpha: Some(surface.alpha),
        surface: Some(surface),
        delta,
    }
}

/// MHT-ERM on a precomputed surface.
pub fn mht_erm_on_surface(surface: RiskSurface, delta: f64) -> Result<CalibrationOutcome> {
    check_level("delta", delta)?;
    let grid = surface.grid;
    let level = delta / grid.m_count() as f64;
    let mut certified = Vec::new();
    let mut stop_indices = Vec::with_capacity(grid.m_count());
    for m in 0..grid.m_count() {
        let mut stop = 0;
        for q in (0..grid.q_count()).rev() {
            if surface.p_value_at(m, q) <= level {
                certified.push((m, q));
            } else {
                stop = q + 1;
                break;
            }
        }
        stop_indices.push(stop);
    }
    Ok(finish(Method::MhtErm, surface, certified, stop_indices, Some(delta)))
}

/// Global Bonferroni over all pairs, on a precomputed surface.
pub fn mht_erm_bonferroni_on_surface(surface: RiskSurface, delta: f64) -> Result<CalibrationOutcome> {
    check_level("delta", delta)?;
    let grid = surface.grid;
    let level = delta / grid.len() as f64;
    let certified = chain_order(&grid)
        .filter(|&(m, q)| surface.p_value_at(m, q) <= level)
        .collect();
    Ok(finish(Method::MhtErmB, surface, certified, Vec::new(), Some(delta)))
}

/// Unprotected constrained ERM on a precomputed surface.
pub fn c_erm_on_surface(surface: RiskSurface) -> CalibrationOutcome {
    let grid = surface.grid;
    let alpha = surface.alpha;
    let feasible = chain_order(&grid)
        .filter(|&(m, q)| surface.misalignment_at(m, q) <= alpha)
        .collect();
    finish(Method::CErm, surface, feasible, Vec::new(), None)
}

fn chain_order(grid: &ThresholdGrid) -> impl Iterator<Item = (usize, usize)> {
    let (m_count, q_count) = (grid.m_count(), grid.q_count());
    (0..m_count).flat_map(move |m| (0..q_count).rev().map(move |q| (m, q)))
}

fn surface_for(
    dataset: &[CascadeRecord],
    grid: &ThresholdGrid,
    alpha: f64,
    costs: &CostModel,
) -> Result<RiskSurface> {
    check_level("alpha", alpha)?;
    risk_surface(dataset, grid, costs, alpha)
}

pub fn mht_erm(
    dataset: &[CascadeRecord],
    grid: &ThresholdGrid,
    alpha: f64,
    delta: f64,
    costs: &CostModel,
) -> Result<CalibrationOutcome> {
    check_level("delta", delta)?;
    mht_erm_on_surface(surface_for(dataset, grid, alpha, costs)?, delta)
}

pub fn mht_erm_bonferroni(
    dataset: &[CascadeRecord],
    grid: &ThresholdGrid,
    alpha: f64,
    delta: f64,
    costs: &CostModel,
) -> Result<CalibrationOutcome> {
    check_level("delta", delta)?;
    mht_erm_bonferroni_on_surface(surface_for(dataset, grid, alpha, costs)?, delta)
}

pub fn c_erm(
    dataset: &[CascadeRecord],
    grid: &ThresholdGrid,
    alpha: f64,
    costs: &CostModel,
) -> Result<CalibrationOutcome> {
    Ok(c_erm_on_surface(surface_for(dataset, grid, alpha, costs)?))
}

/// Single-tier baseline.
pub fn fixed_policy(tier: Tier) -> CalibrationOutcome {
    let method = match tier {
        Tier::Edge => Method::EdgeOnly,
        Tier::Cloud => Method::CloudOnly,
        Tier::Human => Method::HumanOnly,
    };
    CalibrationOutcome {
        method,
        selected: Policy::Fixed(tier),
        selected_index: None,
        certified: Vec::new(),
        certified_set: Vec::new(),
        fallback_used: false,
        stop_indices: Vec::new(),
        surface: None,
        alpha: None,
        delta: None,
    }
}

/// Runs any [`Method`]. `delta` is ignored by C-ERM and the baselines.
pub fn calibrate(
    method: Method,
    dataset: &[CascadeRecord],
    grid: &ThresholdGrid,
    alpha: f64,
    delta: f64,
    costs: &CostModel,
) -> Result<CalibrationOutcome> {
    match method {
        Method::MhtErm => mht_erm(dataset, grid, alpha, delta, costs),
        Method::MhtErmB => mht_erm_bonferroni(dataset, grid, alpha, delta, costs),
        Method::CErm => c_erm(dataset, grid, alpha, costs),
        fixed => Ok(fixed_policy(fixed.fixed_tier().expect("baseline method"))),
    }
}

/// Runs several methods sharing one risk surface.
pub fn calibrate_all(
    methods: &[Method],
    dataset: &[CascadeRecord],
    grid: &ThresholdGrid,
    alpha: f64,
    delta: f64,
    costs: &CostModel,
) -> Result<Vec<CalibrationOutcome>> {
    let needs_surface = methods.iter().any(|m| m.fixed_tier().is_none());
    let surface = if needs_surface {
        Some(surface_for(dataset, grid, alpha, costs)?)
    } else {
        None
    };
    methods
        .iter()
        .map(|&method| {
            let surface = || surface.clone().expect("surface computed for calibrated methods");
            match method {
                Method::MhtErm => mht_erm_on_surface(surface(), delta),
                Method::MhtErmB => mht_erm_bonferroni_on_surface(surface(), delta),
                Method::CErm => Ok(c_erm_on_surface(surface())),
                fixed => Ok(fixed_policy(fixed.fixed_tier().expect("baseline method"))),
            }
        })
        .collect()
}
