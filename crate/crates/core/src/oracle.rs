//! Finite-support score model with exact risks.
//!
//! Each query type has fixed scores and Bernoulli correctness for the two
//! models, so the true misalignment and cost of any policy are finite sums.
//! The model doubles as a sampler for Monte Carlo checks and ships with
//! [`reference_mht_erm`], a loop-for-loop MHT-ERM used to cross-check the
//! optimized calibrator.

use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{select_min_cost, CalibrationOutcome, Method, Policy};
use crate::cascade::{misalignment_loss, route, CascadeRecord, CostModel, ThresholdGrid, Thresholds, Tier};
use crate::error::{CascadeError, Result};

/// Generator family used by [`sample_dataset`], reported alongside results.
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha), seeded via seed_from_u64";

const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// One point of the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreType {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub weight: f64,
    pub u_edge: f64,
    pub c_edge: f64,
    pub u_cloud: f64,
    pub c_cloud: f64,
    pub edge_accuracy: f64,
    pub cloud_accuracy: f64,
}

impl ScoreType {
    fn record(&self, edge_correct: bool, cloud_correct: bool) -> CascadeRecord {
        CascadeRecord {
            u_edge: self.u_edge,
            c_edge: self.c_edge,
            u_cloud: self.u_cloud,
            c_cloud: self.c_cloud,
            edge_correct,
            cloud_correct,
        }
    }

    /// Probability that the tier's answer disagrees with the expert.
    fn error_rate(&self, tier: Tier) -> f64 {
        match tier {
            Tier::Edge => 1.0 - self.edge_accuracy,
            Tier::Cloud => 1.0 - self.cloud_accuracy,
            Tier::Human => 0.0,
        }
    }
}

/// Mixture of [`ScoreType`]s. Weights are positive and sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteScoreModel {
    types: Vec<ScoreType>,
}

impl DiscreteScoreModel {
    pub fn new(types: Vec<ScoreType>) -> Result<Self> {
        let model = Self { types };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if self.types.is_empty() {
            return Err(CascadeError::InvalidModel("no types".into()));
        }
        let mut total = 0.0;
        for (i, t) in self.types.iter().enumerate() {
            if !(t.weight > 0.0 && t.weight.is_finite()) {
                return Err(CascadeError::InvalidModel(format!(
                    "type {i}: weight {} is not positive",
                    t.weight
                )));
            }
            total += t.weight;
            for (field, v) in [
                ("u_edge", t.u_edge),
                ("c_edge", t.c_edge),
                ("u_cloud", t.u_cloud),
                ("c_cloud", t.c_cloud),
                ("edge_accuracy", t.edge_accuracy),
                ("cloud_accuracy", t.cloud_accuracy),
            ] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(CascadeError::InvalidModel(format!(
                        "type {i}: {field} = {v} is outside [0, 1]"
                    )));
                }
            }
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(CascadeError::InvalidModel(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    /// Twenty query types in five difficulty bands, from lexicon-style
    /// (low uncertainty, high confidence, accurate) to specification-style
    /// (high uncertainty, low accuracy). Edge accuracy is 0.670 and cloud
    /// accuracy 0.704 on average.
    pub fn teleqna_like() -> Self {
        Self::from_json(include_str!("../data/teleqna_like.json"))
            .expect("bundled model is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)
            .map_err(|e| CascadeError::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CascadeError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CascadeError::InvalidModel(msg) => {
                CascadeError::InvalidModel(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn types(&self) -> &[ScoreType] {
        &self.types
    }

    pub fn edge_accuracy(&self) -> f64 {
        self.types.iter().map(|t| t.weight * t.edge_accuracy).sum()
    }

    pub fn cloud_accuracy(&self) -> f64 {
        self.types.iter().map(|t| t.weight * t.cloud_accuracy).sum()
    }

    /// Same model with every cloud accuracy moved by `shift`, clamped to
    /// `[0, 1]`.
    pub fn with_cloud_accuracy_shift(&self, shift: f64) -> Self {
        let types = self
            .types
            .iter()
            .map(|t| ScoreType {
                cloud_accuracy: (t.cloud_accuracy + shift).clamp(0.0, 1.0),
                ..t.clone()
            })
            .collect();
        Self { types }
    }

    /// Probability mass routed to each tier, indexed like [`Tier::ALL`].
    pub fn tier_mass(&self, policy: &Policy) -> [f64; 3] {
        let mut mass = [0.0; 3];
        for t in &self.types {
            let tier = policy.route(&t.record(true, true));
            mass[tier as usize] += t.weight;
        }
        mass
    }

    /// Exact misalignment rate of `policy`.
    pub fn policy_misalignment(&self, policy: &Policy) -> f64 {
        self.types
            .iter()
            .map(|t| t.weight * t.error_rate(policy.route(&t.record(true, true))))
            .sum()
    }

    /// Exact expected cost of `policy`. When a single tier receives all the
    /// mass its cost is returned as is, without weight-sum rounding.
    pub fn policy_cost(&self, policy: &Policy, costs: &CostModel) -> f64 {
        let mass = self.tier_mass(policy);
        let used: Vec<Tier> = Tier::ALL
            .into_iter()
            .filter(|&tier| mass[tier as usize] > 0.0)
            .collect();
        if let [only] = used.as_slice() {
            return costs.tier_cost(*only);
        }
        Tier::ALL
            .into_iter()
            .map(|tier| mass[tier as usize] * costs.tier_cost(tier))
            .sum()
    }
}

/// Exact `R_A(thresholds)` under the model.
pub fn true_misalignment(model: &DiscreteScoreModel, thresholds: Thresholds) -> f64 {
    model.policy_misalignment(&Policy::Thresholds(thresholds))
}

/// Exact `R_L(thresholds)` under the model.
pub fn true_cost(model: &DiscreteScoreModel, thresholds: Thresholds, costs: &CostModel) -> f64 {
    model.policy_cost(&Policy::Thresholds(thresholds), costs)
}

/// Draws `n` i.i.d. records. Every record consumes one categorical draw and
/// two uniforms, so datasets from models that differ only in accuracies
/// share their types and uniforms (common random numbers).
pub fn sample_dataset(model: &DiscreteScoreModel, n: usize, seed: u64) -> Result<Vec<CascadeRecord>> {
    if n == 0 {
        return Err(CascadeError::param("n", "sample size must be at least 1"));
    }
    let index = WeightedIndex::new(model.types.iter().map(|t| t.weight))
        .map_err(|e| CascadeError::InvalidModel(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|_| {
            let t = &model.types[index.sample(&mut rng)];
            let edge_draw: f64 = rng.gen();
            let cloud_draw: f64 = rng.gen();
            t.record(edge_draw < t.edge_accuracy, cloud_draw < t.cloud_accuracy)
        })
        .collect();
    Ok(records)
}

/// Literal MHT-ERM: every pair's empirical risk and p-value are recomputed
/// from the raw records, chain by chain, with no shared surface. Meant for
/// small grids; the result must match
/// [`mht_erm`](crate::calibration::mht_erm) exactly.
pub fn reference_mht_erm(
    dataset: &[CascadeRecord],
    grid: &ThresholdGrid,
    alpha: f64,
    delta: f64,
    costs: &CostModel,
) -> Result<CalibrationOutcome> {
    if dataset.is_empty() {
        return Err(CascadeError::EmptyDataset);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CascadeError::param("alpha", format!("{alpha} is not in (0, 1)")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CascadeError::param("delta", format!("{delta} is not in (0, 1)")));
    }
    let big_m = grid.m_count();
    let big_q = grid.q_count();
    let n = dataset.len();

    let mut certified = Vec::new();
    let mut stop_indices = Vec::new();
    for m in 1..=big_m {
        let epsilon = (m - 1) as f64 / (big_m - 1) as f64;
        let mut stop = 0;
        for q in (1..=big_q).rev() {
            let lambda = (q - 1) as f64 / (big_q - 1) as f64;
            let phi = Thresholds { epsilon, lambda };
            let mut losses = 0usize;
            for record in dataset {
                losses += usize::from(misalignment_loss(record, phi));
            }
            let r_hat = losses as f64 / n as f64;
            let margin = if alpha - r_hat > 0.0 { alpha - r_hat } else { 0.0 };
            let p = (-2.0 * n as f64 * (margin * margin)).exp();
            if p <= delta / big_m as f64 {
                certified.push((m - 1, q - 1));
            } else {
                stop = q;
                break;
            }
        }
        stop_indices.push(stop);
    }

    let fallback_used = certified.is_empty();
    if fallback_used {
        certified.push((0, big_q - 1));
    }
    let certified_set: Vec<Thresholds> = certified
        .iter()
        .map(|&(m, q)| Thresholds {
            epsilon: m as f64 / (big_m - 1) as f64,
            lambda: q as f64 / (big_q - 1) as f64,
        })
        .collect();
    let selected = select_min_cost(&certified_set, dataset, costs)?;
    let position = certified_set
        .iter()
        .position(|&t| t == selected)
        .expect("selected pair comes from the candidates");

    Ok(CalibrationOutcome {
        method: Method::MhtErm,
        selected: Policy::Thresholds(selected),
        selected_index: Some(certified[position]),
        certified,
        certified_set,
        fallback_used,
        stop_indices,
        surface: None,
        alpha: Some(alpha),
        delta: Some(delta),
    })
}

/// Tier of each type under `thresholds`, for diagnostics.
pub fn type_routes(model: &DiscreteScoreModel, thresholds: Thresholds) -> Vec<Tier> {
    model
        .types
        .iter()
        .map(|t| route(&t.record(true, true), thresholds))
        .collect()
}
