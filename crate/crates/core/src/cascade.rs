//! Cascade semantics: routing a scored query through edge, cloud and expert.
//!
//! Everything here is a pure function of its inputs.

use serde::{Deserialize, Serialize};

use crate::error::{CascadeError, Result};

fn check_unit(field: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(CascadeError::OutOfRange { field, value })
    }
}

/// One calibration query: edge/cloud scores plus whether each model's
/// answer agreed with the expert label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeRecord {
    pub u_edge: f64,
    pub c_edge: f64,
    pub u_cloud: f64,
    pub c_cloud: f64,
    pub edge_correct: bool,
    pub cloud_correct: bool,
}

impl CascadeRecord {
    pub fn new(
        u_edge: f64,
        c_edge: f64,
        u_cloud: f64,
        c_cloud: f64,
        edge_correct: bool,
        cloud_correct: bool,
    ) -> Result<Self> {
        let record = Self {
            u_edge,
            c_edge,
            u_cloud,
            c_cloud,
            edge_correct,
            cloud_correct,
        };
        record.validate()?;
        Ok(record)
    }

    /// Checks that all four scores lie in `[0, 1]` (NaN is rejected).
    pub fn validate(&self) -> Result<()> {
        check_unit("u_edge", self.u_edge)?;
        check_unit("c_edge", self.c_edge)?;
        check_unit("u_cloud", self.u_cloud)?;
        check_unit("c_cloud", self.c_cloud)
    }
}

/// Threshold pair `(epsilon, lambda)` for the knowledge and confidence tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub epsilon: f64,
    pub lambda: f64,
}

impl Thresholds {
    /// `(0, 1)`: no score can pass `u < 0` or `c > 1`, so every query goes
    /// to the expert.
    pub const ALL_HUMAN: Thresholds = Thresholds {
        epsilon: 0.0,
        lambda: 1.0,
    };

    pub fn new(epsilon: f64, lambda: f64) -> Result<Self> {
        check_unit("epsilon", epsilon)?;
        check_unit("lambda", lambda)?;
        Ok(Self { epsilon, lambda })
    }
}

/// Tier that produces the final answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Edge,
    Cloud,
    Human,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Edge, Tier::Cloud, Tier::Human];

    pub fn name(self) -> &'static str {
        match self {
            Tier::Edge => "edge",
            Tier::Cloud => "cloud",
            Tier::Human => "human",
        }
    }
}

/// Per-answer costs of each tier.
///
/// `call_multiplier` is the number of model calls spent per scored query
/// (1 for white-box ensembles, K for K prompt variants). It scales the edge
/// and cloud costs only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub l_edge: f64,
    pub l_cloud: f64,
    pub l_human: f64,
    pub call_multiplier: u32,
}

impl CostModel {
    pub fn new(l_edge: f64, l_cloud: f64, l_human: f64, call_multiplier: u32) -> Result<Self> {
        let costs = Self {
            l_edge,
            l_cloud,
            l_human,
            call_multiplier,
        };
        costs.validate()?;
        Ok(costs)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("l_edge", self.l_edge),
            ("l_cloud", self.l_cloud),
            ("l_human", self.l_human),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CascadeError::param(name, format!("{v} is not a nonnegative cost")));
            }
        }
        if self.call_multiplier == 0 {
            return Err(CascadeError::param("call_multiplier", "must be positive"));
        }
        Ok(())
    }

    /// Whether `l_human >= l_cloud >= l_edge`. Unordered costs are legal but
    /// usually a configuration mistake.
    pub fn is_ordered(&self) -> bool {
        self.l_human >= self.l_cloud && self.l_cloud >= self.l_edge
    }

    pub fn with_call_multiplier(self, call_multiplier: u32) -> Self {
        Self {
            call_multiplier,
            ..self
        }
    }

    /// Cost charged for a query answered at `tier`.
    pub fn tier_cost(&self, tier: Tier) -> f64 {
        let k = f64::from(self.call_multiplier);
        match tier {
            Tier::Edge => k * self.l_edge,
            Tier::Cloud => k * self.l_cloud,
            Tier::Human => self.l_human,
        }
    }
}

/// Uniform `M x Q` lattice `epsilon_m = m/(M-1)`, `lambda_q = q/(Q-1)`.
///
/// Indices are zero-based here; `m = 0` is `epsilon = 0` and `q = Q-1` is
/// `lambda = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    m_count: usize,
    q_count: usize,
}

impl ThresholdGrid {
    pub fn new(m_count: usize, q_count: usize) -> Result<Self> {
        if m_count < 2 || q_count < 2 {
            return Err(CascadeError::InvalidGrid { m_count, q_count });
        }
        Ok(Self { m_count, q_count })
    }

    pub fn m_count(&self) -> usize {
        self.m_count
    }

    pub fn q_count(&self) -> usize {
        self.q_count
    }

    pub fn len(&self) -> usize {
        self.m_count * self.q_count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn epsilon(&self, m: usize) -> f64 {
        debug_assert!(m < self.m_count);
        m as f64 / (self.m_count - 1) as f64
    }

    pub fn lambda(&self, q: usize) -> f64 {
        debug_assert!(q < self.q_count);
        q as f64 / (self.q_count - 1) as f64
    }

    pub fn epsilons(&self) -> Vec<f64> {
        (0..self.m_count).map(|m| self.epsilon(m)).collect()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        (0..self.q_count).map(|q| self.lambda(q)).collect()
    }

    pub fn at(&self, m: usize, q: usize) -> Thresholds {
        Thresholds {
            epsilon: self.epsilon(m),
            lambda: self.lambda(q),
        }
    }

    /// All pairs in row-major order (`m` outer, `q` inner).
    pub fn pairs(&self) -> impl Iterator<Item = Thresholds> + '_ {
        (0..self.m_count).flat_map(move |m| (0..self.q_count).map(move |q| self.at(m, q)))
    }

    /// Grid coordinates of the all-human pair `(0, 1)`.
    pub fn all_human_index(&self) -> (usize, usize) {
        (0, self.q_count - 1)
    }
}

pub fn make_grid(m_count: usize, q_count: usize) -> Result<ThresholdGrid> {
    ThresholdGrid::new(m_count, q_count)
}

/// Routing rule of the cascade.
///
/// Edge answers iff `u_edge < eps && c_edge > lambda`. Cloud answers iff the
/// edge failed its knowledge test and `u_cloud < eps && c_cloud > lambda`.
/// An edge that knows the query but is not confident defers straight to the
/// expert.
pub fn route(record: &CascadeRecord, thresholds: Thresholds) -> Tier {
    let Thresholds { epsilon, lambda } = thresholds;
    if record.u_edge < epsilon {
        if record.c_edge > lambda {
            Tier::Edge
        } else {
            Tier::Human
        }
    } else if record.u_cloud < epsilon && record.c_cloud > lambda {
        Tier::Cloud
    } else {
        Tier::Human
    }
}

/// 1 if the cascade output differs from the expert label, else 0.
pub fn misalignment_loss(record: &CascadeRecord, thresholds: Thresholds) -> u8 {
    match route(record, thresholds) {
        Tier::Edge => u8::from(!record.edge_correct),
        Tier::Cloud => u8::from(!record.cloud_correct),
        Tier::Human => 0,
    }
}

/// Cost of the single tier that answers the query.
pub fn cost_loss(record: &CascadeRecord, thresholds: Thresholds, costs: &CostModel) -> f64 {
    costs.tier_cost(route(record, thresholds))
}
