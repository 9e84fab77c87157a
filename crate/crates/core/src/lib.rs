//! Risk-controlled threshold calibration for edge-cloud-expert cascades.
//!
//! A query is scored by an edge model and a cloud model, each producing an
//! epistemic uncertainty `u` and a confidence `c` in `[0, 1]`. A threshold
//! pair `(epsilon, lambda)` routes the query to the first tier that passes
//! both the knowledge test `u < epsilon` and the confidence test
//! `c > lambda`; everything else goes to a human expert.
//!
//! The crate selects thresholds from a uniform grid so that the probability
//! of picking a pair whose misalignment rate exceeds `alpha` is at most
//! `delta`, while minimizing the empirical processing cost:
//!
//! - [`cascade`]: records, thresholds, routing and per-query losses.
//! - [`risk`]: empirical risks, Hoeffding p-values and grid surfaces.
//! - [`calibration`]: MHT-ERM (fixed-sequence chains with Bonferroni across
//!   chains), the global-Bonferroni variant, unprotected C-ERM and
//!   single-tier baselines.
//! - [`oracle`]: a finite-support score model with exact risks.
//! - [`harness`]: Monte Carlo FWER checks, sweeps and summary statistics.
//! - [`io`]: record ingestion, score aggregation and report emission.

pub mod calibration;
pub mod cascade;
pub mod error;
pub mod harness;
pub mod io;
pub mod oracle;
pub mod risk;

pub use calibration::{CalibrationOutcome, Method, Policy};
pub use cascade::{CascadeRecord, CostModel, ThresholdGrid, Thresholds, Tier};
pub use error::{CascadeError, Result};
pub use oracle::DiscreteScoreModel;
pub use risk::RiskSurface;
