//! Monte Carlo verification of the alignment guarantee.
//!
//! A trial draws a calibration set with its own seed, runs each configured
//! method and scores the selected policy, either exactly against a
//! [`DiscreteScoreModel`] or on a held-out split of an ingested record pool.
//! Trials run in parallel; summaries are folded in trial order so the
//! worker count never changes a result.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_all, Method, Policy};
use crate::cascade::{CascadeRecord, CostModel, ThresholdGrid};
use crate::error::{CascadeError, Result};
use crate::oracle::{sample_dataset, DiscreteScoreModel};

/// Trial count used when none is given.
pub const DEFAULT_TRIALS: usize = 200;

/// Settings shared by every trial of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub methods: Vec<Method>,
    pub n: usize,
    pub alpha: f64,
    pub delta: f64,
    pub grid: ThresholdGrid,
    pub costs: CostModel,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(CascadeError::param("methods", "no methods configured"));
        }
        if self.n == 0 {
            return Err(CascadeError::param("n", "calibration size must be at least 1"));
        }
        for (name, v) in [("alpha", self.alpha), ("delta", self.delta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(CascadeError::param(name, format!("{v} is not in (0, 1)")));
            }
        }
        self.costs.validate()
    }
}

/// Where calibration data comes from and how selected policies are scored.
#[derive(Debug, Clone, Copy)]
pub enum Scenario<'a> {
    /// Sample from the model; score with exact risks.
    Model(&'a DiscreteScoreModel),
    /// Shuffle the pool per trial; calibrate on the first `n` records and
    /// score on the next `n_test`.
    Pool {
        records: &'a [CascadeRecord],
        n_test: usize,
    },
}

impl Scenario<'_> {
    pub fn evaluation(&self) -> &'static str {
        match self {
            Scenario::Model(_) => "exact",
            Scenario::Pool { .. } => "test-set",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub method: Method,
    pub seed: u64,
    pub n: usize,
    pub selected: Policy,
    pub fallback_used: bool,
    pub certified_count: usize,
    pub calibration_misalignment: f64,
    pub calibration_cost: f64,
    /// Exact risk under the model, or the held-out estimate.
    pub misalignment: f64,
    pub cost: f64,
    /// `misalignment > alpha`.
    pub violated: bool,
}

fn run_trial_in(scenario: &Scenario<'_>, config: &McConfig, seed: u64) -> Result<Vec<TrialResult>> {
    let (calibration, test): (Vec<CascadeRecord>, Vec<CascadeRecord>) = match *scenario {
        Scenario::Model(model) => (sample_dataset(model, config.n, seed)?, Vec::new()),
        Scenario::Pool { records, n_test } => {
            if config.n + n_test > records.len() {
                return Err(CascadeError::param(
                    "n",
                    format!(
                        "calibration ({}) plus test ({n_test}) exceeds the {} available records",
                        config.n,
                        records.len()
                    ),
                ));
            }
            if n_test == 0 {
                return Err(CascadeError::param("n_test", "test split must be non-empty"));
            }
            let mut shuffled = records.to_vec();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let test = shuffled[config.n..config.n + n_test].to_vec();
            shuffled.truncate(config.n);
            (shuffled, test)
        }
    };
    let outcomes = calibrate_all(
        &config.methods,
        &calibration,
        &config.grid,
        config.alpha,
        config.delta,
        &config.costs,
    )?;
    Ok(outcomes
        .into_iter()
        .map(|out| {
            let cal = out.selected.tally(&calibration);
            let (misalignment, cost) = match *scenario {
                Scenario::Model(model) => (
                    model.policy_misalignment(&out.selected),
                    model.policy_cost(&out.selected, &config.costs),
                ),
                Scenario::Pool { .. } => {
                    let t = out.selected.tally(&test);
                    (t.mean_misalignment(), t.mean_cost(&config.costs))
                }
            };
            TrialResult {
                method: out.method,
                seed,
                n: config.n,
                selected: out.selected,
                fallback_used: out.fallback_used,
                certified_count: out.certified.len(),
                calibration_misalignment: cal.mean_misalignment(),
                calibration_cost: cal.mean_cost(&config.costs),
                misalignment,
                cost,
                violated: misalignment > config.alpha,
            }
        })
        .collect())
}

/// One trial against the model: sample with `seed`, calibrate with every
/// configured method, score exactly.
pub fn run_trial(model: &DiscreteScoreModel, config: &McConfig, seed: u64) -> Result<Vec<TrialResult>> {
    config.validate()?;
    run_trial_in(&Scenario::Model(model), config, seed)
}

/// Mean and sample standard deviation (`n - 1` divisor; 0 for one value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub trials: usize,
    pub violations: usize,
    /// Empirical family-wise error rate.
    pub violation_rate: f64,
    pub misalignment: Moments,
    pub cost: Moments,
    /// Nearest-rank `1 - delta` quantile of the misalignment.
    pub misalignment_quantile: f64,
    pub misalignment_iqr_max: f64,
    pub cost_iqr_max: f64,
    pub calibration_cost_mean: f64,
    pub fallback_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub trials: usize,
    pub base_seed: u64,
    pub evaluation: String,
    pub config: McConfig,
    pub methods: Vec<MethodSummary>,
}

impl McSummary {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == method)
    }
}

fn summarize_method(method: Method, results: &[&TrialResult], delta: f64) -> Result<MethodSummary> {
    let trials = results.len();
    let mis: Vec<f64> = results.iter().map(|r| r.misalignment).collect();
    let cost: Vec<f64> = results.iter().map(|r| r.cost).collect();
    let cal_cost: Vec<f64> = results.iter().map(|r| r.calibration_cost).collect();
    let violations = results.iter().filter(|r| r.violated).count();
    let fallbacks = results.iter().filter(|r| r.fallback_used).count();
    Ok(MethodSummary {
        method,
        trials,
        violations,
        violation_rate: violations as f64 / trials as f64,
        misalignment: Moments::of(&mis),
        cost: Moments::of(&cost),
        misalignment_quantile: quantile(&mis, 1.0 - delta)?,
        misalignment_iqr_max: iqr_max(&mis)?,
        cost_iqr_max: iqr_max(&cost)?,
        calibration_cost_mean: Moments::of(&cal_cost).mean,
        fallback_rate: fallbacks as f64 / trials as f64,
    })
}

/// Runs `trials` trials with seeds `base_seed, base_seed + 1, ...` and
/// returns every per-trial result in seed order.
pub fn run_trials(
    scenario: &Scenario<'_>,
    config: &McConfig,
    trials: usize,
    base_seed: u64,
    workers: Option<usize>,
) -> Result<Vec<TrialResult>> {
    config.validate()?;
    if trials == 0 {
        return Err(CascadeError::param("trials", "must be at least 1"));
    }
    let work = || -> Result<Vec<Vec<TrialResult>>> {
        (0..trials as u64)
            .into_par_iter()
            .map(|i| run_trial_in(scenario, config, base_seed.wrapping_add(i)))
            .collect()
    };
    let nested = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| CascadeError::param("workers", e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    Ok(nested.into_iter().flatten().collect())
}

pub fn summarize(
    scenario: &Scenario<'_>,
    config: &McConfig,
    base_seed: u64,
    results: &[TrialResult],
) -> Result<McSummary> {
    let methods = config
        .methods
        .iter()
        .map(|&method| {
            let rows: Vec<&TrialResult> = results.iter().filter(|r| r.method == method).collect();
            summarize_method(method, &rows, config.delta)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(McSummary {
        trials: methods.first().map_or(0, |m| m.trials),
        base_seed,
        evaluation: scenario.evaluation().to_string(),
        config: config.clone(),
        methods,
    })
}

/// Monte Carlo summary over a scenario. `workers = None` uses rayon's
/// global pool.
pub fn run_monte_carlo_with(
    scenario: &Scenario<'_>,
    config: &McConfig,
    trials: usize,
    base_seed: u64,
    workers: Option<usize>,
) -> Result<McSummary> {
    let results = run_trials(scenario, config, trials, base_seed, workers)?;
    summarize(scenario, config, base_seed, &results)
}

pub fn run_monte_carlo(
    model: &DiscreteScoreModel,
    config: &McConfig,
    trials: usize,
    base_seed: u64,
) -> Result<McSummary> {
    run_monte_carlo_with(&Scenario::Model(model), config, trials, base_seed, None)
}

/// A cost profile for sweeps; `cloud_accuracy_shift` moves the model's
/// cloud accuracies alongside the cost change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    pub costs: CostModel,
    pub cloud_accuracy_shift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    CalibrationSize(Vec<usize>),
    Alpha(Vec<f64>),
    Grid(Vec<ThresholdGrid>),
    CostProfile(Vec<CostProfile>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::CalibrationSize(_) => "n",
            SweepAxis::Alpha(_) => "alpha",
            SweepAxis::Grid(_) => "grid",
            SweepAxis::CostProfile(_) => "costs",
        }
    }

    fn len(&self) -> usize {
        match self {
            SweepAxis::CalibrationSize(v) => v.len(),
            SweepAxis::Alpha(v) => v.len(),
            SweepAxis::Grid(v) => v.len(),
            SweepAxis::CostProfile(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub summary: McSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: String,
    pub rows: Vec<SweepRow>,
}

/// One Monte Carlo summary per axis value, everything else held at
/// `config`. Every point reuses the same seeds.
pub fn sweep(
    axis: &SweepAxis,
    model: &DiscreteScoreModel,
    config: &McConfig,
    trials: usize,
    base_seed: u64,
    workers: Option<usize>,
) -> Result<SweepTable> {
    if axis.len() == 0 {
        return Err(CascadeError::param("values", "sweep needs at least one value"));
    }
    let point = |value: String, cfg: McConfig, model: &DiscreteScoreModel| -> Result<SweepRow> {
        let summary = run_monte_carlo_with(&Scenario::Model(model), &cfg, trials, base_seed, workers)?;
        Ok(SweepRow { value, summary })
    };
    let rows = match axis {
        SweepAxis::CalibrationSize(values) => values
            .iter()
            .map(|&n| point(n.to_string(), McConfig { n, ..config.clone() }, model))
            .collect::<Result<Vec<_>>>()?,
        SweepAxis::Alpha(values) => values
            .iter()
            .map(|&alpha| point(alpha.to_string(), McConfig { alpha, ..config.clone() }, model))
            .collect::<Result<Vec<_>>>()?,
        SweepAxis::Grid(values) => values
            .iter()
            .map(|&grid| {
                let label = format!("{}x{}", grid.m_count(), grid.q_count());
                point(label, McConfig { grid, ..config.clone() }, model)
            })
            .collect::<Result<Vec<_>>>()?,
        SweepAxis::CostProfile(values) => values
            .iter()
            .map(|p| {
                let c = p.costs;
                let label = format!("{}/{}/{}", c.l_edge, c.l_cloud, c.l_human);
                let shifted = model.with_cloud_accuracy_shift(p.cloud_accuracy_shift);
                point(label, McConfig { costs: c, ..config.clone() }, &shifted)
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(SweepTable {
        axis: axis.name().to_string(),
        rows,
    })
}

fn non_empty(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        Err(CascadeError::param("values", "empty list"))
    } else {
        Ok(())
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Nearest-rank quantile: the `ceil(p n)`-th smallest value.
///
/// `p n` is rounded down by up to 1e-9 before the ceiling so that products
/// such as `0.07 * 100` land on the intended rank.
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    non_empty(values)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(CascadeError::param("p", format!("{p} is not in (0, 1]")));
    }
    let v = sorted(values);
    let rank = ((p * v.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(v[rank.min(v.len()) - 1])
}

/// Linearly interpolated quantile at position `(n - 1) p` of sorted data.
fn interpolated(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Box-plot whisker top: the largest value not above `Q3 + 1.5 IQR`.
///
/// Values within a relative 1e-12 of the fence count as inside it, so a
/// point exactly on the fence is not lost to rounding.
pub fn iqr_max(values: &[f64]) -> Result<f64> {
    non_empty(values)?;
    let v = sorted(values);
    let q1 = interpolated(&v, 0.25);
    let q3 = interpolated(&v, 0.75);
    let fence = q3 + 1.5 * (q3 - q1);
    let slack = 1e-12 * fence.abs().max(1.0);
    Ok(v.iter().rev().copied().find(|&x| x <= fence + slack).unwrap_or(v[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::make_grid;
    use crate::cascade::Tier;
    use proptest::prelude::*;

    fn config(methods: Vec<Method>) -> McConfig {
        McConfig {
            methods,
            n: 100,
            alpha: 0.3,
            delta: 0.05,
            grid: make_grid(5, 20).unwrap(),
            costs: CostModel::new(1.5, 7.0, 10.0, 1).unwrap(),
        }
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.95).unwrap(), 5.0);
        assert_eq!(quantile(&[7.0], 0.5).unwrap(), 7.0);
        assert_eq!(quantile(&[0.0, 0.0, 0.0, 1.0], 0.95).unwrap(), 1.0);
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 1.0).unwrap(), 3.0);
        assert!(quantile(&[], 0.5).is_err());
        assert!(quantile(&[1.0], 0.0).is_err());
    }

    #[test]
    fn iqr_max_examples() {
        assert_eq!(iqr_max(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap(), 4.0);
        assert_eq!(iqr_max(&[0.3; 6]).unwrap(), 0.3);
        assert_eq!(iqr_max(&[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap(), 5.0);
        assert!(iqr_max(&[]).is_err());
    }

    #[test]
    fn moments_use_sample_std() {
        let m = Moments::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Moments::of(&[2.0]).std, 0.0);
    }

    #[test]
    fn human_only_trial() {
        let model = DiscreteScoreModel::teleqna_like();
        let r = run_trial(&model, &config(vec![Method::HumanOnly]), 5).unwrap();
        assert_eq!(r.len(), 1);
        assert!(!r[0].violated);
        assert_eq!(r[0].cost, 10.0);
        assert_eq!(r[0].selected, Policy::Fixed(Tier::Human));
    }

    #[test]
    fn trial_is_deterministic() {
        let model = DiscreteScoreModel::teleqna_like();
        let cfg = config(Method::ALL.to_vec());
        assert_eq!(run_trial(&model, &cfg, 11).unwrap(), run_trial(&model, &cfg, 11).unwrap());
    }

    #[test]
    fn violated_flag_is_strict() {
        let model = DiscreteScoreModel::teleqna_like();
        let cfg = config(Method::ALL.to_vec());
        for seed in 0..20 {
            for r in run_trial(&model, &cfg, seed).unwrap() {
                assert_eq!(r.violated, r.misalignment > cfg.alpha);
            }
        }
    }

    #[test]
    fn pool_scenario_splits_records() {
        let model = DiscreteScoreModel::teleqna_like();
        let pool = sample_dataset(&model, 400, 1).unwrap();
        let mut cfg = config(vec![Method::MhtErm, Method::EdgeOnly]);
        cfg.n = 100;
        let scenario = Scenario::Pool { records: &pool, n_test: 300 };
        let s = run_monte_carlo_with(&scenario, &cfg, 10, 0, Some(2)).unwrap();
        assert_eq!(s.evaluation, "test-set");
        assert_eq!(s.method(Method::EdgeOnly).unwrap().cost.mean, 1.5);
        let too_big = Scenario::Pool { records: &pool, n_test: 301 };
        assert!(run_trials(&too_big, &cfg, 1, 0, None).is_err());
    }

    #[test]
    fn summary_independent_of_workers() {
        let model = DiscreteScoreModel::teleqna_like();
        let cfg = config(Method::ALL.to_vec());
        let scenario = Scenario::Model(&model);
        let one = run_monte_carlo_with(&scenario, &cfg, 40, 100, Some(1)).unwrap();
        let four = run_monte_carlo_with(&scenario, &cfg, 40, 100, Some(4)).unwrap();
        assert_eq!(one, four);
        assert_eq!(one.trials, 40);
    }

    #[test]
    fn sweep_shapes() {
        let model = DiscreteScoreModel::teleqna_like();
        let cfg = config(vec![Method::MhtErm]);
        let t = sweep(&SweepAxis::CalibrationSize(vec![10, 50, 100]), &model, &cfg, 5, 0, None).unwrap();
        assert_eq!(t.axis, "n");
        assert_eq!(t.rows.iter().map(|r| r.value.as_str()).collect::<Vec<_>>(), ["10", "50", "100"]);
        assert_eq!(t.rows[1].summary.config.n, 50);
        let g = sweep(&SweepAxis::Grid(vec![make_grid(2, 2).unwrap()]), &model, &cfg, 2, 0, None).unwrap();
        assert_eq!(g.rows[0].value, "2x2");
        assert!(sweep(&SweepAxis::Alpha(vec![]), &model, &cfg, 2, 0, None).is_err());
    }

    fn brute_quantile(values: &[f64], p: f64) -> f64 {
        // smallest v with at least p n values <= v
        let n = values.len() as f64;
        let mut cands = values.to_vec();
        cands.sort_by(f64::total_cmp);
        *cands
            .iter()
            .find(|&&v| values.iter().filter(|&&x| x <= v).count() as f64 >= p * n - 1e-9)
            .unwrap()
    }

    fn brute_iqr_max(values: &[f64]) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |p: f64| {
            let pos = (v.len() - 1) as f64 * p;
            let i = pos as usize;
            if i + 1 < v.len() {
                v[i] * (1.0 - (pos - i as f64)) + v[i + 1] * (pos - i as f64)
            } else {
                v[i]
            }
        };
        let (q1, q3) = (at(0.25), at(0.75));
        let fence = q3 + 1.5 * (q3 - q1);
        let mut best = None;
        for &x in values {
            if x <= fence + 1e-12 * fence.abs().max(1.0) && best.is_none_or(|b| x > b) {
                best = Some(x);
            }
        }
        best.unwrap_or(v[0])
    }

    proptest! {
        #[test]
        fn statistics_match_brute_force(
            values in prop::collection::vec((0u32..50).prop_map(|k| k as f64 / 7.0), 1..=20),
            p in prop_oneof![Just(0.95), Just(0.5), Just(0.25), Just(1.0), 0.01..1.0f64],
        ) {
            prop_assert_eq!(quantile(&values, p).unwrap(), brute_quantile(&values, p));
            prop_assert_eq!(iqr_max(&values).unwrap(), brute_iqr_max(&values));
        }
    }
}
