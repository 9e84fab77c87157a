//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::process::{Command, ExitCode};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cascade_risk::calibration::{mht_erm, mht_erm_bonferroni, Method};
use cascade_risk::cascade::{make_grid, CascadeRecord, CostModel};
use cascade_risk::harness::{
    run_monte_carlo, run_monte_carlo_with, sweep, CostProfile, McConfig, Scenario, SweepAxis,
};
use cascade_risk::io::aggregate_prompt_scores;
use cascade_risk::oracle::{reference_mht_erm, DiscreteScoreModel, ScoreType};
use cascade_risk::risk::{hoeffding_p_value, risk_surface};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn binomial_slack(delta: f64, trials: usize) -> f64 {
    2.0 * (delta * (1.0 - delta) / trials as f64).sqrt()
}

fn reference_costs(k: u32) -> CostModel {
    CostModel::new(1.5, 7.0, 10.0, k).unwrap()
}

fn config(methods: Vec<Method>, n: usize) -> McConfig {
    McConfig {
        methods,
        n,
        alpha: 0.3,
        delta: 0.05,
        grid: make_grid(5, 100).unwrap(),
        costs: reference_costs(1),
    }
}

/// Four equally likely question types that the cloud never sees. Sending
/// everything to the edge has misalignment 0.32, just above alpha = 0.3;
/// deferring the least confident type drops it to 0.2125.
fn boundary_model() -> DiscreteScoreModel {
    let types = [(0.8, 0.8), (0.6, 0.7), (0.4, 0.65), (0.2, 0.57)]
        .into_iter()
        .map(|(c_edge, edge_accuracy)| ScoreType {
            name: None,
            weight: 0.25,
            u_edge: 0.1,
            c_edge,
            u_cloud: 0.9,
            c_cloud: 0.5,
            edge_accuracy,
            cloud_accuracy: 0.7,
        })
        .collect();
    DiscreteScoreModel::new(types).unwrap()
}

/// Random records with coarse scores mixed in so that ties with grid points
/// are common.
fn random_dataset(rng: &mut ChaCha8Rng, n: usize) -> Vec<CascadeRecord> {
    let p_edge = rng.gen_range(0.3..1.0);
    let p_cloud = rng.gen_range(0.4..1.0);
    let score = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.5) {
            rng.gen_range(0..=10) as f64 / 10.0
        } else {
            rng.gen::<f64>()
        }
    };
    (0..n)
        .map(|_| {
            CascadeRecord::new(
                score(rng),
                score(rng),
                score(rng),
                score(rng),
                rng.gen_bool(p_edge),
                rng.gen_bool(p_cloud),
            )
            .unwrap()
        })
        .collect()
}

fn fwer_guarantee() -> Check {
    let trials = 500;
    let bound = 0.0695;
    let model = DiscreteScoreModel::teleqna_like();
    let s = run_monte_carlo(&model, &config(vec![Method::MhtErm, Method::MhtErmB], 100), trials, 1)
        .map_err(|e| e.to_string())?;
    let rates: Vec<String> = s
        .methods
        .iter()
        .map(|m| format!("{} {:.4}", m.method, m.violation_rate))
        .collect();
    let detail = format!("{trials} trials, violation rates {} (bound {bound})", rates.join(", "));
    if s.methods.iter().all(|m| m.violation_rate <= bound) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c_erm_fragility() -> Check {
    let trials = 500;
    let delta = 0.05;
    let limit = delta + binomial_slack(delta, trials);
    let model = boundary_model();
    let c_erm = run_monte_carlo(&model, &config(vec![Method::CErm], 10), trials, 2)
        .map_err(|e| e.to_string())?
        .methods[0]
        .violation_rate;
    let mut parts = vec![format!("c-erm@10 {c_erm:.3} (> {:.2})", 2.0 * delta)];
    let mut ok = c_erm > 2.0 * delta;
    for n in [10, 50, 100, 200] {
        let rate = run_monte_carlo(&model, &config(vec![Method::MhtErm], n), trials, 2)
            .map_err(|e| e.to_string())?
            .methods[0]
            .violation_rate;
        parts.push(format!("mht-erm@{n} {rate:.3}"));
        ok &= rate <= limit;
    }
    let detail = format!("{} (mht limit {limit:.4})", parts.join(", "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn deterministic_dominance() -> Check {
    let instances = 1200;
    let costs = reference_costs(1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = DiscreteScoreModel::teleqna_like();
    let mut fallbacks = 0;
    for i in 0..instances {
        let n = rng.gen_range(5..=300);
        let data = if i % 2 == 0 {
            random_dataset(&mut rng, n)
        } else {
            cascade_risk::oracle::sample_dataset(&model, n, rng.gen()).unwrap()
        };
        let grid = make_grid(rng.gen_range(2..=8), rng.gen_range(2..=60)).unwrap();
        let alpha = [0.1, 0.2, 0.3, 0.4, 0.5][rng.gen_range(0..5)];
        let delta = [0.05, 0.1, 0.2][rng.gen_range(0..3)];
        let full = mht_erm(&data, &grid, alpha, delta, &costs).map_err(|e| e.to_string())?;
        let bonf = mht_erm_bonferroni(&data, &grid, alpha, delta, &costs).map_err(|e| e.to_string())?;
        fallbacks += usize::from(bonf.fallback_used);
        // a fallback means the bonferroni set was empty before (0, 1) was added
        if !bonf.fallback_used && !bonf.certified.iter().all(|p| full.certified.contains(p)) {
            return Err(format!("instance {i}: bonferroni set not contained in the chain set"));
        }
        let cost = |o: &cascade_risk::CalibrationOutcome| o.calibration_risks().unwrap().1;
        if cost(&full) > cost(&bonf) {
            return Err(format!("instance {i}: mht-erm cost {} > mht-erm-b cost {}", cost(&full), cost(&bonf)));
        }
    }
    Ok(format!("{instances} instances, containment and cost dominance hold ({fallbacks} bonferroni fallbacks)"))
}

fn reference_equivalence() -> Check {
    let instances = 200;
    let costs = reference_costs(1);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..instances {
        let n = rng.gen_range(1..=100);
        let data = random_dataset(&mut rng, n);
        let grid = make_grid(rng.gen_range(2..=5), rng.gen_range(2..=20)).unwrap();
        let alpha = rng.gen_range(0.05..0.6);
        let delta = rng.gen_range(0.01..0.3);
        let fast = mht_erm(&data, &grid, alpha, delta, &costs).map_err(|e| e.to_string())?;
        let naive = reference_mht_erm(&data, &grid, alpha, delta, &costs).map_err(|e| e.to_string())?;
        if fast.certified_set != naive.certified_set
            || fast.selected != naive.selected
            || fast.stop_indices != naive.stop_indices
            || fast.fallback_used != naive.fallback_used
        {
            return Err(format!("instance {i}: optimized and reference outputs differ"));
        }
    }
    Ok(format!("{instances} instances match exactly (certified set, selection, stop indices)"))
}

fn monotonicity() -> Check {
    let datasets = 1000;
    let costs = reference_costs(1);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..datasets {
        let n = rng.gen_range(1..=200);
        let data = random_dataset(&mut rng, n);
        let grid = make_grid(rng.gen_range(2..=8), rng.gen_range(2..=50)).unwrap();
        let s = risk_surface(&data, &grid, &costs, rng.gen_range(0.05..0.6)).map_err(|e| e.to_string())?;
        for m in 0..grid.m_count() {
            for q in 1..grid.q_count() {
                if s.misalignment_at(m, q) > s.misalignment_at(m, q - 1) {
                    return Err(format!("dataset {i}: misalignment rises from q={q} to q={}", q + 1));
                }
                if s.p_value_at(m, q - 1) < s.p_value_at(m, q) {
                    return Err(format!("dataset {i}: p-value falls as lambda decreases at q={q}"));
                }
            }
        }
    }
    Ok(format!(
        "{datasets} datasets: misalignment non-increasing in lambda, p-values non-decreasing as lambda decreases"
    ))
}

fn scalar_formulas() -> Check {
    let p = hoeffding_p_value(0.2, 0.3, 100);
    let e2 = (-2.0f64).exp();
    let at_alpha = hoeffding_p_value(0.3, 0.3, 100);
    let (c, u) = aggregate_prompt_scores(&[0.8, 0.6, 1.0]).map_err(|e| e.to_string())?;
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    let detail = format!("p(0.2)={p:e}, p(0.3)={at_alpha}, prompts=({c}, {u})");
    if rel(p, e2) <= 1e-12 && at_alpha == 1.0 && rel(c, 0.8) <= 1e-12 && rel(u, 0.04) <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn baseline_extremes() -> Check {
    let model = DiscreteScoreModel::teleqna_like();
    let mut cfg = config(vec![Method::HumanOnly, Method::EdgeOnly], 100);
    cfg.costs = reference_costs(10);
    let s = run_monte_carlo(&model, &cfg, 200, 7).map_err(|e| e.to_string())?;
    let human = s.method(Method::HumanOnly).unwrap();
    let edge = s.method(Method::EdgeOnly).unwrap();
    let detail = format!(
        "human-only violations {} cost {}, edge-only cost {} (K=10)",
        human.violation_rate, human.cost.mean, edge.cost.mean
    );
    if human.violation_rate == 0.0 && human.cost.mean == 10.0 && edge.cost.mean == 15.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn reproducibility() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str, workers: &str| -> Result<Vec<u8>, String> {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_cascade"))
            .args(["montecarlo", "--n", "100", "--trials", "60", "--seed", "11", "--grid", "5x100"])
            .args(["--workers", workers, "--out"])
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("montecarlo exited with {status}"));
        }
        std::fs::read(&out).map_err(|e| e.to_string())
    };
    let a = run("a.json", "2")?;
    let b = run("b.json", "2")?;
    let c = run("c.json", "1")?;
    let d = run("d.json", "4")?;
    let model = DiscreteScoreModel::teleqna_like();
    let cfg = config(Method::ALL.to_vec(), 50);
    let one = run_monte_carlo_with(&Scenario::Model(&model), &cfg, 40, 3, Some(1)).map_err(|e| e.to_string())?;
    let many = run_monte_carlo_with(&Scenario::Model(&model), &cfg, 40, 3, Some(8)).map_err(|e| e.to_string())?;
    let detail = format!("report of {} bytes; 1/2/4 cli workers and 1/8 library workers", a.len());
    if a == b && a == c && a == d && one == many {
        Ok(detail)
    } else {
        Err(format!("outputs differ: {detail}"))
    }
}

fn cost_profile_sweep() -> Check {
    let trials = 500;
    let delta = 0.05;
    let limit = delta + binomial_slack(delta, trials);
    let model = DiscreteScoreModel::teleqna_like();
    let profile = |l_cloud: f64, shift: f64| CostProfile {
        costs: CostModel::new(1.5, l_cloud, 10.0, 1).unwrap(),
        cloud_accuracy_shift: shift,
    };
    let axis = SweepAxis::CostProfile(vec![profile(7.0, 0.0), profile(4.0, 0.012)]);
    let table = sweep(&axis, &model, &config(vec![Method::MhtErm], 100), trials, 9, None)
        .map_err(|e| e.to_string())?;
    let stats: Vec<(f64, f64)> = table
        .rows
        .iter()
        .map(|r| (r.summary.methods[0].cost.mean, r.summary.methods[0].violation_rate))
        .collect();
    let (before, after) = (stats[0], stats[1]);
    let detail = format!(
        "cloud accuracy {:.3} -> {:.3}: mean cost {:.4} -> {:.4}, violation rate {:.3} / {:.3} (limit {limit:.4})",
        model.cloud_accuracy(),
        model.with_cloud_accuracy_shift(0.012).cloud_accuracy(),
        before.0,
        after.0,
        before.1,
        after.1
    );
    if after.0 <= before.0 && before.1 <= limit && after.1 <= limit {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("fwer guarantee", fwer_guarantee),
        ("c-erm fragility", c_erm_fragility),
        ("deterministic dominance", deterministic_dominance),
        ("reference equivalence", reference_equivalence),
        ("monotonicity", monotonicity),
        ("scalar formulas", scalar_formulas),
        ("baseline extremes", baseline_extremes),
        ("reproducibility", reproducibility),
        ("cost-profile sweep", cost_profile_sweep),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
