use std::path::Path;
use std::process::{Command, Output};

use cascade_risk::io::{
    aggregate_ensemble, aggregate_prompt_scores, parse_records, CalibrationReport, EvaluationReport, RecordFormat,
    RecordSchema,
};
use cascade_risk::CascadeRecord;

fn cascade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascade")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_calibrate_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cal = dir.path().join("cal.jsonl");
    let test = dir.path().join("test.csv");
    let model = dir.path().join("model.json");
    let report = dir.path().join("report.json");
    let eval = dir.path().join("eval.json");

    let out = cascade(&["synth", "--n", "200", "--seed", "1", "--out", path(&cal), "--model-out", path(&model)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(cascade(&["synth", "--n", "1000", "--seed", "2", "--out", path(&test)]).status.success());
    assert_eq!(parse_records(&cal, RecordFormat::Jsonl, RecordSchema::Aggregated).unwrap().len(), 200);

    let out = cascade(&[
        "calibrate", "--data", path(&cal), "--method", "mht-erm", "--alpha", "0.3", "--delta", "0.05",
        "--grid", "5x100", "--costs", "1.5,7,10", "--model", path(&model), "--seed", "1", "--out", path(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: CalibrationReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.n, 200);
    assert_eq!(r.costs.call_multiplier, 1);
    assert!(r.selected.is_some());
    assert!(r.true_risks.unwrap().misalignment <= 0.3);

    let out = cascade(&["evaluate", "--result", path(&report), "--data", path(&test), "--out", path(&eval)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let e: EvaluationReport = serde_json::from_str(&std::fs::read_to_string(&eval).unwrap()).unwrap();
    assert_eq!(e.n_test, 1000);
    assert_eq!(e.selected, r.selected);
    let f = e.tier_fractions;
    assert!((f.edge + f.cloud + f.human - 1.0).abs() < 1e-12);
}

#[test]
fn black_box_mode_multiplies_model_calls() {
    let dir = tempfile::tempdir().unwrap();
    let cal = dir.path().join("cal.jsonl");
    let report = dir.path().join("r.json");
    assert!(cascade(&["synth", "--n", "50", "--out", path(&cal)]).status.success());
    let run = |extra: &[&str]| {
        let mut args = vec!["calibrate", "--data", path(&cal), "--method", "edge-only", "--out", path(&report)];
        args.extend_from_slice(extra);
        assert!(cascade(&args).status.success());
        let r: CalibrationReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
        r
    };
    let r = run(&["--mode", "black"]);
    assert_eq!(r.costs.call_multiplier, 10);
    assert_eq!(r.empirical.cost, 15.0);
    assert_eq!(r.fixed_tier, Some(cascade_risk::Tier::Edge));
    assert_eq!(run(&["--mode", "black", "--calls", "4"]).empirical.cost, 6.0);
    assert_eq!(run(&["--mode", "white"]).empirical.cost, 1.5);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_file = dir.path().join("o.json");
    let out = path(&out_file);

    assert_eq!(cascade(&["--help"]).status.code(), Some(0));
    assert_eq!(cascade(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cascade(&["montecarlo", "--out", out, "--alpha", "1.5", "--trials", "2"]).status.code(), Some(1));
    assert_eq!(cascade(&["montecarlo", "--out", out, "--grid", "1x5", "--trials", "2"]).status.code(), Some(1));
    assert_eq!(cascade(&["montecarlo", "--out", out, "--methods", "best", "--trials", "2"]).status.code(), Some(1));

    let missing = dir.path().join("nope.jsonl");
    let out = cascade(&["calibrate", "--data", path(&missing), "--out", path(&out_file)]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        "{\"u_edge\":0.1,\"c_edge\":0.9,\"u_cloud\":0.1,\"c_cloud\":0.9,\"edge_correct\":true,\"cloud_correct\":true}\n\
         {\"u_edge\":0.1,\"c_edge\":0.9,\"u_cloud\":0.1,\"c_cloud\":0.9,\"edge_correct\":true}\n",
    )
    .unwrap();
    let out = cascade(&["calibrate", "--data", path(&bad), "--out", path(&out_file)]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(":2:") && stderr.contains("cloud_correct"), "{stderr}");
}

#[test]
fn unordered_costs_warn_but_run() {
    let dir = tempfile::tempdir().unwrap();
    let out_file = dir.path().join("s.json");
    let out = cascade(&[
        "montecarlo", "--costs", "8,7,10", "--trials", "3", "--n", "30", "--grid", "3x10", "--out", path(&out_file),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn montecarlo_csv_and_sweep_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let out = cascade(&[
        "montecarlo", "--methods", "mht-erm,c-erm", "--trials", "5", "--n", "50", "--grid", "3x20", "--out", path(&csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("method,trials,n,alpha,delta,violations,violation_rate"));
    assert!(lines[1].starts_with("mht-erm,5,50,"));

    let sweep_dir = dir.path().join("sweep");
    let out = cascade(&[
        "sweep", "--axis", "costs", "--values", "1.5,7,10;1.5,4,10", "--cloud-shifts", "0,0.012",
        "--methods", "mht-erm", "--trials", "4", "--n", "40", "--grid", "3x20", "--out", path(&sweep_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(sweep_dir.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("axis,value,method"));
    assert!(rows[1].starts_with("costs,1.5/7/10,mht-erm"));
    assert!(rows[2].starts_with("costs,1.5/4/10,mht-erm"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sweep_dir.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(json["axis"], "costs");
    assert_eq!(json["rows"].as_array().unwrap().len(), 2);

    let out = cascade(&[
        "sweep", "--axis", "costs", "--values", "1.5,7,10", "--cloud-shifts", "0,0.01", "--out", path(&sweep_dir),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn raw_files_aggregate_like_the_helpers() {
    let dir = tempfile::tempdir().unwrap();
    let black = dir.path().join("black.jsonl");
    std::fs::write(
        &black,
        "{\"edge_confidences\":[0.8,0.6,1.0],\"cloud_confidences\":[0.5,0.5],\"edge_correct\":true,\"cloud_correct\":false}\n",
    )
    .unwrap();
    let recs = parse_records(&black, RecordFormat::Jsonl, RecordSchema::RawBlackBox).unwrap();
    let (ce, ue) = aggregate_prompt_scores(&[0.8, 0.6, 1.0]).unwrap();
    assert_eq!(recs, vec![CascadeRecord::new(ue, ce, 0.0, 0.5, true, false).unwrap()]);

    let white = dir.path().join("white.csv");
    std::fs::write(
        &white,
        "edge_members,cloud_members,edge_correct,cloud_correct\n0.7;0.3|0.5;0.5,1;0|1;0,true,true\n",
    )
    .unwrap();
    let recs = parse_records(&white, RecordFormat::Csv, RecordSchema::RawWhiteBox).unwrap();
    let (ce, ue) = aggregate_ensemble(&[vec![0.7, 0.3], vec![0.5, 0.5]]).unwrap();
    assert_eq!(recs, vec![CascadeRecord::new(ue, ce, 0.0, 1.0, true, true).unwrap()]);

    let report = dir.path().join("r.json");
    let out = cascade(&[
        "calibrate", "--data", path(&white), "--schema", "raw-white-box", "--method", "c-erm", "--out", path(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
