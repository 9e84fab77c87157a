//! Score ingestion, aggregation of raw ensemble scores, run configuration
//! and report emission.
//!
//! # Record files
//!
//! Line-oriented JSONL or CSV with a header row. Field names are fixed and
//! case-sensitive; unknown fields are rejected.
//!
//! | schema          | fields |
//! |-----------------|--------|
//! | `aggregated`    | `u_edge`, `c_edge`, `u_cloud`, `c_cloud`, `edge_correct`, `cloud_correct` |
//! | `raw-black-box` | `edge_confidences`, `cloud_confidences` (K >= 2 self-confidences each), `edge_correct`, `cloud_correct` |
//! | `raw-white-box` | `edge_members`, `cloud_members` (>= 2 label distributions each), `edge_correct`, `cloud_correct` |
//!
//! In CSV, a confidence list is written `0.8;0.6;1.0` and an ensemble is
//! written `0.7;0.3|0.5;0.5` (members separated by `|`).

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationOutcome, Method, Policy};
use crate::cascade::{CascadeRecord, CostModel, ThresholdGrid, Thresholds, Tier};
use crate::error::{CascadeError, Result};
use crate::harness::{McConfig, McSummary, SweepTable};
use crate::oracle::{DiscreteScoreModel, RNG_NAME};

pub const TOOL_NAME: &str = "cascade-risk";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Version of the record and report schemas.
pub const SCHEMA_VERSION: u32 = 1;

const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Black-box scores from `K` prompt variants: the mean self-confidence and
/// its sample variance (divisor `K - 1`).
///
/// Returns `(confidence, uncertainty)`.
pub fn aggregate_prompt_scores(confidences: &[f64]) -> Result<(f64, f64)> {
    let k = confidences.len();
    if k < 2 {
        return Err(CascadeError::param("confidences", format!("need at least 2 prompts, got {k}")));
    }
    if let Some(&bad) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(CascadeError::OutOfRange { field: "confidence", value: bad });
    }
    let mean = confidences.iter().sum::<f64>() / k as f64;
    let var = confidences.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (k - 1) as f64;
    Ok((mean, var))
}

/// White-box scores from an ensemble of label distributions.
///
/// Confidence is the largest entry of the member-averaged distribution;
/// uncertainty is the mean over members of `(max_y p_w(y) - confidence)^2`.
pub fn aggregate_ensemble(members: &[Vec<f64>]) -> Result<(f64, f64)> {
    if members.len() < 2 {
        return Err(CascadeError::param(
            "members",
            format!("need at least 2 ensemble members, got {}", members.len()),
        ));
    }
    let labels = members[0].len();
    if labels == 0 {
        return Err(CascadeError::param("members", "empty label distribution"));
    }
    for (i, p) in members.iter().enumerate() {
        if p.len() != labels {
            return Err(CascadeError::param(
                "members",
                format!("member {i} has {} labels, expected {labels}", p.len()),
            ));
        }
        if p.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(CascadeError::param("members", format!("member {i} has a negative entry")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(CascadeError::param(
                "members",
                format!("member {i} sums to {total}, expected 1"),
            ));
        }
    }
    let count = members.len() as f64;
    let confidence = (0..labels)
        .map(|y| members.iter().map(|p| p[y]).sum::<f64>() / count)
        .fold(f64::NEG_INFINITY, f64::max);
    let uncertainty = members
        .iter()
        .map(|p| {
            let top = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (top - confidence) * (top - confidence)
        })
        .sum::<f64>()
        / count;
    Ok((confidence, uncertainty))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Jsonl,
    Csv,
}

impl RecordFormat {
    /// `.csv` means CSV, anything else JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => RecordFormat::Csv,
            _ => RecordFormat::Jsonl,
        }
    }
}

impl FromStr for RecordFormat {
    type Err = CascadeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(RecordFormat::Jsonl),
            "csv" => Ok(RecordFormat::Csv),
            _ => Err(CascadeError::param("format", format!("unknown record format '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordSchema {
    Aggregated,
    RawWhiteBox,
    RawBlackBox,
}

impl RecordSchema {
    pub fn name(self) -> &'static str {
        match self {
            RecordSchema::Aggregated => "aggregated",
            RecordSchema::RawWhiteBox => "raw-white-box",
            RecordSchema::RawBlackBox => "raw-black-box",
        }
    }
}

impl FromStr for RecordSchema {
    type Err = CascadeError;

    fn from_str(s: &str) -> Result<Self> {
        [RecordSchema::Aggregated, RecordSchema::RawWhiteBox, RecordSchema::RawBlackBox]
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| CascadeError::param("schema", format!("unknown record schema '{s}'")))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AggregatedRow {
    u_edge: f64,
    c_edge: f64,
    u_cloud: f64,
    c_cloud: f64,
    edge_correct: bool,
    cloud_correct: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BlackBoxJson {
    edge_confidences: Vec<f64>,
    cloud_confidences: Vec<f64>,
    edge_correct: bool,
    cloud_correct: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WhiteBoxJson {
    edge_members: Vec<Vec<f64>>,
    cloud_members: Vec<Vec<f64>>,
    edge_correct: bool,
    cloud_correct: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BlackBoxCsv {
    edge_confidences: String,
    cloud_confidences: String,
    edge_correct: bool,
    cloud_correct: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WhiteBoxCsv {
    edge_members: String,
    cloud_members: String,
    edge_correct: bool,
    cloud_correct: bool,
}

/// One raw record, before aggregation.
#[derive(Debug, Clone, PartialEq)]
pub enum RawScoreRecord {
    WhiteBox {
        edge_members: Vec<Vec<f64>>,
        cloud_members: Vec<Vec<f64>>,
        edge_correct: bool,
        cloud_correct: bool,
    },
    BlackBox {
        edge_confidences: Vec<f64>,
        cloud_confidences: Vec<f64>,
        edge_correct: bool,
        cloud_correct: bool,
    },
}

impl RawScoreRecord {
    pub fn aggregate(&self) -> Result<CascadeRecord> {
        let (edge, cloud, edge_correct, cloud_correct) = match self {
            RawScoreRecord::WhiteBox { edge_members, cloud_members, edge_correct, cloud_correct } => (
                aggregate_ensemble(edge_members)?,
                aggregate_ensemble(cloud_members)?,
                *edge_correct,
                *cloud_correct,
            ),
            RawScoreRecord::BlackBox { edge_confidences, cloud_confidences, edge_correct, cloud_correct } => (
                aggregate_prompt_scores(edge_confidences)?,
                aggregate_prompt_scores(cloud_confidences)?,
                *edge_correct,
                *cloud_correct,
            ),
        };
        CascadeRecord::new(edge.1, edge.0, cloud.1, cloud.0, edge_correct, cloud_correct)
    }
}

fn parse_list(field: &str, text: &str) -> std::result::Result<Vec<f64>, String> {
    text.split(';')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| format!("{field}: '{s}' is not a number ({e})"))
        })
        .collect()
}

fn parse_members(field: &str, text: &str) -> std::result::Result<Vec<Vec<f64>>, String> {
    text.split('|').map(|m| parse_list(field, m)).collect()
}

fn record_from_row(row: AggregatedRow) -> Result<CascadeRecord> {
    CascadeRecord::new(row.u_edge, row.c_edge, row.u_cloud, row.c_cloud, row.edge_correct, row.cloud_correct)
}

fn convert_json(line: &str, schema: RecordSchema) -> std::result::Result<CascadeRecord, String> {
    let result = match schema {
        RecordSchema::Aggregated => {
            let row: AggregatedRow = serde_json::from_str(line).map_err(|e| e.to_string())?;
            record_from_row(row)
        }
        RecordSchema::RawBlackBox => {
            let r: BlackBoxJson = serde_json::from_str(line).map_err(|e| e.to_string())?;
            RawScoreRecord::BlackBox {
                edge_confidences: r.edge_confidences,
                cloud_confidences: r.cloud_confidences,
                edge_correct: r.edge_correct,
                cloud_correct: r.cloud_correct,
            }
            .aggregate()
        }
        RecordSchema::RawWhiteBox => {
            let r: WhiteBoxJson = serde_json::from_str(line).map_err(|e| e.to_string())?;
            RawScoreRecord::WhiteBox {
                edge_members: r.edge_members,
                cloud_members: r.cloud_members,
                edge_correct: r.edge_correct,
                cloud_correct: r.cloud_correct,
            }
            .aggregate()
        }
    };
    result.map_err(|e| e.to_string())
}

fn convert_csv(
    row: &csv::StringRecord,
    headers: &csv::StringRecord,
    schema: RecordSchema,
) -> std::result::Result<CascadeRecord, String> {
    fn de<T: DeserializeOwned>(row: &csv::StringRecord, headers: &csv::StringRecord) -> std::result::Result<T, String> {
        row.deserialize(Some(headers)).map_err(|e| match e.kind() {
            csv::ErrorKind::Deserialize { err, .. } => match err.field() {
                Some(i) => format!("field {}: {}", headers.get(i as usize).unwrap_or("?"), err),
                None => err.to_string(),
            },
            _ => e.to_string(),
        })
    }
    let result = match schema {
        RecordSchema::Aggregated => record_from_row(de(row, headers)?),
        RecordSchema::RawBlackBox => {
            let r: BlackBoxCsv = de(row, headers)?;
            RawScoreRecord::BlackBox {
                edge_confidences: parse_list("edge_confidences", &r.edge_confidences)?,
                cloud_confidences: parse_list("cloud_confidences", &r.cloud_confidences)?,
                edge_correct: r.edge_correct,
                cloud_correct: r.cloud_correct,
            }
            .aggregate()
        }
        RecordSchema::RawWhiteBox => {
            let r: WhiteBoxCsv = de(row, headers)?;
            RawScoreRecord::WhiteBox {
                edge_members: parse_members("edge_members", &r.edge_members)?,
                cloud_members: parse_members("cloud_members", &r.cloud_members)?,
                edge_correct: r.edge_correct,
                cloud_correct: r.cloud_correct,
            }
            .aggregate()
        }
    };
    result.map_err(|e| e.to_string())
}

/// Parses records from a reader. `source` names the input in errors.
pub fn read_records<R: std::io::Read>(
    reader: R,
    source: &str,
    format: RecordFormat,
    schema: RecordSchema,
) -> Result<Vec<CascadeRecord>> {
    let parse_err = |line: usize, message: String| CascadeError::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut records = Vec::new();
    match format {
        RecordFormat::Jsonl => {
            for (i, line) in BufReader::new(reader).lines().enumerate() {
                let line = line.map_err(|e| CascadeError::io(source, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                records.push(convert_json(&line, schema).map_err(|m| parse_err(i + 1, m))?);
            }
        }
        RecordFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
            let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
            for row in rdr.records() {
                let row = row.map_err(|e| {
                    let line = e.position().map_or(0, |p| p.line() as usize);
                    parse_err(line, e.to_string())
                })?;
                let line = row.position().map_or(0, |p| p.line() as usize);
                records.push(convert_csv(&row, &headers, schema).map_err(|m| parse_err(line, m))?);
            }
        }
    }
    Ok(records)
}

pub fn parse_records(path: impl AsRef<Path>, format: RecordFormat, schema: RecordSchema) -> Result<Vec<CascadeRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CascadeError::io(path, e))?;
    read_records(file, &path.display().to_string(), format, schema)
}

/// Serializes aggregated records; the output parses back to the same
/// records.
pub fn write_records_to<W: Write>(mut out: W, records: &[CascadeRecord], format: RecordFormat) -> Result<()> {
    match format {
        RecordFormat::Jsonl => {
            for r in records {
                let line = serde_json::to_string(r).expect("record serializes");
                writeln!(out, "{line}").map_err(|e| CascadeError::io("<output>", e))?;
            }
        }
        RecordFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            if records.is_empty() {
                w.write_record(["u_edge", "c_edge", "u_cloud", "c_cloud", "edge_correct", "cloud_correct"])?;
            }
            for r in records {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| CascadeError::io("<output>", e))?;
        }
    }
    Ok(())
}

pub fn write_records(path: impl AsRef<Path>, records: &[CascadeRecord], format: RecordFormat) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_records_to(&mut buf, records, format)?;
    std::fs::write(path, buf).map_err(|e| CascadeError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub m: usize,
    pub q: usize,
}

impl From<ThresholdGrid> for GridDims {
    fn from(g: ThresholdGrid) -> Self {
        Self { m: g.m_count(), q: g.q_count() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskPair {
    pub misalignment: f64,
    pub cost: f64,
}

/// JSON report of one calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub tool: String,
    pub version: String,
    pub schema_version: u32,
    pub method: Method,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub grid: Option<GridDims>,
    pub costs: CostModel,
    pub n: usize,
    /// Selected threshold pair; `null` for single-tier baselines.
    pub selected: Option<Thresholds>,
    pub fixed_tier: Option<Tier>,
    pub fallback_used: bool,
    pub certified_count: usize,
    pub certified_set: Vec<Thresholds>,
    pub stop_indices: Vec<usize>,
    pub empirical: RiskPair,
    pub true_risks: Option<RiskPair>,
    pub seed: Option<u64>,
}

impl CalibrationReport {
    pub fn new(
        outcome: &CalibrationOutcome,
        dataset: &[CascadeRecord],
        costs: &CostModel,
        model: Option<&DiscreteScoreModel>,
        seed: Option<u64>,
    ) -> Self {
        let tally = outcome.selected.tally(dataset);
        let (selected, fixed_tier) = match outcome.selected {
            Policy::Thresholds(t) => (Some(t), None),
            Policy::Fixed(tier) => (None, Some(tier)),
        };
        Self {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            schema_version: SCHEMA_VERSION,
            method: outcome.method,
            alpha: outcome.alpha,
            delta: outcome.delta,
            grid: outcome.grid().map(GridDims::from),
            costs: *costs,
            n: dataset.len(),
            selected,
            fixed_tier,
            fallback_used: outcome.fallback_used,
            certified_count: outcome.certified.len(),
            certified_set: outcome.certified_set.clone(),
            stop_indices: outcome.stop_indices.clone(),
            empirical: RiskPair {
                misalignment: tally.mean_misalignment(),
                cost: tally.mean_cost(costs),
            },
            true_risks: model.map(|m| RiskPair {
                misalignment: m.policy_misalignment(&outcome.selected),
                cost: m.policy_cost(&outcome.selected, costs),
            }),
            seed,
        }
    }

    pub fn policy(&self) -> Result<Policy> {
        match (self.selected, self.fixed_tier) {
            (Some(t), None) => Ok(Policy::Thresholds(Thresholds::new(t.epsilon, t.lambda)?)),
            (None, Some(tier)) => Ok(Policy::Fixed(tier)),
            _ => Err(CascadeError::param(
                "result",
                "report must carry exactly one of 'selected' and 'fixed_tier'",
            )),
        }
    }
}

/// JSON report of a selected policy scored on held-out data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub tool: String,
    pub version: String,
    pub schema_version: u32,
    pub method: Method,
    pub alpha: Option<f64>,
    pub selected: Option<Thresholds>,
    pub fixed_tier: Option<Tier>,
    pub costs: CostModel,
    pub n_test: usize,
    pub tier_fractions: TierFractions,
    pub empirical: RiskPair,
    /// `empirical.misalignment > alpha`.
    pub empirical_violation: Option<bool>,
    pub true_risks: Option<RiskPair>,
    pub true_violation: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierFractions {
    pub edge: f64,
    pub cloud: f64,
    pub human: f64,
}

pub fn evaluate_report(
    report: &CalibrationReport,
    test: &[CascadeRecord],
    model: Option<&DiscreteScoreModel>,
) -> Result<EvaluationReport> {
    if test.is_empty() {
        return Err(CascadeError::EmptyDataset);
    }
    let policy = report.policy()?;
    let costs = report.costs;
    let tally = policy.tally(test);
    let n = test.len() as f64;
    let empirical = RiskPair {
        misalignment: tally.mean_misalignment(),
        cost: tally.mean_cost(&costs),
    };
    let true_risks = model.map(|m| RiskPair {
        misalignment: m.policy_misalignment(&policy),
        cost: m.policy_cost(&policy, &costs),
    });
    Ok(EvaluationReport {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        schema_version: SCHEMA_VERSION,
        method: report.method,
        alpha: report.alpha,
        selected: report.selected,
        fixed_tier: report.fixed_tier,
        costs,
        n_test: test.len(),
        tier_fractions: TierFractions {
            edge: tally.edge() as f64 / n,
            cloud: tally.cloud() as f64 / n,
            human: tally.human as f64 / n,
        },
        empirical,
        empirical_violation: report.alpha.map(|a| empirical.misalignment > a),
        true_violation: report.alpha.zip(true_risks).map(|(a, r)| r.misalignment > a),
        true_risks,
    })
}

/// Monte Carlo summary with provenance fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub tool: String,
    pub version: String,
    pub schema_version: u32,
    pub rng: String,
    #[serde(flatten)]
    pub summary: McSummary,
}

impl SummaryReport {
    pub fn new(summary: McSummary) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            schema_version: SCHEMA_VERSION,
            rng: RNG_NAME.into(),
            summary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub tool: String,
    pub version: String,
    pub schema_version: u32,
    pub rng: String,
    #[serde(flatten)]
    pub table: SweepTable,
}

impl SweepReport {
    pub fn new(table: SweepTable) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            schema_version: SCHEMA_VERSION,
            rng: RNG_NAME.into(),
            table,
        }
    }
}

/// Pretty-printed JSON with a trailing newline. Field order follows the
/// struct definitions, so identical values give identical bytes.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
    bytes.push(b'\n');
    bytes
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json_bytes(value)).map_err(|e| CascadeError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CascadeError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| CascadeError::Json { path: path.into(), source })
}

const SUMMARY_COLUMNS: [&str; 15] = [
    "method",
    "trials",
    "n",
    "alpha",
    "delta",
    "violations",
    "violation_rate",
    "mean_misalignment",
    "std_misalignment",
    "mean_cost",
    "std_cost",
    "misalignment_quantile",
    "misalignment_iqr_max",
    "cost_iqr_max",
    "fallback_rate",
];

fn summary_rows(summary: &McSummary) -> Vec<Vec<String>> {
    let c = &summary.config;
    summary
        .methods
        .iter()
        .map(|s| {
            vec![
                s.method.to_string(),
                s.trials.to_string(),
                c.n.to_string(),
                c.alpha.to_string(),
                c.delta.to_string(),
                s.violations.to_string(),
                s.violation_rate.to_string(),
                s.misalignment.mean.to_string(),
                s.misalignment.std.to_string(),
                s.cost.mean.to_string(),
                s.cost.std.to_string(),
                s.misalignment_quantile.to_string(),
                s.misalignment_iqr_max.to_string(),
                s.cost_iqr_max.to_string(),
                s.fallback_rate.to_string(),
            ]
        })
        .collect()
}

/// One row per method.
pub fn summary_csv(summary: &McSummary) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_COLUMNS)?;
    for row in summary_rows(summary) {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| CascadeError::io("<csv>", e.into_error()))
}

/// One row per (axis value, method), prefixed with `axis,value`.
pub fn sweep_csv(table: &SweepTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = ["axis", "value"].into_iter().chain(SUMMARY_COLUMNS).collect();
    w.write_record(header)?;
    for row in &table.rows {
        for cells in summary_rows(&row.summary) {
            let mut line = vec![table.axis.clone(), row.value.clone()];
            line.extend(cells);
            w.write_record(line)?;
        }
    }
    w.into_inner().map_err(|e| CascadeError::io("<csv>", e.into_error()))
}

pub fn write_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, bytes).map_err(|e| CascadeError::io(path, e))
}

/// Report formats accepted by `emit_report`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

/// Anything the CLI writes as a report.
pub enum Report<'a> {
    Calibration(&'a CalibrationReport),
    Evaluation(&'a EvaluationReport),
    Summary(&'a SummaryReport),
    Sweep(&'a SweepReport),
}

pub fn render_report(report: &Report<'_>, format: ReportFormat) -> Result<Vec<u8>> {
    match (report, format) {
        (Report::Calibration(r), ReportFormat::Json) => Ok(to_json_bytes(r)),
        (Report::Evaluation(r), ReportFormat::Json) => Ok(to_json_bytes(r)),
        (Report::Summary(r), ReportFormat::Json) => Ok(to_json_bytes(r)),
        (Report::Sweep(r), ReportFormat::Json) => Ok(to_json_bytes(r)),
        (Report::Summary(r), ReportFormat::Csv) => summary_csv(&r.summary),
        (Report::Sweep(r), ReportFormat::Csv) => sweep_csv(&r.table),
        (Report::Calibration(_) | Report::Evaluation(_), ReportFormat::Csv) => Err(CascadeError::param(
            "out",
            "calibration and evaluation reports are JSON only",
        )),
    }
}

pub fn emit_report(report: &Report<'_>, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    write_bytes(path, &render_report(report, format)?)
}

/// White-box (one call per scored query) or black-box (`K` prompt calls).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    White,
    Black,
}

/// Prompt count assumed for black-box mode when none is given.
pub const DEFAULT_PROMPT_CALLS: u32 = 10;

impl Mode {
    pub fn call_multiplier(self, calls: Option<u32>) -> u32 {
        match (self, calls) {
            (_, Some(k)) => k,
            (Mode::White, None) => 1,
            (Mode::Black, None) => DEFAULT_PROMPT_CALLS,
        }
    }
}

impl FromStr for Mode {
    type Err = CascadeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(Mode::White),
            "black" => Ok(Mode::Black),
            _ => Err(CascadeError::param("mode", format!("expected 'white' or 'black', got '{s}'"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::White => "white",
            Mode::Black => "black",
        })
    }
}

/// `MxQ`, e.g. `5x100`.
pub fn parse_grid(text: &str) -> Result<ThresholdGrid> {
    let bad = || CascadeError::param("grid", format!("expected MxQ, got '{text}'"));
    let (m, q) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    let m = m.trim().parse().map_err(|_| bad())?;
    let q = q.trim().parse().map_err(|_| bad())?;
    ThresholdGrid::new(m, q)
}

/// `edge,cloud,human` tier costs.
pub fn parse_costs(text: &str, call_multiplier: u32) -> Result<CostModel> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| CascadeError::param("costs", format!("expected edge,cloud,human, got '{text}'")))?;
    match parts.as_slice() {
        &[edge, cloud, human] => CostModel::new(edge, cloud, human, call_multiplier),
        _ => Err(CascadeError::param("costs", format!("expected 3 values, got {}", parts.len()))),
    }
}

/// Everything a calibration or Monte Carlo run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub delta: f64,
    pub grid: ThresholdGrid,
    pub costs: CostModel,
    pub mode: Mode,
    pub n: usize,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub data: Vec<PathBuf>,
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Checks the numeric settings, that input files exist and that the
    /// output path's directory exists.
    pub fn validate(&self) -> Result<()> {
        self.mc_config().validate()?;
        if self.trials == 0 {
            return Err(CascadeError::param("trials", "must be at least 1"));
        }
        for input in self.data.iter().chain(&self.model) {
            if !input.is_file() {
                return Err(CascadeError::io(
                    input,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                ));
            }
        }
        if let Some(parent) = self.out.as_deref().and_then(Path::parent) {
            if !parent.as_os_str().is_empty() && !parent.is_dir() {
                return Err(CascadeError::io(
                    parent,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "output directory not found"),
                ));
            }
        }
        Ok(())
    }

    pub fn mc_config(&self) -> McConfig {
        McConfig {
            methods: self.methods.clone(),
            n: self.n,
            alpha: self.alpha,
            delta: self.delta,
            grid: self.grid,
            costs: self.costs,
        }
    }
}
