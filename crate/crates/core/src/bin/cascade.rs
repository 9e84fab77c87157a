use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cascade_risk::calibration::{calibrate, Method};
use cascade_risk::cascade::{CostModel, ThresholdGrid};
use cascade_risk::error::{CascadeError, Result};
use cascade_risk::harness::{run_monte_carlo_with, sweep, CostProfile, McConfig, Scenario, SweepAxis, DEFAULT_TRIALS};
use cascade_risk::io::{
    emit_report, evaluate_report, parse_costs, parse_grid, parse_records, read_json, write_json, write_records,
    CalibrationReport, Mode, RecordFormat, Report, RunConfig, ReportFormat, SummaryReport, SweepReport,
};
use cascade_risk::oracle::{sample_dataset, DiscreteScoreModel};

/// Risk-controlled threshold calibration for edge/cloud/expert cascades.
#[derive(Parser)]
#[command(name = "cascade", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample aggregated score records from a synthetic model.
    Synth(SynthArgs),
    /// Select thresholds on a calibration file.
    Calibrate(CalibrateArgs),
    /// Score a calibration report's policy on held-out records.
    Evaluate(EvaluateArgs),
    /// Repeated calibration on fresh samples.
    Montecarlo(MonteCarloArgs),
    /// Monte Carlo summaries along one parameter axis.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ModelArg {
    /// Synthetic model JSON; defaults to the built-in QA-like model.
    #[arg(long)]
    model: Option<PathBuf>,
}

impl ModelArg {
    fn load(&self) -> Result<DiscreteScoreModel> {
        match &self.model {
            Some(path) => DiscreteScoreModel::load(path),
            None => Ok(DiscreteScoreModel::teleqna_like()),
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// `aggregated`, `raw-white-box` or `raw-black-box`.
    #[arg(long, default_value = "aggregated")]
    schema: String,
    /// `jsonl` or `csv`; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<String>,
}

impl DataArgs {
    fn read(&self, path: &Path) -> Result<Vec<cascade_risk::CascadeRecord>> {
        let format = match &self.format {
            Some(f) => f.parse()?,
            None => RecordFormat::from_path(path),
        };
        parse_records(path, format, self.schema.parse()?)
    }
}

#[derive(Args)]
struct RiskArgs {
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Threshold grid as MxQ.
    #[arg(long, default_value = "5x100")]
    grid: String,
    /// Tier costs as edge,cloud,human.
    #[arg(long, default_value = "1.5,7,10")]
    costs: String,
    /// `white` (one call per model query) or `black` (K prompt calls).
    #[arg(long, default_value = "white")]
    mode: String,
    /// Calls per model query; overrides the mode default.
    #[arg(long)]
    calls: Option<u32>,
}

impl RiskArgs {
    fn grid(&self) -> Result<ThresholdGrid> {
        parse_grid(&self.grid)
    }

    fn call_multiplier(&self) -> Result<u32> {
        Ok(self.mode.parse::<Mode>()?.call_multiplier(self.calls))
    }

    fn costs(&self) -> Result<CostModel> {
        let costs = parse_costs(&self.costs, self.call_multiplier()?)?;
        warn_unordered(&costs);
        Ok(costs)
    }
}

fn warn_unordered(costs: &CostModel) {
    if !costs.is_ordered() {
        eprintln!(
            "warning: costs {}/{}/{} are not ordered edge <= cloud <= human",
            costs.l_edge, costs.l_cloud, costs.l_human
        );
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (.jsonl or .csv).
    #[arg(long)]
    out: PathBuf,
    /// Also write the model as JSON.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    data_args: DataArgs,
    #[arg(long, default_value = "mht-erm")]
    method: String,
    #[command(flatten)]
    risk: RiskArgs,
    /// Model that generated the data, for exact risks in the report.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Seed recorded in the report.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Calibration report JSON.
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    data_args: DataArgs,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Comma-separated methods; all six by default.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[command(flatten)]
    risk: RiskArgs,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; the result does not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

impl McArgs {
    fn config(&self, data: Option<&PathBuf>, out: &Path) -> Result<McConfig> {
        let methods = match &self.methods {
            Some(list) => list.split(',').map(|m| m.trim().parse()).collect::<Result<Vec<Method>>>()?,
            None => Method::ALL.to_vec(),
        };
        let run = RunConfig {
            methods,
            alpha: self.risk.alpha,
            delta: self.risk.delta,
            grid: self.risk.grid()?,
            costs: self.risk.costs()?,
            mode: self.risk.mode.parse()?,
            n: self.n,
            trials: self.trials,
            base_seed: self.seed,
            data: data.into_iter().cloned().collect(),
            model: self.model.model.clone(),
            out: Some(out.to_path_buf()),
        };
        run.validate()?;
        Ok(run.mc_config())
    }
}

#[derive(Args)]
struct MonteCarloArgs {
    #[command(flatten)]
    mc: McArgs,
    /// Draw trials from this record pool instead of the model, scoring on
    /// a held-out split.
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    data_args: DataArgs,
    /// Held-out records per trial when `--data` is given.
    #[arg(long)]
    n_test: Option<usize>,
    /// Summary output (.json or .csv).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    mc: McArgs,
    /// `n`, `alpha`, `grid` or `costs`.
    #[arg(long)]
    axis: String,
    /// Comma-separated values; cost profiles are edge,cloud,human separated
    /// by ';'.
    #[arg(long)]
    values: String,
    /// Cloud accuracy shift per cost profile, comma-separated.
    #[arg(long)]
    cloud_shifts: Option<String>,
    /// Directory for sweep.json and sweep.csv.
    #[arg(long)]
    out: PathBuf,
}

fn parse_list<T: std::str::FromStr>(name: &'static str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CascadeError::param(name, format!("cannot parse '{s}'")))
        })
        .collect()
}

fn sweep_axis(args: &SweepArgs, call_multiplier: u32) -> Result<SweepAxis> {
    match args.axis.as_str() {
        "n" => Ok(SweepAxis::CalibrationSize(parse_list("values", &args.values)?)),
        "alpha" => Ok(SweepAxis::Alpha(parse_list("values", &args.values)?)),
        "grid" => Ok(SweepAxis::Grid(
            args.values.split(',').map(parse_grid).collect::<Result<_>>()?,
        )),
        "costs" => {
            let costs: Vec<CostModel> = args
                .values
                .split(';')
                .map(|c| parse_costs(c, call_multiplier))
                .collect::<Result<_>>()?;
            costs.iter().for_each(warn_unordered);
            let shifts: Vec<f64> = match &args.cloud_shifts {
                Some(s) => parse_list("cloud-shifts", s)?,
                None => vec![0.0; costs.len()],
            };
            if shifts.len() != costs.len() {
                return Err(CascadeError::param(
                    "cloud-shifts",
                    format!("{} shifts for {} cost profiles", shifts.len(), costs.len()),
                ));
            }
            Ok(SweepAxis::CostProfile(
                costs
                    .into_iter()
                    .zip(shifts)
                    .map(|(costs, cloud_accuracy_shift)| CostProfile { costs, cloud_accuracy_shift })
                    .collect(),
            ))
        }
        other => Err(CascadeError::param("axis", format!("unknown axis '{other}'"))),
    }
}

fn load_optional_model(path: &Option<PathBuf>) -> Result<Option<DiscreteScoreModel>> {
    path.as_ref().map(DiscreteScoreModel::load).transpose()
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(args) => {
            let model = args.model.load()?;
            let records = sample_dataset(&model, args.n, args.seed)?;
            write_records(&args.out, &records, RecordFormat::from_path(&args.out))?;
            if let Some(path) = &args.model_out {
                std::fs::write(path, model.to_json() + "\n").map_err(|e| CascadeError::io(path, e))?;
            }
        }
        Command::Calibrate(args) => {
            let method: Method = args.method.parse()?;
            let grid = args.risk.grid()?;
            let costs = args.risk.costs()?;
            let model = load_optional_model(&args.model)?;
            let data = args.data_args.read(&args.data)?;
            let outcome = calibrate(method, &data, &grid, args.risk.alpha, args.risk.delta, &costs)?;
            let report = CalibrationReport::new(&outcome, &data, &costs, model.as_ref(), args.seed);
            write_json(&args.out, &report)?;
        }
        Command::Evaluate(args) => {
            let report: CalibrationReport = read_json(&args.result)?;
            let model = load_optional_model(&args.model)?;
            let data = args.data_args.read(&args.data)?;
            let evaluation = evaluate_report(&report, &data, model.as_ref())?;
            write_json(&args.out, &evaluation)?;
        }
        Command::Montecarlo(args) => {
            let config = args.mc.config(args.data.as_ref(), &args.out)?;
            let model;
            let pool;
            let scenario = match &args.data {
                Some(path) => {
                    pool = args.data_args.read(path)?;
                    let n_test = args
                        .n_test
                        .ok_or_else(|| CascadeError::param("n-test", "required with --data"))?;
                    Scenario::Pool { records: &pool, n_test }
                }
                None => {
                    model = args.mc.model.load()?;
                    Scenario::Model(&model)
                }
            };
            let summary = run_monte_carlo_with(&scenario, &config, args.mc.trials, args.mc.seed, args.mc.workers)?;
            let report = SummaryReport::new(summary);
            emit_report(&Report::Summary(&report), &args.out, ReportFormat::from_path(&args.out))?;
        }
        Command::Sweep(args) => {
            let config = args.mc.config(None, &args.out)?;
            let axis = sweep_axis(&args, config.costs.call_multiplier)?;
            let model = args.mc.model.load()?;
            let table = sweep(&axis, &model, &config, args.mc.trials, args.mc.seed, args.mc.workers)?;
            std::fs::create_dir_all(&args.out).map_err(|e| CascadeError::io(&args.out, e))?;
            let report = SweepReport::new(table);
            emit_report(&Report::Sweep(&report), args.out.join("sweep.json"), ReportFormat::Json)?;
            emit_report(&Report::Sweep(&report), args.out.join("sweep.csv"), ReportFormat::Csv)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
