use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use sysrisk::adal::{residual_csv, run_adal, AdalConfig, AdalStatus, DistributedOracle};
use sysrisk::experiments::{compare_aggregation, compare_multivariate, ExperimentError, DEFAULT_KAPPA};
use sysrisk::risk::RiskSpec;
use sysrisk::two_stage::{
    format_selection, solve_two_stage, trace_csv, CentralizedOracle, OutcomeCache, SecondStageOracle, TraceRow,
    TwoStageError, TwoStageOptions,
};
use sysrisk::wireless::{assemble_second_stage, generate_instance, WirelessConfig, WirelessError, WirelessInstance};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Wireless(#[from] WirelessError),
    #[error(transparent)]
    TwoStage(#[from] TwoStageError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::NotConverged(_) => 3,
            CliError::TwoStage(TwoStageError::NotConverged { .. }) => 3,
            CliError::Experiment(ExperimentError::TwoStage(TwoStageError::NotConverged { .. })) => 3,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "sysrisk", version, about = "Systemic risk experiments on the wireless information-exchange model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario instance from a config file or preset.
    Generate(GenerateArgs),
    /// Solve the risk-averse two-stage problem on an instance.
    Solve(SolveArgs),
    /// Aggregate-first against evaluate-first risk, per tail level.
    CompareAggregation(CompareAggregationArgs),
    /// AVaR, MAVaR and scalarized VMAVaR at a fixed selection, per tail level.
    CompareMultivariate(CompareMultivariateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// JSON config file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in config: `desk` or `large`.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the config's seed; one is drawn and printed when neither is set.
    #[arg(long)]
    seed: Option<u64>,
    /// Instance JSON to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Centralized,
    Distributed,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Centralized => "centralized",
            Mode::Distributed => "distributed",
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "centralized")]
    mode: Mode,
    /// Residual tolerance of the distributed solver.
    #[arg(long)]
    residual_tol: Option<f64>,
    /// Sweep limit of the distributed solver, per scenario solve.
    #[arg(long)]
    max_sweeps: Option<usize>,
}

impl SolverArgs {
    fn adal_config(&self) -> AdalConfig {
        let mut c = AdalConfig::default();
        if let Some(t) = self.residual_tol {
            c.residual_tol = t;
        }
        if let Some(m) = self.max_sweeps {
            c.max_iter = m;
        }
        c
    }

    fn oracle(&self) -> Result<Box<dyn SecondStageOracle>, CliError> {
        Ok(match self.mode {
            Mode::Centralized => Box::new(CentralizedOracle::default()),
            Mode::Distributed => {
                let config = self.adal_config();
                config.resolve(1).map_err(|e| CliError::Usage(e.to_string()))?;
                Box::new(DistributedOracle::new(config, true))
            }
        })
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Risk measure: mean, avar:A, hor:A:ORDER, msd:ORDER:KAPPA, mix:KAPPA:A.
    #[arg(long, default_value = "avar:0.1")]
    risk: RiskSpec,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareAggregationArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Tail levels, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3")]
    alpha: Vec<f64>,
    /// Deviation weight of the evaluate-first measures.
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareMultivariateArgs {
    #[arg(long)]
    instance: PathBuf,
    /// `solution.json` written by `solve`; its selection is evaluated.
    #[arg(long, required_unless_present = "z", conflicts_with = "z")]
    solution: Option<PathBuf>,
    /// Selection as a 0/1 string, e.g. 1010.
    #[arg(long)]
    z: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3")]
    alpha: Vec<f64>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'static str,
    status: &'a str,
    seed: u64,
    config: &'a WirelessConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    risk: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alphas: Option<&'a [f64]>,
    files: Vec<&'a str>,
    created_unix: u64,
}

impl<'a> Manifest<'a> {
    fn new(command: &'a str, instance: &'a WirelessInstance) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            status: "ok",
            seed: instance.seed,
            config: &instance.config,
            risk: None,
            mode: None,
            alphas: None,
            files: Vec::new(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SolutionFile {
    z: Vec<bool>,
    selection: String,
    risk: String,
    mode: String,
    risk_value: f64,
    lower_bound: f64,
    iterations: usize,
    values: Vec<f64>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    write_file(path, &(text + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn out_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn check_alphas(alphas: &[f64]) -> Result<(), CliError> {
    match alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        Some(a) => Err(CliError::Usage(format!("tail level {a} must lie in (0, 1)"))),
        None => Ok(()),
    }
}

fn generate(args: GenerateArgs) -> Result<(), CliError> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), _) => read_json::<WirelessConfig>(path)?,
        (None, Some(name)) => WirelessConfig::preset(name).ok_or_else(|| CliError::Usage(format!("unknown preset '{name}'")))?,
        (None, None) => return Err(CliError::Usage("one of --config or --preset is required".into())),
    };
    let seed = match args.seed.or(config.seed) {
        Some(s) => s,
        None => {
            let s = rand::random::<u64>();
            println!("drew seed {s}");
            s
        }
    };
    config.seed = Some(seed);
    let instance = generate_instance(&config, seed)?;
    write_json(&args.out, &instance)?;
    println!(
        "seed {seed}: {} scenarios, {} robots, {} candidate points -> {}",
        instance.scenarios.len(),
        config.num_robots,
        config.num_candidates(),
        args.out.display()
    );
    Ok(())
}

fn load_instance(path: &Path) -> Result<WirelessInstance, CliError> {
    let instance: WirelessInstance = read_json(path)?;
    instance.config.validate()?;
    Ok(instance)
}

fn solve(args: SolveArgs) -> Result<(), CliError> {
    let instance = load_instance(&args.instance)?;
    let problem = instance.to_two_stage(args.risk)?;
    let oracle = args.solver.oracle()?;
    out_dir(&args.out)?;
    let risk = args.risk.to_string();
    let mut manifest = Manifest::new("solve", &instance);
    manifest.risk = Some(risk.clone());
    manifest.mode = Some(args.solver.mode.name());
    let write_partial = |trace: &[TraceRow], status: &str| -> Result<(), CliError> {
        write_file(&args.out.join("trace.csv"), &trace_csv(trace))?;
        let mut m = Manifest::new("solve", &instance);
        m.risk = Some(risk.clone());
        m.mode = Some(args.solver.mode.name());
        m.status = status;
        m.files = vec!["trace.csv"];
        write_json(&args.out.join("manifest.json"), &m)
    };
    let sol = match solve_two_stage(&problem, oracle.as_ref(), &TwoStageOptions::default()) {
        Ok(sol) => sol,
        Err(TwoStageError::NotConverged { scenario, detail, trace }) => {
            write_partial(&trace, "not_converged")?;
            return Err(CliError::NotConverged(format!(
                "distributed solve of scenario {scenario} did not converge ({detail}); partial trace written"
            )));
        }
        Err(TwoStageError::IterationLimit { cap, gap, trace }) => {
            write_partial(&trace, "iteration_limit")?;
            return Err(TwoStageError::IterationLimit { cap, gap, trace }.into());
        }
        Err(e) => return Err(e.into()),
    };
    let file = SolutionFile {
        selection: format_selection(&sol.z),
        z: sol.z.clone(),
        risk: risk.clone(),
        mode: args.solver.mode.name().into(),
        risk_value: sol.risk_value,
        lower_bound: sol.lower_bound,
        iterations: sol.trace.len(),
        values: sol.values.clone(),
    };
    write_json(&args.out.join("solution.json"), &file)?;
    write_file(&args.out.join("trace.csv"), &trace_csv(&sol.trace))?;
    manifest.files = vec!["solution.json", "trace.csv"];
    if args.solver.mode == Mode::Distributed {
        // residual trace of a cold start on the first scenario at the optimum
        let scenario = assemble_second_stage(&instance.scenarios[0], &instance.config, problem.scenarios[0].probability)?;
        let res = run_adal(&scenario, &args.solver.adal_config(), &sol.z)
            .map_err(|e| CliError::NotConverged(e.to_string()))?;
        write_file(&args.out.join("residuals.csv"), &residual_csv(&res.history))?;
        manifest.files.push("residuals.csv");
        if res.status != AdalStatus::Converged {
            manifest.status = "not_converged";
            write_json(&args.out.join("manifest.json"), &manifest)?;
            return Err(CliError::NotConverged("residual trace run did not converge".into()));
        }
    }
    write_json(&args.out.join("manifest.json"), &manifest)?;
    println!(
        "{} {}: z = {} risk = {:.9} ({} master iterations)",
        args.solver.mode.name(),
        risk,
        file.selection,
        sol.risk_value,
        sol.trace.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct AggregationRecord<'a> {
    alpha: f64,
    method: &'a str,
    z: String,
    risk_value: f64,
    mean_proportion: f64,
}

#[derive(Serialize)]
struct ProportionRecord<'a> {
    alpha: f64,
    method: &'a str,
    scenario: usize,
    proportion: f64,
}

fn compare_aggregation_cmd(args: CompareAggregationArgs) -> Result<(), CliError> {
    check_alphas(&args.alpha)?;
    if !(0.0..=1.0).contains(&args.kappa) {
        return Err(CliError::Usage(format!("kappa {} must lie in [0, 1]", args.kappa)));
    }
    let instance = load_instance(&args.instance)?;
    let oracle = args.solver.oracle()?;
    out_dir(&args.out)?;
    let rows = compare_aggregation(
        &instance,
        &args.alpha,
        args.kappa,
        oracle.as_ref(),
        &TwoStageOptions::default(),
        &OutcomeCache::new(),
    )?;
    let mut summary = csv::Writer::from_path(args.out.join("aggregation.csv"))?;
    let mut props = csv::Writer::from_path(args.out.join("proportions.csv"))?;
    for row in &rows {
        for m in std::iter::once(&row.aggregate_first).chain(&row.evaluate_first) {
            summary.serialize(AggregationRecord {
                alpha: row.alpha,
                method: &m.method,
                z: format_selection(&m.z),
                risk_value: m.risk_value,
                mean_proportion: m.mean_proportion(),
            })?;
            for (scenario, p) in m.proportions.iter().enumerate() {
                props.serialize(ProportionRecord {
                    alpha: row.alpha,
                    method: &m.method,
                    scenario,
                    proportion: *p,
                })?;
            }
            println!(
                "alpha {:<5} {:<20} z = {} risk = {:.9} mean proportion = {:.6}",
                row.alpha,
                m.method,
                format_selection(&m.z),
                m.risk_value,
                m.mean_proportion()
            );
        }
    }
    summary.flush().map_err(io_err(&args.out))?;
    props.flush().map_err(io_err(&args.out))?;
    let mut manifest = Manifest::new("compare-aggregation", &instance);
    manifest.mode = Some(args.solver.mode.name());
    manifest.alphas = Some(&args.alpha);
    manifest.files = vec!["aggregation.csv", "proportions.csv"];
    write_json(&args.out.join("manifest.json"), &manifest)
}

#[derive(Serialize)]
struct MultivariateRecord {
    alpha: f64,
    z: String,
    avar: f64,
    mavar: Option<f64>,
    vmavar: f64,
    mavar_event_probability: f64,
    /// Zero-probability conditioning event; `mavar` is empty.
    degenerate: bool,
    avar_smallest: bool,
}

fn parse_selection(s: &str, k0: usize) -> Result<Vec<bool>, CliError> {
    let z: Vec<bool> = s
        .chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(CliError::Usage(format!("selection '{s}' must be a 0/1 string"))),
        })
        .collect::<Result<_, _>>()?;
    if z.len() != k0 {
        return Err(CliError::Usage(format!("selection '{s}' must have {k0} digits")));
    }
    Ok(z)
}

fn compare_multivariate_cmd(args: CompareMultivariateArgs) -> Result<(), CliError> {
    check_alphas(&args.alpha)?;
    let instance = load_instance(&args.instance)?;
    let k0 = instance.config.num_candidates();
    let z = match (&args.solution, &args.z) {
        (Some(path), _) => {
            let sol: SolutionFile = read_json(path)?;
            parse_selection(&sol.selection, k0)?
        }
        (None, Some(s)) => parse_selection(s, k0)?,
        (None, None) => return Err(CliError::Usage("one of --solution or --z is required".into())),
    };
    let oracle = args.solver.oracle()?;
    out_dir(&args.out)?;
    let rows = compare_multivariate(&instance, &z, &args.alpha, oracle.as_ref(), &OutcomeCache::new())?;
    let mut w = csv::Writer::from_path(args.out.join("multivariate.csv"))?;
    for row in &rows {
        let avar_smallest = row.avar <= row.vmavar && row.mavar.is_none_or(|m| row.avar <= m);
        w.serialize(MultivariateRecord {
            alpha: row.alpha,
            z: format_selection(&z),
            avar: row.avar,
            mavar: row.mavar,
            vmavar: row.vmavar,
            mavar_event_probability: row.mavar_event_probability,
            degenerate: row.mavar.is_none(),
            avar_smallest,
        })?;
        let mavar = row.mavar.map_or("degenerate".to_string(), |m| format!("{m:.6}"));
        println!("alpha {:<5} AVaR {:.6} VMAVaR {:.6} MAVaR {mavar}", row.alpha, row.avar, row.vmavar);
        if !avar_smallest {
            eprintln!("warning: AVaR is not the smallest value at alpha {}", row.alpha);
        }
    }
    w.flush().map_err(io_err(&args.out))?;
    let mut manifest = Manifest::new("compare-multivariate", &instance);
    manifest.mode = Some(args.solver.mode.name());
    manifest.alphas = Some(&args.alpha);
    manifest.files = vec!["multivariate.csv"];
    write_json(&args.out.join("manifest.json"), &manifest)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::CompareAggregation(a) => compare_aggregation_cmd(a),
        Command::CompareMultivariate(a) => compare_multivariate_cmd(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
