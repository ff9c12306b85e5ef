use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hyfil::charts::chart_diagnostics;
use hyfil::filippov::check_transversality;
use hyfil::integrate::Method;
use hyfil::model::{validate_system, ControlSignal, ValidationConfig};
use hyfil::output::{report_json, trajectory_json, write_trajectory_csv};
use hyfil::relaxation::TransitionKind;
use hyfil::scenario_file::{load_scenario_file, SimulationDoc};
use hyfil::scenarios::{build_scenario, list_scenarios, Scenario};
use hyfil::sim::{simulate_execution, simulate_filippov, simulate_relaxed, BranchPolicy, SimConfig};
use hyfil::sweep::{run_sweep, Reference, SweepSpec};
use hyfil::{Error, SCHEMA_VERSION};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_USAGE: u8 = 4;

#[derive(Parser)]
#[command(name = "hyfil", version, about = "Hybrid Filippov solutions and their smooth relaxations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Audit the standing assumptions of a scenario.
    Validate {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sample the guards and report transversality margins.
    CheckTransversality {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Simulate one trajectory.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        sim: SimFlags,
        #[arg(long, value_enum, default_value_t = Engine::Filippov)]
        engine: Engine,
        #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
        format: OutFormat,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run an ε-convergence sweep.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        sim: SimFlags,
        /// Comma-separated, strictly decreasing.
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
        #[arg(long, default_value = "filippov")]
        reference: String,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// List the built-in scenarios and their parameters.
    ListScenarios,
    /// Dump chart data and sampled round-trip errors.
    DumpCharts {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Source {
    /// Built-in scenario name or path to a scenario JSON file.
    #[arg(long)]
    scenario: String,
    /// Scenario parameter `key=value`; repeatable.
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, f64)>,
}

#[derive(Args)]
struct SimFlags {
    #[arg(long)]
    eps: Option<f64>,
    /// Horizon override.
    #[arg(long = "t")]
    horizon: Option<f64>,
    /// `smooth-exp`, `poly-c2` or `poly-c4`.
    #[arg(long)]
    transition: Option<String>,
    /// `rk45` or `be`.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
    #[arg(long)]
    max_step: Option<f64>,
    /// `fail`, `prefer-f1` or `prefer-f2`.
    #[arg(long)]
    branch_policy: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Engine {
    Filippov,
    Relaxed,
    Execution,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Validation(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Validation(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_)
            | Error::Io(_)
            | Error::UnknownMode(_)
            | Error::UnknownEdge(_)
            | Error::NonPositiveEpsilon(_)
            | Error::OutsideHorizon { .. } => Failure::Usage(msg),
            Error::Structural(_)
            | Error::DimensionMismatch { .. }
            | Error::DegenerateNormal(_)
            | Error::Transversality { .. } => Failure::Validation(msg),
            _ => Failure::Numerical(msg),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn parse_param(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("parameter `{k}` needs a number, got `{v}`"))?;
    Ok((k.trim().to_string(), v))
}

/// A scenario plus the simulation settings carried by its file, if any.
fn load(source: &Source) -> CliResult<(Scenario, SimulationDoc)> {
    let path = Path::new(&source.scenario);
    if source.scenario.ends_with(".json") || path.is_file() {
        if !source.params.is_empty() {
            return Err(Failure::Usage("--param applies only to built-in scenarios".into()));
        }
        let loaded = load_scenario_file(path)?;
        return Ok((loaded.scenario, loaded.simulation));
    }
    let params: BTreeMap<String, f64> = source.params.iter().cloned().collect();
    Ok((build_scenario(&source.scenario, &params)?, SimulationDoc::default()))
}

fn parsed<T>(value: Option<&String>, what: &str, parse: impl Fn(&str) -> Option<T>) -> CliResult<Option<T>> {
    value
        .map(|s| parse(s).ok_or_else(|| Failure::Usage(format!("unknown {what} `{s}`"))))
        .transpose()
}

/// Flags over file settings over defaults. Returns the config and ε.
fn sim_config(flags: &SimFlags, doc: &SimulationDoc) -> CliResult<(SimConfig, Option<f64>)> {
    let mut cfg = SimConfig::default();
    let pick = |flag: Option<f64>, file: Option<f64>| flag.or(file);
    if let Some(m) = parsed(flags.method.as_ref().or(doc.method.as_ref()), "method", Method::parse)? {
        cfg.integrator.method = m;
    }
    if let Some(t) = parsed(flags.transition.as_ref().or(doc.transition.as_ref()), "transition", TransitionKind::parse)? {
        cfg.transition = t;
    }
    if let Some(b) = parsed(flags.branch_policy.as_ref().or(doc.branch_policy.as_ref()), "branch policy", BranchPolicy::parse)? {
        cfg.branch_policy = b;
    }
    if let Some(v) = pick(flags.rtol, doc.rel_tol) {
        cfg.integrator.rel_tol = v;
    }
    if let Some(v) = pick(flags.atol, doc.abs_tol) {
        cfg.integrator.abs_tol = v;
    }
    if let Some(v) = pick(flags.max_step, doc.max_step) {
        cfg.integrator.max_step = v;
    }
    cfg.integrator.validate()?;
    Ok((cfg, pick(flags.eps, doc.epsilon)))
}

fn apply_horizon(s: &mut Scenario, horizon: Option<f64>) -> CliResult<()> {
    let Some(t) = horizon else { return Ok(()) };
    if !(t > 0.0) || !t.is_finite() {
        return Err(Failure::Usage(format!("horizon must be positive, got {t}")));
    }
    if s.system.input_dim() == 0 {
        s.default_u = ControlSignal::none(t);
    } else if t > s.default_u.horizon() {
        return Err(Failure::Usage(format!("the control is defined only up to t = {}", s.default_u.horizon())));
    }
    s.default_t = t;
    Ok(())
}

fn emit(text: &str, output: Option<&Path>) -> CliResult<()> {
    let res = match output {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| e.to_string()),
    };
    res.map_err(Failure::Usage)
}

fn emit_json(value: &impl serde::Serialize, output: Option<&Path>) -> CliResult<()> {
    let mut text = report_json(value)?;
    text.push('\n');
    emit(&text, output)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Validate { source, samples, output } => {
            let (s, _) = load(&source)?;
            let report = validate_system(&s.system, &ValidationConfig { samples, ..Default::default() })?;
            emit_json(&report, output.as_deref())?;
            let allowed: Vec<&str> = s.expected_violations.iter().map(String::as_str).collect();
            let bad = report.unexpected_violations(&allowed);
            if !bad.is_empty() {
                let keys: Vec<String> = bad.iter().map(|e| format!("{} ({})", e.assumption, e.subject)).collect();
                return Err(Failure::Validation(format!("violated: {}", keys.join(", "))));
            }
            Ok(())
        }
        Command::CheckTransversality { source, samples, output } => {
            let (s, _) = load(&source)?;
            let report = check_transversality(&s.system, &ValidationConfig { samples, ..Default::default() });
            emit_json(&report, output.as_deref())?;
            if !report.satisfied {
                return Err(Failure::Validation("transversality is violated on at least one edge".into()));
            }
            Ok(())
        }
        Command::Simulate { source, sim, engine, format, output } => {
            let (mut s, doc) = load(&source)?;
            apply_horizon(&mut s, sim.horizon)?;
            let (cfg, eps) = sim_config(&sim, &doc)?;
            let (h, x0, u, t) = (&s.system, &s.default_x0, &s.default_u, s.default_t);
            let traj = match engine {
                Engine::Filippov => simulate_filippov(h, x0, u, t, &cfg)?,
                Engine::Execution => simulate_execution(h, x0, u, t, &cfg)?,
                Engine::Relaxed => {
                    let eps = eps.ok_or_else(|| Failure::Usage("the relaxed engine needs --eps".into()))?;
                    simulate_relaxed(h, x0, u, t, eps, &cfg)?
                }
            };
            let text = match format {
                OutFormat::Csv => {
                    let mut buf = Vec::new();
                    write_trajectory_csv(&mut buf, &traj, h.dim)?;
                    String::from_utf8(buf).expect("csv is ascii")
                }
                OutFormat::Json => trajectory_json(&traj)? + "\n",
            };
            emit(&text, output.as_deref())
        }
        Command::Sweep { source, sim, epsilons, reference, samples, output } => {
            let (mut s, doc) = load(&source)?;
            apply_horizon(&mut s, sim.horizon)?;
            if sim.eps.is_some() {
                return Err(Failure::Usage("sweep takes --epsilons, not --eps".into()));
            }
            let (cfg, _) = sim_config(&sim, &doc)?;
            let reference = Reference::parse(&reference)
                .ok_or_else(|| Failure::Usage(format!("unknown reference `{reference}`")))?;
            let mut spec = SweepSpec { reference, sample_count: samples, ..Default::default() };
            if let Some(e) = epsilons {
                spec.epsilons = e;
            }
            let report = run_sweep(&s, &spec, &cfg)?;
            if let Some(n) = &report.notice {
                eprintln!("notice: {n}");
            }
            emit_json(&report, output.as_deref())
        }
        Command::ListScenarios => {
            let doc = serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "scenarios": list_scenarios(),
            });
            emit_json(&doc, None)
        }
        Command::DumpCharts { source, samples, seed, output } => {
            let (s, _) = load(&source)?;
            let charts = chart_diagnostics(&s.system, samples, seed)?;
            let doc = serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "scenario": s.name,
                "edges": charts,
            });
            emit_json(&doc, output.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
