//! Command-line front end.
//!
//! Exit codes: 0 success, 1 model or validation error, 2 unschedulable result
//! of `analyze --strict`, 3 simulated delay above an analytic bound, 64 usage
//! error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{analyze, AnalysisMode, AnalysisOptions, SCHEMA_VERSION};
use crate::config::{PreemptionConfig, Scheme};
use crate::error::{Error, Result};
use crate::network::{flows_from_json, flows_to_json, network_from_json, route_all, validate_flows, Flow, Network, Routes};
use crate::priority::{assign_priorities, Method};
use crate::sim::{cross_validate, simulate, CrossValidation, PhasePolicy, SimConfig};
use crate::synthesis::{assign_preemption_class, best_config_at, SynthesisOptions};
use crate::time::{parse_decimal, Duration};
use crate::workload::{generate_flows, WorkloadParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MODEL: i32 = 1;
pub const EXIT_UNSCHEDULABLE: i32 = 2;
pub const EXIT_UNSAFE: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "tsnkit", version, about = "WCTT analysis and preemption-class synthesis for TSN with frame preemption")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bound every flow's traversal time.
    Analyze {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        /// Exit with 2 if any flow misses its deadline.
        #[arg(long)]
        strict: bool,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[command(flatten)]
        output: Output,
    },
    /// Find the fewest preemption classes that make the flow set schedulable.
    Synthesize {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[command(flatten)]
        output: Output,
    },
    /// Assign priorities by k-means clustering or deadline-monotonic binning.
    Prioritize {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = MethodArg::Kmeans)]
        method: MethodArg,
        /// Use this many groups instead of sweeping 1..=8.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        analysis: AnalysisArgs,
        /// Also write the flow file with the chosen priorities.
        #[arg(long)]
        flows_out: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Run the discrete-event simulation once.
    Simulate {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[command(flatten)]
        sim: SimArgs,
        /// Per-switch processing delay in microseconds.
        #[arg(long, default_value = "0")]
        switch_delay_us: String,
        /// Write the event trace as newline-delimited JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Compare simulated maxima with the analytic bounds over several runs.
    Validate {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value_t = 1)]
        runs: u64,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[command(flatten)]
        output: Output,
    },
    /// Generate a random flow set for a network.
    Generate {
        network: PathBuf,
        #[arg(long, default_value_t = 10)]
        flows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        period_min: i64,
        #[arg(long, default_value_t = 100_000)]
        period_max: i64,
        #[arg(long, default_value_t = 500)]
        deadline_min: i64,
        #[arg(long, default_value_t = 100_000)]
        deadline_max: i64,
        #[arg(long, default_value_t = 64)]
        size_min: u32,
        #[arg(long, default_value_t = 1500)]
        size_max: u32,
        /// Keep every deadline at or below its period.
        #[arg(long)]
        constrained: bool,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Debug, Args)]
struct Input {
    network: PathBuf,
    flows: PathBuf,
}

#[derive(Debug, Args)]
struct Output {
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SchemeArgs {
    /// Use the best configuration with this many preemptable levels.
    #[arg(long, conflicts_with_all = ["config_file", "scheme"])]
    levels: Option<usize>,
    /// JSON file holding `{"level": m, "entries": [..]}`.
    #[arg(long, conflicts_with = "scheme")]
    config_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
}

#[derive(Debug, Args)]
struct AnalysisArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Sound)]
    mode: ModeArg,
    /// Per-switch processing delay in microseconds.
    #[arg(long, default_value = "0")]
    switch_delay_us: String,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to 100 times the largest period.
    #[arg(long)]
    horizon_us: Option<String>,
    /// Release every flow at time zero.
    #[arg(long)]
    critical_instant: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Kmeans,
    Dmpo,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Sound,
    Literal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    NonPreemptive,
    FullyPreemptive,
    FromFlows,
}

enum Failure {
    Model(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Model(e)
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Reports go to stdout or `--out`, diagnostics to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match execute(cli.command) {
        Ok(code) => code,
        Err(Failure::Model(e)) => {
            eprintln!("error: {e}");
            EXIT_MODEL
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("TSNKIT_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // Fails only if the pool already exists, as in repeated in-process runs.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn execute(command: Command) -> Result<i32, Failure> {
    match command {
        Command::Analyze { input, scheme, analysis, strict, format, output } => {
            let (network, flows, routes) = load(&input)?;
            let opts = analysis_options(&analysis)?;
            let config = resolve_scheme(&scheme, &network, &flows, &routes, &opts)?;
            let report = analyze(&network, &flows, &routes, &config, &opts)?;
            let text = match format {
                Format::Json => report.to_json(),
                Format::Csv => report.to_csv(),
            };
            emit(&output, &text)?;
            Ok(if strict && !report.schedulable { EXIT_UNSCHEDULABLE } else { EXIT_OK })
        }
        Command::Synthesize { input, analysis, output } => {
            let (network, flows, routes) = load(&input)?;
            let opts = SynthesisOptions { analysis: analysis_options(&analysis)?, parallel: true };
            let result = assign_preemption_class(&network, &flows, &routes, &opts)?;
            emit(&output, &to_json(&result))?;
            Ok(EXIT_OK)
        }
        Command::Prioritize { input, method, k, seed, analysis, flows_out, output } => {
            let network = network_from_json(&read(&input.network)?)?;
            let flows = flows_from_json(&read(&input.flows)?)?;
            validate_flows(&network, &flows)?;
            let routes = route_all(&network, &flows)?;
            let method = match method {
                MethodArg::Kmeans => Method::Kmeans,
                MethodArg::Dmpo => Method::Dmpo,
            };
            let opts = analysis_options(&analysis)?;
            let result = assign_priorities(method, &network, &flows, &routes, seed, k, &opts)
                .map_err(|e| match e {
                    Error::Domain(m) if k.is_some() => Failure::Usage(m),
                    e => Failure::Model(e),
                })?;
            if let Some(path) = flows_out {
                write_file(&path, &flows_to_json(&result.assigned))?;
            }
            emit(&output, &to_json(&result))?;
            Ok(EXIT_OK)
        }
        Command::Simulate { input, scheme, sim, switch_delay_us, trace, output } => {
            let (network, flows, routes) = load(&input)?;
            let delay = micros(&switch_delay_us, "--switch-delay-us")?;
            let mut cfg = sim_config(&sim, &flows, delay)?;
            cfg.trace = trace.is_some();
            let opts = AnalysisOptions { switch_delay: cfg.switch_delay, ..AnalysisOptions::default() };
            let config = resolve_scheme(&scheme, &network, &flows, &routes, &opts)?;
            let report = simulate(&network, &flows, &routes, &config, &cfg)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(path) = trace {
                let mut file = std::io::BufWriter::new(fs::File::create(&path).map_err(Error::from)?);
                report.write_trace(&mut file)?;
                file.flush().map_err(Error::from)?;
            }
            emit(&output, &report.to_json())?;
            Ok(EXIT_OK)
        }
        Command::Validate { input, scheme, sim, runs, analysis, output } => {
            let (network, flows, routes) = load(&input)?;
            if runs == 0 {
                return Err(Failure::Usage("--runs must be at least 1".into()));
            }
            let mut opts = analysis_options(&analysis)?;
            opts.abort_on_deadline = false;
            let base = sim_config(&sim, &flows, opts.switch_delay)?;
            let config = resolve_scheme(&scheme, &network, &flows, &routes, &opts)?;
            let results: Vec<CrossValidation> = (0..runs)
                .into_par_iter()
                .map(|i| {
                    let cfg = SimConfig { seed: sim.seed.wrapping_add(i), ..base.clone() };
                    cross_validate(&network, &flows, &routes, &config, &cfg, &opts)
                })
                .collect::<Result<_>>()?;
            let violations = results.iter().map(|r| r.violations.len()).sum::<usize>();
            let summary = ValidationSummary { schema_version: SCHEMA_VERSION, config, violations, safe: violations == 0, runs: results };
            emit(&output, &to_json(&summary))?;
            Ok(if summary.safe { EXIT_OK } else { EXIT_UNSAFE })
        }
        Command::Generate {
            network,
            flows,
            seed,
            period_min,
            period_max,
            deadline_min,
            deadline_max,
            size_min,
            size_max,
            constrained,
            output,
        } => {
            let network = network_from_json(&read(&network)?)?;
            if flows == 0 {
                return Err(Failure::Usage("--flows must be at least 1".into()));
            }
            let params = WorkloadParams {
                flows,
                period_us: (period_min, period_max),
                deadline_us: (deadline_min, deadline_max),
                size_bytes: (size_min, size_max),
                constrained,
                seed,
            };
            let generated = generate_flows(&network, &params).map_err(|e| match e {
                Error::Domain(m) => Failure::Usage(m),
                e => Failure::Model(e),
            })?;
            emit(&output, &flows_to_json(&generated))?;
            Ok(EXIT_OK)
        }
    }
}

#[derive(Serialize)]
struct ValidationSummary {
    schema_version: u32,
    config: PreemptionConfig,
    violations: usize,
    safe: bool,
    runs: Vec<CrossValidation>,
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    let mut body = text.to_string();
    if !body.ends_with('\n') {
        body.push('\n');
    }
    fs::write(path, body).map_err(Error::from)
}

fn emit(output: &Output, text: &str) -> Result<()> {
    match &output.out {
        Some(path) => write_file(path, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                out.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn load(input: &Input) -> Result<(Network, Vec<Flow>, Routes)> {
    let network = network_from_json(&read(&input.network)?)?;
    let flows = flows_from_json(&read(&input.flows)?)?;
    validate_flows(&network, &flows)?;
    if let Some(f) = flows.iter().find(|f| f.priority.is_none()) {
        return Err(Error::InvalidFlow { flow: f.id.0.clone(), reason: "missing priority".into() });
    }
    let routes = route_all(&network, &flows)?;
    Ok((network, flows, routes))
}

fn micros(text: &str, flag: &str) -> Result<Duration, Failure> {
    let r = parse_decimal(text).map_err(|e| Failure::Usage(format!("{flag}: {e}")))?;
    if r < 0.into() {
        return Err(Failure::Usage(format!("{flag} must not be negative")));
    }
    Ok(Duration::from_rational(r))
}

fn analysis_options(a: &AnalysisArgs) -> Result<AnalysisOptions, Failure> {
    let mode = match a.mode {
        ModeArg::Sound => AnalysisMode::Sound,
        ModeArg::Literal => AnalysisMode::Literal,
    };
    Ok(AnalysisOptions { mode, switch_delay: micros(&a.switch_delay_us, "--switch-delay-us")?, ..AnalysisOptions::default() })
}

fn sim_config(s: &SimArgs, flows: &[Flow], switch_delay: Duration) -> Result<SimConfig, Failure> {
    let horizon = match &s.horizon_us {
        Some(h) => micros(h, "--horizon-us")?,
        None => flows.iter().map(|f| f.period).max().unwrap_or(Duration::ZERO) * 100u64,
    };
    Ok(SimConfig {
        horizon,
        seed: s.seed,
        phases: if s.critical_instant { PhasePolicy::Zero } else { PhasePolicy::Random },
        switch_delay,
        trace: false,
    })
}

fn resolve_scheme(
    s: &SchemeArgs,
    network: &Network,
    flows: &[Flow],
    routes: &Routes,
    opts: &AnalysisOptions,
) -> Result<PreemptionConfig> {
    if let Some(m) = s.levels {
        return best_config_at(network, flows, routes, m, opts);
    }
    let scheme = if let Some(path) = &s.config_file {
        let config: PreemptionConfig = serde_json::from_str(&read(path)?)?;
        config.check()?;
        Scheme::Config(config)
    } else {
        match s.scheme {
            Some(SchemeArg::NonPreemptive) => Scheme::NonPreemptive,
            Some(SchemeArg::FullyPreemptive) => Scheme::FullyPreemptive,
            Some(SchemeArg::FromFlows) => Scheme::FromFlows,
            None if flows.iter().all(|f| f.class.is_some()) => Scheme::FromFlows,
            None => Scheme::NonPreemptive,
        }
    };
    scheme.resolve(flows)
}
