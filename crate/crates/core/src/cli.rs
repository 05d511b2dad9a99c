//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{parse_config, Format, RunConfig, Task, TaskKind};
use crate::error::{Error, Result};
use crate::model::Convention;
use crate::output::{emit_results, write_output, DelayRow, Payload, ResultEnvelope, VERSION};
use crate::response::{default_delay_step, group_delay_with_step};
use crate::stability::{assess_stability, StabilityReport};
use crate::steady::solve_steady_state;
use crate::sweep::{
    classify_regime, find_peak_transmission, power_sweep, spectrum_sweep, SweepOptions,
};

/// Environment variable capping sweep parallelism (0 = automatic).
pub const THREADS_ENV: &str = "HYBRIDOEM_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "hybridoem",
    version,
    about = "Probe response of a hybrid opto-electromechanical system"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Steady state and its stability.
    Steady(RunArgs),
    /// Probe transmission spectrum.
    Spectrum(RunArgs),
    /// Center transmission and stability margin against optical pump power.
    PowerSweep(RunArgs),
    /// Group delay at the optical cavity resonance.
    Delay(RunArgs),
    /// Regime label (BARE, EIT, EIA, AMPLIFICATION) of a spectrum.
    Classify(RunArgs),
}

impl Command {
    fn split(self) -> (TaskKind, RunArgs) {
        match self {
            Command::Steady(a) => (TaskKind::Steady, a),
            Command::Spectrum(a) => (TaskKind::Spectrum, a),
            Command::PowerSweep(a) => (TaskKind::PowerSweep, a),
            Command::Delay(a) => (TaskKind::Delay, a),
            Command::Classify(a) => (TaskKind::Classify, a),
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output file; standard output when absent from both here and the config.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Overrides the drive convention in the config.
    #[arg(long, value_enum)]
    convention: Option<ConventionArg>,
    /// Suppress warnings and progress messages.
    #[arg(long)]
    quiet: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ConventionArg {
    Standard,
    PaperLiteral,
}

/// Output of one executed task.
pub struct Outcome {
    pub payload: Payload,
    pub warnings: Vec<String>,
    /// Error reported after the results have been written.
    pub deferred: Option<(Error, Vec<String>)>,
}

fn instability_warning(rep: &StabilityReport) -> Option<String> {
    (!rep.stable).then(|| {
        format!(
            "operating point is dynamically unstable (margin = {:e} rad/s)",
            rep.margin
        )
    })
}

/// Runs the task described by a parsed configuration.
pub fn execute(cfg: &RunConfig, threads: usize) -> Result<Outcome> {
    let (p, d) = (&cfg.system, &cfg.drive);
    let sweep_opts = SweepOptions {
        threads,
        solver: cfg.solver,
    };
    let mut warnings = Vec::new();
    let mut deferred = None;
    let payload = match &cfg.task {
        Task::Steady => {
            let ss = solve_steady_state(p, d, &cfg.solver, None)?;
            let stability = assess_stability(p, &ss)?;
            warnings.extend(instability_warning(&stability));
            if ss.multistable {
                warnings
                    .push("several steady states exist; reporting the zero-seeded branch".into());
            }
            Payload::Steady {
                steady: ss,
                stability,
            }
        }
        Task::Spectrum(axis) => {
            let s = spectrum_sweep(p, d, axis, &sweep_opts)?;
            warnings.extend(instability_warning(&s.stability));
            Payload::spectrum(&s)
        }
        Task::PowerSweep(powers) => {
            let scan = power_sweep(p, d, powers, &cfg.solver)?;
            let unstable: Vec<String> = scan
                .points
                .iter()
                .filter(|pt| !pt.stable)
                .map(|pt| format!("{:e}", pt.p_o))
                .collect();
            if !unstable.is_empty() {
                warnings.push(format!(
                    "dynamically unstable at P_o = {} W",
                    unstable.join(", ")
                ));
            }
            if !scan.failures.is_empty() {
                let report = scan
                    .failures
                    .iter()
                    .map(|f| match f.residual {
                        Some(r) => format!("P_o = {:e} W: residual {r:e}: {}", f.p_o, f.message),
                        None => format!("P_o = {:e} W: {}", f.p_o, f.message),
                    })
                    .collect();
                let err = Error::NoConvergence {
                    iterations: cfg.solver.max_iterations,
                    n_o: f64::NAN,
                    n_e: f64::NAN,
                    residual: scan
                        .failures
                        .iter()
                        .filter_map(|f| f.residual)
                        .fold(0.0, f64::max),
                };
                deferred = Some((err, report));
            }
            Payload::power_sweep(&scan)
        }
        Task::Delay { method, step } => {
            let ss = solve_steady_state(p, d, &cfg.solver, None)?;
            let stability = assess_stability(p, &ss)?;
            warnings.extend(instability_warning(&stability));
            let h = step.unwrap_or_else(|| default_delay_step(p));
            let rows = method
                .methods()
                .iter()
                .map(|m| group_delay_with_step(p, d, &ss, *m, h).map(|r| DelayRow::from(&r)))
                .collect::<Result<Vec<_>>>()?;
            Payload::Delay { rows }
        }
        Task::Classify(axis) => {
            let s = spectrum_sweep(p, d, axis, &sweep_opts)?;
            warnings.extend(instability_warning(&s.stability));
            let classification = classify_regime(&s)?;
            let (peak_delta_p_rad_s, peak_t_sq) = find_peak_transmission(&s)?;
            Payload::Classify {
                classification,
                peak_delta_p_rad_s,
                peak_t_sq,
                stable: s.stability.stable,
            }
        }
    };
    Ok(Outcome {
        payload,
        warnings,
        deferred,
    })
}

fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v.trim().parse().map_err(|_| {
            Error::Validation(vec![format!(
                "{THREADS_ENV} must be a nonnegative integer, got `{v}`"
            )])
        }),
    }
}

fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

fn run(
    kind: TaskKind,
    args: RunArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<Option<(Error, Vec<String>)>> {
    let mut cfg = read_config(&args.config)?;
    if cfg.task.kind() != kind {
        return Err(Error::Validation(vec![format!(
            "subcommand `{}` does not match the [{}] block in {}",
            kind.as_str(),
            cfg.task.kind().table(),
            args.config.display()
        )]));
    }
    if let Some(c) = args.convention {
        cfg.drive.convention = match c {
            ConventionArg::Standard => Convention::Standard,
            ConventionArg::PaperLiteral => Convention::PaperLiteral,
        };
    }
    let threads = threads_from_env()?;

    let outcome = execute(&cfg, threads)?;
    let mut warnings = cfg.warnings.clone();
    warnings.extend(outcome.warnings);
    if !args.quiet {
        for w in &warnings {
            let _ = writeln!(err, "warning: {w}");
        }
    }

    let path = args.out.or_else(|| cfg.output.path.clone());
    let format = match (args.format, cfg.output.format) {
        (Some(FormatArg::Csv), _) => Format::Csv,
        (Some(FormatArg::Json), _) => Format::Json,
        (None, Some(f)) => f,
        (None, None) => match path.as_ref().and_then(|p| p.extension()) {
            Some(ext) if ext == "json" => Format::Json,
            _ => Format::Csv,
        },
    };
    let env = ResultEnvelope {
        version: VERSION.to_string(),
        convention: cfg.drive.convention,
        config: cfg.to_toml(),
        warnings,
        results: outcome.payload,
    };
    let bytes = emit_results(&env, format)?;
    match &path {
        Some(p) => {
            write_output(p, &bytes)?;
            if !args.quiet {
                let _ = writeln!(err, "wrote {} ({})", p.display(), format.as_str());
            }
        }
        None => out
            .write_all(&bytes)
            .and_then(|_| out.flush())
            .map_err(|source| Error::Io {
                path: "<stdout>".into(),
                source,
            })?,
    }
    Ok(outcome.deferred)
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 bad input, 2 solver failure, 3 I/O.
pub fn run_command_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let (kind, args) = cli.command.split();
    match run(kind, args, out, err) {
        Ok(None) => 0,
        Ok(Some((e, details))) => {
            let _ = writeln!(err, "error: {} point(s) failed", details.len());
            for line in details {
                let _ = writeln!(err, "  {line}");
            }
            e.exit_code()
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_command_with(
        argv,
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    )
}
