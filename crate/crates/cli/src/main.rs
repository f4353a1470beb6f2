use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lqpursuit::io::{run, Command, EvaderChoice, PursuerChoice, RunConfig, SpecSource};
use lqpursuit::EscapeMethod;
use serde_json::Value;

/// Linear-quadratic pursuit-evasion with intermittent communication.
///
/// Every command prints a JSON report on stdout. Exit status is 0 on
/// success, 1 on a domain failure (including a failed `--strict` check)
/// and 2 on malformed input.
#[derive(Parser)]
#[command(name = "lqpursuit", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct SpecArgs {
    /// Built-in game (currently `example1`).
    #[arg(long, conflicts_with = "spec")]
    preset: Option<String>,
    /// Game spec JSON file.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Override the terminal time.
    #[arg(long)]
    tf: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Norm,
    Radon,
}

impl From<Method> for EscapeMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Norm => EscapeMethod::NormBlowup,
            Method::Radon => EscapeMethod::RadonDeterminant,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Pursuer {
    CertaintyEquivalent,
    OpenLoop,
}

impl From<Pursuer> for PursuerChoice {
    fn from(p: Pursuer) -> Self {
        match p {
            Pursuer::CertaintyEquivalent => PursuerChoice::CertaintyEquivalent,
            Pursuer::OpenLoop => PursuerChoice::OpenLoop,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Evader {
    Equilibrium,
    OpenLoop,
    Constant,
    Deviation,
    Risky,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check dimensions, symmetry and definiteness of a spec.
    Validate {
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Solve the value Riccati equation.
    Riccati {
        #[command(flatten)]
        spec: SpecArgs,
        /// Write the solution on its grid as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Compute the minimal communication schedule.
    Schedule {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Test a schedule for admissibility.
    CheckSchedule {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        instants: Vec<f64>,
        /// Exit with status 1 if the schedule is inadmissible.
        #[arg(long)]
        strict: bool,
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
    /// Simulate one play of the game.
    Simulate {
        #[command(flatten)]
        spec: SpecArgs,
        /// Communication instants; the optimal schedule when omitted.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        instants: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "certainty-equivalent")]
        pursuer: Pursuer,
        #[arg(long, value_enum, default_value = "equilibrium")]
        evader: Evader,
        /// Evader input for `--evader constant`.
        #[arg(long = "u-e", value_delimiter = ',', allow_hyphen_values = true)]
        u_e: Vec<f64>,
        /// Deviation for `--evader deviation`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        w: Vec<f64>,
        /// Kick scale for `--evader risky`.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Payoff of constant evader inputs `c · direction`.
    Sweep {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(
            long = "c",
            value_delimiter = ',',
            required = true,
            allow_hyphen_values = true
        )]
        c_values: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        direction: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "open-loop")]
        pursuer: Pursuer,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        instants: Vec<f64>,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Latest admissible next instant after `--t-prev`.
    Slack {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long = "t-prev")]
        t_prev: f64,
        #[arg(long)]
        upper: Option<f64>,
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
    /// Evader reachable set at the first instant.
    Reachability {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        t1: Option<f64>,
        /// Points on the boundary circle written to `--csv`.
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn spec_source(args: &SpecArgs) -> Result<SpecSource> {
    let mut value = match (&args.preset, &args.spec) {
        (Some(name), None) => serde_json::json!({ "preset": name }),
        (None, Some(path)) => {
            if args.tf.is_none() {
                return Ok(SpecSource::File(path.clone()));
            }
            let text = std::fs::read_to_string(path)
                .map_err(lqpursuit::Error::from)
                .with_context(|| format!("reading {}", path.display()))?;
            lqpursuit::io::parse_spec(&text)?;
            serde_json::from_str(&text)?
        }
        (None, None) => serde_json::json!({ "preset": "example1" }),
        (Some(_), Some(_)) => bail!(lqpursuit::Error::InvalidArgument(
            "--preset and --spec are exclusive".into()
        )),
    };
    if let (Some(tf), Value::Object(obj)) = (args.tf, &mut value) {
        obj.insert("tf".into(), tf.into());
    }
    Ok(SpecSource::Inline(value))
}

fn opt_vec(v: &[f64]) -> Option<Vec<f64>> {
    (!v.is_empty()).then(|| v.to_vec())
}

fn config(cmd: Cmd) -> Result<RunConfig> {
    let (spec, command) = match cmd {
        Cmd::Run { config } => {
            let text = std::fs::read_to_string(&config)
                .map_err(lqpursuit::Error::from)
                .with_context(|| format!("reading {}", config.display()))?;
            let base = config.parent().unwrap_or(Path::new("."));
            return Ok(RunConfig::from_json(&text, base)?);
        }
        Cmd::Validate { spec } => (spec, Command::Validate),
        Cmd::Riccati { spec, csv } => (spec, Command::Riccati { csv }),
        Cmd::Schedule {
            spec,
            method,
            margin,
        } => (
            spec,
            Command::Schedule {
                method: method.map(Into::into),
                margin,
            },
        ),
        Cmd::CheckSchedule {
            spec,
            instants,
            strict,
            method,
        } => (
            spec,
            Command::CheckSchedule {
                instants,
                strict,
                method: method.map(Into::into),
            },
        ),
        Cmd::Simulate {
            spec,
            instants,
            pursuer,
            evader,
            u_e,
            w,
            scale,
            step,
            csv,
        } => {
            let evader = match evader {
                Evader::Equilibrium => EvaderChoice::Equilibrium,
                Evader::OpenLoop => EvaderChoice::OpenLoop,
                Evader::Constant => EvaderChoice::Constant {
                    u_e: opt_vec(&u_e).ok_or_else(|| {
                        lqpursuit::Error::InvalidArgument("--evader constant needs --u-e".into())
                    })?,
                },
                Evader::Deviation => EvaderChoice::Deviation {
                    w: opt_vec(&w).ok_or_else(|| {
                        lqpursuit::Error::InvalidArgument("--evader deviation needs --w".into())
                    })?,
                },
                Evader::Risky => EvaderChoice::Risky { scale },
            };
            (
                spec,
                Command::Simulate {
                    instants,
                    pursuer: pursuer.into(),
                    evader,
                    step,
                    csv,
                },
            )
        }
        Cmd::Sweep {
            spec,
            c_values,
            direction,
            pursuer,
            instants,
            step,
        } => (
            spec,
            Command::Sweep {
                c_values,
                direction,
                pursuer: pursuer.into(),
                instants,
                step,
            },
        ),
        Cmd::Slack {
            spec,
            t_prev,
            upper,
            method,
        } => (
            spec,
            Command::Slack {
                t_prev,
                upper,
                method: method.map(Into::into),
            },
        ),
        Cmd::Reachability {
            spec,
            t1,
            points,
            csv,
        } => (spec, Command::Reachability { t1, points, csv }),
    };
    Ok(RunConfig::new(spec_source(&spec)?, command))
}

fn execute(cli: Cli) -> Result<bool> {
    let outcome = run(&config(cli.command)?)?;
    let mut out = std::io::stdout().lock();
    out.write_all(&outcome.report)?;
    out.flush()?;
    Ok(outcome.success)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e
                .downcast_ref::<lqpursuit::Error>()
                .is_some_and(lqpursuit::Error::is_usage);
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
