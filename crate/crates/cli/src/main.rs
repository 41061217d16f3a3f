use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _};
use clap::{Parser, Subcommand};
use fabricmigrate_core::manifest::{compile_plan, parse_manifest, render_plan, Manifest, ManifestError};
use fabricmigrate_core::model::{Diagnostic, Subject};
use fabricmigrate_core::scenario::{
    compare_trace_csv, robot_scenario, run_scenario, ScenarioConfig, ScenarioError, ROBOT_SCENARIO_ID,
};

/// Validate, plan and simulate component deployments across the host and
/// the real-time fabric.
#[derive(Debug, Parser)]
#[command(name = "fabricmigrate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a manifest; prints diagnostics as `severity:file:line: message`.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Compile a manifest and write the plan file.
    Plan {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the robot scenario on a deployment.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        /// Bundled scenario id or path to a scenario TOML file.
        #[arg(long, default_value = ROBOT_SCENARIO_ID)]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to the scenario's duration.
        #[arg(long)]
        duration_us: Option<u64>,
        /// CSV trace output.
        #[arg(long)]
        trace: PathBuf,
        /// Summary output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two traces; the report is empty when they are identical.
    Compare {
        /// Exactly two traces.
        #[arg(long = "trace", required = true, num_args = 1)]
        traces: Vec<PathBuf>,
        /// Report output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_ERRORS: u8 = 1;
const EXIT_INPUT: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FABRICMIGRATE_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<u8> {
    match cmd {
        Command::Validate { manifest } => validate(&manifest),
        Command::Plan { manifest, out } => plan(&manifest, &out),
        Command::Run {
            manifest,
            scenario,
            seed,
            duration_us,
            trace,
            out,
        } => run(&manifest, &scenario, seed, duration_us, &trace, out.as_deref()),
        Command::Compare { traces, out } => compare(&traces, out.as_deref()),
    }
}

fn parse_error_line(file: &Path, e: &ManifestError) -> String {
    let message = match e {
        ManifestError::Syntax {
            col,
            expected,
            found,
            ..
        } => format!("column {col}: expected {expected}, found {found}"),
        ManifestError::DuplicateName { kind, name, .. } => format!("duplicate {kind} `{name}`"),
        ManifestError::UnknownReference { kind, name, .. } => format!("unknown {kind} `{name}`"),
        ManifestError::InvariantViolation { message, .. } => message.clone(),
    };
    format!("error:{}:{}: {message}", file.display(), e.line())
}

fn diagnostic_line(file: &Path, m: &Manifest, d: &Diagnostic) -> String {
    let line = d
        .subject
        .as_ref()
        .and_then(|s| m.line_of(s))
        .or_else(|| m.line_of(&Subject::Fabric))
        .unwrap_or(1);
    format!("{}:{}:{line}: {}", d.severity, file.display(), d.message)
}

/// Reads and parses a manifest; parse errors are printed here.
fn load_manifest(path: &Path) -> anyhow::Result<Option<Manifest>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match parse_manifest(&text) {
        Ok(m) => Ok(Some(m)),
        Err(e) => {
            println!("{}", parse_error_line(path, &e));
            Ok(None)
        }
    }
}

fn print_diagnostics(path: &Path, m: &Manifest, diagnostics: &[Diagnostic]) {
    for d in diagnostics {
        println!("{}", diagnostic_line(path, m, d));
    }
}

fn validate(path: &Path) -> anyhow::Result<u8> {
    let Some(m) = load_manifest(path)? else {
        return Ok(EXIT_INPUT);
    };
    match compile_plan(&m) {
        Ok(plan) => {
            print_diagnostics(path, &m, &plan.diagnostics);
            Ok(0)
        }
        Err(e) => {
            print_diagnostics(path, &m, &e.diagnostics);
            Ok(EXIT_ERRORS)
        }
    }
}

fn plan(path: &Path, out: &Path) -> anyhow::Result<u8> {
    let Some(m) = load_manifest(path)? else {
        return Ok(EXIT_INPUT);
    };
    match compile_plan(&m) {
        Ok(plan) => {
            print_diagnostics(path, &m, &plan.diagnostics);
            fs::write(out, render_plan(&plan)).with_context(|| format!("writing {}", out.display()))?;
            log::info!("plan written to {}", out.display());
            Ok(0)
        }
        Err(e) => {
            print_diagnostics(path, &m, &e.diagnostics);
            Ok(EXIT_ERRORS)
        }
    }
}

fn load_scenario(spec: &str) -> anyhow::Result<ScenarioConfig> {
    if spec == ROBOT_SCENARIO_ID {
        return Ok(robot_scenario());
    }
    let text = fs::read_to_string(spec).with_context(|| format!("reading scenario {spec}"))?;
    Ok(ScenarioConfig::parse(&text)?)
}

fn run(
    path: &Path,
    scenario: &str,
    seed: u64,
    duration_us: Option<u64>,
    trace_out: &Path,
    summary_out: Option<&Path>,
) -> anyhow::Result<u8> {
    let Some(m) = load_manifest(path)? else {
        return Ok(EXIT_INPUT);
    };
    let config = load_scenario(scenario)?;
    let duration = duration_us.unwrap_or(config.duration_us);
    log::info!("running {} for {duration} us, seed {seed}", path.display());
    let result = match run_scenario(&m, &config, seed, duration) {
        Ok(r) => r,
        Err(ScenarioError::Compile(e)) => {
            print_diagnostics(path, &m, &e.diagnostics);
            return Ok(EXIT_ERRORS);
        }
        Err(e) => bail!(e),
    };
    let file = fs::File::create(trace_out).with_context(|| format!("creating {}", trace_out.display()))?;
    result
        .trace
        .write_csv(std::io::BufWriter::new(file))
        .with_context(|| format!("writing {}", trace_out.display()))?;
    let summary = result.summary.render();
    if let Some(out) = summary_out {
        fs::write(out, &summary).with_context(|| format!("writing {}", out.display()))?;
    }
    let s = &result.summary;
    println!(
        "{}: {} after {} us, max |theta| {:.4} rad, {} fabric / {} host deadline misses",
        path.display(),
        if s.failed { "fell" } else { "upright" },
        s.failure_time_us.unwrap_or(duration),
        s.max_abs_theta,
        s.fabric_misses(),
        s.host_misses()
    );
    Ok(0)
}

fn compare(traces: &[PathBuf], out: Option<&Path>) -> anyhow::Result<u8> {
    let [a, b] = traces else {
        bail!("compare needs exactly two --trace arguments, got {}", traces.len());
    };
    let open = |p: &Path| fs::File::open(p).with_context(|| format!("opening {}", p.display()));
    let report = compare_trace_csv(open(a)?, open(b)?)?;
    let text = report.render();
    match out {
        Some(out) => fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?,
        None => print!("{text}"),
    }
    Ok(0)
}
