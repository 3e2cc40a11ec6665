use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use pushsum_core::harness::{divergence_demo, run_scenario, RunResult, ScenarioConfig};
use pushsum_core::verify::verify_scenario;

/// Environment variable that replaces the configured seed.
const SEED_ENV: &str = "PUSHSUM_SEED";

#[derive(Parser)]
#[command(
    name = "pushsum",
    version,
    about = "Simulate and verify push-sum consensus over lossy directed links"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its metric series as CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override a config value, e.g. `--set seed=3` (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Replay a scenario against the dense matrix oracle.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run a scenario once per value of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run one of the built-in scenarios.
    Demo {
        #[arg(long)]
        name: DemoName,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    #[value(name = "failure_probability")]
    FailureProbability,
    #[value(name = "T")]
    T,
    #[value(name = "seed")]
    Seed,
    #[value(name = "n")]
    N,
}

impl SweepParam {
    fn key(self) -> &'static str {
        match self {
            SweepParam::FailureProbability => "failure_probability",
            SweepParam::T => "T",
            SweepParam::Seed => "seed",
            SweepParam::N => "n",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DemoName {
    Reliable,
    Lossy,
    Diverging,
}

impl DemoName {
    fn config_text(self) -> &'static str {
        match self {
            DemoName::Reliable => include_str!("../scenarios/reliable.toml"),
            DemoName::Lossy => include_str!("../scenarios/lossy.toml"),
            DemoName::Diverging => include_str!("../scenarios/diverging.toml"),
        }
    }
}

/// How a command that ran to completion ended.
enum Status {
    Ok,
    /// An audit or oracle check failed.
    Violation,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            overrides,
        } => cmd_run(&config, &out, &overrides),
        Command::Verify { config, overrides } => cmd_verify(&config, &overrides),
        Command::Sweep {
            config,
            param,
            values,
            out_dir,
        } => cmd_sweep(&config, param, &values, &out_dir),
        Command::Demo { name, out } => cmd_demo(name, &out),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Violation) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn parse_config(text: &str, origin: &str) -> Result<ScenarioConfig> {
    toml::from_str(text).with_context(|| format!("invalid scenario {origin}"))
}

/// Reads, overrides and validates a scenario. Nothing is simulated before
/// this succeeds.
fn load_config(path: &Path, overrides: &[String]) -> Result<ScenarioConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut cfg = parse_config(&text, &path.display().to_string())?;
    if let Ok(seed) = std::env::var(SEED_ENV) {
        cfg.apply_override("seed", &seed)
            .with_context(|| format!("invalid {SEED_ENV}"))?;
    }
    for o in overrides {
        let (key, value) = o
            .split_once('=')
            .with_context(|| format!("override {o:?} is not KEY=VALUE"))?;
        cfg.apply_override(key.trim(), value.trim())?;
    }
    cfg.resolve()?;
    Ok(cfg)
}

/// Writes through a temporary file so a failed write leaves nothing behind.
fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn report_run(result: &RunResult, out: &Path) -> Result<Status> {
    write_file(out, &result.to_csv())?;
    print!("{}", result.summary());
    if let Some(f) = result.audit_failures.first() {
        eprintln!("audit failed: {f}");
        return Ok(Status::Violation);
    }
    Ok(Status::Ok)
}

fn cmd_run(config: &Path, out: &Path, overrides: &[String]) -> Result<Status> {
    let cfg = load_config(config, overrides)?;
    let result = run_scenario(&cfg)?;
    report_run(&result, out)
}

fn cmd_verify(config: &Path, overrides: &[String]) -> Result<Status> {
    let cfg = load_config(config, overrides)?;
    let report = verify_scenario(&cfg)?;
    print!("{}", report.to_text());
    match report.first_failure() {
        None => Ok(Status::Ok),
        Some((name, k, detail)) => {
            eprintln!("oracle mismatch: {name} at iteration {k}: {detail}");
            Ok(Status::Violation)
        }
    }
}

fn parse_values(values: &str) -> Result<Vec<String>> {
    let list: Vec<String> = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(String::from)
        .collect();
    if list.is_empty() {
        bail!("--values must list at least one value");
    }
    Ok(list)
}

fn cmd_sweep(config: &Path, param: SweepParam, values: &str, out_dir: &Path) -> Result<Status> {
    let values = parse_values(values)?;
    let base = load_config(config, &[])?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;

    let key = param.key();
    let mut summary = String::from("value,converged_at,final_spread\n");
    let (mut errors, mut violations) = (0, 0);
    for value in &values {
        let mut cfg = base.clone();
        let run = cfg
            .apply_override(key, value)
            .and_then(|()| run_scenario(&cfg));
        match run {
            Ok(result) => {
                let file = out_dir.join(format!("{key}={value}.csv"));
                write_file(&file, &result.to_csv())?;
                let converged = result
                    .converged_at
                    .map_or_else(String::new, |k| k.to_string());
                summary.push_str(&format!("{value},{converged},{}\n", result.final_spread()));
                if let Some(f) = result.audit_failures.first() {
                    eprintln!("{key}={value}: audit failed: {f}");
                    violations += 1;
                }
            }
            Err(e) => {
                eprintln!("{key}={value}: {e}");
                summary.push_str(&format!("{value},,\n"));
                errors += 1;
            }
        }
    }
    write_file(&out_dir.join("summary.csv"), &summary)?;
    if errors > 0 {
        bail!("{errors} of {} runs failed", values.len());
    }
    Ok(if violations > 0 {
        Status::Violation
    } else {
        Status::Ok
    })
}

fn cmd_demo(name: DemoName, out: &Path) -> Result<Status> {
    let cfg = parse_config(name.config_text(), "built-in demo")?;
    let result = match name {
        DemoName::Diverging => divergence_demo(&cfg)?,
        DemoName::Reliable | DemoName::Lossy => run_scenario(&cfg)?,
    };
    report_run(&result, out)
}
