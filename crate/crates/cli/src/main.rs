use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stickbug_cli::{
    load_scenario, metrics_table, parse_confusion, plot, record_text, run_experiment, write_reports, CliError,
};
use stickbug_core::{metrics, EventLog, Scenario};

#[derive(Parser)]
#[command(name = "stickbug", version, about = "Multi-arm pollination robot simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every (arm count, seed) trial of a scenario and write reports.
    Run {
        /// Scenario TOML; built-in defaults when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Single trial seed, overriding the scenario's seed list.
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict to these arm counts (comma separated).
        #[arg(long, value_delimiter = ',')]
        arms: Option<Vec<usize>>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// `disturbance=on|off` or `noise=on|off`; may be repeated.
        #[arg(long)]
        ablation: Vec<String>,
    },
    /// Recompute trial metrics from a saved event log.
    Replay { log: PathBuf },
    /// Classifier metrics from a confusion-matrix file (`tp=`, `fp=`, `fn=`, `tn=`).
    Metrics { file: PathBuf },
    /// Check a scenario file and print warnings.
    Validate { scenario: PathBuf },
    /// Draw cumulative-attempt curves from a run directory or curves.csv.
    Plot {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn parse_ablation(spec: &str, scenario: &mut Scenario) -> Result<(), CliError> {
    let (name, value) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--ablation expects name=on|off, got `{spec}`")))?;
    let on = match value {
        "on" => true,
        "off" => false,
        _ => return Err(CliError::Usage(format!("--ablation value must be on or off, got `{value}`"))),
    };
    scenario.ablation.set(name, on).map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Run { scenario, seed, arms, out, ablation } => {
            let mut sc = match &scenario {
                Some(p) => load_scenario(p)?,
                None => Scenario::default(),
            };
            if let Some(seed) = seed {
                sc.seeds = Some(vec![seed]);
            }
            if let Some(arms) = arms {
                sc.arm_counts = arms;
            }
            for a in &ablation {
                parse_ablation(a, &mut sc)?;
            }
            sc.validate().map_err(|e| CliError::Config(e.to_string()))?;
            for w in sc.lint() {
                eprintln!("warning: {w}");
            }
            let exp = run_experiment(&sc);
            for f in &exp.failures {
                eprintln!("trial failed (arms={}, seed={}): {}", f.arms, f.seed, f.message);
            }
            write_reports(&out, &sc, &exp)?;
            let series = plot::parse_curves(&read(&out.join("curves.csv"))?)?;
            let svg_path = out.join("curves.svg");
            fs::write(&svg_path, plot::curves_svg(&series))
                .map_err(|source| CliError::Io { path: svg_path, source })?;
            print!("{}", read(&out.join("summary.txt"))?);
            if !exp.failures.is_empty() {
                return Err(CliError::Trials(exp.failures.len()));
            }
            Ok(())
        }
        Cmd::Replay { log } => {
            let parsed = EventLog::parse(&read(&log)?).map_err(|e| CliError::Input(e.to_string()))?;
            if parsed.trial_start().is_none() {
                return Err(CliError::Input("log has no TrialStart event".into()));
            }
            print!("{}", record_text(&metrics(&parsed)));
            Ok(())
        }
        Cmd::Metrics { file } => {
            let m = parse_confusion(&read(&file)?)?;
            print!("{}", metrics_table(&m)?);
            Ok(())
        }
        Cmd::Validate { scenario } => {
            let sc = load_scenario(&scenario)?;
            let warnings = sc.lint();
            for w in &warnings {
                println!("warning: {w}");
            }
            println!("ok: {} ({} warning{})", scenario.display(), warnings.len(), if warnings.len() == 1 { "" } else { "s" });
            Ok(())
        }
        Cmd::Plot { input, out } => {
            let csv = if input.is_dir() { input.join("curves.csv") } else { input.clone() };
            let series = plot::parse_curves(&read(&csv)?)?;
            let dest = out.unwrap_or_else(|| csv.with_extension("svg"));
            fs::write(&dest, plot::curves_svg(&series)).map_err(|source| CliError::Io { path: dest.clone(), source })?;
            println!("wrote {}", dest.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
