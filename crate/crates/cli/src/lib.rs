//! Experiment runner and report writers behind the `stickbug` binary.
//!
//! Output files of `run`:
//!
//! - `events.csv`: `trial,arms,seed,t,event,arm,success`
//! - `summary.csv`: one row per arm count, see [`SUMMARY_HEADER`]
//! - `curves.csv`: `arms,t,mean_cumulative_attempts,mean_cumulative_successes`
//! - `summary.txt`: the same table for humans
//! - `logs/arms<N>_seed<S>.log`: raw event logs, readable by `replay`

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use stickbug_core::log::{Agent, EventKind};
use stickbug_core::perception::{classifier_metrics, ConfusionMatrix};
use stickbug_core::{metrics, run_trial, EventLog, Scenario, TrialRecord};

pub mod plot;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("input: {0}")]
    Input(String),
    #[error("{0} trial(s) failed")]
    Trials(usize),
}

impl CliError {
    /// Process exit code for each error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Input(_) => 5,
            CliError::Trials(_) => 6,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Scenario::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub arms: usize,
    pub seed: u64,
    pub log: EventLog,
    pub record: TrialRecord,
}

#[derive(Debug)]
pub struct TrialFailure {
    pub arms: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct Experiment {
    /// Sorted by arm count (scenario order), then seed order.
    pub trials: Vec<TrialOutcome>,
    pub failures: Vec<TrialFailure>,
}

/// Runs every (arm count, seed) trial in parallel.
pub fn run_experiment(scenario: &Scenario) -> Experiment {
    let seeds = scenario.seeds();
    let jobs: Vec<(usize, usize, usize, u64)> = scenario
        .arm_counts
        .iter()
        .enumerate()
        .flat_map(|(ai, &arms)| seeds.iter().enumerate().map(move |(si, &seed)| (ai, si, arms, seed)))
        .collect();
    let mut results: Vec<_> = jobs
        .par_iter()
        .map(|&(ai, si, arms, seed)| {
            let r = catch_unwind(AssertUnwindSafe(|| run_trial(scenario, arms, seed)));
            let r = match r {
                Ok(Ok(log)) => {
                    let record = metrics(&log);
                    Ok(TrialOutcome { arms, seed, log, record })
                }
                Ok(Err(e)) => Err(TrialFailure { arms, seed, message: e.to_string() }),
                Err(panic) => {
                    let message = panic
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_else(|| "panic".into());
                    Err(TrialFailure { arms, seed, message })
                }
            };
            ((ai, si), r)
        })
        .collect();
    results.sort_by_key(|(k, _)| *k);
    let mut exp = Experiment::default();
    for (_, r) in results {
        match r {
            Ok(t) => exp.trials.push(t),
            Err(f) => exp.failures.push(f),
        }
    }
    exp
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation; zero for fewer than two values.
fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmSummary {
    pub arms: usize,
    pub trials: usize,
    pub mean_attempts: f64,
    pub mean_successes: f64,
    pub mean_attempts_per_min: f64,
    pub std_attempts_per_min: f64,
    /// Over trials with at least one attempt; `None` if there were none.
    pub mean_success_rate: Option<f64>,
    pub std_success_rate: f64,
    pub mean_per_minute: Vec<f64>,
    pub mean_cumulative_by_minute: Vec<f64>,
    pub mm_conflicts: usize,
    pub anomalies: usize,
}

pub fn summarize(records: &[&TrialRecord]) -> Option<ArmSummary> {
    let first = records.first()?;
    let minutes = records.iter().map(|r| r.per_minute.len()).max().unwrap_or(0);
    let col = |f: &dyn Fn(&TrialRecord) -> f64| records.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let apm = col(&|r| r.attempts_per_min);
    let rates: Vec<f64> = records.iter().filter_map(|r| r.success_rate).collect();
    Some(ArmSummary {
        arms: first.arms,
        trials: records.len(),
        mean_attempts: mean(&col(&|r| r.attempts as f64)),
        mean_successes: mean(&col(&|r| r.successes as f64)),
        mean_attempts_per_min: mean(&apm),
        std_attempts_per_min: std_dev(&apm),
        mean_success_rate: (!rates.is_empty()).then(|| mean(&rates)),
        std_success_rate: std_dev(&rates),
        mean_per_minute: (0..minutes)
            .map(|m| mean(&col(&|r| r.per_minute.get(m).copied().unwrap_or(0) as f64)))
            .collect(),
        mean_cumulative_by_minute: (1..=minutes)
            .map(|m| mean(&col(&|r| r.cumulative_at(m as f64 * 60.0) as f64)))
            .collect(),
        mm_conflicts: records.iter().map(|r| r.mm_conflicts).sum(),
        anomalies: records.iter().map(|r| r.anomalies).sum(),
    })
}

impl Experiment {
    pub fn summaries(&self, arm_counts: &[usize]) -> Vec<ArmSummary> {
        arm_counts
            .iter()
            .filter_map(|&n| {
                let recs: Vec<&TrialRecord> = self.trials.iter().filter(|t| t.arms == n).map(|t| &t.record).collect();
                summarize(&recs)
            })
            .collect()
    }
}

pub const EVENTS_HEADER: &str = "trial,arms,seed,t,event,arm,success";

pub fn events_csv(exp: &Experiment) -> String {
    let mut out = String::new();
    out.push_str(EVENTS_HEADER);
    out.push('\n');
    for (trial, t) in exp.trials.iter().enumerate() {
        let dt = t.log.trial_start().map_or(0.05, |s| s.2);
        for e in t.log.events() {
            let arm = match (&e.kind, &e.agent) {
                (EventKind::RefereeCmd { arm, .. }, _) | (_, Agent::Arm(arm)) => arm.index().to_string(),
                _ => String::new(),
            };
            let success = match e.kind {
                EventKind::Attempt { success, .. } => success.to_string(),
                _ => String::new(),
            };
            let _ = writeln!(out, "{trial},{},{},{:.2},{},{arm},{success}", t.arms, t.seed, e.time(dt), e.kind.name());
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.4}"))
}

pub fn summary_header(minutes: usize) -> String {
    let mut h = String::from(
        "arms,trials,mean_attempts,mean_successes,mean_attempts_per_min,std_attempts_per_min,mean_success_rate,std_success_rate,mm_conflicts,anomalies",
    );
    for m in 1..=minutes {
        let _ = write!(h, ",attempts_min{m}");
    }
    for m in 1..=minutes {
        let _ = write!(h, ",cumulative_min{m}");
    }
    h
}

/// Header for the default five-minute trial.
pub const SUMMARY_HEADER: &str = "arms,trials,mean_attempts,mean_successes,mean_attempts_per_min,std_attempts_per_min,mean_success_rate,std_success_rate,mm_conflicts,anomalies,attempts_min1..N,cumulative_min1..N";

pub fn summary_csv(rows: &[ArmSummary]) -> String {
    let minutes = rows.iter().map(|r| r.mean_per_minute.len()).max().unwrap_or(0);
    let mut out = summary_header(minutes);
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{},{},{:.4},{:.4},{:.4},{:.4},{},{:.4},{},{}",
            r.arms,
            r.trials,
            r.mean_attempts,
            r.mean_successes,
            r.mean_attempts_per_min,
            r.std_attempts_per_min,
            opt(r.mean_success_rate),
            r.std_success_rate,
            r.mm_conflicts,
            r.anomalies
        );
        for m in 0..minutes {
            let _ = write!(out, ",{:.4}", r.mean_per_minute.get(m).copied().unwrap_or(0.0));
        }
        for m in 0..minutes {
            let _ = write!(out, ",{:.4}", r.mean_cumulative_by_minute.get(m).copied().unwrap_or(0.0));
        }
        out.push('\n');
    }
    out
}

/// Seed-averaged cumulative attempts and successes every `step` seconds.
pub fn curves_csv(exp: &Experiment, arm_counts: &[usize], step: f64) -> String {
    let mut out = String::from("arms,t,mean_cumulative_attempts,mean_cumulative_successes\n");
    for &n in arm_counts {
        let trials: Vec<&TrialOutcome> = exp.trials.iter().filter(|t| t.arms == n).collect();
        let Some(first) = trials.first() else { continue };
        let duration = first.record.duration;
        let steps = (duration / step).round() as usize;
        for i in 0..=steps {
            let t = i as f64 * step;
            let att = mean(&trials.iter().map(|tr| tr.record.cumulative_at(t) as f64).collect::<Vec<_>>());
            let suc = mean(&trials.iter().map(|tr| cumulative_successes(&tr.log, t) as f64).collect::<Vec<_>>());
            let _ = writeln!(out, "{n},{t:.1},{att:.4},{suc:.4}");
        }
    }
    out
}

fn cumulative_successes(log: &EventLog, t: f64) -> usize {
    let dt = log.trial_start().map_or(0.05, |s| s.2);
    log.events()
        .iter()
        .filter(|e| e.time(dt) <= t && matches!(e.kind, EventKind::Attempt { success: true, .. }))
        .count()
}

pub fn summary_text(scenario: &Scenario, rows: &[ArmSummary], failures: &[TrialFailure]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}", scenario.name);
    let _ = writeln!(
        out,
        "ablation: disturbance={} noise={}",
        on_off(scenario.ablation.disturbance),
        on_off(scenario.ablation.noise)
    );
    let _ = writeln!(out, "seeds: {:?}", scenario.seeds());
    out.push('\n');
    let _ = writeln!(
        out,
        "{:>4} {:>6} {:>9} {:>9} {:>15} {:>14} {:>5} {:>5}  attempts per minute",
        "arms", "trials", "attempts", "successes", "attempts/min", "success rate", "mm", "anom"
    );
    for r in rows {
        let rate = r
            .mean_success_rate
            .map_or_else(|| "n/a".to_string(), |x| format!("{:.1}% ±{:.1}", 100.0 * x, 100.0 * r.std_success_rate));
        let per_min: Vec<String> = r.mean_per_minute.iter().map(|x| format!("{x:.2}")).collect();
        let _ = writeln!(
            out,
            "{:>4} {:>6} {:>9.2} {:>9.2} {:>8.2} ±{:<5.2} {:>14} {:>5} {:>5}  {}",
            r.arms,
            r.trials,
            r.mean_attempts,
            r.mean_successes,
            r.mean_attempts_per_min,
            r.std_attempts_per_min,
            rate,
            r.mm_conflicts,
            r.anomalies,
            per_min.join(" ")
        );
    }
    for f in failures {
        let _ = writeln!(out, "FAILED arms={} seed={}: {}", f.arms, f.seed, f.message);
    }
    out
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

/// Writes all report files of an experiment into `dir`.
pub fn write_reports(dir: &Path, scenario: &Scenario, exp: &Experiment) -> Result<Vec<ArmSummary>, CliError> {
    fs::create_dir_all(dir.join("logs")).map_err(io_err(dir))?;
    let rows = exp.summaries(&scenario.arm_counts);
    let write = |name: &str, body: &str| -> Result<(), CliError> {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))
    };
    write("events.csv", &events_csv(exp))?;
    write("summary.csv", &summary_csv(&rows))?;
    write("curves.csv", &curves_csv(exp, &scenario.arm_counts, 5.0))?;
    write("summary.txt", &summary_text(scenario, &rows, &exp.failures))?;
    for t in &exp.trials {
        let path = dir.join("logs").join(format!("arms{}_seed{}.log", t.arms, t.seed));
        let mut f = fs::File::create(&path).map_err(io_err(&path))?;
        f.write_all(t.log.to_text().as_bytes()).map_err(io_err(&path))?;
    }
    Ok(rows)
}

/// Parses `key=value` lines (`tp`, `fp`, `fn`, `tn`); `#` starts a comment.
pub fn parse_confusion(text: &str) -> Result<ConfusionMatrix, CliError> {
    let mut m = [None::<u64>; 4];
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| CliError::Input(format!("line {}: expected key=value", i + 1)))?;
        let slot = match k.trim().to_ascii_lowercase().as_str() {
            "tp" => 0,
            "fp" => 1,
            "fn" => 2,
            "tn" => 3,
            other => return Err(CliError::Input(format!("line {}: unknown key `{other}`", i + 1))),
        };
        let v: u64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("line {}: `{}` is not a count", i + 1, v.trim())))?;
        m[slot] = Some(v);
    }
    let get = |i: usize, name: &str| m[i].ok_or_else(|| CliError::Input(format!("missing `{name}`")));
    Ok(ConfusionMatrix::new(get(0, "tp")?, get(1, "fp")?, get(2, "fn")?, get(3, "tn")?))
}

pub fn metrics_table(m: &ConfusionMatrix) -> Result<String, CliError> {
    let r = classifier_metrics(m).map_err(|e| CliError::Input(e.to_string()))?;
    let mut out = String::new();
    let _ = writeln!(out, "samples: {} (tp={} fp={} fn={} tn={})", m.total(), m.tp, m.fp, m.fn_, m.tn);
    for (name, v) in [
        ("accuracy", r.accuracy),
        ("precision", r.precision),
        ("recall", r.recall),
        ("f1", r.f1),
        ("specificity", r.specificity),
    ] {
        let shown = v.map_or_else(|| "undefined".to_string(), |x| format!("{:.1}%", 100.0 * x));
        let _ = writeln!(out, "{name:<12} {shown}");
    }
    Ok(out)
}

pub fn record_text(r: &TrialRecord) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "arms: {}", r.arms);
    let _ = writeln!(out, "seed: {}", r.seed);
    let _ = writeln!(out, "duration_s: {}", r.duration);
    let _ = writeln!(out, "attempts: {}", r.attempts);
    let _ = writeln!(out, "successes: {}", r.successes);
    let _ = writeln!(out, "lost_in_servo: {}", r.lost);
    let _ = writeln!(out, "aborted: {}", r.aborted);
    let _ = writeln!(out, "pollinated_flowers: {}", r.pollinated);
    let _ = writeln!(out, "attempts_per_min: {:.4}", r.attempts_per_min);
    let _ = writeln!(out, "success_rate: {}", opt(r.success_rate));
    let _ = writeln!(out, "mm_conflicts: {}", r.mm_conflicts);
    let _ = writeln!(out, "anomalies: {}", r.anomalies);
    let per: Vec<String> = r.per_minute.iter().map(|n| n.to_string()).collect();
    let _ = writeln!(out, "attempts_per_minute: {}", per.join(" "));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_file_formats() {
        let m = parse_confusion("# classifier\ntp=17\nfp = 2\nFN: 1\ntn=12\n").unwrap();
        assert_eq!(m, ConfusionMatrix::new(17, 2, 1, 12));
        assert!(parse_confusion("tp=1\nfp=1\nfn=1\n").is_err());
        assert!(parse_confusion("tp=x\nfp=1\nfn=1\ntn=1").is_err());
        assert!(parse_confusion("tq=1").is_err());
    }

    #[test]
    fn table_marks_undefined() {
        let t = metrics_table(&ConfusionMatrix::new(32, 0, 0, 0)).unwrap();
        assert!(t.contains("specificity  undefined"));
        assert!(metrics_table(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn std_dev_is_sample_std() {
        assert_eq!(std_dev(&[1.0]), 0.0);
        assert!((std_dev(&[1.0, 3.0]) - 2f64.sqrt()).abs() < 1e-12);
    }
}
