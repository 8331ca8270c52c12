use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use stickbug_cli::{record_text, EVENTS_HEADER};
use stickbug_core::{metrics, EventLog, Scenario};

fn stickbug(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stickbug")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scenarios_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios"))
}

fn trials_in(events: &str) -> usize {
    events
        .lines()
        .skip(1)
        .filter_map(|l| l.split(',').next())
        .collect::<std::collections::BTreeSet<_>>()
        .len()
}

#[test]
fn default_run_writes_all_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = stickbug(&["run", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["events.csv", "summary.csv", "curves.csv", "summary.txt", "curves.svg"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let events = fs::read_to_string(dir.path().join("events.csv")).unwrap();
    assert_eq!(events.lines().next(), Some(EVENTS_HEADER));
    assert_eq!(trials_in(&events), 20);
    assert_eq!(fs::read_dir(dir.path().join("logs")).unwrap().count(), 20);

    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows.len(), 5);
    let arms: Vec<&str> = rows[1..].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(arms, ["1", "2", "4", "6"]);
    assert!(stdout(&o).contains("attempts/min"));
}

#[test]
fn single_seed_single_arm_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = stickbug(&["run", "--seed", "7", "--arms", "1", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let events = fs::read_to_string(dir.path().join("events.csv")).unwrap();
    assert_eq!(trials_in(&events), 1);
    assert!(events.lines().skip(1).all(|l| l.split(',').nth(2) == Some("7")));
    assert!(dir.path().join("logs/arms1_seed7.log").is_file());
}

#[test]
fn runs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = stickbug(&["run", "--arms", "2,6", "--seed", "11", "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success());
    }
    for f in ["events.csv", "summary.csv", "curves.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn replay_matches_metrics_of_the_saved_log() {
    let dir = tempfile::tempdir().unwrap();
    let o = stickbug(&["run", "--seed", "3", "--arms", "4", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let log_path = dir.path().join("logs/arms4_seed3.log");
    let log = EventLog::parse(&fs::read_to_string(&log_path).unwrap()).unwrap();
    let r = stickbug(&["replay", log_path.to_str().unwrap()]);
    assert!(r.status.success(), "{}", stderr(&r));
    assert_eq!(stdout(&r), record_text(&metrics(&log)));

    let attempts = log.events().iter().filter(|e| e.kind.name() == "Attempt").count();
    assert!(stdout(&r).contains(&format!("attempts: {attempts}\n")));
}

#[test]
fn ablation_switches_change_the_outcome() {
    let on = tempfile::tempdir().unwrap();
    let off = tempfile::tempdir().unwrap();
    let base = ["run", "--arms", "6"];
    let o1 = stickbug(&[&base[..], &["--out", on.path().to_str().unwrap()]].concat());
    let o2 = stickbug(&[&base[..], &["--ablation", "disturbance=off", "--out", off.path().to_str().unwrap()]].concat());
    assert!(o1.status.success() && o2.status.success());
    assert!(stdout(&o2).contains("disturbance=off"));
    let rate = |dir: &Path| -> f64 {
        let s = fs::read_to_string(dir.join("summary.csv")).unwrap();
        s.lines().nth(1).unwrap().split(',').nth(6).unwrap().parse().unwrap()
    };
    assert!(rate(on.path()) < rate(off.path()), "{} vs {}", rate(on.path()), rate(off.path()));
}

#[test]
fn bad_ablation_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    for spec in ["wind=off", "disturbance=maybe", "noise"] {
        let o = stickbug(&["run", "--ablation", spec, "--out", dir.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{spec}: {}", stderr(&o));
    }
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[params]\ntick_dt = -0.05\n").unwrap();
    let o = stickbug(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("tick_dt"), "{}", stderr(&o));

    fs::write(&path, "arm_counts = [7]\n").unwrap();
    assert_eq!(stickbug(&["validate", path.to_str().unwrap()]).status.code(), Some(3));

    fs::write(&path, "no_such_key = 1\n").unwrap();
    let o = stickbug(&["run", "--scenario", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("no_such_key"));
}

#[test]
fn asymmetric_arm_count_is_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("three.toml");
    fs::write(&path, "arm_counts = [3]\n").unwrap();
    let o = stickbug(&["validate", path.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("warning: arm count 3"));
}

#[test]
fn missing_file_is_an_io_error() {
    let o = stickbug(&["replay", "/nonexistent/trial.log"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn metrics_command() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cm.txt");
    fs::write(&path, "# flower classifier\ntp=17\nfp: 2\nfn=1\ntn=12\n").unwrap();
    let o = stickbug(&["metrics", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for name in ["accuracy", "precision", "recall", "specificity", "f1"] {
        assert!(text.to_lowercase().contains(name), "{name} missing from\n{text}");
    }

    for bad in ["tp=1\nfp=x\n", "tp=0\nfp=0\nfn=0\ntn=0\n", "tp=1\nwhat=2\n"] {
        fs::write(&path, bad).unwrap();
        assert_eq!(stickbug(&["metrics", path.to_str().unwrap()]).status.code(), Some(5), "{bad:?}");
    }
}

#[test]
fn plot_writes_svg() {
    let dir = tempfile::tempdir().unwrap();
    let o = stickbug(&["run", "--seed", "2", "--arms", "1,6", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let dest = dir.path().join("again.svg");
    let p = stickbug(&["plot", dir.path().to_str().unwrap(), "--out", dest.to_str().unwrap()]);
    assert!(p.status.success(), "{}", stderr(&p));
    let svg = fs::read_to_string(dest).unwrap();
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("<polyline").count(), 2);
}

#[test]
fn shipped_scenarios_load() {
    let text = fs::read_to_string(scenarios_dir().join("default.toml")).unwrap();
    assert_eq!(Scenario::from_toml(&text).unwrap(), Scenario::default());

    let row = scenarios_dir().join("greenhouse_row.toml");
    let o = stickbug(&["validate", row.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = Scenario::from_toml(&fs::read_to_string(&row).unwrap()).unwrap();
    assert!(!s.waypoints.is_empty() && !s.obstacles.is_empty());
}
