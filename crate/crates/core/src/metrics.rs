//! Trial metrics derived purely from an event log.

use serde::{Deserialize, Serialize};

use crate::log::{EventKind, EventLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub arms: usize,
    pub duration: f64,
    pub attempts: usize,
    pub successes: usize,
    /// Attempts that ended with the flower lost from view during servoing.
    pub lost: usize,
    /// Targets dropped before brushing (not counted as attempts).
    pub aborted: usize,
    /// Flowers pollinated for the first time.
    pub pollinated: usize,
    pub mm_conflicts: usize,
    pub anomalies: usize,
    pub attempts_per_min: f64,
    /// `None` when there were no attempts.
    pub success_rate: Option<f64>,
    /// Attempts in each whole minute of the trial.
    pub per_minute: Vec<usize>,
    /// `(time, cumulative attempts)` at every attempt.
    pub cumulative: Vec<(f64, usize)>,
}

impl TrialRecord {
    /// Cumulative attempts at time `t`.
    pub fn cumulative_at(&self, t: f64) -> usize {
        self.cumulative.iter().take_while(|(at, _)| *at <= t).last().map_or(0, |(_, n)| *n)
    }
}

pub fn metrics(log: &EventLog) -> TrialRecord {
    let (seed, arms, dt, duration) = log.trial_start().unwrap_or((0, 0, 0.05, 0.0));
    let minutes = (duration / 60.0).ceil().max(1.0) as usize;
    let mut rec = TrialRecord {
        seed,
        arms,
        duration,
        attempts: 0,
        successes: 0,
        lost: 0,
        aborted: 0,
        pollinated: 0,
        mm_conflicts: 0,
        anomalies: 0,
        attempts_per_min: 0.0,
        success_rate: None,
        per_minute: vec![0; minutes],
        cumulative: Vec::new(),
    };
    for e in log.events() {
        match &e.kind {
            EventKind::Attempt { success, lost, .. } => {
                let t = e.time(dt);
                rec.attempts += 1;
                rec.successes += usize::from(*success);
                rec.lost += usize::from(*lost);
                let bucket = ((t / 60.0).floor() as usize).min(minutes - 1);
                rec.per_minute[bucket] += 1;
                rec.cumulative.push((t, rec.attempts));
            }
            EventKind::Success { .. } => rec.pollinated += 1,
            EventKind::Aborted { .. } => rec.aborted += 1,
            EventKind::RefereeCmd { command, reason, .. } => {
                use crate::bus::{Command, ConflictReason};
                match (reason, command) {
                    (ConflictReason::MMConflict, Command::Continue) => rec.mm_conflicts += 1,
                    (ConflictReason::Anomaly, _) => rec.anomalies += 1,
                    _ => {}
                }
            }
            _ => {}
        }
    }
    if duration > 0.0 {
        rec.attempts_per_min = rec.attempts as f64 / (duration / 60.0);
    }
    if rec.attempts > 0 {
        rec.success_rate = Some(rec.successes as f64 / rec.attempts as f64);
    }
    rec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::Agent;
    use crate::model::{ArmId, TrackId};

    fn log_with(attempts: &[(u64, bool)]) -> EventLog {
        let mut log = EventLog::new();
        log.append_tick(0, vec![(Agent::Engine, EventKind::TrialStart { seed: 1, arms: 6, dt: 0.05, duration: 300.0 })]);
        let arm = Agent::Arm(ArmId::new(0).unwrap());
        for (i, &(tick, success)) in attempts.iter().enumerate() {
            log.append_tick(tick, vec![(arm, EventKind::Attempt { track: TrackId(i as u64), success, lost: false })]);
        }
        log
    }

    #[test]
    fn eight_attempts_four_successes() {
        let ticks: Vec<(u64, bool)> = (0..8).map(|i| (100 + i * 700, i % 2 == 0)).collect();
        let r = metrics(&log_with(&ticks));
        assert_eq!(r.attempts, 8);
        assert_eq!(r.successes, 4);
        assert!((r.attempts_per_min - 1.6).abs() < 1e-12);
        assert_eq!(r.success_rate, Some(0.5));
        assert_eq!(r.per_minute.iter().sum::<usize>(), 8);
    }

    #[test]
    fn zero_attempts() {
        let r = metrics(&log_with(&[]));
        assert_eq!(r.attempts_per_min, 0.0);
        assert_eq!(r.success_rate, None);
        assert_eq!(r.per_minute, vec![0; 5]);
    }

    #[test]
    fn first_minute_cluster() {
        // ticks are 0.05 s; everything before tick 1200 is minute one
        let r = metrics(&log_with(&[(10, true), (500, false), (1199, true)]));
        assert_eq!(r.per_minute, vec![3, 0, 0, 0, 0]);
        assert_eq!(r.cumulative_at(30.0), 2);
        assert_eq!(r.cumulative_at(300.0), 3);
    }
}
