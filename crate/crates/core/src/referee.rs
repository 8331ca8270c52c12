//! Referee agent: watches broadcast arm states and steps in only for
//! manipulator-manipulator conflicts and isolated stalled arms.
//!
//! It never sees flower beliefs, only [`AgentStateMsg`]s.

use std::collections::BTreeMap;

use rand::Rng;

use crate::arm::ArmMode;
use crate::bus::{AgentStateMsg, Command, ConflictReason, RefereeCmd};
use crate::model::{ArmId, Params};

/// Transitive closure of pairwise target proximity over arms that have a
/// target and are not already heading home. Groups and members are sorted.
pub fn conflict_groups(states: &[AgentStateMsg], params: &Params) -> Vec<Vec<ArmId>> {
    let cand: Vec<&AgentStateMsg> = states
        .iter()
        .filter(|s| s.target.is_some() && s.mode != ArmMode::GoHome)
        .collect();
    let n = cand.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (cand[i].target.unwrap(), cand[j].target.unwrap());
            if (a - b).norm() <= params.conflict_distance {
                let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<ArmId>> = BTreeMap::new();
    for i in 0..n {
        let r = root(&mut parent, i);
        groups.entry(r).or_default().push(cand[i].arm);
    }
    let mut out: Vec<Vec<ArmId>> = groups
        .into_values()
        .filter(|g| g.len() >= 2)
        .map(|mut g| {
            g.sort();
            g
        })
        .collect();
    out.sort();
    out
}

pub struct Referee<R> {
    rng: R,
    /// Earliest time a group may be flagged again.
    cooldown: BTreeMap<Vec<ArmId>, f64>,
    last_intervention: BTreeMap<ArmId, f64>,
}

impl<R: Rng> Referee<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, cooldown: BTreeMap::new(), last_intervention: BTreeMap::new() }
    }

    /// Commands for this tick. `states` should hold one message per arm.
    pub fn detect_conflicts(&mut self, states: &[AgentStateMsg], now: f64, params: &Params) -> Vec<RefereeCmd> {
        let mut states = states.to_vec();
        states.sort_by_key(|s| s.arm);
        let mut cmds = Vec::new();
        let stale = |s: &AgentStateMsg| now - s.last_success_at > params.conflict_timeout;

        for group in conflict_groups(&states, params) {
            if self.cooldown.get(&group).is_some_and(|&until| now < until) {
                continue;
            }
            let all_stale = group
                .iter()
                .all(|id| states.iter().find(|s| s.arm == *id).is_some_and(stale));
            if !all_stale {
                continue;
            }
            let winner = group[self.rng.random_range(0..group.len())];
            for &arm in &group {
                let command = if arm == winner { Command::Continue } else { Command::GoHome };
                cmds.push(RefereeCmd { arm, command, reason: ConflictReason::MMConflict, issued_at: now });
                self.last_intervention.insert(arm, now);
            }
            self.cooldown.insert(group, now + 2.0 * params.conflict_timeout);
        }

        for s in &states {
            if matches!(s.mode, ArmMode::GoHome | ArmMode::Idle) || cmds.iter().any(|c| c.arm == s.arm) {
                continue;
            }
            let isolated = states
                .iter()
                .filter(|o| o.arm != s.arm)
                .all(|o| (o.tip.position() - s.tip.position()).norm() > params.conflict_distance);
            let since = self.last_intervention.get(&s.arm).copied().unwrap_or(f64::NEG_INFINITY).max(s.last_success_at);
            if isolated && now - since > params.anomaly_timeout {
                cmds.push(RefereeCmd { arm: s.arm, command: Command::GoHome, reason: ConflictReason::Anomaly, issued_at: now });
                self.last_intervention.insert(s.arm, now);
            }
        }
        cmds.sort_by_key(|c| (c.arm, c.command));
        cmds
    }
}
