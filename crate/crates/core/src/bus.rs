//! Inter-agent messages and the tick-boundary bus.
//!
//! Only three message kinds ever cross an agent boundary. A message sent
//! during tick `k` is delivered at the start of tick `k + 1`.

use serde::{Deserialize, Serialize};

use crate::arm::ArmMode;
use crate::model::{ArmId, Pose3D, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStateMsg {
    pub arm: ArmId,
    pub tip: Pose3D,
    pub mode: ArmMode,
    /// Where the arm is heading to pollinate, if anywhere.
    pub target: Option<Vec3>,
    pub last_success_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollinatedMsg {
    pub arm: ArmId,
    /// Robot base frame.
    pub position: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Command {
    Continue,
    GoHome,
}

text_enum!(Command { Continue, GoHome });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConflictReason {
    MMConflict,
    Anomaly,
}

text_enum!(ConflictReason { MMConflict, Anomaly });

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefereeCmd {
    pub arm: ArmId,
    pub command: Command,
    pub reason: ConflictReason,
    pub issued_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Message {
    State(AgentStateMsg),
    Pollinated(PollinatedMsg),
    Referee(RefereeCmd),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub sent_tick: u64,
    pub message: Message,
}

/// Messages visible to agents during one tick, sorted by sender.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Inbox {
    pub tick: u64,
    pub states: Vec<AgentStateMsg>,
    pub pollinated: Vec<PollinatedMsg>,
    pub referee: Vec<RefereeCmd>,
}

impl Inbox {
    pub fn state_of(&self, arm: ArmId) -> Option<&AgentStateMsg> {
        self.states.iter().find(|s| s.arm == arm)
    }
}

#[derive(Debug, Default)]
pub struct Bus {
    in_flight: Vec<Envelope>,
    history: Option<Vec<Envelope>>,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps a copy of every delivered message for inspection.
    pub fn with_history() -> Self {
        Self { in_flight: Vec::new(), history: Some(Vec::new()) }
    }

    pub fn send(&mut self, tick: u64, message: Message) {
        self.in_flight.push(Envelope { sent_tick: tick, message });
    }

    /// Hands over everything sent before `tick`.
    pub fn deliver(&mut self, tick: u64) -> Inbox {
        let (ready, later): (Vec<_>, Vec<_>) = std::mem::take(&mut self.in_flight)
            .into_iter()
            .partition(|e| e.sent_tick < tick);
        self.in_flight = later;
        let mut inbox = Inbox { tick, ..Default::default() };
        for env in &ready {
            match &env.message {
                Message::State(s) => inbox.states.push(s.clone()),
                Message::Pollinated(p) => inbox.pollinated.push(p.clone()),
                Message::Referee(r) => inbox.referee.push(*r),
            }
        }
        inbox.states.sort_by_key(|s| s.arm);
        inbox.pollinated.sort_by(|a, b| {
            a.arm.cmp(&b.arm).then_with(|| {
                [a.position.x, a.position.y, a.position.z]
                    .partial_cmp(&[b.position.x, b.position.y, b.position.z])
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        inbox.referee.sort_by_key(|r| (r.arm, r.command));
        if let Some(h) = &mut self.history {
            h.extend(ready);
        }
        inbox
    }

    pub fn history(&self) -> &[Envelope] {
        self.history.as_deref().unwrap_or(&[])
    }

    pub fn pending(&self) -> usize {
        self.in_flight.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmd(arm: usize) -> Message {
        Message::Referee(RefereeCmd {
            arm: ArmId::new(arm).unwrap(),
            command: Command::GoHome,
            reason: ConflictReason::Anomaly,
            issued_at: 0.0,
        })
    }

    #[test]
    fn nothing_is_consumed_in_the_tick_it_was_sent() {
        let mut bus = Bus::with_history();
        bus.send(3, cmd(1));
        assert!(bus.deliver(3).referee.is_empty());
        let inbox = bus.deliver(4);
        assert_eq!(inbox.referee.len(), 1);
        assert!(bus.deliver(5).referee.is_empty());
        assert_eq!(bus.history().len(), 1);
        assert!(bus.history().iter().all(|e| e.sent_tick < 4));
    }

    #[test]
    fn inbox_is_sorted_by_sender() {
        let mut bus = Bus::new();
        bus.send(0, cmd(4));
        bus.send(0, cmd(1));
        let inbox = bus.deliver(1);
        assert_eq!(inbox.referee[0].arm.index(), 1);
        assert_eq!(inbox.referee[1].arm.index(), 4);
    }
}
