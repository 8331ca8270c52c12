//! Append-only trial event log.
//!
//! Text form, one event per line after a header:
//!
//! ```text
//! # stickbug-log v1
//! 0 engine TrialStart seed=7 arms=6 dt=0.05 duration=300
//! 412 arm1 Attempt track=3 success=true lost=false
//! ```
//!
//! Fields are `key=value` pairs; floats use Rust's shortest round-trip
//! formatting so a parsed log re-serializes byte for byte.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::arm::{AbortReason, ArmMode};
use crate::bus::{Command, ConflictReason};
use crate::drive::DriveMode;
use crate::model::{ArmId, FlowerId, TrackId};
use crate::{Error, Result};

pub const HEADER: &str = "# stickbug-log v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Agent {
    Engine,
    Drive,
    Arm(ArmId),
    Referee,
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Agent::Engine => f.write_str("engine"),
            Agent::Drive => f.write_str("drive"),
            Agent::Arm(id) => write!(f, "{id}"),
            Agent::Referee => f.write_str("referee"),
        }
    }
}

impl FromStr for Agent {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "engine" => Ok(Agent::Engine),
            "drive" => Ok(Agent::Drive),
            "referee" => Ok(Agent::Referee),
            _ => parse_arm(s).map(Agent::Arm),
        }
    }
}

fn parse_arm(s: &str) -> std::result::Result<ArmId, String> {
    let idx = s
        .strip_prefix("arm")
        .and_then(|n| n.parse::<usize>().ok())
        .ok_or_else(|| format!("bad agent `{s}`"))?;
    ArmId::new(idx).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    TrialStart { seed: u64, arms: usize, dt: f64, duration: f64 },
    TrialEnd { pollinated: usize },
    StateChange { from: ArmMode, to: ArmMode },
    TrackCreated { track: TrackId },
    TrackExpired { track: TrackId },
    /// A finished try at a flower. `lost` marks a servo that lost sight of
    /// its flower before brushing.
    Attempt { track: TrackId, success: bool, lost: bool },
    /// A flower became pollinated for the first time.
    Success { flower: FlowerId },
    Aborted { track: TrackId, reason: AbortReason },
    RefereeCmd { arm: ArmId, command: Command, reason: ConflictReason },
    ModeChange { mode: DriveMode },
    Arrived { waypoint: usize },
    DriveBlocked,
    /// Smallest same-rail carriage gap observed below the limit.
    RailViolation { gap: f64 },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::TrialStart { .. } => "TrialStart",
            EventKind::TrialEnd { .. } => "TrialEnd",
            EventKind::StateChange { .. } => "StateChange",
            EventKind::TrackCreated { .. } => "TrackCreated",
            EventKind::TrackExpired { .. } => "TrackExpired",
            EventKind::Attempt { .. } => "Attempt",
            EventKind::Success { .. } => "Success",
            EventKind::Aborted { .. } => "Aborted",
            EventKind::RefereeCmd { .. } => "RefereeCmd",
            EventKind::ModeChange { .. } => "ModeChange",
            EventKind::Arrived { .. } => "Arrived",
            EventKind::DriveBlocked => "DriveBlocked",
            EventKind::RailViolation { .. } => "RailViolation",
        }
    }

    fn write_fields(&self, out: &mut String) {
        let _ = match self {
            EventKind::TrialStart { seed, arms, dt, duration } => {
                write!(out, " seed={seed} arms={arms} dt={dt} duration={duration}")
            }
            EventKind::TrialEnd { pollinated } => write!(out, " pollinated={pollinated}"),
            EventKind::StateChange { from, to } => write!(out, " from={from} to={to}"),
            EventKind::TrackCreated { track } | EventKind::TrackExpired { track } => write!(out, " track={track}"),
            EventKind::Attempt { track, success, lost } => write!(out, " track={track} success={success} lost={lost}"),
            EventKind::Success { flower } => write!(out, " flower={flower}"),
            EventKind::Aborted { track, reason } => write!(out, " track={track} reason={reason}"),
            EventKind::RefereeCmd { arm, command, reason } => {
                write!(out, " arm={arm} command={command} reason={reason}")
            }
            EventKind::ModeChange { mode } => write!(out, " mode={mode}"),
            EventKind::Arrived { waypoint } => write!(out, " waypoint={waypoint}"),
            EventKind::DriveBlocked => Ok(()),
            EventKind::RailViolation { gap } => write!(out, " gap={gap}"),
        };
    }

    fn parse(kind: &str, f: &Fields) -> std::result::Result<Self, String> {
        Ok(match kind {
            "TrialStart" => EventKind::TrialStart {
                seed: f.get("seed")?,
                arms: f.get("arms")?,
                dt: f.get("dt")?,
                duration: f.get("duration")?,
            },
            "TrialEnd" => EventKind::TrialEnd { pollinated: f.get("pollinated")? },
            "StateChange" => EventKind::StateChange { from: f.get("from")?, to: f.get("to")? },
            "TrackCreated" => EventKind::TrackCreated { track: TrackId(f.get("track")?) },
            "TrackExpired" => EventKind::TrackExpired { track: TrackId(f.get("track")?) },
            "Attempt" => EventKind::Attempt {
                track: TrackId(f.get("track")?),
                success: f.get("success")?,
                lost: f.get("lost")?,
            },
            "Success" => EventKind::Success { flower: FlowerId(f.get("flower")?) },
            "Aborted" => EventKind::Aborted { track: TrackId(f.get("track")?), reason: f.get("reason")? },
            "RefereeCmd" => EventKind::RefereeCmd {
                arm: parse_arm(f.raw("arm")?)?,
                command: f.get("command")?,
                reason: f.get("reason")?,
            },
            "ModeChange" => EventKind::ModeChange { mode: f.get("mode")? },
            "Arrived" => EventKind::Arrived { waypoint: f.get("waypoint")? },
            "DriveBlocked" => EventKind::DriveBlocked,
            "RailViolation" => EventKind::RailViolation { gap: f.get("gap")? },
            other => return Err(format!("unknown event kind `{other}`")),
        })
    }
}

struct Fields<'a>(BTreeMap<&'a str, &'a str>);

impl<'a> Fields<'a> {
    fn raw(&self, key: &str) -> std::result::Result<&'a str, String> {
        self.0.get(key).copied().ok_or_else(|| format!("missing field `{key}`"))
    }

    fn get<T: FromStr>(&self, key: &str) -> std::result::Result<T, String> {
        let v = self.raw(key)?;
        v.parse().map_err(|_| format!("bad value `{v}` for `{key}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub tick: u64,
    pub agent: Agent,
    pub kind: EventKind,
}

impl Event {
    pub fn time(&self, dt: f64) -> f64 {
        self.tick as f64 * dt
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends one tick's worth of events, ordered by agent and then by
    /// emission order within each agent.
    pub fn append_tick(&mut self, tick: u64, mut batch: Vec<(Agent, EventKind)>) {
        debug_assert!(self.events.last().is_none_or(|e| e.tick <= tick));
        batch.sort_by_key(|(a, _)| *a);
        self.events.extend(batch.into_iter().map(|(agent, kind)| Event { tick, agent, kind }));
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Header values of the trial, if present.
    pub fn trial_start(&self) -> Option<(u64, usize, f64, f64)> {
        self.events.iter().find_map(|e| match e.kind {
            EventKind::TrialStart { seed, arms, dt, duration } => Some((seed, arms, dt, duration)),
            _ => None,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.events.len() * 40 + HEADER.len() + 1);
        out.push_str(HEADER);
        out.push('\n');
        for e in &self.events {
            let _ = write!(out, "{} {} {}", e.tick, e.agent, e.kind.name());
            e.kind.write_fields(&mut out);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| Error::LogParse { line: line_no, msg };
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let tick: u64 = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| err("missing tick".into()))?;
            let agent: Agent = parts.next().ok_or_else(|| err("missing agent".into()))?.parse().map_err(err)?;
            let kind = parts.next().ok_or_else(|| err("missing event kind".into()))?;
            let mut fields = BTreeMap::new();
            for kv in parts {
                let (k, v) = kv.split_once('=').ok_or_else(|| err(format!("expected key=value, got `{kv}`")))?;
                fields.insert(k, v);
            }
            let kind = EventKind::parse(kind, &Fields(fields)).map_err(err)?;
            if let Some(prev) = events.last() {
                let prev: &Event = prev;
                if (prev.tick, prev.agent) > (tick, agent) {
                    return Err(err("events out of order".into()));
                }
            }
            events.push(Event { tick, agent, kind });
        }
        Ok(Self { events })
    }
}
