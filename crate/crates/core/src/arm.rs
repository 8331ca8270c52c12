//! Manipulator agent.
//!
//! Each arm owns its flower store and runs a reactive state machine:
//! sweep the camera, pick the nearest unpollinated flower, move to a
//! standoff point in front of it, close in with proportional pursuit, brush,
//! report. Peers are only known through their broadcast [`AgentStateMsg`]s.
//!
//! All geometry is in the robot base frame, which every arm shares.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bus::{AgentStateMsg, Command, Inbox, Message, PollinatedMsg};
use crate::flowers::FlowerStore;
use crate::kinematics::{arm_fk, arm_ik, fan_bounds, ArmJoints};
use crate::log::EventKind;
use crate::model::{wrap, ArmId, Params, Pose3D, RailSide, Tier, TrackId, Vec3};
use crate::perception::Detection;
use crate::rng::SimRng;
use crate::world::Contact;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArmMode {
    Search,
    Approach,
    Servo,
    Brush,
    Retreat,
    GoHome,
    Idle,
}

text_enum!(ArmMode { Search, Approach, Servo, Brush, Retreat, GoHome, Idle });

impl ArmMode {
    pub fn has_target(self) -> bool {
        matches!(self, ArmMode::Approach | ArmMode::Servo | ArmMode::Brush)
    }
}

/// Why a selected target was dropped before brushing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AbortReason {
    Unreachable,
    TrackLost,
    Pollinated,
    Timeout,
    Clearance,
    Referee,
    Deactivated,
}

text_enum!(AbortReason { Unreachable, TrackLost, Pollinated, Timeout, Clearance, Referee, Deactivated });

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmBehaviorState {
    pub mode: ArmMode,
    pub target: Option<TrackId>,
    pub state_entered_at: f64,
    pub last_success_at: f64,
}

/// Everything an arm sees during one tick.
#[derive(Debug, Clone, Copy)]
pub struct ArmInput<'a> {
    pub now: f64,
    pub dt: f64,
    /// False while the base is driving; arms fold and wait.
    pub active: bool,
    /// Measured joints (after the engine applied last tick's command).
    pub joints: ArmJoints,
    /// This tick's detections, base frame.
    pub detections: &'a [Detection],
    pub inbox: &'a Inbox,
    /// Contact the engine observed while this arm brushed last tick.
    pub contact: Option<Contact>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArmOutput {
    pub command: ArmJoints,
    pub brushing: bool,
    pub messages: Vec<Message>,
    pub events: Vec<EventKind>,
}

/// Folded pose at the outer fan edge, carriage at its tier height.
pub fn home_pose(id: ArmId, params: &Params) -> Pose3D {
    let z: f64 = match id.tier() {
        Tier::Lower => 0.5,
        Tier::Middle => 1.0,
        Tier::Upper => 1.5,
    };
    let z = z.clamp(params.mast_z_min, params.mast_z_max);
    let (lo, hi) = fan_bounds(id.side());
    let edge = 5.0 * PI / 180.0;
    let az = match id.side() {
        RailSide::Left => lo + edge,
        RailSide::Right => hi - edge,
    };
    let r = params.home_radius;
    Pose3D::new(r * az.cos(), r * az.sin(), z, 0.0, az)
}

/// The end-effector camera sits `camera_offset` behind the tip, looking
/// along the tip axis.
pub fn camera_pose(tip: &Pose3D, params: &Params) -> Pose3D {
    tip.with_position(tip.position() - tip.axis() * params.camera_offset)
}

/// Clamps carriage heights of one rail, listed lower to upper, so that
/// neighbours keep `rail_min_separation` and all stay on the mast. Lower
/// tiers win contested space.
pub fn same_rail_constraint(targets: &[f64], params: &Params) -> Vec<f64> {
    let n = targets.len();
    let sep = params.rail_min_separation;
    let mut out: Vec<f64> = Vec::with_capacity(n);
    for (i, &z) in targets.iter().enumerate() {
        let lo = out.last().map_or(params.mast_z_min, |prev| prev + sep);
        let hi = params.mast_z_max - (n - 1 - i) as f64 * sep;
        out.push(z.max(lo).min(hi));
    }
    out
}

/// Clamps a tip pose into the rail's reachable volume.
pub fn project_to_workspace(p: &Pose3D, side: RailSide, params: &Params) -> Pose3D {
    let (lo, hi) = fan_bounds(side);
    let min_r = 0.02;
    let r = p.radius();
    let az = if r < 1e-9 { (lo + hi) / 2.0 } else { p.azimuth() }.clamp(lo, hi);
    let r = r.clamp(min_r, params.arm_reach - 1e-9);
    Pose3D::new(
        r * az.cos(),
        r * az.sin(),
        p.z.clamp(params.mast_z_min, params.mast_z_max),
        p.pitch.clamp(-PI / 2.0, PI / 2.0),
        p.yaw,
    )
}

fn point_segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 < 1e-18 {
        return (p - a).norm();
    }
    let s = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * s)).norm()
}

/// Two unit vectors spanning the plane perpendicular to `axis`.
fn perpendicular_basis(axis: Vec3) -> (Vec3, Vec3) {
    let helper = if axis.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
    let u = axis.cross(&helper).normalize();
    let v = axis.cross(&u);
    (u, v)
}

/// Moves each angle toward its goal by at most `max_step`.
fn slew(from: &Pose3D, to: &Pose3D, max_step: f64) -> (f64, f64) {
    let step = |a: f64, b: f64| a + wrap(b - a).clamp(-max_step, max_step);
    (step(from.pitch, to.pitch), step(from.yaw, to.yaw))
}

pub struct ArmAgent {
    id: ArmId,
    params: Arc<Params>,
    state: ArmBehaviorState,
    store: FlowerStore,
    rng: SimRng,
    phase: [f64; 3],
    search_started: f64,
    skip: BTreeMap<TrackId, f64>,
    /// Unit approach direction (toward the flower), frozen on selection.
    axis: Vec3,
    brush_origin: Pose3D,
    brush_contact: Option<Contact>,
    retreat_goal: Vec3,
    /// Target position remembered through a retreat.
    intent: Option<Vec3>,
    right_of_way_until: f64,
    home_since: Option<f64>,
    was_active: bool,
    last_tip: Pose3D,
}

impl ArmAgent {
    pub fn new(id: ArmId, params: Arc<Params>, mut rng: SimRng) -> Self {
        let phase = [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)];
        let home = home_pose(id, &params);
        Self {
            id,
            params,
            state: ArmBehaviorState {
                mode: ArmMode::Idle,
                target: None,
                state_entered_at: 0.0,
                last_success_at: 0.0,
            },
            store: FlowerStore::new(),
            rng,
            phase,
            search_started: 0.0,
            skip: BTreeMap::new(),
            axis: Vec3::x(),
            brush_origin: home,
            brush_contact: None,
            retreat_goal: home.position(),
            intent: None,
            right_of_way_until: f64::NEG_INFINITY,
            home_since: None,
            was_active: false,
            last_tip: home,
        }
    }

    pub fn id(&self) -> ArmId {
        self.id
    }

    pub fn state(&self) -> &ArmBehaviorState {
        &self.state
    }

    pub fn store(&self) -> &FlowerStore {
        &self.store
    }

    pub fn home(&self) -> Pose3D {
        home_pose(self.id, &self.params)
    }

    pub fn home_joints(&self) -> ArmJoints {
        arm_ik(&self.home(), self.id.side(), &self.params).expect("home pose is reachable")
    }

    fn enter(&mut self, mode: ArmMode, now: f64, events: &mut Vec<EventKind>) {
        if mode == self.state.mode {
            return;
        }
        events.push(EventKind::StateChange { from: self.state.mode, to: mode });
        self.state.mode = mode;
        self.state.state_entered_at = now;
        if !mode.has_target() {
            self.state.target = None;
        }
        match mode {
            ArmMode::Search => {
                self.search_started = now;
                self.phase[2] = self.rng.random_range(0.0..TAU);
            }
            ArmMode::GoHome => self.home_since = None,
            ArmMode::Brush => self.brush_contact = None,
            _ => {}
        }
    }

    fn abort(&mut self, reason: AbortReason, next: ArmMode, now: f64, events: &mut Vec<EventKind>) {
        if let Some(track) = self.state.target {
            events.push(EventKind::Aborted { track, reason });
        }
        self.enter(next, now, events);
    }

    fn skip_target(&mut self, now: f64) {
        if let Some(t) = self.state.target {
            self.skip.insert(t, now + self.params.skip_duration);
        }
    }

    fn search_goal(&self, now: f64) -> Pose3D {
        let p = &self.params;
        let tau = now - self.search_started;
        let w = TAU / p.search_period;
        let (lo, hi) = fan_bounds(self.id.side());
        let center = (lo + hi) / 2.0;
        let az = center + p.search_yaw_amplitude * (w * tau + self.phase[0]).sin();
        let pitch = p.search_pitch_amplitude * (0.61 * w * tau + self.phase[1]).sin();
        let z = self.home().z + p.search_z_amplitude * (0.37 * w * tau + self.phase[2]).sin();
        let r = p.home_radius;
        Pose3D::new(r * az.cos(), r * az.sin(), z, pitch, az)
    }

    /// True when a peer working in the workspace is within clearance of the
    /// tip or of the straight path to `goal`.
    fn peer_in_the_way(&self, tip: Vec3, goal: Vec3, inbox: &Inbox, now: f64) -> bool {
        if now < self.right_of_way_until {
            return false;
        }
        let c = self.params.arm_clearance;
        inbox
            .states
            .iter()
            .filter(|s| s.arm != self.id && s.mode.has_target())
            .any(|s| {
                let q = s.tip.position();
                (q - tip).norm() < c || point_segment_distance(q, tip, goal) < c
            })
    }

    fn try_select(&mut self, tip: &Pose3D, now: f64) -> bool {
        let p = Arc::clone(&self.params);
        let side = self.id.side();
        loop {
            let skip = &self.skip;
            let pick = self
                .store
                .nearest_unpollinated(tip.position(), side, &p, |id| skip.get(&id).is_some_and(|&until| until > now));
            let Some(id) = pick else { return false };
            let track = self.store.get(id).expect("picked track exists");
            let normal = track.pose.axis();
            let flower = track.position();
            let standoff = flower + normal * p.standoff;
            let reachable = arm_ik(&Pose3D::looking(standoff, -normal), side, &p).is_ok()
                && arm_ik(&Pose3D::looking(flower, -normal), side, &p).is_ok();
            if reachable {
                self.state.target = Some(id);
                self.axis = -normal;
                return true;
            }
            self.skip.insert(id, now + p.skip_duration);
        }
    }

    /// One tick of behavior.
    pub fn step(&mut self, input: &ArmInput) -> ArmOutput {
        let p = Arc::clone(&self.params);
        let now = input.now;
        let mut out = ArmOutput::default();
        let tip = arm_fk(&input.joints, &p).unwrap_or(self.last_tip);
        self.last_tip = tip;

        if !input.active {
            if self.state.mode != ArmMode::Idle {
                self.abort(AbortReason::Deactivated, ArmMode::Idle, now, &mut out.events);
            }
            if self.was_active {
                // beliefs are base-frame; they go stale once the base moves
                self.store = FlowerStore::new();
                self.skip.clear();
                self.was_active = false;
            }
            out.command = self.move_to(&tip, &self.home(), false, input.dt);
            out.messages.push(self.state_message(&tip));
            return out;
        }
        self.was_active = true;

        let me = self.id;
        for cmd in input.inbox.referee.iter().filter(|c| c.arm == me) {
            match cmd.command {
                Command::GoHome => {
                    if !matches!(self.state.mode, ArmMode::GoHome | ArmMode::Idle) {
                        self.intent = None;
                        self.abort(AbortReason::Referee, ArmMode::GoHome, now, &mut out.events);
                    }
                }
                Command::Continue => self.right_of_way_until = now + p.conflict_timeout,
            }
        }

        let shared: Vec<Vec3> = input
            .inbox
            .pollinated
            .iter()
            .filter(|m| m.arm != self.id)
            .map(|m| m.position)
            .collect();
        for id in self.store.merge_pollinated(&shared, now, &p) {
            out.events.push(EventKind::TrackCreated { track: id });
        }
        let report = self.store.associate(input.detections, now, &p);
        for id in report.created {
            out.events.push(EventKind::TrackCreated { track: id });
        }
        for id in self.store.expire(now) {
            self.skip.remove(&id);
            out.events.push(EventKind::TrackExpired { track: id });
        }
        self.skip.retain(|_, until| *until > now);

        if let Some(c) = input.contact {
            if self.state.mode == ArmMode::Brush {
                let better = match self.brush_contact {
                    None => true,
                    Some(prev) => !prev.newly_pollinated && c.newly_pollinated,
                };
                if better {
                    self.brush_contact = Some(c);
                }
            }
        }

        let (goal, proportional, brushing) = self.transition(&tip, input, &mut out);
        out.brushing = brushing;
        out.command = if brushing {
            let target = project_to_workspace(&goal, self.id.side(), &p);
            arm_ik(&target, self.id.side(), &p).unwrap_or(input.joints)
        } else {
            self.move_to(&tip, &goal, proportional, input.dt)
        };
        out.messages.push(self.state_message(&tip));
        out
    }

    /// Runs the state machine and returns the tip goal for this tick,
    /// whether motion toward it is proportional, and whether the brush is on.
    fn transition(&mut self, tip: &Pose3D, input: &ArmInput, out: &mut ArmOutput) -> (Pose3D, bool, bool) {
        let p = Arc::clone(&self.params);
        let now = input.now;
        let side = self.id.side();
        let events = &mut out.events;
        let elapsed = now - self.state.state_entered_at;

        if self.state.mode == ArmMode::Idle {
            self.enter(ArmMode::Search, now, events);
        }

        match self.state.mode {
            ArmMode::Search | ArmMode::Idle => {
                if now - self.state.state_entered_at >= p.search_settle && self.try_select(tip, now) {
                    self.intent = None;
                    self.enter(ArmMode::Approach, now, events);
                    return self.transition(tip, input, out);
                }
                (self.search_goal(now), false, false)
            }
            ArmMode::Approach => {
                let Some(track) = self.state.target.and_then(|id| self.store.get(id)) else {
                    self.abort(AbortReason::TrackLost, ArmMode::Search, now, events);
                    return (self.search_goal(now), false, false);
                };
                if track.pollinated {
                    self.abort(AbortReason::Pollinated, ArmMode::Search, now, events);
                    return (self.search_goal(now), false, false);
                }
                let flower = track.position();
                let standoff = flower - self.axis * p.standoff;
                let goal = Pose3D::looking(standoff, self.axis);
                if arm_ik(&goal, side, &p).is_err() {
                    self.skip_target(now);
                    self.abort(AbortReason::Unreachable, ArmMode::Search, now, events);
                    return (self.search_goal(now), false, false);
                }
                if self.peer_in_the_way(tip.position(), standoff, input.inbox, now) {
                    return self.start_retreat(tip, flower, now, events);
                }
                if elapsed > p.approach_timeout {
                    self.skip_target(now);
                    self.abort(AbortReason::Timeout, ArmMode::Search, now, events);
                    return (self.search_goal(now), false, false);
                }
                if (tip.position() - standoff).norm() < 0.01 {
                    if now - track.last_seen > p.servo_lost_timeout {
                        // nothing there from up close
                        self.skip_target(now);
                        self.abort(AbortReason::TrackLost, ArmMode::Search, now, events);
                        return (self.search_goal(now), false, false);
                    }
                    self.enter(ArmMode::Servo, now, events);
                }
                (goal, true, false)
            }
            ArmMode::Servo => {
                let Some(track) = self.state.target.and_then(|id| self.store.get(id)) else {
                    self.abort(AbortReason::TrackLost, ArmMode::Search, now, events);
                    return (self.search_goal(now), false, false);
                };
                if track.pollinated {
                    self.abort(AbortReason::Pollinated, ArmMode::Search, now, events);
                    return (self.search_goal(now), false, false);
                }
                let track_id = track.id;
                let flower = track.position();
                if now - track.last_seen > p.servo_lost_timeout {
                    // the flower left the camera view up close: a failed try
                    events.push(EventKind::Attempt { track: track_id, success: false, lost: true });
                    self.skip.insert(track_id, f64::INFINITY);
                    self.enter(ArmMode::Search, now, events);
                    return (self.search_goal(now), false, false);
                }
                if self.peer_in_the_way(tip.position(), flower, input.inbox, now) {
                    return self.start_retreat(tip, flower, now, events);
                }
                if elapsed > p.servo_timeout {
                    self.skip_target(now);
                    self.abort(AbortReason::Timeout, ArmMode::Search, now, events);
                    return (self.search_goal(now), false, false);
                }
                let goal = Pose3D::looking(flower, self.axis);
                if (flower - tip.position()).norm() <= p.contact_radius + p.servo_epsilon {
                    self.enter(ArmMode::Brush, now, events);
                    self.brush_origin = Pose3D::looking(tip.position(), self.axis);
                    return self.transition(tip, input, out);
                }
                (goal, true, false)
            }
            ArmMode::Brush => {
                let tau = now - self.state.state_entered_at;
                if tau > p.brush_duration {
                    self.finish_brush(now, events, &mut out.messages);
                    return (self.search_goal(now), false, false);
                }
                let s = (PI * tau / p.brush_duration).sin();
                let (u, v) = perpendicular_basis(self.axis);
                let spin = TAU * 2.0 * tau;
                let wiggle = (u * spin.cos() + v * spin.sin()) * (p.brush_wiggle * s);
                let pos = self.brush_origin.position() + self.axis * (p.brush_extend * s) + wiggle;
                (Pose3D::looking(pos, self.axis), false, true)
            }
            ArmMode::Retreat => {
                let done = (tip.position() - self.retreat_goal).norm() < 0.01 || elapsed > p.retreat_timeout;
                if done {
                    self.enter(ArmMode::Search, now, events);
                    return (self.search_goal(now), false, false);
                }
                (Pose3D::looking(self.retreat_goal, self.axis), false, false)
            }
            ArmMode::GoHome => {
                let home = self.home();
                if self.home_since.is_none() && (tip.position() - home.position()).norm() < 0.01 {
                    self.home_since = Some(now);
                }
                if self.home_since.is_some_and(|t| now - t >= p.home_dwell) {
                    self.enter(ArmMode::Search, now, events);
                    return (self.search_goal(now), false, false);
                }
                (home, false, false)
            }
        }
    }

    fn start_retreat(&mut self, tip: &Pose3D, flower: Vec3, now: f64, events: &mut Vec<EventKind>) -> (Pose3D, bool, bool) {
        let back = tip.with_position(tip.position() - self.axis * self.params.retreat_distance);
        self.retreat_goal = project_to_workspace(&back, self.id.side(), &self.params).position();
        self.intent = Some(flower);
        self.abort(AbortReason::Clearance, ArmMode::Retreat, now, events);
        (Pose3D::looking(self.retreat_goal, self.axis), false, false)
    }

    fn finish_brush(&mut self, now: f64, events: &mut Vec<EventKind>, messages: &mut Vec<Message>) {
        let track = self.state.target.expect("brush has a target");
        let contact = self.brush_contact.take();
        events.push(EventKind::Attempt { track, success: contact.is_some(), lost: false });
        if let Some(c) = contact {
            if c.newly_pollinated {
                events.push(EventKind::Success { flower: c.flower });
            }
            if let Some(t) = self.store.get(track) {
                messages.push(Message::Pollinated(PollinatedMsg { arm: self.id, position: t.position() }));
            }
            self.store.mark_pollinated(track);
            self.state.last_success_at = now;
        } else {
            // each flower gets one attempt per arm
            self.skip.insert(track, f64::INFINITY);
        }
        self.enter(ArmMode::Search, now, events);
    }

    /// Steps the tip toward `goal`, either at full speed or proportionally
    /// (`k_servo`), and converts the result to joints.
    fn move_to(&self, tip: &Pose3D, goal: &Pose3D, proportional: bool, dt: f64) -> ArmJoints {
        let p = &self.params;
        let side = self.id.side();
        let goal = project_to_workspace(goal, side, p);
        let d = goal.position() - tip.position();
        let dist = d.norm();
        let speed = if proportional { (p.k_servo * dist).min(p.arm_max_speed) } else { p.arm_max_speed };
        let step = (speed * dt).min(dist);
        let pos = if dist > 1e-12 { tip.position() + d * (step / dist) } else { goal.position() };
        let (pitch, yaw) = slew(tip, &goal, p.wrist_max_rate * dt);
        let next = project_to_workspace(&Pose3D::new(pos.x, pos.y, pos.z, pitch, yaw), side, p);
        arm_ik(&next, side, p).unwrap_or_else(|_| self.home_joints())
    }

    fn state_message(&self, tip: &Pose3D) -> Message {
        let target = match self.state.mode {
            ArmMode::Retreat => self.intent,
            m if m.has_target() => self.state.target.and_then(|id| self.store.get(id)).map(|t| t.position()),
            _ => None,
        };
        Message::State(AgentStateMsg {
            arm: self.id,
            tip: *tip,
            mode: self.state.mode,
            target,
            last_success_at: self.state.last_success_at,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::{ConflictReason, RefereeCmd};
    use crate::kinematics::workspace_contains;
    use crate::model::FlowerId;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn params() -> Params {
        Params::default()
    }

    fn agent(slot: usize) -> ArmAgent {
        ArmAgent::new(ArmId::new(slot).unwrap(), Arc::new(params()), stream(1, slot as u64))
    }

    fn det_at(p: Vec3, normal: Vec3) -> Detection {
        Detection { pose: Pose3D::looking(p, normal), center_visible: true, confidence: 1.0 }
    }

    #[test]
    fn rail_examples() {
        let p = params();
        assert_eq!(same_rail_constraint(&[0.5, 0.6, 1.8], &p), vec![0.5, 0.75, 1.8]);
        assert_eq!(same_rail_constraint(&[0.5, 1.0, 1.5], &p), vec![0.5, 1.0, 1.5]);
        let out = same_rail_constraint(&[1.0, 1.0, 1.0], &p);
        for (a, b) in out.iter().zip([1.0, 1.25, 1.5]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn rail_constraint_is_feasible(a in -1.0f64..3.0, b in -1.0f64..3.0, c in -1.0f64..3.0) {
            let p = params();
            let out = same_rail_constraint(&[a, b, c], &p);
            for z in &out {
                prop_assert!(*z >= p.mast_z_min - 1e-12 && *z <= p.mast_z_max + 1e-12);
            }
            prop_assert!(out[1] - out[0] >= p.rail_min_separation - 1e-12);
            prop_assert!(out[2] - out[1] >= p.rail_min_separation - 1e-12);
            // the lower arm is only ever moved to stay on the mast or leave room above
            let lower_hi = p.mast_z_max - 2.0 * p.rail_min_separation;
            prop_assert!((out[0] - a.clamp(p.mast_z_min, lower_hi)).abs() < 1e-12);
        }
    }

    #[test]
    fn home_is_reachable_and_folded() {
        let p = params();
        for id in ArmId::ALL {
            let h = home_pose(id, &p);
            assert!(workspace_contains(&h, id.side(), &p));
            assert!((h.radius() - p.home_radius).abs() < 1e-12);
        }
        assert_eq!(home_pose(ArmId::new(0).unwrap(), &p).z, 0.5);
        assert_eq!(home_pose(ArmId::new(4).unwrap(), &p).z, 1.0);
        assert_eq!(home_pose(ArmId::new(5).unwrap(), &p).z, 1.5);
    }

    /// Drives one arm against a fixed flower with perfect perception and
    /// engine-style contact checks, returning the events.
    fn run_single(flower: Vec3, normal: Vec3, seconds: f64) -> Vec<EventKind> {
        let p = params();
        let mut arm = agent(1);
        let mut joints = arm.home_joints();
        let inbox = Inbox::default();
        let mut contact = None;
        let mut events = Vec::new();
        let mut pollinated = false;
        let ticks = (seconds / p.tick_dt) as u64;
        for k in 0..ticks {
            let now = k as f64 * p.tick_dt;
            let tip = arm_fk(&joints, &p).unwrap();
            let cam = camera_pose(&tip, &p);
            let to = flower - cam.position();
            let seen = to.norm() <= p.camera_range && crate::model::angle_between(cam.axis(), to) <= p.camera_fov / 2.0;
            let dets: Vec<Detection> = if seen { vec![det_at(flower, normal)] } else { vec![] };
            let out = arm.step(&ArmInput { now, dt: p.tick_dt, active: true, joints, detections: &dets, inbox: &inbox, contact });
            joints = out.command;
            contact = None;
            if out.brushing {
                let tip = arm_fk(&joints, &p).unwrap();
                let aligned = crate::model::angle_between(tip.axis(), -normal) <= p.contact_cone;
                if (tip.position() - flower).norm() <= p.contact_radius && aligned {
                    contact = Some(Contact { flower: FlowerId(0), newly_pollinated: !pollinated });
                    pollinated = true;
                }
            }
            events.extend(out.events);
        }
        events
    }

    #[test]
    fn single_static_flower_is_pollinated_within_thirty_seconds() {
        let flower = Vec3::new(0.35, -0.05, 1.0);
        let events = run_single(flower, -Vec3::x(), 30.0);
        assert!(events.contains(&EventKind::Success { flower: FlowerId(0) }), "{events:?}");
        let attempts = events.iter().filter(|e| matches!(e, EventKind::Attempt { .. })).count();
        assert_eq!(attempts, 1);
        assert!(events.contains(&EventKind::StateChange { from: ArmMode::Servo, to: ArmMode::Brush }));
    }

    #[test]
    fn unreachable_flower_is_never_attempted() {
        let events = run_single(Vec3::new(0.62, -0.05, 1.0), -Vec3::x(), 20.0);
        assert!(!events.iter().any(|e| matches!(e, EventKind::Attempt { .. })));
    }

    fn peer_state(arm: usize, tip: Vec3, mode: ArmMode) -> AgentStateMsg {
        AgentStateMsg {
            arm: ArmId::new(arm).unwrap(),
            tip: Pose3D::at(tip),
            mode,
            target: None,
            last_success_at: 0.0,
        }
    }

    /// Puts an arm into Approach toward a confirmed flower.
    fn approaching(flower: Vec3) -> (ArmAgent, ArmJoints) {
        let p = params();
        let mut arm = agent(1);
        let joints = arm.home_joints();
        let inbox = Inbox::default();
        let dets = [det_at(flower, -Vec3::x())];
        let mut now = 0.0;
        while arm.state().mode != ArmMode::Approach {
            arm.step(&ArmInput { now, dt: p.tick_dt, active: true, joints, detections: &dets, inbox: &inbox, contact: None });
            now += p.tick_dt;
            assert!(now < 5.0);
        }
        (arm, joints)
    }

    #[test]
    fn close_peer_forces_retreat() {
        let p = params();
        let flower = Vec3::new(0.35, 0.0, 1.0);
        let (mut arm, joints) = approaching(flower);
        let tip = arm_fk(&joints, &p).unwrap().position();
        let inbox = Inbox {
            states: vec![peer_state(4, tip + Vec3::new(0.0, 0.10, 0.0), ArmMode::Approach)],
            ..Default::default()
        };
        let dets = [det_at(flower, -Vec3::x())];
        let out = arm.step(&ArmInput { now: 1.0, dt: p.tick_dt, active: true, joints, detections: &dets, inbox: &inbox, contact: None });
        assert_eq!(arm.state().mode, ArmMode::Retreat);
        assert!(out.events.iter().any(|e| matches!(e, EventKind::Aborted { reason: AbortReason::Clearance, .. })));
        assert!(!out.events.iter().any(|e| matches!(e, EventKind::Attempt { .. })));
        let Message::State(s) = &out.messages[0] else { panic!() };
        assert!(s.target.is_some());

        // a peer just outside clearance and off the path is ignored
        let (mut arm, joints) = approaching(flower);
        let inbox = Inbox {
            states: vec![peer_state(4, tip + Vec3::new(0.0, 0.0, 0.13), ArmMode::Approach)],
            ..Default::default()
        };
        arm.step(&ArmInput { now: 1.0, dt: p.tick_dt, active: true, joints, detections: &dets, inbox: &inbox, contact: None });
        assert_eq!(arm.state().mode, ArmMode::Approach);
    }

    #[test]
    fn referee_go_home_and_continue() {
        let p = params();
        let flower = Vec3::new(0.35, 0.0, 1.0);
        let (mut arm, joints) = approaching(flower);
        let dets = [det_at(flower, -Vec3::x())];
        let cmd = |command| RefereeCmd { arm: ArmId::new(1).unwrap(), command, reason: ConflictReason::MMConflict, issued_at: 1.0 };
        let tip = arm_fk(&joints, &p).unwrap().position();

        let inbox = Inbox {
            states: vec![peer_state(4, tip + Vec3::new(0.0, 0.05, 0.0), ArmMode::Servo)],
            referee: vec![cmd(Command::Continue)],
            ..Default::default()
        };
        arm.step(&ArmInput { now: 1.0, dt: p.tick_dt, active: true, joints, detections: &dets, inbox: &inbox, contact: None });
        assert_eq!(arm.state().mode, ArmMode::Approach, "right of way ignores clearance");

        let inbox = Inbox { referee: vec![cmd(Command::GoHome)], ..Default::default() };
        let out = arm.step(&ArmInput { now: 1.05, dt: p.tick_dt, active: true, joints, detections: &dets, inbox: &inbox, contact: None });
        assert_eq!(arm.state().mode, ArmMode::GoHome);
        assert_eq!(arm.state().target, None);
        assert!(out.events.iter().any(|e| matches!(e, EventKind::Aborted { reason: AbortReason::Referee, .. })));
    }

    #[test]
    fn lost_flower_during_servo_is_a_failed_attempt() {
        let p = params();
        let flower = Vec3::new(0.35, 0.0, 1.0);
        let (mut arm, mut joints) = approaching(flower);
        let inbox = Inbox::default();
        let dets = [det_at(flower, -Vec3::x())];
        let mut now = 1.0;
        while arm.state().mode != ArmMode::Servo {
            let out = arm.step(&ArmInput { now, dt: p.tick_dt, active: true, joints, detections: &dets, inbox: &inbox, contact: None });
            joints = out.command;
            now += p.tick_dt;
            assert!(now < 10.0);
        }
        let mut events = Vec::new();
        for _ in 0..20 {
            let out = arm.step(&ArmInput { now, dt: p.tick_dt, active: true, joints, detections: &[], inbox: &inbox, contact: None });
            joints = out.command;
            events.extend(out.events);
            now += p.tick_dt;
        }
        assert!(events.iter().any(|e| matches!(e, EventKind::Attempt { success: false, lost: true, .. })));
        assert!(events.contains(&EventKind::StateChange { from: ArmMode::Servo, to: ArmMode::Search }));
    }

    #[test]
    fn phantom_target_is_aborted_not_attempted() {
        let p = params();
        let flower = Vec3::new(0.35, 0.0, 1.0);
        let (mut arm, mut joints) = approaching(flower);
        let inbox = Inbox::default();
        let mut now = 1.0;
        let mut events = Vec::new();
        while now < 12.0 && arm.state().mode == ArmMode::Approach {
            let out = arm.step(&ArmInput { now, dt: p.tick_dt, active: true, joints, detections: &[], inbox: &inbox, contact: None });
            joints = out.command;
            events.extend(out.events);
            now += p.tick_dt;
        }
        assert!(events.iter().any(|e| matches!(e, EventKind::Aborted { reason: AbortReason::TrackLost, .. })));
        assert!(!events.iter().any(|e| matches!(e, EventKind::Attempt { .. })));
    }

    #[test]
    fn never_targets_pollinated_tracks() {
        let p = params();
        let flower = Vec3::new(0.35, 0.0, 1.0);
        let mut arm = agent(1);
        let joints = arm.home_joints();
        let inbox = Inbox {
            pollinated: vec![PollinatedMsg { arm: ArmId::new(4).unwrap(), position: flower }],
            ..Default::default()
        };
        let dets = [det_at(flower, -Vec3::x())];
        let mut now = 0.0;
        for _ in 0..100 {
            arm.step(&ArmInput { now, dt: p.tick_dt, active: true, joints, detections: &dets, inbox: &inbox, contact: None });
            assert!(!arm.state().mode.has_target());
            now += p.tick_dt;
        }
    }

    #[test]
    fn inactive_arm_idles_and_broadcasts() {
        let p = params();
        let mut arm = agent(2);
        let joints = arm.home_joints();
        let out = arm.step(&ArmInput {
            now: 0.0,
            dt: p.tick_dt,
            active: false,
            joints,
            detections: &[],
            inbox: &Inbox::default(),
            contact: None,
        });
        assert_eq!(arm.state().mode, ArmMode::Idle);
        assert_eq!(out.messages.len(), 1);
        assert!(!out.brushing);
    }
}
