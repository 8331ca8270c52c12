//! Fixed-timestep lockstep scheduler.
//!
//! Per tick `k` (time `k * dt`): deliver messages sent at `k - 1`, advance
//! the world, sense, step every agent on the same snapshot, then apply the
//! commands, check contacts and queue outgoing messages for `k + 1`.

use std::sync::Arc;

use rand::seq::SliceRandom;

use crate::arm::{camera_pose, same_rail_constraint, ArmAgent, ArmInput, ArmOutput};
use crate::bus::{Bus, Envelope, Message};
use crate::drive::{integrate, DriveAgent};
use crate::kinematics::{arm_fk, kiwi_forward, kiwi_inverse, ArmJoints};
use crate::log::{Agent, EventKind, EventLog};
use crate::model::{arms_for_count, Params, Pose2D, Pose3D, RailSide, Vec3};
use crate::perception::{detect, Detection};
use crate::referee::Referee;
use crate::rng::{stream, SimRng, STREAM_ENGINE, STREAM_REFEREE};
use crate::scenario::Scenario;
use crate::world::{Contact, Scene, TipState};
use crate::Result;

/// Order in which arm agents are stepped inside a tick. The outcome must
/// not depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecOrder {
    #[default]
    Sequential,
    Reversed,
    /// A fresh random permutation every tick from the given seed.
    Shuffled(u64),
}

fn pose_to_world(base: &Pose2D, p: &Pose3D) -> Pose3D {
    let w = base.to_world(p.position());
    Pose3D::new(w.x, w.y, w.z, p.pitch, p.yaw + base.theta)
}

fn pose_to_base(base: &Pose2D, p: &Pose3D) -> Pose3D {
    let l = base.to_local(p.position());
    Pose3D::new(l.x, l.y, l.z, p.pitch, p.yaw - base.theta)
}

pub struct Engine {
    params: Arc<Params>,
    seed: u64,
    scene: Scene,
    base: Pose2D,
    drive: DriveAgent,
    arms: Vec<ArmAgent>,
    joints: Vec<ArmJoints>,
    brushing: Vec<bool>,
    contacts: Vec<Option<Contact>>,
    sensor_rngs: Vec<SimRng>,
    prev_tips: Vec<Vec3>,
    referee: Referee<SimRng>,
    bus: Bus,
    log: EventLog,
    tick: u64,
    order: ExecOrder,
    order_rng: SimRng,
    min_rail_gap: f64,
}

impl Engine {
    pub fn new(scenario: &Scenario, n_arms: usize, seed: u64) -> Result<Self> {
        scenario.validate()?;
        let params = Arc::new(scenario.effective_params());
        let ids = arms_for_count(n_arms)?;
        let arms: Vec<ArmAgent> = ids
            .iter()
            .map(|&id| ArmAgent::new(id, Arc::clone(&params), stream(seed, id.index() as u64)))
            .collect();
        let joints: Vec<ArmJoints> = arms.iter().map(|a| a.home_joints()).collect();
        let base = scenario.start_pose();
        let prev_tips = joints
            .iter()
            .map(|j| base.to_world(arm_fk(j, &params).expect("home is valid").position()))
            .collect();
        let mut log = EventLog::new();
        log.append_tick(
            0,
            vec![(
                Agent::Engine,
                EventKind::TrialStart { seed, arms: n_arms, dt: params.tick_dt, duration: params.trial_duration },
            )],
        );
        Ok(Self {
            seed,
            scene: scenario.build_scene(seed),
            base,
            drive: DriveAgent::new(scenario.waypoint_poses()),
            brushing: vec![false; arms.len()],
            contacts: vec![None; arms.len()],
            sensor_rngs: ids.iter().map(|id| stream(seed, 10 + id.index() as u64)).collect(),
            prev_tips,
            referee: Referee::new(stream(seed, STREAM_REFEREE)),
            bus: Bus::new(),
            log,
            tick: 0,
            order: ExecOrder::Sequential,
            order_rng: stream(seed, STREAM_ENGINE),
            min_rail_gap: f64::INFINITY,
            arms,
            joints,
            params,
        })
    }

    pub fn with_order(mut self, order: ExecOrder) -> Self {
        self.order = order;
        if let ExecOrder::Shuffled(s) = order {
            self.order_rng = stream(s, STREAM_ENGINE);
        }
        self
    }

    /// Keeps every delivered message for inspection.
    pub fn with_message_history(mut self) -> Self {
        self.bus = Bus::with_history();
        self
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn base(&self) -> Pose2D {
        self.base
    }

    pub fn arms(&self) -> &[ArmAgent] {
        &self.arms
    }

    pub fn joints(&self) -> &[ArmJoints] {
        &self.joints
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn message_history(&self) -> &[Envelope] {
        self.bus.history()
    }

    /// Smallest same-rail carriage gap seen so far.
    pub fn min_rail_gap(&self) -> f64 {
        self.min_rail_gap
    }

    pub fn is_done(&self) -> bool {
        self.tick >= self.params.trial_ticks()
    }

    /// Tip pose of arm slot `i` in the world frame.
    pub fn tip_world(&self, i: usize) -> Pose3D {
        let tip = arm_fk(&self.joints[i], &self.params).expect("engine keeps joints valid");
        pose_to_world(&self.base, &tip)
    }

    fn sense(&mut self, i: usize) -> Vec<Detection> {
        let p = &self.params;
        let tip = arm_fk(&self.joints[i], p).expect("engine keeps joints valid");
        let cam = camera_pose(&tip, p);
        let cam_world = pose_to_world(&self.base, &cam);
        let mut seen = self.scene.visible_flowers(&cam_world, p.camera_fov, p.camera_range, p);
        for s in &mut seen {
            s.pose = pose_to_base(&self.base, &s.pose);
        }
        detect(&seen, &cam, p, &mut self.sensor_rngs[i])
    }

    /// Advances one tick.
    pub fn step(&mut self) {
        let k = self.tick;
        let p = Arc::clone(&self.params);
        let now = k as f64 * p.tick_dt;
        let inbox = self.bus.deliver(k);
        let mut batch: Vec<(Agent, EventKind)> = Vec::new();

        let tips: Vec<TipState> = (0..self.arms.len())
            .map(|i| {
                let pos = self.tip_world(i).position();
                let vel = (pos - self.prev_tips[i]) / p.tick_dt;
                self.prev_tips[i] = pos;
                TipState { position: pos, velocity: vel }
            })
            .collect();
        self.scene.step_world(now, &tips, &p);

        let active = self.drive.parked();
        let detections: Vec<Vec<Detection>> = (0..self.arms.len())
            .map(|i| if active { self.sense(i) } else { Vec::new() })
            .collect();

        let mut order: Vec<usize> = (0..self.arms.len()).collect();
        match self.order {
            ExecOrder::Sequential => {}
            ExecOrder::Reversed => order.reverse(),
            ExecOrder::Shuffled(_) => order.shuffle(&mut self.order_rng),
        }
        let mut outputs: Vec<Option<ArmOutput>> = vec![None; self.arms.len()];
        for &i in &order {
            let input = ArmInput {
                now,
                dt: p.tick_dt,
                active,
                joints: self.joints[i],
                detections: &detections[i],
                inbox: &inbox,
                contact: self.contacts[i],
            };
            outputs[i] = Some(self.arms[i].step(&input));
        }

        let drive_out = self.drive.step(&self.base, &self.scene.grid, &p);
        batch.extend(drive_out.events.into_iter().map(|e| (Agent::Drive, e)));

        let referee_cmds = if inbox.states.is_empty() {
            Vec::new()
        } else {
            self.referee.detect_conflicts(&inbox.states, now, &p)
        };

        let outputs: Vec<ArmOutput> = outputs.into_iter().map(|o| o.expect("every arm stepped")).collect();
        let mut commands: Vec<ArmJoints> = outputs.iter().map(|o| o.command).collect();
        for side in [RailSide::Left, RailSide::Right] {
            let idx: Vec<usize> = (0..self.arms.len()).filter(|&i| self.arms[i].id().side() == side).collect();
            let zs: Vec<f64> = idx.iter().map(|&i| commands[i].z).collect();
            let clamped = same_rail_constraint(&zs, &p);
            for (&i, z) in idx.iter().zip(clamped) {
                commands[i].z = z;
            }
            for w in idx.windows(2) {
                let gap = commands[w[1]].z - commands[w[0]].z;
                self.min_rail_gap = self.min_rail_gap.min(gap);
                if gap < p.rail_min_separation - 1e-9 {
                    batch.push((Agent::Engine, EventKind::RailViolation { gap }));
                }
            }
        }
        self.joints = commands;

        for i in 0..self.arms.len() {
            self.brushing[i] = outputs[i].brushing;
            self.contacts[i] = if self.brushing[i] {
                let tip = self.tip_world(i);
                self.scene.check_contact(&tip, true, &p)
            } else {
                None
            };
        }

        let wheels = kiwi_inverse(drive_out.twist, p.wheel_base_radius).saturated(p.max_wheel_speed);
        let actual = kiwi_forward(wheels, p.wheel_base_radius);
        self.base = integrate(&self.base, &actual, p.tick_dt);

        for (i, out) in outputs.into_iter().enumerate() {
            let agent = Agent::Arm(self.arms[i].id());
            batch.extend(out.events.into_iter().map(|e| (agent, e)));
            for m in out.messages {
                self.bus.send(k, m);
            }
        }
        for c in referee_cmds {
            batch.push((
                Agent::Referee,
                EventKind::RefereeCmd { arm: c.arm, command: c.command, reason: c.reason },
            ));
            self.bus.send(k, Message::Referee(c));
        }
        self.log.append_tick(k, batch);
        self.tick += 1;
    }

    /// Runs to the end of the trial and returns the log.
    pub fn run(mut self) -> EventLog {
        while !self.is_done() {
            self.step();
        }
        self.finish()
    }

    pub fn finish(mut self) -> EventLog {
        let pollinated = self.scene.pollinated_count();
        self.log.append_tick(self.tick, vec![(Agent::Engine, EventKind::TrialEnd { pollinated })]);
        self.log
    }
}

/// One full trial; the log is a pure function of the arguments.
pub fn run_trial(scenario: &Scenario, n_arms: usize, seed: u64) -> Result<EventLog> {
    Ok(Engine::new(scenario, n_arms, seed)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(duration: f64) -> Scenario {
        let mut s = Scenario::default();
        s.params.trial_duration = duration;
        s
    }

    #[test]
    fn zero_duration_logs_only_bookends() {
        let log = run_trial(&short(0.0), 6, 1).unwrap();
        let kinds: Vec<&str> = log.events().iter().map(|e| e.kind.name()).collect();
        assert_eq!(kinds, vec!["TrialStart", "TrialEnd"]);
    }

    #[test]
    fn same_seed_same_log() {
        let s = short(20.0);
        let a = run_trial(&s, 4, 3).unwrap().to_text();
        let b = run_trial(&s, 4, 3).unwrap().to_text();
        assert_eq!(a, b);
    }

    #[test]
    fn execution_order_does_not_matter() {
        let s = short(20.0);
        let a = Engine::new(&s, 6, 5).unwrap().run().to_text();
        let b = Engine::new(&s, 6, 5).unwrap().with_order(ExecOrder::Reversed).run().to_text();
        let c = Engine::new(&s, 6, 5).unwrap().with_order(ExecOrder::Shuffled(77)).run().to_text();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn messages_are_delayed_one_tick() {
        let mut e = Engine::new(&short(2.0), 2, 1).unwrap().with_message_history();
        while !e.is_done() {
            e.step();
        }
        let h = e.message_history();
        assert!(!h.is_empty());
        // everything delivered at tick k was sent at k - 1
        assert!(h.iter().all(|env| env.sent_tick < e.tick()));
    }
}
