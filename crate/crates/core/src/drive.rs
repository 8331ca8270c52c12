//! Drive base agent: waypoint manager, primitive-fan local planner and the
//! three-mode path follower. Localization is ground truth.

use serde::{Deserialize, Serialize};

use crate::grid::HeightGrid;
use crate::log::EventKind;
use crate::model::{wrap, Params, Pose2D, Twist};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DriveMode {
    RotateInPlace,
    Translate,
    Twist,
}

text_enum!(DriveMode { RotateInPlace, Translate, Twist });

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WaypointPlan {
    pub waypoints: Vec<Pose2D>,
    pub current_index: usize,
}

impl WaypointPlan {
    pub fn new(waypoints: Vec<Pose2D>) -> Self {
        Self { waypoints, current_index: 0 }
    }

    pub fn current(&self) -> Option<&Pose2D> {
        self.waypoints.get(self.current_index)
    }

    pub fn is_finished(&self) -> bool {
        self.current_index >= self.waypoints.len()
    }
}

/// Skips every waypoint, in order, that the base is already within
/// `waypoint_radius` of.
pub fn advance_waypoints(plan: &WaypointPlan, pose: &Pose2D, params: &Params) -> WaypointPlan {
    let mut next = plan.clone();
    while let Some(wp) = next.current() {
        if pose.distance(wp) < params.waypoint_radius {
            next.current_index += 1;
        } else {
            break;
        }
    }
    next
}

/// Signed heading error from the base toward `target`.
pub fn heading_error(pose: &Pose2D, target: &Pose2D) -> f64 {
    wrap(pose.bearing_to(target) - pose.theta)
}

pub fn select_mode(pose: &Pose2D, target: &Pose2D, obstacle_nearby: bool, params: &Params) -> DriveMode {
    if heading_error(pose, target).abs() > params.heading_rotate_threshold {
        DriveMode::RotateInPlace
    } else if obstacle_nearby {
        DriveMode::Translate
    } else {
        DriveMode::Twist
    }
}

/// Any untraversable cell within `obstacle_margin` of the footprint.
pub fn obstacle_nearby(pose: &Pose2D, grid: &HeightGrid, params: &Params) -> bool {
    grid.blocked_within(pose.x, pose.y, params.footprint_radius + params.obstacle_margin, params.h_max)
}

/// Evenly spaced curvatures of the primitive fan, most negative first.
pub fn primitive_curvatures(params: &Params) -> Vec<f64> {
    let n = params.primitive_count;
    let k = params.primitive_max_curvature;
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|i| -k + 2.0 * k * i as f64 / (n - 1) as f64).collect()
}

/// Body-frame pose after driving `length` along an arc of curvature `kappa`.
pub fn arc_point(kappa: f64, length: f64) -> (f64, f64, f64) {
    if kappa.abs() < 1e-9 {
        (length, 0.0, 0.0)
    } else {
        let a = kappa * length;
        (a.sin() / kappa, (1.0 - a.cos()) / kappa, a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no collision-free motion primitive")]
pub struct AllBlocked;

/// One scored candidate of [`plan_local`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub curvature: f64,
    /// Body-frame end point.
    pub end: (f64, f64),
    pub free: bool,
    pub end_distance: f64,
}

/// Scores every primitive for the given mode. In `Translate` mode each arc is
/// replaced by the straight chord to its end point, driven without turning.
pub fn evaluate_primitives(pose: &Pose2D, target: &Pose2D, grid: &HeightGrid, mode: DriveMode, params: &Params) -> Vec<Candidate> {
    let length = params.primitive_horizon.min(pose.distance(target));
    let step = (grid.resolution * 0.5).max(1e-3);
    let samples = (length / step).ceil().max(1.0) as usize;
    let (s, c) = pose.theta.sin_cos();
    let to_world = |bx: f64, by: f64| (pose.x + c * bx - s * by, pose.y + s * bx + c * by);
    primitive_curvatures(params)
        .into_iter()
        .map(|kappa| {
            let (ex, ey, _) = arc_point(kappa, length);
            let free = (1..=samples).all(|i| {
                let frac = i as f64 / samples as f64;
                let (bx, by) = match mode {
                    DriveMode::Translate => (ex * frac, ey * frac),
                    _ => {
                        let (x, y, _) = arc_point(kappa, length * frac);
                        (x, y)
                    }
                };
                let (wx, wy) = to_world(bx, by);
                !grid.blocked_within(wx, wy, params.footprint_radius, params.h_max)
            });
            let (wx, wy) = to_world(ex, ey);
            Candidate {
                curvature: kappa,
                end: (ex, ey),
                free,
                end_distance: (wx - target.x).hypot(wy - target.y),
            }
        })
        .collect()
}

/// Velocity command toward `target` shaped by `mode`.
pub fn plan_local(pose: &Pose2D, target: &Pose2D, grid: &HeightGrid, mode: DriveMode, params: &Params) -> Result<Twist, AllBlocked> {
    if mode == DriveMode::RotateInPlace {
        let err = heading_error(pose, target);
        let omega = (params.k_heading * err).clamp(-params.max_omega, params.max_omega);
        return Ok(Twist::new(0.0, 0.0, omega));
    }
    let dist = pose.distance(target);
    if dist < 1e-9 {
        return Ok(Twist::default());
    }
    let best = evaluate_primitives(pose, target, grid, mode, params)
        .into_iter()
        .filter(|c| c.free)
        .min_by(|a, b| {
            a.end_distance
                .total_cmp(&b.end_distance)
                .then(a.curvature.abs().total_cmp(&b.curvature.abs()))
                .then(a.curvature.total_cmp(&b.curvature))
        })
        .ok_or(AllBlocked)?;
    let v = (params.k_linear * dist).min(params.max_translation_speed);
    let twist = match mode {
        DriveMode::Translate => {
            let (ex, ey) = best.end;
            let n = ex.hypot(ey);
            Twist::new(v * ex / n, v * ey / n, 0.0)
        }
        _ => Twist::new(v, 0.0, (best.curvature * v).clamp(-params.max_omega, params.max_omega)),
    };
    Ok(twist.clamped(params.max_translation_speed))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DriveOutput {
    pub twist: Twist,
    pub events: Vec<EventKind>,
}

#[derive(Debug, Clone)]
pub struct DriveAgent {
    plan: WaypointPlan,
    mode: Option<DriveMode>,
    parked: bool,
    blocked: bool,
}

impl DriveAgent {
    pub fn new(waypoints: Vec<Pose2D>) -> Self {
        let parked = waypoints.is_empty();
        Self { plan: WaypointPlan::new(waypoints), mode: None, parked, blocked: false }
    }

    pub fn plan(&self) -> &WaypointPlan {
        &self.plan
    }

    pub fn mode(&self) -> Option<DriveMode> {
        self.mode
    }

    /// True once the last waypoint is reached and the base faces its
    /// heading. Arms only work while parked.
    pub fn parked(&self) -> bool {
        self.parked
    }

    pub fn step(&mut self, pose: &Pose2D, grid: &HeightGrid, params: &Params) -> DriveOutput {
        let mut out = DriveOutput::default();
        if self.parked {
            return out;
        }
        let before = self.plan.current_index;
        self.plan = advance_waypoints(&self.plan, pose, params);
        for i in before..self.plan.current_index {
            out.events.push(EventKind::Arrived { waypoint: i });
        }

        let Some(target) = self.plan.current().copied() else {
            let last = self.plan.waypoints.last().expect("non-empty plan");
            let err = wrap(last.theta - pose.theta);
            if err.abs() <= params.arrival_heading_tolerance {
                self.parked = true;
                return out;
            }
            self.set_mode(DriveMode::RotateInPlace, &mut out.events);
            let omega = (params.k_heading * err).clamp(-params.max_omega, params.max_omega);
            out.twist = Twist::new(0.0, 0.0, omega);
            return out;
        };

        let mode = select_mode(pose, &target, obstacle_nearby(pose, grid, params), params);
        self.set_mode(mode, &mut out.events);
        match plan_local(pose, &target, grid, mode, params) {
            Ok(t) => {
                self.blocked = false;
                out.twist = t;
            }
            Err(AllBlocked) => {
                if !self.blocked {
                    out.events.push(EventKind::DriveBlocked);
                }
                self.blocked = true;
            }
        }
        out
    }

    fn set_mode(&mut self, mode: DriveMode, events: &mut Vec<EventKind>) {
        if self.mode != Some(mode) {
            self.mode = Some(mode);
            events.push(EventKind::ModeChange { mode });
        }
    }
}

/// Advances a world-frame pose by a body-frame twist held for `dt`.
pub fn integrate(pose: &Pose2D, twist: &Twist, dt: f64) -> Pose2D {
    let (s, c) = pose.theta.sin_cos();
    Pose2D::new(
        pose.x + (c * twist.vx - s * twist.vy) * dt,
        pose.y + (s * twist.vx + c * twist.vy) * dt,
        pose.theta + twist.omega * dt,
    )
}
