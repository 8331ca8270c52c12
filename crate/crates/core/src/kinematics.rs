//! Kiwi drive and planar rail-arm kinematics.
//!
//! Arm frame: origin on the mast axis at the floor, x forward, y to the
//! left, z up. Every arm shares that frame; its carriage height is the
//! prismatic joint `z`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::model::{wrap, Params, Pose3D, RailSide, Twist};
use crate::{Error, Result};

/// Wheel mounting angles in the body frame.
pub const WHEEL_ANGLES: [f64; 3] = [PI / 2.0, 7.0 * PI / 6.0, 11.0 * PI / 6.0];

/// Rim tangential speeds of the three omni-wheels, m/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WheelSpeeds {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
}

impl WheelSpeeds {
    pub fn as_array(&self) -> [f64; 3] {
        [self.s0, self.s1, self.s2]
    }

    pub fn max_abs(&self) -> f64 {
        self.as_array().iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Uniformly scales all wheels so none exceeds `cap`.
    pub fn saturated(self, cap: f64) -> Self {
        let m = self.max_abs();
        if m > cap && m > 0.0 {
            let k = cap / m;
            Self { s0: self.s0 * k, s1: self.s1 * k, s2: self.s2 * k }
        } else {
            self
        }
    }

    /// Motor shaft rates in rad/s for a given wheel radius.
    pub fn angular_rates(&self, wheel_radius: f64) -> [f64; 3] {
        self.as_array().map(|s| s / wheel_radius)
    }
}

pub fn kiwi_inverse(cmd: Twist, base_radius: f64) -> WheelSpeeds {
    let s = WHEEL_ANGLES.map(|a| -a.sin() * cmd.vx + a.cos() * cmd.vy + base_radius * cmd.omega);
    WheelSpeeds { s0: s[0], s1: s[1], s2: s[2] }
}

/// Exact inverse of [`kiwi_inverse`]. For three wheels spaced 120° apart
/// the wheel matrix has orthogonal columns, so the inverse is its scaled
/// transpose.
pub fn kiwi_forward(w: WheelSpeeds, base_radius: f64) -> Twist {
    let s = w.as_array();
    let mut vx = 0.0;
    let mut vy = 0.0;
    let mut sum = 0.0;
    for (a, si) in WHEEL_ANGLES.iter().zip(s) {
        vx += -a.sin() * si;
        vy += a.cos() * si;
        sum += si;
    }
    Twist::new(vx * 2.0 / 3.0, vy * 2.0 / 3.0, sum / (3.0 * base_radius))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ArmJoints {
    /// Carriage height on the rail.
    pub z: f64,
    /// Shoulder.
    pub q1: f64,
    /// Elbow.
    pub q2: f64,
    pub wrist_pitch: f64,
    pub wrist_yaw: f64,
}

impl ArmJoints {
    fn is_finite(&self) -> bool {
        [self.z, self.q1, self.q2, self.wrist_pitch, self.wrist_yaw]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unreachable {
    Radius,
    Height,
    Fan,
    NonFinite,
}

impl std::fmt::Display for Unreachable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Unreachable::Radius => "outside reach",
            Unreachable::Height => "outside mast height",
            Unreachable::Fan => "outside rail fan",
            Unreachable::NonFinite => "non-finite target",
        };
        f.write_str(s)
    }
}

/// Forward kinematics: tip pose in the arm frame.
pub fn arm_fk(j: &ArmJoints, params: &Params) -> Result<Pose3D> {
    if !j.is_finite() {
        return Err(Error::NonFinite("joint"));
    }
    let tol = 1e-9;
    if j.z < params.mast_z_min - tol || j.z > params.mast_z_max + tol {
        return Err(Error::JointLimit(format!(
            "carriage z={} outside [{}, {}]",
            j.z, params.mast_z_min, params.mast_z_max
        )));
    }
    if j.wrist_pitch.abs() > PI / 2.0 + tol {
        return Err(Error::JointLimit(format!("wrist pitch {} beyond ±π/2", j.wrist_pitch)));
    }
    let a1 = j.q1;
    let a2 = j.q1 + j.q2;
    let x = params.link1 * a1.cos() + params.link2 * a2.cos();
    let y = params.link1 * a1.sin() + params.link2 * a2.sin();
    Ok(Pose3D::new(x, y, j.z, j.wrist_pitch, a2 + j.wrist_yaw))
}

/// Inverse kinematics. Prefers the positive-elbow branch (`q2 >= 0`).
pub fn arm_ik(target: &Pose3D, side: RailSide, params: &Params) -> Result<ArmJoints, Unreachable> {
    if !target.is_finite() {
        return Err(Unreachable::NonFinite);
    }
    let r = target.radius();
    if r <= 1e-9 || r > params.arm_reach + 1e-12 {
        return Err(Unreachable::Radius);
    }
    if target.z < params.mast_z_min || target.z > params.mast_z_max {
        return Err(Unreachable::Height);
    }
    if !fan_contains(target.azimuth(), side) {
        return Err(Unreachable::Fan);
    }
    let (l1, l2) = (params.link1, params.link2);
    let c2 = ((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let q2 = c2.acos();
    let q1 = target.y.atan2(target.x) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos());
    let q1 = wrap(q1);
    Ok(ArmJoints {
        z: target.z,
        q1,
        q2,
        wrist_pitch: target.pitch.clamp(-PI / 2.0, PI / 2.0),
        wrist_yaw: wrap(target.yaw - q1 - q2),
    })
}

/// Azimuth interval `[lo, hi]` (radians) covered by a rail's arms.
pub fn fan_bounds(side: RailSide) -> (f64, f64) {
    let deg = PI / 180.0;
    match side {
        RailSide::Left => (-120.0 * deg, 60.0 * deg),
        RailSide::Right => (-60.0 * deg, 120.0 * deg),
    }
}

pub fn fan_contains(azimuth: f64, side: RailSide) -> bool {
    let (lo, hi) = fan_bounds(side);
    let a = wrap(azimuth);
    a >= lo - 1e-12 && a <= hi + 1e-12
}

pub fn workspace_contains(p: &Pose3D, side: RailSide, params: &Params) -> bool {
    p.is_finite()
        && p.radius() <= params.arm_reach
        && p.z >= params.mast_z_min
        && p.z <= params.mast_z_max
        && fan_contains(p.azimuth(), side)
}
