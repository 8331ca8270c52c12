//! Shared geometric and identity types plus the global parameter set.

use std::f64::consts::{FRAC_PI_3, PI, TAU};
use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Number of manipulator slots on the mast.
pub const MAX_ARMS: usize = 6;

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok(wrap(a))
}

/// Infallible wrap used internally where finiteness is already known.
pub(crate) fn wrap(a: f64) -> f64 {
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

/// Degrees of freedom for a robot with `n_arms` manipulators.
///
/// Drive base contributes 3 (vx, vy, yaw). Each arm contributes one prismatic
/// carriage, two planar revolute joints, a two-axis wrist and a three-axis
/// brushing end-effector.
pub fn dof_count(n_arms: usize) -> Result<usize> {
    if n_arms > MAX_ARMS {
        return Err(Error::ArmCount(n_arms));
    }
    const DRIVE: usize = 3;
    const PER_ARM: usize = 1 + 2 + 2 + 3;
    Ok(DRIVE + n_arms * PER_ARM)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap(theta) }
    }

    pub fn distance(&self, other: &Pose2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Bearing from this pose's position to `other`, world frame.
    pub fn bearing_to(&self, other: &Pose2D) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }

    /// Expresses a world-frame point in this pose's body frame.
    pub fn to_local(&self, p: Vec3) -> Vec3 {
        let (s, c) = self.theta.sin_cos();
        let dx = p.x - self.x;
        let dy = p.y - self.y;
        Vec3::new(c * dx + s * dy, -s * dx + c * dy, p.z)
    }

    /// Expresses a body-frame point in the world frame.
    pub fn to_world(&self, p: Vec3) -> Vec3 {
        let (s, c) = self.theta.sin_cos();
        Vec3::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y, p.z)
    }
}

/// Position plus a pointing direction (pitch, yaw). Roll is never needed:
/// flowers are radially symmetric.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Pose3D {
    pub fn new(x: f64, y: f64, z: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            z,
            pitch: wrap(pitch),
            yaw: wrap(yaw),
        }
    }

    pub fn at(p: Vec3) -> Self {
        Self::new(p.x, p.y, p.z, 0.0, 0.0)
    }

    /// Pose at `p` pointing along `dir` (need not be unit length).
    pub fn looking(p: Vec3, dir: Vec3) -> Self {
        let (pitch, yaw) = direction_angles(dir);
        Self::new(p.x, p.y, p.z, pitch, yaw)
    }

    pub fn position(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    /// Unit vector of the pointing direction.
    pub fn axis(&self) -> Vec3 {
        unit_from_angles(self.pitch, self.yaw)
    }

    pub fn with_position(&self, p: Vec3) -> Self {
        Self { x: p.x, y: p.y, z: p.z, ..*self }
    }

    /// Planar distance from the mast axis.
    pub fn radius(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Planar azimuth about the mast axis.
    pub fn azimuth(&self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.z, self.pitch, self.yaw]
            .iter()
            .all(|v| v.is_finite())
    }
}

pub fn unit_from_angles(pitch: f64, yaw: f64) -> Vec3 {
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    Vec3::new(cp * cy, cp * sy, sp)
}

pub fn direction_angles(dir: Vec3) -> (f64, f64) {
    let horiz = dir.x.hypot(dir.y);
    (dir.z.atan2(horiz), dir.y.atan2(dir.x))
}

/// Angle between two (non-zero) vectors, radians in `[0, π]`.
pub fn angle_between(a: Vec3, b: Vec3) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (a.dot(&b) / denom).clamp(-1.0, 1.0).acos()
}

/// Body-frame velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl Twist {
    pub fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { vx, vy, omega }
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    /// Scales the translational part down to at most `max` m/s.
    pub fn clamped(self, max: f64) -> Self {
        let s = self.speed();
        if s > max && s > 0.0 {
            let k = max / s;
            Self { vx: self.vx * k, vy: self.vy * k, ..self }
        } else {
            self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.omega.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RailSide {
    Left,
    Right,
}

impl RailSide {
    /// +1 for Left, -1 for Right. The right fan mirrors the left one.
    pub fn mirror(self) -> f64 {
        match self {
            RailSide::Left => 1.0,
            RailSide::Right => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    Lower,
    Middle,
    Upper,
}

impl Tier {
    pub fn index(self) -> usize {
        match self {
            Tier::Lower => 0,
            Tier::Middle => 1,
            Tier::Upper => 2,
        }
    }
}

/// Manipulator slot 0..=5. Slots 0-2 ride the left rail, 3-5 the right,
/// each ordered lower, middle, upper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArmId(u8);

impl ArmId {
    pub const ALL: [ArmId; MAX_ARMS] = [ArmId(0), ArmId(1), ArmId(2), ArmId(3), ArmId(4), ArmId(5)];

    pub fn new(index: usize) -> Result<Self> {
        if index < MAX_ARMS {
            Ok(ArmId(index as u8))
        } else {
            Err(Error::ArmIndex(index))
        }
    }

    pub fn from_slot(side: RailSide, tier: Tier) -> Self {
        let base = match side {
            RailSide::Left => 0,
            RailSide::Right => 3,
        };
        ArmId(base + tier.index() as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn side(self) -> RailSide {
        if self.0 < 3 {
            RailSide::Left
        } else {
            RailSide::Right
        }
    }

    pub fn tier(self) -> Tier {
        match self.0 % 3 {
            0 => Tier::Lower,
            1 => Tier::Middle,
            _ => Tier::Upper,
        }
    }
}

impl fmt::Display for ArmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "arm{}", self.0)
    }
}

/// Arms mounted for a given configuration size. Symmetric across rails
/// whenever the count allows it.
pub fn arms_for_count(n: usize) -> Result<Vec<ArmId>> {
    use RailSide::*;
    use Tier::*;
    let slots: &[(RailSide, Tier)] = match n {
        0 => &[],
        1 => &[(Left, Middle)],
        2 => &[(Left, Middle), (Right, Middle)],
        3 => &[(Left, Lower), (Left, Upper), (Right, Middle)],
        4 => &[(Left, Lower), (Left, Upper), (Right, Lower), (Right, Upper)],
        5 => &[(Left, Lower), (Left, Middle), (Left, Upper), (Right, Lower), (Right, Upper)],
        6 => &[
            (Left, Lower),
            (Left, Middle),
            (Left, Upper),
            (Right, Lower),
            (Right, Middle),
            (Right, Upper),
        ],
        _ => return Err(Error::ArmCount(n)),
    };
    let mut ids: Vec<ArmId> = slots.iter().map(|&(s, t)| ArmId::from_slot(s, t)).collect();
    ids.sort();
    Ok(ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowerId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrackId(pub u64);

impl fmt::Display for FlowerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Every tunable of the simulator. Lengths in meters, times in seconds,
/// angles in radians, speeds in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    // drive base
    pub max_translation_speed: f64,
    pub max_wheel_speed: f64,
    pub wheel_radius: f64,
    pub wheel_base_radius: f64,
    pub footprint_radius: f64,
    pub heading_rotate_threshold: f64,
    pub waypoint_radius: f64,
    pub arrival_heading_tolerance: f64,
    pub h_max: f64,
    pub obstacle_margin: f64,
    pub primitive_count: usize,
    pub primitive_max_curvature: f64,
    pub primitive_horizon: f64,
    pub k_heading: f64,
    pub k_linear: f64,
    pub max_omega: f64,

    // mast and arms
    pub mast_z_min: f64,
    pub mast_z_max: f64,
    pub arm_reach: f64,
    pub link1: f64,
    pub link2: f64,
    pub rail_min_separation: f64,
    pub home_radius: f64,
    pub arm_max_speed: f64,
    pub wrist_max_rate: f64,

    // world
    pub disturbance_decay: f64,
    pub disturbance_radius: f64,
    pub disturbance_speed: f64,
    pub disturbance_gain: f64,
    pub disturbance_max: f64,
    pub contact_radius: f64,
    pub contact_cone: f64,
    pub center_visibility_cone: f64,
    pub occlusion_margin: f64,

    // perception
    pub camera_fov: f64,
    pub camera_range: f64,
    pub camera_offset: f64,
    pub p_detect: f64,
    pub sigma_detect: f64,
    pub sigma_normal: f64,
    pub lambda_fp: f64,
    pub visibility_false_negative: f64,
    pub visibility_false_positive: f64,

    // flower manager
    pub assoc_threshold: f64,
    pub track_expiration: f64,
    pub min_hits: u32,

    // manipulator behavior
    pub standoff: f64,
    pub k_servo: f64,
    pub servo_epsilon: f64,
    pub servo_lost_timeout: f64,
    pub servo_timeout: f64,
    pub approach_timeout: f64,
    pub arm_clearance: f64,
    pub retreat_distance: f64,
    pub retreat_timeout: f64,
    pub brush_duration: f64,
    pub brush_extend: f64,
    pub brush_wiggle: f64,
    pub search_period: f64,
    pub search_pitch_amplitude: f64,
    /// Half-width of the azimuth sweep about the fan center.
    pub search_yaw_amplitude: f64,
    /// Carriage excursion about the home height while searching.
    pub search_z_amplitude: f64,
    pub search_settle: f64,
    pub home_dwell: f64,
    pub skip_duration: f64,

    // referee
    pub conflict_distance: f64,
    pub conflict_timeout: f64,
    pub anomaly_timeout: f64,

    // engine
    pub tick_dt: f64,
    pub trial_duration: f64,
}

impl Default for Params {
    fn default() -> Self {
        let deg = PI / 180.0;
        Self {
            max_translation_speed: 1.0,
            max_wheel_speed: 1.0,
            wheel_radius: 0.115,
            wheel_base_radius: 0.25,
            footprint_radius: 0.3,
            heading_rotate_threshold: FRAC_PI_3,
            waypoint_radius: 0.3,
            arrival_heading_tolerance: 5.0 * deg,
            h_max: 0.15,
            obstacle_margin: 1.0,
            primitive_count: 15,
            primitive_max_curvature: 1.0,
            primitive_horizon: 1.5,
            k_heading: 1.5,
            k_linear: 1.0,
            max_omega: 1.0,

            mast_z_min: 0.3,
            mast_z_max: 1.9,
            arm_reach: 0.5,
            link1: 0.25,
            link2: 0.25,
            rail_min_separation: 0.25,
            home_radius: 0.15,
            arm_max_speed: 0.25,
            wrist_max_rate: 2.0,

            disturbance_decay: 3.0,
            disturbance_radius: 0.15,
            disturbance_speed: 0.1,
            disturbance_gain: 0.035,
            disturbance_max: 0.08,
            contact_radius: 0.015,
            contact_cone: 45.0 * deg,
            center_visibility_cone: 60.0 * deg,
            occlusion_margin: 0.05,

            camera_fov: 1.2,
            camera_range: 0.7,
            camera_offset: 0.04,
            p_detect: 0.92,
            sigma_detect: 0.005,
            sigma_normal: 5.0 * deg,
            lambda_fp: 0.02,
            visibility_false_negative: 0.06,
            visibility_false_positive: 0.14,

            assoc_threshold: 0.05,
            track_expiration: 10.0,
            min_hits: 2,

            standoff: 0.10,
            k_servo: 1.5,
            servo_epsilon: 0.005,
            servo_lost_timeout: 0.3,
            servo_timeout: 6.0,
            approach_timeout: 8.0,
            arm_clearance: 0.12,
            retreat_distance: 0.15,
            retreat_timeout: 3.0,
            brush_duration: 2.0,
            brush_extend: 0.02,
            brush_wiggle: 0.004,
            search_period: 8.0,
            search_pitch_amplitude: 0.35,
            search_yaw_amplitude: 60.0 * deg,
            search_z_amplitude: 0.1,
            search_settle: 0.5,
            home_dwell: 1.0,
            skip_duration: 10.0,

            conflict_distance: 0.15,
            conflict_timeout: 20.0,
            anomaly_timeout: 30.0,

            tick_dt: 0.05,
            trial_duration: 300.0,
        }
    }
}

impl Params {
    /// Checks the structural invariants every module relies on.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_translation_speed", self.max_translation_speed),
            ("max_wheel_speed", self.max_wheel_speed),
            ("wheel_radius", self.wheel_radius),
            ("wheel_base_radius", self.wheel_base_radius),
            ("footprint_radius", self.footprint_radius),
            ("waypoint_radius", self.waypoint_radius),
            ("primitive_horizon", self.primitive_horizon),
            ("arm_reach", self.arm_reach),
            ("link1", self.link1),
            ("link2", self.link2),
            ("rail_min_separation", self.rail_min_separation),
            ("home_radius", self.home_radius),
            ("arm_max_speed", self.arm_max_speed),
            ("disturbance_decay", self.disturbance_decay),
            ("contact_radius", self.contact_radius),
            ("camera_fov", self.camera_fov),
            ("camera_range", self.camera_range),
            ("assoc_threshold", self.assoc_threshold),
            ("track_expiration", self.track_expiration),
            ("standoff", self.standoff),
            ("k_servo", self.k_servo),
            ("brush_duration", self.brush_duration),
            ("search_period", self.search_period),
            ("conflict_distance", self.conflict_distance),
            ("conflict_timeout", self.conflict_timeout),
            ("anomaly_timeout", self.anomaly_timeout),
            ("tick_dt", self.tick_dt),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParam(name, format!("must be > 0, got {v}")));
            }
        }
        if self.mast_z_min >= self.mast_z_max {
            return Err(Error::InvalidParam(
                "mast_z_min",
                format!("must be below mast_z_max ({} >= {})", self.mast_z_min, self.mast_z_max),
            ));
        }
        if (self.link1 + self.link2 - self.arm_reach).abs() > 1e-9 {
            return Err(Error::InvalidParam(
                "arm_reach",
                "must equal link1 + link2".to_string(),
            ));
        }
        if 2.0 * self.rail_min_separation > self.mast_z_max - self.mast_z_min {
            return Err(Error::InvalidParam(
                "rail_min_separation",
                "three carriages must fit on the mast".into(),
            ));
        }
        if self.home_radius >= self.arm_reach {
            return Err(Error::InvalidParam("home_radius", "must be inside arm_reach".into()));
        }
        if self.camera_fov >= PI {
            return Err(Error::InvalidParam("camera_fov", "must be below π".into()));
        }
        if self.trial_duration < 0.0 || !self.trial_duration.is_finite() {
            return Err(Error::InvalidParam("trial_duration", "must be >= 0".into()));
        }
        for (name, p) in [
            ("p_detect", self.p_detect),
            ("visibility_false_negative", self.visibility_false_negative),
            ("visibility_false_positive", self.visibility_false_positive),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParam(name, format!("probability out of range: {p}")));
            }
        }
        if self.primitive_count == 0 {
            return Err(Error::InvalidParam("primitive_count", "must be >= 1".into()));
        }
        if self.sigma_detect < 0.0 || self.lambda_fp < 0.0 || self.sigma_normal < 0.0 {
            return Err(Error::InvalidParam("perception", "noise levels must be >= 0".into()));
        }
        Ok(())
    }

    /// Number of whole ticks in a trial.
    pub fn trial_ticks(&self) -> u64 {
        (self.trial_duration / self.tick_dt + 1e-9).floor() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dof_matches_robot() {
        assert_eq!(dof_count(6).unwrap(), 51);
        assert_eq!(dof_count(0).unwrap(), 3);
        assert_eq!(dof_count(2).unwrap(), 19);
        assert!(dof_count(7).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_angle(PI).unwrap(), PI);
        assert!((normalize_angle(3.0 * PI).unwrap() - PI).abs() < 1e-12);
        assert!((normalize_angle(-1.5 * PI).unwrap() - 0.5 * PI).abs() < 1e-12);
        assert!((normalize_angle(-PI).unwrap() - PI).abs() < 1e-12);
        assert!(normalize_angle(f64::NAN).is_err());
        assert!(normalize_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn arm_slots_round_trip() {
        for id in ArmId::ALL {
            assert_eq!(ArmId::from_slot(id.side(), id.tier()), id);
        }
        assert!(ArmId::new(6).is_err());
    }

    #[test]
    fn configurations_are_symmetric() {
        for n in [2, 4, 6] {
            let arms = arms_for_count(n).unwrap();
            let left = arms.iter().filter(|a| a.side() == RailSide::Left).count();
            assert_eq!(left * 2, n);
        }
        assert!(arms_for_count(7).is_err());
    }

    #[test]
    fn default_params_are_valid() {
        let p = Params::default();
        p.validate().unwrap();
        assert_eq!(p.heading_rotate_threshold, FRAC_PI_3);
        assert_eq!(p.trial_ticks(), 6000);
    }

    #[test]
    fn pose2d_frames_invert() {
        let pose = Pose2D::new(1.0, -2.0, 0.7);
        let p = Vec3::new(0.3, 0.4, 1.1);
        let back = pose.to_local(pose.to_world(p));
        assert!((back - p).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent_and_periodic(a in -1e4f64..1e4) {
            let n = normalize_angle(a).unwrap();
            prop_assert!(n > -PI && n <= PI);
            prop_assert!((normalize_angle(n).unwrap() - n).abs() < 1e-12);
            let shifted = normalize_angle(a + TAU).unwrap();
            let d = wrap(shifted - n).abs();
            prop_assert!(d < 1e-9);
        }

        #[test]
        fn twist_clamp_caps_speed(vx in -5.0f64..5.0, vy in -5.0f64..5.0) {
            let t = Twist::new(vx, vy, 0.3).clamped(1.0);
            prop_assert!(t.speed() <= 1.0 + 1e-12);
        }
    }
}
