//! Stand-in for the learned detector and center-visibility classifier,
//! plus the binary-classifier metric arithmetic.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::model::{unit_from_angles, Params, Pose3D, Vec3};
use crate::world::Sighting;
use crate::{Error, Result};

/// A single detector output. The position is expressed in whatever frame
/// the input sightings were in; pitch/yaw estimate the flower's facing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub pose: Pose3D,
    pub center_visible: bool,
    pub confidence: f64,
}

impl Detection {
    pub fn position(&self) -> Vec3 {
        self.pose.position()
    }
}

/// Noisy detector over ground-truth sightings.
///
/// `camera` (same frame as `visible`) is only used to place false positives
/// inside the view cone.
pub fn detect(visible: &[Sighting], camera: &Pose3D, params: &Params, rng: &mut impl Rng) -> Vec<Detection> {
    let pos_noise = (params.sigma_detect > 0.0).then(|| Normal::new(0.0, params.sigma_detect).unwrap());
    let ang_noise = (params.sigma_normal > 0.0).then(|| Normal::new(0.0, params.sigma_normal).unwrap());
    let mut out = Vec::with_capacity(visible.len());
    for s in visible {
        if !rng.random_bool(params.p_detect) {
            continue;
        }
        let mut pose = s.pose;
        if let Some(n) = &pos_noise {
            pose.x += n.sample(rng);
            pose.y += n.sample(rng);
            pose.z += n.sample(rng);
        }
        if let Some(n) = &ang_noise {
            pose = Pose3D::new(pose.x, pose.y, pose.z, pose.pitch + n.sample(rng), pose.yaw + n.sample(rng));
        }
        let flip = if s.center_visible {
            params.visibility_false_negative
        } else {
            params.visibility_false_positive
        };
        let center_visible = if flip > 0.0 && rng.random_bool(flip) {
            !s.center_visible
        } else {
            s.center_visible
        };
        let confidence = if pos_noise.is_some() { rng.random_range(0.6..1.0) } else { 1.0 };
        out.push(Detection { pose, center_visible, confidence });
    }
    if params.lambda_fp > 0.0 {
        let count = Poisson::new(params.lambda_fp).unwrap().sample(rng) as usize;
        for _ in 0..count {
            out.push(phantom(camera, params, rng));
        }
    }
    out
}

/// A false positive somewhere in the view cone.
fn phantom(camera: &Pose3D, params: &Params, rng: &mut impl Rng) -> Detection {
    let half = params.camera_fov / 2.0;
    let off = rng.random_range(0.0..half);
    let spin = rng.random_range(0.0..std::f64::consts::TAU);
    let depth = rng.random_range(0.1f64.min(params.camera_range)..=params.camera_range);
    let dir = unit_from_angles(camera.pitch + off * spin.sin(), camera.yaw + off * spin.cos());
    let p = camera.position() + dir * depth;
    Detection {
        pose: Pose3D::looking(p, -dir),
        center_visible: rng.random_bool(0.5),
        confidence: rng.random_range(0.3..0.7),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Metric values; `None` marks an undefined metric (zero denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub specificity: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn classifier_metrics(m: &ConfusionMatrix) -> Result<ClassifierMetrics> {
    if m.total() == 0 {
        return Err(Error::EmptyConfusionMatrix);
    }
    let precision = ratio(m.tp, m.tp + m.fp);
    let recall = ratio(m.tp, m.tp + m.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(ClassifierMetrics {
        accuracy: ratio(m.tp + m.tn, m.total()),
        precision,
        recall,
        f1,
        specificity: ratio(m.tn, m.tn + m.fp),
    })
}
