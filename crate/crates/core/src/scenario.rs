//! Scenario configuration, read from TOML.
//!
//! Every field is optional; missing ones take the defaults below, and the
//! `[params]` table overrides individual [`Params`] fields.

use serde::{Deserialize, Serialize};

use crate::grid::HeightGrid;
use crate::model::{FlowerId, Params, Pose2D, Pose3D, Vec3};
use crate::rng::{stream, STREAM_LAYOUT};
use crate::world::{FlowerSpec, FlowerTruth, Plant, PlantLayout, RowGeometry, Scene};
use crate::{Error, Result};

/// Arm counts used in the reference experiment; all symmetric across rails.
pub const SYMMETRIC_COUNTS: [usize; 4] = [1, 2, 4, 6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Flower sway and arm-induced disturbance.
    pub disturbance: bool,
    /// Detector noise, misses, false positives and visibility flips.
    pub noise: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self { disturbance: true, noise: true }
    }
}

impl Ablation {
    /// Applies `name=on|off`.
    pub fn set(&mut self, name: &str, on: bool) -> Result<()> {
        match name {
            "disturbance" => self.disturbance = on,
            "noise" => self.noise = on,
            _ => return Err(Error::Scenario(format!("unknown ablation `{name}` (expected disturbance or noise)"))),
        }
        Ok(())
    }
}

/// Axis-aligned box obstacle on the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub resolution: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { min: [-3.0, -3.0], max: [3.0, 3.0], resolution: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub arm_counts: Vec<usize>,
    pub repetitions: usize,
    pub base_seed: u64,
    /// Explicit trial seeds; overrides `base_seed` and `repetitions`.
    pub seeds: Option<Vec<u64>>,
    /// Seed for the flower layout. Unset: each trial seed makes its own.
    pub layout_seed: Option<u64>,
    pub params: Params,
    /// Randomly populated plants.
    pub plants: Vec<PlantLayout>,
    /// Hand-placed flowers. When present they replace the generated ones and
    /// `plants` only contributes plant geometry.
    pub flowers: Vec<FlowerSpec>,
    pub obstacles: Vec<Obstacle>,
    pub row: RowGeometry,
    pub grid: GridSpec,
    /// `[x, y, theta]` of the base at t = 0.
    pub start_pose: [f64; 3],
    pub waypoints: Vec<[f64; 3]>,
    pub ablation: Ablation,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "default".into(),
            arm_counts: SYMMETRIC_COUNTS.to_vec(),
            repetitions: 5,
            base_seed: 1,
            seeds: None,
            layout_seed: None,
            params: Params::default(),
            plants: vec![PlantLayout::default()],
            flowers: Vec::new(),
            obstacles: Vec::new(),
            row: RowGeometry::default(),
            grid: GridSpec::default(),
            start_pose: [0.0, 0.0, 0.0],
            waypoints: Vec::new(),
            ablation: Ablation::default(),
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Hard errors only; see [`Scenario::lint`] for warnings.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.arm_counts.is_empty() {
            return Err(Error::Scenario("arm_counts is empty".into()));
        }
        if let Some(&n) = self.arm_counts.iter().find(|&&n| n == 0 || n > crate::model::MAX_ARMS) {
            return Err(Error::ArmCount(n));
        }
        if self.seeds.as_ref().map_or(self.repetitions == 0, |s| s.is_empty()) {
            return Err(Error::Scenario("need at least one repetition".into()));
        }
        if !(self.grid.resolution > 0.0) || self.grid.max[0] <= self.grid.min[0] || self.grid.max[1] <= self.grid.min[1] {
            return Err(Error::Scenario("grid bounds or resolution invalid".into()));
        }
        for (i, f) in self.flowers.iter().enumerate() {
            let n = Vec3::from(f.normal);
            if !(n.norm() > 0.0) || f.position.iter().any(|v| !v.is_finite()) {
                return Err(Error::Scenario(format!("flowers[{i}]: non-finite position or zero normal")));
            }
            if !self.plants.is_empty() && f.plant >= self.plants.len() {
                return Err(Error::Scenario(format!("flowers[{i}]: plant index {} out of range", f.plant)));
            }
        }
        Ok(())
    }

    /// Non-fatal issues worth flagging.
    pub fn lint(&self) -> Vec<String> {
        let mut out = Vec::new();
        for &n in &self.arm_counts {
            if !SYMMETRIC_COUNTS.contains(&n) {
                out.push(format!(
                    "arm count {n} is asymmetric across rails; the reference experiment used 1, 2, 4 and 6"
                ));
            }
        }
        if self.plants.is_empty() && self.flowers.is_empty() {
            out.push("scenario has no flowers".into());
        }
        if self.params.trial_duration == 0.0 {
            out.push("trial_duration is 0: trials only log initialization".into());
        }
        out
    }

    pub fn seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.repetitions as u64).map(|i| self.base_seed.wrapping_add(i)).collect(),
        }
    }

    /// `params` with the ablation switches applied.
    pub fn effective_params(&self) -> Params {
        let mut p = self.params.clone();
        if !self.ablation.disturbance {
            p.disturbance_gain = 0.0;
        }
        if !self.ablation.noise {
            p.p_detect = 1.0;
            p.sigma_detect = 0.0;
            p.sigma_normal = 0.0;
            p.lambda_fp = 0.0;
            p.visibility_false_negative = 0.0;
            p.visibility_false_positive = 0.0;
        }
        p
    }

    pub fn start_pose(&self) -> Pose2D {
        Pose2D::new(self.start_pose[0], self.start_pose[1], self.start_pose[2])
    }

    pub fn waypoint_poses(&self) -> Vec<Pose2D> {
        self.waypoints.iter().map(|w| Pose2D::new(w[0], w[1], w[2])).collect()
    }

    /// Ground-truth scene for one trial.
    pub fn build_scene(&self, trial_seed: u64) -> Scene {
        let g = &self.grid;
        let mut grid = HeightGrid::covering(g.min[0], g.min[1], g.max[0], g.max[1], g.resolution);
        for o in &self.obstacles {
            grid.raise_box(o.min[0], o.min[1], o.max[0], o.max[1], o.height);
        }
        let mut scene = if self.flowers.is_empty() {
            let mut rng = stream(self.layout_seed.unwrap_or(trial_seed), STREAM_LAYOUT);
            Scene::generate(&self.plants, grid, self.row, &mut rng)
        } else {
            let plants = self
                .plants
                .iter()
                .map(|l| Plant {
                    center: Pose2D::new(l.center[0], l.center[1], 0.0),
                    core_radius: l.core_radius,
                    canopy_radius: l.canopy_radius,
                    height: l.height,
                })
                .collect();
            let flowers = self
                .flowers
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let rest = Pose3D::looking(Vec3::from(f.position), Vec3::from(f.normal));
                    let mut t = FlowerTruth::new(FlowerId(i as u32), f.plant, rest);
                    t.sway_amplitude = f.sway_amplitude;
                    t.sway_frequency = f.sway_frequency;
                    t.sway_phase = f.sway_phase;
                    t.coupling = f.coupling;
                    t
                })
                .collect();
            Scene::new(plants, flowers, grid, self.row)
        };
        if !self.ablation.disturbance {
            for f in &mut scene.flowers {
                f.sway_amplitude = 0.0;
            }
        }
        scene
    }
}
