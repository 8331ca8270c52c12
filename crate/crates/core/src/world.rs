//! Ground-truth greenhouse: plants, flowers with sway and disturbance,
//! occlusion and end-effector contact. Everything here is world frame.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grid::HeightGrid;
use crate::model::{angle_between, FlowerId, Params, Pose2D, Pose3D, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowerTruth {
    pub id: FlowerId,
    pub plant: usize,
    /// Rest position; pitch/yaw give the facing direction (flower normal).
    pub rest: Pose3D,
    /// Unit sway axis, horizontal and perpendicular to the normal.
    pub lateral: Vec3,
    pub sway_amplitude: f64,
    pub sway_frequency: f64,
    pub sway_phase: f64,
    /// Fraction of a plant impulse this flower receives.
    pub coupling: f64,
    pub disturbance: Vec3,
    pub pollinated: bool,
}

impl FlowerTruth {
    pub fn new(id: FlowerId, plant: usize, rest: Pose3D) -> Self {
        let n = rest.axis();
        let lateral = Vec3::new(-n.y, n.x, 0.0);
        let lateral = if lateral.norm() > 1e-9 { lateral.normalize() } else { Vec3::x() };
        Self {
            id,
            plant,
            rest,
            lateral,
            sway_amplitude: 0.0,
            sway_frequency: 0.0,
            sway_phase: 0.0,
            coupling: 1.0,
            disturbance: Vec3::zeros(),
            pollinated: false,
        }
    }

    pub fn normal(&self) -> Vec3 {
        self.rest.axis()
    }

    pub fn position_at(&self, t: f64) -> Vec3 {
        let sway = self.sway_amplitude * (TAU * self.sway_frequency * t + self.sway_phase).sin();
        self.rest.position() + self.lateral * sway + self.disturbance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub center: Pose2D,
    /// Dense core that blocks sight lines.
    pub core_radius: f64,
    /// Outer envelope; flowers stay inside it.
    pub canopy_radius: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowGeometry {
    pub aisle_width: f64,
    pub row_spacing: f64,
}

impl Default for RowGeometry {
    fn default() -> Self {
        Self { aisle_width: 1.2, row_spacing: 2.2 }
    }
}

/// Arm tip sample fed to [`Scene::step_world`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipState {
    pub position: Vec3,
    pub velocity: Vec3,
}

/// Contact found by [`Scene::check_contact`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Contact {
    pub flower: FlowerId,
    /// False when the flower had already been pollinated.
    pub newly_pollinated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sighting {
    pub flower: FlowerId,
    /// Current position, facing = flower normal.
    pub pose: Pose3D,
    pub center_visible: bool,
}

/// Random layout recipe for one plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantLayout {
    pub center: [f64; 2],
    pub flowers: usize,
    pub core_radius: f64,
    pub canopy_radius: f64,
    pub height: f64,
    /// Flower distance from the plant center, `[min, max]`.
    pub flower_radius: [f64; 2],
    pub flower_z: [f64; 2],
    /// Half-width of the azimuth band (about the side facing the origin)
    /// flowers are scattered over. π covers the whole plant.
    pub azimuth_spread: f64,
    /// Max random tilt of the normal away from radial, radians.
    pub tilt: f64,
    pub sway_amplitude: [f64; 2],
    pub sway_frequency: [f64; 2],
    pub coupling: [f64; 2],
}

impl Default for PlantLayout {
    fn default() -> Self {
        Self {
            center: [0.75, 0.0],
            flowers: 40,
            core_radius: 0.15,
            canopy_radius: 0.5,
            height: 2.0,
            flower_radius: [0.25, 0.5],
            flower_z: [0.35, 1.85],
            azimuth_spread: PI,
            tilt: 0.35,
            sway_amplitude: [0.0, 0.01],
            sway_frequency: [0.2, 0.6],
            coupling: [0.5, 1.0],
        }
    }
}

/// Explicitly placed flower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowerSpec {
    pub position: [f64; 3],
    /// Facing direction; need not be unit length.
    pub normal: [f64; 3],
    #[serde(default)]
    pub plant: usize,
    #[serde(default)]
    pub sway_amplitude: f64,
    #[serde(default)]
    pub sway_frequency: f64,
    #[serde(default)]
    pub sway_phase: f64,
    #[serde(default = "one")]
    pub coupling: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub flowers: Vec<FlowerTruth>,
    pub plants: Vec<Plant>,
    pub grid: HeightGrid,
    pub row: RowGeometry,
    pub time: f64,
}

impl Scene {
    pub fn new(plants: Vec<Plant>, flowers: Vec<FlowerTruth>, grid: HeightGrid, row: RowGeometry) -> Self {
        let mut scene = Self { flowers, plants, grid, row, time: 0.0 };
        for p in scene.plants.clone() {
            scene.grid.raise_disk(p.center.x, p.center.y, p.core_radius, p.height);
        }
        scene
    }

    /// Scatters flowers over each plant's envelope.
    pub fn generate(layouts: &[PlantLayout], grid: HeightGrid, row: RowGeometry, rng: &mut impl Rng) -> Self {
        let mut plants = Vec::new();
        let mut flowers = Vec::new();
        for (pi, l) in layouts.iter().enumerate() {
            let center = Pose2D::new(l.center[0], l.center[1], 0.0);
            plants.push(Plant {
                center,
                core_radius: l.core_radius,
                canopy_radius: l.canopy_radius,
                height: l.height,
            });
            // the side of the plant facing the origin
            let facing = (-l.center[1]).atan2(-l.center[0]);
            for _ in 0..l.flowers {
                let phi = facing + uniform(rng, -l.azimuth_spread, l.azimuth_spread);
                let r = uniform(rng, l.flower_radius[0], l.flower_radius[1]).min(l.canopy_radius);
                let z = uniform(rng, l.flower_z[0], l.flower_z[1]).min(l.height);
                let pos = Vec3::new(center.x + r * phi.cos(), center.y + r * phi.sin(), z);
                let pitch = uniform(rng, -l.tilt, l.tilt);
                let yaw = phi + uniform(rng, -l.tilt, l.tilt);
                let id = FlowerId(flowers.len() as u32);
                let mut f = FlowerTruth::new(id, pi, Pose3D::new(pos.x, pos.y, pos.z, pitch, yaw));
                f.sway_amplitude = uniform(rng, l.sway_amplitude[0], l.sway_amplitude[1]);
                f.sway_frequency = uniform(rng, l.sway_frequency[0], l.sway_frequency[1]);
                f.sway_phase = uniform(rng, 0.0, TAU);
                f.coupling = uniform(rng, l.coupling[0], l.coupling[1]);
                flowers.push(f);
            }
        }
        Self::new(plants, flowers, grid, row)
    }

    pub fn flower(&self, id: FlowerId) -> Option<&FlowerTruth> {
        self.flowers.get(id.0 as usize).filter(|f| f.id == id)
    }

    pub fn flower_position(&self, f: &FlowerTruth) -> Vec3 {
        f.position_at(self.time)
    }

    pub fn pollinated_count(&self) -> usize {
        self.flowers.iter().filter(|f| f.pollinated).count()
    }

    /// Advances sway to `t`, decays disturbances, then injects impulses from
    /// fast tips near any flower of a plant into every flower of that plant.
    pub fn step_world(&mut self, t: f64, tips: &[TipState], params: &Params) {
        let dt = (t - self.time).max(0.0);
        let decay = (-dt / params.disturbance_decay).exp();
        for f in &mut self.flowers {
            f.disturbance *= decay;
        }
        self.time = t;

        if params.disturbance_gain > 0.0 {
            let mut impulses = vec![Vec3::zeros(); self.plants.len()];
            for tip in tips {
                let speed = tip.velocity.norm();
                if speed <= params.disturbance_speed {
                    continue;
                }
                for (pi, impulse) in impulses.iter_mut().enumerate() {
                    let near = self.flowers.iter().any(|f| {
                        f.plant == pi && (f.position_at(t) - tip.position).norm() <= params.disturbance_radius
                    });
                    if near {
                        *impulse += tip.velocity * params.disturbance_gain;
                    }
                }
            }
            for f in &mut self.flowers {
                let Some(imp) = impulses.get(f.plant) else { continue };
                if imp.norm() > 0.0 {
                    f.disturbance += imp * f.coupling;
                    let m = f.disturbance.norm();
                    if m > params.disturbance_max {
                        f.disturbance *= params.disturbance_max / m;
                    }
                }
            }
        }
    }

    pub fn total_disturbance(&self) -> f64 {
        self.flowers.iter().map(|f| f.disturbance.norm()).sum()
    }

    /// Nearest flower within `contact_radius` of the tip, approached within
    /// `contact_cone` of head-on, while brushing. Marks it pollinated.
    pub fn check_contact(&mut self, tip: &Pose3D, brushing: bool, params: &Params) -> Option<Contact> {
        if !brushing || !tip.is_finite() {
            return None;
        }
        let p = tip.position();
        let approach = tip.axis();
        let t = self.time;
        let best = self
            .flowers
            .iter_mut()
            .filter_map(|f| {
                let d = (f.position_at(t) - p).norm();
                let aligned = angle_between(approach, -f.normal()) <= params.contact_cone + 1e-12;
                (d <= params.contact_radius && aligned).then_some((d, f))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
        best.map(|(_, f)| {
            let newly = !f.pollinated;
            f.pollinated = true;
            Contact { flower: f.id, newly_pollinated: newly }
        })
    }

    /// Flowers inside the camera cone (`fov` is the full cone angle) and
    /// range with an unobstructed sight line. The flower center counts as
    /// visible when the flower faces the camera within
    /// `center_visibility_cone`.
    pub fn visible_flowers(&self, camera: &Pose3D, fov: f64, max_range: f64, params: &Params) -> Vec<Sighting> {
        let cam = camera.position();
        let axis = camera.axis();
        let half = fov / 2.0;
        self.flowers
            .iter()
            .filter_map(|f| {
                let pos = f.position_at(self.time);
                let to = pos - cam;
                let d = to.norm();
                if d > max_range || d < 1e-9 || angle_between(axis, to) > half {
                    return None;
                }
                if self.grid.ray_blocked(cam, pos, params.occlusion_margin) {
                    return None;
                }
                let center_visible = angle_between(-to, f.normal()) <= params.center_visibility_cone;
                Some(Sighting {
                    flower: f.id,
                    pose: f.rest.with_position(pos),
                    center_visible,
                })
            })
            .collect()
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}
