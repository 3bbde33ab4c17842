//! Run configuration: a TOML file with one table per concern. Every key is
//! optional and defaults to the library defaults; unknown keys are rejected.
//!
//! ```toml
//! [scene]
//! room_half_extents = [4.0, 4.0, 1.5]
//! num_points = 200
//! num_planes = 4
//! num_ellipsoids = 3
//! semi_axis_range = [0.15, 0.4]
//! on_plane_fraction = 0.6
//! frames = 40
//! frame_period = 0.1
//! trajectory = "orbit"            # or "lawnmower"
//! detection_probability = 0.9
//! conic_model = "bounding_box"    # or "exact"
//! max_range = 12.0
//! image_size = [640, 480]
//! camera = [525.0, 525.0, 319.5, 239.5]   # fx fy cx cy
//!
//! [noise]
//! pixel = 1.0
//! plane_angle = 0.01
//! plane_offset = 0.01
//! bbox = 2.0
//! odometry_rotation = 0.01
//! odometry_translation = 0.02
//!
//! [solver]
//! max_iterations = 100
//! keyframe_iterations = 20
//! min_point_views = 2
//! min_quadric_views = 8
//! initial_lambda = 1e-4
//! lambda_up = 10.0
//! lambda_down = 10.0
//! relative_decrease_tol = 1e-10
//! absolute_error_tol = 1e-20
//! step_tol = 1e-12
//!
//! [constraints]
//! point_plane_base = 0.05
//! parallel_deg = 15.0
//! perpendicular_deg = 75.0
//! support_floor = 0.2
//!
//! [init]            # landmark initialization noise around ground truth
//! point = 0.05
//! plane = 0.005          # tangent of the unit 4-vector; far walls tilt ~4x this in radians
//! quadric = 0.05
//!
//! [eval]
//! delta = 1
//! max_dt = 0.02
//!
//! [run]
//! seeds = [0]
//! ablations = ["P", "PP", "PP+M", "PQ", "PPQ+MS"]
//! out = "out"
//! ```

use std::path::PathBuf;

use nalgebra::Vector3;
use serde::Deserialize;
use structslam_core::eval::EvalConfig;
use structslam_core::geometry::CameraIntrinsics;
use structslam_core::graph::SolverConfig;
use structslam_core::simulator::{
    Ablation, ConicModel, ConstraintThresholds, FactorSigmas, NoiseLevels, Perturbation, SceneConfig,
    TrajectoryKind,
};

use crate::pipeline::SolveSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryName {
    Orbit,
    Lawnmower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConicModelName {
    BoundingBox,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    pub room_half_extents: [f64; 3],
    pub num_points: usize,
    pub num_planes: usize,
    pub num_ellipsoids: usize,
    pub semi_axis_range: [f64; 2],
    pub on_plane_fraction: f64,
    pub frames: usize,
    pub frame_period: f64,
    pub trajectory: TrajectoryName,
    pub detection_probability: f64,
    pub conic_model: ConicModelName,
    pub max_range: f64,
    pub image_size: [u32; 2],
    pub camera: [f64; 4],
}

impl Default for SceneSection {
    fn default() -> Self {
        let d = SceneConfig::default();
        Self {
            room_half_extents: d.room_half_extents.into(),
            num_points: d.num_points,
            num_planes: d.num_planes,
            num_ellipsoids: d.num_ellipsoids,
            semi_axis_range: [d.semi_axis_range.0, d.semi_axis_range.1],
            on_plane_fraction: d.on_plane_fraction,
            frames: d.frames,
            frame_period: d.frame_period,
            trajectory: TrajectoryName::Orbit,
            detection_probability: d.detection_probability,
            conic_model: ConicModelName::BoundingBox,
            max_range: d.max_range,
            image_size: [d.image_size.0, d.image_size.1],
            camera: [d.camera.fx, d.camera.fy, d.camera.cx, d.camera.cy],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub pixel: f64,
    pub plane_angle: f64,
    pub plane_offset: f64,
    pub bbox: f64,
    pub odometry_rotation: f64,
    pub odometry_translation: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let d = NoiseLevels::default();
        Self {
            pixel: d.pixel,
            plane_angle: d.plane_angle,
            plane_offset: d.plane_offset,
            bbox: d.bbox,
            odometry_rotation: d.odometry_rotation,
            odometry_translation: d.odometry_translation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub max_iterations: usize,
    /// Iteration cap of the intermediate per-keyframe solves.
    pub keyframe_iterations: usize,
    /// Points and quadrics join the graph once observed in this many frames.
    pub min_point_views: usize,
    pub min_quadric_views: usize,
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub relative_decrease_tol: f64,
    pub absolute_error_tol: f64,
    pub step_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            max_iterations: d.max_iterations,
            keyframe_iterations: 20,
            min_point_views: 2,
            min_quadric_views: 8,
            initial_lambda: d.initial_lambda,
            lambda_up: d.lambda_up,
            lambda_down: d.lambda_down,
            relative_decrease_tol: d.relative_decrease_tol,
            absolute_error_tol: d.absolute_error_tol,
            step_tol: d.step_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintSection {
    pub point_plane_base: f64,
    pub parallel_deg: f64,
    pub perpendicular_deg: f64,
    pub support_floor: f64,
}

impl Default for ConstraintSection {
    fn default() -> Self {
        let d = ConstraintThresholds::default();
        Self {
            point_plane_base: d.th_pp_base,
            parallel_deg: d.th_parallel,
            perpendicular_deg: d.th_perpendicular,
            support_floor: d.th_support_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitSection {
    pub point: f64,
    pub plane: f64,
    pub quadric: f64,
}

/// Plane noise is drawn in the tangent space of the unit coefficient vector, where a
/// wall a few meters away turns several times faster than the step suggests; a
/// tighter default keeps the start comparable to a fitted plane.
pub const DEFAULT_PLANE_INIT: f64 = 0.005;

impl Default for InitSection {
    fn default() -> Self {
        let d = Perturbation::default();
        Self {
            point: d.point,
            plane: DEFAULT_PLANE_INIT,
            quadric: d.quadric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub delta: usize,
    pub max_dt: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        let d = EvalConfig::default();
        Self {
            delta: d.delta,
            max_dt: d.max_dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seeds: Vec<u64>,
    pub ablations: Vec<String>,
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            ablations: Ablation::ALL.iter().map(|a| a.name().to_string()).collect(),
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scene: SceneSection,
    pub noise: NoiseSection,
    pub solver: SolverSection,
    pub constraints: ConstraintSection,
    pub init: InitSection,
    pub eval: EvalSection,
    pub run: RunSection,
}

impl RunConfig {
    /// Parses and validates; errors name the offending line and key.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.run.seeds.is_empty() {
            return Err("run.seeds: at least one seed is required".into());
        }
        let ablations = self.ablations()?;
        if ablations.is_empty() {
            return Err("run.ablations: at least one ablation is required".into());
        }
        self.scene_config(self.run.seeds[0]).validate().map_err(|e| format!("scene: {e}"))?;
        self.solve_settings().validate()?;
        if self.eval.delta < 1 {
            return Err("eval.delta must be at least 1".into());
        }
        if !(self.eval.max_dt > 0.0 && self.eval.max_dt.is_finite()) {
            return Err("eval.max_dt must be positive".into());
        }
        Ok(())
    }

    pub fn ablations(&self) -> Result<Vec<Ablation>, String> {
        let mut out: Vec<Ablation> = Vec::new();
        for name in &self.run.ablations {
            let a: Ablation = name.parse().map_err(|e| format!("run.ablations: {e}"))?;
            if out.contains(&a) {
                return Err(format!("run.ablations: '{name}' listed twice"));
            }
            out.push(a);
        }
        Ok(out)
    }

    pub fn noise_levels(&self) -> NoiseLevels {
        let n = &self.noise;
        NoiseLevels {
            pixel: n.pixel,
            plane_angle: n.plane_angle,
            plane_offset: n.plane_offset,
            bbox: n.bbox,
            odometry_rotation: n.odometry_rotation,
            odometry_translation: n.odometry_translation,
        }
    }

    pub fn scene_config(&self, seed: u64) -> SceneConfig {
        let s = &self.scene;
        SceneConfig {
            room_half_extents: Vector3::from(s.room_half_extents),
            num_points: s.num_points,
            num_planes: s.num_planes,
            num_ellipsoids: s.num_ellipsoids,
            semi_axis_range: (s.semi_axis_range[0], s.semi_axis_range[1]),
            on_plane_fraction: s.on_plane_fraction,
            seed,
            noise: self.noise_levels(),
            camera: CameraIntrinsics {
                fx: s.camera[0],
                fy: s.camera[1],
                cx: s.camera[2],
                cy: s.camera[3],
            },
            image_size: (s.image_size[0], s.image_size[1]),
            frames: s.frames,
            frame_period: s.frame_period,
            trajectory: match s.trajectory {
                TrajectoryName::Orbit => TrajectoryKind::Orbit,
                TrajectoryName::Lawnmower => TrajectoryKind::Lawnmower,
            },
            detection_probability: s.detection_probability,
            conic_model: match s.conic_model {
                ConicModelName::BoundingBox => ConicModel::BoundingBox,
                ConicModelName::Exact => ConicModel::Exact,
            },
            max_range: s.max_range,
        }
    }

    pub fn solve_settings(&self) -> SolveSettings {
        let s = &self.solver;
        let c = &self.constraints;
        let i = &self.init;
        SolveSettings {
            solver: SolverConfig {
                max_iterations: s.max_iterations,
                initial_lambda: s.initial_lambda,
                lambda_up: s.lambda_up,
                lambda_down: s.lambda_down,
                relative_decrease_tol: s.relative_decrease_tol,
                absolute_error_tol: s.absolute_error_tol,
                step_tol: s.step_tol,
            },
            keyframe_iterations: s.keyframe_iterations,
            min_point_views: s.min_point_views,
            min_quadric_views: s.min_quadric_views,
            thresholds: ConstraintThresholds {
                th_pp_base: c.point_plane_base,
                th_parallel: c.parallel_deg,
                th_perpendicular: c.perpendicular_deg,
                th_support_floor: c.support_floor,
            },
            sigmas: FactorSigmas::for_noise(&self.noise_levels()),
            // poses are initialized by chaining odometry, not by perturbing ground truth
            init: Perturbation {
                pose: 0.0,
                point: i.point,
                plane: i.plane,
                quadric: i.quadric,
            },
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            delta: self.eval.delta,
            max_dt: self.eval.max_dt,
        }
    }
}
