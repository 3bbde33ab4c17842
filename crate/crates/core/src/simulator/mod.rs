//! Deterministic synthetic front-end.
//!
//! Scenes are axis-aligned rooms (floor, walls, optional ceiling) with textured
//! points and ellipsoid objects resting on the floor. A camera trajectory is
//! rendered into noisy measurements, constraint detection runs on a landmark
//! set, and [`build_graph`] assembles the factor graph for one ablation.
//!
//! Randomness comes from a ChaCha8 generator seeded by [`SceneConfig::seed`],
//! with a separate stream per stage so that, for example, changing a noise level
//! never changes the scene geometry.

mod build;
mod constraints;
mod io;
mod observe;
mod scene;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, DualConic, DualQuadric, PlaneLandmark, Point3, Pose};

pub use build::{
    build_graph, mean_plane_normal_error, perturb_ground_truth, Ablation, BuiltGraph, Estimates, FactorSigmas,
    Perturbation,
};
pub use constraints::{detect_constraints, point_depths, Constraint, ConstraintThresholds, LandmarkView};
pub use io::{
    parse_ground_truth, parse_measurements, write_ground_truth, write_measurements, GROUND_TRUTH_HEADER,
    MEASUREMENTS_HEADER,
};
pub use observe::{conic_bounding_box, synthesize_observations};
pub use scene::{generate_scene, generate_trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),
    #[error("inconsistent association: {0}")]
    InconsistentAssociation(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    /// Full circle around the room center, looking at the objects.
    Orbit,
    /// Serpentine sweep facing the +y wall.
    Lawnmower,
}

/// How quadric detections are turned into dual conics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConicModel {
    /// Tight box around the true outline, noisy edges, inscribed axis-aligned ellipse.
    BoundingBox,
    /// The true projected outline, without box noise. Used for exact-recovery checks.
    Exact,
}

/// Standard deviations of the simulated sensor noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLevels {
    pub pixel: f64,
    pub plane_angle: f64,
    pub plane_offset: f64,
    pub bbox: f64,
    pub odometry_rotation: f64,
    pub odometry_translation: f64,
}

impl NoiseLevels {
    pub fn zero() -> Self {
        Self {
            pixel: 0.0,
            plane_angle: 0.0,
            plane_offset: 0.0,
            bbox: 0.0,
            odometry_rotation: 0.0,
            odometry_translation: 0.0,
        }
    }
}

impl Default for NoiseLevels {
    fn default() -> Self {
        Self {
            pixel: 1.0,
            plane_angle: 0.01,
            plane_offset: 0.01,
            bbox: 2.0,
            odometry_rotation: 0.01,
            odometry_translation: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    /// Room spans `[-x, x] x [-y, y] x [0, 2 z]` meters.
    pub room_half_extents: Vector3<f64>,
    pub num_points: usize,
    /// Floor, then walls at -x, -y, +x, +y, then the ceiling; at most 6.
    pub num_planes: usize,
    pub num_ellipsoids: usize,
    pub semi_axis_range: (f64, f64),
    /// Fraction of points sampled on planes rather than in free space.
    pub on_plane_fraction: f64,
    pub seed: u64,
    pub noise: NoiseLevels,
    pub camera: CameraIntrinsics,
    pub image_size: (u32, u32),
    pub frames: usize,
    /// Seconds between frames.
    pub frame_period: f64,
    pub trajectory: TrajectoryKind,
    /// Probability that a visible object yields a detection.
    pub detection_probability: f64,
    pub conic_model: ConicModel,
    /// Points farther than this from the camera are not observed.
    pub max_range: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            room_half_extents: Vector3::new(4.0, 4.0, 1.5),
            num_points: 200,
            num_planes: 4,
            num_ellipsoids: 3,
            semi_axis_range: (0.15, 0.4),
            on_plane_fraction: 0.6,
            seed: 0,
            noise: NoiseLevels::default(),
            camera: CameraIntrinsics {
                fx: 525.0,
                fy: 525.0,
                cx: 319.5,
                cy: 239.5,
            },
            image_size: (640, 480),
            frames: 40,
            frame_period: 0.1,
            trajectory: TrajectoryKind::Orbit,
            detection_probability: 0.9,
            conic_model: ConicModel::BoundingBox,
            max_range: 12.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InfeasibleConfig(m.to_string()));
        let n = &self.noise;
        let sigmas = [
            n.pixel,
            n.plane_angle,
            n.plane_offset,
            n.bbox,
            n.odometry_rotation,
            n.odometry_translation,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("noise levels must be finite and non-negative");
        }
        if self.room_half_extents.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("room half-extents must be positive");
        }
        let (lo, hi) = self.semi_axis_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("semi-axis range must be positive with min <= max");
        }
        if self.num_planes > 6 {
            return bad("a room has at most 6 planes");
        }
        if self.num_ellipsoids > 0 && self.num_planes == 0 {
            return bad("ellipsoids rest on the floor, which needs at least one plane");
        }
        if !(0.0..=1.0).contains(&self.on_plane_fraction) {
            return bad("on_plane_fraction must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.detection_probability) {
            return bad("detection_probability must lie in [0, 1]");
        }
        if self.frames < 2 {
            return bad("a trajectory needs at least 2 frames");
        }
        if !(self.frame_period > 0.0) || !(self.max_range > 0.0) {
            return bad("frame period and range must be positive");
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return bad("image size must be positive");
        }
        Ok(())
    }

    /// Generator for one stage of the simulation.
    pub(crate) fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// RNG stream identifiers, one per stage.
pub(crate) mod streams {
    pub const SCENE: u64 = 1;
    pub const OBSERVATIONS: u64 = 2;
}

/// True scene and trajectory with the provenance of every landmark.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub points: Vec<Point3>,
    /// Plane a point was sampled on, `None` for free-space points.
    pub point_planes: Vec<Option<usize>>,
    pub planes: Vec<PlaneLandmark>,
    pub quadrics: Vec<DualQuadric>,
    /// Plane each object rests on.
    pub supports: Vec<usize>,
    pub poses: Vec<Pose>,
    pub timestamps: Vec<f64>,
}

impl GroundTruth {
    pub fn landmarks(&self) -> LandmarkView<'_> {
        LandmarkView {
            points: &self.points,
            planes: &self.planes,
            quadrics: &self.quadrics,
        }
    }
}

/// Everything observed in one frame. Each entry carries the index of the landmark it came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameObservations {
    pub pixels: Vec<(usize, nalgebra::Vector2<f64>)>,
    pub planes: Vec<(usize, PlaneLandmark)>,
    pub conics: Vec<(usize, DualConic)>,
    /// Pose of this frame expressed in the previous frame; `None` for the first frame.
    pub odometry: Option<Pose>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub camera: CameraIntrinsics,
    pub frames: Vec<FrameObservations>,
}

impl MeasurementSet {
    /// The first `frames` frames only.
    pub fn prefix(&self, frames: usize) -> MeasurementSet {
        MeasurementSet {
            camera: self.camera,
            frames: self.frames[..frames.min(self.frames.len())].to_vec(),
        }
    }
}
