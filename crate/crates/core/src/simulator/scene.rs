use std::f64::consts::TAU;

use nalgebra::{Matrix3, Rotation3, Vector3, Vector4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::observe::{point_visible, visible_planes};
use super::{streams, GroundTruth, SceneConfig, SimError, TrajectoryKind};
use crate::geometry::{plane_normalize, DualQuadric, EllipsoidShape, PlaneLandmark, Pose};

/// Attempts at drawing a scene whose every frame sees enough structure.
const SCENE_ATTEMPTS: usize = 50;
/// Free-space points keep at least this distance from every room face.
const FREE_MARGIN: f64 = 0.5;
/// On-plane points keep this distance from the edges of their face.
const EDGE_MARGIN: f64 = 0.3;
const MIN_VISIBLE_POINTS: usize = 5;

/// The six room faces in generation order: floor, -x, -y, +x, +y walls, ceiling.
pub(crate) fn room_faces(cfg: &SceneConfig) -> [PlaneLandmark; 6] {
    let h = cfg.room_half_extents;
    let raw = [
        Vector4::new(0.0, 0.0, 1.0, 0.0),
        Vector4::new(1.0, 0.0, 0.0, h.x),
        Vector4::new(0.0, 1.0, 0.0, h.y),
        Vector4::new(1.0, 0.0, 0.0, -h.x),
        Vector4::new(0.0, 1.0, 0.0, -h.y),
        Vector4::new(0.0, 0.0, 1.0, -2.0 * h.z),
    ];
    raw.map(|r| plane_normalize(&r).expect("room faces have unit normals"))
}

/// Uniform sample on room face `face`, away from its edges so that no point is
/// also close to a neighbouring face.
fn sample_on_face(face: usize, cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let h = cfg.room_half_extents;
    let m = |half: f64| EDGE_MARGIN.min(0.25 * half);
    let (mx, my, mz) = (m(h.x), m(h.y), m(h.z));
    let x = rng.random_range(-h.x + mx..=h.x - mx);
    let y = rng.random_range(-h.y + my..=h.y - my);
    let z = rng.random_range(mz..=2.0 * h.z - mz);
    match face {
        0 => Vector3::new(x, y, 0.0),
        1 => Vector3::new(-h.x, y, z),
        2 => Vector3::new(x, -h.y, z),
        3 => Vector3::new(h.x, y, z),
        4 => Vector3::new(x, h.y, z),
        _ => Vector3::new(x, y, 2.0 * h.z),
    }
}

fn sample_free(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let h = cfg.room_half_extents;
    let m = |half: f64| FREE_MARGIN.min(0.25 * half);
    let (mx, my, mz) = (m(h.x), m(h.y), m(h.z));
    Vector3::new(
        rng.random_range(-h.x + mx..=h.x - mx),
        rng.random_range(-h.y + my..=h.y - my),
        rng.random_range(mz..=2.0 * h.z - mz),
    )
}

/// Camera at `eye` looking at `target`, image x to the right and y downwards.
pub(crate) fn look_at(eye: &Vector3<f64>, target: &Vector3<f64>) -> Pose {
    let z = (target - eye).normalize();
    let x = z.cross(&Vector3::z()).normalize();
    let y = z.cross(&x);
    Pose::new(
        Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z])),
        *eye,
    )
}

pub(crate) fn orbit_radius(cfg: &SceneConfig) -> f64 {
    0.6 * cfg.room_half_extents.x.min(cfg.room_half_extents.y)
}

fn camera_height(cfg: &SceneConfig) -> f64 {
    (0.8 * cfg.room_half_extents.z).min(1.2)
}

/// Objects stay inside this radius around the room center, clear of the camera path.
fn object_radius(cfg: &SceneConfig) -> f64 {
    0.55 * orbit_radius(cfg)
}

/// Smooth camera path; deterministic (the orbit has no random component).
pub fn generate_trajectory(cfg: &SceneConfig) -> Result<Vec<Pose>, SimError> {
    cfg.validate()?;
    let h = cfg.room_half_extents;
    let height = camera_height(cfg);
    let n = cfg.frames;
    let poses: Vec<Pose> = match cfg.trajectory {
        TrajectoryKind::Orbit => {
            let r = orbit_radius(cfg);
            let target = Vector3::new(0.0, 0.0, 0.25 * height);
            (0..n)
                .map(|i| {
                    let a = TAU * i as f64 / n as f64;
                    look_at(&Vector3::new(r * a.cos(), r * a.sin(), height), &target)
                })
                .collect()
        }
        TrajectoryKind::Lawnmower => {
            // two rows joined by a short connector, sampled uniformly in arc length
            let corners = [
                Vector3::new(-0.6 * h.x, -0.6 * h.y, height),
                Vector3::new(0.6 * h.x, -0.6 * h.y, height),
                Vector3::new(0.6 * h.x, -0.2 * h.y, height),
                Vector3::new(-0.6 * h.x, -0.2 * h.y, height),
            ];
            let lengths: Vec<f64> = corners.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
            let total: f64 = lengths.iter().sum();
            let heading = Vector3::new(0.0, 1.0, -0.35);
            (0..n)
                .map(|i| {
                    let mut s = total * i as f64 / (n - 1) as f64;
                    let mut seg = 0;
                    while seg + 1 < lengths.len() && s > lengths[seg] {
                        s -= lengths[seg];
                        seg += 1;
                    }
                    let eye = corners[seg] + (corners[seg + 1] - corners[seg]) * (s / lengths[seg]);
                    look_at(&eye, &(eye + heading))
                })
                .collect()
        }
    };
    let inside = |p: &Pose| {
        let t = p.translation;
        t.x.abs() < h.x && t.y.abs() < h.y && t.z > 0.0 && t.z < 2.0 * h.z
    };
    if !poses.iter().all(inside) {
        return Err(SimError::InfeasibleConfig("camera path leaves the room".into()));
    }
    Ok(poses)
}

fn place_objects(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<Vec<DualQuadric>, SimError> {
    let (lo, hi) = cfg.semi_axis_range;
    let radius = object_radius(cfg);
    if cfg.num_ellipsoids > 0 && (hi >= radius || hi >= cfg.room_half_extents.z) {
        return Err(SimError::InfeasibleConfig(format!(
            "ellipsoids up to {hi} m do not fit in the object area of radius {radius:.3} m"
        )));
    }
    let mut out: Vec<DualQuadric> = Vec::with_capacity(cfg.num_ellipsoids);
    let mut attempts = 0;
    while out.len() < cfg.num_ellipsoids {
        attempts += 1;
        if attempts > 10_000 {
            return Err(SimError::InfeasibleConfig("cannot place ellipsoids without overlap".into()));
        }
        let axes = Vector3::new(
            rng.random_range(lo..=hi),
            rng.random_range(lo..=hi),
            rng.random_range(lo..=hi),
        );
        let yaw = rng.random_range(0.0..TAU);
        let rho = radius * rng.random_range(0.0f64..1.0).sqrt();
        let phi = rng.random_range(0.0..TAU);
        let reach = axes.max();
        if rho + reach > radius {
            continue;
        }
        // resting on the floor: the vertical semi-axis equals the center height
        let center = Vector3::new(rho * phi.cos(), rho * phi.sin(), axes.z);
        let clear = out
            .iter()
            .all(|q| (q.center() - center).norm() > q.shape.max_semi_axis() + reach + 0.1);
        if !clear {
            continue;
        }
        let pose = Pose::new(Rotation3::from_euler_angles(0.0, 0.0, yaw), center);
        let shape = EllipsoidShape::from_vector(axes).map_err(|e| SimError::InfeasibleConfig(e.to_string()))?;
        out.push(DualQuadric::new(pose, shape));
    }
    Ok(out)
}

/// Room with points and floor-supported ellipsoids, plus the camera trajectory.
pub fn generate_scene(cfg: &SceneConfig) -> Result<GroundTruth, SimError> {
    cfg.validate()?;
    let poses = generate_trajectory(cfg)?;
    let faces = room_faces(cfg);
    let planes: Vec<PlaneLandmark> = faces[..cfg.num_planes].to_vec();
    let mut rng = cfg.rng(streams::SCENE);
    let quadrics = place_objects(cfg, &mut rng)?;
    let supports = vec![0; quadrics.len()];

    let on_plane = if cfg.num_planes == 0 {
        0
    } else {
        (cfg.on_plane_fraction * cfg.num_points as f64).round() as usize
    };
    for _ in 0..SCENE_ATTEMPTS {
        let mut points = Vec::with_capacity(cfg.num_points);
        let mut point_planes = Vec::with_capacity(cfg.num_points);
        for i in 0..cfg.num_points {
            if i < on_plane {
                let face = rng.random_range(0..cfg.num_planes);
                points.push(sample_on_face(face, cfg, &mut rng));
                point_planes.push(Some(face));
            } else {
                points.push(sample_free(cfg, &mut rng));
                point_planes.push(None);
            }
        }
        let enough = poses.iter().all(|pose| {
            let seen = points.iter().filter(|x| point_visible(x, pose, cfg)).count();
            let planes_ok = cfg.num_planes == 0 || !visible_planes(pose, cfg).is_empty();
            let points_ok = cfg.num_points < MIN_VISIBLE_POINTS || seen >= MIN_VISIBLE_POINTS;
            planes_ok && points_ok
        });
        if enough {
            let timestamps = (0..poses.len()).map(|i| i as f64 * cfg.frame_period).collect();
            return Ok(GroundTruth {
                points,
                point_planes,
                planes,
                quadrics,
                supports,
                poses,
                timestamps,
            });
        }
    }
    Err(SimError::InfeasibleConfig(
        "some frame sees fewer than 5 points or no plane".into(),
    ))
}
