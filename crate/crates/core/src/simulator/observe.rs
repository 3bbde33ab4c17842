use nalgebra::{Vector2, Vector3, Vector6};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::scene::room_faces;
use super::{streams, ConicModel, FrameObservations, GroundTruth, MeasurementSet, SceneConfig};
use crate::geometry::lie::so3_exp;
use crate::geometry::{
    bbox_to_dual_conic, conic_normalize, plane_normalize, plane_transform, project_point,
    project_quadric, se3_exp, BoundingBox, DualConic, DualQuadric, Point3, Pose,
};

/// Anything closer than this to the camera is not observed.
const NEAR_CLIP: f64 = 0.1;
/// Rays per image side used to decide which room faces are in view.
const RAY_GRID: usize = 5;

fn in_image(u: &Vector2<f64>, cfg: &SceneConfig) -> bool {
    u.x >= 0.0 && u.y >= 0.0 && u.x < cfg.image_size.0 as f64 && u.y < cfg.image_size.1 as f64
}

pub(crate) fn point_visible(x: &Point3, pose: &Pose, cfg: &SceneConfig) -> bool {
    let pc = pose.inverse().transform_point(x);
    if pc.z <= NEAR_CLIP || pc.norm() > cfg.max_range {
        return false;
    }
    project_point(x, pose, &cfg.camera).is_ok_and(|u| in_image(&u, cfg))
}

/// Scene planes that some image ray leaves the room through, within range.
pub(crate) fn visible_planes(pose: &Pose, cfg: &SceneConfig) -> Vec<usize> {
    let faces = room_faces(cfg);
    let k = &cfg.camera;
    let (w, h) = (cfg.image_size.0 as f64, cfg.image_size.1 as f64);
    let mut seen = [false; 6];
    for i in 0..RAY_GRID {
        for j in 0..RAY_GRID {
            let u = w * (i as f64 + 0.5) / RAY_GRID as f64;
            let v = h * (j as f64 + 0.5) / RAY_GRID as f64;
            let dir_cam = Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
            let dir = pose.rotation * dir_cam;
            let mut best: Option<(usize, f64)> = None;
            for (f, face) in faces.iter().enumerate() {
                let n = face.unit_normal();
                let denom = n.dot(&dir);
                if denom.abs() < 1e-12 {
                    continue;
                }
                let t = -(n.dot(&pose.translation) + face.offset()) / denom;
                if t > 0.0 && best.is_none_or(|(_, bt)| t < bt) {
                    best = Some((f, t));
                }
            }
            if let Some((f, t)) = best {
                if t * dir.norm() <= cfg.max_range {
                    seen[f] = true;
                }
            }
        }
    }
    (0..cfg.num_planes).filter(|f| seen[*f]).collect()
}

/// Tight axis-aligned box of the ellipse whose dual conic is `c`: the vertical and
/// horizontal tangent lines `(1, 0, -u)` and `(0, 1, -v)` solve `l^T C l = 0`.
pub fn conic_bounding_box(c: &DualConic) -> Option<BoundingBox> {
    let m = c.matrix();
    let roots = |a: f64, b: f64| {
        // m22 s^2 - 2 b s + a = 0
        let disc = b * b - a * m[(2, 2)];
        if !(disc > 0.0) || m[(2, 2)].abs() < 1e-300 {
            return None;
        }
        let r1 = (b - disc.sqrt()) / m[(2, 2)];
        let r2 = (b + disc.sqrt()) / m[(2, 2)];
        Some((r1.min(r2), r1.max(r2)))
    };
    let (x0, x1) = roots(m[(0, 0)], m[(0, 2)])?;
    let (y0, y1) = roots(m[(1, 1)], m[(1, 2)])?;
    BoundingBox::new(x0, y0, x1, y1).ok()
}

/// Smallest camera depth over the ellipsoid surface.
fn min_depth(q: &DualQuadric, pose: &Pose) -> f64 {
    let axis = pose.rotation * Vector3::z();
    let r = q.pose.rotation.matrix();
    let l2 = q.shape.semi_axes().component_mul(q.shape.semi_axes());
    let m = r * nalgebra::Matrix3::from_diagonal(&l2) * r.transpose();
    axis.dot(&(q.center() - pose.translation)) - (axis.transpose() * m * axis)[0].sqrt()
}

fn normal3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.sample(StandardNormal))
}

fn observe_quadric(
    q: &DualQuadric,
    pose: &Pose,
    cfg: &SceneConfig,
    rng: &mut ChaCha8Rng,
) -> Option<DualConic> {
    // draws happen unconditionally so visibility never shifts later random numbers
    let keep: f64 = rng.random();
    let edge_noise: [f64; 4] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal) * cfg.noise.bbox);
    if min_depth(q, pose) <= NEAR_CLIP || (q.center() - pose.translation).norm() > cfg.max_range {
        return None;
    }
    let projected = project_quadric(q, pose, &cfg.camera);
    let b = conic_bounding_box(&projected)?;
    let (w, h) = (cfg.image_size.0 as f64, cfg.image_size.1 as f64);
    if b.x_min < 0.0 || b.y_min < 0.0 || b.x_max >= w || b.y_max >= h || keep >= cfg.detection_probability {
        return None;
    }
    match cfg.conic_model {
        ConicModel::Exact => conic_normalize(&projected).ok(),
        ConicModel::BoundingBox => {
            let noisy = BoundingBox::new(
                b.x_min + edge_noise[0],
                b.y_min + edge_noise[1],
                b.x_max + edge_noise[2],
                b.y_max + edge_noise[3],
            )
            .ok()?;
            Some(bbox_to_dual_conic(&noisy))
        }
    }
}

/// Noisy measurements of every visible landmark in every frame, in landmark order.
pub fn synthesize_observations(gt: &GroundTruth, cfg: &SceneConfig) -> MeasurementSet {
    let mut rng = cfg.rng(streams::OBSERVATIONS);
    let noise = &cfg.noise;
    let mut frames = Vec::with_capacity(gt.poses.len());
    for (f, pose) in gt.poses.iter().enumerate() {
        let mut obs = FrameObservations::default();
        for (i, x) in gt.points.iter().enumerate() {
            if !point_visible(x, pose, cfg) {
                continue;
            }
            let eps = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            let u = project_point(x, pose, &cfg.camera).expect("visible points project");
            obs.pixels.push((i, u + eps * noise.pixel));
        }
        let world_to_cam = pose.inverse();
        for i in visible_planes(pose, cfg) {
            let local = plane_transform(&gt.planes[i], &world_to_cam);
            let n = local.unit_normal();
            // rotation about an axis perpendicular to the normal, plus an offset shift
            let raw_axis = normal3(&mut rng);
            let tangent = raw_axis - n * n.dot(&raw_axis);
            let offset_eps: f64 = rng.sample(StandardNormal);
            let tilted = so3_exp(&(tangent * noise.plane_angle)) * n;
            let d = local.offset() + offset_eps * noise.plane_offset;
            let measured = plane_normalize(&tilted.push(d)).expect("unit normal stays nonzero");
            obs.planes.push((i, measured));
        }
        for (i, q) in gt.quadrics.iter().enumerate() {
            if let Some(conic) = observe_quadric(q, pose, cfg, &mut rng) {
                obs.conics.push((i, conic));
            }
        }
        if f > 0 {
            let truth = gt.poses[f - 1].inverse() * *pose;
            let (r, t) = (normal3(&mut rng), normal3(&mut rng));
            let xi = Vector6::new(
                r.x * noise.odometry_rotation,
                r.y * noise.odometry_rotation,
                r.z * noise.odometry_rotation,
                t.x * noise.odometry_translation,
                t.y * noise.odometry_translation,
                t.z * noise.odometry_translation,
            );
            obs.odometry = Some(truth * se3_exp(&xi));
        }
        frames.push(obs);
    }
    MeasurementSet {
        camera: cfg.camera,
        frames,
    }
}
