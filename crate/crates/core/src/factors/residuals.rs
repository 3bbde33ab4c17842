use nalgebra::{DVector, Matrix3, Vector2, Vector3, Vector6};

use super::{FactorError, FactorKind, Measurement, Variable};
use crate::geometry::{
    conic_normalize, plane_boxminus, plane_transform, project_point, project_quadric, se3_log,
    CameraIntrinsics, DualConic, DualQuadric, GeometryError, PlaneLandmark, Point3, Pose,
};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Upper triangle of a symmetric matrix, off-diagonals scaled by sqrt(2), so that
/// the Euclidean norm of the result is the Frobenius norm of the input.
pub fn symmetric_to_vec6(m: &Matrix3<f64>) -> Vector6<f64> {
    Vector6::new(
        m[(0, 0)],
        m[(1, 1)],
        m[(2, 2)],
        SQRT2 * m[(0, 1)],
        SQRT2 * m[(0, 2)],
        SQRT2 * m[(1, 2)],
    )
}

/// Measured minus predicted pixel.
pub fn reprojection_residual(
    x: &Point3,
    cam: &Pose,
    measured: &Vector2<f64>,
    k: &CameraIntrinsics,
) -> Result<Vector2<f64>, GeometryError> {
    Ok(measured - project_point(x, cam, k)?)
}

/// `log(meas^-1 * t_k^-1 * t_c)`, where `meas` is the measured pose of `c` in the frame of `k`.
pub fn odometry_residual(t_c: &Pose, t_k: &Pose, meas: &Pose) -> Vector6<f64> {
    se3_log(&(meas.inverse() * t_k.inverse() * *t_c))
}

pub fn pose_prior_residual(t: &Pose, prior: &Pose) -> Vector6<f64> {
    se3_log(&(prior.inverse() * *t))
}

/// Difference of the normalized projected and measured dual conics, as a 6-vector.
pub fn quadric_obs_residual(
    q: &DualQuadric,
    cam: &Pose,
    measured: &DualConic,
    k: &CameraIntrinsics,
) -> Result<Vector6<f64>, GeometryError> {
    let predicted = conic_normalize(&project_quadric(q, cam, k))?;
    let measured = conic_normalize(measured)?;
    Ok(symmetric_to_vec6(&(predicted.0 - measured.0)))
}

/// Tangent-space difference between the world plane seen from `cam` and the camera-frame measurement.
pub fn plane_obs_residual(p: &PlaneLandmark, cam: &Pose, measured: &PlaneLandmark) -> Vector3<f64> {
    plane_boxminus(&plane_transform(p, &cam.inverse()), measured)
}

/// Signed orthogonal distance of the point from the plane.
pub fn point_plane_residual(x: &Point3, p: &PlaneLandmark) -> f64 {
    p.signed_distance(x)
}

pub fn parallel_residual(p1: &PlaneLandmark, p2: &PlaneLandmark) -> f64 {
    p1.unit_normal().dot(&p2.unit_normal()).abs() - 1.0
}

pub fn perpendicular_residual(p1: &PlaneLandmark, p2: &PlaneLandmark) -> f64 {
    p1.unit_normal().dot(&p2.unit_normal())
}

/// `pi^T Q* pi`, zero when the plane touches the ellipsoid.
pub fn tangency_residual(p: &PlaneLandmark, q: &DualQuadric) -> f64 {
    let pi = p.coeffs();
    (pi.transpose() * q.matrix() * pi)[0]
}

fn scalar(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

pub(super) fn dispatch(
    kind: FactorKind,
    vars: &[&Variable],
    measurement: &Measurement,
) -> Result<DVector<f64>, FactorError> {
    use Variable as V;
    let out = match (kind, vars, measurement) {
        (FactorKind::Reprojection, [V::Pose(cam), V::Point(x)], Measurement::Pixel { pixel, camera }) => {
            DVector::from_column_slice(reprojection_residual(x, cam, pixel, camera)?.as_slice())
        }
        (FactorKind::Odometry, [V::Pose(c), V::Pose(k)], Measurement::RelativePose(m)) => {
            DVector::from_column_slice(odometry_residual(c, k, m).as_slice())
        }
        (FactorKind::PosePrior, [V::Pose(t)], Measurement::Pose(m)) => {
            DVector::from_column_slice(pose_prior_residual(t, m).as_slice())
        }
        (FactorKind::QuadricObservation, [V::Pose(cam), V::Quadric(q)], Measurement::Conic { conic, camera }) => {
            DVector::from_column_slice(quadric_obs_residual(q, cam, conic, camera)?.as_slice())
        }
        (FactorKind::PlaneObservation, [V::Pose(cam), V::Plane(p)], Measurement::Plane(m)) => {
            DVector::from_column_slice(plane_obs_residual(p, cam, m).as_slice())
        }
        (FactorKind::PointPlane, [V::Point(x), V::Plane(p)], Measurement::None) => {
            scalar(point_plane_residual(x, p))
        }
        (FactorKind::ParallelPlanes, [V::Plane(a), V::Plane(b)], Measurement::None) => {
            scalar(parallel_residual(a, b))
        }
        (FactorKind::PerpendicularPlanes, [V::Plane(a), V::Plane(b)], Measurement::None) => {
            scalar(perpendicular_residual(a, b))
        }
        (FactorKind::Tangency, [V::Plane(p), V::Quadric(q)], Measurement::None) => {
            scalar(tangency_residual(p, q))
        }
        _ => return Err(FactorError::MeasurementMismatch { kind }),
    };
    Ok(out)
}
