//! Analytic Jacobians. Each block is d(residual) / d(tangent step of the variable).

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Matrix3x4, Matrix4, Matrix6, Vector4};

use super::residuals::{
    odometry_residual, pose_prior_residual, symmetric_to_vec6, tangency_residual,
};
use super::{FactorError, FactorKind, Linearization, Measurement, Variable};
use crate::geometry::lie::{hat, se3_adjoint, se3_generator, se3_right_jacobian_inv};
use crate::geometry::plane::log_with_jacobian;
use crate::geometry::quadric::projection_matrix;
use crate::geometry::{
    canonical_conic_sign, CameraIntrinsics, DualConic, DualQuadric, GeometryError, PlaneLandmark,
    Point3, Pose, MIN_DEPTH,
};

fn dyn_block<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

fn dyn_vec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn reprojection(
    cam: &Pose,
    x: &Point3,
    pixel: &nalgebra::Vector2<f64>,
    k: &CameraIntrinsics,
) -> Result<Linearization, GeometryError> {
    let rt = cam.rotation.inverse();
    let pc = rt * (x - cam.translation);
    if pc.z <= MIN_DEPTH {
        return Err(GeometryError::BehindCamera { depth: pc.z });
    }
    let iz = 1.0 / pc.z;
    let predicted = nalgebra::Vector2::new(k.fx * pc.x * iz + k.cx, k.fy * pc.y * iz + k.cy);
    let dproj = Matrix2x3::new(
        k.fx * iz,
        0.0,
        -k.fx * pc.x * iz * iz,
        0.0,
        k.fy * iz,
        -k.fy * pc.y * iz * iz,
    );
    // camera-frame point under T * exp(xi): d pc / d omega = hat(pc), d pc / d v = -I
    let mut dpc_dxi = nalgebra::Matrix3x6::zeros();
    dpc_dxi.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&pc));
    dpc_dxi
        .fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&-Matrix3::identity());
    let j_cam = -dproj * dpc_dxi;
    let j_point = -dproj * rt.matrix();
    Ok(Linearization {
        residual: dyn_vec((pixel - predicted).as_slice()),
        jacobians: vec![dyn_block(&j_cam), dyn_block(&j_point)],
    })
}

fn odometry(t_c: &Pose, t_k: &Pose, meas: &Pose) -> Linearization {
    let r = odometry_residual(t_c, t_k, meas);
    let jri = se3_right_jacobian_inv(&r);
    let relative = t_k.inverse() * *t_c;
    let j_k: Matrix6<f64> = -jri * se3_adjoint(&relative.inverse());
    Linearization {
        residual: dyn_vec(r.as_slice()),
        jacobians: vec![dyn_block(&jri), dyn_block(&j_k)],
    }
}

fn pose_prior(t: &Pose, prior: &Pose) -> Linearization {
    let r = pose_prior_residual(t, prior);
    Linearization {
        residual: dyn_vec(r.as_slice()),
        jacobians: vec![dyn_block(&se3_right_jacobian_inv(&r))],
    }
}

/// Derivative of `s * C / |C|_F` along `dc`, for fixed sign `s`.
fn normalized_derivative(c: &Matrix3<f64>, dc: &Matrix3<f64>, sign: f64) -> Matrix3<f64> {
    let n = c.norm();
    (dc - c * (c.dot(dc) / (n * n))) * (sign / n)
}

fn quadric_observation(
    cam: &Pose,
    q: &DualQuadric,
    measured: &DualConic,
    k: &CameraIntrinsics,
) -> Result<Linearization, GeometryError> {
    let p = projection_matrix(cam, k);
    let qm = q.matrix();
    let c = p * qm * p.transpose();
    let c = (c + c.transpose()) * 0.5;
    let norm = c.norm();
    if !(norm >= 1e-15) {
        return Err(GeometryError::ZeroConic);
    }
    let sign = canonical_conic_sign(&c);
    let predicted = c * (sign / norm);
    let observed = crate::geometry::conic_normalize(measured)?;
    let residual = symmetric_to_vec6(&(predicted - observed.0));

    let tcw = cam.inverse().to_homogeneous();
    let kp: Matrix3x4<f64> = k.matrix() * Matrix3x4::identity();
    let mut j_cam = Matrix6::zeros();
    for i in 0..6 {
        let dp = -(kp * se3_generator(i) * tcw);
        let half = dp * qm * p.transpose();
        let dc = half + half.transpose();
        j_cam.set_column(i, &symmetric_to_vec6(&normalized_derivative(&c, &dc, sign)));
    }
    let mut j_q = nalgebra::SMatrix::<f64, 6, 9>::zeros();
    for i in 0..9 {
        let dc = p * q.matrix_derivative(i) * p.transpose();
        j_q.set_column(i, &symmetric_to_vec6(&normalized_derivative(&c, &dc, sign)));
    }
    Ok(Linearization {
        residual: dyn_vec(residual.as_slice()),
        jacobians: vec![dyn_block(&j_cam), dyn_block(&j_q)],
    })
}

fn plane_observation(cam: &Pose, plane: &PlaneLandmark, measured: &PlaneLandmark) -> Linearization {
    let t = cam.to_homogeneous();
    let pi = plane.coeffs();
    // camera-frame plane coefficients (unnormalized): T_wc^T pi
    let u = t.transpose() * pi;
    let (r, dr_du) = log_with_jacobian(&u, measured);
    let mut du_dxi = nalgebra::Matrix4x6::zeros();
    for i in 0..6 {
        let g: Matrix4<f64> = se3_generator(i);
        du_dxi.set_column(i, &(g.transpose() * u));
    }
    let j_cam = dr_du * du_dxi;
    let j_plane = dr_du * t.transpose() * plane.tangent_basis();
    Linearization {
        residual: dyn_vec(r.as_slice()),
        jacobians: vec![dyn_block(&j_cam), dyn_block(&j_plane)],
    }
}

/// d(unit normal) / d(coeffs) as a 3x4 block (zero column for the offset).
fn unit_normal_derivative(p: &PlaneLandmark) -> Matrix3x4<f64> {
    let n = p.normal();
    let len = n.norm();
    let nh = n / len;
    let mut d = Matrix3x4::zeros();
    d.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&((Matrix3::identity() - nh * nh.transpose()) / len));
    d
}

fn point_plane(x: &Point3, plane: &PlaneLandmark) -> Linearization {
    let n = plane.normal();
    let len = n.norm();
    let d = plane.coeffs()[3];
    let raw = n.dot(x) + d;
    let r = raw / len;
    let j_x = n.transpose() / len;
    let dn = x / len - n * (raw / (len * len * len));
    let dpi = Vector4::new(dn.x, dn.y, dn.z, 1.0 / len);
    let j_plane = dpi.transpose() * plane.tangent_basis();
    Linearization {
        residual: dyn_vec(&[r]),
        jacobians: vec![dyn_block(&j_x), dyn_block(&j_plane)],
    }
}

fn plane_pair(a: &PlaneLandmark, b: &PlaneLandmark, parallel: bool) -> Linearization {
    let na = a.unit_normal();
    let nb = b.unit_normal();
    let dot = na.dot(&nb);
    let (r, s) = if parallel {
        (dot.abs() - 1.0, if dot < 0.0 { -1.0 } else { 1.0 })
    } else {
        (dot, 1.0)
    };
    let j_a = (nb.transpose() * unit_normal_derivative(a) * a.tangent_basis()) * s;
    let j_b = (na.transpose() * unit_normal_derivative(b) * b.tangent_basis()) * s;
    Linearization {
        residual: dyn_vec(&[r]),
        jacobians: vec![dyn_block(&j_a), dyn_block(&j_b)],
    }
}

fn tangency(plane: &PlaneLandmark, q: &DualQuadric) -> Linearization {
    let pi = plane.coeffs();
    let qm = q.matrix();
    let j_plane = (pi.transpose() * qm * plane.tangent_basis()) * 2.0;
    let mut j_q = nalgebra::SMatrix::<f64, 1, 9>::zeros();
    for i in 0..9 {
        j_q[i] = (pi.transpose() * q.matrix_derivative(i) * pi)[0];
    }
    Linearization {
        residual: dyn_vec(&[tangency_residual(plane, q)]),
        jacobians: vec![dyn_block(&j_plane), dyn_block(&j_q)],
    }
}

pub(super) fn dispatch(
    kind: FactorKind,
    vars: &[&Variable],
    measurement: &Measurement,
) -> Result<Linearization, FactorError> {
    use Variable as V;
    let out = match (kind, vars, measurement) {
        (FactorKind::Reprojection, [V::Pose(cam), V::Point(x)], Measurement::Pixel { pixel, camera }) => {
            reprojection(cam, x, pixel, camera)?
        }
        (FactorKind::Odometry, [V::Pose(c), V::Pose(k)], Measurement::RelativePose(m)) => odometry(c, k, m),
        (FactorKind::PosePrior, [V::Pose(t)], Measurement::Pose(m)) => pose_prior(t, m),
        (FactorKind::QuadricObservation, [V::Pose(cam), V::Quadric(q)], Measurement::Conic { conic, camera }) => {
            quadric_observation(cam, q, conic, camera)?
        }
        (FactorKind::PlaneObservation, [V::Pose(cam), V::Plane(p)], Measurement::Plane(m)) => {
            plane_observation(cam, p, m)
        }
        (FactorKind::PointPlane, [V::Point(x), V::Plane(p)], Measurement::None) => point_plane(x, p),
        (FactorKind::ParallelPlanes, [V::Plane(a), V::Plane(b)], Measurement::None) => plane_pair(a, b, true),
        (FactorKind::PerpendicularPlanes, [V::Plane(a), V::Plane(b)], Measurement::None) => {
            plane_pair(a, b, false)
        }
        (FactorKind::Tangency, [V::Plane(p), V::Quadric(q)], Measurement::None) => tangency(p, q),
        _ => return Err(FactorError::MeasurementMismatch { kind }),
    };
    Ok(out)
}
