//! SO(3)/SE(3) exponential and logarithm maps and their Jacobians.
//!
//! Tangent vectors of SE(3) are ordered rotation first: `xi = (omega, v)`.
//! Poses are perturbed on the right, `T' = T * exp(xi)`.

use nalgebra::{Matrix3, Matrix4, Matrix6, Rotation3, UnitQuaternion, Vector3, Vector6};

use super::Pose;

const SMALL_ANGLE: f64 = 1e-5;

/// Skew-symmetric cross-product matrix, `hat(a) * b == a.cross(&b)`.
pub fn hat(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

pub fn so3_exp(omega: &Vector3<f64>) -> Rotation3<f64> {
    Rotation3::from_scaled_axis(*omega)
}

/// Rotation vector of `r`, with angle in `[0, pi]`.
pub fn so3_log(r: &Rotation3<f64>) -> Vector3<f64> {
    let mut q = UnitQuaternion::from_rotation_matrix(r);
    if q.w < 0.0 {
        q = UnitQuaternion::new_unchecked(-q.into_inner());
    }
    let v = q.imag();
    let s = v.norm();
    if s < 1e-300 {
        return Vector3::zeros();
    }
    let angle = 2.0 * s.atan2(q.w);
    v * (angle / s)
}

/// Left Jacobian of SO(3).
pub fn so3_left_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta = omega.norm();
    let w = hat(omega);
    let (a, b) = if theta < SMALL_ANGLE {
        (0.5 - theta * theta / 24.0, 1.0 / 6.0 - theta * theta / 120.0)
    } else {
        let t2 = theta * theta;
        ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    };
    Matrix3::identity() + w * a + w * w * b
}

pub fn so3_left_jacobian_inv(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta = omega.norm();
    let w = hat(omega);
    let c = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    Matrix3::identity() - w * 0.5 + w * w * c
}

pub fn se3_exp(xi: &Vector6<f64>) -> Pose {
    let omega = xi.fixed_rows::<3>(0).into_owned();
    let v = xi.fixed_rows::<3>(3).into_owned();
    Pose::new(so3_exp(&omega), so3_left_jacobian(&omega) * v)
}

pub fn se3_log(t: &Pose) -> Vector6<f64> {
    let omega = so3_log(&t.rotation);
    let v = so3_left_jacobian_inv(&omega) * t.translation;
    let mut xi = Vector6::zeros();
    xi.fixed_rows_mut::<3>(0).copy_from(&omega);
    xi.fixed_rows_mut::<3>(3).copy_from(&v);
    xi
}

/// Adjoint of `t` acting on `(omega, v)` tangents: `t * exp(xi) * t^-1 == exp(adjoint(t) * xi)`.
pub fn se3_adjoint(t: &Pose) -> Matrix6<f64> {
    let r = t.rotation.matrix();
    let mut ad = Matrix6::zeros();
    ad.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    ad.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
    ad.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(hat(&t.translation) * r));
    ad
}

/// Coupling block of the SE(3) left Jacobian (translation rows, rotation columns).
fn se3_q_block(omega: &Vector3<f64>, v: &Vector3<f64>) -> Matrix3<f64> {
    let theta = omega.norm();
    let p = hat(omega);
    let r = hat(v);
    let (c1, c2, c3) = if theta < 1e-2 {
        let t2 = theta * theta;
        (
            1.0 / 6.0 - t2 / 120.0,
            1.0 / 24.0 - t2 / 720.0,
            1.0 / 120.0 - t2 / 2520.0,
        )
    } else {
        let t2 = theta * theta;
        let (s, c) = theta.sin_cos();
        (
            (theta - s) / (t2 * theta),
            (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2),
            (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta),
        )
    };
    let prp = p * r * p;
    r * 0.5 + (p * r + r * p + prp) * c1 + (p * p * r + r * p * p - prp * 3.0) * c2
        + (prp * p + p * prp) * c3
}

/// Left Jacobian of SE(3): `exp(xi + d) ~= exp(J_l(xi) d) * exp(xi)`.
pub fn se3_left_jacobian(xi: &Vector6<f64>) -> Matrix6<f64> {
    let omega = xi.fixed_rows::<3>(0).into_owned();
    let v = xi.fixed_rows::<3>(3).into_owned();
    let jl = so3_left_jacobian(&omega);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&jl);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&jl);
    out.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&se3_q_block(&omega, &v));
    out
}

/// Inverse of the SE(3) right Jacobian: `log(exp(xi) * exp(d)) ~= xi + J_r^-1(xi) d`.
pub fn se3_right_jacobian_inv(xi: &Vector6<f64>) -> Matrix6<f64> {
    let neg = -xi;
    let omega = neg.fixed_rows::<3>(0).into_owned();
    let v = neg.fixed_rows::<3>(3).into_owned();
    let jinv = so3_left_jacobian_inv(&omega);
    let q = se3_q_block(&omega, &v);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&jinv);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&jinv);
    out.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(-jinv * q * jinv));
    out
}

/// Generator `i` of se(3) as a 4x4 matrix, ordering `(omega, v)`.
pub fn se3_generator(i: usize) -> Matrix4<f64> {
    let mut g = Matrix4::zeros();
    match i {
        0..=2 => {
            let mut e = Vector3::zeros();
            e[i] = 1.0;
            g.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&e));
        }
        3..=5 => g[(i - 3, 3)] = 1.0,
        _ => panic!("se(3) generator index out of range: {i}"),
    }
    g
}
