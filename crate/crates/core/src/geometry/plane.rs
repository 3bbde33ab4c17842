//! Infinite planes as unit homogeneous 4-vectors `(n, d)` with `n.x + d = 0`.
//!
//! `pi` and `-pi` are the same plane. Stored vectors are canonical: unit norm,
//! and the component of largest magnitude is positive. Local updates live in the
//! 3-dimensional tangent space of S^3 at the canonical vector.

use nalgebra::{Matrix3x4, Matrix4, Matrix4x3, Vector3, Vector4};

use super::{GeometryError, Point3, Pose};

const DEGENERATE: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneLandmark {
    coeffs: Vector4<f64>,
}

fn largest_index(v: &Vector4<f64>) -> usize {
    let mut best = 0;
    for i in 1..4 {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    best
}

/// Scales `raw` to unit norm and picks the canonical sign.
pub fn plane_normalize(raw: &Vector4<f64>) -> Result<PlaneLandmark, GeometryError> {
    let norm = raw.norm();
    let normal_norm = raw.fixed_rows::<3>(0).norm();
    if !(norm > DEGENERATE && normal_norm > DEGENERATE) || !norm.is_finite() {
        return Err(GeometryError::DegeneratePlane);
    }
    // already-unit inputs are left untouched so normalization is exactly idempotent
    let mut coeffs = if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
        *raw
    } else {
        raw / norm
    };
    if coeffs[largest_index(&coeffs)] < 0.0 {
        coeffs = -coeffs;
    }
    Ok(PlaneLandmark { coeffs })
}

impl PlaneLandmark {
    /// Plane with the given (not necessarily unit) normal through `point`.
    pub fn from_point_normal(point: &Point3, normal: &Vector3<f64>) -> Result<Self, GeometryError> {
        plane_normalize(&Vector4::new(
            normal.x,
            normal.y,
            normal.z,
            -normal.dot(point),
        ))
    }

    pub fn coeffs(&self) -> &Vector4<f64> {
        &self.coeffs
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.coeffs.fixed_rows::<3>(0).into_owned()
    }

    pub fn unit_normal(&self) -> Vector3<f64> {
        self.normal().normalize()
    }

    /// Signed offset `d / |n|`: the plane is `unit_normal . x + offset = 0`.
    pub fn offset(&self) -> f64 {
        self.coeffs[3] / self.normal().norm()
    }

    /// Signed orthogonal distance of `x` from the plane.
    pub fn signed_distance(&self, x: &Point3) -> f64 {
        self.unit_normal().dot(x) + self.offset()
    }

    /// Orthonormal basis of the tangent space at this plane (4x3, columns orthogonal to `coeffs`).
    ///
    /// Built from the Householder reflection sending `coeffs` to `-e_k`, where `k`
    /// is the index of the largest component; the columns other than `k` are kept.
    pub fn tangent_basis(&self) -> Matrix4x3<f64> {
        let k = largest_index(&self.coeffs);
        let mut v = self.coeffs;
        v[k] += 1.0;
        let h = Matrix4::identity() - v * v.transpose() * (2.0 / v.norm_squared());
        let mut basis = Matrix4x3::zeros();
        let mut col = 0;
        for j in 0..4 {
            if j != k {
                basis.set_column(col, &h.column(j));
                col += 1;
            }
        }
        basis
    }
}

/// Applies the rigid map `t` to the plane: a point `x` on `p` maps to `t * x` on the result.
///
/// Coefficients transform as `t^-T * pi`. To express a world plane in a camera
/// frame, pass the world-to-camera transform (the inverse of the camera pose).
pub fn plane_transform(p: &PlaneLandmark, t: &Pose) -> PlaneLandmark {
    let n = t.rotation * p.normal();
    let d = p.coeffs[3] - t.translation.dot(&n);
    plane_normalize(&Vector4::new(n.x, n.y, n.z, d))
        .expect("rigid maps preserve the normal norm")
}

/// Great-circle step from `p` along `basis(p) * omega`.
pub fn plane_boxplus(p: &PlaneLandmark, omega: &Vector3<f64>) -> PlaneLandmark {
    let theta = omega.norm();
    if theta == 0.0 {
        return *p;
    }
    let dir = p.tangent_basis() * omega;
    let sinc = if theta < 1e-8 {
        1.0 - theta * theta / 6.0
    } else {
        theta.sin() / theta
    };
    let moved = p.coeffs * theta.cos() + dir * sinc;
    // moving onto the plane at infinity is measure-zero; fall back to staying put
    plane_normalize(&moved).unwrap_or(*p)
}

/// Tangent coordinates of `p1` in the chart at `p2`; the norm is the angle between the planes.
pub fn plane_boxminus(p1: &PlaneLandmark, p2: &PlaneLandmark) -> Vector3<f64> {
    log_with_jacobian(&p1.coeffs, p2).0
}

/// Log map at `base` of the unit 4-vector `u` (either sign), with its derivative w.r.t. `u`.
pub(crate) fn log_with_jacobian(
    u: &Vector4<f64>,
    base: &PlaneLandmark,
) -> (Vector3<f64>, Matrix3x4<f64>) {
    let s = if u.dot(&base.coeffs) < 0.0 { -1.0 } else { 1.0 };
    let u = u * s;
    let b = base.tangent_basis();
    let y = b.transpose() * u;
    let c = base.coeffs.dot(&u);
    let n = y.norm();
    let rr = n * n + c * c;
    let (r, dr_dy, dr_dc) = if n < 1e-12 {
        (y / c, nalgebra::Matrix3::identity() / c, -y / (c * c))
    } else {
        let theta = n.atan2(c);
        let yy = y * y.transpose() / (n * n);
        let dr_dy = yy * (c / rr) + (nalgebra::Matrix3::identity() - yy) * (theta / n);
        (y * (theta / n), dr_dy, -y / rr)
    };
    let jac = (dr_dy * b.transpose() + dr_dc * base.coeffs.transpose()) * s;
    (r, jac)
}
