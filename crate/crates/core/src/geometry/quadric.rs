//! Ellipsoids as dual quadrics `Q* = T diag(a^2, b^2, c^2, -1) T^T`, stored as the
//! pair (pose, semi-axes) so that every stored value is a valid ellipsoid.

use nalgebra::{Matrix3x4, Matrix4, SVector, Vector3, Vector4, Vector6};
use thiserror::Error;

use super::{CameraIntrinsics, DualConic, GeometryError, Pose};

/// Floor applied to semi-axes after an additive shape update, in meters.
pub const MIN_SEMI_AXIS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidShape {
    semi_axes: Vector3<f64>,
}

impl EllipsoidShape {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self, GeometryError> {
        Self::from_vector(Vector3::new(a, b, c))
    }

    pub fn from_vector(semi_axes: Vector3<f64>) -> Result<Self, GeometryError> {
        if semi_axes.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(Self { semi_axes })
        } else {
            Err(GeometryError::InvalidShape)
        }
    }

    pub fn semi_axes(&self) -> &Vector3<f64> {
        &self.semi_axes
    }

    pub fn max_semi_axis(&self) -> f64 {
        self.semi_axes.max()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualQuadric {
    pub pose: Pose,
    pub shape: EllipsoidShape,
}

/// An update pushed a semi-axis below [`MIN_SEMI_AXIS`]; `clamped` holds the guarded result.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("semi-axis update fell below the {MIN_SEMI_AXIS} m floor and was clamped")]
pub struct DegenerateShape {
    pub clamped: DualQuadric,
}

impl DualQuadric {
    pub fn new(pose: Pose, shape: EllipsoidShape) -> Self {
        Self { pose, shape }
    }

    pub fn center(&self) -> Vector3<f64> {
        self.pose.translation
    }

    /// `T` applied to its canonical quadric; the composed 4x4 dual matrix.
    pub fn matrix(&self) -> Matrix4<f64> {
        quadric_compose(self)
    }

    /// Derivative of the composed matrix along tangent coordinate `i`
    /// (0..3 semi-axes, 3..9 right-perturbation of the pose).
    pub(crate) fn matrix_derivative(&self, i: usize) -> Matrix4<f64> {
        let t = self.pose.to_homogeneous();
        let l = self.shape.semi_axes;
        let canonical = Matrix4::from_diagonal(&Vector4::new(l.x * l.x, l.y * l.y, l.z * l.z, -1.0));
        if i < 3 {
            let mut d = Matrix4::zeros();
            d[(i, i)] = 2.0 * l[i];
            t * d * t.transpose()
        } else {
            let g = super::lie::se3_generator(i - 3);
            let m = t * g * canonical * t.transpose();
            m + m.transpose()
        }
    }
}

/// `T diag(a^2, b^2, c^2, -1) T^T`.
pub fn quadric_compose(q: &DualQuadric) -> Matrix4<f64> {
    let r = q.pose.rotation.matrix();
    let t = q.pose.translation;
    let l2 = q.shape.semi_axes.component_mul(&q.shape.semi_axes);
    let upper = r * nalgebra::Matrix3::from_diagonal(&l2) * r.transpose() - t * t.transpose();
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&upper);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&-t);
    m.fixed_view_mut::<1, 3>(3, 0).copy_from(&-t.transpose());
    m[(3, 3)] = -1.0;
    m
}

/// Decoupled update: semi-axes add `e[0..3]`, the pose right-multiplies `exp(e[3..9])`.
pub fn quadric_update(q: &DualQuadric, e: &SVector<f64, 9>) -> Result<DualQuadric, DegenerateShape> {
    let xi: Vector6<f64> = e.fixed_rows::<6>(3).into_owned();
    // re-orthonormalize moved poses so rotation drift cannot accumulate over many steps
    let pose = if xi == Vector6::zeros() { q.pose } else { q.pose.retract(&xi).renormalized() };
    let raw = q.shape.semi_axes + e.fixed_rows::<3>(0);
    let clamped = raw.iter().any(|v| !(*v >= MIN_SEMI_AXIS));
    let semi_axes = raw.map(|v| if v >= MIN_SEMI_AXIS { v } else { MIN_SEMI_AXIS });
    let out = DualQuadric::new(pose, EllipsoidShape { semi_axes });
    if clamped {
        Err(DegenerateShape { clamped: out })
    } else {
        Ok(out)
    }
}

/// Projection matrix `K [I 0] T_cw` for a camera pose `T_wc`.
pub(crate) fn projection_matrix(camera_pose: &Pose, k: &CameraIntrinsics) -> Matrix3x4<f64> {
    let tcw = camera_pose.inverse().to_homogeneous();
    k.matrix() * tcw.fixed_view::<3, 4>(0, 0)
}

/// Un-normalized dual conic `P Q* P^T` of the ellipsoid's image.
pub fn project_quadric(q: &DualQuadric, camera_pose: &Pose, k: &CameraIntrinsics) -> DualConic {
    let p = projection_matrix(camera_pose, k);
    DualConic::new(p * quadric_compose(q) * p.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{dual_conic_to_primal, se3_exp};
    use nalgebra::{Matrix3, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn signature(m: &Matrix4<f64>) -> (usize, usize) {
        let eig = SymmetricEigen::new(*m).eigenvalues;
        (
            eig.iter().filter(|v| **v > 0.0).count(),
            eig.iter().filter(|v| **v < 0.0).count(),
        )
    }

    fn random_quadric(rng: &mut ChaCha8Rng) -> DualQuadric {
        let pose = se3_exp(&Vector6::from_fn(|_, _| rng.random_range(-3.0..3.0)));
        let shape = EllipsoidShape::new(
            rng.random_range(0.05..2.0),
            rng.random_range(0.05..2.0),
            rng.random_range(0.05..2.0),
        )
        .unwrap();
        DualQuadric::new(pose, shape)
    }

    #[test]
    fn canonical_form_at_identity() {
        let q = DualQuadric::new(Pose::identity(), EllipsoidShape::new(1.0, 2.0, 3.0).unwrap());
        let expected = Matrix4::from_diagonal(&Vector4::new(1.0, 4.0, 9.0, -1.0));
        assert_eq!(quadric_compose(&q), expected);
    }

    #[test]
    fn translated_unit_sphere() {
        let q = DualQuadric::new(
            Pose::from_translation(Vector3::new(0.0, 0.0, 2.0)),
            EllipsoidShape::new(1.0, 1.0, 1.0).unwrap(),
        );
        // T * diag(1, 1, 1, -1) * T^T multiplied out by hand
        let expected = Matrix4::new(
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, -3.0, -2.0, //
            0.0, 0.0, -2.0, -1.0,
        );
        assert!((quadric_compose(&q) - expected).norm() < 1e-15);
        let t = q.pose.to_homogeneous();
        let direct = t * Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 1.0, -1.0)) * t.transpose();
        assert!((quadric_compose(&q) - direct).norm() < 1e-15);
    }

    #[test]
    fn composed_matrix_is_an_ellipsoid() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let m = quadric_compose(&random_quadric(&mut rng));
            assert!((m - m.transpose()).norm() < 1e-12);
            assert_eq!(signature(&m), (3, 1));
        }
    }

    #[test]
    fn zero_update_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let q = random_quadric(&mut rng);
        assert_eq!(quadric_update(&q, &SVector::zeros()).unwrap(), q);
    }

    #[test]
    fn shape_update_is_additive() {
        let q = DualQuadric::new(Pose::identity(), EllipsoidShape::new(1.0, 1.0, 1.0).unwrap());
        let mut e = SVector::<f64, 9>::zeros();
        e[0] = 0.5;
        let out = quadric_update(&q, &e).unwrap();
        assert_eq!(out.shape.semi_axes(), &Vector3::new(1.5, 1.0, 1.0));
        assert_eq!(out.pose, q.pose);
    }

    #[test]
    fn successive_pose_updates_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let q = random_quadric(&mut rng);
        let xi1 = Vector6::from_fn(|_, _| rng.random_range(-0.5..0.5));
        let xi2 = Vector6::from_fn(|_, _| rng.random_range(-0.5..0.5));
        let mut e1 = SVector::<f64, 9>::zeros();
        e1.fixed_rows_mut::<6>(3).copy_from(&xi1);
        let mut e2 = SVector::<f64, 9>::zeros();
        e2.fixed_rows_mut::<6>(3).copy_from(&xi2);
        let twice = quadric_update(&quadric_update(&q, &e1).unwrap(), &e2).unwrap();
        let expected = q.pose.to_homogeneous()
            * se3_exp(&xi1).to_homogeneous()
            * se3_exp(&xi2).to_homogeneous();
        assert!((twice.pose.to_homogeneous() - expected).norm() < 1e-12);
    }

    #[test]
    fn collapsing_axis_is_clamped_and_reported() {
        let q = DualQuadric::new(Pose::identity(), EllipsoidShape::new(0.1, 1.0, 1.0).unwrap());
        let mut e = SVector::<f64, 9>::zeros();
        e[0] = -0.5;
        let err = quadric_update(&q, &e).unwrap_err();
        assert_eq!(err.clamped.shape.semi_axes().x, MIN_SEMI_AXIS);
        assert_eq!(signature(&quadric_compose(&err.clamped)), (3, 1));
    }

    #[test]
    fn matrix_derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let q = random_quadric(&mut rng);
        let h = 1e-6;
        for i in 0..9 {
            let mut e = SVector::<f64, 9>::zeros();
            e[i] = h;
            let plus = quadric_compose(&quadric_update(&q, &e).unwrap());
            let minus = quadric_compose(&quadric_update(&q, &-e).unwrap());
            let fd = (plus - minus) / (2.0 * h);
            assert!((fd - q.matrix_derivative(i)).norm() < 1e-6 * (1.0 + fd.norm()));
        }
    }

    #[test]
    fn sphere_outline_on_optical_axis() {
        let q = DualQuadric::new(
            Pose::from_translation(Vector3::new(0.0, 0.0, 2.0)),
            EllipsoidShape::new(1.0, 1.0, 1.0).unwrap(),
        );
        let c = project_quadric(&q, &Pose::identity(), &CameraIntrinsics::identity());
        assert!((c.0 - Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -3.0))).norm() < 1e-15);
        let primal = dual_conic_to_primal(&c).unwrap();
        // circle x^2 + y^2 = 1/3
        let expected: Matrix3<f64> = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0 / 3.0));
        let expected = expected / expected.norm();
        assert!((primal - expected).norm() < 1e-12);
    }

    #[test]
    fn projection_is_invariant_to_common_rigid_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let k = CameraIntrinsics::new(520.0, 515.0, 320.0, 240.0).unwrap();
        for _ in 0..20 {
            let q = DualQuadric::new(
                Pose::from_translation(Vector3::new(0.2, -0.1, 4.0)),
                EllipsoidShape::new(0.3, 0.5, 0.4).unwrap(),
            );
            let cam = se3_exp(&Vector6::from_fn(|_, _| rng.random_range(-0.1..0.1)));
            let g = se3_exp(&Vector6::from_fn(|_, _| rng.random_range(-2.0..2.0)));
            let moved = DualQuadric::new(g * q.pose, q.shape);
            let c1 = crate::geometry::conic_normalize(&project_quadric(&q, &cam, &k)).unwrap();
            let c2 = crate::geometry::conic_normalize(&project_quadric(&moved, &(g * cam), &k)).unwrap();
            assert!((c1.0 - c2.0).norm() < 1e-9);
        }
    }
}
