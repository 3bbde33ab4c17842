//! Manifold types used by the back-end: rigid poses, points, infinite planes,
//! dual-quadric ellipsoids and dual conics.
//!
//! Frame convention: a camera pose `T_wc` maps camera-frame points into the
//! world frame, `x_world = T_wc * x_cam`. Every function that takes a camera
//! pose expects this camera-to-world transform.

mod camera;
mod conic;
pub mod lie;
pub(crate) mod plane;
pub(crate) mod quadric;

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3, Vector6};
use thiserror::Error;

pub use camera::{project_point, BoundingBox, CameraIntrinsics, MIN_DEPTH};
pub(crate) use conic::canonical_sign as canonical_conic_sign;
pub use conic::{bbox_to_dual_conic, conic_normalize, dual_conic_to_primal, DualConic};
pub use lie::{se3_exp, se3_log};
pub use plane::{
    plane_boxminus, plane_boxplus, plane_normalize, plane_transform, PlaneLandmark,
};
pub use quadric::{
    project_quadric, quadric_compose, quadric_update, DegenerateShape, DualQuadric,
    EllipsoidShape, MIN_SEMI_AXIS,
};

/// A world-frame 3D point in meters.
pub type Point3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("point lies behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("conic has vanishing Frobenius norm")]
    ZeroConic,
    #[error("conic is singular and has no primal form")]
    SingularConic,
    #[error("plane vector has no normal direction")]
    DegeneratePlane,
    #[error("semi-axes must be finite and strictly positive")]
    InvalidShape,
    #[error("rotation is not orthonormal with determinant +1")]
    InvalidRotation,
    #[error("bounding box has non-positive extent")]
    InvalidBox,
    #[error("intrinsics must have positive focal lengths")]
    InvalidIntrinsics,
}

/// Rigid transform in SE(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Rotation3::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Rotation3::identity(), t)
    }

    /// Builds a pose from a raw 3x3 matrix, rejecting anything that is not a rotation.
    pub fn from_matrix(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let orth = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if !(orth < 1e-9) || rotation.determinant() <= 0.0 {
            return Err(GeometryError::InvalidRotation);
        }
        Ok(Self::new(
            Rotation3::from_matrix_unchecked(rotation),
            translation,
        ))
    }

    pub fn inverse(&self) -> Self {
        let r = self.rotation.inverse();
        Self::new(r, -(r * self.translation))
    }

    pub fn transform_point(&self, x: &Point3) -> Point3 {
        self.rotation * x + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Right-perturbation retraction `self * exp(xi)`.
    pub fn retract(&self, xi: &Vector6<f64>) -> Self {
        *self * se3_exp(xi)
    }

    /// `log(other^-1 * self)`, the inverse of [`Pose::retract`] around `other`.
    pub fn local(&self, other: &Pose) -> Vector6<f64> {
        se3_log(&(other.inverse() * *self))
    }

    /// Re-orthonormalises the rotation after long chains of products.
    pub fn renormalized(&self) -> Self {
        // the extracted quaternion inherits the drift; normalizing it removes it
        let q = nalgebra::UnitQuaternion::from_rotation_matrix(&self.rotation);
        let q = nalgebra::UnitQuaternion::new_normalize(q.into_inner());
        Self::new(q.to_rotation_matrix(), self.translation)
    }

    pub fn is_valid(&self) -> bool {
        let r = self.rotation.matrix();
        (r.transpose() * r - Matrix3::identity()).norm() < 1e-9
            && r.determinant() > 0.0
            && self.translation.iter().all(|v| v.is_finite())
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        Pose::new(
            self.rotation * rhs.rotation,
            self.rotation * rhs.translation + self.translation,
        )
    }
}
