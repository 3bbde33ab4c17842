//! Residuals and Jacobians for every factor in the graph, plus the noise model
//! and Huber weighting.
//!
//! Jacobians are taken with respect to each variable's local tangent
//! coordinates: pose `(omega, v)` right-perturbation, point additive, plane
//! [`plane_boxplus`](crate::geometry::plane_boxplus) chart, quadric
//! `(da, db, dc, omega, v)`.

mod jacobians;
mod noise;
mod residuals;

use nalgebra::{DMatrix, DVector, SVector, Vector2, Vector3, Vector6};

use crate::geometry::{
    plane_boxplus, quadric_update, CameraIntrinsics, DualConic, DualQuadric, GeometryError,
    PlaneLandmark, Point3, Pose,
};

pub use noise::{huber_cost, huber_weight, NoiseError, NoiseModel};
pub use residuals::{
    odometry_residual, parallel_residual, perpendicular_residual, plane_obs_residual,
    point_plane_residual, pose_prior_residual, quadric_obs_residual, reprojection_residual,
    symmetric_to_vec6, tangency_residual,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VariableKind {
    Pose,
    Point,
    Plane,
    Quadric,
}

impl VariableKind {
    pub fn tangent_dim(self) -> usize {
        match self {
            VariableKind::Pose => 6,
            VariableKind::Point => 3,
            VariableKind::Plane => 3,
            VariableKind::Quadric => 9,
        }
    }
}

/// Current estimate of one graph variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variable {
    Pose(Pose),
    Point(Point3),
    Plane(PlaneLandmark),
    Quadric(DualQuadric),
}

impl Variable {
    pub fn kind(&self) -> VariableKind {
        match self {
            Variable::Pose(_) => VariableKind::Pose,
            Variable::Point(_) => VariableKind::Point,
            Variable::Plane(_) => VariableKind::Plane,
            Variable::Quadric(_) => VariableKind::Quadric,
        }
    }

    /// Applies a tangent-space step. The flag is set when a quadric semi-axis had to be clamped.
    pub fn retract(&self, delta: &[f64]) -> (Variable, bool) {
        assert_eq!(delta.len(), self.kind().tangent_dim(), "tangent step has wrong size");
        match self {
            Variable::Pose(p) => (
                Variable::Pose(p.retract(&Vector6::from_column_slice(delta)).renormalized()),
                false,
            ),
            Variable::Point(x) => (Variable::Point(x + Vector3::from_column_slice(delta)), false),
            Variable::Plane(pl) => (
                Variable::Plane(plane_boxplus(pl, &Vector3::from_column_slice(delta))),
                false,
            ),
            Variable::Quadric(q) => match quadric_update(q, &SVector::<f64, 9>::from_column_slice(delta)) {
                Ok(q) => (Variable::Quadric(q), false),
                Err(e) => (Variable::Quadric(e.clamped), true),
            },
        }
    }

    pub fn as_pose(&self) -> Option<&Pose> {
        match self {
            Variable::Pose(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_point(&self) -> Option<&Point3> {
        match self {
            Variable::Point(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_plane(&self) -> Option<&PlaneLandmark> {
        match self {
            Variable::Plane(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_quadric(&self) -> Option<&DualQuadric> {
        match self {
            Variable::Quadric(q) => Some(q),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FactorKind {
    Reprojection,
    Odometry,
    QuadricObservation,
    PlaneObservation,
    PointPlane,
    ParallelPlanes,
    PerpendicularPlanes,
    Tangency,
    PosePrior,
}

impl FactorKind {
    pub const ALL: [FactorKind; 9] = [
        FactorKind::Reprojection,
        FactorKind::Odometry,
        FactorKind::QuadricObservation,
        FactorKind::PlaneObservation,
        FactorKind::PointPlane,
        FactorKind::ParallelPlanes,
        FactorKind::PerpendicularPlanes,
        FactorKind::Tangency,
        FactorKind::PosePrior,
    ];

    pub fn residual_dim(self) -> usize {
        match self {
            FactorKind::Reprojection => 2,
            FactorKind::Odometry => 6,
            FactorKind::QuadricObservation => 6,
            FactorKind::PlaneObservation => 3,
            FactorKind::PointPlane
            | FactorKind::ParallelPlanes
            | FactorKind::PerpendicularPlanes
            | FactorKind::Tangency => 1,
            FactorKind::PosePrior => 6,
        }
    }

    /// Variable kinds the factor connects, in argument order.
    pub fn signature(self) -> &'static [VariableKind] {
        use VariableKind::*;
        match self {
            FactorKind::Reprojection => &[Pose, Point],
            FactorKind::Odometry => &[Pose, Pose],
            FactorKind::QuadricObservation => &[Pose, Quadric],
            FactorKind::PlaneObservation => &[Pose, Plane],
            FactorKind::PointPlane => &[Point, Plane],
            FactorKind::ParallelPlanes | FactorKind::PerpendicularPlanes => &[Plane, Plane],
            FactorKind::Tangency => &[Plane, Quadric],
            FactorKind::PosePrior => &[Pose],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FactorKind::Reprojection => "reprojection",
            FactorKind::Odometry => "odometry",
            FactorKind::QuadricObservation => "quadric_observation",
            FactorKind::PlaneObservation => "plane_observation",
            FactorKind::PointPlane => "point_plane",
            FactorKind::ParallelPlanes => "parallel_planes",
            FactorKind::PerpendicularPlanes => "perpendicular_planes",
            FactorKind::Tangency => "tangency",
            FactorKind::PosePrior => "pose_prior",
        }
    }
}

/// Measurement payload; constraint factors carry none.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measurement {
    Pixel {
        pixel: Vector2<f64>,
        camera: CameraIntrinsics,
    },
    /// Pose of the first connected camera expressed in the second camera's frame.
    RelativePose(Pose),
    Conic {
        conic: DualConic,
        camera: CameraIntrinsics,
    },
    Plane(PlaneLandmark),
    None,
    Pose(Pose),
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum FactorError {
    #[error("factor {kind:?} expects {expected:?} variables")]
    KindMismatch {
        kind: FactorKind,
        expected: &'static [VariableKind],
    },
    #[error("factor {kind:?} cannot use this measurement payload")]
    MeasurementMismatch { kind: FactorKind },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Residual and Jacobian blocks (one per connected variable) of a factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub residual: DVector<f64>,
    pub jacobians: Vec<DMatrix<f64>>,
}

/// Checks variable kinds and measurement payload against the factor kind.
pub fn check_signature(
    kind: FactorKind,
    vars: &[VariableKind],
    measurement: &Measurement,
) -> Result<(), FactorError> {
    if vars != kind.signature() {
        return Err(FactorError::KindMismatch {
            kind,
            expected: kind.signature(),
        });
    }
    let ok = matches!(
        (kind, measurement),
        (FactorKind::Reprojection, Measurement::Pixel { .. })
            | (FactorKind::Odometry, Measurement::RelativePose(_))
            | (FactorKind::QuadricObservation, Measurement::Conic { .. })
            | (FactorKind::PlaneObservation, Measurement::Plane(_))
            | (FactorKind::PosePrior, Measurement::Pose(_))
            | (
                FactorKind::PointPlane
                    | FactorKind::ParallelPlanes
                    | FactorKind::PerpendicularPlanes
                    | FactorKind::Tangency,
                Measurement::None
            )
    );
    if ok {
        Ok(())
    } else {
        Err(FactorError::MeasurementMismatch { kind })
    }
}

/// Residual only.
pub fn evaluate_residual(
    kind: FactorKind,
    vars: &[&Variable],
    measurement: &Measurement,
) -> Result<DVector<f64>, FactorError> {
    let kinds: Vec<VariableKind> = vars.iter().map(|v| v.kind()).collect();
    check_signature(kind, &kinds, measurement)?;
    residuals::dispatch(kind, vars, measurement)
}

/// Residual together with analytic Jacobians.
pub fn linearize(
    kind: FactorKind,
    vars: &[&Variable],
    measurement: &Measurement,
) -> Result<Linearization, FactorError> {
    let kinds: Vec<VariableKind> = vars.iter().map(|v| v.kind()).collect();
    check_signature(kind, &kinds, measurement)?;
    jacobians::dispatch(kind, vars, measurement)
}

/// Central finite differences of the residual in each variable's tangent space.
pub fn numeric_jacobian(
    kind: FactorKind,
    vars: &[&Variable],
    measurement: &Measurement,
    step: f64,
) -> Result<Vec<DMatrix<f64>>, FactorError> {
    let dim = kind.residual_dim();
    let mut blocks = Vec::with_capacity(vars.len());
    for (slot, var) in vars.iter().enumerate() {
        let n = var.kind().tangent_dim();
        let mut block = DMatrix::zeros(dim, n);
        for j in 0..n {
            let mut delta = vec![0.0; n];
            delta[j] = step;
            let plus = var.retract(&delta).0;
            delta[j] = -step;
            let minus = var.retract(&delta).0;
            let eval = |moved: &Variable| {
                let mut args: Vec<&Variable> = vars.to_vec();
                args[slot] = moved;
                evaluate_residual(kind, &args, measurement)
            };
            let col = (eval(&plus)? - eval(&minus)?) / (2.0 * step);
            block.set_column(j, &col);
        }
        blocks.push(block);
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests;
