use super::{MeasurementSet, SimError};
use crate::geometry::{DualQuadric, PlaneLandmark, Point3, Pose};

/// Detection thresholds for structural constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintThresholds {
    /// Point-plane distance threshold at zero depth (m); grows linearly, doubling at 10 m.
    pub th_pp_base: f64,
    /// Planes closer than this angle (degrees) are parallel.
    pub th_parallel: f64,
    /// Planes farther than this angle (degrees) from parallel are perpendicular.
    pub th_perpendicular: f64,
    /// Smallest support distance (m); larger objects use their largest semi-axis.
    pub th_support_floor: f64,
}

impl Default for ConstraintThresholds {
    fn default() -> Self {
        Self {
            th_pp_base: 0.05,
            th_parallel: 15.0,
            th_perpendicular: 75.0,
            th_support_floor: 0.2,
        }
    }
}

impl ConstraintThresholds {
    pub fn validate(&self) -> Result<(), SimError> {
        let all = [self.th_pp_base, self.th_parallel, self.th_perpendicular, self.th_support_floor];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(SimError::InfeasibleConfig("thresholds must be positive".into()));
        }
        if self.th_parallel >= self.th_perpendicular || self.th_perpendicular > 90.0 {
            return Err(SimError::InfeasibleConfig(
                "need th_parallel < th_perpendicular <= 90 degrees".into(),
            ));
        }
        Ok(())
    }

    /// Point-plane threshold for a point `depth` meters from the camera.
    pub fn point_plane(&self, depth: f64) -> f64 {
        self.th_pp_base * (1.0 + depth / 10.0)
    }

    pub fn support(&self, q: &DualQuadric) -> f64 {
        self.th_support_floor.max(q.shape.max_semi_axis())
    }
}

/// Landmark estimates that constraints are detected on.
#[derive(Debug, Clone, Copy)]
pub struct LandmarkView<'a> {
    pub points: &'a [Point3],
    pub planes: &'a [PlaneLandmark],
    pub quadrics: &'a [DualQuadric],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Constraint {
    ParallelPlanes { a: usize, b: usize },
    PerpendicularPlanes { a: usize, b: usize },
    PointPlane { point: usize, plane: usize },
    Tangency { plane: usize, quadric: usize },
}

/// Distance of each point from the first camera that observes it; NaN if never observed.
pub fn point_depths(points: &[Point3], poses: &[Pose], measurements: &MeasurementSet) -> Vec<f64> {
    let mut depth = vec![f64::NAN; points.len()];
    for (frame, pose) in measurements.frames.iter().zip(poses) {
        for (i, _) in &frame.pixels {
            if *i < points.len() && depth[*i].is_nan() {
                depth[*i] = (points[*i] - pose.translation).norm();
            }
        }
    }
    depth
}

/// Applies the angle, point-plane and support rules to every landmark combination.
/// `depths[i]` scales the point-plane threshold of point `i`; NaN disables it.
pub fn detect_constraints(
    view: LandmarkView<'_>,
    depths: &[f64],
    th: &ConstraintThresholds,
) -> Vec<Constraint> {
    let mut out = Vec::new();
    for a in 0..view.planes.len() {
        for b in a + 1..view.planes.len() {
            let cos = view.planes[a]
                .unit_normal()
                .dot(&view.planes[b].unit_normal())
                .abs()
                .min(1.0);
            let angle = cos.acos().to_degrees();
            if angle < th.th_parallel {
                out.push(Constraint::ParallelPlanes { a, b });
            } else if angle > th.th_perpendicular {
                out.push(Constraint::PerpendicularPlanes { a, b });
            }
        }
    }
    for (point, x) in view.points.iter().enumerate() {
        let depth = depths.get(point).copied().unwrap_or(f64::NAN);
        let limit = th.point_plane(depth);
        for (plane, p) in view.planes.iter().enumerate() {
            if p.signed_distance(x).abs() < limit {
                out.push(Constraint::PointPlane { point, plane });
            }
        }
    }
    for (quadric, q) in view.quadrics.iter().enumerate() {
        let limit = th.support(q);
        for (plane, p) in view.planes.iter().enumerate() {
            // a resting object whose vertical axis is its largest sits exactly at the limit
            if p.signed_distance(&q.center()).abs() <= limit {
                out.push(Constraint::Tangency { plane, quadric });
            }
        }
    }
    out
}
