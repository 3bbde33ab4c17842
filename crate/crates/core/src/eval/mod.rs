//! Trajectory-error metrics: absolute trajectory error after rigid alignment,
//! and relative translational / rotational errors over a fixed frame delta.
//!
//! Positions are in meters internally; reported errors are in centimeters and
//! degrees.

mod align;
mod tum;

use nalgebra::{Rotation3, Vector3};
use thiserror::Error;

use crate::geometry::Pose;

pub use align::{associate, rigid_align};
pub use tum::{parse_tum, write_tum};

/// Default association window, in seconds.
pub const DEFAULT_MAX_DT: f64 = 0.02;
/// Default frame offset for relative errors.
pub const DEFAULT_DELTA: usize = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no timestamps of the two trajectories lie within the association window")]
    NoOverlap,
    #[error("paired positions are collinear or too few to fix a rigid alignment")]
    DegenerateGeometry,
    #[error("need at least {needed} paired poses, found {found}")]
    TooFewPairs { needed: usize, found: usize },
    #[error("relative-error delta must be at least 1")]
    InvalidDelta,
    #[error("timestamps must be finite and strictly increasing (index {index})")]
    UnorderedTimestamps { index: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Time-stamped camera poses (camera-to-world) with strictly increasing stamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    stamps: Vec<f64>,
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(stamps: Vec<f64>, poses: Vec<Pose>) -> Result<Self, EvalError> {
        assert_eq!(stamps.len(), poses.len(), "one timestamp per pose");
        for (i, t) in stamps.iter().enumerate() {
            if !t.is_finite() || (i > 0 && *t <= stamps[i - 1]) {
                return Err(EvalError::UnorderedTimestamps { index: i });
            }
        }
        Ok(Self { stamps, poses })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn stamps(&self) -> &[f64] {
        &self.stamps
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    /// Every pose left-multiplied by `g`, i.e. the trajectory expressed in another world frame.
    pub fn transformed(&self, g: &Pose) -> Trajectory {
        Trajectory {
            stamps: self.stamps.clone(),
            poses: self.poses.iter().map(|p| *g * *p).collect(),
        }
    }
}

/// Metric settings shared by the evaluator and the command-line tools.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub delta: usize,
    pub max_dt: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            max_dt: DEFAULT_MAX_DT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub ate_rmse_cm: f64,
    pub rte_rmse_cm: f64,
    pub rre_rmse_deg: f64,
    /// Per-pair position error after alignment, cm.
    pub ate_errors_cm: Vec<f64>,
    /// Per-pair relative translation error, cm.
    pub rte_errors_cm: Vec<f64>,
    /// Per-pair relative rotation error, degrees.
    pub rre_errors_deg: Vec<f64>,
}

/// Improvement of each metric over a baseline, in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Improvement {
    pub ate: f64,
    pub rte: f64,
    pub rre: f64,
}

/// `100 (baseline - ours) / baseline`; zero when both are equal (including both zero).
pub fn improvement_percent(baseline: f64, ours: f64) -> f64 {
    if baseline == ours {
        0.0
    } else {
        100.0 * (baseline - ours) / baseline
    }
}

impl MetricReport {
    pub fn improvement_over(&self, baseline: &MetricReport) -> Improvement {
        Improvement {
            ate: improvement_percent(baseline.ate_rmse_cm, self.ate_rmse_cm),
            rte: improvement_percent(baseline.rte_rmse_cm, self.rte_rmse_cm),
            rre: improvement_percent(baseline.rre_rmse_deg, self.rre_rmse_deg),
        }
    }
}

/// Rotation angle via `atan2`, accurate near zero where `acos` of the trace is not.
pub fn rotation_angle(r: &Rotation3<f64>) -> f64 {
    let m = r.matrix();
    let axis = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    (0.5 * axis.norm()).atan2(0.5 * (m.trace() - 1.0))
}

pub fn rmse(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

fn paired(est: &Trajectory, reference: &Trajectory, max_dt: f64) -> Result<Vec<(Pose, Pose)>, EvalError> {
    Ok(associate(est, reference, max_dt)?
        .into_iter()
        .map(|(i, j)| (est.poses[i], reference.poses[j]))
        .collect())
}

fn ate_errors(pairs: &[(Pose, Pose)]) -> Result<Vec<f64>, EvalError> {
    let est: Vec<Vector3<f64>> = pairs.iter().map(|(e, _)| e.translation).collect();
    let reference: Vec<Vector3<f64>> = pairs.iter().map(|(_, r)| r.translation).collect();
    let g = rigid_align(&est, &reference)?;
    Ok(est
        .iter()
        .zip(&reference)
        .map(|(e, r)| 100.0 * (r - g.transform_point(e)).norm())
        .collect())
}

/// Relative-pose errors `(ref_i^-1 ref_{i+d})^-1 (est_i^-1 est_{i+d})` over consecutive pairs.
fn relative_errors(pairs: &[(Pose, Pose)], delta: usize) -> Result<Vec<Pose>, EvalError> {
    if delta == 0 {
        return Err(EvalError::InvalidDelta);
    }
    if pairs.len() < delta + 1 {
        return Err(EvalError::TooFewPairs {
            needed: delta + 1,
            found: pairs.len(),
        });
    }
    Ok(pairs
        .iter()
        .zip(&pairs[delta..])
        .map(|((e0, r0), (e1, r1))| {
            let rel_ref = r0.inverse() * *r1;
            let rel_est = e0.inverse() * *e1;
            rel_ref.inverse() * rel_est
        })
        .collect())
}

/// Position RMSE after rigid alignment, in centimeters.
pub fn ate_rmse(est: &Trajectory, reference: &Trajectory, max_dt: f64) -> Result<f64, EvalError> {
    Ok(rmse(&ate_errors(&paired(est, reference, max_dt)?)?))
}

/// Relative translational error RMSE, in centimeters.
pub fn rte_rmse(est: &Trajectory, reference: &Trajectory, delta: usize, max_dt: f64) -> Result<f64, EvalError> {
    let errors = relative_errors(&paired(est, reference, max_dt)?, delta)?;
    Ok(rmse(&errors.iter().map(|e| 100.0 * e.translation.norm()).collect::<Vec<_>>()))
}

/// Relative rotational error RMSE, in degrees.
pub fn rre_rmse(est: &Trajectory, reference: &Trajectory, delta: usize, max_dt: f64) -> Result<f64, EvalError> {
    let errors = relative_errors(&paired(est, reference, max_dt)?, delta)?;
    Ok(rmse(&errors.iter().map(|e| rotation_angle(&e.rotation).to_degrees()).collect::<Vec<_>>()))
}

/// All three metrics from a single association.
pub fn evaluate(est: &Trajectory, reference: &Trajectory, config: &EvalConfig) -> Result<MetricReport, EvalError> {
    let pairs = paired(est, reference, config.max_dt)?;
    let ate_errors_cm = ate_errors(&pairs)?;
    let relative = relative_errors(&pairs, config.delta)?;
    let rte_errors_cm: Vec<f64> = relative.iter().map(|e| 100.0 * e.translation.norm()).collect();
    let rre_errors_deg: Vec<f64> = relative.iter().map(|e| rotation_angle(&e.rotation).to_degrees()).collect();
    Ok(MetricReport {
        ate_rmse_cm: rmse(&ate_errors_cm),
        rte_rmse_cm: rmse(&rte_errors_cm),
        rre_rmse_deg: rmse(&rre_errors_deg),
        ate_errors_cm,
        rte_errors_cm,
        rre_errors_deg,
    })
}
