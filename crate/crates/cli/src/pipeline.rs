//! Keyframe-by-keyframe solving of a simulated sequence.
//!
//! Frame `k`'s pose is initialized by composing the previous estimate with the
//! measured odometry. Landmarks start from ground truth moved by Gaussian noise,
//! standing in for the triangulation / plane fitting / object initialization of
//! a real front-end. After each new keyframe the whole graph is rebuilt from the
//! measurements seen so far, constraints are re-detected on the current
//! estimates, and a short batch solve runs. A final full solve after the last
//! keyframe plays the role of a global bundle adjustment.

use std::collections::HashMap;

use structslam_core::eval::{EvalError, Trajectory};
use structslam_core::graph::{optimize, GraphError, SolveReport, SolverConfig};
use structslam_core::simulator::{
    build_graph, detect_constraints, perturb_ground_truth, point_depths, Ablation, BuiltGraph, ConstraintThresholds,
    Estimates, FactorSigmas, GroundTruth, MeasurementSet, Perturbation, SimError,
};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveSettings {
    /// Settings of the final solve; intermediate solves share them with a lower iteration cap.
    pub solver: SolverConfig,
    pub keyframe_iterations: usize,
    pub thresholds: ConstraintThresholds,
    pub sigmas: FactorSigmas,
    pub init: Perturbation,
    /// Landmarks enter the graph once seen in at least this many frames.
    pub min_point_views: usize,
    pub min_quadric_views: usize,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            keyframe_iterations: 20,
            thresholds: ConstraintThresholds::default(),
            sigmas: FactorSigmas::default(),
            init: Perturbation {
                pose: 0.0,
                plane: crate::config::DEFAULT_PLANE_INIT,
                ..Perturbation::default()
            },
            min_point_views: 2,
            min_quadric_views: 8,
        }
    }
}

impl SolveSettings {
    pub fn validate(&self) -> Result<(), String> {
        self.solver.validate().map_err(|e| format!("solver: {e}"))?;
        if self.min_point_views < 1 || self.min_quadric_views < 1 {
            return Err("solver: minimum landmark view counts must be at least 1".into());
        }
        if self.keyframe_iterations < 1 {
            return Err("solver.keyframe_iterations must be at least 1".into());
        }
        self.thresholds.validate().map_err(|e| format!("constraints: {e}"))?;
        self.sigmas.validate().map_err(|e| e.to_string())?;
        let i = &self.init;
        if [i.pose, i.point, i.plane, i.quadric].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err("init: perturbations must be finite and non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("solver failed at keyframe {keyframe}: {source}")]
    Solver { keyframe: usize, source: GraphError },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// One batch solve: the newest keyframe index and the solver's report.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSolve {
    pub keyframe: usize,
    pub factors: usize,
    pub constraints: usize,
    pub report: SolveReport,
}

#[derive(Debug, Clone)]
pub struct SequenceResult {
    pub estimates: Estimates,
    pub trajectory: Trajectory,
    /// Intermediate solves, one per keyframe from the second on.
    pub keyframes: Vec<BatchSolve>,
    pub final_solve: BatchSolve,
    /// The graph of the final solve, at its optimum.
    pub graph: BuiltGraph,
}

/// Drops observations of points and quadrics seen in fewer than the required number of frames.
pub fn mature_observations(meas: &MeasurementSet, min_point_views: usize, min_quadric_views: usize) -> MeasurementSet {
    let mut point_views: HashMap<usize, usize> = HashMap::new();
    let mut quadric_views: HashMap<usize, usize> = HashMap::new();
    for frame in &meas.frames {
        for (i, _) in &frame.pixels {
            *point_views.entry(*i).or_default() += 1;
        }
        for (i, _) in &frame.conics {
            *quadric_views.entry(*i).or_default() += 1;
        }
    }
    let mut out = meas.clone();
    for frame in &mut out.frames {
        frame.pixels.retain(|(i, _)| point_views[i] >= min_point_views);
        frame.conics.retain(|(i, _)| quadric_views[i] >= min_quadric_views);
    }
    out
}

fn batch_solve(
    meas: &MeasurementSet,
    est: &mut Estimates,
    ablation: Ablation,
    settings: &SolveSettings,
    max_iterations: usize,
) -> Result<(BuiltGraph, BatchSolve), PipelineError> {
    let keyframe = meas.frames.len() - 1;
    let meas = &mature_observations(meas, settings.min_point_views, settings.min_quadric_views);
    let depths = point_depths(&est.points, &est.poses, meas);
    let constraints = detect_constraints(est.landmarks(), &depths, &settings.thresholds);
    let mut built = build_graph(meas, &constraints, est, ablation, &settings.sigmas)?;
    let config = SolverConfig {
        max_iterations,
        ..settings.solver
    };
    let report = optimize(&mut built.graph, &config).map_err(|source| PipelineError::Solver { keyframe, source })?;
    built.write_back(est);
    let solve = BatchSolve {
        keyframe,
        factors: built.graph.factors().len(),
        constraints: constraints.len(),
        report,
    };
    Ok((built, solve))
}

/// Runs the keyframe loop and the final solve. `seed` drives landmark initialization.
pub fn solve_sequence(
    gt: &GroundTruth,
    meas: &MeasurementSet,
    ablation: Ablation,
    settings: &SolveSettings,
    seed: u64,
) -> Result<SequenceResult, PipelineError> {
    settings.validate().map_err(|e| PipelineError::Sim(SimError::InfeasibleConfig(e)))?;
    let n = meas.frames.len();
    if n < 2 || n > gt.poses.len() {
        return Err(SimError::InconsistentAssociation(format!(
            "{n} measurement frames for {} ground-truth poses",
            gt.poses.len()
        ))
        .into());
    }
    let mut est = perturb_ground_truth(gt, &settings.init, seed);
    // the first pose anchors the gauge at its true value
    est.poses[0] = gt.poses[0];

    let mut keyframes = Vec::with_capacity(n - 1);
    for k in 1..n {
        let odometry = meas.frames[k]
            .odometry
            .ok_or_else(|| SimError::InconsistentAssociation(format!("frame {k} has no odometry")))?;
        est.poses[k] = (est.poses[k - 1] * odometry).renormalized();
        let (_, solve) = batch_solve(&meas.prefix(k + 1), &mut est, ablation, settings, settings.keyframe_iterations)?;
        keyframes.push(solve);
    }
    let (graph, final_solve) = batch_solve(meas, &mut est, ablation, settings, settings.solver.max_iterations)?;
    let trajectory = Trajectory::new(gt.timestamps[..n].to_vec(), est.poses[..n].to_vec())?;
    Ok(SequenceResult {
        estimates: est,
        trajectory,
        keyframes,
        final_solve,
        graph,
    })
}

/// Ground-truth camera trajectory of the first `frames` frames.
pub fn reference_trajectory(gt: &GroundTruth, frames: usize) -> Result<Trajectory, EvalError> {
    Trajectory::new(gt.timestamps[..frames].to_vec(), gt.poses[..frames].to_vec())
}
