//! Levenberg-Marquardt over the factor graph.
//!
//! Damping is multiplicative on the Hessian diagonal, `H_ii (1 + lambda)`. Point
//! variables are eliminated with a Schur complement (their Hessian is
//! block-diagonal because no factor connects two points); the reduced system over
//! poses, planes and quadrics is solved with a dense Cholesky factorization.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::{FactorGraph, GraphError, NormalEquations};
use crate::factors::VariableKind;

/// Floor for diagonal entries when damping, so unobserved directions still get regularized.
const DIAGONAL_FLOOR: f64 = 1e-9;
const MAX_LAMBDA: f64 = 1e16;
/// Trust region on quadrics: a step moves one by at most this fraction of its size.
/// The normalized conic residual is bounded, so far from the optimum its curvature is
/// nearly flat and undamped steps can throw an ellipsoid kilometers away.
const MAX_QUADRIC_STEP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub relative_decrease_tol: f64,
    pub absolute_error_tol: f64,
    pub step_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_lambda: 1e-4,
            lambda_up: 10.0,
            lambda_down: 10.0,
            relative_decrease_tol: 1e-10,
            absolute_error_tol: 1e-20,
            step_tol: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("initial_lambda", self.initial_lambda),
            ("lambda_up", self.lambda_up),
            ("lambda_down", self.lambda_down),
            ("relative_decrease_tol", self.relative_decrease_tol),
            ("absolute_error_tol", self.absolute_error_tol),
            ("step_tol", self.step_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("lambda_up", self.lambda_up), ("lambda_down", self.lambda_down)] {
            if v <= 1.0 {
                return Err(format!("{name} must exceed 1, got {v}"));
            }
        }
        if self.max_iterations < 1 {
            return Err("max_iterations must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub initial_chi2: f64,
    pub final_chi2: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// chi2 at the start and after every accepted step.
    pub chi2_trace: Vec<f64>,
    pub inactive_factors: usize,
    pub clamped_updates: usize,
}

/// Runs Levenberg-Marquardt in place. Steps are accepted only when chi2 decreases
/// and no additional factor becomes unevaluable. Steps that clamp a quadric semi-axis
/// are treated as rejected until the damping is very large.
pub fn optimize(graph: &mut FactorGraph, config: &SolverConfig) -> Result<SolveReport, GraphError> {
    config.validate().map_err(GraphError::InvalidConfig)?;
    let mut system = graph.linearize()?;
    let initial = system.chi2;
    let mut current = initial;
    let mut trace = vec![initial.total];
    let mut lambda = config.initial_lambda;
    let mut iterations = 0;
    let mut clamped_updates = 0;
    let mut termination = Termination::MaxIterations;

    if current.total <= config.absolute_error_tol || system.dim == 0 {
        termination = Termination::Converged;
    } else {
        'outer: while iterations < config.max_iterations {
            iterations += 1;
            loop {
                let mut step = match solve_damped(&system, lambda) {
                    Some(step) => step,
                    None => {
                        lambda *= config.lambda_up;
                        if lambda > MAX_LAMBDA {
                            return Err(GraphError::NumericalFailure);
                        }
                        continue;
                    }
                };
                graph.limit_quadric_steps(&system, &mut step, MAX_QUADRIC_STEP);
                let snapshot = graph.snapshot();
                let clamped = graph.retract_all(&system, &step);
                let candidate = graph.chi2();
                if candidate.total < current.total && candidate.inactive <= current.inactive {
                    clamped_updates += clamped;
                    let decrease = current.total - candidate.total;
                    current = candidate;
                    trace.push(current.total);
                    lambda = (lambda / config.lambda_down).max(1e-15);
                    if current.total <= config.absolute_error_tol
                        || decrease <= config.relative_decrease_tol * (current.total + decrease)
                        || step.norm() <= config.step_tol
                    {
                        termination = Termination::Converged;
                        break 'outer;
                    }
                    system = graph.linearize()?;
                    break;
                }
                graph.restore(snapshot);
                if step.norm() <= config.step_tol {
                    termination = Termination::Converged;
                    break 'outer;
                }
                lambda *= config.lambda_up;
                if lambda > MAX_LAMBDA {
                    termination = Termination::Stalled;
                    break 'outer;
                }
            }
        }
    }

    Ok(SolveReport {
        initial_chi2: initial.total,
        final_chi2: current.total,
        iterations,
        termination,
        chi2_trace: trace,
        inactive_factors: current.inactive,
        clamped_updates,
    })
}

fn damp(m: &mut DMatrix<f64>, lambda: f64) {
    for i in 0..m.nrows() {
        let d = m[(i, i)];
        m[(i, i)] = d + lambda * d.max(DIAGONAL_FLOOR);
    }
}

/// Solves `(H + lambda diag(H)) dx = b`, eliminating points first.
fn solve_damped(system: &NormalEquations, lambda: f64) -> Option<DVector<f64>> {
    let params = &system.parameters;
    // reduced (non-point) parameters get consecutive offsets
    let mut reduced_offset = vec![usize::MAX; params.len()];
    let mut point_slot = vec![usize::MAX; params.len()];
    let mut nr = 0;
    let mut np = 0;
    for (k, (id, _)) in params.iter().enumerate() {
        if id.kind == VariableKind::Point {
            point_slot[k] = np;
            np += 1;
        } else {
            reduced_offset[k] = nr;
            nr += id.kind.tangent_dim();
        }
    }

    let mut a = DMatrix::<f64>::zeros(nr, nr);
    let mut br = DVector::<f64>::zeros(nr);
    let mut d = vec![Matrix3::<f64>::zeros(); np];
    let mut bp = vec![Vector3::<f64>::zeros(); np];
    // coupling blocks per point, stored point-major: (reduced param, 3 x dim)
    let mut w: Vec<Vec<(usize, DMatrix<f64>)>> = vec![Vec::new(); np];

    for (k, g) in system.gradient.iter().enumerate() {
        if point_slot[k] != usize::MAX {
            bp[point_slot[k]] = Vector3::from_column_slice(g.as_slice());
        } else {
            br.rows_mut(reduced_offset[k], g.len()).copy_from(g);
        }
    }
    for (&(i, j), blk) in &system.blocks {
        match (point_slot[i] != usize::MAX, point_slot[j] != usize::MAX) {
            (false, false) => {
                let (oi, oj) = (reduced_offset[i], reduced_offset[j]);
                a.view_mut((oi, oj), blk.shape()).copy_from(blk);
                if i != j {
                    a.view_mut((oj, oi), (blk.ncols(), blk.nrows()))
                        .copy_from(&blk.transpose());
                }
            }
            (true, true) => {
                // only diagonal point blocks exist
                if i != j {
                    return None;
                }
                d[point_slot[i]] = Matrix3::from_column_slice(blk.as_slice());
            }
            (false, true) => w[point_slot[j]].push((i, blk.transpose())),
            (true, false) => w[point_slot[i]].push((j, blk.clone())),
        }
    }

    damp(&mut a, lambda);
    let mut d_inv = Vec::with_capacity(np);
    for dp in d.iter_mut() {
        for i in 0..3 {
            dp[(i, i)] += lambda * dp[(i, i)].max(DIAGONAL_FLOOR);
        }
        d_inv.push(dp.cholesky()?.inverse());
    }

    // Schur complement S = A - W D^-1 W^T, rhs = b_r - W D^-1 b_p; only the lower
    // triangle of S is formed since the Cholesky factorization reads nothing else
    let mut s = a;
    let mut rhs = br;
    for p in 0..np {
        let dinv = DMatrix::from_column_slice(3, 3, d_inv[p].as_slice());
        let dbp = DVector::from_column_slice((d_inv[p] * bp[p]).as_slice());
        let scaled: Vec<DMatrix<f64>> = w[p].iter().map(|(_, wt)| &dinv * wt).collect();
        for (k, wt) in &w[p] {
            let ok = reduced_offset[*k];
            rhs.rows_mut(ok, wt.ncols()).gemv_tr(-1.0, wt, &dbp, 1.0);
            for (m, (k2, wt2)) in w[p].iter().enumerate() {
                let ok2 = reduced_offset[*k2];
                if ok2 > ok {
                    continue;
                }
                s.view_mut((ok, ok2), (wt.ncols(), wt2.ncols())).gemm_tr(-1.0, wt, &scaled[m], 1.0);
            }
        }
    }
    let chol = s.cholesky()?;
    let dr = chol.solve(&rhs);

    let mut step = DVector::zeros(system.dim);
    for (k, (_, offset)) in params.iter().enumerate() {
        if point_slot[k] == usize::MAX {
            let len = params[k].0.kind.tangent_dim();
            step.rows_mut(*offset, len)
                .copy_from(&dr.rows(reduced_offset[k], len));
        }
    }
    for (k, (_, offset)) in params.iter().enumerate() {
        let p = point_slot[k];
        if p == usize::MAX {
            continue;
        }
        let mut r = bp[p];
        for (kr, wt) in &w[p] {
            let x = dr.rows(reduced_offset[*kr], wt.ncols());
            r -= Vector3::from_column_slice((wt * x).as_slice());
        }
        step.rows_mut(*offset, 3).copy_from(&(d_inv[p] * r));
    }
    if step.iter().all(|v| v.is_finite()) {
        Some(step)
    } else {
        None
    }
}
