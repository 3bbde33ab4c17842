//! Factor graph over poses, points, planes and quadrics.

mod solver;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Vector4};
use thiserror::Error;

use crate::geometry::plane_normalize;
use crate::factors::{
    check_signature, evaluate_residual, linearize as linearize_factor, FactorError, FactorKind,
    Measurement, NoiseModel, Variable, VariableKind,
};

pub use solver::{optimize, SolveReport, SolverConfig, Termination};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VariableId {
    pub kind: VariableKind,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FactorId(pub usize);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("estimate violates the invariants of its variable kind")]
    InvalidEstimate,
    #[error("unknown variable {0:?}")]
    UnknownVariable(VariableId),
    #[error("factor {kind:?} connects {got:?} but needs {expected:?}")]
    KindMismatch {
        kind: FactorKind,
        expected: &'static [VariableKind],
        got: Vec<VariableKind>,
    },
    #[error("measurement payload does not match factor {0:?}")]
    MeasurementMismatch(FactorKind),
    #[error("noise model is not valid for factor {kind:?}: {reason}")]
    BadNoise { kind: FactorKind, reason: String },
    #[error("no pose is fixed and no pose prior is present")]
    GaugeUnfixed,
    #[error("linear solve failed even at maximum damping")]
    NumericalFailure,
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorEntry {
    pub kind: FactorKind,
    pub variables: Vec<VariableId>,
    pub measurement: Measurement,
    pub noise: NoiseModel,
}

/// Sum of robust costs over evaluable factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi2 {
    pub total: f64,
    /// Factors whose residual could not be evaluated (point behind camera, vanishing conic).
    pub inactive: usize,
}

/// Block-sparse normal equations `H dx = b` over the free variables.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    /// Free variables in parameter order with their offsets into the stacked tangent vector.
    pub parameters: Vec<(VariableId, usize)>,
    pub dim: usize,
    /// Upper blocks `(row param, col param)` with row <= col.
    pub blocks: BTreeMap<(usize, usize), DMatrix<f64>>,
    pub gradient: Vec<DVector<f64>>,
    pub chi2: Chi2,
}

impl NormalEquations {
    pub fn hessian(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for (&(i, j), blk) in &self.blocks {
            let (oi, oj) = (self.parameters[i].1, self.parameters[j].1);
            h.view_mut((oi, oj), blk.shape()).copy_from(blk);
            if i != j {
                h.view_mut((oj, oi), (blk.ncols(), blk.nrows()))
                    .copy_from(&blk.transpose());
            }
        }
        h
    }

    pub fn rhs(&self) -> DVector<f64> {
        let mut b = DVector::zeros(self.dim);
        for (k, g) in self.gradient.iter().enumerate() {
            b.rows_mut(self.parameters[k].1, g.len()).copy_from(g);
        }
        b
    }
}

#[derive(Debug, Clone, Default)]
pub struct FactorGraph {
    variables: Vec<Variable>,
    fixed: Vec<bool>,
    factors: Vec<FactorEntry>,
    auto_gauge: bool,
}

impl FactorGraph {
    /// Empty graph that fixes the first pose added to it.
    pub fn new() -> Self {
        Self {
            auto_gauge: true,
            ..Self::default()
        }
    }

    /// Empty graph where the gauge must be fixed explicitly (fixed pose or pose prior).
    pub fn without_auto_gauge() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, estimate: Variable) -> Result<VariableId, GraphError> {
        let valid = match &estimate {
            Variable::Pose(p) => p.is_valid(),
            Variable::Point(x) => x.iter().all(|v| v.is_finite()),
            Variable::Plane(p) => {
                let c = p.coeffs();
                (c.norm() - 1.0).abs() < 1e-9 && c.fixed_rows::<3>(0).norm() > 1e-15
            }
            Variable::Quadric(q) => {
                q.pose.is_valid() && q.shape.semi_axes().iter().all(|v| *v > 0.0 && v.is_finite())
            }
        };
        if !valid {
            return Err(GraphError::InvalidEstimate);
        }
        let id = VariableId {
            kind: estimate.kind(),
            index: self.variables.len(),
        };
        let first_pose = self.auto_gauge
            && estimate.kind() == VariableKind::Pose
            && !self.variables.iter().any(|v| v.kind() == VariableKind::Pose);
        self.variables.push(estimate);
        self.fixed.push(first_pose);
        Ok(id)
    }

    /// Adds a plane from raw homogeneous coefficients, normalizing them first.
    pub fn add_plane_coefficients(&mut self, raw: &Vector4<f64>) -> Result<VariableId, GraphError> {
        let plane = plane_normalize(raw).map_err(|_| GraphError::InvalidEstimate)?;
        self.add_variable(Variable::Plane(plane))
    }

    fn check_id(&self, id: VariableId) -> Result<(), GraphError> {
        match self.variables.get(id.index) {
            Some(v) if v.kind() == id.kind => Ok(()),
            _ => Err(GraphError::UnknownVariable(id)),
        }
    }

    pub fn add_factor(
        &mut self,
        kind: FactorKind,
        variables: &[VariableId],
        measurement: Measurement,
        noise: NoiseModel,
    ) -> Result<FactorId, GraphError> {
        for id in variables {
            self.check_id(*id)?;
        }
        let kinds: Vec<VariableKind> = variables.iter().map(|id| id.kind).collect();
        check_signature(kind, &kinds, &measurement).map_err(|e| match e {
            FactorError::KindMismatch { expected, .. } => GraphError::KindMismatch {
                kind,
                expected,
                got: kinds.clone(),
            },
            _ => GraphError::MeasurementMismatch(kind),
        })?;
        if noise.dim() != kind.residual_dim() {
            return Err(GraphError::BadNoise {
                kind,
                reason: format!("dimension {} != residual dimension {}", noise.dim(), kind.residual_dim()),
            });
        }
        self.factors.push(FactorEntry {
            kind,
            variables: variables.to_vec(),
            measurement,
            noise,
        });
        Ok(FactorId(self.factors.len() - 1))
    }

    /// Builds the noise model from a raw information matrix, validating it.
    pub fn add_factor_with_information(
        &mut self,
        kind: FactorKind,
        variables: &[VariableId],
        measurement: Measurement,
        information: DMatrix<f64>,
        huber_delta: Option<f64>,
    ) -> Result<FactorId, GraphError> {
        let bad = |e: crate::factors::NoiseError| GraphError::BadNoise {
            kind,
            reason: e.to_string(),
        };
        let mut noise = NoiseModel::from_information(information).map_err(bad)?;
        if let Some(delta) = huber_delta {
            noise = noise.with_huber(delta).map_err(bad)?;
        }
        self.add_factor(kind, variables, measurement, noise)
    }

    pub fn set_fixed(&mut self, id: VariableId, fixed: bool) -> Result<(), GraphError> {
        self.check_id(id)?;
        self.fixed[id.index] = fixed;
        Ok(())
    }

    pub fn is_fixed(&self, id: VariableId) -> bool {
        self.fixed.get(id.index).copied().unwrap_or(false)
    }

    pub fn get(&self, id: VariableId) -> Result<&Variable, GraphError> {
        self.check_id(id)?;
        Ok(&self.variables[id.index])
    }

    pub fn set(&mut self, id: VariableId, estimate: Variable) -> Result<(), GraphError> {
        self.check_id(id)?;
        if estimate.kind() != id.kind {
            return Err(GraphError::InvalidEstimate);
        }
        self.variables[id.index] = estimate;
        Ok(())
    }

    pub fn variable_ids(&self) -> impl Iterator<Item = VariableId> + '_ {
        self.variables.iter().enumerate().map(|(index, v)| VariableId {
            kind: v.kind(),
            index,
        })
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn factors(&self) -> &[FactorEntry] {
        &self.factors
    }

    pub fn count_factors(&self, kind: FactorKind) -> usize {
        self.factors.iter().filter(|f| f.kind == kind).count()
    }

    pub fn count_variables(&self, kind: VariableKind) -> usize {
        self.variables.iter().filter(|v| v.kind() == kind).count()
    }

    pub fn is_gauge_fixed(&self) -> bool {
        self.variables
            .iter()
            .zip(&self.fixed)
            .any(|(v, f)| *f && v.kind() == VariableKind::Pose)
            || self.factors.iter().any(|f| f.kind == FactorKind::PosePrior)
    }

    fn factor_args(&self, f: &FactorEntry) -> Vec<&Variable> {
        f.variables.iter().map(|id| &self.variables[id.index]).collect()
    }

    /// Residual of one factor at the current estimate.
    pub fn factor_residual(&self, id: FactorId) -> Result<DVector<f64>, FactorError> {
        let f = &self.factors[id.0];
        evaluate_residual(f.kind, &self.factor_args(f), &f.measurement)
    }

    pub fn chi2(&self) -> Chi2 {
        let mut total = 0.0;
        let mut inactive = 0;
        for f in &self.factors {
            match evaluate_residual(f.kind, &self.factor_args(f), &f.measurement) {
                Ok(r) => total += f.noise.cost(&r),
                Err(_) => inactive += 1,
            }
        }
        Chi2 { total, inactive }
    }

    /// Gauss-Newton normal equations with Huber IRLS weights; fixed variables are excluded.
    pub fn linearize(&self) -> Result<NormalEquations, GraphError> {
        if !self.is_gauge_fixed() {
            return Err(GraphError::GaugeUnfixed);
        }
        let mut slot = vec![usize::MAX; self.variables.len()];
        let mut parameters = Vec::new();
        let mut dim = 0;
        for (i, v) in self.variables.iter().enumerate() {
            if !self.fixed[i] {
                slot[i] = parameters.len();
                parameters.push((
                    VariableId {
                        kind: v.kind(),
                        index: i,
                    },
                    dim,
                ));
                dim += v.kind().tangent_dim();
            }
        }
        let mut blocks: BTreeMap<(usize, usize), DMatrix<f64>> = BTreeMap::new();
        let mut gradient: Vec<DVector<f64>> = parameters
            .iter()
            .map(|(id, _)| DVector::zeros(id.kind.tangent_dim()))
            .collect();
        for (id, _) in &parameters {
            let d = id.kind.tangent_dim();
            blocks.insert((slot[id.index], slot[id.index]), DMatrix::zeros(d, d));
        }
        let mut total = 0.0;
        let mut inactive = 0;
        for f in &self.factors {
            let lin = match linearize_factor(f.kind, &self.factor_args(f), &f.measurement) {
                Ok(lin) => lin,
                Err(_) => {
                    inactive += 1;
                    continue;
                }
            };
            total += f.noise.cost(&lin.residual);
            let w = f.noise.weight(&lin.residual).sqrt();
            let u = f.noise.sqrt_information() * w;
            let r = &u * &lin.residual;
            let whitened: Vec<DMatrix<f64>> = lin.jacobians.iter().map(|j| &u * j).collect();
            for (a, ida) in f.variables.iter().enumerate() {
                let sa = slot[ida.index];
                if sa == usize::MAX {
                    continue;
                }
                gradient[sa] -= whitened[a].transpose() * &r;
                for (c, idc) in f.variables.iter().enumerate() {
                    let sc = slot[idc.index];
                    if sc == usize::MAX || sc < sa {
                        continue;
                    }
                    let contrib = whitened[a].transpose() * &whitened[c];
                    blocks
                        .entry((sa, sc))
                        .and_modify(|b| *b += &contrib)
                        .or_insert(contrib);
                }
            }
        }
        Ok(NormalEquations {
            parameters,
            dim,
            blocks,
            gradient,
            chi2: Chi2 { total, inactive },
        })
    }

    /// Applies a stacked tangent step to all free variables. Returns the number of clamped quadrics.
    pub(crate) fn retract_all(&mut self, system: &NormalEquations, step: &DVector<f64>) -> usize {
        let mut clamped = 0;
        for (id, offset) in &system.parameters {
            let d = id.kind.tangent_dim();
            let (next, was_clamped) = self.variables[id.index].retract(step.rows(*offset, d).as_slice());
            self.variables[id.index] = next;
            clamped += was_clamped as usize;
        }
        clamped
    }

    /// Shrinks each quadric's block of `step` so that it moves the quadric by at most
    /// `max_ratio` of its largest semi-axis (semi-axes and translation) or radians (rotation),
    /// and shrinks no semi-axis by more than `max_ratio` of itself.
    /// Returns how many blocks were shrunk.
    pub(crate) fn limit_quadric_steps(&self, system: &NormalEquations, step: &mut DVector<f64>, max_ratio: f64) -> usize {
        let mut limited = 0;
        for (id, offset) in &system.parameters {
            let Variable::Quadric(q) = &self.variables[id.index] else {
                continue;
            };
            let mut e = step.rows_mut(*offset, 9);
            let size = q.shape.max_semi_axis();
            let axes = q.shape.semi_axes();
            // an axis shrinking onto the floor lands where the shape gradient vanishes, so
            // each step may take at most `max_ratio` of any axis away
            let shrink = (0..3).map(|i| -e[i] / axes[i]).fold(0.0, f64::max);
            let ratio = (e.rows(0, 3).amax() / size)
                .max(e.rows(3, 3).norm())
                .max(e.rows(6, 3).norm() / size)
                .max(shrink);
            if ratio > max_ratio {
                e *= max_ratio / ratio;
                limited += 1;
            }
        }
        limited
    }

    pub(crate) fn snapshot(&self) -> Vec<Variable> {
        self.variables.clone()
    }

    pub(crate) fn restore(&mut self, snapshot: Vec<Variable>) {
        self.variables = snapshot;
    }
}
