use std::fmt;
use std::str::FromStr;

use nalgebra::{SVector, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Constraint, GroundTruth, MeasurementSet, NoiseLevels, SimError};
use crate::factors::{FactorKind, Measurement, NoiseModel, Variable};
use crate::geometry::{plane_boxplus, quadric_update, DualQuadric, PlaneLandmark, Point3, Pose};
use crate::graph::{FactorGraph, VariableId};

/// Landmark sets of Table-1 style experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ablation {
    /// Points and odometry only.
    P,
    /// Points and planes.
    PP,
    /// Points, planes and Manhattan constraints.
    PPM,
    /// Points and quadrics.
    PQ,
    /// Everything, including support (tangency) constraints.
    PPQMS,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [Ablation::P, Ablation::PP, Ablation::PPM, Ablation::PQ, Ablation::PPQMS];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::P => "P",
            Ablation::PP => "PP",
            Ablation::PPM => "PP+M",
            Ablation::PQ => "PQ",
            Ablation::PPQMS => "PPQ+MS",
        }
    }

    pub fn uses_planes(self) -> bool {
        matches!(self, Ablation::PP | Ablation::PPM | Ablation::PPQMS)
    }

    pub fn uses_manhattan(self) -> bool {
        matches!(self, Ablation::PPM | Ablation::PPQMS)
    }

    pub fn uses_quadrics(self) -> bool {
        matches!(self, Ablation::PQ | Ablation::PPQMS)
    }

    pub fn uses_support(self) -> bool {
        self == Ablation::PPQMS
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown ablation '{s}' (expected P, PP, PP+M, PQ or PPQ+MS)"))
    }
}

/// Standard deviations used to weight each factor kind in the graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorSigmas {
    pub pixel: f64,
    /// Isotropic, on the 3-vector plane difference.
    pub plane: f64,
    pub point_plane: f64,
    pub manhattan: f64,
    /// Isotropic, on the 6-vector of the normalized conic difference.
    pub conic: f64,
    pub tangency: f64,
    pub odometry_rotation: f64,
    pub odometry_translation: f64,
    /// Huber threshold on the whitened reprojection error; `None` for plain least squares.
    pub reprojection_huber: Option<f64>,
    /// Huber threshold on the whitened conic difference.
    pub conic_huber: Option<f64>,
    /// Huber threshold shared by the scalar structural constraints.
    pub constraint_huber: Option<f64>,
}

impl Default for FactorSigmas {
    fn default() -> Self {
        Self::for_noise(&NoiseLevels::default())
    }
}

impl FactorSigmas {
    /// Weights matched to the simulated noise, floored so noise-free runs stay well conditioned.
    pub fn for_noise(noise: &NoiseLevels) -> Self {
        Self {
            pixel: noise.pixel.max(0.5),
            plane: noise.plane_angle.max(noise.plane_offset).max(0.002),
            point_plane: 0.02,
            manhattan: 0.05,
            conic: 0.02,
            tangency: 0.05,
            odometry_rotation: noise.odometry_rotation.max(0.002),
            odometry_translation: noise.odometry_translation.max(0.005),
            reprojection_huber: Some(5.991f64.sqrt()),
            conic_huber: Some(12.592f64.sqrt()),
            constraint_huber: Some(1.0),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let all = [
            self.pixel,
            self.plane,
            self.point_plane,
            self.manhattan,
            self.conic,
            self.tangency,
            self.odometry_rotation,
            self.odometry_translation,
        ];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) 
            || [self.reprojection_huber, self.conic_huber, self.constraint_huber].iter().flatten().any(|d| !(*d > 0.0)) {
            return Err(SimError::InfeasibleConfig("factor sigmas must be positive".into()));
        }
        Ok(())
    }
}

/// Current estimate of every pose and landmark, indexed like the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub poses: Vec<Pose>,
    pub points: Vec<Point3>,
    pub planes: Vec<PlaneLandmark>,
    pub quadrics: Vec<DualQuadric>,
}

impl Estimates {
    pub fn from_ground_truth(gt: &GroundTruth) -> Self {
        Self {
            poses: gt.poses.clone(),
            points: gt.points.clone(),
            planes: gt.planes.clone(),
            quadrics: gt.quadrics.clone(),
        }
    }

    pub fn landmarks(&self) -> super::LandmarkView<'_> {
        super::LandmarkView {
            points: &self.points,
            planes: &self.planes,
            quadrics: &self.quadrics,
        }
    }
}

/// Standard deviations of the tangent-space perturbation applied per variable kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub pose: f64,
    pub point: f64,
    pub plane: f64,
    pub quadric: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            pose: 0.05,
            point: 0.05,
            plane: 0.02,
            quadric: 0.05,
        }
    }
}

fn gaussian<const N: usize>(rng: &mut ChaCha8Rng, sigma: f64) -> SVector<f64, N> {
    SVector::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal) * sigma)
}

/// Ground truth moved by Gaussian tangent-space noise; the first pose stays exact.
pub fn perturb_ground_truth(gt: &GroundTruth, magnitudes: &Perturbation, seed: u64) -> Estimates {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poses = gt
        .poses
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let xi: Vector6<f64> = gaussian(&mut rng, magnitudes.pose);
            if i == 0 || magnitudes.pose == 0.0 {
                *p
            } else {
                p.retract(&xi).renormalized()
            }
        })
        .collect();
    let points = gt
        .points
        .iter()
        .map(|x| {
            let d = gaussian::<3>(&mut rng, magnitudes.point);
            if magnitudes.point == 0.0 {
                *x
            } else {
                x + d
            }
        })
        .collect();
    let planes = gt
        .planes
        .iter()
        .map(|p| {
            let w = gaussian::<3>(&mut rng, magnitudes.plane);
            if magnitudes.plane == 0.0 {
                *p
            } else {
                plane_boxplus(p, &w)
            }
        })
        .collect();
    let quadrics = gt
        .quadrics
        .iter()
        .map(|q| {
            let e: SVector<f64, 9> = gaussian(&mut rng, magnitudes.quadric);
            if magnitudes.quadric == 0.0 {
                *q
            } else {
                quadric_update(q, &e).unwrap_or_else(|d| d.clamped)
            }
        })
        .collect();
    Estimates {
        poses,
        points,
        planes,
        quadrics,
    }
}

/// A factor graph plus the map from simulator indices to graph variables.
#[derive(Debug, Clone)]
pub struct BuiltGraph {
    pub graph: FactorGraph,
    pub poses: Vec<VariableId>,
    pub points: Vec<Option<VariableId>>,
    pub planes: Vec<Option<VariableId>>,
    pub quadrics: Vec<Option<VariableId>>,
}

impl BuiltGraph {
    /// Copies the graph's current values back into `estimates`.
    pub fn write_back(&self, estimates: &mut Estimates) {
        for (i, id) in self.poses.iter().enumerate() {
            if let Ok(Variable::Pose(p)) = self.graph.get(*id) {
                estimates.poses[i] = *p;
            }
        }
        for (i, id) in self.points.iter().enumerate() {
            if let Some(Ok(Variable::Point(x))) = id.map(|id| self.graph.get(id)) {
                estimates.points[i] = *x;
            }
        }
        for (i, id) in self.planes.iter().enumerate() {
            if let Some(Ok(Variable::Plane(p))) = id.map(|id| self.graph.get(id)) {
                estimates.planes[i] = *p;
            }
        }
        for (i, id) in self.quadrics.iter().enumerate() {
            if let Some(Ok(Variable::Quadric(q))) = id.map(|id| self.graph.get(id)) {
                estimates.quadrics[i] = *q;
            }
        }
    }
}

fn check_associations(meas: &MeasurementSet, est: &Estimates) -> Result<(), SimError> {
    let err = |m: String| Err(SimError::InconsistentAssociation(m));
    if meas.frames.len() > est.poses.len() {
        return err(format!("{} frames but {} pose estimates", meas.frames.len(), est.poses.len()));
    }
    for (f, frame) in meas.frames.iter().enumerate() {
        if let Some((i, _)) = frame.pixels.iter().find(|(i, _)| *i >= est.points.len()) {
            return err(format!("frame {f} observes unknown point {i}"));
        }
        if let Some((i, _)) = frame.planes.iter().find(|(i, _)| *i >= est.planes.len()) {
            return err(format!("frame {f} observes unknown plane {i}"));
        }
        if let Some((i, _)) = frame.conics.iter().find(|(i, _)| *i >= est.quadrics.len()) {
            return err(format!("frame {f} observes unknown quadric {i}"));
        }
        if (f == 0) != frame.odometry.is_none() {
            return err(format!("frame {f} has inconsistent odometry"));
        }
    }
    Ok(())
}

fn noise(sigma: f64, dim: usize) -> NoiseModel {
    NoiseModel::isotropic(dim, sigma).expect("validated sigmas are positive")
}

/// Assembles the factor graph permitted by `ablation`. Landmarks enter the graph only
/// once observed; constraints touching absent landmarks are skipped.
pub fn build_graph(
    meas: &MeasurementSet,
    constraints: &[Constraint],
    est: &Estimates,
    ablation: Ablation,
    sigmas: &FactorSigmas,
) -> Result<BuiltGraph, SimError> {
    sigmas.validate()?;
    check_associations(meas, est)?;
    let graph_err = |e: crate::graph::GraphError| SimError::InconsistentAssociation(e.to_string());
    let mut graph = FactorGraph::new();

    let poses: Vec<VariableId> = est.poses[..meas.frames.len()]
        .iter()
        .map(|p| graph.add_variable(Variable::Pose(*p)))
        .collect::<Result<_, _>>()
        .map_err(graph_err)?;

    let mut points = vec![None; est.points.len()];
    let mut planes = vec![None; est.planes.len()];
    let mut quadrics = vec![None; est.quadrics.len()];
    for frame in &meas.frames {
        for (i, _) in &frame.pixels {
            if points[*i].is_none() {
                points[*i] = Some(graph.add_variable(Variable::Point(est.points[*i])).map_err(graph_err)?);
            }
        }
        if ablation.uses_planes() {
            for (i, _) in &frame.planes {
                if planes[*i].is_none() {
                    planes[*i] = Some(graph.add_variable(Variable::Plane(est.planes[*i])).map_err(graph_err)?);
                }
            }
        }
        if ablation.uses_quadrics() {
            for (i, _) in &frame.conics {
                if quadrics[*i].is_none() {
                    quadrics[*i] =
                        Some(graph.add_variable(Variable::Quadric(est.quadrics[*i])).map_err(graph_err)?);
                }
            }
        }
    }

    let robust = |n: NoiseModel, delta: Option<f64>| match delta {
        Some(d) => n.with_huber(d).expect("validated huber threshold"),
        None => n,
    };
    let pixel_noise = robust(noise(sigmas.pixel, 2), sigmas.reprojection_huber);
    let conic_noise = robust(noise(sigmas.conic, 6), sigmas.conic_huber);
    let odometry_noise = NoiseModel::diagonal(&[
        sigmas.odometry_rotation,
        sigmas.odometry_rotation,
        sigmas.odometry_rotation,
        sigmas.odometry_translation,
        sigmas.odometry_translation,
        sigmas.odometry_translation,
    ])
    .expect("validated sigmas are positive");

    for (f, frame) in meas.frames.iter().enumerate() {
        let cam = poses[f];
        for (i, pixel) in &frame.pixels {
            let m = Measurement::Pixel { pixel: *pixel, camera: meas.camera };
            graph
                .add_factor(FactorKind::Reprojection, &[cam, points[*i].expect("added above")], m, pixel_noise.clone())
                .map_err(graph_err)?;
        }
        if let Some(odo) = frame.odometry {
            graph
                .add_factor(
                    FactorKind::Odometry,
                    &[cam, poses[f - 1]],
                    Measurement::RelativePose(odo),
                    odometry_noise.clone(),
                )
                .map_err(graph_err)?;
        }
        if ablation.uses_planes() {
            for (i, plane) in &frame.planes {
                graph
                    .add_factor(
                        FactorKind::PlaneObservation,
                        &[cam, planes[*i].expect("added above")],
                        Measurement::Plane(*plane),
                        noise(sigmas.plane, 3),
                    )
                    .map_err(graph_err)?;
            }
        }
        if ablation.uses_quadrics() {
            for (i, conic) in &frame.conics {
                graph
                    .add_factor(
                        FactorKind::QuadricObservation,
                        &[cam, quadrics[*i].expect("added above")],
                        Measurement::Conic { conic: *conic, camera: meas.camera },
                        conic_noise.clone(),
                    )
                    .map_err(graph_err)?;
            }
        }
    }

    for c in constraints {
        let (kind, ids, sigma) = match *c {
            Constraint::PointPlane { point, plane } if ablation.uses_planes() => {
                (FactorKind::PointPlane, [points.get(point), planes.get(plane)], sigmas.point_plane)
            }
            Constraint::ParallelPlanes { a, b } if ablation.uses_manhattan() => {
                (FactorKind::ParallelPlanes, [planes.get(a), planes.get(b)], sigmas.manhattan)
            }
            Constraint::PerpendicularPlanes { a, b } if ablation.uses_manhattan() => {
                (FactorKind::PerpendicularPlanes, [planes.get(a), planes.get(b)], sigmas.manhattan)
            }
            Constraint::Tangency { plane, quadric } if ablation.uses_support() => {
                (FactorKind::Tangency, [planes.get(plane), quadrics.get(quadric)], sigmas.tangency)
            }
            _ => continue,
        };
        let (Some(Some(a)), Some(Some(b))) = (ids[0], ids[1]) else {
            continue;
        };
        graph
            .add_factor(kind, &[*a, *b], Measurement::None, robust(noise(sigma, 1), sigmas.constraint_huber))
            .map_err(graph_err)?;
    }

    Ok(BuiltGraph {
        graph,
        poses,
        points,
        planes,
        quadrics,
    })
}

/// Mean angle (radians) between estimated and true plane normals, over planes present in `built`.
pub fn mean_plane_normal_error(built: &BuiltGraph, gt: &GroundTruth) -> Option<f64> {
    let errors: Vec<f64> = built
        .planes
        .iter()
        .enumerate()
        .filter_map(|(i, id)| {
            let est = built.graph.get((*id)?).ok()?.as_plane()?;
            let cos = est.unit_normal().dot(&gt.planes[i].unit_normal()).abs().min(1.0);
            Some(cos.acos())
        })
        .collect();
    (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64)
}
