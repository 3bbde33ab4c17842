#![allow(dead_code)]

use nalgebra::{Matrix3, Vector2, Vector3, Vector4, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use structslam_core::factors::{FactorKind, Measurement, Variable};
use structslam_core::geometry::{
    plane_boxplus, plane_normalize, project_point, project_quadric, se3_exp, CameraIntrinsics,
    DualConic, DualQuadric, EllipsoidShape, PlaneLandmark, Pose,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_pose(rng: &mut ChaCha8Rng, rot: f64, trans: f64) -> Pose {
    let mut xi = Vector6::zeros();
    for i in 0..3 {
        xi[i] = rng.random_range(-rot..rot);
        xi[i + 3] = rng.random_range(-trans..trans);
    }
    se3_exp(&xi)
}

pub fn random_plane(rng: &mut ChaCha8Rng) -> PlaneLandmark {
    loop {
        let raw = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if raw.fixed_rows::<3>(0).norm() > 0.2 {
            return plane_normalize(&raw).unwrap();
        }
    }
}

pub fn random_quadric(rng: &mut ChaCha8Rng) -> DualQuadric {
    DualQuadric::new(
        random_pose(rng, 3.0, 2.0),
        EllipsoidShape::new(
            rng.random_range(0.1..1.0),
            rng.random_range(0.1..1.0),
            rng.random_range(0.1..1.0),
        )
        .unwrap(),
    )
}

pub fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(525.0, 520.0, 319.5, 239.5).unwrap()
}

fn small_tangent(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-scale..scale))
}

/// A random, evaluable configuration of the given factor kind.
pub fn random_configuration(kind: FactorKind, rng: &mut ChaCha8Rng) -> (Vec<Variable>, Measurement) {
    let k = intrinsics();
    match kind {
        FactorKind::Reprojection => {
            let cam = random_pose(rng, 3.0, 3.0);
            let pc = Vector3::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.0..1.0),
                rng.random_range(1.0..8.0),
            );
            let x = cam.transform_point(&pc);
            let pixel = project_point(&x, &cam, &k).unwrap()
                + Vector2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            (
                vec![Variable::Pose(cam), Variable::Point(x)],
                Measurement::Pixel { pixel, camera: k },
            )
        }
        FactorKind::Odometry => {
            let a = random_pose(rng, 3.0, 3.0);
            let b = random_pose(rng, 3.0, 3.0);
            let meas = random_pose(rng, 0.3, 0.3) * (b.inverse() * a);
            (vec![Variable::Pose(a), Variable::Pose(b)], Measurement::RelativePose(meas))
        }
        FactorKind::PosePrior => {
            let t = random_pose(rng, 3.0, 3.0);
            let prior = t * random_pose(rng, 1.0, 1.0);
            (vec![Variable::Pose(t)], Measurement::Pose(prior))
        }
        FactorKind::QuadricObservation => {
            let cam = random_pose(rng, 3.0, 3.0);
            let center = cam.transform_point(&Vector3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(3.0..6.0),
            ));
            let mut q = random_quadric(rng);
            q.pose.translation = center;
            let exact = project_quadric(&q, &cam, &k).0;
            let noise = Matrix3::from_fn(|_, _| rng.random_range(-0.05..0.05)) * exact.norm();
            let conic = DualConic::new(exact + noise);
            (
                vec![Variable::Pose(cam), Variable::Quadric(q)],
                Measurement::Conic { conic, camera: k },
            )
        }
        FactorKind::PlaneObservation => {
            let cam = random_pose(rng, 3.0, 3.0);
            let p = random_plane(rng);
            let seen = structslam_core::geometry::plane_transform(&p, &cam.inverse());
            let meas = plane_boxplus(&seen, &small_tangent(rng, 0.2));
            (vec![Variable::Pose(cam), Variable::Plane(p)], Measurement::Plane(meas))
        }
        FactorKind::PointPlane => {
            let p = random_plane(rng);
            let x = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
            (vec![Variable::Point(x), Variable::Plane(p)], Measurement::None)
        }
        FactorKind::ParallelPlanes | FactorKind::PerpendicularPlanes => loop {
            let a = random_plane(rng);
            let b = random_plane(rng);
            if a.unit_normal().dot(&b.unit_normal()).abs() > 1e-3 {
                break (vec![Variable::Plane(a), Variable::Plane(b)], Measurement::None);
            }
        },
        FactorKind::Tangency => {
            let p = random_plane(rng);
            let q = random_quadric(rng);
            (vec![Variable::Plane(p), Variable::Quadric(q)], Measurement::None)
        }
    }
}
