//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//!
//! Runs as a plain binary (`harness = false`) so the verdict lines are always
//! visible in `cargo test` output.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::time::{Duration, Instant};

use nalgebra::{Matrix4, SVector, SymmetricEigen, Vector3, Vector4};
use rand::Rng;
use structslam_cli::commands::{cmd_ablate, run_ablation, Console, ABLATION_CSV_FILE};
use structslam_cli::config::RunConfig;
use structslam_cli::pipeline::solve_sequence;
use structslam_core::eval::{ate_rmse, rre_rmse, rte_rmse, Trajectory};
use structslam_core::factors::{linearize, numeric_jacobian, tangency_residual, FactorKind, Variable};
use structslam_core::geometry::{
    dual_conic_to_primal, plane_normalize, project_point, project_quadric, quadric_compose, quadric_update,
    se3_exp, CameraIntrinsics, DualQuadric, EllipsoidShape, Pose,
};
use structslam_core::graph::{optimize, SolverConfig};
use structslam_core::simulator::{
    build_graph, detect_constraints, generate_scene, mean_plane_normal_error, perturb_ground_truth, point_depths,
    synthesize_observations, Ablation, ConicModel, ConstraintThresholds, Estimates, FactorSigmas, NoiseLevels,
    Perturbation, SceneConfig,
};

struct Verdict {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn verdict(name: &'static str, passed: bool, detail: String) -> Verdict {
    Verdict { name, passed, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn jacobian_suite() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    let mut configurations = 0;
    for kind in FactorKind::ALL {
        let mut rng = common::rng(7000 + kind as u64);
        for _ in 0..100 {
            let (vars, meas) = common::random_configuration(kind, &mut rng);
            let refs: Vec<&Variable> = vars.iter().collect();
            let (Ok(lin), Ok(num)) = (linearize(kind, &refs, &meas), numeric_jacobian(kind, &refs, &meas, 1e-6))
            else {
                failures += 1;
                continue;
            };
            configurations += 1;
            for (a, n) in lin.jacobians.iter().zip(&num) {
                let excess = (a - n).norm() / (1e-5 * n.norm() + 1e-8);
                worst = worst.max(excess);
                if excess > 1.0 {
                    failures += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        "Jacobian suite",
        failures == 0 && elapsed < Duration::from_secs(30),
        format!(
            "{configurations} configurations over {} kinds, worst error {worst:.3} of tolerance, {failures} failures, {}",
            FactorKind::ALL.len(),
            secs(elapsed)
        ),
    )
}

fn signature(m: &Matrix4<f64>) -> (usize, usize) {
    let eig = SymmetricEigen::new(*m).eigenvalues;
    (eig.iter().filter(|v| **v > 0.0).count(), eig.iter().filter(|v| **v < 0.0).count())
}

fn ellipsoid_closure() -> Verdict {
    let mut rng = common::rng(7100);
    let mut violations = 0;
    let mut checked = 0;
    for _ in 0..1000 {
        let q = common::random_quadric(&mut rng);
        for _ in 0..1000 {
            let dir = SVector::<f64, 9>::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let e = dir.normalize() * rng.random_range(0.0..1.0);
            // a clamped update still yields the guarded ellipsoid
            let updated = quadric_update(&q, &e).unwrap_or_else(|d| d.clamped);
            checked += 1;
            if signature(&quadric_compose(&updated)) != (3, 1) {
                violations += 1;
            }
        }
    }
    verdict("Ellipsoid closure", violations == 0, format!("{checked} updates, {violations} signature violations"))
}

/// A random ellipsoid and a plane tangent to it, built from `pi^T Q pi = n^T M n - (n^T t + d)^2`.
fn supported_pair(rng: &mut rand_chacha::ChaCha8Rng) -> (structslam_core::geometry::PlaneLandmark, DualQuadric) {
    let q = common::random_quadric(rng);
    let n = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
    let m = q.pose.rotation.matrix()
        * nalgebra::Matrix3::from_diagonal(&q.shape.semi_axes().component_mul(q.shape.semi_axes()))
        * q.pose.rotation.matrix().transpose();
    let d = -n.dot(&q.pose.translation) + (n.dot(&(m * n))).sqrt();
    let plane = plane_normalize(&Vector4::new(n.x, n.y, n.z, d)).expect("unit normal");
    (plane, q)
}

fn noise_free_config(seed: u64) -> SceneConfig {
    SceneConfig {
        seed,
        noise: NoiseLevels::zero(),
        conic_model: ConicModel::Exact,
        ..SceneConfig::default()
    }
}

struct NoiseFreeRun {
    chi2_at_truth: f64,
    ate_cm: f64,
    worst_tangency: f64,
    supported_pairs: usize,
    elapsed: Duration,
}

/// Builds the full graph of a noise-free scene and optimizes it from the standard perturbation.
fn noise_free_solve(seed: u64) -> NoiseFreeRun {
    let start = Instant::now();
    let cfg = noise_free_config(seed);
    let gt = generate_scene(&cfg).expect("valid scene");
    let meas = synthesize_observations(&gt, &cfg);
    let depths = point_depths(&gt.points, &gt.poses, &meas);
    let constraints = detect_constraints(gt.landmarks(), &depths, &ConstraintThresholds::default());
    let sigmas = FactorSigmas::for_noise(&cfg.noise);
    let truth = Estimates::from_ground_truth(&gt);
    let at_truth = build_graph(&meas, &constraints, &truth, Ablation::PPQMS, &sigmas).expect("graph");
    let chi2_at_truth = at_truth.graph.chi2().total;

    let init = Perturbation {
        pose: 0.05,
        point: 0.05,
        plane: 0.02,
        quadric: 0.05,
    };
    let mut est = perturb_ground_truth(&gt, &init, seed + 1);
    let mut built = build_graph(&meas, &constraints, &est, Ablation::PPQMS, &sigmas).expect("graph");
    let solver = SolverConfig {
        max_iterations: 200,
        ..SolverConfig::default()
    };
    optimize(&mut built.graph, &solver).expect("solver");
    built.write_back(&mut est);

    let reference = Trajectory::new(gt.timestamps.clone(), gt.poses.clone()).expect("trajectory");
    let estimate = Trajectory::new(gt.timestamps.clone(), est.poses.clone()).expect("trajectory");
    let ate_cm = ate_rmse(&estimate, &reference, 0.02).expect("ate");

    let mut worst_tangency: f64 = 0.0;
    let mut supported_pairs = 0;
    for (qi, pi) in gt.supports.iter().enumerate() {
        if built.quadrics[qi].is_some() && built.planes[*pi].is_some() {
            supported_pairs += 1;
            worst_tangency = worst_tangency.max(tangency_residual(&est.planes[*pi], &est.quadrics[qi]).abs());
        }
    }
    NoiseFreeRun {
        chi2_at_truth,
        ate_cm,
        worst_tangency,
        supported_pairs,
        elapsed: start.elapsed(),
    }
}

fn tangency_identity(runs: &[NoiseFreeRun]) -> Verdict {
    let mut rng = common::rng(7200);
    let mut worst_constructed: f64 = 0.0;
    for _ in 0..1000 {
        let (plane, q) = supported_pair(&mut rng);
        worst_constructed = worst_constructed.max(tangency_residual(&plane, &q).abs());
    }
    let pairs: usize = runs.iter().map(|r| r.supported_pairs).sum();
    let worst_optimized = runs.iter().map(|r| r.worst_tangency).fold(0.0, f64::max);
    verdict(
        "Tangency identity",
        worst_constructed < 1e-9 && pairs > 0 && worst_optimized < 1e-6,
        format!(
            "constructed max |pi^T Q pi| {worst_constructed:.2e} (< 1e-9); after optimization {worst_optimized:.2e} over {pairs} supported pairs (< 1e-6)"
        ),
    )
}

fn projection_oracle() -> Verdict {
    let mut rng = common::rng(7300);
    let identity_k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).expect("intrinsics");
    let mut worst_outline: f64 = 0.0;
    for _ in 0..100 {
        let r = rng.random_range(0.1..2.0);
        let d = r + rng.random_range(0.05..5.0);
        let sphere = DualQuadric::new(
            Pose::from_translation(Vector3::new(0.0, 0.0, d)),
            EllipsoidShape::new(r, r, r).expect("positive radius"),
        );
        let primal = dual_conic_to_primal(&project_quadric(&sphere, &Pose::identity(), &identity_k)).expect("conic");
        let c = primal / primal[(0, 0)];
        let radius = r / (d * d - r * r).sqrt();
        let mut err: f64 = (c[(1, 1)] - 1.0).abs().max((c[(2, 2)] + radius * radius).abs());
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            err = err.max(c[(i, j)].abs()).max(c[(j, i)].abs());
        }
        worst_outline = worst_outline.max(err);
    }

    let k = common::intrinsics();
    let mut worst_silhouette: f64 = 0.0;
    for _ in 0..100 {
        let cam = common::random_pose(&mut rng, 3.0, 3.0);
        let mut q = common::random_quadric(&mut rng);
        q.pose.translation = cam.transform_point(&Vector3::new(
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(3.0..6.0),
        ));
        let primal = dual_conic_to_primal(&project_quadric(&q, &cam, &k)).expect("conic");
        let c = primal / primal.norm();
        // contour generator: unit-sphere points u with u . o = 1, o the camera in the sphere frame
        let axes = *q.shape.semi_axes();
        let o = q.pose.rotation.inverse() * (cam.translation - q.pose.translation);
        let o = o.component_div(&axes);
        let on = o.norm();
        let e1 = o.cross(&Vector3::new(0.3, -0.5, 0.8)).normalize();
        let e2 = o.normalize().cross(&e1);
        for s in 0..36 {
            let theta = s as f64 * std::f64::consts::TAU / 36.0;
            let u = o / (on * on) + (1.0 - 1.0 / (on * on)).sqrt() * (theta.cos() * e1 + theta.sin() * e2);
            let x = q.pose.translation + q.pose.rotation * u.component_mul(&axes);
            let Ok(px) = project_point(&x, &cam, &k) else {
                continue;
            };
            let h = Vector3::new(px.x, px.y, 1.0).normalize();
            worst_silhouette = worst_silhouette.max((h.transpose() * c * h)[0].abs());
        }
    }
    verdict(
        "Projection oracle",
        worst_outline < 1e-9 && worst_silhouette < 1e-6,
        format!("sphere outline error {worst_outline:.2e} (< 1e-9), silhouette residual {worst_silhouette:.2e} (< 1e-6)"),
    )
}

fn noise_free_end_to_end(runs: &[NoiseFreeRun]) -> Verdict {
    let worst_chi2 = runs.iter().map(|r| r.chi2_at_truth).fold(0.0, f64::max);
    let worst_ate = runs.iter().map(|r| r.ate_cm).fold(0.0, f64::max);
    let slowest = runs.iter().map(|r| r.elapsed).max().unwrap_or_default();
    verdict(
        "Noise-free end-to-end",
        worst_chi2 < 1e-9 && worst_ate < 1e-4 && slowest < Duration::from_secs(60),
        format!(
            "{} seeds: chi2 at truth {worst_chi2:.2e} (< 1e-9), ATE {worst_ate:.2e} cm (< 1e-4), slowest {}",
            runs.len(),
            secs(slowest)
        ),
    )
}

fn ablation_ordering() -> Verdict {
    let start = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.run.seeds = (0..20).collect();
    cfg.run.ablations = ["P", "PP", "PP+M", "PPQ+MS"].map(String::from).to_vec();
    let (table, _) = run_ablation(&cfg).expect("ablation runs");
    let elapsed = start.elapsed();
    let means: Vec<f64> = table.means().iter().map(|m| m[0]).collect();
    let (p, pp, ppm, full) = (means[0], means[1], means[2], means[3]);
    let improved = table
        .cells
        .iter()
        .filter(|row| row[3][0] <= 0.9 * row[0][0])
        .count();
    verdict(
        "Ablation ordering",
        full <= ppm && ppm <= pp && pp <= p && improved >= 16 && elapsed < Duration::from_secs(600),
        format!(
            "mean ATE cm P {p:.4} >= PP {pp:.4} >= PP+M {ppm:.4} >= PPQ+MS {full:.4}; PPQ+MS >= 10% better than P in {improved}/20 seeds (>= 16); {}",
            secs(elapsed)
        ),
    )
}

fn manhattan_effect() -> Verdict {
    let mut cfg = RunConfig::default();
    cfg.scene.num_planes = 6;
    cfg.scene.num_points = 30;
    let settings = cfg.solve_settings();
    let mut better = 0;
    let mut failed = 0;
    for seed in 0..20 {
        let scene = cfg.scene_config(seed);
        let gt = generate_scene(&scene).expect("valid scene");
        let meas = synthesize_observations(&gt, &scene);
        let error = |ablation| {
            solve_sequence(&gt, &meas, ablation, &settings, seed)
                .ok()
                .and_then(|r| mean_plane_normal_error(&r.graph, &gt))
        };
        match (error(Ablation::PP), error(Ablation::PPM)) {
            (Some(plain), Some(manhattan)) if manhattan < plain => better += 1,
            (Some(_), Some(_)) => {}
            _ => failed += 1,
        }
    }
    verdict(
        "Manhattan effect",
        better >= 18,
        format!("PP+M normal error below PP in {better}/20 seeds (>= 18), {failed} failed solves"),
    )
}

fn metric_correctness() -> Verdict {
    let mut rng = common::rng(7400);
    let n = 1000;
    let stamps: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
    let poses: Vec<Pose> = (0..n).map(|_| common::random_pose(&mut rng, 3.0, 5.0)).collect();
    let reference = Trajectory::new(stamps.clone(), poses.clone()).expect("trajectory");
    let g = se3_exp(&nalgebra::Vector6::new(0.4, -1.1, 2.0, 3.0, -2.0, 0.5));
    let moved = reference.transformed(&g);
    let ate_rigid = ate_rmse(&moved, &reference, 0.02).expect("ate");
    let rte_rigid = rte_rmse(&moved, &reference, 1, 0.02).expect("rte");
    let rre_rigid = rre_rmse(&moved, &reference, 1, 0.02).expect("rre");

    // isotropic noise with a 1 cm RMS 3D offset
    let sigma_axis = 0.01 / 3f64.sqrt();
    let normal = rand_distr::Normal::new(0.0, sigma_axis).expect("positive sigma");
    let noisy: Vec<Pose> = poses
        .iter()
        .map(|p| {
            let offset = Vector3::from_fn(|_, _| rng.sample(normal));
            Pose::new(p.rotation, p.translation + offset)
        })
        .collect();
    let noisy = Trajectory::new(stamps, noisy).expect("trajectory");
    let ate_noise = ate_rmse(&noisy, &reference, 0.02).expect("ate");
    verdict(
        "Metric correctness",
        ate_rigid < 1e-9 && rte_rigid < 1e-9 && rre_rigid < 1e-9 && (0.9..=1.1).contains(&ate_noise),
        format!(
            "rigid copy ATE {ate_rigid:.1e} cm, RTE {rte_rigid:.1e} cm, RRE {rre_rigid:.1e} deg (< 1e-9); 1 cm noise ATE {ate_noise:.4} cm (in [0.9, 1.1])"
        ),
    )
}

fn determinism() -> Verdict {
    let mut cfg = RunConfig::default();
    cfg.scene.frames = 12;
    cfg.run.seeds = vec![3, 4];
    let run = |cfg: &mut RunConfig| -> Option<Vec<u8>> {
        let dir = tempfile::tempdir().ok()?;
        cfg.run.out = dir.path().to_path_buf();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        cmd_ablate(cfg, &mut Console { out: &mut out, err: &mut err }).ok()?;
        std::fs::read(dir.path().join(ABLATION_CSV_FILE)).ok()
    };
    let first = run(&mut cfg);
    let second = run(&mut cfg);
    let identical = first.is_some() && first == second;
    verdict(
        "Determinism",
        identical,
        format!(
            "two ablation runs wrote {} bytes, byte-identical: {identical}",
            first.as_ref().map_or(0, Vec::len)
        ),
    )
}

fn main() {
    let noise_free: Vec<NoiseFreeRun> = (0..3).map(noise_free_solve).collect();
    let checks: [fn() -> Verdict; 6] = [
        jacobian_suite,
        ellipsoid_closure,
        projection_oracle,
        metric_correctness,
        determinism,
        manhattan_effect,
    ];
    let mut verdicts: Vec<Verdict> = checks[..3].iter().map(|c| c()).collect();
    verdicts.insert(2, tangency_identity(&noise_free));
    verdicts.push(noise_free_end_to_end(&noise_free));
    verdicts.push(ablation_ordering());
    verdicts.extend(checks[5..].iter().map(|c| c()));
    verdicts.extend(checks[3..5].iter().map(|c| c()));

    let mut failed = 0;
    for v in &verdicts {
        println!("{} {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.name, v.detail);
        failed += usize::from(!v.passed);
    }
    println!("acceptance: {} of {} criteria passed", verdicts.len() - failed, verdicts.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
