use std::fs;
use std::path::Path;

use structslam_cli::commands::{ABLATION_CSV_FILE, GROUND_TRUTH_FILE, GROUND_TRUTH_TUM_FILE, MEASUREMENTS_FILE};

struct Outcome {
    code: i32,
    out: String,
    err: String,
}

fn run(args: &[&str]) -> Outcome {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = structslam_cli::run(std::iter::once("structslam").chain(args.iter().copied()), &mut out, &mut err);
    Outcome {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL_NOISE_FREE: &str = r#"
[scene]
frames = 12
num_points = 80
conic_model = "exact"

[noise]
pixel = 0.0
plane_angle = 0.0
plane_offset = 0.0
bbox = 0.0
odometry_rotation = 0.0
odometry_translation = 0.0

[init]
point = 0.0
plane = 0.0
quadric = 0.0
"#;

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let r = run(&["simulate", "--seed", "11", "--out", out.to_str().unwrap()]);
        assert_eq!(r.code, 0, "{}", r.err);
    }
    for name in [GROUND_TRUTH_FILE, MEASUREMENTS_FILE, GROUND_TRUTH_TUM_FILE] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
    let c = dir.path().join("c");
    assert_eq!(run(&["simulate", "--seed", "12", "--out", c.to_str().unwrap()]).code, 0);
    assert_ne!(fs::read(a.join(MEASUREMENTS_FILE)).unwrap(), fs::read(c.join(MEASUREMENTS_FILE)).unwrap());
}

#[test]
fn planeless_scene_warns_for_plane_ablations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scene]\nnum_planes = 0\nnum_ellipsoids = 0\nframes = 8\n");
    let out = dir.path().join("scene");
    let r = run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--ablation", "P,PP"]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.err.contains("warning: no planes"), "{}", r.err);
    assert!(r.err.contains("PP"));
    assert!(!r.err.contains("ablation P "), "point-only ablation needs no warning: {}", r.err);
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scene");
    for text in ["[scene]\nnum_pointz = 3\n", "[scene]\nframes = \"many\"\n", "[solver]\nlambda_up = 0.5\n"] {
        let cfg = write_config(dir.path(), text);
        let r = run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(r.code, 2, "config {text:?}: {}", r.err);
        assert!(r.out.is_empty());
        assert!(r.err.starts_with("error:"));
        assert!(!out.exists(), "no files are written for a rejected config");
    }
}

#[test]
fn unknown_ablation_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&["simulate", "--ablation", "PPQMS", "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("PPQMS"), "{}", r.err);
}

#[test]
fn noise_free_solve_recovers_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_NOISE_FREE);
    let scene = dir.path().join("scene");
    let results = dir.path().join("results");
    assert_eq!(run(&["simulate", "--config", &cfg, "--out", scene.to_str().unwrap()]).code, 0);
    let r = run(&[
        "solve",
        scene.to_str().unwrap(),
        "--config",
        &cfg,
        "--out",
        results.to_str().unwrap(),
        "--ablation",
        "PP+M,PPQ+MS",
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    for slug in ["PP_M", "PPQ_MS"] {
        let report = fs::read_to_string(results.join(format!("report_{slug}.txt")))
            .unwrap_or_else(|_| panic!("missing report for {slug}: {:?}", fs::read_dir(&results).unwrap().collect::<Vec<_>>()));
        assert!(report.starts_with("# structslam solve report v1"));
        let ate: f64 = report
            .lines()
            .find_map(|l| l.strip_prefix("ate_cm "))
            .expect("ate line")
            .parse()
            .unwrap();
        assert!(ate < 1e-6, "{slug}: ATE {ate} cm");

        // every solve's chi2 trace is non-increasing
        let csv = fs::read_to_string(results.join(format!("chi2_{slug}.csv"))).unwrap();
        let mut rows = csv.lines().skip(1).map(|l| l.split(',').collect::<Vec<_>>());
        let mut previous: Option<(String, String, f64)> = None;
        for row in rows.by_ref() {
            let key = (row[0].to_string(), row[1].to_string());
            let chi2: f64 = row[3].parse().unwrap();
            if let Some((s, k, prev)) = &previous {
                if (s, k) == (&key.0, &key.1) {
                    assert!(chi2 <= prev * (1.0 + 1e-5), "{slug} {s} {k}: {prev} -> {chi2}");
                }
            }
            previous = Some((key.0, key.1, chi2));
        }
        assert!(results.join(format!("trajectory_{slug}.tum")).exists());
    }
}

#[test]
fn ablate_writes_one_row_per_seed_plus_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scene]\nframes = 10\nnum_points = 60\n");
    let out = dir.path().join("ablate");
    let r = run(&["ablate", "--config", &cfg, "--seed", "1,2", "--ablation", "P,PP", "--out", out.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.err);
    let csv = fs::read_to_string(out.join(ABLATION_CSV_FILE)).unwrap();
    assert_eq!(csv, r.out, "stdout echoes the table");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "seed,P_ate_cm,P_rte_cm,P_rre_deg,PP_ate_cm,PP_rte_cm,PP_rre_deg");
    let labels: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["1", "2", "mean", "improvement_pct"]);
    for line in &lines[1..] {
        assert_eq!(line.split(',').count(), 7, "{line}");
    }
}

fn write_tum(path: &Path, rows: &[(f64, [f64; 3])]) {
    let text: String = rows
        .iter()
        .map(|(t, p)| format!("{t:.6} {} {} {} 0 0 0 1\n", p[0], p[1], p[2]))
        .collect();
    fs::write(path, text).unwrap();
}

fn trajectory(offset: f64, stamp_shift: f64) -> Vec<(f64, [f64; 3])> {
    (0..20)
        .map(|i| {
            let s = i as f64 * 0.1;
            (s + stamp_shift, [s.cos() + offset, s.sin(), 0.1 * s])
        })
        .collect()
}

#[test]
fn eval_of_a_trajectory_against_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.tum");
    write_tum(&path, &trajectory(0.0, 0.0));
    let csv = dir.path().join("metrics.csv");
    let p = path.to_str().unwrap();
    let r = run(&["eval", p, p, "--out", csv.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("ATE (cm): 0.0000"), "{}", r.out);
    let metrics = fs::read_to_string(csv).unwrap();
    let values: Vec<f64> = metrics.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!(values.iter().all(|v| v.abs() < 1e-9), "{metrics}");
}

#[test]
fn eval_is_invariant_to_a_global_offset() {
    let dir = tempfile::tempdir().unwrap();
    let est = dir.path().join("est.tum");
    let reference = dir.path().join("ref.tum");
    write_tum(&est, &trajectory(2.5, 0.0));
    write_tum(&reference, &trajectory(0.0, 0.0));
    let r = run(&["eval", est.to_str().unwrap(), reference.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("ATE (cm): 0.0000"), "{}", r.out);
}

#[test]
fn eval_names_the_malformed_line() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.tum");
    let bad = dir.path().join("bad.tum");
    write_tum(&good, &trajectory(0.0, 0.0));
    fs::write(&bad, "# header\n0.0 0 0 0 0 0 0 1\n0.1 0 0 zero 0 0 0 1\n").unwrap();
    let r = run(&["eval", bad.to_str().unwrap(), good.to_str().unwrap()]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("bad.tum"), "{}", r.err);
    assert!(r.err.contains("line 3"), "{}", r.err);
    assert!(r.out.is_empty());
}

#[test]
fn eval_without_overlap_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let est = dir.path().join("est.tum");
    let reference = dir.path().join("ref.tum");
    write_tum(&est, &trajectory(0.0, 100.0));
    write_tum(&reference, &trajectory(0.0, 0.0));
    let r = run(&["eval", est.to_str().unwrap(), reference.to_str().unwrap()]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("no timestamps"), "{}", r.err);
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.tum");
    let r = run(&["eval", missing.to_str().unwrap(), missing.to_str().unwrap()]);
    assert_eq!(r.code, 4, "{}", r.err);
    let r = run(&["solve", dir.path().to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(r.code, 4, "{}", r.err);
}

#[test]
fn bad_arguments_exit_with_usage_error() {
    assert_eq!(run(&["frobnicate"]).code, 2);
    assert_eq!(run(&["eval", "a.tum"]).code, 2);
    let help = run(&["--help"]);
    assert_eq!(help.code, 0);
    assert!(help.out.contains("simulate"));
}
