use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use structslam_core::eval::{evaluate, parse_tum, write_tum, EvalConfig, EvalError, MetricReport, Trajectory};
use structslam_core::simulator::{
    generate_scene, parse_ground_truth, parse_measurements, synthesize_observations, write_ground_truth,
    write_measurements, Ablation, GroundTruth, MeasurementSet, SimError,
};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::pipeline::{reference_trajectory, solve_sequence, BatchSolve, PipelineError, SequenceResult};
use crate::table::{format_sig6, AblationTable};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.txt";
pub const MEASUREMENTS_FILE: &str = "measurements.txt";
pub const GROUND_TRUTH_TUM_FILE: &str = "ground_truth.tum";
pub const ABLATION_CSV_FILE: &str = "ablation.csv";

/// Console streams; separate so tests can capture them.
pub struct Console<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

// console output is best effort: a closed pipe must not turn into a failed run
macro_rules! say {
    ($w:expr, $($arg:tt)*) => {
        let _ = writeln!($w, $($arg)*);
    };
}

/// File-name friendly ablation label: `PPQ+MS` -> `PPQ_MS`.
pub fn ablation_slug(a: Ablation) -> String {
    a.name().replace('+', "_")
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(CliError::io(path))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(CliError::io(path))
}

fn warn_if_planeless(gt: &GroundTruth, ablations: &[Ablation], console: &mut Console<'_>) {
    if gt.planes.is_empty() {
        if let Some(a) = ablations.iter().find(|a| a.uses_planes()) {
            say!(console.err, "warning: no planes in scene; ablation {a} runs without plane factors");
        }
    }
}

pub fn simulate_scene(cfg: &RunConfig, seed: u64) -> Result<(GroundTruth, MeasurementSet), SimError> {
    let scene = cfg.scene_config(seed);
    let gt = generate_scene(&scene)?;
    let meas = synthesize_observations(&gt, &scene);
    Ok((gt, meas))
}

/// Writes the ground truth and measurements of the first configured seed.
pub fn cmd_simulate(cfg: &RunConfig, console: &mut Console<'_>) -> Result<(), CliError> {
    let seed = cfg.run.seeds[0];
    let ablations = cfg.ablations().map_err(CliError::Config)?;
    let (gt, meas) = simulate_scene(cfg, seed).map_err(|e| CliError::Config(e.to_string()))?;
    let reference = reference_trajectory(&gt, gt.poses.len()).map_err(|e| CliError::Config(e.to_string()))?;
    // everything is rendered before the first file is touched
    let files = [
        (GROUND_TRUTH_FILE, write_ground_truth(&gt)),
        (MEASUREMENTS_FILE, write_measurements(&meas)),
        (GROUND_TRUTH_TUM_FILE, write_tum(&reference)),
    ];
    let dir = &cfg.run.out;
    create_dir(dir)?;
    for (name, text) in &files {
        write_file(&dir.join(name), text)?;
    }

    let count = |f: fn(&structslam_core::simulator::FrameObservations) -> usize| -> usize {
        meas.frames.iter().map(f).sum()
    };
    say!(console.out, "seed {seed}: {} frames written to {}", gt.poses.len(), dir.display());
    say!(console.out, "points: {} landmarks, {} observations", gt.points.len(), count(|f| f.pixels.len()));
    say!(console.out, "planes: {} landmarks, {} observations", gt.planes.len(), count(|f| f.planes.len()));
    say!(console.out, "ellipsoids: {} landmarks, {} observations", gt.quadrics.len(), count(|f| f.conics.len()));
    warn_if_planeless(&gt, &ablations, console);
    Ok(())
}

fn load_scene(dir: &Path) -> Result<(GroundTruth, MeasurementSet), CliError> {
    let gt_path = dir.join(GROUND_TRUTH_FILE);
    let meas_path = dir.join(MEASUREMENTS_FILE);
    let gt = parse_ground_truth(&read_file(&gt_path)?).map_err(|e| CliError::Parse {
        path: gt_path,
        message: e.to_string(),
    })?;
    let meas = parse_measurements(&read_file(&meas_path)?).map_err(|e| CliError::Parse {
        path: meas_path,
        message: e.to_string(),
    })?;
    Ok((gt, meas))
}

fn pipeline_error(ablation: Ablation, e: PipelineError) -> CliError {
    match e {
        PipelineError::Solver { .. } => CliError::Solver(format!("{ablation}: {e}")),
        PipelineError::Sim(_) | PipelineError::Eval(_) => CliError::Config(format!("{ablation}: {e}")),
    }
}

fn solve_line(label: &str, s: &BatchSolve) -> String {
    let r = &s.report;
    format!(
        "{label} keyframe={} factors={} constraints={} iterations={} initial_chi2={:e} final_chi2={:e} termination={:?} inactive={} clamped={}",
        s.keyframe,
        s.factors,
        s.constraints,
        r.iterations,
        r.initial_chi2,
        r.final_chi2,
        r.termination,
        r.inactive_factors,
        r.clamped_updates
    )
}

/// Structured text report of one sequence solve.
pub fn solve_report(ablation: Ablation, seed: u64, result: &SequenceResult, metrics: Option<&MetricReport>) -> String {
    let mut out = String::from("# structslam solve report v1\n");
    out.push_str(&format!("ablation {ablation}\nseed {seed}\nframes {}\n", result.trajectory.len()));
    for s in &result.keyframes {
        out.push_str(&solve_line("solve", s));
        out.push('\n');
    }
    out.push_str(&solve_line("final", &result.final_solve));
    out.push('\n');
    if let Some(m) = metrics {
        out.push_str(&format!(
            "ate_cm {}\nrte_cm {}\nrre_deg {}\n",
            format_sig6(m.ate_rmse_cm),
            format_sig6(m.rte_rmse_cm),
            format_sig6(m.rre_rmse_deg)
        ));
    }
    out
}

/// Per-iteration chi2 of every solve, for plotting.
pub fn chi2_csv(result: &SequenceResult) -> String {
    let mut out = String::from("solve,keyframe,iteration,chi2\n");
    let solves = result.keyframes.iter().map(|s| ("keyframe", s)).chain([("final", &result.final_solve)]);
    for (label, s) in solves {
        for (i, chi2) in s.report.chi2_trace.iter().enumerate() {
            out.push_str(&format!("{label},{},{i},{}\n", s.keyframe, format_sig6(*chi2)));
        }
    }
    out
}

/// Solves a simulated sequence from `scene_dir` once per configured ablation.
pub fn cmd_solve(cfg: &RunConfig, scene_dir: &Path, console: &mut Console<'_>) -> Result<(), CliError> {
    let seed = cfg.run.seeds[0];
    let ablations = cfg.ablations().map_err(CliError::Config)?;
    let (gt, meas) = load_scene(scene_dir)?;
    warn_if_planeless(&gt, &ablations, console);
    let settings = cfg.solve_settings();
    let dir = &cfg.run.out;
    create_dir(dir)?;
    for ablation in ablations {
        let result = solve_sequence(&gt, &meas, ablation, &settings, seed).map_err(|e| pipeline_error(ablation, e))?;
        let reference = reference_trajectory(&gt, meas.frames.len()).map_err(|e| CliError::Config(e.to_string()))?;
        let metrics = evaluate(&result.trajectory, &reference, &cfg.eval_config()).ok();
        let slug = ablation_slug(ablation);
        let traj_path = dir.join(format!("trajectory_{slug}.tum"));
        write_file(&traj_path, &write_tum(&result.trajectory))?;
        write_file(&dir.join(format!("report_{slug}.txt")), &solve_report(ablation, seed, &result, metrics.as_ref()))?;
        write_file(&dir.join(format!("chi2_{slug}.csv")), &chi2_csv(&result))?;
        let ate = metrics.map_or("nan".to_string(), |m| format!("{:.4}", m.ate_rmse_cm));
        say!(
            console.out,
            "{ablation}: final chi2 {:e} after {} iterations, ATE {ate} cm, trajectory {}",
            result.final_solve.report.final_chi2,
            result.final_solve.report.iterations,
            traj_path.display()
        );
    }
    Ok(())
}

/// Outcome of one (seed, ablation) cell.
pub type CellResult = Result<MetricReport, String>;

/// Runs every (seed, ablation) cell in parallel; results are ordered by seed, then ablation.
pub fn run_ablation(cfg: &RunConfig) -> Result<(AblationTable, Vec<Vec<CellResult>>), CliError> {
    let ablations = cfg.ablations().map_err(CliError::Config)?;
    let settings = cfg.solve_settings();
    let eval_cfg = cfg.eval_config();
    let scenes: Vec<Result<(GroundTruth, MeasurementSet), SimError>> =
        cfg.run.seeds.par_iter().map(|seed| simulate_scene(cfg, *seed)).collect();
    let cells: Vec<(usize, Ablation)> = (0..scenes.len())
        .flat_map(|s| ablations.iter().map(move |a| (s, *a)))
        .collect();
    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|(s, ablation)| {
            let (gt, meas) = scenes[*s].as_ref().map_err(|e| e.to_string())?;
            let seed = cfg.run.seeds[*s];
            let result = solve_sequence(gt, meas, *ablation, &settings, seed).map_err(|e| e.to_string())?;
            let reference = reference_trajectory(gt, meas.frames.len()).map_err(|e| e.to_string())?;
            evaluate(&result.trajectory, &reference, &eval_cfg).map_err(|e| e.to_string())
        })
        .collect();
    let by_seed: Vec<Vec<CellResult>> = results.chunks(ablations.len()).map(|c| c.to_vec()).collect();
    let table = AblationTable {
        seeds: cfg.run.seeds.clone(),
        ablations,
        cells: by_seed
            .iter()
            .map(|row| {
                row.iter()
                    .map(|cell| match cell {
                        Ok(m) => [m.ate_rmse_cm, m.rte_rmse_cm, m.rre_rmse_deg],
                        Err(_) => [f64::NAN; 3],
                    })
                    .collect()
            })
            .collect(),
    };
    Ok((table, by_seed))
}

/// Runs the sweep, writes `ablation.csv` into the output directory and echoes it.
pub fn cmd_ablate(cfg: &RunConfig, console: &mut Console<'_>) -> Result<AblationTable, CliError> {
    let (table, results) = run_ablation(cfg)?;
    let mut succeeded = 0;
    for (seed, row) in table.seeds.iter().zip(&results) {
        for (ablation, cell) in table.ablations.iter().zip(row) {
            match cell {
                Ok(_) => succeeded += 1,
                Err(e) => {
                    say!(console.err, "seed {seed} ablation {ablation} failed: {e}");
                }
            }
        }
    }
    if succeeded == 0 {
        return Err(CliError::Solver("every ablation cell failed".into()));
    }
    let csv = table.to_csv();
    create_dir(&cfg.run.out)?;
    write_file(&cfg.run.out.join(ABLATION_CSV_FILE), &csv)?;
    let _ = console.out.write_all(csv.as_bytes());
    Ok(table)
}

fn load_tum(path: &Path) -> Result<Trajectory, CliError> {
    parse_tum(&read_file(path)?).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Compares an estimated trajectory against a reference, both in TUM format.
pub fn cmd_eval(
    est_path: &Path,
    ref_path: &Path,
    config: &EvalConfig,
    csv_path: Option<&PathBuf>,
    console: &mut Console<'_>,
) -> Result<MetricReport, CliError> {
    let est = load_tum(est_path)?;
    let reference = load_tum(ref_path)?;
    let report = evaluate(&est, &reference, config).map_err(|e| match e {
        EvalError::NoOverlap => CliError::NoOverlap(format!(
            "no timestamps of {} and {} lie within {} s of each other",
            est_path.display(),
            ref_path.display(),
            config.max_dt
        )),
        other => CliError::Config(other.to_string()),
    })?;
    say!(console.out, "ATE (cm): {:.4}", report.ate_rmse_cm);
    say!(console.out, "RTE (cm): {:.4}", report.rte_rmse_cm);
    say!(console.out, "RRE (deg): {:.4}", report.rre_rmse_deg);
    if let Some(path) = csv_path {
        let csv = format!(
            "ate_cm,rte_cm,rre_deg\n{},{},{}\n",
            format_sig6(report.ate_rmse_cm),
            format_sig6(report.rte_rmse_cm),
            format_sig6(report.rre_rmse_deg)
        );
        write_file(path, &csv)?;
    }
    Ok(report)
}
