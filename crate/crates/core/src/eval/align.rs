use nalgebra::{Matrix3, Rotation3, Vector3};

use super::{EvalError, Trajectory};
use crate::geometry::Pose;

/// Relative size of the second principal spread below which positions count as collinear.
const COLLINEAR_TOL: f64 = 1e-10;

/// Greedy one-to-one timestamp matching: candidate pairs within `max_dt` are
/// taken in order of increasing time difference (ties by index). Returned
/// pairs `(est index, ref index)` are sorted by estimate index.
pub fn associate(est: &Trajectory, reference: &Trajectory, max_dt: f64) -> Result<Vec<(usize, usize)>, EvalError> {
    let rs = reference.stamps();
    let mut candidates = Vec::new();
    for (i, t) in est.stamps().iter().enumerate() {
        let start = rs.partition_point(|r| *r < t - max_dt);
        for (j, r) in rs.iter().enumerate().skip(start) {
            let dt = (r - t).abs();
            if r - t > max_dt {
                break;
            }
            if dt <= max_dt {
                candidates.push((dt, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut est_used = vec![false; est.len()];
    let mut ref_used = vec![false; reference.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !est_used[i] && !ref_used[j] {
            est_used[i] = true;
            ref_used[j] = true;
            pairs.push((i, j));
        }
    }
    if pairs.is_empty() {
        return Err(EvalError::NoOverlap);
    }
    pairs.sort_unstable();
    Ok(pairs)
}

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

/// Rigid transform `G` minimizing `sum |ref_i - G est_i|^2` (Kabsch/Umeyama without scale).
pub fn rigid_align(est: &[Vector3<f64>], reference: &[Vector3<f64>]) -> Result<Pose, EvalError> {
    assert_eq!(est.len(), reference.len(), "positions must be paired");
    if est.len() < 3 {
        return Err(EvalError::DegenerateGeometry);
    }
    let (ce, cr) = (centroid(est), centroid(reference));
    let mut cov = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    for (e, r) in est.iter().zip(reference) {
        let (de, dr) = (e - ce, r - cr);
        cov += dr * de.transpose();
        scatter += de * de.transpose();
    }
    let mut spread = scatter.symmetric_eigenvalues();
    spread.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if !(spread[1] > COLLINEAR_TOL * spread[0]) {
        return Err(EvalError::DegenerateGeometry);
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested V^T"));
    // reflection guard: flip the weakest direction if the best orthogonal map is improper
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = Rotation3::from_matrix_unchecked(u * d * v_t);
    let t = cr - r * ce;
    Ok(Pose::new(r, t))
}
