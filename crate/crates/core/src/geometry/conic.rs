use nalgebra::Matrix3;

use super::{BoundingBox, GeometryError};

const ZERO_NORM: f64 = 1e-15;
const SINGULAR_DET: f64 = 1e-12;

/// Dual (line) conic: a line `l` is tangent to the ellipse iff `l^T C l = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualConic(pub Matrix3<f64>);

impl DualConic {
    /// Symmetrizes the input.
    pub fn new(m: Matrix3<f64>) -> Self {
        Self((m + m.transpose()) * 0.5)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0 * s)
    }
}

/// Sign that makes the largest-magnitude diagonal entry positive (first index wins ties).
pub(crate) fn canonical_sign(m: &Matrix3<f64>) -> f64 {
    let mut best = 0;
    for i in 1..3 {
        if m[(i, i)].abs() > m[(best, best)].abs() {
            best = i;
        }
    }
    if m[(best, best)] != 0.0 {
        return m[(best, best)].signum();
    }
    m.iter()
        .find(|v| **v != 0.0)
        .map(|v| v.signum())
        .unwrap_or(1.0)
}

fn normalize_matrix(m: &Matrix3<f64>) -> Result<Matrix3<f64>, GeometryError> {
    let n = m.norm();
    if !(n >= ZERO_NORM) {
        return Err(GeometryError::ZeroConic);
    }
    Ok(m * (canonical_sign(m) / n))
}

/// Unit Frobenius norm with the largest-magnitude diagonal entry made positive.
pub fn conic_normalize(c: &DualConic) -> Result<DualConic, GeometryError> {
    normalize_matrix(&c.0).map(DualConic)
}

/// Primal (point) conic of a dual conic, normalized like [`conic_normalize`].
pub fn dual_conic_to_primal(c: &DualConic) -> Result<Matrix3<f64>, GeometryError> {
    let n = normalize_matrix(&c.0)?;
    if n.determinant().abs() <= SINGULAR_DET {
        return Err(GeometryError::SingularConic);
    }
    normalize_matrix(&adjugate(&n))
}

fn adjugate(m: &Matrix3<f64>) -> Matrix3<f64> {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| {
        m[(r0, c0)] * m[(r1, c1)] - m[(r0, c1)] * m[(r1, c0)]
    };
    Matrix3::new(
        c(1, 2, 1, 2),
        -c(0, 2, 1, 2),
        c(0, 1, 1, 2),
        -c(1, 2, 0, 2),
        c(0, 2, 0, 2),
        -c(0, 1, 0, 2),
        c(1, 2, 0, 1),
        -c(0, 2, 0, 1),
        c(0, 1, 0, 1),
    )
}

/// Dual conic of the axis-aligned ellipse inscribed in `b`.
pub fn bbox_to_dual_conic(b: &BoundingBox) -> DualConic {
    let c = b.center();
    let h = b.half_extents();
    let shift = Matrix3::new(1.0, 0.0, c.x, 0.0, 1.0, c.y, 0.0, 0.0, 1.0);
    let canonical = Matrix3::from_diagonal(&nalgebra::Vector3::new(h.x * h.x, h.y * h.y, -1.0));
    let m = shift * canonical * shift.transpose();
    DualConic(normalize_matrix(&m).expect("valid boxes have nonzero conics"))
}
