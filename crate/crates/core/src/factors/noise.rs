use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum NoiseError {
    #[error("information matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("huber delta must be positive and finite")]
    BadHuberDelta,
}

/// Gaussian noise expressed by its information matrix, optionally robustified with Huber.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    information: DMatrix<f64>,
    /// Upper-triangular `U` with `U^T U = information`.
    sqrt_information: DMatrix<f64>,
    huber_delta: Option<f64>,
}

impl NoiseModel {
    pub fn from_information(information: DMatrix<f64>) -> Result<Self, NoiseError> {
        if !information.is_square()
            || information.nrows() == 0
            || (&information - information.transpose()).amax() > 1e-9 * information.amax().max(1.0)
            || information.iter().any(|v| !v.is_finite())
        {
            return Err(NoiseError::NotPositiveDefinite);
        }
        let chol = information
            .clone()
            .cholesky()
            .ok_or(NoiseError::NotPositiveDefinite)?;
        let sqrt_information = chol.l().transpose();
        Ok(Self {
            information,
            sqrt_information,
            huber_delta: None,
        })
    }

    /// Independent components with standard deviations `sigmas`.
    pub fn diagonal(sigmas: &[f64]) -> Result<Self, NoiseError> {
        if sigmas.iter().any(|s| !(*s > 0.0)) {
            return Err(NoiseError::NotPositiveDefinite);
        }
        let info = DVector::from_iterator(sigmas.len(), sigmas.iter().map(|s| 1.0 / (s * s)));
        Self::from_information(DMatrix::from_diagonal(&info))
    }

    pub fn isotropic(dim: usize, sigma: f64) -> Result<Self, NoiseError> {
        Self::diagonal(&vec![sigma; dim])
    }

    pub fn with_huber(mut self, delta: f64) -> Result<Self, NoiseError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(NoiseError::BadHuberDelta);
        }
        self.huber_delta = Some(delta);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.information.nrows()
    }

    pub fn information(&self) -> &DMatrix<f64> {
        &self.information
    }

    pub fn sqrt_information(&self) -> &DMatrix<f64> {
        &self.sqrt_information
    }

    pub fn huber_delta(&self) -> Option<f64> {
        self.huber_delta
    }

    pub fn squared_mahalanobis(&self, residual: &DVector<f64>) -> f64 {
        (&self.sqrt_information * residual).norm_squared()
    }

    /// Robust cost of a residual (plain squared Mahalanobis norm without a kernel).
    pub fn cost(&self, residual: &DVector<f64>) -> f64 {
        let s = self.squared_mahalanobis(residual);
        match self.huber_delta {
            Some(delta) => huber_cost(s, delta),
            None => s,
        }
    }

    /// IRLS weight for a residual.
    pub fn weight(&self, residual: &DVector<f64>) -> f64 {
        match self.huber_delta {
            Some(delta) => huber_weight(self.squared_mahalanobis(residual), delta),
            None => 1.0,
        }
    }
}

/// IRLS weight of the Huber kernel: 1 inside the quadratic zone, `delta / |e|` outside.
pub fn huber_weight(squared_mahalanobis: f64, delta: f64) -> f64 {
    let e = squared_mahalanobis.sqrt();
    if e <= delta {
        1.0
    } else {
        delta / e
    }
}

/// Huber cost on the squared error `s`: `s` when `sqrt(s) <= delta`, else `2 delta sqrt(s) - delta^2`.
pub fn huber_cost(squared_mahalanobis: f64, delta: f64) -> f64 {
    let e = squared_mahalanobis.sqrt();
    if e <= delta {
        squared_mahalanobis
    } else {
        2.0 * delta * e - delta * delta
    }
}
