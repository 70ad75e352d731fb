//! Predictive models `y_hat(x)` with an optional local spread `sigma_hat(x)`.
//!
//! Conformal scoring is model agnostic, so [`PredictiveModel`] is a trait.
//! Two concrete models ship with the crate and can be persisted: an
//! ordinary least-squares fit and a k-nearest-neighbor regressor whose
//! spread is the sample standard deviation of the neighbors' responses.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{common_dimension, LabeledPoint};
use crate::error::{Error, Result};
use crate::neighbors::k_nearest;

/// Floor applied to the kNN spread so that it stays strictly positive.
pub const SPREAD_FLOOR: f64 = 1e-9;

pub trait PredictiveModel: Send + Sync + fmt::Debug {
    /// Stable identifier, used to re-attach external models after loading
    /// an archive.
    fn id(&self) -> String;

    fn predict(&self, x: &[f64]) -> f64;

    /// Local variability estimate. `None` when the model has no notion of it.
    fn spread(&self, x: &[f64]) -> Option<f64> {
        let _ = x;
        None
    }
}

/// Ordinary least squares `y = b0 + b1 x1 + ... + bd xd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeastSquares {
    /// Intercept first, then one slope per input dimension.
    pub coefficients: Vec<f64>,
}

impl LeastSquares {
    pub fn fit(points: &[LabeledPoint]) -> Result<Self> {
        let dim = common_dimension(points.iter().map(|p| p.x.as_slice()))?;
        if points.len() < dim + 1 {
            return Err(Error::InvalidParameter(format!(
                "least squares needs at least {} points, got {}",
                dim + 1,
                points.len()
            )));
        }
        let design = DMatrix::from_fn(points.len(), dim + 1, |r, c| {
            if c == 0 {
                1.0
            } else {
                points[r].x[c - 1]
            }
        });
        let target = DVector::from_iterator(points.len(), points.iter().map(|p| p.y));
        let beta = design
            .svd(true, true)
            .solve(&target, 1e-12)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let coefficients: Vec<f64> = beta.iter().copied().collect();
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::SingularCovariance);
        }
        Ok(Self { coefficients })
    }

    pub fn dimension(&self) -> usize {
        self.coefficients.len() - 1
    }
}

impl PredictiveModel for LeastSquares {
    fn id(&self) -> String {
        "least_squares".into()
    }

    fn predict(&self, x: &[f64]) -> f64 {
        if x.len() != self.dimension() {
            return f64::NAN;
        }
        self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }
}

/// k-nearest-neighbor regressor. The prediction is the mean of the
/// neighbors' `y`; the spread is their sample standard deviation, floored at
/// [`SPREAD_FLOOR`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnRegressor {
    pub k: usize,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
}

impl KnnRegressor {
    pub fn fit(points: &[LabeledPoint], k: usize) -> Result<Self> {
        common_dimension(points.iter().map(|p| p.x.as_slice()))?;
        if k < 2 {
            return Err(Error::InvalidParameter(
                "knn regressor needs k >= 2 for a spread estimate".into(),
            ));
        }
        if k > points.len() {
            return Err(Error::KTooLarge {
                k,
                available: points.len(),
            });
        }
        Ok(Self {
            k,
            xs: points.iter().map(|p| p.x.clone()).collect(),
            ys: points.iter().map(|p| p.y).collect(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.xs[0].len()
    }

    fn neighbor_ys(&self, x: &[f64]) -> Option<Vec<f64>> {
        if x.len() != self.dimension() {
            return None;
        }
        Some(
            k_nearest(&self.xs, x, self.k)
                .into_iter()
                .map(|(i, _)| self.ys[i])
                .collect(),
        )
    }
}

impl PredictiveModel for KnnRegressor {
    fn id(&self) -> String {
        "knn".into()
    }

    fn predict(&self, x: &[f64]) -> f64 {
        match self.neighbor_ys(x) {
            Some(ys) => crate::data::mean(&ys),
            None => f64::NAN,
        }
    }

    fn spread(&self, x: &[f64]) -> Option<f64> {
        let ys = self.neighbor_ys(x)?;
        Some(crate::data::sample_std(&ys).max(SPREAD_FLOOR))
    }
}

/// Handle to the model behind a residual scorer. Shipped kinds persist with
/// their parameters; external models persist only their identifier and must
/// be re-attached on load.
#[derive(Debug, Clone)]
pub enum Predictor {
    LeastSquares(LeastSquares),
    Knn(KnnRegressor),
    External(Arc<dyn PredictiveModel>),
}

impl Predictor {
    pub fn as_model(&self) -> &dyn PredictiveModel {
        match self {
            Predictor::LeastSquares(m) => m,
            Predictor::Knn(m) => m,
            Predictor::External(m) => m.as_ref(),
        }
    }
}

impl PredictiveModel for Predictor {
    fn id(&self) -> String {
        self.as_model().id()
    }

    fn predict(&self, x: &[f64]) -> f64 {
        self.as_model().predict(x)
    }

    fn spread(&self, x: &[f64]) -> Option<f64> {
        self.as_model().spread(x)
    }
}

impl PartialEq for Predictor {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Predictor::LeastSquares(a), Predictor::LeastSquares(b)) => a == b,
            (Predictor::Knn(a), Predictor::Knn(b)) => a == b,
            (Predictor::External(a), Predictor::External(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl From<LeastSquares> for Predictor {
    fn from(m: LeastSquares) -> Self {
        Predictor::LeastSquares(m)
    }
}

impl From<KnnRegressor> for Predictor {
    fn from(m: KnnRegressor) -> Self {
        Predictor::Knn(m)
    }
}
