//! Multivariate monitoring as conformal anomaly detection.
//!
//! An unsupervised detector is trained on in-control process vectors, its
//! anomaly scores are calibrated on a disjoint in-control set, and new
//! vectors are monitored through conformal p-values. The false-alarm bound
//! does not depend on how good the detector is; a better detector only buys
//! power.
//!
//! Two detectors ship: mean distance to the `k` nearest training vectors,
//! and a ridge-regularized Mahalanobis distance. Any type implementing
//! [`AnomalyDetector`] can be calibrated and monitored the same way.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, CalibrationModel};
use crate::charts::{p_value_chart, ChartSeries};
use crate::data::{common_dimension, ProcessVector, Record};
use crate::error::{Error, Result};
use crate::neighbors::k_nearest;
use crate::scores::ScoreFunction;

pub const DEFAULT_K: usize = 5;

/// Relative ridge used when none is given: `1e-6 * trace(cov) / d`.
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-6;

pub trait AnomalyDetector {
    /// Identifier recorded in the calibration model.
    fn detector_id(&self) -> String;

    fn dimension(&self) -> usize;

    /// Non-negative anomaly score of one vector.
    fn score_vector(&self, v: &[f64]) -> Result<f64>;

    fn check_dimension(&self, v: &[f64]) -> Result<()> {
        if v.len() == self.dimension() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: v.len(),
            })
        }
    }
}

impl<D: AnomalyDetector + ?Sized> ScoreFunction for D {
    fn scorer_id(&self) -> String {
        self.detector_id()
    }

    fn score(&self, record: &Record) -> Result<f64> {
        match record {
            Record::Vector(v) => self.score_vector(&v.components),
            _ => Err(Error::CalibrationMismatch {
                expected: self.detector_id(),
                found: "non-vector record".into(),
            }),
        }
    }
}

/// Mean Euclidean distance to the `k` nearest training vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnDetector {
    k: usize,
    reference: Vec<Vec<f64>>,
}

impl KnnDetector {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn reference(&self) -> &[Vec<f64>] {
        &self.reference
    }

    pub(crate) fn from_parts(k: usize, reference: Vec<Vec<f64>>) -> Result<Self> {
        common_dimension(reference.iter().map(Vec::as_slice))?;
        if k == 0 || k > reference.len() {
            return Err(Error::KTooLarge {
                k,
                available: reference.len(),
            });
        }
        crate::data::ensure_finite(&reference.concat())?;
        Ok(Self { k, reference })
    }
}

impl AnomalyDetector for KnnDetector {
    fn detector_id(&self) -> String {
        format!("knn_distance(k={})", self.k)
    }

    fn dimension(&self) -> usize {
        self.reference[0].len()
    }

    fn score_vector(&self, v: &[f64]) -> Result<f64> {
        self.check_dimension(v)?;
        crate::data::ensure_finite(v)?;
        let nn = k_nearest(&self.reference, v, self.k);
        Ok(nn.iter().map(|(_, d)| d).sum::<f64>() / nn.len() as f64)
    }
}

/// `sqrt((v - mean)^T (cov + ridge I)^-1 (v - mean))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MahalanobisDetector {
    mean: Vec<f64>,
    /// Row-major `(cov + ridge I)^-1`.
    precision: Vec<Vec<f64>>,
    ridge: f64,
}

impl MahalanobisDetector {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn precision(&self) -> &[Vec<f64>] {
        &self.precision
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub(crate) fn from_parts(mean: Vec<f64>, precision: Vec<Vec<f64>>, ridge: f64) -> Result<Self> {
        let d = mean.len();
        if d == 0 || precision.len() != d || precision.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: precision.len(),
            });
        }
        crate::data::ensure_finite(&mean)?;
        crate::data::ensure_finite(&precision.concat())?;
        Ok(Self {
            mean,
            precision,
            ridge,
        })
    }
}

impl AnomalyDetector for MahalanobisDetector {
    fn detector_id(&self) -> String {
        "mahalanobis".into()
    }

    fn dimension(&self) -> usize {
        self.mean.len()
    }

    fn score_vector(&self, v: &[f64]) -> Result<f64> {
        self.check_dimension(v)?;
        crate::data::ensure_finite(v)?;
        let dev: Vec<f64> = v.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let quad: f64 = self
            .precision
            .iter()
            .zip(&dev)
            .map(|(row, di)| di * row.iter().zip(&dev).map(|(p, dj)| p * dj).sum::<f64>())
            .sum();
        Ok(quad.max(0.0).sqrt())
    }
}

/// The shipped detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detector {
    KnnDistance(KnnDetector),
    Mahalanobis(MahalanobisDetector),
}

impl AnomalyDetector for Detector {
    fn detector_id(&self) -> String {
        match self {
            Detector::KnnDistance(d) => d.detector_id(),
            Detector::Mahalanobis(d) => d.detector_id(),
        }
    }

    fn dimension(&self) -> usize {
        match self {
            Detector::KnnDistance(d) => d.dimension(),
            Detector::Mahalanobis(d) => d.dimension(),
        }
    }

    fn score_vector(&self, v: &[f64]) -> Result<f64> {
        match self {
            Detector::KnnDistance(d) => d.score_vector(v),
            Detector::Mahalanobis(d) => d.score_vector(v),
        }
    }
}

fn components(vectors: &[ProcessVector]) -> Result<(Vec<Vec<f64>>, usize)> {
    let dim = common_dimension(vectors.iter().map(|v| v.components.as_slice()))?;
    Ok((vectors.iter().map(|v| v.components.clone()).collect(), dim))
}

pub fn train_knn(train: &[ProcessVector], k: usize) -> Result<Detector> {
    if train.is_empty() {
        return Err(Error::EmptySample);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let (reference, _) = components(train)?;
    Ok(Detector::KnnDistance(KnnDetector::from_parts(
        k, reference,
    )?))
}

/// Sample mean and covariance (`n - 1` denominator).
pub fn mean_and_covariance(train: &[ProcessVector]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if train.len() < 2 {
        return Err(Error::NeedTwoPoints(train.len()));
    }
    let (rows, d) = components(train)?;
    let n = rows.len();
    let data = DMatrix::from_fn(n, d, |r, c| rows[r][c]);
    let mean = DVector::from_fn(d, |c, _| data.column(c).sum() / n as f64);
    let centered = DMatrix::from_fn(n, d, |r, c| data[(r, c)] - mean[c]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    Ok((mean, cov))
}

/// Trains the Mahalanobis detector. `ridge = None` uses
/// `DEFAULT_RIDGE_SCALE * trace(cov) / d`.
pub fn train_mahalanobis(train: &[ProcessVector], ridge: Option<f64>) -> Result<Detector> {
    let (mean, cov) = mean_and_covariance(train)?;
    let d = mean.len();
    let ridge = match ridge {
        Some(r) if r.is_finite() && r >= 0.0 => r,
        Some(r) => {
            return Err(Error::InvalidParameter(format!(
                "ridge must be >= 0, got {r}"
            )))
        }
        None => DEFAULT_RIDGE_SCALE * cov.trace() / d as f64,
    };
    let regularized = cov + DMatrix::identity(d, d) * ridge;
    let inverse = match regularized.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => regularized.try_inverse().ok_or(Error::SingularCovariance)?,
    };
    if inverse.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularCovariance);
    }
    let precision = (0..d)
        .map(|r| (0..d).map(|c| inverse[(r, c)]).collect())
        .collect();
    Ok(Detector::Mahalanobis(MahalanobisDetector::from_parts(
        mean.iter().copied().collect(),
        precision,
        ridge,
    )?))
}

fn vector_records(vectors: &[ProcessVector]) -> Vec<Record> {
    vectors.iter().cloned().map(Record::Vector).collect()
}

/// Calibrates detector scores on in-control vectors that were not used for
/// training. Disjointness is the caller's contract; [`crate::calibration::split`]
/// provides it.
pub fn calibrate_detector<D: AnomalyDetector + ?Sized>(
    detector: &D,
    calib: &[ProcessVector],
    alpha: f64,
) -> Result<CalibrationModel> {
    calibrate(detector, &vector_records(calib), alpha)
}

/// Conformal p-value chart over detector scores. The process is in control
/// while every p-value stays above the level line.
pub fn monitor<D: AnomalyDetector + ?Sized>(
    detector: &D,
    model: &CalibrationModel,
    stream: &[ProcessVector],
    alpha: f64,
) -> Result<ChartSeries> {
    p_value_chart(model, detector, alpha, &vector_records(stream))
}
