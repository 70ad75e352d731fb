//! Nonconformity scores.
//!
//! Three median-referenced scores cover individuals, subgroup means and
//! subgroup ranges. Two model-based scores cover the absolute residual
//! `|y - y_hat(x)|` and the normalized residual `|y - y_hat(x)| / sigma_hat(x)`.
//! The reference (median or model) is frozen when the scorer is fitted and
//! never changes afterwards.
//!
//! The median is the only central-tendency reference exposed. Another
//! location estimate could be substituted in the `fit_*` constructors
//! without touching the calibration machinery.

use serde::{Deserialize, Serialize};

use crate::data::{median, LabeledPoint, Observation, Record, Subgroup};
use crate::error::{Error, Result};
use crate::predictive::{PredictiveModel, Predictor};

/// Maps a record to a non-negative, finite score. Larger is more anomalous.
pub trait ScoreFunction {
    /// Identifier recorded in a calibration model so that a stream is only
    /// ever scored by the scorer it was calibrated with.
    fn scorer_id(&self) -> String;

    /// Frozen location reference, when the scorer has one.
    fn center(&self) -> Option<f64> {
        None
    }

    fn score(&self, record: &Record) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    IndividualMedian,
    SubgroupMeanMedian,
    SubgroupRangeMedian,
    ModelResidual,
    NormalizedResidual,
}

impl ScorerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScorerKind::IndividualMedian => "individual_median",
            ScorerKind::SubgroupMeanMedian => "subgroup_mean_median",
            ScorerKind::SubgroupRangeMedian => "subgroup_range_median",
            ScorerKind::ModelResidual => "model_residual",
            ScorerKind::NormalizedResidual => "normalized_residual",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NonconformityScorer {
    IndividualMedian { center: f64 },
    SubgroupMeanMedian { center: f64 },
    SubgroupRangeMedian { center: f64 },
    ModelResidual { model: Predictor },
    NormalizedResidual { model: Predictor },
}

fn non_empty<T>(items: &[T]) -> Result<()> {
    if items.is_empty() {
        Err(Error::EmptyCalibration)
    } else {
        Ok(())
    }
}

impl NonconformityScorer {
    /// `s(X) = |X - median(calibration)|`.
    pub fn fit_individual(calibration: &[Observation]) -> Result<Self> {
        non_empty(calibration)?;
        let values: Vec<f64> = calibration.iter().map(|o| o.value).collect();
        Ok(Self::IndividualMedian {
            center: median(&values)?,
        })
    }

    /// `s(g) = |mean(g) - median of calibration subgroup means|`.
    pub fn fit_subgroup_mean(calibration: &[Subgroup]) -> Result<Self> {
        non_empty(calibration)?;
        let means: Vec<f64> = calibration.iter().map(Subgroup::mean).collect();
        Ok(Self::SubgroupMeanMedian {
            center: median(&means)?,
        })
    }

    /// `s(g) = |range(g) - median of calibration subgroup ranges|`.
    pub fn fit_subgroup_range(calibration: &[Subgroup]) -> Result<Self> {
        non_empty(calibration)?;
        let ranges: Vec<f64> = calibration.iter().map(Subgroup::range).collect();
        Ok(Self::SubgroupRangeMedian {
            center: median(&ranges)?,
        })
    }

    /// `s(x, y) = |y - y_hat(x)|`.
    pub fn fit_model_residual(model: impl Into<Predictor>) -> Self {
        Self::ModelResidual {
            model: model.into(),
        }
    }

    /// `s(x, y) = |y - y_hat(x)| / sigma_hat(x)`. The model must provide a
    /// spread; a missing or non-positive spread is reported at scoring time.
    pub fn fit_normalized_residual(model: impl Into<Predictor>) -> Self {
        Self::NormalizedResidual {
            model: model.into(),
        }
    }

    pub fn kind(&self) -> ScorerKind {
        match self {
            Self::IndividualMedian { .. } => ScorerKind::IndividualMedian,
            Self::SubgroupMeanMedian { .. } => ScorerKind::SubgroupMeanMedian,
            Self::SubgroupRangeMedian { .. } => ScorerKind::SubgroupRangeMedian,
            Self::ModelResidual { .. } => ScorerKind::ModelResidual,
            Self::NormalizedResidual { .. } => ScorerKind::NormalizedResidual,
        }
    }

    pub fn predictor(&self) -> Option<&Predictor> {
        match self {
            Self::ModelResidual { model } | Self::NormalizedResidual { model } => Some(model),
            _ => None,
        }
    }

    fn mismatch(&self, found: &str) -> Error {
        Error::CalibrationMismatch {
            expected: self.scorer_id(),
            found: found.to_string(),
        }
    }

    pub fn score_value(&self, value: f64) -> Result<f64> {
        match self {
            Self::IndividualMedian { center } => {
                crate::data::ensure_finite(&[value])?;
                Ok((value - center).abs())
            }
            _ => Err(self.mismatch("individual value")),
        }
    }

    pub fn score_subgroup(&self, group: &Subgroup) -> Result<f64> {
        match self {
            Self::SubgroupMeanMedian { center } => Ok((group.mean() - center).abs()),
            Self::SubgroupRangeMedian { center } => Ok((group.range() - center).abs()),
            _ => Err(self.mismatch("subgroup")),
        }
    }

    pub fn score_pair(&self, point: &LabeledPoint) -> Result<f64> {
        match self {
            Self::ModelResidual { model } => Ok((point.y - prediction(model, &point.x)?).abs()),
            Self::NormalizedResidual { model } => {
                let (yhat, spread) = prediction_with_spread(model, &point.x)?;
                Ok((point.y - yhat).abs() / spread)
            }
            _ => Err(self.mismatch("labeled point")),
        }
    }
}

/// `y_hat(x)`, rejecting non-finite model output.
pub fn prediction(model: &dyn PredictiveModel, x: &[f64]) -> Result<f64> {
    let yhat = model.predict(x);
    if yhat.is_finite() {
        Ok(yhat)
    } else {
        Err(Error::ModelOutputInvalid(yhat))
    }
}

/// `(y_hat(x), sigma_hat(x))`, rejecting a missing, non-positive or
/// non-finite spread.
pub fn prediction_with_spread(model: &dyn PredictiveModel, x: &[f64]) -> Result<(f64, f64)> {
    let yhat = prediction(model, x)?;
    match model.spread(x) {
        Some(s) if s.is_finite() && s > 0.0 => Ok((yhat, s)),
        Some(s) => Err(Error::InvalidSpread(s)),
        None => Err(Error::InvalidSpread(f64::NAN)),
    }
}

impl ScoreFunction for NonconformityScorer {
    fn scorer_id(&self) -> String {
        match self.predictor() {
            Some(model) => format!("{}:{}", self.kind().as_str(), model.id()),
            None => self.kind().as_str().to_string(),
        }
    }

    fn center(&self) -> Option<f64> {
        match self {
            Self::IndividualMedian { center }
            | Self::SubgroupMeanMedian { center }
            | Self::SubgroupRangeMedian { center } => Some(*center),
            _ => None,
        }
    }

    fn score(&self, record: &Record) -> Result<f64> {
        match record {
            Record::Individual(o) => self.score_value(o.value),
            Record::Subgroup(g) => self.score_subgroup(g),
            Record::Labeled { point, .. } => self.score_pair(point),
            Record::Vector(_) => Err(self.mismatch("process vector")),
        }
    }
}
