//! The five chart kinds, produced as plain data.
//!
//! Every chart is a pure function of its inputs. Signals are decided by the
//! same rules the calibration module exposes, so a conformal score chart and
//! a p-value chart over the same stream flag exactly the same points.

use serde::{Deserialize, Serialize};

use crate::calibration::{
    conformal_p_value, conformal_quantile_index, validate_alpha, CalibrationModel,
};
use crate::data::{
    ensure_finite, mean, sample_std, ChartPoint, LabeledPoint, Observation, Record, Signal,
};
use crate::error::{Error, Result};
use crate::predictive::PredictiveModel;
use crate::scores::{prediction, prediction_with_spread, ScoreFunction, ScorerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Shewhart,
    ConformalScore,
    ConformalInterval,
    UncertaintySpike,
    PValue,
}

impl ChartKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChartKind::Shewhart => "shewhart",
            ChartKind::ConformalScore => "conformal_score",
            ChartKind::ConformalInterval => "conformal_interval",
            ChartKind::UncertaintySpike => "uncertainty_spike",
            ChartKind::PValue => "p_value",
        }
    }
}

/// Classical individuals-chart limits: mean ± 3 sample standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShewhartLimits {
    pub center: f64,
    pub ucl: f64,
    pub lcl: f64,
    pub sigma: f64,
}

impl ShewhartLimits {
    pub fn from_values(calibration: &[f64]) -> Result<Self> {
        if calibration.len() < 2 {
            return Err(Error::NeedTwoPoints(calibration.len()));
        }
        ensure_finite(calibration)?;
        let center = mean(calibration);
        let sigma = sample_std(calibration);
        Ok(Self {
            center,
            ucl: center + 3.0 * sigma,
            lcl: center - 3.0 * sigma,
            sigma,
        })
    }

    pub fn is_beyond(&self, value: f64) -> bool {
        value > self.ucl || value < self.lcl
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Limits {
    Shewhart(ShewhartLimits),
    /// Score threshold `q` (score and interval charts).
    Threshold {
        q: f64,
    },
    /// Score threshold plus the calibration interval-width threshold.
    Spike {
        q: f64,
        width_threshold: f64,
    },
    /// Flag level for p-values.
    PValue {
        level: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSeries {
    pub kind: ChartKind,
    pub points: Vec<ChartPoint>,
    pub alpha: Option<f64>,
    pub limits: Limits,
}

impl ChartSeries {
    pub fn flagged(&self) -> impl Iterator<Item = &ChartPoint> {
        self.points.iter().filter(|p| !p.signal.is_none())
    }

    pub fn limit_flag_count(&self) -> usize {
        self.points
            .iter()
            .filter(|p| p.signal.limit_exceeded)
            .count()
    }

    pub fn spike_flag_count(&self) -> usize {
        self.points
            .iter()
            .filter(|p| p.signal.uncertainty_spike)
            .count()
    }

    /// Recomputes a point's signal from the series limits and the plotted
    /// point alone.
    pub fn recompute_signal(&self, point: &ChartPoint) -> Signal {
        let outside_band = || match (point.lower, point.upper) {
            (Some(lo), Some(hi)) => point.value < lo || point.value > hi,
            _ => false,
        };
        match self.limits {
            Limits::Shewhart(l) => Signal::limit(l.is_beyond(point.value)),
            Limits::Threshold { q } => match self.kind {
                ChartKind::ConformalInterval => Signal::limit(outside_band()),
                _ => Signal::limit(point.value > q),
            },
            Limits::Spike {
                width_threshold, ..
            } => Signal {
                limit_exceeded: outside_band(),
                uncertainty_spike: match (point.lower, point.upper) {
                    (Some(lo), Some(hi)) => hi - lo > width_threshold,
                    _ => false,
                },
            },
            Limits::PValue { level } => Signal::limit(point.value <= level),
        }
    }
}

/// Shewhart individuals chart. Points strictly beyond either limit are
/// flagged.
pub fn shewhart_chart(calibration: &[Observation], stream: &[Observation]) -> Result<ChartSeries> {
    let values: Vec<f64> = calibration.iter().map(|o| o.value).collect();
    let limits = ShewhartLimits::from_values(&values)?;
    let points = stream
        .iter()
        .map(|o| ChartPoint {
            index: o.index,
            value: o.value,
            lower: None,
            upper: None,
            signal: Signal::limit(limits.is_beyond(o.value)),
        })
        .collect();
    Ok(ChartSeries {
        kind: ChartKind::Shewhart,
        points,
        alpha: None,
        limits: Limits::Shewhart(limits),
    })
}

/// One point per record with the score plotted against the limit `q`.
pub fn conformal_score_chart<S: ScoreFunction + ?Sized>(
    model: &CalibrationModel,
    scorer: &S,
    stream: &[Record],
) -> Result<ChartSeries> {
    model.check_scorer(scorer)?;
    let q = model.q();
    let points = stream
        .iter()
        .map(|r| {
            let score = scorer.score(r)?;
            Ok(ChartPoint {
                index: r.index(),
                value: score,
                lower: None,
                upper: None,
                signal: Signal::limit(score > q),
            })
        })
        .collect::<Result<_>>()?;
    Ok(ChartSeries {
        kind: ChartKind::ConformalScore,
        points,
        alpha: Some(model.alpha()),
        limits: Limits::Threshold { q },
    })
}

fn require_scorer(
    model: &CalibrationModel,
    kind: ScorerKind,
    predictive: &dyn PredictiveModel,
) -> Result<()> {
    let expected = format!("{}:{}", kind.as_str(), predictive.id());
    if model.scorer_id() != expected {
        return Err(Error::CalibrationMismatch {
            expected: model.scorer_id().to_string(),
            found: expected,
        });
    }
    Ok(())
}

/// Prediction-interval chart `[y_hat(x) - q, y_hat(x) + q]` for a model
/// calibrated on absolute residuals. A point is flagged when
/// `|y - y_hat(x)| > q`, which is the same as `y` leaving the band.
pub fn conformal_interval_chart(
    model: &CalibrationModel,
    predictive: &dyn PredictiveModel,
    stream: &[LabeledPoint],
) -> Result<ChartSeries> {
    require_scorer(model, ScorerKind::ModelResidual, predictive)?;
    let q = model.q();
    let points = stream
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let yhat = prediction(predictive, &p.x)?;
            Ok(ChartPoint {
                index: i as u64,
                value: p.y,
                lower: Some(yhat - q),
                upper: Some(yhat + q),
                signal: Signal::limit((p.y - yhat).abs() > q),
            })
        })
        .collect::<Result<_>>()?;
    Ok(ChartSeries {
        kind: ChartKind::ConformalInterval,
        points,
        alpha: Some(model.alpha()),
        limits: Limits::Threshold { q },
    })
}

/// Calibration interval-width threshold: the
/// `ceil((1 - width_alpha)(m + 1))`-th smallest of the `m` calibration widths
/// `2 q sigma_hat(x_i)`.
pub fn width_threshold(model: &CalibrationModel, width_alpha: f64) -> Result<f64> {
    validate_alpha(width_alpha)?;
    let spreads = model
        .spreads()
        .ok_or(Error::ChartRequires("normalized-residual"))?;
    let idx = conformal_quantile_index(spreads.len(), width_alpha)?;
    Ok(2.0 * model.q() * spreads[idx.k - 1])
}

/// Adaptive interval chart `y_hat(x) ± q sigma_hat(x)` for a model calibrated
/// on normalized residuals. Besides the limit signal, a point carries an
/// uncertainty spike when its interval is wider than the calibration width
/// threshold from [`width_threshold`].
pub fn uncertainty_spike_chart(
    model: &CalibrationModel,
    predictive: &dyn PredictiveModel,
    width_alpha: f64,
    stream: &[LabeledPoint],
) -> Result<ChartSeries> {
    require_scorer(model, ScorerKind::NormalizedResidual, predictive)?;
    let threshold = width_threshold(model, width_alpha)?;
    let q = model.q();
    let points = stream
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (yhat, spread) = prediction_with_spread(predictive, &p.x)?;
            let half = q * spread;
            Ok(ChartPoint {
                index: i as u64,
                value: p.y,
                lower: Some(yhat - half),
                upper: Some(yhat + half),
                signal: Signal {
                    limit_exceeded: (p.y - yhat).abs() / spread > q,
                    uncertainty_spike: 2.0 * q * spread > threshold,
                },
            })
        })
        .collect::<Result<_>>()?;
    Ok(ChartSeries {
        kind: ChartKind::UncertaintySpike,
        points,
        alpha: Some(model.alpha()),
        limits: Limits::Spike {
            q,
            width_threshold: threshold,
        },
    })
}

/// Level at which `p <= level` reproduces `score > q` for a model with `n`
/// calibration scores: `alpha` itself, or `1 / (n + 1)` when `alpha` is too
/// small for `n` and the quantile index clamps.
pub fn p_value_level(n: usize, alpha: f64) -> Result<f64> {
    let idx = conformal_quantile_index(n, alpha)?;
    Ok(if idx.clamped {
        alpha.max(1.0 / (n + 1) as f64)
    } else {
        alpha
    })
}

/// Conformal p-value chart. The plotted value is the p-value itself; points
/// at or below the level line are flagged.
pub fn p_value_chart<S: ScoreFunction + ?Sized>(
    model: &CalibrationModel,
    scorer: &S,
    alpha: f64,
    stream: &[Record],
) -> Result<ChartSeries> {
    model.check_scorer(scorer)?;
    let level = p_value_level(model.n(), alpha)?;
    let points = stream
        .iter()
        .map(|r| {
            let p = conformal_p_value(model, scorer.score(r)?)?;
            Ok(ChartPoint {
                index: r.index(),
                value: p,
                lower: None,
                upper: None,
                signal: Signal::limit(p <= level),
            })
        })
        .collect::<Result<_>>()?;
    Ok(ChartSeries {
        kind: ChartKind::PValue,
        points,
        alpha: Some(level),
        limits: Limits::PValue { level },
    })
}
