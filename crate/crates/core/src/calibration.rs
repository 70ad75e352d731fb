//! Conformal control limits.
//!
//! Given `n` in-control scores and a false-alarm rate `alpha`, the control
//! limit `q` is the `k`-th smallest score with `k = ceil((1 - alpha)(n + 1))`.
//! A new point is out of control when its score is strictly greater than
//! `q`. The matching conformal p-value is `(1 + #{s_i >= s}) / (n + 1)`, and
//! for every unclamped model `s > q` holds exactly when `p <= alpha`.
//!
//! When `k > n` the calibration set is too small for the requested `alpha`
//! (`n < (1 - alpha) / alpha`). The index is clamped to `n`, so `q` becomes
//! the largest score and the achievable false-alarm level rises to
//! `1 / (n + 1)`; see [`CalibrationModel::effective_alpha`].

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ensure_finite, Record};
use crate::error::{Error, Result};
use crate::scores::ScoreFunction;

/// Result of [`conformal_quantile_index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantileIndex {
    /// One-based rank into the sorted scores.
    pub k: usize,
    /// Set when `ceil((1 - alpha)(n + 1)) > n` and `k` was clamped to `n`.
    pub clamped: bool,
}

pub fn validate_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// `floor(alpha * m)`, snapping products that sit within rounding error of
/// an integer onto it so that decimal alphas such as `0.29` behave as
/// written.
fn floor_alpha_times(alpha: f64, m: usize) -> usize {
    let x = alpha * m as f64;
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        x.floor() as usize
    }
}

/// `k = ceil((1 - alpha)(n + 1))`, clamped to `n`.
///
/// Uses the identity `ceil((1 - alpha) m) = m - floor(alpha m)` for integer
/// `m = n + 1`.
pub fn conformal_quantile_index(n: usize, alpha: f64) -> Result<QuantileIndex> {
    validate_alpha(alpha)?;
    if n == 0 {
        return Err(Error::EmptyCalibration);
    }
    let m = n + 1;
    let k = m - floor_alpha_times(alpha, m);
    Ok(if k > n {
        QuantileIndex {
            k: n,
            clamped: true,
        }
    } else {
        QuantileIndex { k, clamped: false }
    })
}

/// Smallest calibration size for which `alpha` does not clamp:
/// `ceil((1 - alpha) / alpha)`.
pub fn required_calibration_size(alpha: f64) -> Result<usize> {
    validate_alpha(alpha)?;
    // smallest n with floor(alpha (n + 1)) >= 1
    let mut n = ((1.0 - alpha) / alpha).ceil().max(1.0) as usize;
    while n > 1 && !conformal_quantile_index(n - 1, alpha)?.clamped {
        n -= 1;
    }
    while conformal_quantile_index(n, alpha)?.clamped {
        n += 1;
    }
    Ok(n)
}

/// Frozen in-control score distribution together with its control limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    scores: Vec<f64>,
    alpha: f64,
    k: usize,
    q: f64,
    clamped: bool,
    center: Option<f64>,
    scorer_id: String,
    /// Sorted calibration spreads `sigma_hat(x_i)`, kept for normalized
    /// residual scorers so that interval widths can be thresholded later.
    spreads: Option<Vec<f64>>,
}

/// Builds the model from raw scores. The scorer identity is recorded as
/// `"scores"`; use [`calibrate`] to fit from records with a scorer.
pub fn fit(scores: &[f64], alpha: f64) -> Result<CalibrationModel> {
    CalibrationModel::from_parts(scores.to_vec(), alpha, "scores".into(), None, None)
}

impl CalibrationModel {
    pub(crate) fn from_parts(
        mut scores: Vec<f64>,
        alpha: f64,
        scorer_id: String,
        center: Option<f64>,
        spreads: Option<Vec<f64>>,
    ) -> Result<Self> {
        validate_alpha(alpha)?;
        if scores.is_empty() {
            return Err(Error::EmptyCalibration);
        }
        ensure_finite(&scores)?;
        if let Some(&neg) = scores.iter().find(|s| **s < 0.0) {
            return Err(Error::NegativeScore(neg));
        }
        scores.sort_by(f64::total_cmp);
        let QuantileIndex { k, clamped } = conformal_quantile_index(scores.len(), alpha)?;
        let spreads = spreads.map(|mut s| {
            s.sort_by(f64::total_cmp);
            s
        });
        Ok(Self {
            q: scores[k - 1],
            scores,
            alpha,
            k,
            clamped,
            center,
            scorer_id,
            spreads,
        })
    }

    /// Rebuilds a model from persisted fields, checking every invariant.
    pub(crate) fn restore(
        scores: Vec<f64>,
        alpha: f64,
        q: f64,
        scorer_id: String,
        center: Option<f64>,
        spreads: Option<Vec<f64>>,
    ) -> std::result::Result<Self, String> {
        if scores.windows(2).any(|w| w[0] > w[1]) {
            return Err("scores are not sorted".into());
        }
        if let Some(s) = &spreads {
            if s.windows(2).any(|w| w[0] > w[1]) || s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err("spreads are not sorted positive values".into());
            }
        }
        let model = Self::from_parts(scores, alpha, scorer_id, center, spreads)
            .map_err(|e| e.to_string())?;
        if model.q.to_bits() != q.to_bits() {
            return Err(format!(
                "q={q} is not the k={}-th smallest score {}",
                model.k, model.q
            ));
        }
        Ok(model)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// The control limit.
    pub fn q(&self) -> f64 {
        self.q
    }

    /// Whether `k` was clamped because the calibration set is too small.
    pub fn is_clamped(&self) -> bool {
        self.clamped
    }

    pub fn center(&self) -> Option<f64> {
        self.center
    }

    pub fn scorer_id(&self) -> &str {
        &self.scorer_id
    }

    pub fn spreads(&self) -> Option<&[f64]> {
        self.spreads.as_deref()
    }

    /// The level at which the p-value rule reproduces the threshold rule:
    /// `alpha`, or `1 / (n + 1)` when the quantile index was clamped.
    pub fn effective_alpha(&self) -> f64 {
        if self.clamped {
            self.alpha.max(1.0 / (self.n() + 1) as f64)
        } else {
            self.alpha
        }
    }

    /// Human-readable warning for a clamped model.
    pub fn clamp_warning(&self) -> Option<String> {
        if !self.clamped {
            return None;
        }
        let needed = required_calibration_size(self.alpha).unwrap_or(usize::MAX);
        Some(format!(
            "calibration set too small for alpha={}: n={} but the guarantee requires n >= {}; \
             q is the largest calibration score and the false-alarm level rises to 1/(n+1)={:.6}",
            self.alpha,
            self.n(),
            needed,
            1.0 / (self.n() + 1) as f64
        ))
    }

    /// Number of calibration scores `>= score`.
    fn count_at_least(&self, score: f64) -> usize {
        let below = self.scores.partition_point(|s| *s < score);
        self.scores.len() - below
    }

    /// Fails unless `scorer` is the one this model was calibrated with.
    pub fn check_scorer<S: ScoreFunction + ?Sized>(&self, scorer: &S) -> Result<()> {
        let id = scorer.scorer_id();
        let center_matches = match (self.center, scorer.center()) {
            (Some(a), Some(b)) => a.to_bits() == b.to_bits(),
            (None, None) => true,
            _ => false,
        };
        if id != self.scorer_id || !center_matches {
            return Err(Error::CalibrationMismatch {
                expected: self.scorer_id.clone(),
                found: id,
            });
        }
        Ok(())
    }
}

fn validate_score(score: f64) -> Result<()> {
    ensure_finite(&[score])?;
    if score < 0.0 {
        return Err(Error::NegativeScore(score));
    }
    Ok(())
}

/// `score > q`. Ties with the limit are in control.
pub fn is_out_of_control(model: &CalibrationModel, score: f64) -> Result<bool> {
    validate_score(score)?;
    Ok(score > model.q)
}

/// `(1 + #{i : s_i >= score}) / (n + 1)`, in `(0, 1]`.
pub fn conformal_p_value(model: &CalibrationModel, score: f64) -> Result<f64> {
    validate_score(score)?;
    Ok((1 + model.count_at_least(score)) as f64 / (model.n() + 1) as f64)
}

/// Scores every calibration record with `scorer` and fits the control limit.
/// Records the scorer identity, its frozen center and, for normalized
/// residual scorers, the calibration spreads.
pub fn calibrate<S: ScoreFunction + ?Sized>(
    scorer: &S,
    calibration: &[Record],
    alpha: f64,
) -> Result<CalibrationModel> {
    if calibration.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let scores = calibration
        .iter()
        .map(|r| scorer.score(r))
        .collect::<Result<Vec<_>>>()?;
    CalibrationModel::from_parts(scores, alpha, scorer.scorer_id(), scorer.center(), None)
}

/// Like [`calibrate`] for a normalized residual scorer, additionally keeping
/// the calibration spreads used by the uncertainty-spike chart.
pub fn calibrate_normalized(
    scorer: &crate::scores::NonconformityScorer,
    calibration: &[crate::data::LabeledPoint],
    alpha: f64,
) -> Result<CalibrationModel> {
    let model = match scorer {
        crate::scores::NonconformityScorer::NormalizedResidual { model } => model,
        other => {
            return Err(Error::CalibrationMismatch {
                expected: "normalized_residual".into(),
                found: other.scorer_id(),
            })
        }
    };
    if calibration.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let mut scores = Vec::with_capacity(calibration.len());
    let mut spreads = Vec::with_capacity(calibration.len());
    for p in calibration {
        let (yhat, spread) = crate::scores::prediction_with_spread(model, &p.x)?;
        scores.push((p.y - yhat).abs() / spread);
        spreads.push(spread);
    }
    CalibrationModel::from_parts(scores, alpha, scorer.scorer_id(), None, Some(spreads))
}

/// Inductive split parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            seed: 0,
        }
    }
}

/// Seeded shuffle into a proper training set of `floor(f N)` items and a
/// calibration set with the rest. The shuffle is a ChaCha8 Fisher-Yates
/// permutation, so partitions are reproducible across platforms.
pub fn split<T: Clone>(data: &[T], spec: SplitSpec) -> Result<(Vec<T>, Vec<T>)> {
    let len = data.len();
    let f = spec.train_fraction;
    let n_train = if f > 0.0 && f < 1.0 {
        (f * len as f64).floor() as usize
    } else {
        0
    };
    if n_train == 0 || n_train == len {
        return Err(Error::SplitTooExtreme { fraction: f, len });
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let train = order[..n_train].iter().map(|&i| data[i].clone()).collect();
    let calib = order[n_train..].iter().map(|&i| data[i].clone()).collect();
    Ok((train, calib))
}
