//! Seeded simulation of in-control processes with an injected shift, and
//! Monte-Carlo comparison of the Shewhart and conformal charts.
//!
//! All randomness comes from `ChaCha8Rng`. Repetition `r` of a spec with
//! seed `s` draws from `ChaCha8Rng::seed_from_u64(s)` on stream `r`, so
//! repetitions are independent, order-free and identical whether run
//! serially or in parallel.
//!
//! The regression scenarios draw `y = mean + SLOPE * x + noise`. In-control
//! operation keeps `x` in `[0, 1)`. The region `x >= 1` is noisier by the
//! noise-shift factor; the predictive model's training sweep covers `[0, 2)`
//! so that its spread estimate knows about it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, calibrate_normalized};
use crate::charts::{conformal_score_chart, shewhart_chart, uncertainty_spike_chart, ChartSeries};
use crate::data::{LabeledPoint, Observation, Record};
use crate::error::{Error, Result};
use crate::predictive::KnnRegressor;
use crate::scores::NonconformityScorer;

/// Response slope of the regression scenarios.
pub const SLOPE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Normal {
        mu: f64,
        sigma: f64,
    },
    Exponential {
        rate: f64,
    },
    /// `weight * N(mu1, sigma) + (1 - weight) * N(mu2, sigma)`.
    Bimodal {
        mu1: f64,
        mu2: f64,
        sigma: f64,
        weight: f64,
    },
}

impl Generator {
    pub fn mean(&self) -> f64 {
        match *self {
            Generator::Normal { mu, .. } => mu,
            Generator::Exponential { rate } => 1.0 / rate,
            Generator::Bimodal {
                mu1, mu2, weight, ..
            } => weight * mu1 + (1.0 - weight) * mu2,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        match *self {
            Generator::Normal { mu, sigma } => {
                if !(mu.is_finite() && sigma.is_finite() && sigma > 0.0) {
                    return bad("normal generator needs finite mu and sigma > 0");
                }
            }
            Generator::Exponential { rate } => {
                if !(rate.is_finite() && rate > 0.0) {
                    return bad("exponential generator needs rate > 0");
                }
            }
            Generator::Bimodal {
                mu1,
                mu2,
                sigma,
                weight,
            } => {
                if !(mu1.is_finite() && mu2.is_finite() && sigma.is_finite() && sigma > 0.0) {
                    return bad("bimodal generator needs finite means and sigma > 0");
                }
                if !(weight > 0.0 && weight < 1.0) {
                    return bad("bimodal weight must lie in (0, 1)");
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Generator::Normal { mu, sigma } => {
                Normal::new(mu, sigma).expect("validated").sample(rng)
            }
            Generator::Exponential { rate } => Exp::new(rate).expect("validated").sample(rng),
            Generator::Bimodal {
                mu1,
                mu2,
                sigma,
                weight,
            } => {
                let mu = if rng.random::<f64>() < weight {
                    mu1
                } else {
                    mu2
                };
                Normal::new(mu, sigma).expect("validated").sample(rng)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShiftKind {
    /// Adds `delta` to every draw.
    MeanShift { delta: f64 },
    /// Scales deviations from the generator mean by `factor`.
    ScaleShift { factor: f64 },
    /// Regression scenarios only: `x` moves into the region where the noise
    /// is multiplied by `factor`, while the response stays on target.
    NoiseShift { factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    pub onset_index: usize,
    pub kind: ShiftKind,
}

impl Shift {
    pub fn none() -> Self {
        Shift {
            onset_index: 0,
            kind: ShiftKind::MeanShift { delta: 0.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub generator: Generator,
    pub n_calibration: usize,
    pub n_stream: usize,
    pub shift: Shift,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        if self.n_calibration == 0 {
            return Err(Error::EmptyCalibration);
        }
        if self.shift.onset_index > self.n_stream {
            return Err(Error::InvalidParameter(format!(
                "onset index {} beyond stream length {}",
                self.shift.onset_index, self.n_stream
            )));
        }
        let factor_ok = |f: f64| f.is_finite() && f > 0.0;
        match self.shift.kind {
            ShiftKind::MeanShift { delta } if !delta.is_finite() => {
                Err(Error::InvalidParameter("shift delta must be finite".into()))
            }
            ShiftKind::ScaleShift { factor } | ShiftKind::NoiseShift { factor }
                if !factor_ok(factor) =>
            {
                Err(Error::InvalidParameter("shift factor must be > 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// The generator for repetition `rep`.
    pub fn rng(&self, rep: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep);
        rng
    }
}

/// Calibration and monitoring streams of repetition 0.
pub fn generate(spec: &SimulationSpec) -> Result<(Vec<Observation>, Vec<Observation>)> {
    generate_repetition(spec, 0)
}

/// Calibration and monitoring streams of one repetition. The shift applies
/// to stream indices `>= onset_index`.
pub fn generate_repetition(
    spec: &SimulationSpec,
    rep: u64,
) -> Result<(Vec<Observation>, Vec<Observation>)> {
    spec.validate()?;
    if let ShiftKind::NoiseShift { .. } = spec.shift.kind {
        return Err(Error::InvalidParameter(
            "noise shift applies to the regression scenario; use generate_labeled".into(),
        ));
    }
    let mut rng = spec.rng(rep);
    let g = spec.generator;
    let calibration = (0..spec.n_calibration)
        .map(|i| Observation::new(i as u64, g.sample(&mut rng)))
        .collect::<Result<Vec<_>>>()?;
    let center = g.mean();
    let stream = (0..spec.n_stream)
        .map(|i| {
            let x = g.sample(&mut rng);
            let value = if i < spec.shift.onset_index {
                x
            } else {
                match spec.shift.kind {
                    ShiftKind::MeanShift { delta } => x + delta,
                    ShiftKind::ScaleShift { factor } => center + factor * (x - center),
                    ShiftKind::NoiseShift { .. } => unreachable!(),
                }
            };
            Observation::new(i as u64, value)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((calibration, stream))
}

/// Training, calibration and monitoring sets of the regression scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScenario {
    pub train: Vec<LabeledPoint>,
    pub calibration: Vec<LabeledPoint>,
    pub stream: Vec<LabeledPoint>,
}

/// Regression scenario for interval and uncertainty-spike charts. Training
/// and calibration sets both have `n_calibration` points.
pub fn generate_labeled(spec: &SimulationSpec, rep: u64) -> Result<LabeledScenario> {
    spec.validate()?;
    let mut rng = spec.rng(rep);
    let g = spec.generator;
    let center = g.mean();
    let noise_factor = match spec.shift.kind {
        ShiftKind::NoiseShift { factor } => factor,
        _ => 1.0,
    };
    let explores_noisy_region = matches!(spec.shift.kind, ShiftKind::NoiseShift { .. });
    let draw = |rng: &mut ChaCha8Rng, x: f64, noise_scale: f64, offset: f64| {
        let region = if x >= 1.0 { noise_factor } else { 1.0 };
        let noise = (g.sample(rng) - center) * region * noise_scale;
        LabeledPoint::new(vec![x], center + SLOPE * x + noise + offset)
    };
    let train_span = if explores_noisy_region { 2.0 } else { 1.0 };
    let train = (0..spec.n_calibration)
        .map(|_| {
            let x = rng.random::<f64>() * train_span;
            draw(&mut rng, x, 1.0, 0.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let calibration = (0..spec.n_calibration)
        .map(|_| {
            let x = rng.random::<f64>();
            draw(&mut rng, x, 1.0, 0.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let stream = (0..spec.n_stream)
        .map(|i| {
            let shifted = i >= spec.shift.onset_index;
            let u = rng.random::<f64>();
            match (shifted, spec.shift.kind) {
                (true, ShiftKind::NoiseShift { .. }) => draw(&mut rng, 1.0 + u, 1.0, 0.0),
                (true, ShiftKind::MeanShift { delta }) => draw(&mut rng, u, 1.0, delta),
                (true, ShiftKind::ScaleShift { factor }) => draw(&mut rng, u, factor, 0.0),
                (false, _) => draw(&mut rng, u, 1.0, 0.0),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledScenario {
        train,
        calibration,
        stream,
    })
}

/// Alarm counts of one chart in one repetition, split at the shift onset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartOutcome {
    pub pre_shift_alarms: usize,
    pub pre_shift_points: usize,
    pub post_shift_alarms: usize,
    pub post_shift_points: usize,
    /// First flagged stream index at or after the onset.
    pub first_detection_index: Option<usize>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ChartOutcome {
    pub fn from_series(series: &ChartSeries, onset: usize) -> Self {
        let mut out = ChartOutcome {
            pre_shift_alarms: 0,
            pre_shift_points: 0,
            post_shift_alarms: 0,
            post_shift_points: 0,
            first_detection_index: None,
        };
        for (i, p) in series.points.iter().enumerate() {
            let flagged = p.signal.limit_exceeded;
            if i < onset {
                out.pre_shift_points += 1;
                out.pre_shift_alarms += usize::from(flagged);
            } else {
                out.post_shift_points += 1;
                out.post_shift_alarms += usize::from(flagged);
                if flagged && out.first_detection_index.is_none() {
                    out.first_detection_index = Some(i);
                }
            }
        }
        out
    }

    pub fn pre_shift_alarm_rate(&self) -> f64 {
        ratio(self.pre_shift_alarms, self.pre_shift_points)
    }

    pub fn post_shift_detection_rate(&self) -> f64 {
        ratio(self.post_shift_alarms, self.post_shift_points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub repetition: u64,
    pub shewhart: ChartOutcome,
    pub conformal: ChartOutcome,
}

/// Pooled results of one chart across all repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartSummary {
    /// Total pre-onset alarms over total pre-onset points.
    pub pre_shift_alarm_rate: f64,
    /// Total post-onset alarms over total post-onset points.
    pub post_shift_detection_rate: f64,
    pub pre_shift_points: usize,
    pub post_shift_points: usize,
    /// Median first detection index over repetitions that detected.
    pub median_first_detection_index: Option<f64>,
    pub repetitions_detecting: usize,
}

impl ChartSummary {
    fn pool(outcomes: impl Iterator<Item = ChartOutcome> + Clone) -> Self {
        let sum = |f: fn(&ChartOutcome) -> usize| outcomes.clone().map(|o| f(&o)).sum::<usize>();
        let (pre_a, pre_n) = (sum(|o| o.pre_shift_alarms), sum(|o| o.pre_shift_points));
        let (post_a, post_n) = (sum(|o| o.post_shift_alarms), sum(|o| o.post_shift_points));
        let firsts: Vec<f64> = outcomes
            .filter_map(|o| o.first_detection_index.map(|i| i as f64))
            .collect();
        ChartSummary {
            pre_shift_alarm_rate: ratio(pre_a, pre_n),
            post_shift_detection_rate: ratio(post_a, post_n),
            pre_shift_points: pre_n,
            post_shift_points: post_n,
            median_first_detection_index: crate::data::median(&firsts).ok(),
            repetitions_detecting: firsts.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub spec: SimulationSpec,
    pub alpha: f64,
    pub repetitions: Vec<RepetitionResult>,
    pub shewhart: ChartSummary,
    pub conformal: ChartSummary,
}

/// Both charts of one repetition, on identical streams.
pub fn repetition_charts(
    spec: &SimulationSpec,
    alpha: f64,
    rep: u64,
) -> Result<(ChartSeries, ChartSeries)> {
    let (calibration, stream) = generate_repetition(spec, rep)?;
    let shewhart = shewhart_chart(&calibration, &stream)?;
    let scorer = NonconformityScorer::fit_individual(&calibration)?;
    let calib_records: Vec<Record> = calibration.into_iter().map(Record::from).collect();
    let model = calibrate(&scorer, &calib_records, alpha)?;
    let stream_records: Vec<Record> = stream.into_iter().map(Record::from).collect();
    let conformal = conformal_score_chart(&model, &scorer, &stream_records)?;
    Ok((shewhart, conformal))
}

/// Runs the Shewhart chart and the conformal individuals chart on the same
/// streams for every repetition and pools the alarm counts.
pub fn compare_charts(
    spec: &SimulationSpec,
    alpha: f64,
    repetitions: usize,
) -> Result<ComparisonReport> {
    crate::calibration::validate_alpha(alpha)?;
    spec.validate()?;
    if repetitions == 0 {
        return Err(Error::InvalidParameter(
            "repetitions must be at least 1".into(),
        ));
    }
    let onset = spec.shift.onset_index;
    let results = (0..repetitions as u64)
        .into_par_iter()
        .map(|rep| {
            let (s, c) = repetition_charts(spec, alpha, rep)?;
            Ok(RepetitionResult {
                repetition: rep,
                shewhart: ChartOutcome::from_series(&s, onset),
                conformal: ChartOutcome::from_series(&c, onset),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport {
        spec: *spec,
        alpha,
        shewhart: ChartSummary::pool(results.iter().map(|r| r.shewhart)),
        conformal: ChartSummary::pool(results.iter().map(|r| r.conformal)),
        repetitions: results,
    })
}

/// Settings for the uncertainty-spike scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeSettings {
    pub alpha: f64,
    pub width_alpha: f64,
    /// Neighbors of the kNN regressor.
    pub k: usize,
}

impl Default for SpikeSettings {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            width_alpha: 0.05,
            k: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeOutcome {
    pub repetition: u64,
    /// First uncertainty spike at or after the onset.
    pub first_spike_index: Option<usize>,
    /// First limit signal at or after the onset.
    pub first_limit_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeReport {
    pub spec: SimulationSpec,
    pub settings: SpikeSettings,
    pub repetitions: Vec<SpikeOutcome>,
    /// Medians with "never" counted as `n_stream`.
    pub median_first_spike_index: f64,
    pub median_first_limit_index: f64,
}

/// Uncertainty-spike chart of one repetition of the regression scenario,
/// using a kNN regressor trained on the scenario's training sweep.
pub fn spike_chart_for(
    spec: &SimulationSpec,
    settings: &SpikeSettings,
    rep: u64,
) -> Result<ChartSeries> {
    let scenario = generate_labeled(spec, rep)?;
    let knn = KnnRegressor::fit(&scenario.train, settings.k)?;
    let scorer = NonconformityScorer::fit_normalized_residual(knn.clone());
    let model = calibrate_normalized(&scorer, &scenario.calibration, settings.alpha)?;
    uncertainty_spike_chart(&model, &knn, settings.width_alpha, &scenario.stream)
}

/// Measures whether spike signals lead limit signals after the onset.
pub fn spike_experiment(
    spec: &SimulationSpec,
    settings: &SpikeSettings,
    repetitions: usize,
) -> Result<SpikeReport> {
    if repetitions == 0 {
        return Err(Error::InvalidParameter(
            "repetitions must be at least 1".into(),
        ));
    }
    let onset = spec.shift.onset_index;
    let outcomes = (0..repetitions as u64)
        .into_par_iter()
        .map(|rep| {
            let chart = spike_chart_for(spec, settings, rep)?;
            let first = |pick: fn(&crate::data::Signal) -> bool| {
                chart
                    .points
                    .iter()
                    .enumerate()
                    .skip(onset)
                    .find(|(_, p)| pick(&p.signal))
                    .map(|(i, _)| i)
            };
            Ok(SpikeOutcome {
                repetition: rep,
                first_spike_index: first(|s| s.uncertainty_spike),
                first_limit_index: first(|s| s.limit_exceeded),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let censored = |v: Option<usize>| v.unwrap_or(spec.n_stream) as f64;
    let spikes: Vec<f64> = outcomes
        .iter()
        .map(|o| censored(o.first_spike_index))
        .collect();
    let limits: Vec<f64> = outcomes
        .iter()
        .map(|o| censored(o.first_limit_index))
        .collect();
    Ok(SpikeReport {
        spec: *spec,
        settings: *settings,
        median_first_spike_index: crate::data::median(&spikes)?,
        median_first_limit_index: crate::data::median(&limits)?,
        repetitions: outcomes,
    })
}
