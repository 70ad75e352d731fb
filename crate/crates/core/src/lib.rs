//! Distribution-free statistical process control.
//!
//! Control limits come from inductive conformal prediction instead of
//! normal-theory `±3σ` bands: calibrate nonconformity scores on in-control
//! data, take the `ceil((1 - alpha)(n + 1))`-th smallest score as the limit,
//! and flag any new point that scores above it. The false-alarm rate is then
//! at most `alpha` for any exchangeable in-control process.
//!
//! ```
//! use conformal_spc::{calibrate, conformal_p_value, NonconformityScorer, Observation, Record};
//!
//! let phase1 = Observation::series(&[9.8, 10.1, 10.0, 9.7, 10.4, 10.2, 9.9, 10.3, 9.6, 10.0])?;
//! let scorer = NonconformityScorer::fit_individual(&phase1)?;
//! let records: Vec<Record> = phase1.into_iter().map(Record::from).collect();
//! let model = calibrate(&scorer, &records, 0.1)?;
//!
//! let s = scorer.score_value(11.5)?;
//! assert!(s > model.q());
//! assert_eq!(conformal_p_value(&model, s)?, 1.0 / 11.0);
//! # Ok::<(), conformal_spc::Error>(())
//! ```

pub mod calibration;
pub mod charts;
pub mod data;
pub mod error;
pub mod multivariate;
mod neighbors;
pub mod persist;
pub mod predictive;
pub mod render;
pub mod scores;
pub mod simulate;

pub use calibration::{
    calibrate, conformal_p_value, conformal_quantile_index, fit, is_out_of_control,
    CalibrationModel, SplitSpec,
};
pub use charts::{ChartKind, ChartSeries, Limits, ShewhartLimits};
pub use data::{
    median, range_of, ChartPoint, LabeledPoint, Observation, ProcessVector, Record, Signal,
    Subgroup,
};
pub use error::{Error, Result};
pub use multivariate::{AnomalyDetector, Detector};
pub use persist::{ArchivedModel, ModelArchive, ModelRegistry, Provenance};
pub use predictive::{KnnRegressor, LeastSquares, PredictiveModel, Predictor};
pub use render::RenderSpec;
pub use scores::{NonconformityScorer, ScoreFunction, ScorerKind};
pub use simulate::{ComparisonReport, Generator, Shift, ShiftKind, SimulationSpec};
