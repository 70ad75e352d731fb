//! Versioned archive of a calibrated scorer or detector.
//!
//! Phase-1 calibration and Phase-2 monitoring can run as separate
//! invocations: `calibrate` writes an archive, `monitor` loads it. The
//! archive is a single JSON document:
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "model":       { "kind": "scorer", ... } | { "kind": "detector", ... },
//!   "scorer_id":   "individual_median",
//!   "alpha":       0.0027,
//!   "k":           998,
//!   "q":           3.0891...,
//!   "scores":      [ ...sorted ascending... ],
//!   "spreads":     null | [ ...sorted calibration sigma_hat... ],
//!   "provenance":  { "data_digest": "<sha256 hex>", "created_unix": 0, "seed": null }
//! }
//! ```
//!
//! Floats are written as shortest round-trip decimals and parsed with
//! correct rounding, so a reloaded archive reproduces every flag and
//! p-value bit for bit. Loading re-checks sortedness, `alpha`, `k` and
//! `q` against each other, and refuses anything inconsistent.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::CalibrationModel;
use crate::error::{Error, Result};
use crate::multivariate::{Detector, KnnDetector, MahalanobisDetector};
use crate::predictive::{KnnRegressor, LeastSquares, PredictiveModel, Predictor};
use crate::scores::{NonconformityScorer, ScoreFunction};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the calibration input, lowercase hex.
    pub data_digest: String,
    /// Seconds since the Unix epoch.
    pub created_unix: u64,
    pub seed: Option<u64>,
}

impl Provenance {
    /// Provenance stamped with the current time.
    pub fn now(data: &[u8], seed: Option<u64>) -> Self {
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            data_digest: sha256_hex(data),
            created_unix,
            seed,
        }
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// What was calibrated.
#[derive(Debug, Clone, PartialEq)]
pub enum ArchivedModel {
    Scorer(NonconformityScorer),
    Detector(Detector),
}

impl ArchivedModel {
    pub fn id(&self) -> String {
        match self {
            ArchivedModel::Scorer(s) => s.scorer_id(),
            ArchivedModel::Detector(d) => d.scorer_id(),
        }
    }

    pub fn score_function(&self) -> &dyn ScoreFunction {
        match self {
            ArchivedModel::Scorer(s) => s,
            ArchivedModel::Detector(d) => d,
        }
    }

    /// The predictive model behind a residual scorer.
    pub fn predictor(&self) -> Option<&Predictor> {
        match self {
            ArchivedModel::Scorer(s) => s.predictor(),
            ArchivedModel::Detector(_) => None,
        }
    }

    fn center(&self) -> Option<f64> {
        match self {
            ArchivedModel::Scorer(s) => s.center(),
            ArchivedModel::Detector(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArchive {
    pub model: ArchivedModel,
    pub calibration: CalibrationModel,
    pub provenance: Provenance,
}

impl ModelArchive {
    /// Bundles a model with its calibration, checking that they belong
    /// together.
    pub fn new(
        model: ArchivedModel,
        calibration: CalibrationModel,
        provenance: Provenance,
    ) -> Result<Self> {
        let id = model.id();
        if id != calibration.scorer_id() {
            return Err(Error::CalibrationMismatch {
                expected: calibration.scorer_id().to_string(),
                found: id,
            });
        }
        if model.center().map(f64::to_bits) != calibration.center().map(f64::to_bits) {
            return Err(Error::CalibrationMismatch {
                expected: format!("{:?}", calibration.center()),
                found: format!("{:?}", model.center()),
            });
        }
        Ok(Self {
            model,
            calibration,
            provenance,
        })
    }
}

/// External predictive models to re-attach by identifier when loading.
#[derive(Debug, Default, Clone)]
pub struct ModelRegistry {
    models: HashMap<String, Arc<dyn PredictiveModel>>,
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, model: Arc<dyn PredictiveModel>) {
        self.models.insert(model.id(), model);
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum PredictorDoc {
    LeastSquares {
        coefficients: Vec<f64>,
    },
    Knn {
        k: usize,
        xs: Vec<Vec<f64>>,
        ys: Vec<f64>,
    },
    External {
        id: String,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "scorer", rename_all = "snake_case", deny_unknown_fields)]
enum ScorerDoc {
    IndividualMedian { center: f64 },
    SubgroupMeanMedian { center: f64 },
    SubgroupRangeMedian { center: f64 },
    ModelResidual { predictor: PredictorDoc },
    NormalizedResidual { predictor: PredictorDoc },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "detector", rename_all = "snake_case", deny_unknown_fields)]
enum DetectorDoc {
    KnnDistance {
        k: usize,
        reference: Vec<Vec<f64>>,
    },
    Mahalanobis {
        mean: Vec<f64>,
        precision: Vec<Vec<f64>>,
        ridge: f64,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ModelDoc {
    Scorer(ScorerDoc),
    Detector(DetectorDoc),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchiveDoc {
    format_version: u64,
    model: ModelDoc,
    scorer_id: String,
    alpha: f64,
    k: usize,
    q: f64,
    scores: Vec<f64>,
    spreads: Option<Vec<f64>>,
    provenance: Provenance,
}

fn predictor_doc(p: &Predictor) -> PredictorDoc {
    match p {
        Predictor::LeastSquares(m) => PredictorDoc::LeastSquares {
            coefficients: m.coefficients.clone(),
        },
        Predictor::Knn(m) => PredictorDoc::Knn {
            k: m.k,
            xs: m.xs.clone(),
            ys: m.ys.clone(),
        },
        Predictor::External(m) => PredictorDoc::External { id: m.id() },
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptArchive(msg.into())
}

fn predictor_from_doc(doc: PredictorDoc, registry: &ModelRegistry) -> Result<Predictor> {
    match doc {
        PredictorDoc::LeastSquares { coefficients } => {
            if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
                return Err(corrupt("invalid least-squares coefficients"));
            }
            Ok(Predictor::LeastSquares(LeastSquares { coefficients }))
        }
        PredictorDoc::Knn { k, xs, ys } => {
            let dim_ok = !xs.is_empty() && xs.iter().all(|x| x.len() == xs[0].len());
            let finite = xs.iter().flatten().chain(&ys).all(|v| v.is_finite());
            if !dim_ok || !finite || xs.len() != ys.len() || k < 2 || k > xs.len() {
                return Err(corrupt("invalid knn regressor"));
            }
            Ok(Predictor::Knn(KnnRegressor { k, xs, ys }))
        }
        PredictorDoc::External { id } => registry
            .models
            .get(&id)
            .cloned()
            .map(Predictor::External)
            .ok_or(Error::UnknownModel(id)),
    }
}

fn model_doc(model: &ArchivedModel) -> ModelDoc {
    match model {
        ArchivedModel::Scorer(s) => ModelDoc::Scorer(match s {
            NonconformityScorer::IndividualMedian { center } => {
                ScorerDoc::IndividualMedian { center: *center }
            }
            NonconformityScorer::SubgroupMeanMedian { center } => {
                ScorerDoc::SubgroupMeanMedian { center: *center }
            }
            NonconformityScorer::SubgroupRangeMedian { center } => {
                ScorerDoc::SubgroupRangeMedian { center: *center }
            }
            NonconformityScorer::ModelResidual { model } => ScorerDoc::ModelResidual {
                predictor: predictor_doc(model),
            },
            NonconformityScorer::NormalizedResidual { model } => ScorerDoc::NormalizedResidual {
                predictor: predictor_doc(model),
            },
        }),
        ArchivedModel::Detector(d) => ModelDoc::Detector(match d {
            Detector::KnnDistance(knn) => DetectorDoc::KnnDistance {
                k: knn.k(),
                reference: knn.reference().to_vec(),
            },
            Detector::Mahalanobis(m) => DetectorDoc::Mahalanobis {
                mean: m.mean().to_vec(),
                precision: m.precision().to_vec(),
                ridge: m.ridge(),
            },
        }),
    }
}

fn model_from_doc(doc: ModelDoc, registry: &ModelRegistry) -> Result<ArchivedModel> {
    let finite = |c: f64| {
        if c.is_finite() {
            Ok(c)
        } else {
            Err(corrupt("non-finite center"))
        }
    };
    Ok(match doc {
        ModelDoc::Scorer(s) => ArchivedModel::Scorer(match s {
            ScorerDoc::IndividualMedian { center } => NonconformityScorer::IndividualMedian {
                center: finite(center)?,
            },
            ScorerDoc::SubgroupMeanMedian { center } => NonconformityScorer::SubgroupMeanMedian {
                center: finite(center)?,
            },
            ScorerDoc::SubgroupRangeMedian { center } => NonconformityScorer::SubgroupRangeMedian {
                center: finite(center)?,
            },
            ScorerDoc::ModelResidual { predictor } => NonconformityScorer::ModelResidual {
                model: predictor_from_doc(predictor, registry)?,
            },
            ScorerDoc::NormalizedResidual { predictor } => {
                NonconformityScorer::NormalizedResidual {
                    model: predictor_from_doc(predictor, registry)?,
                }
            }
        }),
        ModelDoc::Detector(d) => ArchivedModel::Detector(match d {
            DetectorDoc::KnnDistance { k, reference } => Detector::KnnDistance(
                KnnDetector::from_parts(k, reference).map_err(|e| corrupt(e.to_string()))?,
            ),
            DetectorDoc::Mahalanobis {
                mean,
                precision,
                ridge,
            } => Detector::Mahalanobis(
                MahalanobisDetector::from_parts(mean, precision, ridge)
                    .map_err(|e| corrupt(e.to_string()))?,
            ),
        }),
    })
}

/// Serializes an archive to its JSON text.
pub fn to_json(archive: &ModelArchive) -> String {
    let cal = &archive.calibration;
    let doc = ArchiveDoc {
        format_version: FORMAT_VERSION,
        model: model_doc(&archive.model),
        scorer_id: cal.scorer_id().to_string(),
        alpha: cal.alpha(),
        k: cal.k(),
        q: cal.q(),
        scores: cal.scores().to_vec(),
        spreads: cal.spreads().map(<[f64]>::to_vec),
        provenance: archive.provenance.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("archive documents always serialize");
    text.push('\n');
    text
}

/// Parses and validates archive JSON.
pub fn from_json(text: &str, registry: &ModelRegistry) -> Result<ModelArchive> {
    let raw: serde_json::Value =
        serde_json::from_str(text).map_err(|e| corrupt(format!("unreadable archive: {e}")))?;
    let version = raw
        .get("format_version")
        .ok_or_else(|| corrupt("missing format_version"))?
        .as_u64()
        .ok_or_else(|| corrupt("format_version is not an integer"))?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let doc: ArchiveDoc = serde_json::from_value(raw).map_err(|e| corrupt(e.to_string()))?;
    let model = model_from_doc(doc.model, registry)?;
    if model.id() != doc.scorer_id {
        return Err(corrupt(format!(
            "scorer_id `{}` does not describe model `{}`",
            doc.scorer_id,
            model.id()
        )));
    }
    let calibration = CalibrationModel::restore(
        doc.scores,
        doc.alpha,
        doc.q,
        doc.scorer_id,
        model.center(),
        doc.spreads,
    )
    .map_err(corrupt)?;
    if calibration.k() != doc.k {
        return Err(corrupt(format!(
            "k={} but alpha={} and n={} give k={}",
            doc.k,
            doc.alpha,
            calibration.n(),
            calibration.k()
        )));
    }
    ModelArchive::new(model, calibration, doc.provenance).map_err(|e| corrupt(e.to_string()))
}

pub fn save(archive: &ModelArchive, destination: impl AsRef<Path>) -> Result<()> {
    std::fs::write(destination, to_json(archive))?;
    Ok(())
}

/// Loads an archive, re-attaching external predictive models from
/// `registry`.
pub fn load_with(source: impl AsRef<Path>, registry: &ModelRegistry) -> Result<ModelArchive> {
    let text = std::fs::read_to_string(source)?;
    from_json(&text, registry)
}

pub fn load(source: impl AsRef<Path>) -> Result<ModelArchive> {
    load_with(source, &ModelRegistry::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{calibrate, calibrate_normalized, conformal_p_value};
    use crate::data::{LabeledPoint, Observation, ProcessVector, Record};
    use crate::multivariate::{calibrate_detector, train_knn, train_mahalanobis};
    use proptest::prelude::*;

    fn provenance() -> Provenance {
        Provenance {
            data_digest: sha256_hex(b"abc"),
            created_unix: 1_700_000_000,
            seed: Some(3),
        }
    }

    fn individual_archive(values: &[f64], alpha: f64) -> ModelArchive {
        let obs = Observation::series(values).unwrap();
        let scorer = NonconformityScorer::fit_individual(&obs).unwrap();
        let recs: Vec<Record> = obs.into_iter().map(Record::from).collect();
        let cal = calibrate(&scorer, &recs, alpha).unwrap();
        ModelArchive::new(ArchivedModel::Scorer(scorer), cal, provenance()).unwrap()
    }

    fn labeled(n: usize) -> Vec<LabeledPoint> {
        (0..n)
            .map(|i| {
                let x = i as f64 / n as f64;
                LabeledPoint::new(vec![x], 3.0 * x + ((i * 7919) % 13) as f64 / 13.0).unwrap()
            })
            .collect()
    }

    fn vectors(n: usize) -> Vec<ProcessVector> {
        (0..n)
            .map(|i| {
                let t = i as f64;
                ProcessVector::new(i as u64, vec![t.sin(), (1.7 * t).cos(), 0.1 * (t % 5.0)])
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn round_trip_every_model_kind() {
        let pts = labeled(40);
        let ls = LeastSquares::fit(&pts[..20]).unwrap();
        let knn = KnnRegressor::fit(&pts[..20], 4).unwrap();
        let residual = NonconformityScorer::fit_model_residual(ls);
        let normalized = NonconformityScorer::fit_normalized_residual(knn);
        let vecs = vectors(60);
        let dk = train_knn(&vecs[..30], 3).unwrap();
        let dm = train_mahalanobis(&vecs[..30], None).unwrap();

        let archives = vec![
            individual_archive(&[1.0, 2.5, 0.1, 7.0], 0.2),
            ModelArchive::new(
                ArchivedModel::Scorer(residual.clone()),
                calibrate(&residual, &Record::labeled(&pts[20..]), 0.1).unwrap(),
                provenance(),
            )
            .unwrap(),
            ModelArchive::new(
                ArchivedModel::Scorer(normalized.clone()),
                calibrate_normalized(&normalized, &pts[20..], 0.1).unwrap(),
                provenance(),
            )
            .unwrap(),
            ModelArchive::new(
                ArchivedModel::Detector(dk.clone()),
                calibrate_detector(&dk, &vecs[30..], 0.05).unwrap(),
                provenance(),
            )
            .unwrap(),
            ModelArchive::new(
                ArchivedModel::Detector(dm.clone()),
                calibrate_detector(&dm, &vecs[30..], 0.05).unwrap(),
                provenance(),
            )
            .unwrap(),
        ];
        for a in archives {
            let back = from_json(&to_json(&a), &ModelRegistry::new()).unwrap();
            assert_eq!(back, a);
        }
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let a = individual_archive(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.2);
        save(&a, &path).unwrap();
        assert_eq!(load(&path).unwrap(), a);
        assert!(matches!(
            load(dir.path().join("missing.json")),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn inconsistent_q_rejected() {
        let a = individual_archive(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.2);
        let mut v: serde_json::Value = serde_json::from_str(&to_json(&a)).unwrap();
        v["q"] = serde_json::json!(0.5);
        let err = from_json(&v.to_string(), &ModelRegistry::new()).unwrap_err();
        assert!(matches!(err, Error::CorruptArchive(_)), "{err}");
    }

    #[test]
    fn unsorted_or_mislabeled_rejected() {
        let a = individual_archive(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.2);
        let base: serde_json::Value = serde_json::from_str(&to_json(&a)).unwrap();

        let mut v = base.clone();
        v["scores"] = serde_json::json!([2.0, 1.0, 0.0, 1.0, 2.0]);
        assert!(matches!(
            from_json(&v.to_string(), &ModelRegistry::new()),
            Err(Error::CorruptArchive(_))
        ));

        let mut v = base.clone();
        v["scorer_id"] = serde_json::json!("mahalanobis");
        assert!(matches!(
            from_json(&v.to_string(), &ModelRegistry::new()),
            Err(Error::CorruptArchive(_))
        ));

        let mut v = base.clone();
        v["k"] = serde_json::json!(2);
        assert!(matches!(
            from_json(&v.to_string(), &ModelRegistry::new()),
            Err(Error::CorruptArchive(_))
        ));

        let mut v = base;
        v["model"]["center"] = serde_json::json!(2.5);
        assert!(from_json(&v.to_string(), &ModelRegistry::new()).is_ok());
    }

    #[test]
    fn version_and_truncation() {
        let text = to_json(&individual_archive(&[1.0, 2.0], 0.5));
        let bumped = text.replace("\"format_version\": 1", "\"format_version\": 2");
        assert_eq!(
            from_json(&bumped, &ModelRegistry::new()),
            Err(Error::UnsupportedVersion(2))
        );
        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            from_json(truncated, &ModelRegistry::new()),
            Err(Error::CorruptArchive(_))
        ));
        assert!(matches!(
            from_json("{}", &ModelRegistry::new()),
            Err(Error::CorruptArchive(_))
        ));
    }

    #[test]
    fn external_model_reattached_by_id() {
        #[derive(Debug)]
        struct Plant;
        impl PredictiveModel for Plant {
            fn id(&self) -> String {
                "plant-v2".into()
            }
            fn predict(&self, x: &[f64]) -> f64 {
                x[0] * 3.0
            }
        }
        let plant: Arc<dyn PredictiveModel> = Arc::new(Plant);
        let scorer = NonconformityScorer::fit_model_residual(Predictor::External(plant.clone()));
        let cal = calibrate(&scorer, &Record::labeled(&labeled(10)), 0.2).unwrap();
        let a = ModelArchive::new(ArchivedModel::Scorer(scorer), cal, provenance()).unwrap();
        let text = to_json(&a);
        assert!(text.contains("plant-v2"));
        assert_eq!(
            from_json(&text, &ModelRegistry::new()),
            Err(Error::UnknownModel("plant-v2".into()))
        );
        let mut reg = ModelRegistry::new();
        reg.register(plant);
        assert_eq!(from_json(&text, &reg).unwrap(), a);
    }

    #[test]
    fn archive_rejects_mismatched_parts() {
        let a = individual_archive(&[1.0, 2.0, 3.0], 0.5);
        let other = NonconformityScorer::IndividualMedian { center: 9.0 };
        assert!(
            ModelArchive::new(ArchivedModel::Scorer(other), a.calibration, provenance()).is_err()
        );
    }

    proptest! {
        #[test]
        fn reload_reproduces_decisions(
            calib in prop::collection::vec(-1e3f64..1e3, 1..60),
            stream in prop::collection::vec(-2e3f64..2e3, 1..60),
            alpha in 0.001f64..0.999,
        ) {
            let a = individual_archive(&calib, alpha);
            let b = from_json(&to_json(&a), &ModelRegistry::new()).unwrap();
            let (ArchivedModel::Scorer(sa), ArchivedModel::Scorer(sb)) = (&a.model, &b.model) else {
                unreachable!()
            };
            for v in stream {
                let (xa, xb) = (sa.score_value(v).unwrap(), sb.score_value(v).unwrap());
                prop_assert_eq!(xa.to_bits(), xb.to_bits());
                let (pa, pb) = (conformal_p_value(&a.calibration, xa).unwrap(),
                                conformal_p_value(&b.calibration, xb).unwrap());
                prop_assert_eq!(pa.to_bits(), pb.to_bits());
                prop_assert_eq!(xa > a.calibration.q(), xb > b.calibration.q());
            }
        }
    }
}
