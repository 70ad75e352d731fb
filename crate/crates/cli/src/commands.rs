//! One function per subcommand. Each one parses its inputs, calls the
//! library, and formats the result; nothing here computes statistics.

use std::fmt::Write as _;
use std::path::Path;

use conformal_spc::calibration::{
    calibrate, calibrate_normalized, conformal_p_value, split, CalibrationModel, SplitSpec,
};
use conformal_spc::charts::{
    conformal_interval_chart, conformal_score_chart, p_value_chart, shewhart_chart,
    uncertainty_spike_chart, ChartSeries,
};
use conformal_spc::multivariate::{calibrate_detector, train_knn, train_mahalanobis, DEFAULT_K};
use conformal_spc::persist::{self, ArchivedModel, ModelArchive, ModelRegistry, Provenance};
use conformal_spc::render::{
    format_sig6, render_chart, render_report, render_spike_report, RenderSpec,
};
use conformal_spc::scores::{NonconformityScorer, ScorerKind};
use conformal_spc::simulate::{
    compare_charts, repetition_charts, spike_chart_for, spike_experiment, Generator, Shift,
    ShiftKind, SimulationSpec, SpikeSettings,
};
use conformal_spc::{Error, KnnRegressor, LabeledPoint, LeastSquares, Predictor, Record};

use crate::args::{
    CalibrateArgs, ChartArgs, DetectorArg, GeneratorArg, KindArg, ModelArg, MonitorArgs, ScorerArg,
    ShiftArg, SimulateArgs,
};
use crate::input::{self, Dataset, Layout};
use crate::{CliError, Outcome};

/// kNN regressor neighbors when `--k` is absent.
pub const DEFAULT_REGRESSOR_K: usize = 10;
pub const DEFAULT_SPLIT: f64 = 0.5;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Train/calibration halves, or the whole set twice when no split was asked
/// for and the scorer only needs a location estimate.
fn halves<T: Clone>(
    data: &[T],
    fraction: Option<f64>,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), CliError> {
    match fraction {
        Some(f) => Ok(split(
            data,
            SplitSpec {
                train_fraction: f,
                seed,
            },
        )?),
        None => Ok((data.to_vec(), data.to_vec())),
    }
}

/// Fits and calibrates the model that `args` selects for `dataset`.
pub fn fit_model(
    dataset: &Dataset,
    args: &CalibrateArgs,
) -> Result<(ArchivedModel, CalibrationModel), CliError> {
    let layout = dataset.layout();
    if args.detector.is_some() && layout != Layout::Vectors {
        return Err(usage(format!(
            "--detector needs vector data, input holds {}",
            layout.describe()
        )));
    }
    if args.scorer.is_some() && layout == Layout::Vectors {
        return Err(usage("vector data takes --detector, not --scorer"));
    }
    if args.model.is_some() && layout != Layout::Labeled {
        return Err(usage(format!(
            "--model needs labeled data, input holds {}",
            layout.describe()
        )));
    }
    let wrong_scorer = |s: ScorerArg| {
        usage(format!(
            "scorer {} does not apply to {}",
            ScorerKind::from(s).as_str(),
            layout.describe()
        ))
    };
    let alpha = args.alpha;

    match dataset {
        Dataset::Individuals(obs) => {
            if let Some(s) = args.scorer.filter(|s| *s != ScorerArg::IndividualMedian) {
                return Err(wrong_scorer(s));
            }
            let (train, calib) = halves(obs, args.split, args.seed)?;
            let scorer = NonconformityScorer::fit_individual(&train)?;
            let records: Vec<Record> = calib.into_iter().map(Record::from).collect();
            let model = calibrate(&scorer, &records, alpha)?;
            Ok((ArchivedModel::Scorer(scorer), model))
        }
        Dataset::Subgroups(groups) => {
            let (train, calib) = halves(groups, args.split, args.seed)?;
            let scorer = match args.scorer.unwrap_or(ScorerArg::SubgroupMeanMedian) {
                ScorerArg::SubgroupMeanMedian => NonconformityScorer::fit_subgroup_mean(&train)?,
                ScorerArg::SubgroupRangeMedian => NonconformityScorer::fit_subgroup_range(&train)?,
                other => return Err(wrong_scorer(other)),
            };
            let records: Vec<Record> = calib.into_iter().map(Record::from).collect();
            let model = calibrate(&scorer, &records, alpha)?;
            Ok((ArchivedModel::Scorer(scorer), model))
        }
        Dataset::Labeled(points) => {
            let kind = args.scorer.unwrap_or(ScorerArg::ModelResidual);
            let default_model = match kind {
                ScorerArg::ModelResidual => ModelArg::LeastSquares,
                ScorerArg::NormalizedResidual => ModelArg::Knn,
                other => return Err(wrong_scorer(other)),
            };
            let model_arg = args.model.unwrap_or(default_model);
            if kind == ScorerArg::NormalizedResidual && model_arg == ModelArg::LeastSquares {
                return Err(usage(
                    "normalized_residual needs a model with a spread estimate; use --model knn",
                ));
            }
            let (train, calib) = split(
                points,
                SplitSpec {
                    train_fraction: args.split.unwrap_or(DEFAULT_SPLIT),
                    seed: args.seed,
                },
            )?;
            let predictor: Predictor = match model_arg {
                ModelArg::LeastSquares => LeastSquares::fit(&train)?.into(),
                ModelArg::Knn => {
                    KnnRegressor::fit(&train, args.k.unwrap_or(DEFAULT_REGRESSOR_K))?.into()
                }
            };
            let (scorer, model) = if kind == ScorerArg::NormalizedResidual {
                let scorer = NonconformityScorer::fit_normalized_residual(predictor);
                let model = calibrate_normalized(&scorer, &calib, alpha)?;
                (scorer, model)
            } else {
                let scorer = NonconformityScorer::fit_model_residual(predictor);
                let model = calibrate(&scorer, &Record::labeled(&calib), alpha)?;
                (scorer, model)
            };
            Ok((ArchivedModel::Scorer(scorer), model))
        }
        Dataset::Vectors(vectors) => {
            let (train, calib) = split(
                vectors,
                SplitSpec {
                    train_fraction: args.split.unwrap_or(DEFAULT_SPLIT),
                    seed: args.seed,
                },
            )?;
            let detector = match args.detector.unwrap_or(DetectorArg::Knn) {
                DetectorArg::Knn => train_knn(&train, args.k.unwrap_or(DEFAULT_K))?,
                DetectorArg::Mahalanobis => train_mahalanobis(&train, args.ridge)?,
            };
            let model = calibrate_detector(&detector, &calib, alpha)?;
            Ok((ArchivedModel::Detector(detector), model))
        }
    }
}

impl From<ScorerArg> for ScorerKind {
    fn from(s: ScorerArg) -> Self {
        match s {
            ScorerArg::IndividualMedian => ScorerKind::IndividualMedian,
            ScorerArg::SubgroupMeanMedian => ScorerKind::SubgroupMeanMedian,
            ScorerArg::SubgroupRangeMedian => ScorerKind::SubgroupRangeMedian,
            ScorerArg::ModelResidual => ScorerKind::ModelResidual,
            ScorerArg::NormalizedResidual => ScorerKind::NormalizedResidual,
        }
    }
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<Outcome, CliError> {
    let loaded = input::load(&args.input)?;
    let (model, calibration) = fit_model(&loaded.dataset, args)?;
    let uses_split = args.split.is_some()
        || matches!(loaded.dataset.layout(), Layout::Labeled | Layout::Vectors);
    let provenance = Provenance::now(&loaded.bytes, uses_split.then_some(args.seed));
    let archive = ModelArchive::new(model, calibration, provenance)?;
    write_file(&args.out, persist::to_json(&archive))?;

    let cal = &archive.calibration;
    let mut out = String::new();
    writeln!(out, "scorer: {}", cal.scorer_id()).unwrap();
    writeln!(out, "n: {}", cal.n()).unwrap();
    writeln!(out, "alpha: {}", cal.alpha()).unwrap();
    writeln!(out, "k: {}", cal.k()).unwrap();
    writeln!(out, "q: {}", cal.q()).unwrap();
    writeln!(out, "archive: {}", args.out.display()).unwrap();
    Ok(Outcome {
        stdout: out,
        warnings: cal.clamp_warning().into_iter().collect(),
        alarm: false,
    })
}

pub fn load_archive(path: &Path) -> Result<ModelArchive, CliError> {
    let bytes = input::read_file(path)?;
    let text =
        String::from_utf8(bytes).map_err(|_| Error::CorruptArchive("not UTF-8 text".into()))?;
    persist::from_json(&text, &ModelRegistry::new()).map_err(|source| CliError::Archive {
        path: path.to_path_buf(),
        source,
    })
}

/// Layout of the data an archived model scores.
pub fn expected_layout(model: &ArchivedModel) -> Layout {
    match model {
        ArchivedModel::Scorer(s) => match s.kind() {
            ScorerKind::IndividualMedian => Layout::Individuals,
            ScorerKind::SubgroupMeanMedian | ScorerKind::SubgroupRangeMedian => Layout::Subgroups,
            ScorerKind::ModelResidual | ScorerKind::NormalizedResidual => Layout::Labeled,
        },
        ArchivedModel::Detector(_) => Layout::Vectors,
    }
}

fn load_stream(path: &Path, archive: &ModelArchive) -> Result<Dataset, CliError> {
    let dataset = input::load(path)?.dataset;
    let expected = expected_layout(&archive.model);
    if dataset.layout() != expected {
        return Err(CliError::Format {
            path: path.to_path_buf(),
            message: format!(
                "stream holds {} but archive scorer `{}` expects {}",
                dataset.layout().describe(),
                archive.model.id(),
                expected.describe()
            ),
        });
    }
    Ok(dataset)
}

/// Alarm rows `(index, score, p-value)` of a score chart.
pub fn alarms(
    series: &ChartSeries,
    calibration: &CalibrationModel,
) -> Result<Vec<(u64, f64, f64)>, CliError> {
    series
        .flagged()
        .map(|p| Ok((p.index, p.value, conformal_p_value(calibration, p.value)?)))
        .collect()
}

pub fn cmd_monitor(args: &MonitorArgs) -> Result<Outcome, CliError> {
    let archive = load_archive(&args.archive)?;
    let records = load_stream(&args.stream, &archive)?.into_records();
    let series = conformal_score_chart(
        &archive.calibration,
        archive.model.score_function(),
        &records,
    )?;
    let rows = alarms(&series, &archive.calibration)?;
    if let Some(out) = &args.out {
        let json = serde_json::to_string_pretty(&series).expect("chart series always serializes");
        write_file(out, json + "\n")?;
    }
    let mut out = String::new();
    for (index, score, p) in &rows {
        writeln!(out, "alarm index={index} score={score} p_value={p}").unwrap();
    }
    writeln!(
        out,
        "alarms: {} of {} points",
        rows.len(),
        series.points.len()
    )
    .unwrap();
    Ok(Outcome {
        stdout: out,
        warnings: Vec::new(),
        alarm: !rows.is_empty(),
    })
}

pub fn simulation_spec(args: &SimulateArgs) -> SimulationSpec {
    let generator = match args.generator {
        GeneratorArg::Normal => Generator::Normal {
            mu: args.mu,
            sigma: args.sigma,
        },
        GeneratorArg::Exponential => Generator::Exponential { rate: args.rate },
        GeneratorArg::Bimodal => Generator::Bimodal {
            mu1: args.mu1,
            mu2: args.mu2,
            sigma: args.sigma,
            weight: args.weight,
        },
    };
    let onset = args.onset.unwrap_or(args.n_stream / 2);
    let shift = match args.shift {
        ShiftArg::None => Shift {
            onset_index: args.n_stream,
            kind: ShiftKind::MeanShift { delta: 0.0 },
        },
        ShiftArg::Mean => Shift {
            onset_index: onset,
            kind: ShiftKind::MeanShift { delta: args.delta },
        },
        ShiftArg::Scale => Shift {
            onset_index: onset,
            kind: ShiftKind::ScaleShift {
                factor: args.factor,
            },
        },
        ShiftArg::Noise => Shift {
            onset_index: onset,
            kind: ShiftKind::NoiseShift {
                factor: args.factor,
            },
        },
    };
    SimulationSpec {
        generator,
        n_calibration: args.n_calibration,
        n_stream: args.n_stream,
        shift,
        seed: args.seed,
    }
}

fn render_to(
    dir: &Path,
    series: &ChartSeries,
    title: &str,
    written: &mut Vec<String>,
) -> Result<(), CliError> {
    let spec = RenderSpec {
        title: title.to_string(),
        ..RenderSpec::default()
    };
    let path = dir.join(format!("{}.svg", series.kind.as_str()));
    write_file(&path, render_chart(series, &spec)?)?;
    written.push(path.display().to_string());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), format_sig6)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Outcome, CliError> {
    let spec = simulation_spec(args);
    spec.validate()?;
    create_dir(&args.out)?;
    let mut written = Vec::new();
    let mut out = String::new();

    if let ShiftKind::NoiseShift { .. } = spec.shift.kind {
        let settings = SpikeSettings {
            alpha: args.alpha.unwrap_or(SpikeSettings::default().alpha),
            width_alpha: args.width_alpha,
            k: args.k,
        };
        let report = spike_experiment(&spec, &settings, args.reps)?;
        let json = serde_json::to_string_pretty(&report).expect("reports always serialize");
        write_file(&args.out.join("spike_report.json"), json + "\n")?;
        write_file(
            &args.out.join("spike_report.tsv"),
            render_spike_report(&report),
        )?;
        let chart = spike_chart_for(&spec, &settings, 0)?;
        render_to(
            &args.out,
            &chart,
            "Uncertainty-spike chart (repetition 0)",
            &mut written,
        )?;
        writeln!(out, "repetitions: {}", report.repetitions.len()).unwrap();
        writeln!(
            out,
            "median_first_spike_index: {}",
            format_sig6(report.median_first_spike_index)
        )
        .unwrap();
        writeln!(
            out,
            "median_first_limit_index: {}",
            format_sig6(report.median_first_limit_index)
        )
        .unwrap();
    } else {
        let alpha = args.alpha.unwrap_or(0.0027);
        let report = compare_charts(&spec, alpha, args.reps)?;
        let json = serde_json::to_string_pretty(&report).expect("reports always serialize");
        write_file(&args.out.join("report.json"), json + "\n")?;
        write_file(&args.out.join("report.tsv"), render_report(&report))?;
        let (shewhart, conformal) = repetition_charts(&spec, alpha, 0)?;
        render_to(
            &args.out,
            &shewhart,
            "Shewhart individuals chart (repetition 0)",
            &mut written,
        )?;
        render_to(
            &args.out,
            &conformal,
            "Conformal score chart (repetition 0)",
            &mut written,
        )?;
        writeln!(
            out,
            "chart\tpre_shift_alarm_rate\tpost_shift_detection_rate\tmedian_first_detection_index"
        )
        .unwrap();
        for (name, s) in [
            ("shewhart", &report.shewhart),
            ("conformal", &report.conformal),
        ] {
            writeln!(
                out,
                "{name}\t{}\t{}\t{}",
                format_sig6(s.pre_shift_alarm_rate),
                format_sig6(s.post_shift_detection_rate),
                fmt_opt(s.median_first_detection_index)
            )
            .unwrap();
        }
    }
    for w in written {
        writeln!(out, "wrote {w}").unwrap();
    }
    Ok(Outcome {
        stdout: out,
        warnings: Vec::new(),
        alarm: false,
    })
}

fn labeled_stream(dataset: Dataset) -> Vec<LabeledPoint> {
    match dataset {
        Dataset::Labeled(points) => points,
        _ => unreachable!("layout checked against the archive"),
    }
}

/// Builds the series for one requested chart kind.
pub fn build_chart(kind: KindArg, args: &ChartArgs) -> Result<ChartSeries, CliError> {
    let need = |p: &Option<std::path::PathBuf>, flag: &str| {
        p.clone()
            .ok_or_else(|| usage(format!("chart kind {kind:?} needs {flag}").to_lowercase()))
    };
    if kind == KindArg::Shewhart {
        let calibration = input::load(&need(&args.calibration, "--calibration")?)?.dataset;
        let stream = input::load(&need(&args.stream, "--stream")?)?.dataset;
        return match (calibration, stream) {
            (Dataset::Individuals(c), Dataset::Individuals(s)) => Ok(shewhart_chart(&c, &s)?),
            _ => Err(usage(
                "the shewhart chart needs individual values (`value`) for both files",
            )),
        };
    }
    let archive = load_archive(&need(&args.archive, "--archive")?)?;
    let required = |scorer: ScorerKind, name: &'static str| match &archive.model {
        ArchivedModel::Scorer(s) if s.kind() == scorer => {
            Ok(s.predictor().expect("residual scorers carry a model"))
        }
        _ => Err(CliError::Core(Error::ChartRequires(name))),
    };
    let cal = &archive.calibration;
    match kind {
        KindArg::Interval => {
            let predictor = required(ScorerKind::ModelResidual, "model-residual")?;
            let stream = labeled_stream(load_stream(&need(&args.stream, "--stream")?, &archive)?);
            Ok(conformal_interval_chart(
                cal,
                predictor.as_model(),
                &stream,
            )?)
        }
        KindArg::Spike => {
            let predictor = required(ScorerKind::NormalizedResidual, "normalized-residual")?;
            let stream = labeled_stream(load_stream(&need(&args.stream, "--stream")?, &archive)?);
            Ok(uncertainty_spike_chart(
                cal,
                predictor.as_model(),
                args.width_alpha,
                &stream,
            )?)
        }
        KindArg::Score | KindArg::PValue => {
            let records = load_stream(&need(&args.stream, "--stream")?, &archive)?.into_records();
            let scorer = archive.model.score_function();
            if kind == KindArg::Score {
                Ok(conformal_score_chart(cal, scorer, &records)?)
            } else {
                Ok(p_value_chart(
                    cal,
                    scorer,
                    args.alpha.unwrap_or(cal.alpha()),
                    &records,
                )?)
            }
        }
        KindArg::Shewhart => unreachable!(),
    }
}

pub fn cmd_chart(args: &ChartArgs) -> Result<Outcome, CliError> {
    let series: Vec<ChartSeries> = match &args.data {
        Some(path) => {
            let bytes = input::read_file(path)?;
            let series = serde_json::from_slice(&bytes).map_err(|e| CliError::Format {
                path: path.clone(),
                message: format!("not chart data: {e}"),
            })?;
            vec![series]
        }
        None if args.kind.is_empty() => return Err(usage("give --kind at least once, or --data")),
        None => args
            .kind
            .iter()
            .map(|k| build_chart(*k, args))
            .collect::<Result<_, _>>()?,
    };
    create_dir(&args.out)?;
    let spec = RenderSpec {
        annotate_flags: args.annotate,
        ..RenderSpec::default()
    };
    let mut out = String::new();
    for s in &series {
        let path = args.out.join(format!("{}.svg", s.kind.as_str()));
        write_file(&path, render_chart(s, &spec)?)?;
        writeln!(
            out,
            "wrote {} ({} flagged of {})",
            path.display(),
            s.flagged().count(),
            s.points.len()
        )
        .unwrap();
    }
    Ok(Outcome {
        stdout: out,
        warnings: Vec::new(),
        alarm: false,
    })
}
