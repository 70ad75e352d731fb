//! Acceptance suite: one check per release criterion, each printing a single
//! `PASS`/`FAIL` line. Runs as a plain binary (no libtest harness) so the
//! lines are always visible under `cargo test`.

use std::path::Path;
use std::time::Instant;

use conformal_spc::calibration::{
    calibrate, conformal_p_value, conformal_quantile_index, fit, is_out_of_control,
    CalibrationModel,
};
use conformal_spc::charts::{
    conformal_interval_chart, conformal_score_chart, p_value_chart, p_value_level, shewhart_chart,
};
use conformal_spc::multivariate::{
    calibrate_detector, train_knn, train_mahalanobis, AnomalyDetector,
};
use conformal_spc::persist::{self, ArchivedModel, ModelArchive, Provenance};
use conformal_spc::simulate::{
    compare_charts, spike_experiment, Generator, Shift, ShiftKind, SimulationSpec, SpikeSettings,
};
use conformal_spc::{
    LabeledPoint, LeastSquares, NonconformityScorer, Observation, ProcessVector, Record,
    Result as CoreResult,
};
use conformal_spc_cli::args::{GeneratorArg, ShiftArg, SimulateArgs};
use conformal_spc_cli::cmd_simulate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STANDARD_NORMAL: Generator = Generator::Normal {
    mu: 0.0,
    sigma: 1.0,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn binomial_se(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

fn draws(g: &Generator, n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| g.sample(r)).collect()
}

fn individual_records(values: &[f64]) -> Vec<Record> {
    Observation::series(values)
        .unwrap()
        .into_iter()
        .map(Record::from)
        .collect()
}

/// `ceil((1 - a/b)(n + 1))` in integer arithmetic, clamped to `n`.
fn oracle_k(n: usize, a: u64, b: u64) -> usize {
    let num = (b - a) * (n as u64 + 1);
    let k = num.div_ceil(b) as usize;
    k.min(n)
}

fn criterion_1() -> Verdict {
    let alphas: [(f64, u64, u64); 5] = [
        (0.5, 1, 2),
        (0.1, 1, 10),
        (0.05, 1, 20),
        (0.01, 1, 100),
        (0.0027, 27, 10_000),
    ];
    let mut r = rng(1, 0);
    let mut cases = 0;
    let mut mismatches = 0;
    for n in 1..=50usize {
        for &(alpha, a, b) in &alphas {
            let k = oracle_k(n, a, b);
            if conformal_quantile_index(n, alpha).unwrap().k != k {
                mismatches += 1;
            }
            for trial in 0..4 {
                // Half the trials draw from a small grid to force ties.
                let scores: Vec<f64> = (0..n)
                    .map(|_| {
                        if trial % 2 == 0 {
                            r.random::<f64>() * 10.0
                        } else {
                            f64::from(r.random_range(0..4u8)) * 0.5
                        }
                    })
                    .collect();
                let mut sorted = scores.clone();
                sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
                let model = fit(&scores, alpha).unwrap();
                if model.k() != k || model.q().to_bits() != sorted[k - 1].to_bits() {
                    mismatches += 1;
                }
                cases += 1;
            }
        }
    }
    verdict(
        mismatches == 0,
        format!("{mismatches} mismatches over {cases} fits"),
    )
}

fn criterion_2() -> Verdict {
    const N_CAL: usize = 999;
    const REPS: u64 = 1_000;
    const PER_REP: usize = 100;
    let alpha = 0.05;
    let generators = [
        ("normal", STANDARD_NORMAL),
        ("exponential", Generator::Exponential { rate: 1.0 }),
        (
            "bimodal",
            Generator::Bimodal {
                mu1: -2.0,
                mu2: 2.0,
                sigma: 0.5,
                weight: 0.5,
            },
        ),
    ];
    let total = REPS as usize * PER_REP;
    let bound = alpha + 3.0 * binomial_se(alpha, total);
    let mut pass = true;
    let mut parts = Vec::new();
    for (gi, (name, g)) in generators.iter().enumerate() {
        let mut alarms = 0usize;
        for rep in 0..REPS {
            let mut r = rng(200 + gi as u64, rep);
            // The median is fitted on a separate training draw so the
            // calibration and test scores are exchangeable.
            let train = Observation::series(&draws(g, N_CAL, &mut r)).unwrap();
            let scorer = NonconformityScorer::fit_individual(&train).unwrap();
            let model = calibrate(
                &scorer,
                &individual_records(&draws(g, N_CAL, &mut r)),
                alpha,
            )
            .unwrap();
            for v in draws(g, PER_REP, &mut r) {
                let s = scorer.score_value(v).unwrap();
                alarms += usize::from(is_out_of_control(&model, s).unwrap());
            }
        }
        let rate = alarms as f64 / total as f64;
        let ok = (0.035..=0.065).contains(&rate) && rate <= bound;
        pass &= ok;
        parts.push(format!("{name} {rate:.5}"));
    }
    verdict(
        pass,
        format!(
            "{} (bound {bound:.5}, {total} points each)",
            parts.join(", ")
        ),
    )
}

fn criterion_3() -> Verdict {
    let spec = SimulationSpec {
        generator: Generator::Exponential { rate: 1.0 },
        n_calibration: 999,
        n_stream: 1_000,
        shift: Shift {
            onset_index: 1_000,
            kind: ShiftKind::MeanShift { delta: 0.0 },
        },
        seed: 3,
    };
    let alpha = 0.0027;
    let report = compare_charts(&spec, alpha, 1_000).unwrap();
    let points = report.shewhart.pre_shift_points;
    let shewhart = report.shewhart.pre_shift_alarm_rate;
    let conformal = report.conformal.pre_shift_alarm_rate;
    let e4 = (-4.0f64).exp();
    let bound = alpha + 3.0 * binomial_se(alpha, points);
    let pass = (shewhart - e4).abs() <= 0.2 * e4 && shewhart >= 6.0 * alpha && conformal <= bound;
    verdict(
        pass,
        format!(
            "shewhart {shewhart:.5} vs e^-4 {e4:.5} ({:.1}x nominal), conformal {conformal:.5} <= {bound:.5}, {points} points",
            shewhart / alpha
        ),
    )
}

fn criterion_4() -> Verdict {
    let mut r = rng(4, 0);
    let fixed = [0.5, 0.3, 0.25, 0.2, 0.1, 0.05, 0.01, 0.0027];
    let mut mismatches = 0;
    let mut queries = 0;
    let mut clamped = 0;
    for instance in 0..1_000 {
        let n = r.random_range(1..=20usize);
        let alpha = if instance % 2 == 0 {
            fixed[r.random_range(0..fixed.len())]
        } else {
            r.random_range(0.001..0.9)
        };
        let scores: Vec<f64> = (0..n)
            .map(|_| f64::from(r.random_range(0..6u8)) * 0.5)
            .collect();
        let model = fit(&scores, alpha).unwrap();
        let level = p_value_level(n, alpha).unwrap();
        clamped += usize::from(model.is_clamped());
        let mut probes: Vec<f64> = scores.clone();
        probes.extend(scores.iter().map(|s| s + 0.25));
        probes.extend([0.0, 2.6, 10.0]);
        probes.extend((0..5).map(|_| r.random::<f64>() * 3.0));
        for s in probes {
            let by_threshold = is_out_of_control(&model, s).unwrap();
            let by_p = conformal_p_value(&model, s).unwrap() <= level;
            mismatches += usize::from(by_threshold != by_p);
            queries += 1;
        }
    }
    verdict(
        mismatches == 0,
        format!(
            "{mismatches} mismatches over {queries} queries in 1000 instances ({clamped} clamped, compared at level max(alpha, 1/(n+1)))"
        ),
    )
}

fn linear_points(n: usize, r: &mut ChaCha8Rng) -> Vec<LabeledPoint> {
    (0..n)
        .map(|_| {
            let x1 = r.random::<f64>();
            let x2 = r.random::<f64>() * 2.0 - 1.0;
            let noise = STANDARD_NORMAL.sample(r) * 0.5;
            LabeledPoint::new(vec![x1, x2], 1.0 + 2.0 * x1 - 0.5 * x2 + noise).unwrap()
        })
        .collect()
}

fn criterion_5() -> Verdict {
    const REPS: u64 = 1_000;
    const PER_REP: usize = 100;
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [0.1, 0.05] {
        let mut covered = 0usize;
        for rep in 0..REPS {
            let mut r = rng(5, rep);
            let model = LeastSquares::fit(&linear_points(200, &mut r)).unwrap();
            let scorer = NonconformityScorer::fit_model_residual(model.clone());
            let cal = calibrate(
                &scorer,
                &Record::labeled(&linear_points(999, &mut r)),
                alpha,
            )
            .unwrap();
            let chart =
                conformal_interval_chart(&cal, &model, &linear_points(PER_REP, &mut r)).unwrap();
            covered += chart.points.len() - chart.limit_flag_count();
        }
        let total = REPS as usize * PER_REP;
        let coverage = covered as f64 / total as f64;
        let floor = 1.0 - alpha - 3.0 * binomial_se(alpha, total);
        pass &= coverage >= floor;
        parts.push(format!(
            "alpha {alpha}: coverage {coverage:.5} >= {floor:.5}"
        ));
    }

    // Sensitivity after a one-sigma mean shift at matched nominal alpha.
    let spec = SimulationSpec {
        generator: STANDARD_NORMAL,
        n_calibration: 100,
        n_stream: 200,
        shift: Shift {
            onset_index: 100,
            kind: ShiftKind::MeanShift { delta: 1.0 },
        },
        seed: 55,
    };
    let report = compare_charts(&spec, 0.0027, 200).unwrap();
    let (c, s) = (
        report.conformal.post_shift_detection_rate,
        report.shewhart.post_shift_detection_rate,
    );
    pass &= c >= s;
    parts.push(format!(
        "post-shift detection conformal {c:.4} >= shewhart {s:.4} (200 reps, n=100; pre-shift {:.4} vs {:.4})",
        report.conformal.pre_shift_alarm_rate, report.shewhart.pre_shift_alarm_rate
    ));
    verdict(pass, parts.join("; "))
}

fn criterion_6() -> Verdict {
    let spec = SimulationSpec {
        generator: STANDARD_NORMAL,
        n_calibration: 200,
        n_stream: 100,
        shift: Shift {
            onset_index: 50,
            kind: ShiftKind::NoiseShift { factor: 3.0 },
        },
        seed: 6,
    };
    let report = spike_experiment(&spec, &SpikeSettings::default(), 200).unwrap();
    let (spike, limit) = (
        report.median_first_spike_index,
        report.median_first_limit_index,
    );
    verdict(
        spike <= limit,
        format!("median first spike {spike} <= median first limit signal {limit} over 200 runs"),
    )
}

/// Deliberately weak detector: absolute value of a fixed random projection.
struct RandomProjection {
    direction: Vec<f64>,
}

impl AnomalyDetector for RandomProjection {
    fn detector_id(&self) -> String {
        "random_projection".into()
    }

    fn dimension(&self) -> usize {
        self.direction.len()
    }

    fn score_vector(&self, v: &[f64]) -> CoreResult<f64> {
        self.check_dimension(v)?;
        Ok(v.iter()
            .zip(&self.direction)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .abs())
    }
}

fn correlated(n: usize, rho: f64, r: &mut ChaCha8Rng) -> Vec<ProcessVector> {
    (0..n)
        .map(|i| {
            let z1 = STANDARD_NORMAL.sample(r);
            let z2 = STANDARD_NORMAL.sample(r);
            let z3 = STANDARD_NORMAL.sample(r);
            let x2 = rho * z1 + (1.0 - rho * rho).sqrt() * z2;
            ProcessVector::new(i as u64, vec![z1, x2, 0.5 * z3 + 1.0]).unwrap()
        })
        .collect()
}

fn alarm_count(
    model: &CalibrationModel,
    detector: &dyn AnomalyDetector,
    stream: &[ProcessVector],
) -> usize {
    stream
        .iter()
        .filter(|v| {
            is_out_of_control(model, detector.score_vector(&v.components).unwrap()).unwrap()
        })
        .count()
}

fn criterion_7() -> Verdict {
    const REPS: u64 = 1_000;
    const PER_REP: usize = 100;
    let alpha = 0.05;
    let mut alarms = [0usize; 3];
    for rep in 0..REPS {
        let mut r = rng(7, rep);
        let train = correlated(200, 0.6, &mut r);
        let calib = correlated(999, 0.6, &mut r);
        let stream = correlated(PER_REP, 0.6, &mut r);
        let dir: Vec<f64> = (0..3).map(|_| STANDARD_NORMAL.sample(&mut r)).collect();
        let knn = train_knn(&train, 5).unwrap();
        let maha = train_mahalanobis(&train, None).unwrap();
        let weak = RandomProjection { direction: dir };
        let detectors: [&dyn AnomalyDetector; 3] = [&knn, &maha, &weak];
        for (slot, d) in alarms.iter_mut().zip(detectors) {
            let model = calibrate_detector(d, &calib, alpha).unwrap();
            *slot += alarm_count(&model, d, &stream);
        }
    }
    let total = REPS as usize * PER_REP;
    let bound = alpha + 3.0 * binomial_se(alpha, total);
    let rates: Vec<f64> = alarms.iter().map(|a| *a as f64 / total as f64).collect();
    let mut pass = rates.iter().all(|r| *r <= bound);

    // Correlated shift: rho = 0.95, points against the correlation that stay
    // inside each marginal 3-sigma band.
    let mut r = rng(70, 0);
    let train = correlated(2_000, 0.95, &mut r);
    let calib = correlated(999, 0.95, &mut r);
    let fixture: Vec<ProcessVector> = [[2.0, -2.0], [-2.0, 2.0], [1.5, -1.5]]
        .iter()
        .enumerate()
        .map(|(i, p)| ProcessVector::new(i as u64, vec![p[0], p[1], 1.0]).unwrap())
        .collect();
    let maha = train_mahalanobis(&train, None).unwrap();
    let model = calibrate_detector(&maha, &calib, 0.0027).unwrap();
    let records: Vec<Record> = fixture.iter().cloned().map(Record::Vector).collect();
    let chart = conformal_score_chart(&model, &maha, &records).unwrap();
    let maha_flags = chart.limit_flag_count();
    let mut marginal_flags = 0;
    for axis in 0..2 {
        let column =
            |vs: &[ProcessVector]| vs.iter().map(|v| v.components[axis]).collect::<Vec<f64>>();
        let c = Observation::series(&column(&calib)).unwrap();
        let s = Observation::series(&column(&fixture)).unwrap();
        marginal_flags += shewhart_chart(&c, &s).unwrap().limit_flag_count();
    }
    pass &= maha_flags == fixture.len() && marginal_flags == 0;
    verdict(
        pass,
        format!(
            "alarm rates knn {:.5}, mahalanobis {:.5}, random projection {:.5} <= {bound:.5}; \
             rho=0.95 fixture: mahalanobis flags {maha_flags}/{}, marginal shewhart flags {marginal_flags}",
            rates[0],
            rates[1],
            rates[2],
            fixture.len()
        ),
    )
}

fn criterion_8(dir: &Path) -> Verdict {
    let mut r = rng(8, 0);
    let calib_values = draws(&STANDARD_NORMAL, 1_000, &mut r);
    let mut stream_values = draws(&STANDARD_NORMAL, 10_000, &mut r);
    for v in stream_values.iter_mut().skip(5_000) {
        *v += 1.5;
    }
    let obs = Observation::series(&calib_values).unwrap();
    let scorer = NonconformityScorer::fit_individual(&obs).unwrap();
    let model = calibrate(&scorer, &individual_records(&calib_values), 0.0027).unwrap();
    let archive = ModelArchive::new(
        ArchivedModel::Scorer(scorer),
        model,
        Provenance::now(b"criterion 8", Some(8)),
    )
    .unwrap();
    let path = dir.join("model.json");
    persist::save(&archive, &path).unwrap();
    let reloaded = persist::load(&path).unwrap();

    let stream = individual_records(&stream_values);
    let run = |a: &ModelArchive| {
        let sf = a.model.score_function();
        let scores = conformal_score_chart(&a.calibration, sf, &stream).unwrap();
        let ps = p_value_chart(&a.calibration, sf, a.calibration.alpha(), &stream).unwrap();
        (scores, ps)
    };
    let (s1, p1) = run(&archive);
    let (s2, p2) = run(&reloaded);
    let mut differences = 0;
    for (a, b) in s1
        .points
        .iter()
        .zip(&s2.points)
        .chain(p1.points.iter().zip(&p2.points))
    {
        differences += usize::from(a.value.to_bits() != b.value.to_bits() || a.signal != b.signal);
    }
    let flags = s1.limit_flag_count();
    verdict(
        differences == 0 && reloaded == archive && stream.len() == 10_000,
        format!(
            "{differences} differing points over {} scores and p-values ({flags} flags)",
            stream.len()
        ),
    )
}

fn simulate_args(out: &Path, shift: ShiftArg) -> SimulateArgs {
    SimulateArgs {
        generator: GeneratorArg::Exponential,
        mu: 0.0,
        sigma: 1.0,
        rate: 1.0,
        mu1: -2.0,
        mu2: 2.0,
        weight: 0.5,
        shift,
        delta: 1.0,
        factor: 3.0,
        onset: None,
        n_calibration: 200,
        n_stream: 200,
        reps: 100,
        alpha: None,
        width_alpha: 0.05,
        k: 10,
        seed: 99,
        out: out.to_path_buf(),
    }
}

fn directory_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn criterion_9(dir: &Path) -> Verdict {
    let mut compared = 0;
    let mut pass = true;
    for (name, shift) in [("mean", ShiftArg::Mean), ("noise", ShiftArg::Noise)] {
        let a = dir.join(format!("{name}-a"));
        let b = dir.join(format!("{name}-b"));
        let out_a = cmd_simulate(&simulate_args(&a, shift)).unwrap();
        let out_b = cmd_simulate(&simulate_args(&b, shift)).unwrap();
        let (fa, fb) = (directory_bytes(&a), directory_bytes(&b));
        pass &= fa == fb && !fa.is_empty();
        pass &= out_a.stdout.replace(&a.display().to_string(), "")
            == out_b.stdout.replace(&b.display().to_string(), "");
        pass &= fa.iter().any(|(n, _)| n.ends_with(".svg"));
        compared += fa.len();
    }
    verdict(
        pass,
        format!("{compared} report and SVG files byte-identical across two runs"),
    )
}

type Check<'a> = Box<dyn Fn() -> Verdict + 'a>;

fn main() {
    let scratch = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<(&str, Check)> = vec![
        ("quantile-rule oracle equivalence", Box::new(criterion_1)),
        (
            "distribution-free false-alarm guarantee",
            Box::new(criterion_2),
        ),
        (
            "Shewhart assumption violation on Exp(1)",
            Box::new(criterion_3),
        ),
        (
            "score chart / p-value chart equivalence",
            Box::new(criterion_4),
        ),
        (
            "interval coverage and shift sensitivity",
            Box::new(criterion_5),
        ),
        (
            "uncertainty spike leads limit signal",
            Box::new(criterion_6),
        ),
        (
            "multivariate validity for any detector",
            Box::new(criterion_7),
        ),
        (
            "archive round-trip decision equivalence",
            Box::new(|| criterion_8(scratch.path())),
        ),
        (
            "simulate determinism",
            Box::new(|| criterion_9(scratch.path())),
        ),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        failures += usize::from(!v.pass);
        println!(
            "criterion {} {}: {} [{:.1}s] {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            name,
            start.elapsed().as_secs_f64(),
            v.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
