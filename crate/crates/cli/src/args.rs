use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "cspc",
    version,
    about = "Distribution-free control charts from conformal prediction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a scorer or detector on in-control data and write a model archive.
    Calibrate(CalibrateArgs),
    /// Score a stream against an archive; exit 1 when any point alarms.
    Monitor(MonitorArgs),
    /// Monte-Carlo comparison of the Shewhart and conformal charts.
    Simulate(SimulateArgs),
    /// Render SVG charts from an archive and a stream, or from chart data.
    Chart(ChartArgs),
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("alpha must lie strictly between 0 and 1, got {a}"))
    }
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    parse_alpha(s)
        .map_err(|_| format!("split fraction must lie strictly between 0 and 1, got `{s}`"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ScorerArg {
    IndividualMedian,
    SubgroupMeanMedian,
    SubgroupRangeMedian,
    ModelResidual,
    NormalizedResidual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorArg {
    Knn,
    Mahalanobis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ModelArg {
    LeastSquares,
    Knn,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    /// In-control data; the header row selects the layout.
    pub input: PathBuf,
    /// Target false-alarm rate.
    #[arg(long, default_value_t = 0.0027, value_parser = parse_alpha)]
    pub alpha: f64,
    /// Scorer for univariate, subgroup or labeled data.
    #[arg(long, value_enum)]
    pub scorer: Option<ScorerArg>,
    /// Detector for vector data.
    #[arg(long, value_enum)]
    pub detector: Option<DetectorArg>,
    /// Predictive model for residual scorers.
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Neighbors for kNN models and detectors.
    #[arg(long)]
    pub k: Option<usize>,
    /// Ridge added to the covariance diagonal (Mahalanobis).
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Fraction of rows used for training; the rest calibrates.
    #[arg(long, value_parser = parse_fraction)]
    pub split: Option<f64>,
    /// Seed of the train/calibration shuffle.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Archive path.
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct MonitorArgs {
    /// Archive written by `calibrate`.
    pub archive: PathBuf,
    /// Stream in the same layout as the calibration data.
    pub stream: PathBuf,
    /// Write the chart series as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorArg {
    Normal,
    Exponential,
    Bimodal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShiftArg {
    None,
    Mean,
    Scale,
    Noise,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = GeneratorArg::Normal)]
    pub generator: GeneratorArg,
    /// Normal mean.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mu: f64,
    /// Normal and bimodal component standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Exponential rate.
    #[arg(long, default_value_t = 1.0)]
    pub rate: f64,
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    pub mu1: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    pub mu2: f64,
    /// Weight of the first bimodal component.
    #[arg(long, default_value_t = 0.5)]
    pub weight: f64,
    #[arg(long, value_enum, default_value_t = ShiftArg::Mean)]
    pub shift: ShiftArg,
    /// Mean-shift size.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub delta: f64,
    /// Scale- or noise-shift factor.
    #[arg(long, default_value_t = 3.0)]
    pub factor: f64,
    /// First shifted stream index; defaults to the middle of the stream.
    #[arg(long)]
    pub onset: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub n_calibration: usize,
    #[arg(long, default_value_t = 200)]
    pub n_stream: usize,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    /// Chart alpha; 0.0027 for the comparison, 0.05 for the noise scenario.
    #[arg(long, value_parser = parse_alpha)]
    pub alpha: Option<f64>,
    /// Interval-width level of the uncertainty-spike chart.
    #[arg(long, default_value_t = 0.05, value_parser = parse_alpha)]
    pub width_alpha: f64,
    /// Neighbors of the kNN regressor in the noise scenario.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = "simulation")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Score,
    PValue,
    Interval,
    Spike,
    Shewhart,
}

#[derive(Debug, Clone, Args)]
pub struct ChartArgs {
    /// Chart kinds to draw; one SVG each.
    #[arg(long, value_enum)]
    pub kind: Vec<KindArg>,
    #[arg(long)]
    pub archive: Option<PathBuf>,
    #[arg(long)]
    pub stream: Option<PathBuf>,
    /// In-control values for the Shewhart chart.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Chart series JSON written by `monitor --out`.
    #[arg(long, conflicts_with_all = ["archive", "kind"])]
    pub data: Option<PathBuf>,
    /// Flag level of the p-value chart; defaults to the archive alpha.
    #[arg(long, value_parser = parse_alpha)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 0.05, value_parser = parse_alpha)]
    pub width_alpha: f64,
    /// Label flagged points with their index.
    #[arg(long)]
    pub annotate: bool,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}
