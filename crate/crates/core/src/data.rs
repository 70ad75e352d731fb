//! Shared data model: observations, subgroups, labeled pairs, process
//! vectors and the chart points every chart kind produces.
//!
//! Every constructor rejects NaN and infinities. A single non-finite value
//! would poison a sorted score list, so validation happens at ingestion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rejects the first non-finite entry of `values`.
pub fn ensure_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(position) => Err(Error::NonFinite {
            position,
            value: values[position],
        }),
        None => Ok(()),
    }
}

/// Median of a sample. Even-length samples use the mean of the two middle
/// order statistics.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    ensure_finite(values)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Ok(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    })
}

/// `max - min` of a sample of at least two values.
pub fn range_of(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::SubgroupTooSmall(values.len()));
    }
    ensure_finite(values)?;
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    Ok(hi - lo)
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the `n - 1` denominator.
pub(crate) fn sample_std(values: &[f64]) -> f64 {
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// A single individual measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub index: u64,
    pub value: f64,
}

impl Observation {
    pub fn new(index: u64, value: f64) -> Result<Self> {
        ensure_finite(&[value])?;
        Ok(Self { index, value })
    }

    /// Wraps a plain series, numbering observations from zero.
    pub fn series(values: &[f64]) -> Result<Vec<Self>> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| Self::new(i as u64, v))
            .collect()
    }
}

/// A rational subgroup of two or more consecutive measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgroup {
    index: u64,
    values: Vec<f64>,
}

impl Subgroup {
    pub fn new(index: u64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::SubgroupTooSmall(values.len()));
        }
        ensure_finite(&values)?;
        Ok(Self { index, values })
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    pub fn range(&self) -> f64 {
        // size >= 2 and finiteness are checked at construction
        range_of(&self.values).expect("subgroup invariants hold")
    }
}

/// A process-parameter vector `x` paired with the quality characteristic `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub x: Vec<f64>,
    pub y: f64,
}

impl LabeledPoint {
    pub fn new(x: Vec<f64>, y: f64) -> Result<Self> {
        ensure_finite(&x)?;
        ensure_finite(&[y])?;
        Ok(Self { x, y })
    }
}

/// A full multivariate snapshot of the process at one sampling instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessVector {
    pub index: u64,
    pub components: Vec<f64>,
}

impl ProcessVector {
    pub fn new(index: u64, components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptySample);
        }
        ensure_finite(&components)?;
        Ok(Self { index, components })
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }
}

/// Checks that every vector in a dataset has the same dimension and returns it.
pub fn common_dimension<'a, I>(vectors: I) -> Result<usize>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut iter = vectors.into_iter();
    let first = iter.next().ok_or(Error::EmptySample)?.len();
    for v in iter {
        if v.len() != first {
            return Err(Error::DimensionMismatch {
                expected: first,
                found: v.len(),
            });
        }
    }
    Ok(first)
}

/// Anything a chart can be drawn over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Individual(Observation),
    Subgroup(Subgroup),
    Labeled { index: u64, point: LabeledPoint },
    Vector(ProcessVector),
}

impl Record {
    pub fn index(&self) -> u64 {
        match self {
            Record::Individual(o) => o.index,
            Record::Subgroup(g) => g.index(),
            Record::Labeled { index, .. } => *index,
            Record::Vector(v) => v.index,
        }
    }

    pub fn labeled(points: &[LabeledPoint]) -> Vec<Record> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| Record::Labeled {
                index: i as u64,
                point: p.clone(),
            })
            .collect()
    }
}

impl From<Observation> for Record {
    fn from(o: Observation) -> Self {
        Record::Individual(o)
    }
}

impl From<Subgroup> for Record {
    fn from(g: Subgroup) -> Self {
        Record::Subgroup(g)
    }
}

impl From<ProcessVector> for Record {
    fn from(v: ProcessVector) -> Self {
        Record::Vector(v)
    }
}

/// Signals carried by a chart point. The limit and spike signals are
/// independent; a point may carry both.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signal {
    pub limit_exceeded: bool,
    pub uncertainty_spike: bool,
}

impl Signal {
    pub const NONE: Signal = Signal {
        limit_exceeded: false,
        uncertainty_spike: false,
    };

    pub fn limit(exceeded: bool) -> Self {
        Signal {
            limit_exceeded: exceeded,
            uncertainty_spike: false,
        }
    }

    pub fn is_none(&self) -> bool {
        !self.limit_exceeded && !self.uncertainty_spike
    }
}

/// One plotted point. `value` holds the raw value, the score, the p-value or
/// the observed `y`, depending on the chart kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub index: u64,
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub signal: Signal,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn median_examples() {
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), 3.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
        assert_eq!(median(&[7.0]).unwrap(), 7.0);
        assert_eq!(median(&[]), Err(Error::EmptySample));
    }

    #[test]
    fn median_rejects_nan() {
        assert!(matches!(
            median(&[1.0, f64::NAN]),
            Err(Error::NonFinite { position: 1, .. })
        ));
    }

    #[test]
    fn range_examples() {
        assert_eq!(range_of(&[2.0, 5.0, 3.0]).unwrap(), 3.0);
        assert_eq!(range_of(&[4.0, 4.0]).unwrap(), 0.0);
        assert_eq!(range_of(&[-1.0, 2.0, -3.0]).unwrap(), 5.0);
        assert_eq!(range_of(&[1.0]), Err(Error::SubgroupTooSmall(1)));
    }

    #[test]
    fn subgroup_requires_two_values() {
        assert_eq!(Subgroup::new(0, vec![1.0]), Err(Error::SubgroupTooSmall(1)));
        let g = Subgroup::new(3, vec![2.0, 5.0, 3.0]).unwrap();
        assert_eq!(g.range(), 3.0);
        assert!((g.mean() - 10.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn observation_rejects_infinity() {
        assert!(Observation::new(0, f64::INFINITY).is_err());
        assert!(Observation::series(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn dimension_check() {
        let a = [1.0, 2.0];
        let b = [1.0];
        assert_eq!(
            common_dimension([&a[..], &b[..]]),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        );
        assert_eq!(common_dimension([&a[..], &a[..]]), Ok(2));
    }

    fn sample() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e6f64..1e6, 1..40)
    }

    proptest! {
        #[test]
        fn median_is_permutation_invariant(v in sample(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = v.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(median(&v).unwrap(), median(&shuffled).unwrap());
        }

        #[test]
        fn median_is_translation_equivariant(v in sample(), c in -1e3f64..1e3) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let lhs = median(&shifted).unwrap();
            let rhs = median(&v).unwrap() + c;
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }

        #[test]
        fn median_resists_one_outlier(v in prop::collection::vec(-100f64..100.0, 3..30),
                                      big in 1e3f64..1e12, bigger in 1e12f64..1e300) {
            let mut a = v.clone();
            let mut b = v;
            a.push(big);
            b.push(bigger);
            prop_assert_eq!(median(&a).unwrap(), median(&b).unwrap());
        }

        #[test]
        fn range_nonnegative_and_translation_invariant(
            v in prop::collection::vec(-1e3f64..1e3, 2..30), c in -1e3f64..1e3
        ) {
            let r = range_of(&v).unwrap();
            prop_assert!(r >= 0.0);
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            prop_assert!((range_of(&shifted).unwrap() - r).abs() <= 1e-9);
        }
    }
}
