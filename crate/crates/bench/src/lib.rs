//! Seeded fixtures shared by the benchmarks.

use conformal_spc::{ProcessVector, Record};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn uniform_scores(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

pub fn vectors(n: usize, dim: usize, seed: u64) -> Vec<ProcessVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let c = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            ProcessVector::new(i as u64, c).expect("finite")
        })
        .collect()
}

pub fn vector_records(n: usize, dim: usize, seed: u64) -> Vec<Record> {
    vectors(n, dim, seed)
        .into_iter()
        .map(Record::Vector)
        .collect()
}
