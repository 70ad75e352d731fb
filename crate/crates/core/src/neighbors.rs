//! Brute-force nearest-neighbor search shared by the kNN regressor and the
//! kNN-distance detector.

/// Squared Euclidean distance. Callers guarantee equal lengths.
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices and Euclidean distances of the `k` reference points closest to
/// `query`, nearest first. Ties are broken by index so results are
/// deterministic.
pub(crate) fn k_nearest(reference: &[Vec<f64>], query: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut dists: Vec<(f64, usize)> = reference
        .iter()
        .enumerate()
        .map(|(i, p)| (squared_distance(p, query), i))
        .collect();
    let k = k.min(dists.len());
    let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dists.len() {
        dists.select_nth_unstable_by(k, order);
        dists.truncate(k);
    }
    dists.sort_by(order);
    dists.into_iter().map(|(d, i)| (i, d.sqrt())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_nearest_in_order() {
        let pts = vec![vec![0.0], vec![5.0], vec![1.0], vec![2.0]];
        let nn = k_nearest(&pts, &[1.2], 2);
        assert_eq!(nn.iter().map(|p| p.0).collect::<Vec<_>>(), vec![2, 3]);
        assert!((nn[0].1 - 0.2).abs() < 1e-12);
    }

    #[test]
    fn ties_break_by_index() {
        let pts = vec![vec![1.0], vec![-1.0], vec![1.0]];
        let nn = k_nearest(&pts, &[0.0], 2);
        assert_eq!(nn.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 1]);
    }
}
