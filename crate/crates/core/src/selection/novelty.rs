/// Euclidean distance between two descriptors.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean distance from `candidate` to its `k` nearest neighbours among
/// `others`; averages over all of them when fewer than `k` exist.
/// `None` when `others` is empty.
pub fn knn_novelty<'a, I>(candidate: &[f64], others: I, k: usize) -> Option<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut dists: Vec<f64> = others.into_iter().map(|o| distance(candidate, o)).collect();
    if dists.is_empty() {
        return None;
    }
    let take = k.max(1).min(dists.len());
    if take < dists.len() {
        dists.select_nth_unstable_by(take - 1, f64::total_cmp);
    }
    let mut nearest = dists[..take].to_vec();
    // Fixed summation order keeps results bit-identical across runs.
    nearest.sort_by(f64::total_cmp);
    Some(nearest.iter().sum::<f64>() / take as f64)
}
