//! Hazen plotting-position percentiles with average-rank ties.

use std::collections::HashMap;
use std::hash::Hash;

use super::ScoringError;

/// Percentile of each value among all values, in input order.
///
/// `score = (r - 0.5) / n` where `r` is the 1-based rank and tied values
/// share the mean of their ranks. Scores fall strictly inside (0, 1) and
/// depend only on the ordering of the values.
pub fn hazen_percentiles(values: &[f64]) -> Result<Vec<f64>, ScoringError> {
    if values.is_empty() {
        return Err(ScoringError::EmptyInput);
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(ScoringError::NonFinite(*bad));
    }
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let mut scores = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        // -0.0 and 0.0 compare equal here, unlike total_cmp.
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Ranks start+1..=end averaged.
        let mean_rank = (start + 1 + end) as f64 / 2.0;
        let score = (mean_rank - 0.5) / n as f64;
        for &i in &order[start..end] {
            scores[i] = score;
        }
        start = end;
    }
    Ok(scores)
}

/// Keyed form of [`hazen_percentiles`].
pub fn percentile_scores<K>(values: &[(K, f64)]) -> Result<HashMap<K, f64>, ScoringError>
where
    K: Clone + Eq + Hash,
{
    let raw: Vec<f64> = values.iter().map(|(_, v)| *v).collect();
    let scores = hazen_percentiles(&raw)?;
    Ok(values.iter().map(|(k, _)| k.clone()).zip(scores).collect())
}
