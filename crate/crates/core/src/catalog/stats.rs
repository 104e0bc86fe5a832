use serde::Serialize;

use super::{CatalogError, Place};

/// Summary of apartment monthly costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostStats {
    /// Apartments with a monthly cost.
    pub count: usize,
    /// Apartments skipped for lacking a monthly cost.
    pub unpriced: usize,
    pub median_cost: f64,
    /// Population standard deviation.
    pub stddev_cost: f64,
}

/// Median and population standard deviation of apartment monthly costs.
/// Places that are not apartments are ignored.
pub fn catalog_stats<'a, I>(apartments: I) -> Result<CostStats, CatalogError>
where
    I: IntoIterator<Item = &'a Place>,
{
    let mut costs = Vec::new();
    let mut unpriced = 0;
    for apt in apartments.into_iter().filter_map(Place::apartment) {
        match apt.monthly_cost {
            Some(c) => costs.push(c),
            None => unpriced += 1,
        }
    }
    if costs.is_empty() {
        return Err(CatalogError::EmptyStatistics);
    }
    costs.sort_by(f64::total_cmp);
    let n = costs.len();
    let median_cost = if n % 2 == 1 {
        costs[n / 2]
    } else {
        (costs[n / 2 - 1] + costs[n / 2]) / 2.0
    };
    let mean = costs.iter().sum::<f64>() / n as f64;
    let variance = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n as f64;
    Ok(CostStats {
        count: n,
        unpriced,
        median_cost,
        stddev_cost: variance.sqrt(),
    })
}
