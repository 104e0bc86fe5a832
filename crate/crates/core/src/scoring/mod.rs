//! Criterion scores, weighted composites, the desirability raster and the
//! apartment ranking.
//!
//! Area criteria read the percentile of the block group containing a point
//! (cheaper and safer areas score higher). Proximity criteria decay
//! linearly from 1 at the nearest place of a category to 0 at a cutoff.
//! Criteria without data at a point drop out and the remaining weights
//! are renormalized; [`ScoreBreakdown::completeness`] reports how much of
//! the requested weight survived.

mod percentile;
mod weights;

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::catalog::{BlockGroup, Catalog, Place, PlaceCategory};
use crate::geo::{haversine_distance, GeoError, GeoPoint, GridSpec, RasterGrid};
use crate::spatial_index::PlaceIndex;

pub use percentile::{hazen_percentiles, percentile_scores};
pub use weights::{proximity_score, CriterionId, ProximityConfig, WeightError, WeightVector, WEIGHT_PARTS};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("cannot rank an empty list of values")]
    EmptyInput,
    #[error("value {0} is not finite")]
    NonFinite(f64),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Block-group percentiles for each area criterion, already oriented so
/// that higher is better.
#[derive(Debug, Clone, Default)]
pub struct PercentileTable {
    affordability: HashMap<String, f64>,
    jobs: HashMap<String, f64>,
    retail: HashMap<String, f64>,
    crime: HashMap<String, f64>,
}

impl PercentileTable {
    pub fn build(block_groups: &[BlockGroup]) -> Self {
        fn table<F>(bgs: &[BlockGroup], value: F) -> HashMap<String, f64>
        where
            F: Fn(&BlockGroup) -> Option<f64>,
        {
            let values: Vec<(String, f64)> = bgs
                .iter()
                .filter_map(|bg| value(bg).map(|v| (bg.id().to_string(), v)))
                .collect();
            if values.is_empty() {
                return HashMap::new();
            }
            percentile_scores(&values).expect("block-group attributes are finite")
        }
        Self {
            affordability: table(block_groups, |bg| Some(-bg.est_monthly_cost())),
            jobs: table(block_groups, |bg| Some(bg.jobs_index())),
            retail: table(block_groups, |bg| Some(bg.retail_index())),
            crime: table(block_groups, |bg| bg.crime_index().map(|c| -c)),
        }
    }

    /// Percentile of block group `id` for an area criterion; `None` for
    /// proximity criteria or groups without the attribute.
    pub fn get(&self, criterion: CriterionId, id: &str) -> Option<f64> {
        let table = match criterion {
            CriterionId::Affordability => &self.affordability,
            CriterionId::Jobs => &self.jobs,
            CriterionId::Retail => &self.retail,
            CriterionId::Crime => &self.crime,
            _ => return None,
        };
        table.get(id).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionScore {
    pub criterion: CriterionId,
    pub score: Option<f64>,
    pub effective_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreBreakdown {
    pub composite: Option<f64>,
    /// Share of requested weight backed by data at this location.
    pub completeness: f64,
    /// One entry per criterion with non-zero weight.
    pub criteria: Vec<CriterionScore>,
}

impl ScoreBreakdown {
    pub fn score(&self, criterion: CriterionId) -> Option<f64> {
        self.criteria.iter().find(|c| c.criterion == criterion).and_then(|c| c.score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedApartment {
    pub rank: usize,
    pub id: String,
    pub name: String,
    pub composite: Option<f64>,
    pub breakdown: ScoreBreakdown,
}

/// Raster evaluation strategy. Both produce identical grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Evaluation {
    Sequential,
    #[default]
    Parallel,
}

/// A catalog snapshot with everything needed to score locations.
#[derive(Debug, Clone)]
pub struct Scorer {
    catalog: Catalog,
    index: PlaceIndex,
    tables: PercentileTable,
    proximity: ProximityConfig,
}

impl Scorer {
    pub fn new(catalog: Catalog, proximity: ProximityConfig) -> Self {
        let index = PlaceIndex::build(&catalog);
        let tables = PercentileTable::build(catalog.block_groups());
        Self {
            catalog,
            index,
            tables,
            proximity,
        }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn index(&self) -> &PlaceIndex {
        &self.index
    }

    pub fn tables(&self) -> &PercentileTable {
        &self.tables
    }

    pub fn proximity(&self) -> &ProximityConfig {
        &self.proximity
    }

    /// Score in [0, 1] for one criterion at `p`, or `None` when the data
    /// needed is absent (no containing block group, missing attribute, or
    /// an empty place category).
    pub fn criterion_score(&self, p: &GeoPoint, criterion: CriterionId) -> Option<f64> {
        if criterion.is_area() {
            let bg = self.catalog.block_group_containing(p)?;
            self.tables.get(criterion, bg.id())
        } else {
            self.proximity_criterion(p, criterion)
        }
    }

    fn proximity_criterion(&self, p: &GeoPoint, criterion: CriterionId) -> Option<f64> {
        let cutoff = self.proximity.cutoff(criterion)?;
        let distance = match criterion.proximity_category() {
            Some(category) => self.nearest_distance(p, category)?,
            None => haversine_distance(p, &self.catalog.anchor()),
        };
        Some(proximity_score(distance, cutoff))
    }

    pub fn nearest_distance(&self, p: &GeoPoint, category: PlaceCategory) -> Option<f64> {
        self.index.nearest(p, category).map(|n| n.distance)
    }

    pub fn composite_score(&self, p: &GeoPoint, weights: &WeightVector) -> ScoreBreakdown {
        self.compose(p, weights, None)
    }

    /// `affordability` overrides the block-group lookup when given.
    fn compose(&self, p: &GeoPoint, weights: &WeightVector, affordability: Option<f64>) -> ScoreBreakdown {
        let mut bg: Option<Option<&BlockGroup>> = None;
        let mut scored: Vec<(CriterionId, Option<f64>)> = Vec::with_capacity(8);
        for c in weights.active() {
            let score = if c == CriterionId::Affordability && affordability.is_some() {
                affordability
            } else if c.is_area() {
                let containing = *bg.get_or_insert_with(|| self.catalog.block_group_containing(p));
                containing.and_then(|g| self.tables.get(c, g.id()))
            } else {
                self.proximity_criterion(p, c)
            };
            scored.push((c, score));
        }
        combine(weights, scored)
    }

    pub fn score_raster(&self, spec: &GridSpec, weights: &WeightVector) -> RasterGrid {
        self.score_raster_with(spec, weights, Evaluation::Parallel)
    }

    /// Composite score at every cell center; cells with no usable
    /// criterion are missing.
    pub fn score_raster_with(&self, spec: &GridSpec, weights: &WeightVector, evaluation: Evaluation) -> RasterGrid {
        let cell = |i: usize| {
            let center = spec
                .cell_center(i / spec.cols(), i % spec.cols())
                .expect("index within grid");
            self.composite_score(&center, weights).composite
        };
        let values: Vec<Option<f64>> = match evaluation {
            Evaluation::Sequential => (0..spec.len()).map(cell).collect(),
            Evaluation::Parallel => (0..spec.len()).into_par_iter().map(cell).collect(),
        };
        RasterGrid::new(*spec, values).expect("composites lie in [0, 1]")
    }

    /// Scores and orders apartments: composite descending, then
    /// completeness descending, then name, then id. Apartments with a
    /// known monthly cost are scored on affordability by their cost
    /// percentile among the priced apartments in `apartments`.
    pub fn rank_apartments(&self, apartments: &[&Place], weights: &WeightVector) -> Vec<RankedApartment> {
        let priced: Vec<(&str, f64)> = apartments
            .iter()
            .filter_map(|a| a.monthly_cost().map(|c| (a.id.as_str(), -c)))
            .collect();
        let cost_pct = if priced.is_empty() {
            HashMap::new()
        } else {
            percentile_scores(&priced).expect("monthly costs are finite")
        };

        let mut ranked: Vec<RankedApartment> = apartments
            .iter()
            .map(|a| {
                let breakdown = self.compose(&a.location, weights, cost_pct.get(a.id.as_str()).copied());
                RankedApartment {
                    rank: 0,
                    id: a.id.clone(),
                    name: a.name.clone(),
                    composite: breakdown.composite,
                    breakdown,
                }
            })
            .collect();
        ranked.sort_by(ranking_order);
        for (i, r) in ranked.iter_mut().enumerate() {
            r.rank = i + 1;
        }
        ranked
    }

    /// Ranks every apartment in the catalog.
    pub fn rank_catalog(&self, weights: &WeightVector) -> Vec<RankedApartment> {
        let apartments: Vec<&Place> = self.catalog.apartments().collect();
        self.rank_apartments(&apartments, weights)
    }
}

fn ranking_order(a: &RankedApartment, b: &RankedApartment) -> Ordering {
    let by_composite = match (a.composite, b.composite) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    };
    by_composite
        .then_with(|| b.breakdown.completeness.total_cmp(&a.breakdown.completeness))
        .then_with(|| a.name.cmp(&b.name))
        .then_with(|| a.id.cmp(&b.id))
}

/// Weighted mean over the criteria that have a score, using the integer
/// weight parts so the result does not depend on the input weight scale.
fn combine(weights: &WeightVector, scored: Vec<(CriterionId, Option<f64>)>) -> ScoreBreakdown {
    let requested: u64 = weights.active().map(|c| weights.parts(c)).sum();
    let available: u64 = scored
        .iter()
        .filter(|(_, s)| s.is_some())
        .map(|(c, _)| weights.parts(*c))
        .sum();
    let criteria: Vec<CriterionScore> = scored
        .into_iter()
        .map(|(criterion, score)| CriterionScore {
            criterion,
            score,
            effective_weight: match score {
                Some(_) => weights.parts(criterion) as f64 / available as f64,
                None => 0.0,
            },
        })
        .collect();
    if available == 0 {
        return ScoreBreakdown {
            composite: None,
            completeness: 0.0,
            criteria,
        };
    }
    let composite = criteria
        .iter()
        .filter_map(|c| c.score.map(|s| s * c.effective_weight))
        .sum::<f64>()
        .clamp(0.0, 1.0);
    ScoreBreakdown {
        composite: Some(composite),
        completeness: available as f64 / requested as f64,
        criteria,
    }
}
