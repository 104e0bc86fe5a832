use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::PlaceCategory;
use crate::geo::METERS_PER_MILE;

/// Resolution of normalized weights: one part in a billion.
pub const WEIGHT_PARTS: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionId {
    Affordability,
    Jobs,
    Retail,
    Crime,
    ProxTransit,
    ProxSchools,
    ProxMarkets,
    ProxAnchor,
}

impl CriterionId {
    pub const ALL: [CriterionId; 8] = [
        CriterionId::Affordability,
        CriterionId::Jobs,
        CriterionId::Retail,
        CriterionId::Crime,
        CriterionId::ProxTransit,
        CriterionId::ProxSchools,
        CriterionId::ProxMarkets,
        CriterionId::ProxAnchor,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CriterionId::Affordability => "affordability",
            CriterionId::Jobs => "jobs",
            CriterionId::Retail => "retail",
            CriterionId::Crime => "crime",
            CriterionId::ProxTransit => "prox_transit",
            CriterionId::ProxSchools => "prox_schools",
            CriterionId::ProxMarkets => "prox_markets",
            CriterionId::ProxAnchor => "prox_anchor",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }

    pub fn is_area(&self) -> bool {
        matches!(
            self,
            CriterionId::Affordability | CriterionId::Jobs | CriterionId::Retail | CriterionId::Crime
        )
    }

    pub fn is_proximity(&self) -> bool {
        !self.is_area()
    }

    /// Place category whose nearest member drives a proximity criterion.
    /// `ProxAnchor` measures to the catalog anchor instead.
    pub fn proximity_category(&self) -> Option<PlaceCategory> {
        match self {
            CriterionId::ProxTransit => Some(PlaceCategory::TransitStop),
            CriterionId::ProxSchools => Some(PlaceCategory::School),
            CriterionId::ProxMarkets => Some(PlaceCategory::Market),
            _ => None,
        }
    }
}

impl fmt::Display for CriterionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CriterionId {
    type Err = WeightError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CriterionId::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| WeightError::UnknownCriterion(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightError {
    #[error("unknown criterion {0:?}")]
    UnknownCriterion(String),
    #[error("weight for {criterion} must be non-negative, got {value}")]
    Negative { criterion: CriterionId, value: f64 },
    #[error("weight for {criterion} must be finite, got {value}")]
    NonFinite { criterion: CriterionId, value: f64 },
    #[error("at least one weight must be positive")]
    AllZero,
    #[error("distance cutoff for {criterion} must be positive and finite, got {value}")]
    InvalidCutoff { criterion: CriterionId, value: f64 },
}

impl WeightError {
    /// Criterion the error is about, if any.
    pub fn field(&self) -> Option<String> {
        match self {
            WeightError::UnknownCriterion(name) => Some(name.clone()),
            WeightError::Negative { criterion, .. }
            | WeightError::NonFinite { criterion, .. }
            | WeightError::InvalidCutoff { criterion, .. } => Some(criterion.to_string()),
            WeightError::AllZero => None,
        }
    }
}

fn quantize(raw: &[f64; 8]) -> Result<[u64; 8], WeightError> {
    let mut total: f64 = raw.iter().sum();
    let mut scaled = *raw;
    if !total.is_finite() {
        // Each weight is finite but the sum overflowed; rescale first.
        let max = raw.iter().copied().fold(0.0, f64::max);
        scaled.iter_mut().for_each(|w| *w /= max);
        total = scaled.iter().sum();
    }
    if total <= 0.0 {
        return Err(WeightError::AllZero);
    }
    let mut parts = [0; 8];
    for (p, w) in parts.iter_mut().zip(scaled) {
        *p = (w / total * WEIGHT_PARTS as f64).round() as u64;
    }
    Ok(parts)
}

/// Non-negative criterion weights, at least one positive.
///
/// On construction the weights are normalized to sum to one and rounded to
/// integer parts of [`WEIGHT_PARTS`]. Every score computed downstream uses
/// only those parts, so any positive rescaling of the input yields
/// bit-identical results.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    raw: [f64; 8],
    parts: [u64; 8],
}

impl WeightVector {
    pub fn new<I>(weights: I) -> Result<Self, WeightError>
    where
        I: IntoIterator<Item = (CriterionId, f64)>,
    {
        let mut raw = [0.0; 8];
        for (criterion, value) in weights {
            if !value.is_finite() {
                return Err(WeightError::NonFinite { criterion, value });
            }
            if value < 0.0 {
                return Err(WeightError::Negative { criterion, value });
            }
            raw[criterion.slot()] = value;
        }
        let parts = quantize(&raw)?;
        Ok(Self { raw, parts })
    }

    /// Weights keyed by criterion name, as received over the wire.
    pub fn from_names<'a, I>(weights: I) -> Result<Self, WeightError>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let parsed = weights
            .into_iter()
            .map(|(name, w)| name.parse::<CriterionId>().map(|c| (c, w)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(parsed)
    }

    pub fn one_hot(criterion: CriterionId) -> Self {
        Self::new([(criterion, 1.0)]).expect("one-hot weights are valid")
    }

    /// Starting weights: rent and transit access count double, every other
    /// criterion once.
    pub fn preset() -> Self {
        Self::new(CriterionId::ALL.map(|c| {
            let w = match c {
                CriterionId::Affordability | CriterionId::ProxTransit => 2.0,
                _ => 1.0,
            };
            (c, w)
        }))
        .expect("preset weights are valid")
    }

    pub fn raw(&self, criterion: CriterionId) -> f64 {
        self.raw[criterion.slot()]
    }

    /// Normalized weight in parts of [`WEIGHT_PARTS`].
    pub fn parts(&self, criterion: CriterionId) -> u64 {
        self.parts[criterion.slot()]
    }

    /// Criteria whose normalized weight is non-zero, in [`CriterionId::ALL`] order.
    pub fn active(&self) -> impl Iterator<Item = CriterionId> + '_ {
        CriterionId::ALL.into_iter().filter(|c| self.parts(*c) > 0)
    }

    pub fn to_map(&self) -> BTreeMap<CriterionId, f64> {
        CriterionId::ALL.into_iter().map(|c| (c, self.raw(c))).collect()
    }
}

/// Distance at which each proximity criterion decays to zero, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProximityConfig {
    pub transit: f64,
    pub schools: f64,
    pub markets: f64,
    pub anchor: f64,
}

impl Default for ProximityConfig {
    /// One mile for transit and schools, two for markets, ten for the anchor.
    fn default() -> Self {
        Self {
            transit: METERS_PER_MILE,
            schools: METERS_PER_MILE,
            markets: 2.0 * METERS_PER_MILE,
            anchor: 10.0 * METERS_PER_MILE,
        }
    }
}

impl ProximityConfig {
    pub fn new(transit: f64, schools: f64, markets: f64, anchor: f64) -> Result<Self, WeightError> {
        let cfg = Self {
            transit,
            schools,
            markets,
            anchor,
        };
        for c in CriterionId::ALL.into_iter().filter(CriterionId::is_proximity) {
            let value = cfg.cutoff(c).expect("proximity criterion");
            if !(value.is_finite() && value > 0.0) {
                return Err(WeightError::InvalidCutoff { criterion: c, value });
            }
        }
        Ok(cfg)
    }

    pub fn cutoff(&self, criterion: CriterionId) -> Option<f64> {
        match criterion {
            CriterionId::ProxTransit => Some(self.transit),
            CriterionId::ProxSchools => Some(self.schools),
            CriterionId::ProxMarkets => Some(self.markets),
            CriterionId::ProxAnchor => Some(self.anchor),
            _ => None,
        }
    }
}

/// Linear decay: 1 at distance 0, 0 at and beyond `cutoff`.
pub fn proximity_score(distance: f64, cutoff: f64) -> f64 {
    (1.0 - distance / cutoff).max(0.0)
}
