//! Places, apartments, schools and census block groups.
//!
//! A [`Catalog`] is an immutable snapshot: it validates id uniqueness and
//! fills each apartment's distance to the anchor point on construction.

mod ingest;
mod stats;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use md5::{Digest, Md5};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine_distance, BoundingBox, GeoError, GeoPoint, Ring};

pub use ingest::{
    parse_blockgroups_csv, parse_places_csv, parse_places_csv_with, write_blockgroups_csv,
    write_places_csv, AliasTable, BLOCKGROUPS_HEADER, PLACES_HEADER,
};
pub use stats::{catalog_stats, CostStats};

/// Default pre-filter ceiling for block-group monthly housing cost, USD.
pub const DEFAULT_AFFORDABILITY_CEILING: f64 = 3000.0;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("schema error at line {line}: {message}")]
    Schema { line: u64, message: String },
    #[error("row error at line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("unknown place category {raw:?} at line {line}")]
    UnknownCategory { line: u64, raw: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("no apartments with a monthly cost")]
    EmptyStatistics,
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceCategory {
    Apartment,
    TransitStop,
    School,
    Market,
    FaithCenter,
    Esl,
    Daycare,
    Health,
    Hospital,
    DdsOffice,
    DfcsOffice,
    SsnOffice,
}

impl PlaceCategory {
    pub const ALL: [PlaceCategory; 12] = [
        PlaceCategory::Apartment,
        PlaceCategory::TransitStop,
        PlaceCategory::School,
        PlaceCategory::Market,
        PlaceCategory::FaithCenter,
        PlaceCategory::Esl,
        PlaceCategory::Daycare,
        PlaceCategory::Health,
        PlaceCategory::Hospital,
        PlaceCategory::DdsOffice,
        PlaceCategory::DfcsOffice,
        PlaceCategory::SsnOffice,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PlaceCategory::Apartment => "apartment",
            PlaceCategory::TransitStop => "transit_stop",
            PlaceCategory::School => "school",
            PlaceCategory::Market => "market",
            PlaceCategory::FaithCenter => "faith_center",
            PlaceCategory::Esl => "esl",
            PlaceCategory::Daycare => "daycare",
            PlaceCategory::Health => "health",
            PlaceCategory::Hospital => "hospital",
            PlaceCategory::DdsOffice => "dds_office",
            PlaceCategory::DfcsOffice => "dfcs_office",
            PlaceCategory::SsnOffice => "ssn_office",
        }
    }
}

impl fmt::Display for PlaceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown place category {0:?}")]
pub struct UnknownCategory(pub String);

impl FromStr for PlaceCategory {
    type Err = UnknownCategory;

    /// Canonical snake_case names only; raw source strings go through
    /// [`AliasTable`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlaceCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ApartmentDetails {
    /// USD per month, positive when present.
    pub monthly_cost: Option<f64>,
    /// Metres to the catalog anchor; set by [`Catalog::new`].
    pub anchor_distance: Option<f64>,
    /// Precomputed travel time to the anchor, passed through from input.
    pub travel_minutes: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SchoolDetails {
    /// `None` when the source did not say.
    pub is_public: Option<bool>,
    pub free_reduced_lunch_pct: Option<f64>,
    pub rating: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(untagged)]
pub enum PlaceDetails {
    #[default]
    General,
    Apartment(ApartmentDetails),
    School(SchoolDetails),
}

/// A point feature. Apartments and schools carry their extra fields in
/// [`PlaceDetails`].
#[derive(Debug, Clone, PartialEq)]
pub struct Place {
    pub id: String,
    pub name: String,
    pub category: PlaceCategory,
    pub location: GeoPoint,
    pub address: String,
    pub phone: Option<String>,
    pub zipcode: Option<String>,
    pub website: Option<String>,
    pub faith_tradition: Option<String>,
    pub details: PlaceDetails,
}

impl Place {
    /// A place with no optional fields, id derived from name and location.
    pub fn new(name: &str, category: PlaceCategory, location: GeoPoint, address: &str) -> Self {
        let details = match category {
            PlaceCategory::Apartment => PlaceDetails::Apartment(ApartmentDetails::default()),
            PlaceCategory::School => PlaceDetails::School(SchoolDetails::default()),
            _ => PlaceDetails::General,
        };
        Self {
            id: place_id(name, &location),
            name: name.to_string(),
            category,
            location,
            address: address.to_string(),
            phone: None,
            zipcode: None,
            website: None,
            faith_tradition: None,
            details,
        }
    }

    pub fn apartment(&self) -> Option<&ApartmentDetails> {
        match &self.details {
            PlaceDetails::Apartment(a) => Some(a),
            _ => None,
        }
    }

    pub fn school(&self) -> Option<&SchoolDetails> {
        match &self.details {
            PlaceDetails::School(s) => Some(s),
            _ => None,
        }
    }

    pub fn monthly_cost(&self) -> Option<f64> {
        self.apartment().and_then(|a| a.monthly_cost)
    }

    pub fn with_monthly_cost(mut self, cost: f64) -> Self {
        if let PlaceDetails::Apartment(a) = &mut self.details {
            a.monthly_cost = Some(cost);
        }
        self
    }

    fn validate(&self) -> Result<(), CatalogError> {
        if self.name.trim().is_empty() {
            return Err(CatalogError::InvalidValue(format!("place {} has an empty name", self.id)));
        }
        let consistent = matches!(
            (&self.details, self.category),
            (PlaceDetails::Apartment(_), PlaceCategory::Apartment)
                | (PlaceDetails::School(_), PlaceCategory::School)
                | (PlaceDetails::General, _)
        );
        if !consistent {
            return Err(CatalogError::InvalidValue(format!(
                "place {} has details that do not match category {}",
                self.id, self.category
            )));
        }
        if let Some(cost) = self.monthly_cost() {
            if !(cost.is_finite() && cost > 0.0) {
                return Err(CatalogError::InvalidValue(format!(
                    "place {} has non-positive monthly cost {cost}",
                    self.id
                )));
            }
        }
        if let Some(pct) = self.school().and_then(|s| s.free_reduced_lunch_pct) {
            if !(0.0..=100.0).contains(&pct) {
                return Err(CatalogError::InvalidValue(format!(
                    "place {} has free/reduced lunch percentage {pct} outside [0, 100]",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Deterministic place id from name and coordinates.
///
/// Coordinates are hashed in their shortest round-trip decimal form, so an
/// id is stable across parse/serialize cycles.
pub fn place_id(name: &str, location: &GeoPoint) -> String {
    let mut hasher = Md5::new();
    hasher.update(name.trim().as_bytes());
    hasher.update([0x1f]);
    hasher.update(location.lat().to_string().as_bytes());
    hasher.update([0x1f]);
    hasher.update(location.lon().to_string().as_bytes());
    let digest = hasher.finalize();
    format!("p{}", hex::encode(&digest[..8]))
}

/// Monthly housing cost of a block group: share of income spent on
/// housing times median annual income, over twelve months.
pub fn estimate_monthly_cost(pct_income_on_housing: f64, median_annual_income: f64) -> Result<f64, CatalogError> {
    if !(pct_income_on_housing > 0.0 && pct_income_on_housing <= 1.0) {
        return Err(CatalogError::InvalidValue(format!(
            "share of income on housing {pct_income_on_housing} is outside (0, 1]"
        )));
    }
    if !(median_annual_income.is_finite() && median_annual_income >= 0.0) {
        return Err(CatalogError::InvalidValue(format!(
            "median annual income {median_annual_income} must be finite and non-negative"
        )));
    }
    Ok(pct_income_on_housing * median_annual_income / 12.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGroup {
    id: String,
    boundary: Ring,
    bbox: BoundingBox,
    pct_income_on_housing: f64,
    median_annual_income: f64,
    jobs_index: f64,
    retail_index: f64,
    crime_index: Option<f64>,
    est_monthly_cost: f64,
}

impl BlockGroup {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        boundary: Ring,
        pct_income_on_housing: f64,
        median_annual_income: f64,
        jobs_index: f64,
        retail_index: f64,
        crime_index: Option<f64>,
    ) -> Result<Self, CatalogError> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(CatalogError::InvalidValue("block group id is empty".into()));
        }
        let est_monthly_cost = estimate_monthly_cost(pct_income_on_housing, median_annual_income)?;
        for (label, v) in [("jobs index", Some(jobs_index)), ("retail index", Some(retail_index)), ("crime index", crime_index)] {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(CatalogError::InvalidValue(format!("{label} {v} is not finite")));
                }
            }
        }
        Ok(Self {
            id,
            bbox: boundary.bbox(),
            boundary,
            pct_income_on_housing,
            median_annual_income,
            jobs_index,
            retail_index,
            crime_index,
            est_monthly_cost,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn boundary(&self) -> &Ring {
        &self.boundary
    }

    pub fn pct_income_on_housing(&self) -> f64 {
        self.pct_income_on_housing
    }

    pub fn median_annual_income(&self) -> f64 {
        self.median_annual_income
    }

    pub fn jobs_index(&self) -> f64 {
        self.jobs_index
    }

    pub fn retail_index(&self) -> f64 {
        self.retail_index
    }

    pub fn crime_index(&self) -> Option<f64> {
        self.crime_index
    }

    pub fn est_monthly_cost(&self) -> f64 {
        self.est_monthly_cost
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        self.bbox.contains(p) && self.boundary.contains(p)
    }
}

/// Keeps block groups whose estimated cost is at most `ceiling`, in input
/// order. Groups costing exactly the ceiling are kept.
pub fn filter_affordable(block_groups: &[BlockGroup], ceiling: f64) -> Vec<BlockGroup> {
    block_groups
        .iter()
        .filter(|bg| bg.est_monthly_cost <= ceiling)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    places: Vec<Place>,
    block_groups: Vec<BlockGroup>,
    anchor: GeoPoint,
    by_id: HashMap<String, usize>,
}

impl Catalog {
    pub fn new(places: Vec<Place>, mut block_groups: Vec<BlockGroup>, anchor: GeoPoint) -> Result<Self, CatalogError> {
        let mut by_id = HashMap::with_capacity(places.len());
        let mut places = places;
        for (i, place) in places.iter_mut().enumerate() {
            place.validate()?;
            if let PlaceDetails::Apartment(a) = &mut place.details {
                a.anchor_distance = Some(haversine_distance(&place.location, &anchor));
            }
            if by_id.insert(place.id.clone(), i).is_some() {
                return Err(CatalogError::DuplicateId(place.id.clone()));
            }
        }
        block_groups.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = block_groups.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(CatalogError::DuplicateId(w[0].id.clone()));
        }
        if let Some(bg) = block_groups.iter().find(|bg| by_id.contains_key(&bg.id)) {
            return Err(CatalogError::DuplicateId(bg.id.clone()));
        }
        Ok(Self {
            places,
            block_groups,
            anchor,
            by_id,
        })
    }

    pub fn empty(anchor: GeoPoint) -> Self {
        Self::new(Vec::new(), Vec::new(), anchor).expect("empty catalog is valid")
    }

    /// Reads `places.csv`, `blockgroups.csv` and `category_aliases.csv`
    /// from `dir`; each file is optional. Block groups costing more than
    /// `ceiling` are dropped.
    pub fn load_dir(dir: &Path, anchor: GeoPoint, ceiling: f64) -> Result<Self, CatalogError> {
        let aliases_path = dir.join("category_aliases.csv");
        let aliases = if aliases_path.exists() {
            AliasTable::from_csv(std::fs::File::open(aliases_path)?)?
        } else {
            AliasTable::default()
        };
        let places_path = dir.join("places.csv");
        let places = if places_path.exists() {
            parse_places_csv_with(std::fs::File::open(places_path)?, &aliases)?
        } else {
            Vec::new()
        };
        let bg_path = dir.join("blockgroups.csv");
        let block_groups = if bg_path.exists() {
            filter_affordable(&parse_blockgroups_csv(std::fs::File::open(bg_path)?)?, ceiling)
        } else {
            Vec::new()
        };
        Self::new(places, block_groups, anchor)
    }

    /// New snapshot with `extra` appended after the existing places.
    pub fn with_places(&self, extra: Vec<Place>) -> Result<Self, CatalogError> {
        let mut places = self.places.clone();
        places.extend(extra);
        Self::new(places, self.block_groups.clone(), self.anchor)
    }

    pub fn places(&self) -> &[Place] {
        &self.places
    }

    pub fn place(&self, id: &str) -> Option<&Place> {
        self.by_id.get(id).map(|&i| &self.places[i])
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn places_in(&self, category: PlaceCategory) -> impl Iterator<Item = &Place> {
        self.places.iter().filter(move |p| p.category == category)
    }

    pub fn apartments(&self) -> impl Iterator<Item = &Place> {
        self.places_in(PlaceCategory::Apartment)
    }

    /// Sorted by ascending id.
    pub fn block_groups(&self) -> &[BlockGroup] {
        &self.block_groups
    }

    pub fn anchor(&self) -> GeoPoint {
        self.anchor
    }

    /// Every coordinate in the catalog: place locations, block-group
    /// vertices and the anchor.
    pub fn extent(&self) -> BoundingBox {
        let anchor = [self.anchor];
        let points = anchor
            .iter()
            .chain(self.places.iter().map(|p| &p.location))
            .chain(self.block_groups.iter().flat_map(|bg| bg.boundary.vertices()));
        BoundingBox::enclosing(points).expect("anchor is always present")
    }

    pub fn block_group_containing(&self, p: &GeoPoint) -> Option<&BlockGroup> {
        block_group_containing(self, p)
    }
}

/// First block group, by ascending id, whose boundary contains `p`.
pub fn block_group_containing<'a>(catalog: &'a Catalog, p: &GeoPoint) -> Option<&'a BlockGroup> {
    catalog.block_groups.iter().find(|bg| bg.contains(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn square(lat0: f64, lon0: f64, size: f64) -> Ring {
        Ring::new(vec![
            pt(lat0, lon0),
            pt(lat0, lon0 + size),
            pt(lat0 + size, lon0 + size),
            pt(lat0 + size, lon0),
        ])
        .unwrap()
    }

    fn bg(id: &str, ring: Ring, pct: f64, income: f64) -> BlockGroup {
        BlockGroup::new(id, ring, pct, income, 1.0, 1.0, None).unwrap()
    }

    #[test]
    fn monthly_cost_arithmetic() {
        assert_eq!(estimate_monthly_cost(0.30, 40_000.0).unwrap(), 1000.0);
        assert_eq!(estimate_monthly_cost(0.7, 0.0).unwrap(), 0.0);
        assert!((estimate_monthly_cost(0.25, 148_800.0).unwrap() - 3100.0).abs() < 1e-9);
        assert!(estimate_monthly_cost(0.0, 1.0).is_err());
        assert!(estimate_monthly_cost(1.5, 1.0).is_err());
        assert!(estimate_monthly_cost(0.5, -1.0).is_err());
        assert!(estimate_monthly_cost(f64::NAN, 1.0).is_err());
        assert_eq!(estimate_monthly_cost(1.0, 12.0).unwrap(), 1.0);
    }

    #[test]
    fn filter_is_inclusive_at_ceiling() {
        let r = square(0.0, 0.0, 1.0);
        // 0.25 * 48000 / 12 = 1000; 0.25 * 144000 / 12 = 3000; 0.25 * 148800 / 12 = 3100
        let groups = vec![
            bg("a", r.clone(), 0.25, 48_000.0),
            bg("b", r.clone(), 0.25, 144_000.0),
            bg("c", r.clone(), 0.25, 148_800.0),
        ];
        let kept: Vec<_> = filter_affordable(&groups, DEFAULT_AFFORDABILITY_CEILING)
            .iter()
            .map(|g| g.id().to_string())
            .collect();
        assert_eq!(kept, ["a", "b"]);
        let kept = filter_affordable(&groups, 1000.0);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id(), "a");
        assert!(filter_affordable(&[], 3000.0).is_empty());
    }

    #[test]
    fn filter_idempotent_and_monotone() {
        let r = square(0.0, 0.0, 1.0);
        let groups: Vec<_> = (0..40)
            .map(|i| bg(&format!("g{i:02}"), r.clone(), 0.05 + 0.02 * i as f64, 30_000.0 + 1_500.0 * i as f64))
            .collect();
        for ceiling in [0.5, 100.0, 900.0, 2000.0, 3000.0, 10_000.0] {
            let once = filter_affordable(&groups, ceiling);
            assert_eq!(filter_affordable(&once, ceiling), once);
            let wider = filter_affordable(&groups, ceiling * 1.5);
            assert!(once.iter().all(|g| wider.contains(g)));
        }
    }

    #[test]
    fn containing_block_group_tie_breaks_on_id() {
        // Two squares sharing the edge lon = 1.
        let catalog = Catalog::new(
            vec![],
            vec![bg("z-east", square(0.0, 1.0, 1.0), 0.3, 40_000.0), bg("a-west", square(0.0, 0.0, 1.0), 0.3, 40_000.0)],
            pt(0.5, 0.5),
        )
        .unwrap();
        assert_eq!(catalog.block_group_containing(&pt(0.5, 0.5)).unwrap().id(), "a-west");
        assert_eq!(catalog.block_group_containing(&pt(0.5, 1.5)).unwrap().id(), "z-east");
        assert_eq!(catalog.block_group_containing(&pt(0.5, 1.0)).unwrap().id(), "a-west");
        assert!(catalog.block_group_containing(&pt(5.0, 5.0)).is_none());
    }

    #[test]
    fn catalog_sets_anchor_distance_and_rejects_duplicates() {
        let anchor = pt(33.749, -84.388);
        let apt = Place::new("Perimeter Park", PlaceCategory::Apartment, pt(33.918, -84.294), "10 Perimeter Park Dr");
        let catalog = Catalog::new(vec![apt.clone()], vec![], anchor).unwrap();
        let stored = catalog.place(&apt.id).unwrap();
        let expected = haversine_distance(&apt.location, &anchor);
        assert_eq!(stored.apartment().unwrap().anchor_distance, Some(expected));

        let err = Catalog::new(vec![apt.clone(), apt], vec![], anchor).unwrap_err();
        assert!(matches!(err, CatalogError::DuplicateId(_)));
    }

    #[test]
    fn catalog_rejects_invalid_places() {
        let anchor = pt(0.0, 0.0);
        let mut p = Place::new("x", PlaceCategory::Market, pt(1.0, 1.0), "addr");
        p.name = "  ".into();
        assert!(Catalog::new(vec![p], vec![], anchor).is_err());
        let p = Place::new("x", PlaceCategory::Apartment, pt(1.0, 1.0), "addr").with_monthly_cost(-5.0);
        assert!(Catalog::new(vec![p], vec![], anchor).is_err());
        let mut p = Place::new("x", PlaceCategory::Market, pt(1.0, 1.0), "addr");
        p.details = PlaceDetails::Apartment(ApartmentDetails::default());
        assert!(Catalog::new(vec![p], vec![], anchor).is_err());
    }

    #[test]
    fn place_ids_are_deterministic() {
        let a = place_id("Temple Sinai", &pt(33.91, -84.417));
        assert_eq!(a, place_id("Temple Sinai", &pt(33.910, -84.417)));
        assert_ne!(a, place_id("Temple Sinai", &pt(33.911, -84.417)));
        assert_ne!(a, place_id("Temple Sinai II", &pt(33.91, -84.417)));
        assert_eq!(a.len(), 17);
    }

    #[test]
    fn category_names_round_trip() {
        for c in PlaceCategory::ALL {
            assert_eq!(c.as_str().parse::<PlaceCategory>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{}\"", c.as_str()));
        }
        assert!("banana".parse::<PlaceCategory>().is_err());
    }
}
