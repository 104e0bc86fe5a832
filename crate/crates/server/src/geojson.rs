//! GeoJSON encoding. Coordinates are written longitude first.

use serde::Serialize;

use scout_core::catalog::{BlockGroup, Place, PlaceCategory, PlaceDetails};
use scout_core::geo::GeoPoint;
use scout_core::scoring::{CriterionId, PercentileTable};

#[derive(Debug, Serialize)]
pub struct FeatureCollection<P> {
    #[serde(rename = "type")]
    kind: &'static str,
    pub features: Vec<Feature<P>>,
}

impl<P> FeatureCollection<P> {
    pub fn new(features: Vec<Feature<P>>) -> Self {
        Self {
            kind: "FeatureCollection",
            features,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Feature<P> {
    #[serde(rename = "type")]
    kind: &'static str,
    pub id: String,
    pub geometry: Geometry,
    pub properties: P,
}

#[derive(Debug, Serialize)]
#[serde(tag = "type", content = "coordinates")]
pub enum Geometry {
    Point([f64; 2]),
    Polygon(Vec<Vec<[f64; 2]>>),
}

fn lon_lat(p: &GeoPoint) -> [f64; 2] {
    [p.lon(), p.lat()]
}

#[derive(Debug, Serialize)]
pub struct PlaceProperties<'a> {
    id: &'a str,
    name: &'a str,
    category: PlaceCategory,
    #[serde(skip_serializing_if = "str::is_empty")]
    address: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    phone: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    zipcode: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    website: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    faith_tradition: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    monthly_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    anchor_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    travel_minutes: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    is_public: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    free_reduced_lunch_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rating: Option<f64>,
}

pub fn place_feature(p: &Place) -> Feature<PlaceProperties<'_>> {
    let mut props = PlaceProperties {
        id: &p.id,
        name: &p.name,
        category: p.category,
        address: &p.address,
        phone: p.phone.as_deref(),
        zipcode: p.zipcode.as_deref(),
        website: p.website.as_deref(),
        faith_tradition: p.faith_tradition.as_deref(),
        monthly_cost: None,
        anchor_distance: None,
        travel_minutes: None,
        is_public: None,
        free_reduced_lunch_pct: None,
        rating: None,
    };
    match &p.details {
        PlaceDetails::Apartment(a) => {
            props.monthly_cost = a.monthly_cost;
            props.anchor_distance = a.anchor_distance;
            props.travel_minutes = a.travel_minutes;
        }
        PlaceDetails::School(s) => {
            props.is_public = s.is_public;
            props.free_reduced_lunch_pct = s.free_reduced_lunch_pct;
            props.rating = s.rating;
        }
        PlaceDetails::General => {}
    }
    Feature {
        kind: "Feature",
        id: p.id.clone(),
        geometry: Geometry::Point(lon_lat(&p.location)),
        properties: props,
    }
}

#[derive(Debug, Serialize)]
pub struct LayerProperties<'a> {
    id: &'a str,
    layer: CriterionId,
    /// Raw attribute: estimated monthly cost for affordability, the index
    /// otherwise.
    value: Option<f64>,
    percentile: Option<f64>,
}

/// Block-group polygon for an area criterion. The ring is closed.
pub fn layer_feature<'a>(
    bg: &'a BlockGroup,
    layer: CriterionId,
    tables: &PercentileTable,
) -> Feature<LayerProperties<'a>> {
    let value = match layer {
        CriterionId::Affordability => Some(bg.est_monthly_cost()),
        CriterionId::Jobs => Some(bg.jobs_index()),
        CriterionId::Retail => Some(bg.retail_index()),
        CriterionId::Crime => bg.crime_index(),
        _ => None,
    };
    let vertices = bg.boundary().vertices();
    let mut ring: Vec<[f64; 2]> = vertices.iter().map(lon_lat).collect();
    ring.push(lon_lat(&vertices[0]));
    Feature {
        kind: "Feature",
        id: bg.id().to_string(),
        geometry: Geometry::Polygon(vec![ring]),
        properties: LayerProperties {
            id: bg.id(),
            layer,
            value,
            percentile: tables.get(layer, bg.id()),
        },
    }
}
