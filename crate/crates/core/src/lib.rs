//! Core engine for ranking candidate housing locations.
//!
//! Area attributes of census block groups are turned into percentile
//! layers, combined with distance-decay proximity criteria under user
//! weights, and evaluated either on a raster grid or at apartment
//! locations. User-submitted listings are stored under content-derived
//! names and merged into the catalog in batches.

pub mod catalog;
pub mod geo;
pub mod scoring;
pub mod spatial_index;
pub mod submission;

pub use catalog::{BlockGroup, Catalog, Place, PlaceCategory};
pub use geo::{BoundingBox, GeoPoint, GridSpec, RasterGrid};
pub use scoring::{CriterionId, Scorer, WeightVector};
pub use spatial_index::PlaceIndex;
