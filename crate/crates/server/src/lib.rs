//! HTTP service over the housing-scout engine: place and block-group
//! layers as GeoJSON, weighted scoring with a raster and a ranked
//! apartment list, listing submissions and an explicit merge step.

pub mod api;
pub mod config;
mod geojson;

pub use api::{router, AppState, StartupError};
pub use config::ServiceConfig;
