use std::path::PathBuf;

use clap::Parser;
use scout_core::catalog::DEFAULT_AFFORDABILITY_CEILING;
use scout_core::geo::GeoPoint;

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

/// Command-line and environment configuration. Flags take precedence over
/// the environment.
#[derive(Debug, Clone, Parser)]
#[command(name = "housing-scout", version, about = "Serve housing suitability layers, scores and listing submissions")]
pub struct ServiceConfig {
    /// Directory holding places.csv, blockgroups.csv, optional
    /// category_aliases.csv and geocoder.csv, and the submissions tree.
    #[arg(long, env = "SCOUT_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,

    #[arg(long, env = "SCOUT_PORT", default_value_t = 8080, value_parser = clap::value_parser!(u16).range(1..))]
    pub port: u16,

    /// Latitude of the resettlement office used for the anchor criterion.
    #[arg(long, env = "SCOUT_ANCHOR_LAT", default_value_t = 33.749, allow_negative_numbers = true)]
    pub anchor_lat: f64,

    #[arg(long, env = "SCOUT_ANCHOR_LON", default_value_t = -84.388, allow_negative_numbers = true)]
    pub anchor_lon: f64,

    /// Default raster cell size in degrees.
    #[arg(long, env = "SCOUT_CELL_SIZE", default_value_t = 0.005, value_parser = positive)]
    pub cell_size: f64,

    /// Block groups whose estimated monthly cost exceeds this are dropped.
    #[arg(long, env = "SCOUT_CEILING", default_value_t = DEFAULT_AFFORDABILITY_CEILING, value_parser = positive)]
    pub ceiling: f64,
}

impl ServiceConfig {
    /// Defaults with the given data directory.
    pub fn for_data_dir(data_dir: impl Into<PathBuf>) -> Self {
        let mut config = Self::parse_from(["housing-scout"]);
        config.data_dir = data_dir.into();
        config
    }

    pub fn anchor(&self) -> Result<GeoPoint, scout_core::geo::GeoError> {
        GeoPoint::new(self.anchor_lat, self.anchor_lon)
    }
}
