//! Coordinates, great-circle distance, bounding boxes and the raster grid.
//!
//! All angles are decimal degrees. Distances are metres on a sphere of
//! radius [`EARTH_RADIUS_M`]. Grids are addressed row-major with row 0 at the
//! north edge and column 0 at the west edge.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// One statute mile in metres.
pub const METERS_PER_MILE: f64 = 1_609.34;

/// Tolerance applied before taking the ceiling of span / cell_size, so
/// float noise such as `0.9 / 0.3 = 3.0000000000000004` does not add a cell.
const CELL_COUNT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("latitude {0} is not a finite value in [-90, 90]")]
    InvalidLatitude(f64),
    #[error("longitude {0} is not a finite value in [-180, 180]")]
    InvalidLongitude(f64),
    #[error("invalid bounding box: {0}")]
    InvalidBoundingBox(String),
    #[error("cell size must be a positive finite number of degrees, got {0}")]
    InvalidCellSize(f64),
    #[error("cell ({row}, {col}) is outside a {rows}x{cols} grid")]
    CellOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("polygon ring needs at least 3 distinct vertices, got {0}")]
    DegenerateRing(usize),
    #[error("raster has {got} values, grid needs {expected}")]
    RasterShape { expected: usize, got: usize },
    #[error("raster value {0} is outside [0, 1]")]
    RasterValue(f64),
}

/// A validated latitude/longitude pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::InvalidLatitude(lat));
        }
        if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::InvalidLongitude(lon));
        }
        Ok(Self { lat, lon })
    }

    #[inline]
    pub fn lat(&self) -> f64 {
        self.lat
    }

    #[inline]
    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Great-circle distance in metres, see [`haversine_distance`].
    #[inline]
    pub fn distance_to(&self, other: &GeoPoint) -> f64 {
        haversine_distance(self, other)
    }
}

impl<'de> Deserialize<'de> for GeoPoint {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            lat: f64,
            lon: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        GeoPoint::new(raw.lat, raw.lon).map_err(serde::de::Error::custom)
    }
}

impl std::fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.lat, self.lon)
    }
}

/// Haversine great-circle distance in metres on the mean-radius sphere.
///
/// Symmetric bit-for-bit: the half-angle sines are squared, so argument
/// order only flips their sign.
pub fn haversine_distance(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let half_dlat = ((b.lat - a.lat).to_radians() * 0.5).sin();
    let half_dlon = ((b.lon - a.lon).to_radians() * 0.5).sin();
    let h = half_dlat * half_dlat + lat1.cos() * lat2.cos() * half_dlon * half_dlon;
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn new(min_lat: f64, max_lat: f64, min_lon: f64, max_lon: f64) -> Result<Self, GeoError> {
        // Validates ranges via GeoPoint.
        GeoPoint::new(min_lat, min_lon)?;
        GeoPoint::new(max_lat, max_lon)?;
        if min_lat > max_lat {
            return Err(GeoError::InvalidBoundingBox(format!(
                "min_lat {min_lat} > max_lat {max_lat}"
            )));
        }
        if min_lon > max_lon {
            return Err(GeoError::InvalidBoundingBox(format!(
                "min_lon {min_lon} > max_lon {max_lon}"
            )));
        }
        Ok(Self {
            min_lat,
            max_lat,
            min_lon,
            max_lon,
        })
    }

    /// Smallest box covering every point, or `None` for an empty iterator.
    pub fn enclosing<'a, I>(points: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a GeoPoint>,
    {
        let mut iter = points.into_iter();
        let first = iter.next()?;
        let mut bbox = Self {
            min_lat: first.lat,
            max_lat: first.lat,
            min_lon: first.lon,
            max_lon: first.lon,
        };
        for p in iter {
            bbox.min_lat = bbox.min_lat.min(p.lat);
            bbox.max_lat = bbox.max_lat.max(p.lat);
            bbox.min_lon = bbox.min_lon.min(p.lon);
            bbox.max_lon = bbox.max_lon.max(p.lon);
        }
        Some(bbox)
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        (self.min_lat..=self.max_lat).contains(&p.lat) && (self.min_lon..=self.max_lon).contains(&p.lon)
    }

    pub fn lat_span(&self) -> f64 {
        self.max_lat - self.min_lat
    }

    pub fn lon_span(&self) -> f64 {
        self.max_lon - self.min_lon
    }
}

/// Discretization of a bounding box into square cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    bbox: BoundingBox,
    cell_size: f64,
    rows: usize,
    cols: usize,
}

fn cell_count(span: f64, cell_size: f64) -> usize {
    let ratio = span / cell_size;
    ((ratio - CELL_COUNT_SLACK).ceil() as usize).max(1)
}

/// Builds the grid covering `bbox` with cells of `cell_size` degrees.
///
/// The last row and column may extend past the south and east edges of
/// the box; cell (0, 0) is the north-west corner.
pub fn grid_from_bbox(bbox: BoundingBox, cell_size: f64) -> Result<GridSpec, GeoError> {
    if !cell_size.is_finite() || cell_size <= 0.0 {
        return Err(GeoError::InvalidCellSize(cell_size));
    }
    Ok(GridSpec {
        bbox,
        cell_size,
        rows: cell_count(bbox.lat_span(), cell_size),
        cols: cell_count(bbox.lon_span(), cell_size),
    })
}

impl GridSpec {
    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Result<GeoPoint, GeoError> {
        cell_center(self, row, col)
    }
}

pub fn cell_center(spec: &GridSpec, row: usize, col: usize) -> Result<GeoPoint, GeoError> {
    if row >= spec.rows || col >= spec.cols {
        return Err(GeoError::CellOutOfRange {
            row,
            col,
            rows: spec.rows,
            cols: spec.cols,
        });
    }
    let lat = spec.bbox.max_lat - (row as f64 + 0.5) * spec.cell_size;
    let lon = spec.bbox.min_lon + (col as f64 + 0.5) * spec.cell_size;
    // Cells hanging over the south/east edge of a box touching the valid
    // coordinate range would otherwise leave it.
    GeoPoint::new(lat.max(-90.0), lon.min(180.0))
}

/// Scored cells of a [`GridSpec`], row-major; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RasterGrid {
    spec: GridSpec,
    values: Vec<Option<f64>>,
}

impl RasterGrid {
    pub fn new(spec: GridSpec, values: Vec<Option<f64>>) -> Result<Self, GeoError> {
        if values.len() != spec.len() {
            return Err(GeoError::RasterShape {
                expected: spec.len(),
                got: values.len(),
            });
        }
        if let Some(bad) = values.iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(GeoError::RasterValue(*bad));
        }
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> Option<Option<f64>> {
        if row >= self.spec.rows || col >= self.spec.cols {
            return None;
        }
        Some(self.values[row * self.spec.cols + col])
    }
}

/// Polygon ring with the closing vertex removed.
#[derive(Debug, Clone, PartialEq)]
pub struct Ring {
    vertices: Vec<GeoPoint>,
}

impl Ring {
    /// Accepts open or closed rings; rejects rings with fewer than three
    /// distinct vertices.
    pub fn new(mut vertices: Vec<GeoPoint>) -> Result<Self, GeoError> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        let mut distinct: Vec<(u64, u64)> = vertices
            .iter()
            .map(|p| (p.lat.to_bits(), p.lon.to_bits()))
            .collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 3 {
            return Err(GeoError::DegenerateRing(distinct.len()));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[GeoPoint] {
        &self.vertices
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::enclosing(&self.vertices).expect("ring is non-empty")
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        ring_contains(&self.vertices, p)
    }
}

/// Even-odd test on planar (lon, lat) coordinates; points on an edge or
/// vertex count as inside.
pub fn point_in_polygon(p: &GeoPoint, ring: &[GeoPoint]) -> Result<bool, GeoError> {
    let ring = Ring::new(ring.to_vec())?;
    Ok(ring.contains(p))
}

fn on_segment(p: &GeoPoint, a: &GeoPoint, b: &GeoPoint) -> bool {
    let (px, py) = (p.lon, p.lat);
    let (ax, ay) = (a.lon, a.lat);
    let (bx, by) = (b.lon, b.lat);
    let cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
    if cross != 0.0 {
        return false;
    }
    px >= ax.min(bx) && px <= ax.max(bx) && py >= ay.min(by) && py <= ay.max(by)
}

fn ring_contains(vertices: &[GeoPoint], p: &GeoPoint) -> bool {
    let n = vertices.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (&vertices[i], &vertices[j]);
        if on_segment(p, a, b) {
            return true;
        }
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let x_cross = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
            if p.lon < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}
