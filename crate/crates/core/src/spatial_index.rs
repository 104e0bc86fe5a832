//! Per-category nearest-neighbour and radius queries over catalog places.
//!
//! Each category gets a static k-d tree over unit-sphere vectors
//! `(cos φ cos λ, cos φ sin λ, sin φ)`. Chord length between two such
//! vectors is `2 sin(d / 2R)` for great-circle distance `d`, strictly
//! increasing for `d ∈ [0, πR]`, so a subtree is pruned only when the
//! distance from the query to its splitting plane (a lower bound on the
//! chord to any point behind it) exceeds the chord of the current search
//! radius. That bound holds at every latitude, which sidesteps the
//! shrinking of longitude degrees towards the poles.
//!
//! Candidates that survive pruning are compared by [`haversine_distance`]
//! and then by place id, so results equal a linear scan exactly.

use std::cmp::Ordering;
use std::collections::HashMap;

use thiserror::Error;

use crate::catalog::{Catalog, PlaceCategory};
use crate::geo::{haversine_distance, GeoPoint, EARTH_RADIUS_M};

const LEAF_SIZE: usize = 8;
/// Relative and absolute slack on chord bounds (unit sphere), covering
/// rounding in the vector conversion and the haversine evaluation.
const CHORD_REL_SLACK: f64 = 1e-9;
const CHORD_ABS_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IndexError {
    #[error("radius must be a non-negative number of metres, got {0}")]
    InvalidRadius(f64),
}

/// A query hit: place id and great-circle distance in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor<'a> {
    pub id: &'a str,
    pub distance: f64,
}

fn cmp_hits(a: &Neighbor<'_>, b: &Neighbor<'_>) -> Ordering {
    a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(b.id))
}

fn unit_vector(p: &GeoPoint) -> [f64; 3] {
    let (lat, lon) = (p.lat().to_radians(), p.lon().to_radians());
    [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
}

fn chord_bound(distance: f64) -> f64 {
    let angle = (distance / EARTH_RADIUS_M).min(std::f64::consts::PI);
    2.0 * (angle / 2.0).sin() * (1.0 + CHORD_REL_SLACK) + CHORD_ABS_SLACK
}

#[derive(Debug, Clone)]
struct Entry {
    xyz: [f64; 3],
    location: GeoPoint,
    id: String,
}

#[derive(Debug, Clone, Default)]
struct KdTree {
    entries: Vec<Entry>,
}

impl KdTree {
    fn build(mut entries: Vec<Entry>) -> Self {
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        arrange(&mut entries, 0);
        Self { entries }
    }

    fn nearest(&self, query: &GeoPoint) -> Option<Neighbor<'_>> {
        let mut best = None;
        self.nearest_in(0, self.entries.len(), 0, query, &unit_vector(query), &mut best);
        best
    }

    fn consider<'a>(&'a self, i: usize, query: &GeoPoint, best: &mut Option<Neighbor<'a>>) {
        let e = &self.entries[i];
        let hit = Neighbor {
            id: &e.id,
            distance: haversine_distance(query, &e.location),
        };
        if best.as_ref().is_none_or(|b| cmp_hits(&hit, b) == Ordering::Less) {
            *best = Some(hit);
        }
    }

    fn nearest_in<'a>(
        &'a self,
        lo: usize,
        hi: usize,
        depth: usize,
        query: &GeoPoint,
        q: &[f64; 3],
        best: &mut Option<Neighbor<'a>>,
    ) {
        if hi - lo <= LEAF_SIZE {
            for i in lo..hi {
                self.consider(i, query, best);
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let axis = depth % 3;
        self.consider(mid, query, best);
        let diff = q[axis] - self.entries[mid].xyz[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_in(near.0, near.1, depth + 1, query, q, best);
        let reach = best.as_ref().map_or(f64::INFINITY, |b| chord_bound(b.distance));
        if diff.abs() <= reach {
            self.nearest_in(far.0, far.1, depth + 1, query, q, best);
        }
    }

    fn within<'a>(&'a self, query: &GeoPoint, radius: f64) -> Vec<Neighbor<'a>> {
        let mut out = Vec::new();
        if !self.entries.is_empty() {
            let reach = chord_bound(radius);
            self.within_in(0, self.entries.len(), 0, query, &unit_vector(query), radius, reach, &mut out);
        }
        out.sort_by(cmp_hits);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn within_in<'a>(
        &'a self,
        lo: usize,
        hi: usize,
        depth: usize,
        query: &GeoPoint,
        q: &[f64; 3],
        radius: f64,
        reach: f64,
        out: &mut Vec<Neighbor<'a>>,
    ) {
        let take = |i: usize, out: &mut Vec<Neighbor<'a>>| {
            let e = &self.entries[i];
            let distance = haversine_distance(query, &e.location);
            if distance <= radius {
                out.push(Neighbor { id: &e.id, distance });
            }
        };
        if hi - lo <= LEAF_SIZE {
            for i in lo..hi {
                take(i, out);
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let axis = depth % 3;
        take(mid, out);
        let diff = q[axis] - self.entries[mid].xyz[axis];
        if -diff <= reach {
            self.within_in(mid + 1, hi, depth + 1, query, q, radius, reach, out);
        }
        if diff <= reach {
            self.within_in(lo, mid, depth + 1, query, q, radius, reach, out);
        }
    }
}

/// Orders `entries` so that every range's middle element splits it on
/// the axis for that depth: lower half `<=`, upper half `>=`.
fn arrange(entries: &mut [Entry], depth: usize) {
    if entries.len() <= LEAF_SIZE {
        return;
    }
    let axis = depth % 3;
    let mid = entries.len() / 2;
    entries.select_nth_unstable_by(mid, |a, b| {
        a.xyz[axis].total_cmp(&b.xyz[axis]).then_with(|| a.id.cmp(&b.id))
    });
    let (left, right) = entries.split_at_mut(mid);
    arrange(left, depth + 1);
    arrange(&mut right[1..], depth + 1);
}

/// Immutable snapshot of catalog place locations, one tree per category.
#[derive(Debug, Clone, Default)]
pub struct PlaceIndex {
    trees: HashMap<PlaceCategory, KdTree>,
}

impl PlaceIndex {
    pub fn build(catalog: &Catalog) -> Self {
        build_index(catalog)
    }

    pub fn len(&self, category: PlaceCategory) -> usize {
        self.trees.get(&category).map_or(0, |t| t.entries.len())
    }

    pub fn is_empty(&self, category: PlaceCategory) -> bool {
        self.len(category) == 0
    }

    /// Closest place of `category`; equal distances resolve to the lowest id.
    pub fn nearest(&self, p: &GeoPoint, category: PlaceCategory) -> Option<Neighbor<'_>> {
        self.trees.get(&category).and_then(|t| t.nearest(p))
    }

    /// Every place of `category` within `radius` metres (inclusive), sorted
    /// by distance and then id.
    pub fn within_radius(&self, p: &GeoPoint, radius: f64, category: PlaceCategory) -> Result<Vec<Neighbor<'_>>, IndexError> {
        if radius.is_nan() || radius < 0.0 {
            return Err(IndexError::InvalidRadius(radius));
        }
        Ok(self.trees.get(&category).map(|t| t.within(p, radius)).unwrap_or_default())
    }
}

pub fn build_index(catalog: &Catalog) -> PlaceIndex {
    let mut grouped: HashMap<PlaceCategory, Vec<Entry>> = HashMap::new();
    for place in catalog.places() {
        grouped.entry(place.category).or_default().push(Entry {
            xyz: unit_vector(&place.location),
            location: place.location,
            id: place.id.clone(),
        });
    }
    PlaceIndex {
        trees: grouped.into_iter().map(|(c, e)| (c, KdTree::build(e))).collect(),
    }
}
