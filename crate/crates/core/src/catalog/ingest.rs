//! CSV ingestion and serialization for places, block groups and the
//! category alias table.

use std::collections::HashMap;
use std::io::{Read, Write};

use csv::{ReaderBuilder, StringRecord, WriterBuilder};

use super::{
    place_id, ApartmentDetails, BlockGroup, CatalogError, Place, PlaceCategory, PlaceDetails,
    SchoolDetails,
};
use crate::geo::{GeoPoint, Ring};

/// Required leading columns of a places file.
pub const PLACES_HEADER: [&str; 7] = [
    "Place Name",
    "Place Type",
    "latitude",
    "longitude",
    "Place Address",
    "Phone",
    "Zipcode",
];

const COL_WEBSITE: &str = "Website";
const COL_MONTHLY_COST: &str = "Monthly Cost";
const COL_TRAVEL_MINUTES: &str = "Travel Minutes";
const COL_PUBLIC: &str = "Public";
const COL_LUNCH_PCT: &str = "Free Reduced Lunch Pct";
const COL_RATING: &str = "Rating";

const OPTIONAL_PLACE_COLUMNS: [&str; 6] = [
    COL_WEBSITE,
    COL_MONTHLY_COST,
    COL_TRAVEL_MINUTES,
    COL_PUBLIC,
    COL_LUNCH_PCT,
    COL_RATING,
];

pub const BLOCKGROUPS_HEADER: [&str; 7] = [
    "GeoID",
    "Boundary",
    "PctIncomeHousing",
    "MedianIncome",
    "JobsIndex",
    "RetailIndex",
    "CrimeIndex",
];

const DEFAULT_ALIASES: &str = include_str!("../../data/category_aliases.csv");

fn normalize_key(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Maps raw place-type strings from source data onto [`PlaceCategory`].
///
/// Matching ignores case and repeated whitespace. Raw strings that resolve
/// to `faith_center` other than the canonical name itself are kept as the
/// place's faith tradition.
#[derive(Debug, Clone)]
pub struct AliasTable {
    map: HashMap<String, PlaceCategory>,
}

impl Default for AliasTable {
    fn default() -> Self {
        Self::from_csv(DEFAULT_ALIASES.as_bytes()).expect("built-in alias table is valid")
    }
}

impl AliasTable {
    /// Two-column CSV with header `raw,category`. Canonical category names
    /// always resolve, whether listed or not.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, CatalogError> {
        let mut map: HashMap<String, PlaceCategory> = PlaceCategory::ALL
            .into_iter()
            .map(|c| (c.as_str().to_string(), c))
            .collect();
        let mut rdr = ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
        let mut records = rdr.records();
        match records.next() {
            Some(Ok(h)) if h.len() == 2 && strip_bom(&h[0]) == "raw" && h[1].trim() == "category" => {}
            Some(Ok(h)) => {
                return Err(CatalogError::Schema {
                    line: line_of(&h),
                    message: "expected header \"raw,category\"".into(),
                })
            }
            Some(Err(e)) => return Err(e.into()),
            None => {
                return Err(CatalogError::Schema {
                    line: 1,
                    message: "missing header \"raw,category\"".into(),
                })
            }
        }
        for rec in records {
            let rec = rec?;
            let line = line_of(&rec);
            if rec.len() != 2 {
                return Err(CatalogError::Row {
                    line,
                    message: format!("expected 2 fields, found {}", rec.len()),
                });
            }
            let category = rec[1].trim().parse::<PlaceCategory>().map_err(|_| CatalogError::UnknownCategory {
                line,
                raw: rec[1].to_string(),
            })?;
            map.insert(normalize_key(&rec[0]), category);
        }
        Ok(Self { map })
    }

    pub fn resolve(&self, raw: &str) -> Option<PlaceCategory> {
        self.map.get(&normalize_key(raw)).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn strip_bom(s: &str) -> &str {
    s.trim_start_matches('\u{feff}').trim()
}

fn line_of(rec: &StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn optional(field: &str) -> Option<String> {
    let t = field.trim();
    (!t.is_empty()).then(|| t.to_string())
}

fn parse_f64(field: &str, label: &str, line: u64) -> Result<f64, CatalogError> {
    let v: f64 = field.trim().parse().map_err(|_| CatalogError::Row {
        line,
        message: format!("{label} {field:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(CatalogError::Row {
            line,
            message: format!("{label} {field:?} is not finite"),
        });
    }
    Ok(v)
}

fn parse_opt_f64(field: &str, label: &str, line: u64) -> Result<Option<f64>, CatalogError> {
    if field.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(field, label, line).map(Some)
    }
}

fn parse_opt_bool(field: &str, label: &str, line: u64) -> Result<Option<bool>, CatalogError> {
    match field.trim().to_lowercase().as_str() {
        "" => Ok(None),
        "true" | "yes" | "public" | "1" => Ok(Some(true)),
        "false" | "no" | "private" | "0" => Ok(Some(false)),
        _ => Err(CatalogError::Row {
            line,
            message: format!("{label} {field:?} is not a boolean"),
        }),
    }
}

/// Parses a places file using the built-in alias table.
pub fn parse_places_csv<R: Read>(reader: R) -> Result<Vec<Place>, CatalogError> {
    parse_places_csv_with(reader, &AliasTable::default())
}

/// Parses a places file: the seven [`PLACES_HEADER`] columns followed by
/// any of `Website`, `Monthly Cost`, `Travel Minutes`, `Public`,
/// `Free Reduced Lunch Pct`, `Rating`.
pub fn parse_places_csv_with<R: Read>(reader: R, aliases: &AliasTable) -> Result<Vec<Place>, CatalogError> {
    let mut rdr = ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => rec?,
        None => {
            return Err(CatalogError::Schema {
                line: 1,
                message: format!("missing header {:?}", PLACES_HEADER.join(",")),
            })
        }
    };
    let header_line = line_of(&header);
    let names: Vec<&str> = header.iter().enumerate().map(|(i, h)| if i == 0 { strip_bom(h) } else { h.trim() }).collect();
    if names.len() < PLACES_HEADER.len() || names[..PLACES_HEADER.len()] != PLACES_HEADER {
        return Err(CatalogError::Schema {
            line: header_line,
            message: format!("header must start with {:?}", PLACES_HEADER.join(",")),
        });
    }
    let mut extra: HashMap<&str, usize> = HashMap::new();
    for (i, name) in names.iter().enumerate().skip(PLACES_HEADER.len()) {
        if !OPTIONAL_PLACE_COLUMNS.contains(name) {
            return Err(CatalogError::Schema {
                line: header_line,
                message: format!("unknown column {name:?}"),
            });
        }
        if extra.insert(name, i).is_some() {
            return Err(CatalogError::Schema {
                line: header_line,
                message: format!("duplicate column {name:?}"),
            });
        }
    }

    let mut places = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != names.len() {
            return Err(CatalogError::Row {
                line,
                message: format!("expected {} fields, found {}", names.len(), rec.len()),
            });
        }
        let get = |col: &str| extra.get(col).map(|&i| &rec[i]).unwrap_or("");

        let name = rec[0].trim();
        if name.is_empty() {
            return Err(CatalogError::Row {
                line,
                message: "Place Name is empty".into(),
            });
        }
        let raw_type = rec[1].trim();
        let category = aliases.resolve(raw_type).ok_or_else(|| CatalogError::UnknownCategory {
            line,
            raw: raw_type.to_string(),
        })?;
        let lat = parse_f64(&rec[2], "latitude", line)?;
        let lon = parse_f64(&rec[3], "longitude", line)?;
        let location = GeoPoint::new(lat, lon).map_err(|e| CatalogError::Row {
            line,
            message: e.to_string(),
        })?;
        let zipcode = optional(&rec[6]);
        if let Some(z) = &zipcode {
            if z.len() != 5 || !z.bytes().all(|b| b.is_ascii_digit()) {
                return Err(CatalogError::Row {
                    line,
                    message: format!("Zipcode {z:?} is not 5 digits"),
                });
            }
        }
        let faith_tradition = (category == PlaceCategory::FaithCenter
            && normalize_key(raw_type) != PlaceCategory::FaithCenter.as_str())
        .then(|| raw_type.to_string());

        let monthly_cost = parse_opt_f64(get(COL_MONTHLY_COST), COL_MONTHLY_COST, line)?;
        let travel_minutes = parse_opt_f64(get(COL_TRAVEL_MINUTES), COL_TRAVEL_MINUTES, line)?;
        let is_public = parse_opt_bool(get(COL_PUBLIC), COL_PUBLIC, line)?;
        let lunch = parse_opt_f64(get(COL_LUNCH_PCT), COL_LUNCH_PCT, line)?;
        let rating = parse_opt_f64(get(COL_RATING), COL_RATING, line)?;

        let details = match category {
            PlaceCategory::Apartment => {
                if let Some(c) = monthly_cost {
                    if c <= 0.0 {
                        return Err(CatalogError::Row {
                            line,
                            message: format!("Monthly Cost {c} must be positive"),
                        });
                    }
                }
                PlaceDetails::Apartment(ApartmentDetails {
                    monthly_cost,
                    anchor_distance: None,
                    travel_minutes,
                })
            }
            PlaceCategory::School => {
                if let Some(p) = lunch {
                    if !(0.0..=100.0).contains(&p) {
                        return Err(CatalogError::Row {
                            line,
                            message: format!("{COL_LUNCH_PCT} {p} is outside [0, 100]"),
                        });
                    }
                }
                PlaceDetails::School(SchoolDetails {
                    is_public,
                    free_reduced_lunch_pct: lunch,
                    rating,
                })
            }
            _ => PlaceDetails::General,
        };
        let misplaced = match category {
            PlaceCategory::Apartment => [is_public.is_some(), lunch.is_some(), rating.is_some()].contains(&true),
            PlaceCategory::School => monthly_cost.is_some() || travel_minutes.is_some(),
            _ => [monthly_cost.is_some(), travel_minutes.is_some(), is_public.is_some(), lunch.is_some(), rating.is_some()]
                .contains(&true),
        };
        if misplaced {
            return Err(CatalogError::Row {
                line,
                message: format!("columns set that do not apply to category {category}"),
            });
        }

        places.push(Place {
            id: place_id(name, &location),
            name: name.to_string(),
            category,
            location,
            address: rec[4].trim().to_string(),
            phone: optional(&rec[5]),
            zipcode,
            website: optional(get(COL_WEBSITE)),
            faith_tradition,
            details,
        });
    }
    Ok(places)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes places with the full header (required plus every optional
/// column). Parsing the output yields the same places.
pub fn write_places_csv<W: Write>(writer: W, places: &[Place]) -> Result<(), CatalogError> {
    let mut wtr = WriterBuilder::new().from_writer(writer);
    let header: Vec<&str> = PLACES_HEADER.iter().chain(OPTIONAL_PLACE_COLUMNS.iter()).copied().collect();
    wtr.write_record(&header)?;
    for p in places {
        let place_type = match (&p.faith_tradition, p.category) {
            (Some(t), PlaceCategory::FaithCenter) => t.clone(),
            _ => p.category.as_str().to_string(),
        };
        let (cost, minutes) = p
            .apartment()
            .map(|a| (a.monthly_cost, a.travel_minutes))
            .unwrap_or_default();
        let (public, lunch, rating) = p
            .school()
            .map(|s| (s.is_public, s.free_reduced_lunch_pct, s.rating))
            .unwrap_or_default();
        wtr.write_record([
            p.name.clone(),
            place_type,
            p.location.lat().to_string(),
            p.location.lon().to_string(),
            p.address.clone(),
            p.phone.clone().unwrap_or_default(),
            p.zipcode.clone().unwrap_or_default(),
            p.website.clone().unwrap_or_default(),
            fmt_opt(cost),
            fmt_opt(minutes),
            public.map(|b| b.to_string()).unwrap_or_default(),
            fmt_opt(lunch),
            fmt_opt(rating),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

fn parse_ring(field: &str, line: u64) -> Result<Ring, CatalogError> {
    let mut vertices = Vec::new();
    for pair in field.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let mut parts = pair.split_whitespace();
        let (Some(lat), Some(lon), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(CatalogError::Row {
                line,
                message: format!("boundary vertex {pair:?} is not \"lat lon\""),
            });
        };
        let lat = parse_f64(lat, "boundary latitude", line)?;
        let lon = parse_f64(lon, "boundary longitude", line)?;
        vertices.push(GeoPoint::new(lat, lon).map_err(|e| CatalogError::Row {
            line,
            message: e.to_string(),
        })?);
    }
    Ring::new(vertices).map_err(|e| CatalogError::Row {
        line,
        message: e.to_string(),
    })
}

/// Parses block groups; `Boundary` holds a `"lat lon;lat lon;..."` ring and
/// an empty `CrimeIndex` means no crime data.
pub fn parse_blockgroups_csv<R: Read>(reader: R) -> Result<Vec<BlockGroup>, CatalogError> {
    let mut rdr = ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => rec?,
        None => {
            return Err(CatalogError::Schema {
                line: 1,
                message: format!("missing header {:?}", BLOCKGROUPS_HEADER.join(",")),
            })
        }
    };
    let names: Vec<&str> = header.iter().enumerate().map(|(i, h)| if i == 0 { strip_bom(h) } else { h.trim() }).collect();
    if names != BLOCKGROUPS_HEADER {
        return Err(CatalogError::Schema {
            line: line_of(&header),
            message: format!("expected header {:?}", BLOCKGROUPS_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != BLOCKGROUPS_HEADER.len() {
            return Err(CatalogError::Row {
                line,
                message: format!("expected {} fields, found {}", BLOCKGROUPS_HEADER.len(), rec.len()),
            });
        }
        let boundary = parse_ring(&rec[1], line)?;
        let pct = parse_f64(&rec[2], "PctIncomeHousing", line)?;
        if !(pct > 0.0 && pct <= 1.0) {
            return Err(CatalogError::Row {
                line,
                message: format!("PctIncomeHousing {pct} is outside (0, 1]"),
            });
        }
        let income = parse_f64(&rec[3], "MedianIncome", line)?;
        let jobs = parse_f64(&rec[4], "JobsIndex", line)?;
        let retail = parse_f64(&rec[5], "RetailIndex", line)?;
        let crime = parse_opt_f64(&rec[6], "CrimeIndex", line)?;
        let bg = BlockGroup::new(rec[0].trim(), boundary, pct, income, jobs, retail, crime).map_err(|e| {
            CatalogError::Row {
                line,
                message: e.to_string(),
            }
        })?;
        out.push(bg);
    }
    Ok(out)
}

/// Writes block groups with the `Boundary` field always quoted, so parsed
/// fixtures serialize back to their original text.
pub fn write_blockgroups_csv<W: Write>(mut writer: W, block_groups: &[BlockGroup]) -> Result<(), CatalogError> {
    writeln!(writer, "{}", BLOCKGROUPS_HEADER.join(","))?;
    for bg in block_groups {
        let boundary = bg
            .boundary()
            .vertices()
            .iter()
            .map(|p| format!("{} {}", p.lat(), p.lon()))
            .collect::<Vec<_>>()
            .join(";");
        writeln!(
            writer,
            "{},\"{}\",{},{},{},{},{}",
            csv_escape(bg.id()),
            boundary,
            bg.pct_income_on_housing(),
            bg.median_annual_income(),
            bg.jobs_index(),
            bg.retail_index(),
            fmt_opt(bg.crime_index()),
        )?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}
