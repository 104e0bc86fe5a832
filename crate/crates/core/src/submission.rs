//! User-submitted apartment listings.
//!
//! Each submission is written to `pending/` as a one-row CSV named
//! `<UTC second>-<md5 of canonical bytes>.csv`, so identical content saved
//! in the same second lands on the same file. [`SubmissionStore::merge_pending`]
//! geocodes pending files into the catalog and moves each one to
//! `archived/` or `rejected/`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use md5::{Digest, Md5};
use serde::Serialize;
use thiserror::Error;

use crate::catalog::{Catalog, CatalogError, Place, PlaceCategory};
use crate::geo::GeoPoint;

pub const SUBMISSION_HEADER: [&str; 5] = [
    "Apartment Name",
    "Apartment Address",
    "Apartment Phone",
    "Apartment Website",
    "Average Rent",
];

pub const MIN_RENT: f64 = 500.0;
pub const MAX_RENT: f64 = 2000.0;

const SEPARATOR: u8 = 0x1f;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SubmissionError {
    #[error("{0} is required")]
    MissingField(&'static str),
    #[error("rent {0} is outside [{MIN_RENT}, {MAX_RENT}]")]
    RentOutOfRange(f64),
}

impl SubmissionError {
    /// Name of the offending input field.
    pub fn field(&self) -> &'static str {
        match self {
            SubmissionError::MissingField(f) => f,
            SubmissionError::RentOutOfRange(_) => "rent",
        }
    }
}

#[derive(Debug, Error)]
#[error("storage failure at {}: {source}", path.display())]
pub struct StorageError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

impl StorageError {
    fn at(path: &Path) -> impl FnOnce(io::Error) -> StorageError + '_ {
        move |source| StorageError {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Error)]
pub enum MergeError {
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

/// A validated listing. Text fields are trimmed and never contain 0x1F;
/// blank optional fields are `None`; rent is rounded to cents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Submission {
    name: String,
    address: String,
    phone: Option<String>,
    website: Option<String>,
    monthly_rent: Option<f64>,
}

fn clean(s: &str) -> String {
    s.replace(SEPARATOR as char, "").trim().to_string()
}

fn clean_optional(s: Option<&str>) -> Option<String> {
    s.map(clean).filter(|s| !s.is_empty())
}

impl Submission {
    pub fn new(
        name: &str,
        address: &str,
        phone: Option<&str>,
        website: Option<&str>,
        monthly_rent: Option<f64>,
    ) -> Result<Self, SubmissionError> {
        let name = clean(name);
        if name.is_empty() {
            return Err(SubmissionError::MissingField("name"));
        }
        let address = clean(address);
        if address.is_empty() {
            return Err(SubmissionError::MissingField("address"));
        }
        let monthly_rent = match monthly_rent {
            Some(r) if !(MIN_RENT..=MAX_RENT).contains(&r) => return Err(SubmissionError::RentOutOfRange(r)),
            Some(r) => Some((r * 100.0).round() / 100.0),
            None => None,
        };
        Ok(Self {
            name,
            address,
            phone: clean_optional(phone),
            website: clean_optional(website),
            monthly_rent,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn address(&self) -> &str {
        &self.address
    }

    pub fn phone(&self) -> Option<&str> {
        self.phone.as_deref()
    }

    pub fn website(&self) -> Option<&str> {
        self.website.as_deref()
    }

    pub fn monthly_rent(&self) -> Option<f64> {
        self.monthly_rent
    }

    fn fields(&self) -> [String; 5] {
        [
            self.name.clone(),
            self.address.clone(),
            self.phone.clone().unwrap_or_default(),
            self.website.clone().unwrap_or_default(),
            self.monthly_rent.map(|r| format!("{r:.2}")).unwrap_or_default(),
        ]
    }
}

/// The five fields in order, absent ones empty, joined by 0x1F.
pub fn canonical_bytes(s: &Submission) -> Vec<u8> {
    s.fields().join("\u{1f}").into_bytes()
}

pub fn md5_hex(bytes: &[u8]) -> String {
    hex::encode(Md5::digest(bytes))
}

pub fn submission_filename(s: &Submission, now: DateTime<Utc>) -> String {
    format!("{}-{}.csv", now.format("%Y%m%dT%H%M%SZ"), md5_hex(&canonical_bytes(s)))
}

fn is_submission_filename(name: &str) -> bool {
    let b = name.as_bytes();
    b.len() == 53
        && b[..8].iter().all(u8::is_ascii_digit)
        && b[8] == b'T'
        && b[9..15].iter().all(u8::is_ascii_digit)
        && b[15] == b'Z'
        && b[16] == b'-'
        && b[17..49].iter().all(|c| matches!(c, b'0'..=b'9' | b'a'..=b'f'))
        && &b[49..] == b".csv"
}

pub fn write_submission_csv<W: Write>(s: &Submission, writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUBMISSION_HEADER)?;
    w.write_record(s.fields())?;
    w.flush()?;
    Ok(())
}

/// Parses a one-row submission file, returning a human-readable reason on
/// failure.
pub fn parse_submission_csv<R: io::Read>(reader: R) -> Result<Submission, String> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = r.headers().map_err(|e| format!("unreadable header: {e}"))?.clone();
    if header.iter().ne(SUBMISSION_HEADER) {
        return Err(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()));
    }
    let mut rows = r.records();
    let row = match rows.next() {
        Some(row) => row.map_err(|e| format!("unreadable row: {e}"))?,
        None => return Err("no data row".into()),
    };
    if rows.next().is_some() {
        return Err("more than one data row".into());
    }
    let opt = |i: usize| Some(&row[i]).filter(|s| !s.trim().is_empty());
    let rent = match opt(4) {
        Some(r) => Some(r.trim().parse::<f64>().map_err(|_| format!("rent {r:?} is not a number"))?),
        None => None,
    };
    Submission::new(&row[0], &row[1], opt(2), opt(3), rent).map_err(|e| e.to_string())
}

/// Address to coordinate lookup used when merging submissions.
pub trait Geocoder {
    fn geocode(&self, address: &str) -> Option<GeoPoint>;
}

impl<F> Geocoder for F
where
    F: Fn(&str) -> Option<GeoPoint>,
{
    fn geocode(&self, address: &str) -> Option<GeoPoint> {
        self(address)
    }
}

/// Geocoder backed by a fixed `address,lat,lon` table. Lookups ignore
/// case and runs of whitespace.
#[derive(Debug, Clone, Default)]
pub struct FixtureGeocoder {
    table: HashMap<String, GeoPoint>,
}

fn normalize_address(address: &str) -> String {
    address.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl FixtureGeocoder {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, GeoPoint)>,
        S: AsRef<str>,
    {
        Self {
            table: entries.into_iter().map(|(a, p)| (normalize_address(a.as_ref()), p)).collect(),
        }
    }

    pub fn from_csv<R: io::Read>(reader: R) -> Result<Self, CatalogError> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().map(str::trim).ne(["address", "lat", "lon"]) {
            return Err(CatalogError::Schema {
                line: 1,
                message: "geocoder table header must be address,lat,lon".into(),
            });
        }
        let mut table = HashMap::new();
        for (i, row) in r.records().enumerate() {
            let row = row?;
            let line = i as u64 + 2;
            let num = |k: usize| {
                row[k].trim().parse::<f64>().map_err(|_| CatalogError::Row {
                    line,
                    message: format!("{:?} is not a number", &row[k]),
                })
            };
            let point = GeoPoint::new(num(1)?, num(2)?).map_err(|e| CatalogError::Row {
                line,
                message: e.to_string(),
            })?;
            table.insert(normalize_address(&row[0]), point);
        }
        Ok(Self { table })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Geocoder for FixtureGeocoder {
    fn geocode(&self, address: &str) -> Option<GeoPoint> {
        self.table.get(&normalize_address(address)).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergedEntry {
    pub filename: String,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedEntry {
    pub filename: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MergeReport {
    pub merged: Vec<MergedEntry>,
    pub duplicates: Vec<MergedEntry>,
    pub rejected: Vec<RejectedEntry>,
}

impl MergeReport {
    pub fn is_empty(&self) -> bool {
        self.merged.is_empty() && self.duplicates.is_empty() && self.rejected.is_empty()
    }
}

/// Pending, archived and rejected submission directories under one root.
///
/// Writes go through one lock; a merge holds a second lock for its whole
/// run, so merges never overlap.
#[derive(Debug)]
pub struct SubmissionStore {
    root: PathBuf,
    write_lock: Mutex<()>,
    merge_lock: Mutex<()>,
}

impl SubmissionStore {
    pub const PENDING: &'static str = "pending";
    pub const ARCHIVED: &'static str = "archived";
    pub const REJECTED: &'static str = "rejected";

    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StorageError> {
        let root = root.into();
        for dir in [Self::PENDING, Self::ARCHIVED, Self::REJECTED] {
            let path = root.join(dir);
            fs::create_dir_all(&path).map_err(StorageError::at(&path))?;
        }
        Ok(Self {
            root,
            write_lock: Mutex::new(()),
            merge_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn pending_dir(&self) -> PathBuf {
        self.root.join(Self::PENDING)
    }

    pub fn archived_dir(&self) -> PathBuf {
        self.root.join(Self::ARCHIVED)
    }

    pub fn rejected_dir(&self) -> PathBuf {
        self.root.join(Self::REJECTED)
    }

    /// Writes `s` to the pending directory and returns its filename. The
    /// file appears atomically; saving identical content within the same
    /// second rewrites the same file with the same bytes.
    pub fn save_submission(&self, s: &Submission, now: DateTime<Utc>) -> Result<String, StorageError> {
        let filename = submission_filename(s, now);
        let mut body = Vec::new();
        write_submission_csv(s, &mut body).map_err(|e| StorageError {
            path: PathBuf::from(&filename),
            source: io::Error::other(e),
        })?;

        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let target = self.pending_dir().join(&filename);
        let tmp = self.pending_dir().join(format!(".{filename}.tmp"));
        fs::write(&tmp, &body).map_err(StorageError::at(&tmp))?;
        fs::rename(&tmp, &target).map_err(StorageError::at(&target))?;
        Ok(filename)
    }

    /// Submission filenames in `dir`, sorted.
    fn list(&self, dir: &Path) -> Result<Vec<String>, StorageError> {
        let mut names = Vec::new();
        for entry in fs::read_dir(dir).map_err(StorageError::at(dir))? {
            let entry = entry.map_err(StorageError::at(dir))?;
            if let Some(name) = entry.file_name().to_str() {
                if is_submission_filename(name) {
                    names.push(name.to_string());
                }
            }
        }
        names.sort();
        Ok(names)
    }

    pub fn pending(&self) -> Result<Vec<String>, StorageError> {
        self.list(&self.pending_dir())
    }

    pub fn archived(&self) -> Result<Vec<String>, StorageError> {
        self.list(&self.archived_dir())
    }

    pub fn rejected(&self) -> Result<Vec<String>, StorageError> {
        self.list(&self.rejected_dir())
    }

    pub fn read_pending(&self, filename: &str) -> Result<Result<Submission, String>, StorageError> {
        let path = self.pending_dir().join(filename);
        let bytes = fs::read(&path).map_err(StorageError::at(&path))?;
        Ok(parse_submission_csv(bytes.as_slice()))
    }

    /// Merges every pending file, in filename order, into a new catalog
    /// snapshot. Geocoded submissions become apartments and are archived,
    /// as are those whose id is already present. Files that fail to parse
    /// or geocode move to `rejected/` next to a `<file>.reason.txt`.
    pub fn merge_pending(
        &self,
        catalog: &Catalog,
        geocoder: &dyn Geocoder,
    ) -> Result<(Catalog, MergeReport), MergeError> {
        let _merge = self.merge_lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut report = MergeReport::default();
        let mut added: Vec<Place> = Vec::new();
        let mut seen: HashSet<String> = HashSet::new();

        for filename in self.pending()? {
            let submission = match self.read_pending(&filename)? {
                Ok(s) => s,
                Err(reason) => {
                    self.reject(&filename, &format!("unparseable: {reason}"))?;
                    report.rejected.push(RejectedEntry { filename, reason });
                    continue;
                }
            };
            let Some(location) = geocoder.geocode(submission.address()) else {
                let reason = format!("address could not be geocoded: {}", submission.address());
                self.reject(&filename, &reason)?;
                report.rejected.push(RejectedEntry { filename, reason });
                continue;
            };
            let place = to_apartment(&submission, location);
            let entry = MergedEntry {
                filename: filename.clone(),
                id: place.id.clone(),
            };
            if catalog.contains_id(&place.id) || !seen.insert(place.id.clone()) {
                report.duplicates.push(entry);
            } else {
                added.push(place);
                report.merged.push(entry);
            }
            self.archive(&filename)?;
        }

        let merged = if added.is_empty() {
            catalog.clone()
        } else {
            catalog.with_places(added)?
        };
        Ok((merged, report))
    }

    fn archive(&self, filename: &str) -> Result<(), StorageError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let to = self.archived_dir().join(filename);
        fs::rename(self.pending_dir().join(filename), &to).map_err(StorageError::at(&to))
    }

    fn reject(&self, filename: &str, reason: &str) -> Result<(), StorageError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let sidecar = self.rejected_dir().join(format!("{filename}.reason.txt"));
        fs::write(&sidecar, format!("{reason}\n")).map_err(StorageError::at(&sidecar))?;
        let to = self.rejected_dir().join(filename);
        fs::rename(self.pending_dir().join(filename), &to).map_err(StorageError::at(&to))
    }
}

fn to_apartment(s: &Submission, location: GeoPoint) -> Place {
    let mut place = Place::new(s.name(), PlaceCategory::Apartment, location, s.address());
    place.phone = s.phone.clone();
    place.website = s.website.clone();
    match s.monthly_rent {
        Some(rent) => place.with_monthly_cost(rent),
        None => place,
    }
}
