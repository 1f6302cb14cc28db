//! Loading, validation, and alignment of raw indicator and target count data.
//!
//! Raw inputs are three CSV files: per-zip daily attestation counts, per-unit
//! daily census counts, and a zip-to-unit service-area map. `build_panel`
//! aggregates attestations to units, intersects the covered date ranges, and
//! emits a gap-free [`PanelDataset`] at daily or weekly frequency.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling frequency of a panel calendar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    /// One period per day.
    Daily,
    /// One period per ISO-8601 week (Monday start), identified by its Monday.
    Weekly,
}

impl Frequency {
    /// Period step in days.
    pub fn step_days(self) -> i64 {
        match self {
            Frequency::Daily => 1,
            Frequency::Weekly => 7,
        }
    }
}

impl std::str::FromStr for Frequency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "daily" => Ok(Frequency::Daily),
            "weekly" => Ok(Frequency::Weekly),
            other => Err(Error::Config(format!(
                "unknown frequency '{other}' (expected 'daily' or 'weekly')"
            ))),
        }
    }
}

/// One zip-to-unit assignment with service-area metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipEntry {
    /// 5-character zip code.
    pub zip: String,
    /// Unit the zip's residents are assigned to.
    pub unit_id: String,
    /// Resident population of the zip.
    pub population: u64,
    /// Share of the zip's population served by the unit, in [0, 1].
    pub market_share_weight: f64,
}

/// Validated zip-to-unit map.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ZipMap {
    /// Entries, one per zip.
    pub entries: Vec<ZipEntry>,
}

impl ZipMap {
    /// Build from entries, enforcing uniqueness and weight bounds.
    pub fn new(entries: Vec<ZipEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if e.zip.len() != 5 {
                return Err(Error::InvalidRecord(format!(
                    "zip '{}' is not 5 characters",
                    e.zip
                )));
            }
            if !seen.insert(e.zip.clone()) {
                return Err(Error::DuplicateZip { zip: e.zip.clone() });
            }
            if !(0.0..=1.0).contains(&e.market_share_weight) {
                return Err(Error::InvalidRecord(format!(
                    "market_share_weight {} for zip '{}' outside [0, 1]",
                    e.market_share_weight, e.zip
                )));
            }
        }
        Ok(ZipMap { entries })
    }

    /// Unit id a zip maps to, if any.
    pub fn unit_for(&self, zip: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.zip == zip)
            .map(|e| e.unit_id.as_str())
    }

    /// Distinct unit ids referenced by the map, sorted.
    pub fn unit_ids(&self) -> Vec<String> {
        let set: BTreeSet<_> = self.entries.iter().map(|e| e.unit_id.clone()).collect();
        set.into_iter().collect()
    }

    /// Market-share-weighted population of a unit's service area.
    pub fn weighted_population(&self, unit_id: &str) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.unit_id == unit_id)
            .map(|e| e.population as f64 * e.market_share_weight)
            .sum()
    }
}

/// One day's attestation counts for one zip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAttestationRecord {
    /// Calendar day.
    pub date: NaiveDate,
    /// Employee home zip.
    pub zip: String,
    /// Employees on-site that day.
    pub n_onsite: u64,
    /// Employees reporting at least one symptom that day.
    pub n_symptomatic: u64,
}

impl RawAttestationRecord {
    fn validate(&self) -> Result<()> {
        if self.n_symptomatic > self.n_onsite {
            return Err(Error::InvalidRecord(format!(
                "n_symptomatic {} exceeds n_onsite {} for zip '{}' on {}",
                self.n_symptomatic, self.n_onsite, self.zip, self.date
            )));
        }
        Ok(())
    }
}

/// One day's target count for one unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCensusRecord {
    /// Calendar day.
    pub date: NaiveDate,
    /// Unit the count belongs to.
    pub unit_id: String,
    /// Inpatient count.
    pub census: u64,
}

/// Per-unit descriptor carried by a panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitMeta {
    /// Unit identifier.
    pub id: String,
    /// Mean daily on-site attestation count over the panel calendar.
    /// `None` when the panel was not built from attestation records.
    pub mean_daily_onsite: Option<f64>,
}

impl UnitMeta {
    /// Descriptor with no attestation coverage info.
    pub fn bare(id: impl Into<String>) -> Self {
        UnitMeta {
            id: id.into(),
            mean_daily_onsite: None,
        }
    }
}

/// Aligned per-unit target (`y`) and indicator (`x`) count series over a
/// common gap-free calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    /// N unit descriptors, in panel row order.
    pub units: Vec<UnitMeta>,
    /// T consecutive periods. Weekly periods are identified by their Monday.
    pub calendar: Vec<NaiveDate>,
    /// N x T target counts.
    pub y: Vec<Vec<f64>>,
    /// N x T indicator counts.
    pub x: Vec<Vec<f64>>,
    /// Period length.
    pub frequency: Frequency,
}

impl PanelDataset {
    /// Number of units N.
    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    /// Number of periods T.
    pub fn n_periods(&self) -> usize {
        self.calendar.len()
    }

    /// Row index of a unit id.
    pub fn unit_index(&self, unit_id: &str) -> Option<usize> {
        self.units.iter().position(|u| u.id == unit_id)
    }

    /// Check the structural invariants: consistent shapes, a gap-free
    /// calendar, and non-negative values.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_units();
        let t = self.n_periods();
        if n == 0 || t == 0 {
            return Err(Error::InvalidRecord("empty panel".into()));
        }
        if self.y.len() != n || self.x.len() != n {
            return Err(Error::LengthMismatch {
                left: self.y.len().max(self.x.len()),
                right: n,
            });
        }
        for (i, (ys, xs)) in self.y.iter().zip(&self.x).enumerate() {
            if ys.len() != t || xs.len() != t {
                return Err(Error::Alignment(format!(
                    "unit '{}' has {} y and {} x values for {} periods",
                    self.units[i].id,
                    ys.len(),
                    xs.len(),
                    t
                )));
            }
            if ys
                .iter()
                .chain(xs.iter())
                .any(|v| !v.is_finite() || *v < 0.0)
            {
                return Err(Error::InvalidRecord(format!(
                    "unit '{}' has negative or non-finite counts",
                    self.units[i].id
                )));
            }
        }
        let step = self.frequency.step_days();
        for w in self.calendar.windows(2) {
            if w[1] - w[0] != Duration::days(step) {
                return Err(Error::Alignment(format!(
                    "calendar not consecutive between {} and {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    /// Sum daily values into ISO-8601 weeks (Monday start), dropping partial
    /// boundary weeks. Attestation coverage metadata is preserved.
    pub fn aggregate_weekly(&self) -> Result<PanelDataset> {
        if self.frequency != Frequency::Daily {
            return Err(Error::Config(
                "weekly aggregation requires a daily panel".into(),
            ));
        }
        self.validate()?;

        // Indices of the first Monday and the last Sunday in the calendar.
        let start = self
            .calendar
            .iter()
            .position(|d| d.weekday() == Weekday::Mon);
        let end = self
            .calendar
            .iter()
            .rposition(|d| d.weekday() == Weekday::Sun);
        let (start, end) = match (start, end) {
            (Some(s), Some(e)) if s < e => (s, e),
            _ => {
                return Err(Error::InsufficientLength(
                    "no complete ISO week inside the daily calendar".into(),
                ))
            }
        };
        let n_weeks = (end + 1 - start) / 7;
        if n_weeks == 0 {
            return Err(Error::InsufficientLength(
                "no complete ISO week inside the daily calendar".into(),
            ));
        }

        let mut y = vec![vec![0.0; n_weeks]; self.n_units()];
        let mut x = vec![vec![0.0; n_weeks]; self.n_units()];
        for i in 0..self.n_units() {
            for w in 0..n_weeks {
                let lo = start + 7 * w;
                y[i][w] = self.y[i][lo..lo + 7].iter().sum();
                x[i][w] = self.x[i][lo..lo + 7].iter().sum();
            }
        }
        let calendar = (0..n_weeks).map(|w| self.calendar[start + 7 * w]).collect();
        Ok(PanelDataset {
            units: self.units.clone(),
            calendar,
            y,
            x,
            frequency: Frequency::Weekly,
        })
    }

    /// Write as `unit_id,date,y,x` rows, one per cell pair, units in panel
    /// order and dates ascending within unit.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("unit_id,date,y,x\n");
        for (i, unit) in self.units.iter().enumerate() {
            for (t, date) in self.calendar.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    csv_field(&unit.id),
                    date,
                    self.y[i][t],
                    self.x[i][t]
                ));
            }
        }
        write_file(path, out.as_bytes())
    }

    /// Read a panel written by [`PanelDataset::write_csv`]. Row order does
    /// not matter; every unit must cover the same gap-free calendar.
    pub fn read_csv(path: &Path) -> Result<PanelDataset> {
        let mut reader = open_csv(path)?;
        expect_headers(&mut reader, path, &["unit_id", "date", "y", "x"])?;

        // unit -> date -> (y, x); BTreeMaps keep the result order-independent.
        let mut cells: BTreeMap<String, BTreeMap<NaiveDate, (f64, f64)>> = BTreeMap::new();
        let mut first_seen: Vec<String> = Vec::new();
        for row in reader.records() {
            let record = row.map_err(|e| csv_error(path, &e))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let unit_id = field(&record, 0, path, line)?.to_string();
            let date = parse_date(field(&record, 1, path, line)?, path, line)?;
            let y = parse_f64(field(&record, 2, path, line)?, path, line)?;
            let x = parse_f64(field(&record, 3, path, line)?, path, line)?;
            if y < 0.0 || x < 0.0 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: "negative count".into(),
                });
            }
            if !cells.contains_key(&unit_id) {
                first_seen.push(unit_id.clone());
            }
            if cells
                .entry(unit_id.clone())
                .or_default()
                .insert(date, (y, x))
                .is_some()
            {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("duplicate cell for unit '{unit_id}' on {date}"),
                });
            }
        }
        if cells.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: "no data rows".into(),
            });
        }

        let calendar: Vec<NaiveDate> = cells.values().next().unwrap().keys().copied().collect();
        let frequency = infer_frequency(&calendar)?;
        let mut y = Vec::with_capacity(first_seen.len());
        let mut x = Vec::with_capacity(first_seen.len());
        for unit_id in &first_seen {
            let per_date = &cells[unit_id];
            if per_date.len() != calendar.len()
                || per_date.keys().zip(&calendar).any(|(a, b)| a != b)
            {
                return Err(Error::Alignment(format!(
                    "unit '{unit_id}' does not cover the common calendar"
                )));
            }
            y.push(per_date.values().map(|c| c.0).collect());
            x.push(per_date.values().map(|c| c.1).collect());
        }
        let panel = PanelDataset {
            units: first_seen.into_iter().map(UnitMeta::bare).collect(),
            calendar,
            y,
            x,
            frequency,
        };
        panel.validate()?;
        Ok(panel)
    }
}

fn infer_frequency(calendar: &[NaiveDate]) -> Result<Frequency> {
    if calendar.len() < 2 {
        return Ok(Frequency::Daily);
    }
    match (calendar[1] - calendar[0]).num_days() {
        1 => Ok(Frequency::Daily),
        7 => Ok(Frequency::Weekly),
        d => Err(Error::Alignment(format!(
            "calendar step of {d} days is neither daily nor weekly"
        ))),
    }
}

/// Load and validate a zip map CSV (`zip,unit_id,population,market_share_weight`).
pub fn load_zip_map(path: &Path) -> Result<ZipMap> {
    let mut reader = open_csv(path)?;
    expect_headers(
        &mut reader,
        path,
        &["zip", "unit_id", "population", "market_share_weight"],
    )?;
    let mut entries = Vec::new();
    for row in reader.records() {
        let record = row.map_err(|e| csv_error(path, &e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        entries.push(ZipEntry {
            zip: field(&record, 0, path, line)?.to_string(),
            unit_id: field(&record, 1, path, line)?.to_string(),
            population: parse_u64(field(&record, 2, path, line)?, path, line)?,
            market_share_weight: parse_f64(field(&record, 3, path, line)?, path, line)?,
        });
    }
    ZipMap::new(entries)
}

/// Load attestation records (`date,zip,n_onsite,n_symptomatic`).
pub fn load_attestations(path: &Path) -> Result<Vec<RawAttestationRecord>> {
    let mut reader = open_csv(path)?;
    expect_headers(
        &mut reader,
        path,
        &["date", "zip", "n_onsite", "n_symptomatic"],
    )?;
    let mut records = Vec::new();
    for row in reader.records() {
        let record = row.map_err(|e| csv_error(path, &e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let rec = RawAttestationRecord {
            date: parse_date(field(&record, 0, path, line)?, path, line)?,
            zip: field(&record, 1, path, line)?.to_string(),
            n_onsite: parse_u64(field(&record, 2, path, line)?, path, line)?,
            n_symptomatic: parse_u64(field(&record, 3, path, line)?, path, line)?,
        };
        rec.validate()?;
        records.push(rec);
    }
    Ok(records)
}

/// Load census records (`date,unit_id,census`), rejecting duplicate
/// (date, unit) pairs.
pub fn load_census(path: &Path) -> Result<Vec<RawCensusRecord>> {
    let mut reader = open_csv(path)?;
    expect_headers(&mut reader, path, &["date", "unit_id", "census"])?;
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for row in reader.records() {
        let record = row.map_err(|e| csv_error(path, &e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let rec = RawCensusRecord {
            date: parse_date(field(&record, 0, path, line)?, path, line)?,
            unit_id: field(&record, 1, path, line)?.to_string(),
            census: parse_u64(field(&record, 2, path, line)?, path, line)?,
        };
        if !seen.insert((rec.date, rec.unit_id.clone())) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!(
                    "duplicate census row for unit '{}' on {}",
                    rec.unit_id, rec.date
                ),
            });
        }
        records.push(rec);
    }
    Ok(records)
}

/// Attestation zips absent from the zip map, sorted and deduplicated.
pub fn unmapped_zips(attestations: &[RawAttestationRecord], zipmap: &ZipMap) -> Vec<String> {
    let known: BTreeSet<&str> = zipmap.entries.iter().map(|e| e.zip.as_str()).collect();
    let offending: BTreeSet<String> = attestations
        .iter()
        .filter(|r| !known.contains(r.zip.as_str()))
        .map(|r| r.zip.clone())
        .collect();
    offending.into_iter().collect()
}

/// Aggregate raw records into an aligned panel.
///
/// Indicator counts are summed over each unit's zips per day; days with no
/// attestation rows inside the covered range count as zero. The calendar is
/// the intersection of the attestation range and every unit's census range;
/// a census hole inside that calendar is a hard error. With `allow_unmapped`
/// the records for unknown zips are excluded instead of failing (callers can
/// report them via [`unmapped_zips`]).
pub fn build_panel(
    attestations: &[RawAttestationRecord],
    census: &[RawCensusRecord],
    zipmap: &ZipMap,
    frequency: Frequency,
    allow_unmapped: bool,
) -> Result<PanelDataset> {
    for rec in attestations {
        rec.validate()?;
    }
    let offending = unmapped_zips(attestations, zipmap);
    if !offending.is_empty() && !allow_unmapped {
        return Err(Error::UnmappedZips { zips: offending });
    }

    if census.is_empty() {
        return Err(Error::EmptyIntersection);
    }

    // Unit registry comes from the census; zip map entries must resolve into it.
    let unit_ids: Vec<String> = {
        let set: BTreeSet<String> = census.iter().map(|r| r.unit_id.clone()).collect();
        set.into_iter().collect()
    };
    for entry in &zipmap.entries {
        if !unit_ids.contains(&entry.unit_id) {
            return Err(Error::UnknownUnit {
                unit_id: entry.unit_id.clone(),
            });
        }
    }

    // Covered ranges.
    let mapped: Vec<&RawAttestationRecord> = attestations
        .iter()
        .filter(|r| zipmap.unit_for(&r.zip).is_some())
        .collect();
    if mapped.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let att_min = mapped.iter().map(|r| r.date).min().unwrap();
    let att_max = mapped.iter().map(|r| r.date).max().unwrap();
    let mut start = att_min;
    let mut end = att_max;
    for unit_id in &unit_ids {
        let dates: Vec<NaiveDate> = census
            .iter()
            .filter(|r| &r.unit_id == unit_id)
            .map(|r| r.date)
            .collect();
        start = start.max(*dates.iter().min().unwrap());
        end = end.min(*dates.iter().max().unwrap());
    }
    if start > end {
        return Err(Error::EmptyIntersection);
    }
    let n_days = (end - start).num_days() as usize + 1;
    let calendar: Vec<NaiveDate> = (0..n_days)
        .map(|d| start + Duration::days(d as i64))
        .collect();

    // Census lookup and gap detection inside the final calendar.
    let mut y = vec![vec![0.0; n_days]; unit_ids.len()];
    {
        let mut lookup: BTreeMap<(&str, NaiveDate), u64> = BTreeMap::new();
        for r in census {
            lookup.insert((r.unit_id.as_str(), r.date), r.census);
        }
        for (i, unit_id) in unit_ids.iter().enumerate() {
            let mut missing = Vec::new();
            for (t, date) in calendar.iter().enumerate() {
                match lookup.get(&(unit_id.as_str(), *date)) {
                    Some(c) => y[i][t] = *c as f64,
                    None => missing.push(*date),
                }
            }
            if !missing.is_empty() {
                return Err(Error::CalendarGap {
                    unit_id: unit_id.clone(),
                    missing,
                });
            }
        }
    }

    // Indicator counts and attestation coverage per unit-day.
    let mut x = vec![vec![0.0; n_days]; unit_ids.len()];
    let mut onsite_totals = vec![0u64; unit_ids.len()];
    for r in &mapped {
        if r.date < start || r.date > end {
            continue;
        }
        let unit = zipmap.unit_for(&r.zip).unwrap();
        let i = unit_ids.iter().position(|u| u == unit).unwrap();
        let t = (r.date - start).num_days() as usize;
        x[i][t] += r.n_symptomatic as f64;
        onsite_totals[i] += r.n_onsite;
    }

    let units = unit_ids
        .iter()
        .enumerate()
        .map(|(i, id)| UnitMeta {
            id: id.clone(),
            mean_daily_onsite: Some(onsite_totals[i] as f64 / n_days as f64),
        })
        .collect();

    let panel = PanelDataset {
        units,
        calendar,
        y,
        x,
        frequency: Frequency::Daily,
    };
    panel.validate()?;
    match frequency {
        Frequency::Daily => Ok(panel),
        Frequency::Weekly => panel.aggregate_weekly(),
    }
}

// ---------------------------------------------------------------------------
// CSV plumbing shared by the loaders.

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file))
}

fn expect_headers(
    reader: &mut csv::Reader<std::fs::File>,
    path: &Path,
    expected: &[&str],
) -> Result<()> {
    let headers = reader.headers().map_err(|e| csv_error(path, &e))?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!(
                "unexpected header '{}' (expected '{}')",
                got.join(","),
                expected.join(",")
            ),
        });
    }
    Ok(())
}

fn csv_error(path: &Path, err: &csv::Error) -> Error {
    let line = match err.position() {
        Some(pos) => pos.line(),
        None => 0,
    };
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: err.to_string(),
    }
}

fn field<'a>(record: &'a csv::StringRecord, idx: usize, path: &Path, line: u64) -> Result<&'a str> {
    record.get(idx).map(str::trim).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("missing field {idx}"),
    })
}

fn parse_date(s: &str, path: &Path, line: u64) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("bad date '{s}' (expected YYYY-MM-DD)"),
    })
}

fn parse_u64(s: &str, path: &Path, line: u64) -> Result<u64> {
    s.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("bad non-negative integer '{s}'"),
    })
}

fn parse_f64(s: &str, path: &Path, line: u64) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("bad number '{s}'"),
    })
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
