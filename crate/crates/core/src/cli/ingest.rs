//! Long-format CSV for observations and schedules.
//!
//! ```text
//! field,year,channel,value
//! 1,1987,TOC,41.2
//!
//! field,year,treatment
//! 1,1997,Fallow
//! ```
//!
//! Floats are written with 17 significant digits so a write/read cycle is
//! exact.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::domain::{Channel, Dataset, ManagementSchedule, Treatment};
use crate::error::{Error, Result};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_path(path).map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize);
    let msg = format!("{}: {e}", path.display());
    match (e.into_kind(), line) {
        (csv::ErrorKind::Io(io), _) => Error::io(path, io),
        (_, Some(l)) => Error::data_at(l, msg),
        (_, None) => Error::data(msg),
    }
}

fn check_header(path: &Path, rdr: &mut csv::Reader<std::fs::File>, want: &[&str]) -> Result<()> {
    let h = rdr.headers().map_err(|e| csv_err(path, e))?;
    let got: Vec<String> = h.iter().map(|s| s.to_ascii_lowercase()).collect();
    if got != want {
        return Err(Error::data_at(1, format!("{}: expected columns {}, found {}", path.display(), want.join(","), got.join(","))));
    }
    Ok(())
}

/// Field identifiers in order of first appearance, and the schedule.
pub fn read_schedule(path: &Path) -> Result<(Vec<String>, ManagementSchedule)> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["field", "year", "treatment"])?;
    let mut fields: Vec<String> = Vec::new();
    let mut rows: Vec<BTreeMap<i32, Treatment>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 3 {
            return Err(Error::data_at(line, "expected field,year,treatment"));
        }
        let year: i32 = rec[1].parse().map_err(|_| Error::data_at(line, format!("bad year '{}'", &rec[1])))?;
        let t: Treatment = rec[2].parse().map_err(|e: Error| Error::data_at(line, e.to_string()))?;
        let f = match fields.iter().position(|f| f == &rec[0]) {
            Some(f) => f,
            None => {
                fields.push(rec[0].to_string());
                rows.push(BTreeMap::new());
                fields.len() - 1
            }
        };
        if rows[f].insert(year, t).is_some() {
            return Err(Error::data_at(line, format!("field {} year {year} is scheduled twice", &rec[0])));
        }
    }
    let (Some(start), Some(end)) = (
        rows.iter().filter_map(|r| r.keys().next()).min().copied(),
        rows.iter().filter_map(|r| r.keys().next_back()).max().copied(),
    ) else {
        return Err(Error::data(format!("{} holds no schedule rows", path.display())));
    };
    let mut table = Vec::with_capacity(rows.len());
    for (f, r) in rows.iter().enumerate() {
        let row = (start..=end)
            .map(|y| {
                r.get(&y).copied().ok_or_else(|| {
                    Error::data(format!("{}: field {} has no treatment for {y}", path.display(), fields[f]))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        table.push(row);
    }
    Ok((fields, ManagementSchedule::from_rows(start, table)?))
}

/// Adds the observations in `path` to an empty dataset over `fields` and
/// `schedule`.
pub fn read_observations(path: &Path, fields: Vec<String>, schedule: ManagementSchedule) -> Result<Dataset> {
    let mut data = Dataset::new(fields, schedule)?;
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["field", "year", "channel", "value"])?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 4 {
            return Err(Error::data_at(line, "expected field,year,channel,value"));
        }
        let f = data
            .field_index(&rec[0])
            .ok_or_else(|| Error::data_at(line, format!("field '{}' is not in the schedule", &rec[0])))?;
        let year: i32 = rec[1].parse().map_err(|_| Error::data_at(line, format!("bad year '{}'", &rec[1])))?;
        let t = data
            .year_index(year)
            .ok_or_else(|| Error::data_at(line, format!("year {year} is outside the schedule")))?;
        let ch: Channel = rec[2].parse().map_err(|e: Error| Error::data_at(line, e.to_string()))?;
        let v: f64 = rec[3].parse().map_err(|_| Error::data_at(line, format!("bad value '{}'", &rec[3])))?;
        if data.get(f, t, ch).is_some() {
            return Err(Error::data_at(line, format!("duplicate {ch} for field {} year {year}", &rec[0])));
        }
        data.set(f, t, ch, v).map_err(|e| match e {
            Error::Data { message, .. } => Error::data_at(line, message),
            e => e,
        })?;
    }
    Ok(data)
}

pub fn ingest_dataset(observations: &Path, schedule: &Path) -> Result<Dataset> {
    let (fields, schedule) = read_schedule(schedule)?;
    read_observations(observations, fields, schedule)
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn write_observations(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "field,year,channel,value").map_err(io)?;
    for (f, t, ch, v) in data.observations() {
        writeln!(w, "{},{},{},{}", data.fields()[f], data.year(t), ch, fmt_f64(v)).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_schedule(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "field,year,treatment").map_err(io)?;
    for f in 0..data.n_fields() {
        for t in 0..data.n_years() {
            writeln!(w, "{},{},{}", data.fields()[f], data.year(t), data.schedule().get(f, t)).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}
