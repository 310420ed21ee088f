//! Observations and management schedules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Treatment {
    WheatGrain,
    WheatHay,
    Pasture,
    PastureHay,
    SorghumGrain,
    SorghumHay,
    Fallow,
    Cleared,
}

impl Treatment {
    pub const ALL: [Treatment; 8] = [
        Treatment::WheatGrain,
        Treatment::WheatHay,
        Treatment::Pasture,
        Treatment::PastureHay,
        Treatment::SorghumGrain,
        Treatment::SorghumHay,
        Treatment::Fallow,
        Treatment::Cleared,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Treatment::WheatGrain => "WheatGrain",
            Treatment::WheatHay => "WheatHay",
            Treatment::Pasture => "Pasture",
            Treatment::PastureHay => "PastureHay",
            Treatment::SorghumGrain => "SorghumGrain",
            Treatment::SorghumHay => "SorghumHay",
            Treatment::Fallow => "Fallow",
            Treatment::Cleared => "Cleared",
        }
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Treatment {
    type Err = Error;

    /// Accepts the canonical names case-insensitively, ignoring spaces,
    /// underscores and hyphens ("wheat_grain", "Wheat Grain").
    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, ' ' | '_' | '-'))
            .collect::<String>()
            .to_ascii_lowercase();
        Treatment::ALL
            .iter()
            .copied()
            .find(|t| t.name().to_ascii_lowercase() == norm)
            .ok_or_else(|| Error::data(format!("unknown treatment '{s}'")))
    }
}

/// Measurement channel of the observation model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    Toc,
    Poc,
    Iom,
    Hum,
    GrainWheat,
    GrainSorghum,
    Grain,
    Wheat,
    Sorghum,
    Pasture,
    Straw,
}

impl Channel {
    pub const COUNT: usize = 11;
    pub const ALL: [Channel; Channel::COUNT] = [
        Channel::Toc,
        Channel::Poc,
        Channel::Iom,
        Channel::Hum,
        Channel::GrainWheat,
        Channel::GrainSorghum,
        Channel::Grain,
        Channel::Wheat,
        Channel::Sorghum,
        Channel::Pasture,
        Channel::Straw,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Toc => "TOC",
            Channel::Poc => "POC",
            Channel::Iom => "IOM",
            Channel::Hum => "HUM",
            Channel::GrainWheat => "GW",
            Channel::GrainSorghum => "GS",
            Channel::Grain => "G",
            Channel::Wheat => "W",
            Channel::Sorghum => "S",
            Channel::Pasture => "P",
            Channel::Straw => "Str",
        }
    }

    /// Channels driven by plant dry matter rather than soil carbon.
    pub fn is_plant(self) -> bool {
        !matches!(self, Channel::Toc | Channel::Poc | Channel::Iom | Channel::Hum)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Channel::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s) || (s.eq_ignore_ascii_case("H") && *c == Channel::Hum))
            .ok_or_else(|| Error::data(format!("unknown channel '{s}'")))
    }
}

/// One treatment per (field, year) over the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManagementSchedule {
    start_year: i32,
    n_years: usize,
    n_fields: usize,
    treatments: Vec<Treatment>,
}

impl ManagementSchedule {
    pub fn uniform(start_year: i32, n_years: usize, n_fields: usize, treatment: Treatment) -> Self {
        ManagementSchedule { start_year, n_years, n_fields, treatments: vec![treatment; n_years * n_fields] }
    }

    /// Builds a schedule from `treatments[field][year_index]`.
    pub fn from_rows(start_year: i32, rows: Vec<Vec<Treatment>>) -> Result<Self> {
        let n_fields = rows.len();
        let n_years = rows.first().map(|r| r.len()).unwrap_or(0);
        if n_fields == 0 || n_years == 0 {
            return Err(Error::data("schedule must cover at least one field and one year"));
        }
        if rows.iter().any(|r| r.len() != n_years) {
            return Err(Error::data("every field needs a treatment for every year"));
        }
        Ok(ManagementSchedule { start_year, n_years, n_fields, treatments: rows.into_iter().flatten().collect() })
    }

    pub fn start_year(&self) -> i32 {
        self.start_year
    }

    pub fn n_years(&self) -> usize {
        self.n_years
    }

    pub fn n_fields(&self) -> usize {
        self.n_fields
    }

    pub fn get(&self, field: usize, t: usize) -> Treatment {
        self.treatments[field * self.n_years + t]
    }

    pub fn set(&mut self, field: usize, t: usize, treatment: Treatment) {
        self.treatments[field * self.n_years + t] = treatment;
    }

    pub fn iter(&self) -> impl Iterator<Item = Treatment> + '_ {
        self.treatments.iter().copied()
    }

    fn truncated(&self, n_years: usize) -> Self {
        let treatments = (0..self.n_fields)
            .flat_map(|f| (0..n_years).map(move |t| (f, t)))
            .map(|(f, t)| self.get(f, t))
            .collect();
        ManagementSchedule { start_year: self.start_year, n_years, n_fields: self.n_fields, treatments }
    }
}

/// Field-by-year observations with explicit missingness plus the schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    fields: Vec<String>,
    schedule: ManagementSchedule,
    /// Indexed by `(field * n_years + t) * Channel::COUNT + channel`.
    values: Vec<Option<f64>>,
}

impl Dataset {
    pub fn new(fields: Vec<String>, schedule: ManagementSchedule) -> Result<Self> {
        if fields.len() != schedule.n_fields() {
            return Err(Error::data(format!(
                "{} field identifiers but the schedule covers {} fields",
                fields.len(),
                schedule.n_fields()
            )));
        }
        let n = fields.len() * schedule.n_years() * Channel::COUNT;
        Ok(Dataset { fields, schedule, values: vec![None; n] })
    }

    pub fn fields(&self) -> &[String] {
        &self.fields
    }

    pub fn n_fields(&self) -> usize {
        self.fields.len()
    }

    pub fn n_years(&self) -> usize {
        self.schedule.n_years()
    }

    pub fn start_year(&self) -> i32 {
        self.schedule.start_year()
    }

    pub fn end_year(&self) -> i32 {
        self.start_year() + self.n_years() as i32 - 1
    }

    pub fn year(&self, t: usize) -> i32 {
        self.start_year() + t as i32
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        let t = year - self.start_year();
        (t >= 0 && (t as usize) < self.n_years()).then_some(t as usize)
    }

    pub fn field_index(&self, id: &str) -> Option<usize> {
        self.fields.iter().position(|f| f == id)
    }

    pub fn schedule(&self) -> &ManagementSchedule {
        &self.schedule
    }

    fn slot(&self, field: usize, t: usize, channel: Channel) -> usize {
        (field * self.n_years() + t) * Channel::COUNT + channel.index()
    }

    pub fn get(&self, field: usize, t: usize, channel: Channel) -> Option<f64> {
        self.values[self.slot(field, t, channel)]
    }

    /// Records an observation; values must be strictly positive because every
    /// channel is log-normal.
    pub fn set(&mut self, field: usize, t: usize, channel: Channel, value: f64) -> Result<()> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::data(format!(
                "observation {channel} for field {} year {} must be positive, got {value}",
                self.fields[field],
                self.year(t)
            )));
        }
        let slot = self.slot(field, t, channel);
        self.values[slot] = Some(value);
        Ok(())
    }

    pub fn clear(&mut self, field: usize, t: usize, channel: Channel) {
        let slot = self.slot(field, t, channel);
        self.values[slot] = None;
    }

    /// True if any channel in `channels` is observed at year index `t`.
    pub fn has_any(&self, t: usize, channels: &[Channel]) -> bool {
        (0..self.n_fields()).any(|f| channels.iter().any(|&c| self.get(f, t, c).is_some()))
    }

    /// Year indices carrying at least one observation.
    pub fn observed_years(&self) -> Vec<usize> {
        (0..self.n_years()).filter(|&t| self.has_any(t, &Channel::ALL)).collect()
    }

    /// Channels with at least one observation anywhere.
    pub fn channels_present(&self) -> Vec<Channel> {
        Channel::ALL
            .iter()
            .copied()
            .filter(|&c| (0..self.n_years()).any(|t| (0..self.n_fields()).any(|f| self.get(f, t, c).is_some())))
            .collect()
    }

    /// Iterates over `(field, t, channel, value)` for every observation.
    pub fn observations(&self) -> impl Iterator<Item = (usize, usize, Channel, f64)> + '_ {
        (0..self.n_fields()).flat_map(move |f| {
            (0..self.n_years()).flat_map(move |t| {
                Channel::ALL.iter().filter_map(move |&c| self.get(f, t, c).map(|v| (f, t, c, v)))
            })
        })
    }

    /// Keeps years `0..=last` only.
    pub fn truncated(&self, last: usize) -> Dataset {
        let n_years = (last + 1).min(self.n_years());
        let schedule = self.schedule.truncated(n_years);
        let mut out = Dataset { fields: self.fields.clone(), schedule, values: vec![None; 0] };
        out.values = vec![None; self.n_fields() * n_years * Channel::COUNT];
        for f in 0..self.n_fields() {
            for t in 0..n_years {
                for c in Channel::ALL {
                    let slot = out.slot(f, t, c);
                    out.values[slot] = self.get(f, t, c);
                }
            }
        }
        out
    }

    /// Copy without any observation in `channels`.
    pub fn without_channels(&self, channels: &[Channel]) -> Dataset {
        let mut out = self.clone();
        for f in 0..self.n_fields() {
            for t in 0..self.n_years() {
                for &c in channels {
                    out.clear(f, t, c);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        let sched = ManagementSchedule::uniform(1978, 5, 2, Treatment::WheatGrain);
        Dataset::new(vec!["1".into(), "2".into()], sched).unwrap()
    }

    #[test]
    fn missing_is_none_not_zero() {
        let mut d = small();
        d.set(0, 2, Channel::Toc, 41.2).unwrap();
        assert_eq!(d.get(0, 2, Channel::Toc), Some(41.2));
        assert_eq!(d.get(1, 2, Channel::Toc), None);
        assert_eq!(d.observed_years(), vec![2]);
        assert_eq!(d.channels_present(), vec![Channel::Toc]);
    }

    #[test]
    fn rejects_nonpositive_values() {
        let mut d = small();
        assert!(matches!(d.set(0, 0, Channel::Toc, 0.0), Err(Error::Data { .. })));
        assert!(d.set(0, 0, Channel::Toc, -3.0).is_err());
        assert!(d.set(0, 0, Channel::Toc, f64::NAN).is_err());
    }

    #[test]
    fn truncation_keeps_prefix() {
        let mut d = small();
        d.set(0, 1, Channel::Toc, 40.0).unwrap();
        d.set(1, 4, Channel::Toc, 42.0).unwrap();
        let t = d.truncated(2);
        assert_eq!(t.n_years(), 3);
        assert_eq!(t.end_year(), 1980);
        assert_eq!(t.get(0, 1, Channel::Toc), Some(40.0));
        assert_eq!(t.observed_years(), vec![1]);
    }

    #[test]
    fn parses_names() {
        assert_eq!("wheat grain".parse::<Treatment>().unwrap(), Treatment::WheatGrain);
        assert_eq!("Fallow".parse::<Treatment>().unwrap(), Treatment::Fallow);
        assert!("Barley".parse::<Treatment>().is_err());
        assert_eq!("toc".parse::<Channel>().unwrap(), Channel::Toc);
        assert_eq!("Str".parse::<Channel>().unwrap(), Channel::Straw);
        assert!("XYZ".parse::<Channel>().is_err());
    }

    #[test]
    fn year_lookup() {
        let d = small();
        assert_eq!(d.year_index(1980), Some(2));
        assert_eq!(d.year_index(1977), None);
        assert_eq!(d.year_index(1983), None);
    }
}
