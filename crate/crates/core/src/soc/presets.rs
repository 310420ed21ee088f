//! Management schedules of the three field sites.
//!
//! Rotations described as "wheat and X" alternate year by year, wheat
//! first. The first year of each schedule only fixes the initial state, so
//! it copies the treatment of the year after it.

use super::Site;
use crate::domain::{ManagementSchedule, Treatment};
use crate::error::{Error, Result};

use Treatment::*;

fn alternate(years: std::ops::RangeInclusive<i32>, a: Treatment, b: Treatment) -> Vec<(i32, Treatment)> {
    let start = *years.start();
    years.map(|y| (y, if (y - start) % 2 == 0 { a } else { b })).collect()
}

fn build(start: i32, end: i32, fields: Vec<Vec<(i32, Treatment)>>) -> Result<ManagementSchedule> {
    let n = (end - start + 1) as usize;
    let mut rows = Vec::with_capacity(fields.len());
    for spec in fields {
        let mut row = vec![None; n];
        for (y, t) in spec {
            row[(y - start) as usize] = Some(t);
        }
        if row[0].is_none() {
            row[0] = row.get(1).copied().flatten();
        }
        let row = row
            .into_iter()
            .enumerate()
            .map(|(i, t)| t.ok_or_else(|| Error::config(format!("preset leaves year {} empty", start + i as i32))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    ManagementSchedule::from_rows(start, rows)
}

/// Tarlee, 1978 to 1997, three fields.
pub fn tarlee() -> ManagementSchedule {
    let mut f1: Vec<_> = (1979..=1987).map(|y| (y, WheatGrain)).collect();
    f1.extend([(1988, WheatHay), (1989, WheatHay)]);
    f1.extend((1990..=1996).map(|y| (y, WheatGrain)));
    f1.push((1997, Fallow));

    let mut f2 = alternate(1979..=1988, WheatGrain, Fallow);
    f2.push((1989, WheatHay));
    f2.extend(alternate(1990..=1996, WheatGrain, Fallow));
    f2.push((1997, Fallow));

    let mut f3 = alternate(1979..=1987, WheatGrain, Pasture);
    f3.extend(alternate(1988..=1989, WheatHay, PastureHay));
    f3.extend(alternate(1990..=1996, WheatGrain, Pasture));
    f3.push((1997, Fallow));

    build(1978, 1997, vec![f1, f2, f3]).expect("tarlee preset is complete")
}

/// Brigalow, 1982 to 1999, three soil types under one rotation.
pub fn brigalow() -> ManagementSchedule {
    let mut f = vec![(1982, Cleared), (1983, Fallow), (1984, SorghumGrain), (1993, Fallow)];
    f.extend((1985..=1992).map(|y| (y, WheatGrain)));
    f.extend([1994, 1996, 1998].map(|y| (y, WheatGrain)));
    f.extend([1995, 1997, 1999].map(|y| (y, SorghumGrain)));
    build(1982, 1999, vec![f.clone(), f.clone(), f]).expect("brigalow preset is complete")
}

/// Broadbalk wheat for grain every year from 1852 to `end`.
pub fn broadbalk(end: i32, n_fields: usize) -> Result<ManagementSchedule> {
    if end <= 1852 || n_fields == 0 {
        return Err(Error::config("broadbalk preset needs an end year after 1852 and at least one field"));
    }
    Ok(ManagementSchedule::uniform(1852, (end - 1852 + 1) as usize, n_fields, WheatGrain))
}

pub fn schedule(site: Site) -> ManagementSchedule {
    match site {
        Site::Tarlee => tarlee(),
        Site::Brigalow => brigalow(),
        Site::Broadbalk => broadbalk(2016, 6).expect("valid"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tarlee_rows() {
        let s = tarlee();
        assert_eq!((s.n_fields(), s.n_years(), s.start_year()), (3, 20, 1978));
        for f in 0..3 {
            assert_eq!(s.get(f, 19), Fallow);
        }
        assert_eq!(s.get(0, 10), WheatHay);
        assert_eq!(s.get(1, 2), Fallow);
        assert_eq!(s.get(2, 2), Pasture);
        assert_eq!(s.get(2, 11), PastureHay);
    }

    #[test]
    fn brigalow_rows() {
        let s = brigalow();
        assert_eq!((s.n_years(), s.get(0, 0), s.get(0, 2), s.get(0, 11)), (18, Cleared, SorghumGrain, Fallow));
    }
}
