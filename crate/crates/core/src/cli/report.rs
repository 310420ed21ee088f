//! CSV artifacts of a run.

use std::io::Write;
use std::path::Path;

use super::ingest::fmt_f64;
use crate::cpm::ChainOutput;
use crate::diagnostics::{ParameterDiagnostics, TrajectoryQuantiles, QUANTILE_LEVELS};
use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::selection::{ElpdResult, WaicReport};

struct Csv<'a> {
    path: &'a Path,
    out: std::io::BufWriter<std::fs::File>,
}

impl<'a> Csv<'a> {
    fn create(path: &'a Path, header: &[String]) -> Result<Self> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut c = Csv { path, out: std::io::BufWriter::new(file) };
        c.row(header)?;
        Ok(c)
    }

    fn row(&mut self, cells: &[String]) -> Result<()> {
        writeln!(self.out, "{}", cells.join(",")).map_err(|e| Error::io(self.path, e))
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(self.path, e))
    }
}

fn strs(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn level_name(p: f64) -> String {
    format!("q{}", p * 100.0)
}

pub fn write_posterior(path: &Path, chains: &[ChainOutput]) -> Result<()> {
    let names = chains.first().map(|c| c.param_names.clone()).unwrap_or_default();
    let mut header = strs(&["chain", "iteration"]);
    header.extend(names.iter().cloned());
    header.extend(strs(&["log_likelihood", "log_prior"]));
    let mut w = Csv::create(path, &header)?;
    for c in chains {
        for d in &c.draws {
            let mut row = vec![(c.chain + 1).to_string(), d.iteration.to_string()];
            row.extend(d.theta.iter().map(|x| fmt_f64(*x)));
            row.push(fmt_f64(d.log_likelihood));
            row.push(fmt_f64(d.log_prior));
            w.row(&row)?;
        }
    }
    w.finish()
}

/// Per-parameter posterior mean, sd and quantiles over all chains.
pub fn write_summary(path: &Path, chains: &[ChainOutput]) -> Result<()> {
    let names = chains.first().map(|c| c.param_names.clone()).unwrap_or_default();
    let mut header = strs(&["parameter", "mean", "sd"]);
    header.extend(QUANTILE_LEVELS.iter().map(|p| level_name(*p)));
    let mut w = Csv::create(path, &header)?;
    for (j, name) in names.iter().enumerate() {
        let xs: Vec<f64> = chains.iter().flat_map(|c| c.column(j)).collect();
        if xs.len() < 2 {
            continue;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let mut row = vec![name.clone(), fmt_f64(mean), fmt_f64(sd)];
        row.extend(crate::diagnostics::quantiles(&xs, &QUANTILE_LEVELS).into_iter().map(fmt_f64));
        w.row(&row)?;
    }
    w.finish()
}

pub fn write_rhat(path: &Path, rows: &[ParameterDiagnostics]) -> Result<()> {
    let mut w = Csv::create(path, &strs(&["parameter", "rhat", "upper_ci"]))?;
    for r in rows {
        w.row(&[r.parameter.clone(), fmt_f64(r.rhat), fmt_f64(r.upper_ci)])?;
    }
    w.finish()
}

pub fn write_trajectories(path: &Path, rows: &[TrajectoryQuantiles], data: &Dataset) -> Result<()> {
    let mut header = strs(&["field", "year", "mean"]);
    header.extend(QUANTILE_LEVELS.iter().map(|p| level_name(*p)));
    let mut w = Csv::create(path, &header)?;
    for r in rows {
        let mut row = vec![r.label.clone(), data.year(r.step).to_string(), fmt_f64(r.mean)];
        row.extend(r.q.iter().map(|x| fmt_f64(*x)));
        w.row(&row)?;
    }
    w.finish()
}

/// One row per chain plus the pooled estimate.
pub fn write_waic(path: &Path, report: &WaicReport) -> Result<()> {
    let mut w = Csv::create(path, &strs(&["chain", "lppd", "p_waic", "waic"]))?;
    let rows = report.per_chain.iter().enumerate().map(|(i, r)| ((i + 1).to_string(), r));
    for (label, r) in rows.chain(std::iter::once(("pooled".to_string(), &report.pooled))) {
        w.row(&[label, fmt_f64(r.lppd), fmt_f64(r.p_waic), fmt_f64(r.waic)])?;
    }
    w.finish()
}

/// ELPD per chain, their mean and sd, and the pooled estimate.
pub fn write_elpd(path: &Path, r: &ElpdResult) -> Result<()> {
    let mut w = Csv::create(path, &strs(&["chain", "elpd"]))?;
    for (i, e) in r.per_chain_total.iter().enumerate() {
        w.row(&[(i + 1).to_string(), fmt_f64(*e)])?;
    }
    w.row(&["mean".into(), fmt_f64(r.chain_mean)])?;
    w.row(&["sd".into(), fmt_f64(r.chain_sd)])?;
    w.row(&["pooled".into(), fmt_f64(r.total)])?;
    w.finish()
}

pub fn write_elpd_steps(path: &Path, r: &ElpdResult, data: &Dataset) -> Result<()> {
    let chains = r.per_chain_total.len();
    let mut header = strs(&["year"]);
    header.extend((1..=chains).map(|c| format!("chain_{c}")));
    header.extend(strs(&["pooled", "max_rhat", "converged", "failed_evaluations"]));
    let mut w = Csv::create(path, &header)?;
    for s in &r.steps {
        let mut row = vec![data.year(s.step).to_string()];
        row.extend(s.per_chain.iter().map(|x| fmt_f64(*x)));
        row.push(fmt_f64(s.pooled));
        row.push(fmt_f64(s.max_rhat));
        row.push(s.converged.to_string());
        row.push(s.failed_evaluations.to_string());
        w.row(&row)?;
    }
    w.finish()
}

/// Posterior change in TOC between the first and last year of each field.
pub fn write_soc_change(path: &Path, chains: &[ChainOutput], data: &Dataset) -> Result<()> {
    let mut w = Csv::create(path, &strs(&["field", "from", "to", "mean", "sd", "q2.5", "q97.5"]))?;
    let last = data.n_years() - 1;
    for (f, name) in data.fields().iter().enumerate() {
        let c = crate::diagnostics::soc_change(chains, f, 0, last)?;
        w.row(&[
            name.clone(),
            data.year(0).to_string(),
            data.year(last).to_string(),
            fmt_f64(c.mean),
            fmt_f64(c.sd),
            fmt_f64(c.lower),
            fmt_f64(c.upper),
        ])?;
    }
    w.finish()
}

pub fn write_pairs(path: &Path, header: [&str; 2], rows: &[(String, f64)]) -> Result<()> {
    let mut w = Csv::create(path, &strs(&header))?;
    for (k, v) in rows {
        w.row(&[k.clone(), fmt_f64(*v)])?;
    }
    w.finish()
}
