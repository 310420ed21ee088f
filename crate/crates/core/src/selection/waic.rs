use serde::{Deserialize, Serialize};

use crate::cpm::ChainOutput;
use crate::error::{Error, Result};
use crate::linalg::log_mean_exp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaicResult {
    pub lppd: f64,
    /// Effective number of parameters, the summed posterior variances.
    pub p_waic: f64,
    pub waic: f64,
    pub draws: usize,
    pub lppd_terms: Vec<f64>,
    pub variance_terms: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaicReport {
    pub pooled: WaicResult,
    pub per_chain: Vec<WaicResult>,
}

/// WAIC from a draws-by-steps matrix of conditional log-likelihood terms.
pub fn waic_from_increments(increments: &[Vec<f64>]) -> Result<WaicResult> {
    let s = increments.len();
    if s < 2 {
        return Err(Error::contract("WAIC needs at least two draws to estimate the variance penalty"));
    }
    let t_len = increments[0].len();
    if t_len == 0 || increments.iter().any(|row| row.len() != t_len) {
        return Err(Error::contract("every draw must carry the same non-empty per-step decomposition"));
    }
    let mut lppd_terms = Vec::with_capacity(t_len);
    let mut variance_terms = Vec::with_capacity(t_len);
    let mut col = vec![0.0; s];
    for t in 0..t_len {
        for (c, row) in col.iter_mut().zip(increments) {
            *c = row[t];
        }
        lppd_terms.push(log_mean_exp(&col));
        let mean = col.iter().sum::<f64>() / s as f64;
        variance_terms.push(col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (s - 1) as f64);
    }
    let lppd: f64 = lppd_terms.iter().sum();
    let p_waic: f64 = variance_terms.iter().sum();
    Ok(WaicResult { lppd, p_waic, waic: -2.0 * lppd + 2.0 * p_waic, draws: s, lppd_terms, variance_terms })
}

/// WAIC per chain and over all chains pooled.
pub fn waic(chains: &[ChainOutput]) -> Result<WaicReport> {
    let rows = |c: &ChainOutput| c.draws.iter().map(|d| d.increments.clone()).collect::<Vec<_>>();
    let per_chain = chains.iter().map(|c| waic_from_increments(&rows(c))).collect::<Result<Vec<_>>>()?;
    let all: Vec<Vec<f64>> = chains.iter().flat_map(rows).collect();
    Ok(WaicReport { pooled: waic_from_increments(&all)?, per_chain })
}
