use serde::{Deserialize, Serialize};

use super::{ChainOutput, Draw};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: f64,
    /// Monte Carlo standard error of `mean` from batch means.
    pub se: f64,
    pub sd: f64,
    pub n: usize,
}

/// Batch-means standard error of the mean of one autocorrelated sequence,
/// with batches of `floor(sqrt(n))` draws.
pub fn batch_means_se(xs: &[f64]) -> f64 {
    let per_chain = [xs.to_vec()];
    pooled_batch_se(&per_chain)
}

fn pooled_batch_se(chains: &[Vec<f64>]) -> f64 {
    let mut means = Vec::new();
    for xs in chains {
        let b = ((xs.len() as f64).sqrt().floor() as usize).max(1);
        for batch in xs.chunks_exact(b) {
            means.push(batch.iter().sum::<f64>() / b as f64);
        }
    }
    let k = means.len();
    if k < 2 {
        return f64::NAN;
    }
    let m = means.iter().sum::<f64>() / k as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1) as f64;
    (var / k as f64).sqrt()
}

/// Pooled posterior mean of `g(draw)` over every retained draw of every
/// chain.
pub fn posterior_expectation<G: Fn(&Draw) -> f64>(chains: &[ChainOutput], g: G) -> Result<PosteriorSummary> {
    let values: Vec<Vec<f64>> = chains.iter().map(|c| c.draws.iter().map(&g).collect()).collect();
    let n: usize = values.iter().map(Vec::len).sum();
    if chains.is_empty() || n < 2 {
        return Err(Error::contract("posterior expectation needs at least two retained draws"));
    }
    let all: Vec<f64> = values.iter().flatten().copied().collect();
    let mean = all.iter().sum::<f64>() / n as f64;
    let sd = (all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    Ok(PosteriorSummary { mean, se: pooled_batch_se(&values), sd, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_with(values: &[f64]) -> ChainOutput {
        ChainOutput {
            chain: 0,
            seed: 0,
            param_names: vec!["a".into()],
            draws: values
                .iter()
                .enumerate()
                .map(|(i, v)| Draw {
                    iteration: i,
                    theta: vec![*v],
                    log_likelihood: 0.0,
                    log_prior: 0.0,
                    increments: vec![],
                    trajectory: None,
                })
                .collect(),
            iterations: values.len(),
            burn_in: 0,
            thin: 1,
            accepted: 0,
            accepted_after_burn_in: 0,
            estimator_failures: 0,
            stream_refreshes: 0,
            log_likelihood_trace: vec![],
            proposal_scale: 1.0,
        }
    }

    #[test]
    fn constant_function_has_zero_error() {
        let c = chain_with(&[0.3, 1.2, -0.4, 2.0, 0.0, 0.1, 0.5, 0.9, 1.0]);
        let s = posterior_expectation(&[c], |_| 1.0).unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.se, 0.0);
    }

    #[test]
    fn empty_chains_are_rejected() {
        assert!(posterior_expectation(&[], |d| d.theta[0]).is_err());
        assert!(posterior_expectation(&[chain_with(&[1.0])], |d| d.theta[0]).is_err());
    }

    #[test]
    fn iid_batch_error_matches_classical() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..40_000).map(|_| rng.random::<f64>()).collect();
        let se = batch_means_se(&xs);
        let classical = (1.0f64 / 12.0 / 40_000.0).sqrt();
        assert!((se / classical - 1.0).abs() < 0.2, "{se} vs {classical}");
    }
}
