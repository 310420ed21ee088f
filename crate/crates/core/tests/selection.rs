use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use soc_core::cpm::{run_chains, SamplerConfig};
use soc_core::reference::LocationModel;
use soc_core::selection::{lfo_cv, waic, waic_from_increments, LfoConfig};

const LN_2PI: f64 = 1.8378770664093453;

fn data(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| 0.7 + rng.sample::<f64, _>(StandardNormal)).collect()
}

fn posterior(ys: &[f64], m0: f64, s0: f64) -> (f64, f64) {
    let prec = 1.0 / (s0 * s0) + ys.len() as f64;
    ((m0 / (s0 * s0) + ys.iter().sum::<f64>()) / prec, 1.0 / prec)
}

fn normal_lpdf(y: f64, m: f64, v: f64) -> f64 {
    -0.5 * (LN_2PI + v.ln() + (y - m).powi(2) / v)
}

/// Closed-form lppd and variance penalty for a normal mean with unit noise.
fn exact_waic(ys: &[f64], m: f64, v: f64) -> (f64, f64) {
    let lppd = ys.iter().map(|y| normal_lpdf(*y, m, 1.0 + v)).sum();
    let p = ys.iter().map(|y| (4.0 * (y - m).powi(2) * v + 2.0 * v * v) / 4.0).sum();
    (lppd, p)
}

#[test]
fn waic_of_exact_posterior_draws() {
    let ys = data(12, 3);
    let (m, v) = posterior(&ys, 0.0, 3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows: Vec<Vec<f64>> = (0..40_000)
        .map(|_| {
            let mu = m + v.sqrt() * rng.sample::<f64, _>(StandardNormal);
            ys.iter().map(|y| normal_lpdf(*y, mu, 1.0)).collect()
        })
        .collect();
    let r = waic_from_increments(&rows).unwrap();
    let (lppd, p) = exact_waic(&ys, m, v);
    assert!((r.lppd - lppd).abs() < 0.01, "{} vs {lppd}", r.lppd);
    assert!((r.p_waic - p).abs() < 0.03 * p, "{} vs {p}", r.p_waic);
    assert_eq!(r.waic, -2.0 * r.lppd + 2.0 * r.p_waic);
}

#[test]
fn waic_from_chains_matches_closed_form() {
    let ys = data(12, 4);
    let model = LocationModel::iid(ys.clone(), 1.0, 0.0, 3.0);
    let cfg = SamplerConfig { iterations: 24_000, burn_in: 4_000, thin: 4, chains: 2, seed: 2, ..Default::default() };
    let chains = run_chains(&model, &cfg, None, false).unwrap();
    let report = waic(&chains).unwrap();
    let (m, v) = posterior(&ys, 0.0, 3.0);
    let (lppd, p) = exact_waic(&ys, m, v);
    assert_eq!(report.per_chain.len(), 2);
    assert!((report.pooled.lppd - lppd).abs() < 0.05, "{} vs {lppd}", report.pooled.lppd);
    assert!((report.pooled.p_waic - p).abs() < 0.2 * p, "{} vs {p}", report.pooled.p_waic);
}

#[test]
fn lfo_matches_posterior_predictive() {
    let ys = data(6, 5);
    let model = LocationModel::iid(ys.clone(), 1.0, 0.0, 3.0);
    let cfg = LfoConfig {
        min_observations: 3,
        sampler: SamplerConfig { iterations: 12_000, burn_in: 2_000, thin: 5, chains: 2, seed: 4, ..Default::default() },
        predictive_draws: 0,
        rhat_threshold: 1.2,
    };
    let r = lfo_cv(&model, &cfg).unwrap();
    assert_eq!(r.steps.len(), 3);
    let mut exact_total = 0.0;
    for s in &r.steps {
        let (m, v) = posterior(&ys[..s.step], 0.0, 3.0);
        let exact = normal_lpdf(ys[s.step], m, 1.0 + v);
        exact_total += exact;
        assert!((s.pooled - exact).abs() < 0.05, "step {}: {} vs {exact}", s.step, s.pooled);
        assert!(s.converged);
    }
    assert!((r.total - exact_total).abs() < 0.1);
    assert_eq!(r.per_chain_total.len(), 2);
}

#[test]
fn lfo_single_term_and_bad_window() {
    let ys = data(4, 6);
    let model = LocationModel::iid(ys, 1.0, 0.0, 3.0);
    let sampler = SamplerConfig { iterations: 2_000, burn_in: 500, thin: 5, chains: 2, seed: 1, ..Default::default() };
    let cfg = LfoConfig { min_observations: 3, sampler: sampler.clone(), ..Default::default() };
    assert_eq!(lfo_cv(&model, &cfg).unwrap().steps.len(), 1);
    let cfg = LfoConfig { min_observations: 4, sampler, ..Default::default() };
    assert!(matches!(lfo_cv(&model, &cfg), Err(soc_core::Error::Config(_))));
}
