use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use soc_core::cpm::{posterior_expectation, read_checkpoint, run_chain, run_chains, SamplerConfig};
use soc_core::domain::{RandomStream, StreamLayout};
use soc_core::reference::LocationModel;

fn data(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| 1.5 + rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Closed-form normal-normal posterior.
fn posterior(ys: &[f64], sigma: f64, m0: f64, s0: f64) -> (f64, f64) {
    let prec = 1.0 / (s0 * s0) + ys.len() as f64 / (sigma * sigma);
    let mean = (m0 / (s0 * s0) + ys.iter().sum::<f64>() / (sigma * sigma)) / prec;
    (mean, 1.0 / prec)
}

fn config(iterations: usize, burn_in: usize, thin: usize) -> SamplerConfig {
    SamplerConfig { iterations, burn_in, thin, chains: 2, seed: 9, ..Default::default() }
}

#[test]
fn conjugate_posterior_moments() {
    let ys = data(15, 1);
    let model = LocationModel::iid(ys.clone(), 1.0, 0.0, 5.0);
    let chains = run_chains(&model, &config(22_000, 2_000, 2), None, false).unwrap();
    let (pm, pv) = posterior(&ys, 1.0, 0.0, 5.0);
    let mean = posterior_expectation(&chains, |d| d.theta[0]).unwrap();
    assert!((mean.mean - pm).abs() < 4.0 * mean.se, "{mean:?} vs {pm}");
    let var = posterior_expectation(&chains, |d| (d.theta[0] - pm).powi(2)).unwrap();
    assert!((var.mean - pv).abs() < 4.0 * var.se, "{var:?} vs {pv}");
    for c in &chains {
        assert_eq!(c.draws.len(), 10_000);
        let rate = c.acceptance_rate();
        assert!(rate > 0.05 && rate < 0.5, "{rate}");
    }
}

#[test]
fn particle_likelihood_chain_tracks_exact_posterior() {
    let ys = data(10, 2);
    let exact = LocationModel::iid(ys.clone(), 1.0, 0.0, 5.0);
    let noisy = LocationModel { rho: 0.5, q: 0.0, ..exact.clone() }.with_particles(50);
    let chains = run_chains(&noisy, &config(12_000, 2_000, 5), None, false).unwrap();
    let (pm, _) = posterior(&ys, 1.0, 0.0, 5.0);
    let mean = posterior_expectation(&chains, |d| d.theta[0]).unwrap();
    assert!((mean.mean - pm).abs() < 4.0 * mean.se + 0.02, "{mean:?} vs {pm}");
}

#[test]
fn tau_one_is_rejected() {
    let cfg = SamplerConfig { tau: 1.0, ..config(100, 10, 1) };
    assert!(matches!(cfg.validate(), Err(soc_core::Error::Config(_))));
    let cfg = SamplerConfig { burn_in: 100, ..config(100, 10, 1) };
    assert!(cfg.validate().is_err());
}

#[test]
fn replay_is_deterministic() {
    let model = LocationModel::iid(data(8, 3), 1.0, 0.0, 5.0).with_particles(20);
    let cfg = config(600, 100, 5);
    let a = run_chain(&model, &cfg, 1, None, None).unwrap();
    let b = run_chain(&model, &cfg, 1, None, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let model = LocationModel::iid(data(8, 4), 1.0, 0.0, 5.0).with_particles(10);
    let dir = tempfile::tempdir().unwrap();
    let full = config(800, 200, 4);
    let straight = run_chains(&model, &full, None, false).unwrap();

    let half = SamplerConfig { iterations: 400, ..full.clone() };
    run_chains(&model, &half, Some(dir.path()), false).unwrap();
    let ck = read_checkpoint(&dir.path().join("chain_0.ckpt")).unwrap().unwrap();
    assert_eq!(ck.state.iteration, 400);
    let resumed = run_chains(&model, &full, Some(dir.path()), true).unwrap();
    for (a, b) in straight.iter().zip(&resumed) {
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.log_likelihood_trace, b.log_likelihood_trace);
    }
}

#[test]
fn crank_nicolson_keeps_standard_normal_marginals() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut s = RandomStream::sample(StreamLayout::new(20, 50, 2), &mut rng);
    for _ in 0..200 {
        s = s.crank_nicolson(0.99, &mut rng);
    }
    let mut xs: Vec<f64> = s.u().to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let dist = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
    use statrs::distribution::ContinuousCDF;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = dist.cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // 0.1% critical value of the one-sample KS statistic
    assert!(d < 1.95 / n.sqrt(), "KS distance {d}");
}
