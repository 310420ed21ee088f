use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use soc_core::domain::RandomStream;
use soc_core::kalman::{kalman_filter, LinearGaussianModel, Observation};
use soc_core::particle::{
    bootstrap_filter, correlated_particle_filter, rbpf_likelihood, FilterOptions, LinearParticleModel,
    ParticleModel,
};

fn scalar_problem() -> (LinearGaussianModel, Vec<Observation>) {
    let model = LinearGaussianModel::scalar(0.8, 1.0, 0.5, 0.4, 0.3);
    let ys = [0.2, -0.4, 0.9, 1.3, 0.1, -0.6, 0.0, 0.7, 1.1, 0.4];
    let obs = ys.iter().enumerate().map(|(t, y)| if t == 3 { vec![None] } else { vec![Some(*y)] }).collect();
    (model, obs)
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

#[test]
fn filters_agree_with_kalman() {
    let (model, obs) = scalar_problem();
    let exact = kalman_filter(&model, &obs).unwrap().log_likelihood;
    let pm = LinearParticleModel::new(&model, &obs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut boot = Vec::new();
    let mut corr = Vec::new();
    for _ in 0..30 {
        boot.push(bootstrap_filter(&pm, 2000, &mut rng, false).unwrap().log_likelihood);
        let stream = RandomStream::sample(pm.layout(2000), &mut rng);
        corr.push(correlated_particle_filter(&pm, &stream, FilterOptions::default()).unwrap().log_likelihood);
    }
    for est in [boot, corr] {
        let (m, sd) = mean_sd(&est);
        let se = sd / (est.len() as f64).sqrt();
        assert!((m - exact).abs() < 4.0 * se + 0.01, "mean {m} exact {exact} se {se}");
    }
}

#[test]
fn fixed_stream_is_bit_identical() {
    let (model, obs) = scalar_problem();
    let pm = LinearParticleModel::new(&model, &obs).unwrap();
    let stream = RandomStream::sample(pm.layout(500), &mut ChaCha8Rng::seed_from_u64(2));
    let opts = FilterOptions { keep_trajectory: true, ..Default::default() };
    let a = correlated_particle_filter(&pm, &stream, opts).unwrap();
    let b = correlated_particle_filter(&pm, &stream, opts).unwrap();
    assert_eq!(a.log_likelihood.to_bits(), b.log_likelihood.to_bits());
    assert_eq!(a.trajectory, b.trajectory);
    assert_eq!(a.trajectory.unwrap().len(), obs.len());
}

#[test]
fn deterministic_dynamics_single_particle() {
    let model = LinearGaussianModel::scalar(0.9, 1.0, 0.0, 0.25, 2.0);
    let obs: Vec<Observation> = vec![vec![Some(1.5)], vec![None], vec![Some(1.4)]];
    let pm = LinearParticleModel::new(&model, &obs).unwrap();
    let stream = RandomStream::sample(pm.layout(1), &mut ChaCha8Rng::seed_from_u64(0));
    let pf = correlated_particle_filter(&pm, &stream, FilterOptions::default()).unwrap();
    let dens = |y: f64, x: f64| -0.5 * ((2.0 * std::f64::consts::PI * 0.25).ln() + (y - x).powi(2) / 0.25);
    let expected = dens(1.5, 1.8) + dens(1.4, 2.0 * 0.9f64.powi(3));
    assert!((pf.log_likelihood - expected).abs() < 1e-12);
    assert_eq!(pf.increments[1], 0.0);
}

#[test]
fn rbpf_degenerate_partitions() {
    let (model, obs) = scalar_problem();
    let pm = LinearParticleModel::new(&model, &obs).unwrap();
    let stream = RandomStream::sample(pm.layout(300), &mut ChaCha8Rng::seed_from_u64(5));
    let kf = kalman_filter(&model, &obs).unwrap();
    let only_kf = rbpf_likelihood::<LinearParticleModel>(Some((&model, &obs)), None, FilterOptions::default()).unwrap();
    assert_eq!(only_kf.log_likelihood, kf.log_likelihood);
    let pf = correlated_particle_filter(&pm, &stream, FilterOptions::default()).unwrap();
    let only_pf = rbpf_likelihood(None, Some((&pm, &stream)), FilterOptions::default()).unwrap();
    assert_eq!(only_pf.log_likelihood, pf.log_likelihood);
    let both = rbpf_likelihood(Some((&model, &obs)), Some((&pm, &stream)), FilterOptions::default()).unwrap();
    assert_eq!(both.log_likelihood, kf.log_likelihood + pf.log_likelihood);
    let inc_sum: f64 = both.increments.iter().sum();
    assert!((inc_sum - both.log_likelihood).abs() < 1e-9);
}

#[test]
fn short_stream_is_a_layout_error() {
    let (model, obs) = scalar_problem();
    let pm = LinearParticleModel::new(&model, &obs).unwrap();
    let mut layout = pm.layout(10);
    layout.steps -= 1;
    let stream = RandomStream::sample(layout, &mut ChaCha8Rng::seed_from_u64(0));
    assert!(matches!(
        correlated_particle_filter(&pm, &stream, FilterOptions::default()),
        Err(soc_core::Error::Layout(_))
    ));
}
