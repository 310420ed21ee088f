use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use soc_core::domain::{CarbonPools, Channel, Dataset, ModelVariant, ParamKey, ParameterVector, RandomStream};
use soc_core::linalg::log_mean_exp;
use soc_core::model::LikelihoodModel;
use soc_core::soc::*;

fn tarlee_model(variant: ModelVariant, years: usize, options: SocOptions) -> SocModel {
    let data = Dataset::new(vec!["1".into(), "2".into(), "3".into()], presets::tarlee()).unwrap();
    let data = data.truncated(years - 1);
    SocModel::new(variant, Site::Tarlee, data, options).unwrap()
}

/// A plausible parameter set with modest process noise.
fn truth(model: &SocModel) -> ParameterVector {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut pv = model.parameter_vector(&model.sample_prior(&mut rng));
    let set = |pv: &mut ParameterVector, k, v| pv.set(k, v);
    for f in 0..model.data().n_fields() {
        set(&mut pv, ParamKey::InitialStock(f), 40.0);
    }
    set(&mut pv, ParamKey::Iom, 4.0);
    for (k, v) in [
        (ParamKey::DecayC, 0.066),
        (ParamKey::DecayB, 0.66),
        (ParamKey::PiCB, 0.3),
        (ParamKey::PiBB, 0.2),
        (ParamKey::PiBC, 0.3),
        (ParamKey::Sigma2EtaC, 0.002),
        (ParamKey::Sigma2EtaB, 0.01),
    ] {
        if model.priors().get(k).is_some() {
            set(&mut pv, k, v);
        }
    }
    pv
}

fn synthetic(model: &SocModel, plan: ObservationPlan, seed: u64) -> (SocModel, Synthetic) {
    let syn = generate_synthetic(model, &truth(model), &plan, seed).unwrap();
    (model.with_data(syn.data.clone()).unwrap(), syn)
}

/// Mean and covariance of the stacked plant path given its observations,
/// assembled directly from the joint Gaussian.
fn joint_conditional(model: &soc_core::kalman::LinearGaussianModel, obs: &[Vec<Option<f64>>]) -> (DVector<f64>, DMatrix<f64>) {
    let d = model.state_dim();
    let t_len = obs.len();
    let n = d * t_len;
    let a = &model.transition;
    let mut mean = DVector::zeros(n);
    let mut cov = DMatrix::zeros(n, n);
    let mut m = model.initial_state.clone();
    let mut p = model.initial_cov.clone();
    for t in 0..t_len {
        m = a * &m + model.drift(t);
        p = a * &p * a.transpose() + &model.process_cov;
        mean.rows_mut(t * d, d).copy_from(&m);
        cov.view_mut((t * d, t * d), (d, d)).copy_from(&p);
        let mut prop = a.clone();
        for s in (t + 1)..t_len {
            let c = &prop * &p;
            cov.view_mut((s * d, t * d), (d, d)).copy_from(&c);
            cov.view_mut((t * d, s * d), (d, d)).copy_from(&c.transpose());
            prop = a * prop;
        }
    }
    let idx: Vec<usize> = (0..t_len).flat_map(|t| (0..d).filter(move |&i| obs[t][i].is_some()).map(move |i| t * d + i)).collect();
    let y = DVector::from_iterator(idx.len(), idx.iter().map(|&k| obs[k / d][k % d].unwrap()));
    let mut syy = cov.select_rows(idx.iter()).select_columns(idx.iter());
    for (j, &k) in idx.iter().enumerate() {
        syy[(j, j)] += model.obs_cov[(k % d, k % d)];
    }
    let sxy = cov.select_columns(idx.iter());
    let inv = syy.try_inverse().unwrap();
    let my = DVector::from_iterator(idx.len(), idx.iter().map(|&k| mean[k]));
    let cm = &mean + &sxy * &inv * (y - my);
    let cc = &cov - &sxy * &inv * sxy.transpose();
    (cm, cc)
}

#[test]
fn plant_sampler_draws_the_smoothing_law() {
    let model = tarlee_model(ModelVariant::ThreePoolBioK, 7, SocOptions::default());
    let (model, syn) = synthetic(&model, ObservationPlan::default(), 5);
    let layout = model.layout();
    let lgm = layout.linear_model(&syn.truth, 7).unwrap();
    let (mut obs, _) = layout.observations(model.data(), 2);
    obs[3] = vec![None; 3];
    let sampler = PlantSampler::conditional(&lgm, &obs).unwrap();
    let (cm, cc) = joint_conditional(&lgm, &obs);

    let d = layout.dim();
    let n = d * obs.len();
    let draws = 40_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sum = DVector::<f64>::zeros(n);
    let mut sq = DMatrix::<f64>::zeros(n, n);
    for _ in 0..draws {
        let mut path = DVector::zeros(n);
        let mut prev = [0.0; 4];
        for t in 0..obs.len() {
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let x = sampler.sample(t, &prev, &z);
            path.rows_mut(t * d, d).copy_from_slice(&x[..d]);
            prev = x;
        }
        sum += &path;
        sq += &path * path.transpose();
    }
    let mean = sum / draws as f64;
    let cov = sq / draws as f64 - &mean * mean.transpose();
    for k in 0..n {
        let se = (cc[(k, k)] / draws as f64).sqrt();
        assert!((mean[k] - cm[k]).abs() < 4.5 * se + 1e-12, "mean {k}: {} vs {}", mean[k], cm[k]);
        for j in 0..n {
            let scale = (cc[(k, k)] * cc[(j, j)]).sqrt();
            assert!((cov[(k, j)] - cc[(k, j)]).abs() < 0.05 * scale + 1e-12, "cov {k},{j}: {} vs {}", cov[(k, j)], cc[(k, j)]);
        }
    }
}

#[test]
fn rao_blackwellised_and_plain_filters_agree() {
    let years = 6;
    let rb = tarlee_model(ModelVariant::ThreePoolBioK, years, SocOptions { particles: 400, ..Default::default() });
    let (rb, syn) = synthetic(&rb, ObservationPlan::default(), 9);
    let plain = SocModel::new(
        ModelVariant::ThreePoolBioK,
        Site::Tarlee,
        rb.data().clone(),
        SocOptions { particles: 4000, rao_blackwellise: false, ..Default::default() },
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut run = |m: &SocModel, reps: usize| -> (f64, f64) {
        let lls: Vec<f64> = (0..reps)
            .map(|_| {
                let s = RandomStream::sample(m.stream_layout(), &mut rng);
                m.estimate(&syn.theta, &s, false).unwrap().log_likelihood
            })
            .collect();
        let mx = lls.iter().cloned().fold(f64::MIN, f64::max);
        let w: Vec<f64> = lls.iter().map(|l| (l - mx).exp()).collect();
        let mw = w.iter().sum::<f64>() / reps as f64;
        let sd = (w.iter().map(|x| (x - mw).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        (log_mean_exp(&lls), sd / mw / (reps as f64).sqrt())
    };
    let (a, sa) = run(&rb, 200);
    let (b, sb) = run(&plain, 60);
    assert!((a - b).abs() < 4.0 * (sa * sa + sb * sb).sqrt() + 0.05, "{a} ({sa}) vs {b} ({sb})");
    assert!(sa < sb || sb < 0.05);
}

#[test]
fn predictive_terms_telescope_without_plant_smoothing() {
    let opts = SocOptions { particles: 50, rao_blackwellise: false, ..Default::default() };
    let model = tarlee_model(ModelVariant::FivePoolBioK, 8, opts);
    let mut m5 = model.clone();
    let pv = {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pv = model.parameter_vector(&model.sample_prior(&mut rng));
        for k in [ParamKey::Sigma2EtaD, ParamKey::Sigma2EtaR, ParamKey::Sigma2EtaH, ParamKey::Sigma2EtaB] {
            pv.set(k, 0.01);
        }
        pv
    };
    let syn = generate_synthetic(&m5, &pv, &ObservationPlan::default(), 4).unwrap();
    m5 = m5.with_data(syn.data).unwrap();
    let stream = RandomStream::sample(m5.stream_layout(), &mut ChaCha8Rng::seed_from_u64(8));
    let full = m5.estimate(&syn.theta, &stream, false).unwrap();
    let mut sum = 0.0;
    for s in 0..m5.n_steps() {
        let lp = m5.log_predictive(&syn.theta, s, &stream).unwrap();
        assert!((lp - full.increments[s]).abs() < 1e-8, "step {s}: {lp} vs {}", full.increments[s]);
        sum += lp;
    }
    assert!((sum - full.log_likelihood).abs() < 1e-7);
}

#[test]
fn noiseless_synthetic_data_is_the_latent_path() {
    let model = tarlee_model(ModelVariant::ThreePoolRegular, 20, SocOptions::default());
    let plan = ObservationPlan { noise: false, carbon_fraction: 0.5, ..Default::default() };
    let a = generate_synthetic(&model, &truth(&model), &plan, 7).unwrap();
    let b = generate_synthetic(&model, &truth(&model), &plan, 7).unwrap();
    assert_eq!(a.data, b.data);
    let mut seen = 0;
    for f in 0..3 {
        assert!(a.data.get(f, 0, Channel::Toc).is_some());
        assert_eq!(a.data.get(f, 0, Channel::Iom), Some(4.0));
        for t in 0..20 {
            if let Some(y) = a.data.get(f, t, Channel::Toc) {
                assert!((y / a.latent_toc[f][t] - 1.0).abs() < 1e-12);
                seen += 1;
            }
        }
    }
    assert!(seen > 3 && seen < 60, "{seen}");
    let full = generate_synthetic(&model, &truth(&model), &ObservationPlan::default(), 7).unwrap();
    assert!((0..20).all(|t| full.data.get(0, t, Channel::Toc).is_some()));
}

#[test]
fn infeasible_truth_is_rejected() {
    let model = tarlee_model(ModelVariant::ThreePoolBioK, 5, SocOptions::default());
    let pv = truth(&model).with(ParamKey::PiBB, 0.9).with(ParamKey::PiBC, 0.5);
    assert!(generate_synthetic(&model, &pv, &ObservationPlan::default(), 1).is_err());
    assert_eq!(model.log_prior(&model.theta_of(&pv)), f64::NEG_INFINITY);
}

#[test]
fn unknown_crop_in_schedule_is_a_config_error() {
    let data = Dataset::new(vec!["1".into(), "2".into(), "3".into()], presets::brigalow()).unwrap();
    let err = SocModel::new(ModelVariant::ThreePoolBioK, Site::Tarlee, data, SocOptions::default()).unwrap_err();
    assert!(matches!(err, soc_core::Error::Config(_)), "{err}");
}

fn feasible_params(variant: ModelVariant) -> impl Strategy<Value = CarbonParams> {
    (proptest::collection::vec(0.0f64..1.0, 12), proptest::collection::vec(0.001f64..3.0, 5)).prop_map(
        move |(u, k)| {
            let mut q = CarbonParams { k_c: k[0], k_d: k[1], k_r: k[2], k_h: k[3], k_b: k[4], p_d: u[0], ..Default::default() };
            if variant.is_five_pool() {
                q.pi_dh = u[1];
                q.pi_db = u[2] * (1.0 - q.pi_dh);
                q.pi_rh = u[3];
                q.pi_rb = u[4] * (1.0 - q.pi_rh);
                q.pi_hh = u[5];
                q.pi_hb = u[6] * (1.0 - q.pi_hh);
                q.pi_bh = u[7];
                q.pi_bb = u[8] * (1.0 - q.pi_bh);
            } else {
                q.pi_cb = u[1];
                q.pi_bc = u[2];
                q.pi_bb = u[3] * (1.0 - q.pi_bc);
            }
            q
        },
    )
}

fn pools() -> impl Strategy<Value = (CarbonPools, f64)> {
    (0.0f64..50.0, 0.0f64..5.0, 0.0f64..30.0, 0.0f64..40.0, 0.0f64..1.0)
        .prop_map(|(a, d, r, h, b)| (CarbonPools { amalgam: a, dpm: d, rpm: r, hum: h, bio: 0.0, iom: 3.0 }, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn respiration_closes_the_carbon_budget(
        (variant, q) in (0usize..4).prop_flat_map(|v| (Just(ModelVariant::ALL[v]), feasible_params(ModelVariant::ALL[v]))),
        (prev, share) in pools(),
        input in 0.0f64..8.0,
        bump in 0.0f64..3.0,
    ) {
        prop_assert!(q.is_feasible(variant));
        let mut prev = if variant.is_five_pool() {
            CarbonPools { amalgam: 0.0, ..prev }
        } else {
            CarbonPools { dpm: 0.0, rpm: 0.0, hum: 0.0, ..prev }
        };
        prev.bio = (1.0 + bump) * 0.05 * share * prev.decomposable_total();
        let opts = StepOptions::default();
        let s = carbon_step(variant, &q, &prev, input, &opts).unwrap();
        let before = prev.decomposable_total() + input;
        let after = s.pools.decomposable_total() + s.respired;
        prop_assert!(s.respired >= -1e-12 * before, "{}", s.respired);
        prop_assert!((before - after).abs() <= 1e-10 * before.max(1.0), "{before} vs {after}");
        prop_assert_eq!(s.inflow.accepted + s.inflow.overflow, s.u);
    }
}
