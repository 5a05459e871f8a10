mod common;

use qaft::likelihood::{loglik_subject, loglik_total};
use qaft::model::PriorSpec;
use qaft::modelcheck::{pointwise_loglik, psis_loo, PointwiseLogLik};
use qaft::sampler::rng::stream;
use qaft::Posterior;
use rand_distr::{Distribution, Normal};

fn ln_norm(x: f64, m: f64, v: f64) -> f64 {
    -0.5 * ((x - m).powi(2) / v + (2.0 * std::f64::consts::PI * v).ln())
}

#[test]
fn conjugate_normal_matches_analytic_loo() {
    // y_i ~ N(μ, 1), μ ~ N(0, 10²)
    let mut rng = stream(1, 0, 0);
    let y: Vec<f64> = (0..20).map(|_| Normal::new(1.5, 1.0).unwrap().sample(&mut rng)).collect();
    let prior_var = 100.0;
    let post = |ys: &[f64]| {
        let prec = 1.0 / prior_var + ys.len() as f64;
        (ys.iter().sum::<f64>() / prec, 1.0 / prec)
    };
    let exact: f64 = (0..y.len())
        .map(|i| {
            let rest: Vec<f64> = y.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
            let (m, v) = post(&rest);
            ln_norm(y[i], m, v + 1.0)
        })
        .sum();
    let (m, v) = post(&y);
    let mu = Normal::new(m, v.sqrt()).unwrap();
    let rows: Vec<Vec<f64>> = (0..4000)
        .map(|_| {
            let draw = mu.sample(&mut rng);
            y.iter().map(|&yi| ln_norm(yi, draw, 1.0)).collect()
        })
        .collect();
    let res = psis_loo(&PointwiseLogLik::from_rows(rows).unwrap()).unwrap();
    assert!((res.elpd - exact).abs() < 2.0 * res.elpd_se, "psis {} exact {exact} se {}", res.elpd, res.elpd_se);
    assert!((res.elpd - exact).abs() < 0.1);
    assert!(res.elpd < res.lpd);
    assert_eq!(res.minus2elpd, -2.0 * res.elpd);
    assert!(res.khat.iter().all(|k| *k < 0.7));
}

#[test]
fn pointwise_matrix_matches_direct_calls() {
    let model = common::model_for(1);
    let data = common::random_data(&model, 12, 3);
    let psis: Vec<_> = (0..3).map(|s| model.constrain(&common::random_point(&model, s)).unwrap()).collect();
    let ll = pointwise_loglik(&model, &psis, &data).unwrap();
    assert_eq!((ll.draws, ll.subjects), (3, 12));
    for (m, psi) in psis.iter().enumerate() {
        for (i, rec) in data.iter().enumerate() {
            assert!((ll.get(m, i) - loglik_subject(&model, psi, rec).unwrap()).abs() < 1e-12);
        }
        let total = loglik_total(&model, psi, &data).unwrap();
        assert!((ll.row(m).iter().sum::<f64>() - total).abs() < 1e-9);
    }
    let mut perm = data.clone();
    perm.reverse();
    let llp = pointwise_loglik(&model, &psis, &perm).unwrap();
    for m in 0..3 {
        for i in 0..12 {
            assert_eq!(llp.get(m, i), ll.get(m, 11 - i));
        }
    }
}

#[test]
fn loo_on_posterior_draws_is_below_in_sample_fit() {
    let model = common::model_for(0);
    let data = common::random_data(&model, 40, 9);
    let post = Posterior::new(model.clone(), data.clone(), PriorSpec::default()).unwrap();
    let cfg = qaft::SamplerConfig { chains: 2, warmup_iters: 300, sampling_iters: 300, seed: 4, ..Default::default() };
    let draws = qaft::sampler::run_chains(&post, &cfg).unwrap();
    let psis = qaft::inference::parameter_draws(&model, &draws).unwrap();
    let res = psis_loo(&pointwise_loglik(&model, &psis, &data).unwrap()).unwrap();
    assert!(res.elpd < res.lpd);
    assert!(res.p_loo > 0.0 && res.p_loo < 20.0, "p_loo {}", res.p_loo);
}
