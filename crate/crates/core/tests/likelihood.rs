mod common;

use qaft::baseline::BaselineSpec;
use qaft::covproc::EffectSpec;
use qaft::likelihood::{log_prior, loglik_subject, loglik_total, Posterior, SubjectRecord};
use qaft::model::{ModelSpec, ParameterVector, PriorSpec};

fn fd_check(post: &Posterior, z: &[f64]) -> f64 {
    let mut g = vec![0.0; z.len()];
    post.try_value_and_grad(z, &mut g).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..z.len() {
        let h = 1e-5 * z[i].abs().max(1.0);
        let mut up = z.to_vec();
        let mut dn = z.to_vec();
        up[i] += h;
        dn[i] -= h;
        let fd = (post.log_density(&up) - post.log_density(&dn)) / (2.0 * h);
        worst = worst.max((g[i] - fd).abs() / fd.abs().max(1.0));
    }
    worst
}

#[test]
fn gradient_matches_finite_differences_across_models() {
    for case in 0..24 {
        let model = common::model_for(case);
        let data = common::random_data(&model, 25, case as u64);
        let z = common::random_point(&model, case as u64);
        let post = Posterior::new(model.clone(), data, PriorSpec::default()).unwrap();
        let err = fd_check(&post, &z);
        assert!(err < 1e-5, "case {case} ({:?}, {:?}, tv={}): {err}", model.baseline, model.effect.kind(), model.has_time_varying());
    }
}

#[test]
fn value_matches_loglik_prior_and_jacobian() {
    // σ only: d = 0, J = 0
    let model = ModelSpec::constant(BaselineSpec::weibull(), vec![]);
    let data = vec![SubjectRecord::exact(1.3, vec![]), SubjectRecord::right_censored(0.7, vec![])];
    let priors = PriorSpec::default();
    let post = Posterior::new(model.clone(), data.clone(), priors).unwrap();
    let z = [0.2, -0.4];
    let psi = model.constrain(&z).unwrap();
    let want = loglik_total(&model, &psi, &data).unwrap() + log_prior(&model, &psi, &priors).unwrap() + psi.sigma.ln();
    assert!((post.log_density(&z) - want).abs() < 1e-13);
}

#[test]
fn right_censored_reduction_and_memorylessness() {
    let model = ModelSpec::constant(BaselineSpec::weibull(), vec!["x".into()]);
    let psi = ParameterVector { beta: vec![0.4], alpha: vec![], mu: 0.7, sigma: 1.0, w: vec![], theta: 1.0 };
    let base = model.baseline_of(&psi).unwrap();
    let scale = (-0.4f64).exp();
    for &t in &[0.3, 1.0, 4.5] {
        let ev = loglik_subject(&model, &psi, &SubjectRecord::exact(t, vec![1.0])).unwrap();
        let want = base.log_density(t * scale).unwrap() + scale.ln();
        assert!((ev - want).abs() < 1e-12);
        let rc = loglik_subject(&model, &psi, &SubjectRecord::right_censored(t, vec![1.0])).unwrap();
        assert!((rc - base.log_survivor(t * scale).unwrap()).abs() < 1e-12);
        // exponential baseline: truncation at l equals shifting the origin
        let l = 0.8;
        let shifted = loglik_subject(&model, &psi, &SubjectRecord::exact(t + l, vec![1.0]).truncated(l)).unwrap();
        assert!((shifted - ev).abs() < 1e-10);
    }
}

#[test]
fn interval_limit_approaches_density() {
    let model = ModelSpec::constant(BaselineSpec::log_normal(), vec!["x".into()])
        .with_flexible("x", EffectSpec::piecewise(vec![0.0, 1.0]).unwrap());
    let psi = ParameterVector { beta: vec![0.3], alpha: vec![-0.5], mu: 0.2, sigma: 0.8, w: vec![], theta: 1.0 };
    let y = 1.7;
    let exact = loglik_subject(&model, &psi, &SubjectRecord::exact(y, vec![1.0])).unwrap();
    let mut last = f64::INFINITY;
    for gap in [1e-4, 1e-5, 1e-6, 1e-7] {
        let iv = loglik_subject(&model, &psi, &SubjectRecord::interval(y, y + gap, vec![1.0])).unwrap() - f64::ln(gap);
        let err = ((iv - exact) / exact).abs();
        assert!(err <= last * 1.01 || err < 1e-6);
        last = err;
    }
    assert!(last < 1e-3);
}

#[test]
fn total_is_permutation_invariant() {
    let model = common::model_for(5);
    let data = common::random_data(&model, 25, 11);
    let z = common::random_point(&model, 11);
    let psi = model.constrain(&z).unwrap();
    let a = loglik_total(&model, &psi, &data).unwrap();
    let mut rev = data.clone();
    rev.reverse();
    let b = loglik_total(&model, &psi, &rev).unwrap();
    assert!((a - b).abs() < 1e-10 * a.abs());
}

#[test]
fn unconstrained_round_trip_leaves_density_unchanged() {
    let model = common::model_for(2);
    let data = common::random_data(&model, 25, 3);
    let post = Posterior::new(model.clone(), data, PriorSpec::default()).unwrap();
    let z = common::random_point(&model, 3);
    let again = model.unconstrain(&model.constrain(&z).unwrap()).unwrap();
    assert!((post.log_density(&z) - post.log_density(&again)).abs() < 1e-10);
}

#[test]
fn flat_prior_has_zero_beta_gradient() {
    let model = ModelSpec::constant(BaselineSpec::weibull(), vec!["x".into()]);
    let post = Posterior::new(model, vec![], PriorSpec::default()).unwrap();
    let mut g = vec![0.0; 3];
    post.try_value_and_grad(&[0.7, 0.1, 0.2], &mut g).unwrap();
    assert_eq!(g[0], 0.0);
    assert_eq!(g[1], 0.0);
}
