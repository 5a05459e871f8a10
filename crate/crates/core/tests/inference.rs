use qaft::inference::{
    acceleration_factor, af_surface, onset_grid, p_grid, parameter_draws, standardized_af, standardized_af_draws,
    standardized_survivor_curve, surface_group, Contrast, Intervention, Pattern,
};
use qaft::model::{ModelSpec, ParameterVector, PriorSpec};
use qaft::sampler::run_chains;
use qaft::simulate::{simulate_dataset, CensoringSpec, CovariateGen, SimConfig};
use qaft::{BaselineSpec, Centering, EffectSpec, Posterior, SamplerConfig, SubjectRecord};

fn set(c: usize, v: f64) -> Intervention {
    Intervention::Set { covariate: c, value: v }
}

#[test]
fn constant_af_ignores_quantile_and_baseline() {
    let grid = p_grid(0.01);
    let mut values = Vec::new();
    for base in [BaselineSpec::weibull(), BaselineSpec::log_normal(), BaselineSpec::tbp(Centering::LogNormal, 4).unwrap()] {
        let m = ModelSpec::constant(base, vec!["x".into(), "z".into()]);
        let psi = ParameterVector {
            beta: vec![-0.8, 0.3],
            alpha: vec![],
            mu: 0.4,
            sigma: 0.9,
            w: if base.is_tbp() { vec![0.1, 0.2, 0.3, 0.4] } else { vec![] },
            theta: 1.0,
        };
        for &p in &grid {
            values.push(acceleration_factor(&m, &psi, p, &Pattern::fixed(vec![1.0, 2.0]), &Pattern::fixed(vec![0.0, 2.0])).unwrap());
        }
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    assert!(hi - lo < 1e-10);
    assert!((lo - (-0.8f64).exp()).abs() < 1e-12);
}

#[test]
fn surface_is_one_before_onset() {
    let m = ModelSpec::constant(BaselineSpec::weibull(), vec![]).with_time_varying("onset");
    let psi = ParameterVector { beta: vec![0.6], alpha: vec![], mu: 1.0, sigma: 1.0, w: vec![], theta: 1.0 };
    let data: Vec<SubjectRecord> = (1..=10).map(|i| SubjectRecord::exact(i as f64, vec![])).collect();
    let grid = p_grid(0.02);
    let onsets = [1.0, 3.0, 6.0];
    let surface = af_surface(&m, std::slice::from_ref(&psi), &data, &onsets, &grid).unwrap();
    for &g in &onsets {
        for row in surface.group(&surface_group(g)) {
            // reference quantile e^{mu} (-ln p) against the onset time
            let q = 1.0f64.exp() * -row.abscissa.ln();
            if q < g {
                assert_eq!(row.mean, 1.0);
            } else {
                let share = g / q;
                assert!((row.mean - (share + 0.6f64.exp() * (1.0 - share))).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn standardized_survivor_curve_is_monotone_and_flags_extrapolation() {
    let m = ModelSpec::constant(BaselineSpec::log_normal(), vec!["x".into(), "z".into()])
        .with_flexible("x", EffectSpec::piecewise(vec![0.0, 1.0]).unwrap());
    let psi = ParameterVector { beta: vec![0.3, -0.4], alpha: vec![0.5], mu: 0.5, sigma: 0.8, w: vec![], theta: 1.0 };
    let data: Vec<SubjectRecord> =
        (0..20).map(|i| SubjectRecord::right_censored(0.5 + 0.2 * i as f64, vec![(i % 2) as f64, 0.1 * i as f64])).collect();
    let t: Vec<f64> = (0..60).map(|i| 0.1 * i as f64).collect();
    let curve = standardized_survivor_curve(&m, &[psi], &data, &set(0, 1.0), &t, "x=1").unwrap();
    let mut prev = 1.0;
    for r in &curve.rows {
        assert!(r.mean <= prev && (0.0..=1.0).contains(&r.mean));
        prev = r.mean;
        assert_eq!(r.extrapolated, r.abscissa > 4.3 + 1e-9);
    }
}

#[test]
fn standardized_af_recovers_simulated_quantile_varying_effect() {
    let model = ModelSpec::constant(BaselineSpec::weibull(), vec!["x".into(), "z".into()])
        .with_flexible("x", EffectSpec::piecewise(vec![0.0, 2.0]).unwrap());
    let truth = ParameterVector { beta: vec![0.5, -0.3], alpha: vec![-1.0], mu: 1.0, sigma: 1.2, w: vec![], theta: 1.0 };
    let sim = SimConfig {
        n: 400,
        seed: 21,
        model: model.clone(),
        truth: truth.clone(),
        covariates: vec![CovariateGen::Bernoulli { p: 0.5 }, CovariateGen::Normal { mean: 0.0, sd: 1.0 }],
        switch: None,
        censoring: CensoringSpec { administrative: Some(20.0), rate: Some(0.05), visit_interval: None },
        truncation: None,
    };
    let data = simulate_dataset(&sim).unwrap();
    let post = Posterior::new(model.clone(), data.clone(), PriorSpec::default()).unwrap();
    let cfg = SamplerConfig { chains: 4, warmup_iters: 500, sampling_iters: 500, seed: 5, ..Default::default() };
    let draws = parameter_draws(&model, &run_chains(&post, &cfg).unwrap()).unwrap();
    let contrast = Contrast { exposed: set(0, 1.0), reference: set(0, 0.0) };
    let p = [0.25, 0.5, 0.75];
    let fitted = standardized_af(&model, &draws, &data, &contrast, &p, "af").unwrap();
    let per_draw = standardized_af_draws(&model, &draws, &data, &contrast, &p).unwrap();
    let true_curve = standardized_af(&model, &[truth], &data, &contrast, &p, "af").unwrap();
    for (j, (f, t)) in fitted.rows.iter().zip(&true_curve.rows).enumerate() {
        let sd = (per_draw.iter().map(|d| (d[j] - f.mean).powi(2)).sum::<f64>() / (per_draw.len() - 1) as f64).sqrt();
        assert!((f.mean - t.mean).abs() < 3.0 * sd, "p={}: fitted {} truth {} sd {sd}", p[j], f.mean, t.mean);
        assert!(f.lo95 <= f.median && f.median <= f.hi95);
    }
}

#[test]
fn onset_grid_spans_follow_up() {
    let data: Vec<SubjectRecord> =
        vec![SubjectRecord::exact(2.0, vec![]), SubjectRecord::interval(1.0, 8.0, vec![]), SubjectRecord::right_censored(5.0, vec![])];
    let g = onset_grid(&data, 40);
    assert_eq!(g.len(), 40);
    assert_eq!(g[39], 8.0);
    assert!((g[0] - 0.2).abs() < 1e-15);
}

#[test]
fn errors_are_reported() {
    let m = ModelSpec::constant(BaselineSpec::weibull(), vec!["x".into()]);
    let psi = ParameterVector { beta: vec![0.1], alpha: vec![], mu: 0.0, sigma: 1.0, w: vec![], theta: 1.0 };
    let data = vec![SubjectRecord::exact(1.0, vec![0.0])];
    let c = Contrast { exposed: set(0, 1.0), reference: set(0, 0.0) };
    assert!(standardized_af(&m, std::slice::from_ref(&psi), &data, &c, &[1.2], "af").is_err());
    assert!(standardized_af(&m, &[], &data, &c, &[0.5], "af").is_err());
    assert!(af_surface(&m, std::slice::from_ref(&psi), &data, &[1.0], &[0.5]).is_err());
    assert!(Intervention::set(&m, "nope", 1.0).is_err());
    let onset = Contrast { exposed: Intervention::Onset(1.0), reference: Intervention::Onset(f64::INFINITY) };
    assert!(standardized_af(&m, &[psi], &data, &onset, &[0.5], "af").is_err());
}
