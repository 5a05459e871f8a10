//! Simulated posteriors shared by the benchmarks.

use qaft::covproc::EffectSpec;
use qaft::simulate::{simulate_dataset, CensoringSpec, CovariateGen, SwitchGen, TimeDist};
use qaft::{BaselineSpec, Centering, ModelSpec, ParameterVector, Posterior, PriorSpec, SimConfig};

pub struct Fixture {
    pub name: &'static str,
    pub posterior: Posterior,
    pub truth: ParameterVector,
    pub z: Vec<f64>,
}

fn build(name: &'static str, model: ModelSpec, truth: ParameterVector, n: usize, switch: Option<SwitchGen>) -> Fixture {
    let covariates = vec![CovariateGen::Bernoulli { p: 0.5 }, CovariateGen::Normal { mean: 0.0, sd: 1.0 }];
    let cfg = SimConfig {
        n,
        seed: 42,
        model: model.clone(),
        truth: truth.clone(),
        covariates,
        switch,
        censoring: CensoringSpec { administrative: Some(20.0), rate: Some(0.05), visit_interval: None },
        truncation: Some(TimeDist::Uniform { lo: 0.0, hi: 1.0 }),
    };
    let data = simulate_dataset(&cfg).expect("fixture simulates");
    let z = model.unconstrain(&truth).expect("truth is valid");
    let posterior = Posterior::new(model, data, PriorSpec::default()).expect("fixture data are valid");
    Fixture { name, posterior, truth, z }
}

fn psi(beta: Vec<f64>, alpha: Vec<f64>, w: Vec<f64>) -> ParameterVector {
    ParameterVector { beta, alpha, mu: 1.0, sigma: 1.0, w, theta: 1.0 }
}

/// Weibull with constant effects.
pub fn weibull_constant(n: usize) -> Fixture {
    let model = ModelSpec::constant(BaselineSpec::weibull(), vec!["x1".into(), "x2".into()]);
    build("weibull_constant", model, psi(vec![0.5, -0.3], vec![], vec![]), n, None)
}

/// Bernstein-polynomial baseline with a piecewise effect of `x1`.
pub fn tbp_piecewise(n: usize) -> Fixture {
    let effect = EffectSpec::piecewise(vec![0.0, 1.0, 3.0]).expect("valid knots");
    let model = ModelSpec::constant(BaselineSpec::tbp(Centering::Weibull, 5).expect("valid K"), vec!["x1".into(), "x2".into()])
        .with_flexible("x1", effect);
    build("tbp_piecewise", model, psi(vec![0.5, -0.3], vec![0.2, -0.2], vec![0.2; 5]), n, None)
}

/// Log-normal with a binary switch and a spline effect of time since onset.
pub fn lognormal_switch_spline(n: usize) -> Fixture {
    let effect = EffectSpec::spline(vec![-2.0, 0.0, 1.0, 2.5]).expect("valid knots");
    let model = ModelSpec::constant(BaselineSpec::log_normal(), vec!["x1".into(), "x2".into()])
        .with_time_varying("onset")
        .with_flexible("onset", effect);
    let switch = SwitchGen { prob: 0.5, onset: TimeDist::Uniform { lo: 0.0, hi: 3.0 } };
    build("lognormal_switch_spline", model, psi(vec![0.5, -0.3, 0.4], vec![0.1, 0.0, -0.1], vec![]), n, Some(switch))
}

pub fn all(n: usize) -> Vec<Fixture> {
    vec![weibull_constant(n), tbp_piecewise(n), lognormal_switch_spline(n)]
}
