#![allow(dead_code)]

use qaft::baseline::{BaselineSpec, Centering};
use qaft::covproc::EffectSpec;
use qaft::likelihood::SubjectRecord;
use qaft::model::ModelSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn baselines() -> Vec<BaselineSpec> {
    vec![
        BaselineSpec::weibull(),
        BaselineSpec::log_normal(),
        BaselineSpec::tbp(Centering::Weibull, 4).unwrap(),
        BaselineSpec::tbp(Centering::LogNormal, 3).unwrap(),
    ]
}

pub fn effects() -> Vec<EffectSpec> {
    vec![
        EffectSpec::constant(),
        EffectSpec::piecewise(vec![0.0, 0.8, 2.0]).unwrap(),
        EffectSpec::spline(vec![-1.5, 0.0, 0.6, 1.6]).unwrap(),
    ]
}

/// A model drawn from the family/effect grid; `case` cycles through the
/// combinations and through time-varying variants.
pub fn model_for(case: usize) -> ModelSpec {
    let bases = baselines();
    let effs = effects();
    let base = bases[case % bases.len()];
    let eff = effs[(case / bases.len()) % effs.len()].clone();
    let tv = (case / (bases.len() * effs.len())) % 2 == 1 || case % 5 == 4;
    let mut m = ModelSpec::constant(base, vec!["x1".into(), "x2".into()]);
    if tv {
        m = m.with_time_varying("onset");
        if !eff.is_constant() {
            m = m.with_flexible("onset", eff);
        }
    } else if !eff.is_constant() {
        m = m.with_flexible("x1", eff);
    }
    m
}

/// Mixed exact, right-, interval- and left-censored records with some truncation.
pub fn random_data(model: &ModelSpec, n: usize, seed: u64) -> Vec<SubjectRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let x = vec![f64::from(rng.random_bool(0.5) as u8), rng.random_range(-1.0..1.0)];
            let t: f64 = rng.random_range(0.1..5.0);
            let mut rec = match i % 4 {
                0 => SubjectRecord::exact(t, x),
                1 => SubjectRecord::right_censored(t, x),
                2 => SubjectRecord::interval(t, t + rng.random_range(0.05..2.0), x),
                _ => SubjectRecord::interval(0.0, t, x),
            };
            if i % 3 == 0 && rec.y_l > 0.0 {
                let l = rec.y_l * rng.random_range(0.0..0.9);
                rec = rec.truncated(l);
            }
            if model.has_time_varying() && rng.random_bool(0.6) {
                rec = rec.switching_at(rng.random_range(0.05..4.0));
            }
            rec
        })
        .collect()
}

/// A moderate random point in unconstrained space.
pub fn random_point(model: &ModelSpec, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let l = model.layout();
    let mut z = vec![0.0; l.dim];
    for v in z[..l.n_beta].iter_mut() {
        *v = rng.random_range(-0.5..0.5);
    }
    for v in z[l.alpha..l.alpha + l.n_alpha].iter_mut() {
        *v = rng.random_range(-0.3..0.3);
    }
    z[l.mu] = rng.random_range(0.0..1.5);
    z[l.ln_sigma] = rng.random_range(-0.3..0.3);
    if let Some(t) = l.ln_theta {
        for v in z[l.stick..t].iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        z[t] = rng.random_range(-0.5..0.5);
    }
    z
}
