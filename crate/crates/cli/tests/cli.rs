use qaft::data::read_records;
use qaft::modelcheck::LooResult;
use qaft::CurveTable;
use qaft_cli::config::ConfigFile;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

const CURVE_HEADER: &str = "abscissa,group,mean,median,lo95,hi95,extrapolated";

fn qaft(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_qaft")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn ok(args: &[&str]) -> String {
    let (code, stdout, stderr) = qaft(args);
    assert_eq!(code, 0, "qaft {args:?} failed: {stderr}");
    stdout
}

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_curves(path: &Path) -> CurveTable {
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().next(), Some(CURVE_HEADER));
    CurveTable::read_csv(text.as_bytes()).unwrap()
}

fn value_at(table: &CurveTable, p: f64) -> f64 {
    table.rows.iter().find(|r| (r.abscissa - p).abs() < 1e-12).unwrap().median
}

#[test]
fn analytic_af_reproduces_example_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("af.csv");
    let cfg = config_dir().join("exp_constant.toml");
    ok(&["af", "--analytic", "--config", s(&cfg), "--x", "1", "--x-ref", "0", "--out", s(&out)]);
    let t = read_curves(&out);
    assert_eq!(t.rows.len(), 99);
    for r in &t.rows {
        assert!((r.median - 0.5f64.exp()).abs() < 1e-12, "p={}: {}", r.abscissa, r.median);
        assert!(r.lo95 == r.median && r.hi95 == r.median);
    }
    assert!((value_at(&t, 0.5) - 1.6487).abs() < 5e-5);

    for (file, at75, at25) in [("exp_increasing.toml", 1.25, 2.0), ("exp_decreasing.toml", 1.65, 0.9)] {
        let cfg = config_dir().join(file);
        ok(&["af", "--analytic", "--config", s(&cfg), "--x", "1", "--x-ref", "0", "--p", "0.25,0.75", "--out", s(&out)]);
        let t = read_curves(&out);
        assert!((value_at(&t, 0.75) - at75).abs() < 1e-6, "{file}");
        assert!((value_at(&t, 0.25) - at25).abs() < 1e-6, "{file}");
    }
}

const SIM: &str = r#"
[model]
covariates = ["x1", "x2"]

[baseline]
family = "weibull"

[sampler]
chains = 2
warmup = 500
iters = 500
seed = 11

[truth]
beta = [0.5, -0.3]
mu = 1.0
sigma = 1.2

[simulate]
n = 200
seed = 3
covariates = [{ dist = "bernoulli", p = 0.5 }, { dist = "normal", mean = 0.0, sd = 1.0 }]
censoring = { rate = 0.08, administrative = 15.0 }
truncation = { dist = "uniform", lo = 0.0, hi = 1.0 }
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn simulate_is_deterministic_and_reingests() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "sim.toml", SIM);
    let (a, b, c) = (tmp.path().join("a.csv"), tmp.path().join("b.csv"), tmp.path().join("c.csv"));
    ok(&["simulate", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["simulate", "--config", s(&cfg), "--out", s(&b)]);
    ok(&["simulate", "--config", s(&cfg), "--out", s(&c), "--seed", "4"]);
    let (ta, tb, tc) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap(), std::fs::read(&c).unwrap());
    assert_eq!(ta, tb);
    assert_ne!(ta, tc);
    let model = ConfigFile::from_toml(SIM).unwrap().model(None).unwrap();
    let data = read_records(ta.as_slice(), &model).unwrap();
    assert_eq!(data.len(), 200);
    assert!(data.iter().all(|r| r.trunc < r.y_l || r.y_l == r.trunc));
    let truth: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("a.truth.json")).unwrap()).unwrap();
    assert_eq!(truth["truth"]["beta"], serde_json::json!([0.5, -0.3]));
    assert_eq!(truth["seed"], 3);
    assert_eq!(truth["n"], 200);
}

#[test]
fn input_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x.csv");
    let typo = write(tmp.path(), "typo.toml", &SIM.replace("chains = 2", "chians = 2"));
    let (code, _, err) = qaft(&["simulate", "--config", s(&typo), "--out", s(&out)]);
    assert_eq!(code, 2);
    assert!(err.contains("chians"), "{err}");
    let no_follow_up = write(tmp.path(), "admin.toml", &SIM.replace("administrative = 15.0", "administrative = 0.0"));
    assert_eq!(qaft(&["simulate", "--config", s(&no_follow_up), "--out", s(&out)]).0, 2);
    let missing = tmp.path().join("missing.toml");
    assert_eq!(qaft(&["simulate", "--config", s(&missing), "--out", s(&out)]).0, 2);
    let (code, _, err) = qaft(&["af", "--fit", s(tmp.path()), "--x", "1", "--x-ref", "0", "--out", s(&out)]);
    assert_eq!(code, 2);
    assert!(err.contains("fit.json"), "{err}");
    let cfg = config_dir().join("exp_constant.toml");
    assert_eq!(qaft(&["af", "--analytic", "--config", s(&cfg), "--x", "1", "--x-ref", "0", "--p", "1.5", "--out", s(&out)]).0, 2);
    assert_eq!(qaft(&["af", "--analytic", "--config", s(&cfg), "--x", "1", "--out", s(&out)]).0, 2);
    assert_eq!(qaft(&["fit", "--bogus"]).0, 2);
    assert!(!out.exists());
}

#[test]
fn round_trip_simulate_fit_summarize_loo() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = write(dir, "sim.toml", SIM);
    let data = dir.join("data.csv");
    let fit = dir.join("fit");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&data)]);
    ok(&["fit", "--data", s(&data), "--config", s(&cfg), "--out", s(&fit), "--threads", "2"]);

    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fit.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["draws"], 1000);
    let params = summary["parameters"].as_array().unwrap();
    let names: Vec<&str> = params.iter().map(|p| p["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["beta_x1", "beta_x2", "mu", "sigma"]);
    for p in params {
        let (lo, med, hi) = (p["lo95"].as_f64().unwrap(), p["median"].as_f64().unwrap(), p["hi95"].as_f64().unwrap());
        assert!(med.is_finite() && lo <= med && med <= hi, "{p}");
        assert!(p["rhat"].as_f64().unwrap() < 1.05, "{p}");
    }
    let truth = [0.5, -0.3, 1.0, 1.2];
    for (p, t) in params.iter().zip(truth) {
        assert!(p["lo95"].as_f64().unwrap() < t && t < p["hi95"].as_f64().unwrap(), "{p} vs {t}");
    }
    let draws = std::fs::read_to_string(fit.join("draws.csv")).unwrap();
    assert_eq!(draws.lines().next(), Some("chain,iter,beta_x1,beta_x2,mu,sigma,divergent,energy"));
    let diag = std::fs::read_to_string(fit.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 5);

    let before = std::fs::read_to_string(fit.join("summary.json")).unwrap();
    ok(&["summarize", "--fit", s(&fit)]);
    let after: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fit.join("summary.json")).unwrap()).unwrap();
    let before: serde_json::Value = serde_json::from_str(&before).unwrap();
    assert_eq!(before["parameters"], after["parameters"]);

    let surv = dir.join("surv.csv");
    ok(&["standardize", "--fit", s(&fit), "--data", s(&data), "--covariate", "x1", "--times", "25", "--out", s(&surv)]);
    let t = read_curves(&surv);
    assert_eq!(t.group("exposed").len(), 25);
    assert_eq!(t.group("reference")[0].median, 1.0);
    let af = dir.join("af.csv");
    ok(&["af", "--fit", s(&fit), "--data", s(&data), "--covariate", "x1", "--p-step", "0.1", "--thin", "2", "--out", s(&af)]);
    let t = read_curves(&af);
    for r in &t.rows {
        // a constant effect gives a flat standardized curve near exp(0.5)
        assert!(r.lo95 <= r.median && r.median <= r.hi95);
        assert!(r.lo95 < 0.5f64.exp() * 1.3 && r.hi95 > 0.5f64.exp() / 1.3, "{r:?}");
    }

    let report = ok(&["loo", "--fit", s(&fit), "--data", s(&data)]);
    let report_file = std::fs::read_to_string(fit.join("loo.txt")).unwrap();
    assert_eq!(report, report_file);
    let pointwise = std::fs::read_to_string(fit.join("loo_pointwise.csv")).unwrap();
    assert_eq!(pointwise.lines().next(), Some("subject,elpd_i,khat"));
    let parsed = LooResult::parse(&report_file, &pointwise).unwrap();
    assert_eq!(parsed.report(), report_file);
    assert_eq!(parsed.pointwise_csv(), pointwise);
    assert_eq!(parsed.minus2elpd, -2.0 * parsed.elpd);

    let other = dir.join("other.csv");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&other), "--seed", "99"]);
    let (code, _, err) = qaft(&["loo", "--fit", s(&fit), "--data", s(&other)]);
    assert_eq!(code, 2, "{err}");
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "round trip took {elapsed:.0}s");
}

const TV: &str = r#"
[model]
covariates = ["x1"]
time_varying = "exposed"

[baseline]
family = "weibull"

[sampler]
chains = 2
warmup = 200
iters = 200
seed = 5

[truth]
beta = [0.3, 0.6]
mu = 1.0
sigma = 1.0

[simulate]
n = 150
seed = 8
covariates = [{ dist = "bernoulli", p = 0.5 }]
switch = { prob = 0.5, onset = { dist = "uniform", lo = 0.0, hi = 3.0 } }
censoring = { administrative = 12.0 }
"#;

#[test]
fn surface_slice_matches_af_at_same_onset() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = write(dir, "tv.toml", TV);
    let data = dir.join("data.csv");
    let fit = dir.join("fit");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&data)]);
    assert!(std::fs::read_to_string(&data).unwrap().starts_with("y_l,y_u,delta,trunc,x1,tx_time\n"));
    ok(&["fit", "--data", s(&data), "--config", s(&cfg), "--out", s(&fit)]);
    let surf = dir.join("surface.csv");
    ok(&["surface", "--fit", s(&fit), "--data", s(&data), "--onset-times", "0.5,1.5", "--p-step", "0.1", "--thin", "4", "--out", s(&surf)]);
    let af = dir.join("af.csv");
    ok(&["af", "--fit", s(&fit), "--data", s(&data), "--onset", "1.5", "--p-step", "0.1", "--thin", "4", "--out", s(&af)]);
    let surface = read_curves(&surf);
    let slice = surface.group("t_x=1.5");
    let curve = read_curves(&af);
    assert_eq!(slice.len(), curve.rows.len());
    for (a, b) in slice.iter().zip(&curve.rows) {
        assert_eq!(
            (a.abscissa, a.mean, a.median, a.lo95, a.hi95, a.extrapolated),
            (b.abscissa, b.mean, b.median, b.lo95, b.hi95, b.extrapolated)
        );
    }
    assert_eq!(surface.group("t_x=0.5").len(), slice.len());
}

/// Type-7 quantile, written out independently of the library.
fn quantile7(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() as f64 - 1.0) * q;
    let lo = h.floor();
    let frac = h - lo;
    let lo = lo as usize;
    if lo + 1 < sorted.len() {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    } else {
        sorted[lo]
    }
}

#[test]
fn knot_rule_uses_log_event_time_quantiles() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let sim = write(dir, "sim.toml", SIM);
    let data = dir.join("data.csv");
    ok(&["simulate", "--config", s(&sim), "--out", s(&data)]);
    let fit_cfg = SIM.replace(
        "[sampler]\nchains = 2\nwarmup = 500\niters = 500",
        "[effect]\nkind = \"piecewise\"\nflexible_covariate = \"x1\"\nrule = \"quantiles:2,log\"\n\n[sampler]\nchains = 1\nwarmup = 30\niters = 30",
    );
    let cfg = write(dir, "fit.toml", &fit_cfg);
    let fit = dir.join("fit");
    ok(&["fit", "--data", s(&data), "--config", s(&cfg), "--out", s(&fit)]);
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fit.join("fit.json")).unwrap()).unwrap();
    let knots: Vec<f64> = meta["model"]["effect"]["knots"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();

    let mut rd = csv::Reader::from_path(&data).unwrap();
    let mut logs: Vec<f64> = rd.records().map(|r| r.unwrap()).filter(|r| &r[2] == "1").map(|r| r[0].parse::<f64>().unwrap().ln()).collect();
    logs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    logs.dedup();
    assert_eq!(knots.len(), 3);
    assert_eq!(knots[0], 0.0);
    for (j, k) in knots[1..].iter().enumerate() {
        let want = quantile7(&logs, (j + 1) as f64 / 3.0).exp();
        assert!((k - want).abs() < 1e-12 * want, "knot {j}: {k} vs {want}");
    }
}
