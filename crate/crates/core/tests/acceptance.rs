//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero on any failure.

use std::collections::BTreeMap;
use std::f64::consts::{E, LN_2, PI};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fineq::bounds::{bound_from_moments, bound_holley_stroock, bound_lipschitz_poincare, bound_logconcave_perturbation, bound_mollified, bound_subbotin, LogConcaveVariant, MollifiedVariant, MomentVariant, ParamSearch, Quantity, SubbotinVariant, CONCENTRATION_CAP};
use fineq::langevin::{ensemble_series, fit_decay_rate, ula_ou_stationary_variance, ula_run, variance_with_stderr, ChainConfig, Target};
use fineq::measures::{Certified, MeasureModel, MomentSet};
use fineq::mollify::{verify_mollified_bound, AtomicMeasure};
use fineq::oracle::{muckenhoupt_1d, poincare_1d, GridMeasure1D, DEFAULT_INTERVALS};
use fineq::scenario::{mollify_gradient_check, parse_scenario, run_scenario, RegressSection, RunOptions, Scenario, ScenarioKind, GRADIENT_CHECK_TOL};
use fineq::sweep::{run_sweep, PertSpec, SweepConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn oracle_exactness() -> Outcome {
    let cases: [(&str, MeasureModel, f64, f64); 3] = [
        ("gaussian(1)", MeasureModel::gaussian(1.0, 1).unwrap(), 1.0, 0.005),
        ("laplace", MeasureModel::exponential(1.0, 1).unwrap(), 4.0, 0.02),
        ("uniform[0,1]", MeasureModel::uniform(0.0, 1.0, 1).unwrap(), 1.0 / (PI * PI), 0.01),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, m, expect, tol) in cases {
        let t = Instant::now();
        let g = GridMeasure1D::from_model(&m, None, DEFAULT_INTERVALS).map_err(|e| e.to_string())?;
        let c = poincare_1d(&g).map_err(|e| e.to_string())?.constant;
        let dt = t.elapsed();
        ok &= rel(c, expect) <= tol && dt < Duration::from_secs(5);
        parts.push(format!("{name}={c:.6} ({:.2}s)", dt.as_secs_f64()));
    }
    check(ok, parts.join(", "))
}

fn random_log_concave(rng: &mut ChaCha8Rng) -> (MeasureModel, PertSpec) {
    let family = rng.random_range(0..4);
    let m = match family {
        0 => MeasureModel::gaussian(rng.random_range(0.5..2.0), 1),
        1 => MeasureModel::subbotin(rng.random_range(1.0..3.0), 1),
        2 => MeasureModel::exponential(rng.random_range(0.5..2.0), 1),
        _ => {
            let lo = rng.random_range(-1.0..1.0);
            MeasureModel::uniform(lo, lo + rng.random_range(0.5..3.0), 1)
        }
    }
    .unwrap();
    // Linear tilts of the heavier-tailed families can destroy integrability.
    let f = match rng.random_range(0..3) {
        0 => PertSpec::Zero,
        1 if family == 0 || family == 3 => PertSpec::Linear { c: rng.random_range(-1.0..1.0) },
        _ => PertSpec::Quadratic { rho: rng.random_range(0.0..0.5) },
    };
    (m, f)
}

fn muckenhoupt_sandwich() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut violations = 0;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..100 {
        let (m, spec) = random_log_concave(&mut rng);
        let f = spec.build(&m);
        let g = GridMeasure1D::from_model(&m, Some(&f), DEFAULT_INTERVALS).map_err(|e| e.to_string())?;
        let c = poincare_1d(&g).map_err(|e| e.to_string())?.constant;
        let b = muckenhoupt_1d(&g).map_err(|e| e.to_string())?.constant;
        if !(b <= c && c <= 4.0 * b) {
            violations += 1;
        }
        lo = lo.min(c / b);
        hi = hi.max(c / b);
    }
    let dt = t.elapsed();
    check(violations == 0 && dt < Duration::from_secs(120), format!("100 instances, {violations} violations, C_P/B in [{lo:.3}, {hi:.3}], {:.1}s", dt.as_secs_f64()))
}

const SWEPT: [&str; 10] = [
    "lipschitz_poincare",
    "lipschitz_cheeger",
    "generator_poincare",
    "log_concave_l2",
    "log_concave_cheeger",
    "log_concave_generator",
    "mollified_gaussian_poincare",
    "moment_variance",
    "moment_cheeger",
    "moment_cheeger_weak",
];

fn soundness_and_relations() -> (Outcome, Outcome) {
    let t = Instant::now();
    let cfg = SweepConfig { seed: 7, instances: 400, mollify_instances: 240, min_applicable: 200, max_instances: 4000, theorems: Vec::new(), ..Default::default() };
    let out = match run_sweep(&cfg) {
        Ok(o) => o,
        Err(e) => return (Err(e.to_string()), Err("no corpus".into())),
    };
    let dt = t.elapsed();
    let mut ok = dt < Duration::from_secs(900);
    let mut parts = Vec::new();
    for name in SWEPT {
        let s = out.summary.get(name).cloned().unwrap_or_default();
        ok &= s.applicable >= 200 && s.violations == 0;
        parts.push(format!("{name}:{}/{}v", s.applicable, s.violations));
    }
    let sweep = check(ok, format!("{} ({} instances, {:.0}s)", parts.join(" "), out.records.len(), dt.as_secs_f64()));

    let (mut n, mut n_lc, mut bad) = (0, 0, 0);
    for r in &out.records {
        let Some(o) = &r.oracles else { continue };
        n += 1;
        if 4.0 * o.c_c_median.constant.powi(2) < o.c_p.constant * 0.98 {
            bad += 1;
        }
        if r.mu_f_log_concave {
            n_lc += 1;
            if o.c_c_mean.constant > 16.0 / PI * o.c_p.constant.sqrt() * 1.02 {
                bad += 1;
            }
        }
    }
    let rel = check(bad == 0 && n > 0, format!("{n} instances ({n_lc} log-concave), {bad} violations"));
    (sweep, rel)
}

fn closed_form_sixteen() -> Outcome {
    let a = bound_lipschitz_poincare(4.0, 0.5, &ParamSearch::default()).map_err(|e| e.to_string())?;
    let g = bound_lipschitz_poincare(4.0, 0.5, &ParamSearch::grid(2000)).map_err(|e| e.to_string())?;
    let (v, eps, gv) = (a.value.unwrap_or(f64::NAN), a.params.get("eps").copied().unwrap_or(f64::NAN), g.value.unwrap_or(f64::NAN));
    check(v == 16.0 && eps == 1.0 && rel(gv, v) < 1e-6, format!("value={v} eps*={eps} grid={gv:.9}"))
}

fn mollification() -> Outcome {
    let nu = AtomicMeasure::symmetric_pair(1.0);
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, sigma) in [0.6, 1.0, 2.0].into_iter().enumerate() {
        let grad = mollify_gradient_check(&nu, sigma, 10_000, 100 + i as u64);
        let c = verify_mollified_bound(&nu, sigma, &ParamSearch::default(), DEFAULT_INTERVALS).map_err(|e| e.to_string())?;
        let b = c.bound.value.unwrap_or(f64::NAN);
        ok &= grad <= 1.0 && c.bound.applicable && b >= c.oracle.constant;
        parts.push(format!("sigma={sigma}: |grad F|/(R/sigma^2)<={grad:.4} bound={b:.4} oracle={:.4}", c.oracle.constant));
    }
    let b2 = bound_mollified(1.0, 2.0, MollifiedVariant::GaussianPoincare, &ParamSearch::default()).map_err(|e| e.to_string())?.value.unwrap_or(f64::NAN);
    ok &= rel(b2, 64.0 / 9.0) < 1e-6;
    parts.push(format!("sigma=2 optimum {b2:.9} vs 64/9"));
    check(ok, parts.join("; "))
}

fn langevin_checks() -> Outcome {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (rho, h, steps) in [(1.0, 0.01, 800), (4.0, 0.0025, 800)] {
        let target = Target::gaussian(rho, vec![0.0]);
        let cfg = ChainConfig { h, steps, burn_in: 0, seed: 11, init: vec![100.0] };
        let series = ensemble_series(&target, &cfg, 64, &|x: &[f64]| x[0]).map_err(|e| e.to_string())?;
        let fit = fit_decay_rate(&series, Some(0.0), 0.5);
        ok &= !fit.flagged && rel(fit.rate, rho) <= 0.10;
        parts.push(format!("rho={rho}: rate={:.3}", fit.rate));
    }
    for (h, steps) in [(0.1, 400_000), (0.01, 2_000_000)] {
        let target = Target::gaussian(1.0, vec![0.0]);
        let cfg = ChainConfig { h, steps, burn_in: 2_000, seed: 5, init: vec![0.0] };
        let tr = ula_run(&target, &cfg).map_err(|e| e.to_string())?;
        let (v, se) = variance_with_stderr(&tr.coordinate(0)[cfg.burn_in..]);
        let exact = ula_ou_stationary_variance(1.0, h);
        let z = (v - exact).abs() / se;
        ok &= z <= 3.0;
        parts.push(format!("h={h}: var={v:.4} exact={exact:.4} z={z:.2}"));
    }
    let dt = t.elapsed();
    ok &= dt < Duration::from_secs(180);
    parts.push(format!("{:.1}s", dt.as_secs_f64()));
    check(ok, parts.join(", "))
}

fn regression() -> Outcome {
    let t = Instant::now();
    let mut sc = Scenario::new(ScenarioKind::Regress);
    sc.seed = 3;
    sc.regress = Some(RegressSection { n: 32, m: 16, sparsity: 3, noise_sd: 0.1, alpha: 5.0, beta: 64.0, tau: 1.0, ..Default::default() });
    let a = run_scenario(&sc, &RunOptions::default()).map_err(|e| e.to_string())?;
    let b = run_scenario(&sc, &RunOptions::default()).map_err(|e| e.to_string())?;
    let (da, db) = (&a.summary["details"], &b.summary["details"]);
    let same = da["q"].as_f64().map(f64::to_bits) == db["q"].as_f64().map(f64::to_bits) && da["q_prime"].as_f64().map(f64::to_bits) == db["q_prime"].as_f64().map(f64::to_bits);
    let grad = da["gradient_check_error"].as_f64().unwrap_or(f64::INFINITY);
    let cons = &da["constructive"];
    let finite = cons["applicable"] == true && cons["value"].as_f64().is_some_and(f64::is_finite);
    let rtb = da["estimation"]["rate_times_bound"].as_f64();
    let dt = t.elapsed();
    let ok = same && grad <= GRADIENT_CHECK_TOL && finite && rtb.is_some_and(|r| r >= 0.5) && dt < Duration::from_secs(300);
    check(ok, format!("q={} q'={} rerun-identical={same} grad-err={grad:.1e} constructive={} rate*bound={:?} ({:.1}s)", da["q"], da["q_prime"], cons["value"], rtb, dt.as_secs_f64()))
}

fn constants() -> Outcome {
    let mut errs: BTreeMap<&str, f64> = BTreeMap::new();
    let v = |r: &fineq::bounds::BoundResult| r.value.unwrap_or(f64::NAN);
    let hs = bound_holley_stroock(4.0, Quantity::Poincare, Certified::Finite(1.0)).unwrap();
    errs.insert("e^osc", rel(v(&hs), 10.873_127_313_836_18));
    let zero = MomentSet { grad_f_l2sq: Some(0.0), ..Default::default() };
    let l2 = bound_logconcave_perturbation(1.0, &zero, LogConcaveVariant::L2, true, true, &ParamSearch::default()).unwrap();
    errs.insert("64ln2", rel(v(&l2[0]), 44.361_419_555_836_5));
    // a = C_P g/4 = 1/48 and eps = 1 give s = 1/24 and (1 - 6s)^-2 = 16/9.
    let g = MomentSet { grad_f_l2sq: Some(1.0 / 12.0), ..Default::default() };
    let l2 = bound_logconcave_perturbation(1.0, &g, LogConcaveVariant::L2, true, true, &ParamSearch::default().fix("eps", 1.0)).unwrap();
    errs.insert("(1-6s)^-2", rel(v(&l2[0]), 44.361_419_555_836_5 * 2.0 * 16.0 / 9.0));
    let g1 = MomentSet { grad_f_l1: Some(0.25), ..Default::default() };
    let ch = bound_logconcave_perturbation(1.0, &g1, LogConcaveVariant::Cheeger { c_c_mu: 1.0 }, true, true, &ParamSearch::default()).unwrap();
    errs.insert("16/pi (1-2s)^-2", rel(v(&ch[0]), 20.371_832_715_762_6));
    let var = bound_from_moments(&MomentSet { second: Some(1.0), ..Default::default() }, MomentVariant::Variance, true).unwrap();
    errs.insert("32*81 ln2", rel(v(&var[0]), 1796.637_492_011_378));
    let sub = bound_subbotin(2, 1.0, SubbotinVariant::UnconditionalOptimal, true, true).unwrap();
    errs.insert("512e^2 ln2 ln^2(3n)", rel(v(&sub), 512.0 * E * E * LN_2 * 6f64.ln().powi(2)));
    errs.insert("(64sqrt2/pi)^2", rel(CONCENTRATION_CAP, 830.023_136_398_031));
    let worst = errs.values().copied().fold(0.0, f64::max);
    check(worst < 1e-12, errs.iter().map(|(k, e)| format!("{k}:{e:.1e}")).collect::<Vec<_>>().join(" "))
}

fn determinism() -> Outcome {
    let sweep = "kind = \"soundness-sweep\"\nseed = 42\nintervals = 2048\n[sweep]\ninstances = 40\nmollify_instances = 10\n";
    let langevin = "kind = \"langevin\"\nseed = 9\n[langevin]\nmeasure = { family = \"subbotin\", p = 1.5 }\nperturbation = { kind = \"bump\", amplitude = 0.5, width = 1.0, center = 0.3 }\nh = 0.01\nsteps = 5000\nchains = 3\n";
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, text) in [("soundness-sweep", sweep), ("langevin", langevin)] {
        let sc = parse_scenario(text, name).map_err(|e| e.to_string())?;
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("pool");
            pool.install(|| run_scenario(&sc, &RunOptions::default())).map(|o| o.csv)
        };
        let a = run(1).map_err(|e| e.to_string())?;
        let b = run(4).map_err(|e| e.to_string())?;
        ok &= a == b && !a.is_empty();
        parts.push(format!("{name}: {} bytes identical={}", a.len(), a == b));
    }
    check(ok, parts.join(", "))
}

fn main() -> ExitCode {
    let mut all = true;
    let mut report = |id: usize, name: &str, r: Outcome| {
        match r {
            Ok(d) => println!("PASS [{id:>2}] {name}: {d}"),
            Err(d) => {
                all = false;
                println!("FAIL [{id:>2}] {name}: {d}");
            }
        }
    };
    report(1, "oracle exactness", oracle_exactness());
    report(2, "muckenhoupt sandwich", muckenhoupt_sandwich());
    let (sweep, relations) = soundness_and_relations();
    report(3, "soundness sweep", sweep);
    report(4, "closed-form optimizer", closed_form_sixteen());
    report(5, "cheeger relations", relations);
    report(6, "mollification", mollification());
    report(7, "langevin rate and variance", langevin_checks());
    report(8, "regression end-to-end", regression());
    report(9, "explicit constants", constants());
    report(10, "determinism", determinism());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
