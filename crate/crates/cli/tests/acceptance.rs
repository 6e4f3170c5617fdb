//! Acceptance run: one line per criterion, non-zero exit if any fails.
//!
//! Oracles (closed-form characteristics, exact solutions, traversal times)
//! are written out here independently of the library.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use smoothlab_core::characteristics::{CharField, ExitKind};
use smoothlab_core::field::TrigField;
use smoothlab_core::proofcheck::{
    check_b2_equivalence, check_br_form, check_derivative_formulas, check_pqp_factorization, check_rb_equivalence, run_suite,
    ProofcheckConfig,
};
use smoothlab_core::quadrature::QuadratureRule;
use smoothlab_core::scenario::{Sampler, Scenario};
use smoothlab_core::smoothing::{required_horizon, smoothing_report, smoothing_time, SmoothingConfig};
use smoothlab_core::solver::{
    fit_growth, generalized_solution, solve_marching, solve_marching_with, solve_picard, FootInterp, GridSpec, MollifierConfig,
    PicardConfig,
};

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"));
    Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn criterion(id: usize, title: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let pass = out.pass && in_time;
    println!(
        "criterion {id} [{}] {title}: {} ({:.1} s, limit {} s{})",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { ", exceeded" }
    );
    pass
}

fn orders(e: &[f64]) -> Vec<f64> {
    e.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

// --- 1 -------------------------------------------------------------------

fn characteristics() -> Outcome {
    // speed (1+x)(1+t): ln(1+ξ) - ln(1+x) = F(ω) - F(t) with F(t) = t + t²/2
    let big_f = |t: f64| t + 0.5 * t * t;
    let omega = |xi: f64, x: f64, t: f64| -1.0 + (1.0 + 2.0 * (big_f(t) + ((1.0 + xi) / (1.0 + x)).ln())).sqrt();
    let inverse = |tau: f64, x: f64, t: f64| (1.0 + x) * (big_f(tau) - big_f(t)).exp() - 1.0;
    let sep = Scenario::from_strings(1, 4.0, &["(1+x)*(1+t)", "-0.5"], None, None, None, None, vec![Sampler::zero(); 2]).unwrap();
    let con = Scenario::from_strings(1, 4.0, &["0.5", "-1.5"], None, None, None, None, vec![Sampler::zero(); 2]).unwrap();
    let mut worst = 0.0f64;
    {
        let ch = CharField::new(&sep);
        for i in 0..20 {
            let x = 0.05 + 0.045 * i as f64;
            let t = 2.0 + 0.1 * i as f64;
            for frac in [0.0, 0.5, 1.0] {
                let xi = frac * x;
                worst = worst.max((ch.trace(0, x, t, xi).unwrap() - omega(xi, x, t)).abs());
                // speed -0.5: upstream lies to the right, ω = t - (ξ - x)/0.5
                let xi = x + frac * (1.0 - x);
                worst = worst.max((ch.trace(1, x, t, xi).unwrap() - (t - (xi - x) / 0.5)).abs());
            }
            let tau = 0.5 * (omega(0.0, x, t).max(0.0) + t);
            worst = worst.max((ch.inverse(0, tau, x, t).unwrap() - inverse(tau, x, t)).abs());
            let e = ch.exit_point(0, x, t).unwrap();
            let ok = e.kind == ExitKind::Lateral && e.x == 0.0;
            worst = worst.max(if ok { (e.tau - omega(0.0, x, t)).abs() } else { 1.0 });
        }
        let ch = CharField::new(&con);
        for i in 0..20 {
            let (x, t) = (0.05 * i as f64, 0.3 + 0.05 * i as f64);
            let e = ch.exit_point(0, x, t).unwrap();
            let (kind, ex, et) = if t >= x / 0.5 { (ExitKind::Lateral, 0.0, t - x / 0.5) } else { (ExitKind::Initial, x - 0.5 * t, 0.0) };
            worst = worst.max(if e.kind == kind { (e.x - ex).abs().max((e.tau - et).abs()) } else { 1.0 });
        }
    }
    let cfg = ProofcheckConfig::default();
    let mut fd_worst = 0.0f64;
    let mut samples = usize::MAX;
    for s in [&sep, &con] {
        for r in check_derivative_formulas(s, &cfg).unwrap() {
            fd_worst = fd_worst.max(r.max_rel);
            samples = samples.min(r.samples);
        }
    }
    Outcome {
        pass: worst <= 1e-8 && fd_worst <= 1e-5 && samples >= 500,
        detail: format!("closed-form max abs {worst:.2e} (tol 1e-8); dx/dt/d3 vs FD max rel {fd_worst:.2e} over {samples} samples (tol 1e-5)"),
    }
}

// --- 2 -------------------------------------------------------------------

fn identities() -> Outcome {
    let cfg = ProofcheckConfig::default();
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, tol) in [("constant", 1e-6f64), ("variable", 1e-5)] {
        let rep = run_suite(&scenario(name), &cfg).unwrap();
        let worst = rep
            .reports
            .iter()
            .filter(|r| r.name != "B2_bound")
            .map(|r| r.max_rel)
            .fold(0.0, f64::max);
        pass &= rep.pass && worst < tol;
        notes.push(format!("{name} worst rel {worst:.1e} (tol {tol:.0e})"));
    }
    // panel doubling on the variable scenario
    let s = scenario("variable");
    let u = TrigField;
    let run = |panels: usize| {
        let cfg = ProofcheckConfig {
            anchors: 10,
            rule: QuadratureRule::gauss_legendre(3, panels),
            tol: Some(1.0),
            ..Default::default()
        };
        [
            check_b2_equivalence(&s, &u, &cfg).unwrap().max_rel,
            check_rb_equivalence(&s, &u, &cfg).unwrap().max_rel,
            check_br_form(&s, &u, &cfg).unwrap().max_rel,
            check_pqp_factorization(&s, &u, &cfg).unwrap().max_rel,
        ]
    };
    let (c, f) = (run(2), run(4));
    let min_ratio = c
        .iter()
        .zip(&f)
        .filter(|(c, _)| **c >= 1e-11)
        .map(|(c, f)| c / f)
        .fold(f64::INFINITY, f64::min);
    pass &= min_ratio >= 4.0;
    notes.push(format!("panel doubling GL3 x2 -> x4 min shrink {min_ratio:.1}x (BR at rounding level)"));
    Outcome {
        pass,
        detail: notes.join("; "),
    }
}

// --- 3 -------------------------------------------------------------------

fn solver() -> Outcome {
    let bump = |x: f64| (PI * x).sin().powi(2);
    let lambda = 0.7;
    let phi = Sampler::Expr(smoothlab_core::expr::Expr::parse("sin(3.141592653589793*x)^2").unwrap());
    let mut notes = Vec::new();
    let mut pass = true;
    for lam in [0.0, lambda] {
        let s = Scenario::from_strings(
            1,
            1.5,
            &["1", "-1"],
            Some(&[&[&lam.to_string(), "0"], &["0", "0"]]),
            None,
            None,
            None,
            vec![phi.clone(), phi.clone()],
        )
        .unwrap();
        let exact = |j: usize, x: f64, t: f64| match j {
            0 if x > t => (-lam * t).exp() * bump(x - t),
            1 if x + t < 1.0 => bump(x + t),
            _ => 0.0,
        };
        let errs = |interp| -> Vec<f64> {
            [100usize, 200, 400]
                .iter()
                .map(|&nx| {
                    let h = 1.0 / nx as f64;
                    solve_marching_with(&s, GridSpec::new(nx, 0.8 * h, 1.5), interp).unwrap().sup_error(exact)
                })
                .collect()
        };
        let e = errs(FootInterp::Cubic);
        let o = orders(&e);
        let c = e[0] * 100.0;
        let bounded = e.iter().zip([100.0, 200.0, 400.0]).all(|(e, n)| *e <= c / n * 1.0001);
        pass &= bounded && o.iter().all(|&o| o >= 1.0);
        let lin = orders(&errs(FootInterp::Linear));
        notes.push(format!(
            "{} orders {:.2}/{:.2} (linear feet {:.2}/{:.2})",
            if lam == 0.0 { "transport" } else { "integrating factor" },
            o[0],
            o[1],
            lin[0],
            lin[1]
        ));
    }
    let s = scenario("manufactured_coupled");
    let ex = s.exact.clone().unwrap();
    let exact = |j: usize, x: f64, t: f64| ex[j].value(x, t);
    let e: Vec<f64> = [100usize, 200, 400]
        .iter()
        .map(|&nx| {
            let h = 1.0 / nx as f64;
            solve_marching_with(&s, GridSpec::new(nx, 0.8 * h, 1.0), FootInterp::Cubic).unwrap().sup_error(exact)
        })
        .collect();
    let o = orders(&e);
    pass &= o.iter().all(|&o| o >= 1.0);
    notes.push(format!("coupled manufactured orders {:.2}/{:.2}", o[0], o[1]));

    let s = s.with_horizon(0.5).unwrap();
    let nx = 400;
    let spec = GridSpec::new(nx, 0.8 / nx as f64, 0.5);
    let m = solve_marching(&s, spec).unwrap();
    let (p, _) = solve_picard(&s, spec, &PicardConfig::default()).unwrap();
    let gap = m.sup_distance(&p);
    let err = m.sup_error(exact);
    pass &= gap <= 10.0 * err;
    notes.push(format!("N=400 marching/Picard gap {gap:.2e} vs 10x marching error {:.2e}", 10.0 * err));
    Outcome {
        pass,
        detail: notes.join("; "),
    }
}

// --- 4 -------------------------------------------------------------------

fn generalized() -> Outcome {
    let s = scenario("benchmark");
    let nx = 800;
    let (rep, _) = generalized_solution(&s, &MollifierConfig::default(), GridSpec::new(nx, 1.0 / nx as f64, s.horizon), 1e-3, false).unwrap();
    let d = rep.distances();
    let list: Vec<String> = d.iter().map(|v| format!("{v:.2e}")).collect();
    Outcome {
        pass: rep.levels.len() == 6 && rep.monotone && rep.converged,
        detail: format!(
            "successive C(L2) distances [{}] at N=800; {}",
            list.join(", "),
            rep.diagnostic.unwrap_or_else(|| "all levels resolved".into())
        ),
    }
}

// --- 5 -------------------------------------------------------------------

fn growth() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for name in ["benchmark", "variable", "coupled_var2"] {
        let s = scenario(name).with_horizon(6.0).unwrap();
        let h = 1.0 / 200.0;
        let spec = GridSpec::new(200, h / s.max_speed(), s.horizon);
        let cfg = MollifierConfig {
            levels: 4,
            ..Default::default()
        };
        let (coarse, _) = generalized_solution(&s, &cfg, spec, 1.0, false).unwrap();
        let all: Vec<(f64, f64)> = coarse.levels.iter().flat_map(|l| l.norm_ratios.iter().copied()).collect();
        let fit = fit_growth(&all, 1.0);
        let own = coarse.levels.iter().map(|l| fit.worst(&l.norm_ratios)).fold(0.0, f64::max);
        let (fine, _) = generalized_solution(&s, &cfg, spec.halved(), 1.0, false).unwrap();
        let halved = fine.levels.iter().map(|l| fit.worst(&l.norm_ratios)).fold(0.0, f64::max);
        pass &= own <= 1.0 + 1e-12 && halved <= 1.1;
        notes.push(format!("{name} M={:.3} w={:.3} halved-grid ratio {halved:.4}", fit.m, fit.omega));
    }
    Outcome {
        pass,
        detail: notes.join("; "),
    }
}

// --- 6 -------------------------------------------------------------------

fn smoothing() -> Outcome {
    // unit speeds: one traversal each way takes 1, so d = 1 + 1
    let (forward, backward) = (1.0f64, 1.0f64);
    let d_oracle = 1.0 / forward + 1.0 / backward;
    let s = scenario("benchmark");
    let cfg = SmoothingConfig::default();
    let run = |nx: usize| smoothing_report(&s, GridSpec::new(nx, 1.0 / nx as f64, s.horizon), &cfg).unwrap();
    let fine = run(400);
    let coarse = run(200);
    let lo = fine.min_between(0.0, 1.0 - fine.coarse.1);
    let hi = fine.max_between(2.25 + 1e-12, fine.horizon);
    let (vf, vc) = (fine.verdict.unwrap_or(f64::INFINITY), coarse.verdict.unwrap_or(f64::INFINITY));
    let stable = (vf - vc).abs() <= 2.0 * fine.coarse.1;
    let mut pass = (fine.d - d_oracle).abs() < 1e-9 && lo > 0.5 && hi < 1e-2 && stable;
    let mut notes = vec![format!(
        "benchmark d={:.4}, min indicator t<1 {lo:.3}, max t>2.25 {hi:.1e}, verdict {vf} (N=400) vs {vc} (N=200)",
        fine.d
    )];
    let mut ok = 0;
    for name in ["variable", "coupled_var1", "coupled_var2", "coupled_var3"] {
        let s = scenario(name);
        let d = smoothing_time(&CharField::new(&s)).unwrap();
        let s = s.with_horizon(required_horizon(d, &cfg)).unwrap();
        let nx = 200;
        let rep = smoothing_report(&s, GridSpec::new(nx, 1.0 / (nx as f64 * s.max_speed()), s.horizon), &cfg).unwrap();
        if rep.verdict.is_some_and(|v| v <= d + 0.25 * d) {
            ok += 1;
        }
        notes.push(format!("{name} d={d:.3} verdict {}", rep.verdict.map_or("none".into(), |v| format!("{v:.3}"))));
    }
    pass &= ok >= 3;
    Outcome {
        pass,
        detail: notes.join("; "),
    }
}

// --- 7 -------------------------------------------------------------------

fn negative_controls() -> Outcome {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/l1_violation.json");
    let out = std::env::temp_dir().join("smoothlab-acceptance-validate");
    let status = Command::new(env!("CARGO_BIN_EXE_smoothlab"))
        .args(["validate", "--scenario"])
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .output()
        .expect("running the validate command");
    let code = status.status.code();
    let cfg = ProofcheckConfig {
        d3_scale: 1.01,
        ..Default::default()
    };
    let rb = check_rb_equivalence(&scenario("constant"), &TrigField, &cfg).unwrap();
    let clean = check_rb_equivalence(&scenario("constant"), &TrigField, &ProofcheckConfig::default()).unwrap();
    Outcome {
        pass: code == Some(1) && !rb.pass && clean.pass,
        detail: format!(
            "validate on sign-violating speeds exits {code:?}; RB with 1% corrupted d3 rel {:.2e} (clean {:.1e}, tol {:.0e})",
            rb.max_rel, clean.max_rel, rb.tol
        ),
    }
}

fn main() {
    let results = [
        criterion(1, "characteristic engine", Duration::from_secs(10), characteristics),
        criterion(2, "operator identities", Duration::from_secs(120), identities),
        criterion(3, "solver correctness", Duration::from_secs(240), solver),
        criterion(4, "generalized-solution driver", Duration::from_secs(300), generalized),
        criterion(5, "growth bound", Duration::from_secs(300), growth),
        criterion(6, "smoothing theorem", Duration::from_secs(600), smoothing),
        criterion(7, "negative controls", Duration::from_secs(120), negative_controls),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
