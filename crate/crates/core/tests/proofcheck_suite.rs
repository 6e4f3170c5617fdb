//! The identity suite on the shipped scenarios.

use std::path::PathBuf;

use smoothlab_core::expr::Expr;
use smoothlab_core::field::TrigField;
use smoothlab_core::proofcheck::*;
use smoothlab_core::quadrature::QuadratureRule;
use smoothlab_core::scenario::Scenario;

fn load(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"));
    Scenario::load(path).unwrap()
}

fn print(rep: &SuiteReport) {
    for r in &rep.reports {
        println!("{:<12} n={:<4} skipped={:<3} rel={:.2e} tol={:.0e} {}", r.name, r.samples, r.skipped, r.max_rel, r.tol, r.pass);
    }
}

#[test]
fn constant_coefficients_pass_at_1e6() {
    let s = load("constant");
    assert_eq!(default_tolerance(&s), 1e-6);
    let rep = run_suite(&s, &ProofcheckConfig::default()).unwrap();
    print(&rep);
    assert!(rep.pass);
}

#[test]
fn variable_coefficients_pass_at_1e5() {
    let s = load("variable");
    assert_eq!(default_tolerance(&s), 1e-5);
    let rep = run_suite(&s, &ProofcheckConfig::default()).unwrap();
    print(&rep);
    assert!(rep.pass);
}

#[test]
fn residuals_shrink_when_panels_double() {
    let s = load("variable");
    let u = TrigField;
    let run = |rule: QuadratureRule| {
        let cfg = ProofcheckConfig {
            anchors: 8,
            rule,
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
    for order in [2, 3] {
        let coarse = run(QuadratureRule::gauss_legendre(order, 2));
        let fine = run(QuadratureRule::gauss_legendre(order, 4));
        for (c, f) in coarse.iter().zip(&fine) {
            // residuals already at rounding level cannot shrink further
            assert!(*c < 1e-11 || c / f >= 4.0, "GL{order}: {c:.3e} -> {f:.3e}");
        }
    }
}

#[test]
fn b2_does_not_depend_on_beta_where_speeds_coincide() {
    let s = load("degenerate_speeds");
    let cfg = ProofcheckConfig {
        anchors: 12,
        ..Default::default()
    };
    let base = check_b2_equivalence(&s, &TrigField, &cfg).unwrap();
    assert!(base.pass, "{base:?}");
    let mut beta = s.beta.clone().unwrap();
    beta[0][1] = Expr::constant(-100.0);
    beta[1][0] = Expr::parse("50*sin(t)").unwrap();
    let perturbed = s.clone().with_beta(beta).unwrap();
    let other = check_b2_equivalence(&perturbed, &TrigField, &cfg).unwrap();
    assert!((base.max_abs - other.max_abs).abs() < 1e-9);
    assert!((base.max_rel - other.max_rel).abs() < 1e-9);
}

#[test]
fn zero_kernel_scenario_passes_trivially() {
    let rep = run_suite(&load("smooth_benchmark"), &ProofcheckConfig { anchors: 10, ..Default::default() }).unwrap();
    print(&rep);
    assert!(rep.pass);
}

#[test]
fn one_percent_corruption_fails_rb() {
    let cfg = ProofcheckConfig {
        d3_scale: 1.01,
        ..Default::default()
    };
    for name in ["constant", "variable"] {
        let rep = check_rb_equivalence(&load(name), &TrigField, &cfg).unwrap();
        assert!(!rep.pass, "{name}: {rep:?}");
    }
}
