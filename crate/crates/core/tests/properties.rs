//! Property tests across the expression parser and the solvers.

use proptest::prelude::*;
use smoothlab_core::expr::Expr;
use smoothlab_core::scenario::{Interp, Sampler, Scenario};
use smoothlab_core::solver::{solve_marching, GridSpec};

fn expr_source() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x".to_string()),
        Just("t".to_string()),
        (-5.0..5.0f64).prop_map(|c| format!("{c:.3}")),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}+{b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}-{b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a}*{b}")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("cos({a})")),
            inner.clone().prop_map(|a| format!("-{a}")),
            inner.prop_map(|a| format!("exp(0.1*{a})")),
        ]
    })
}

fn table(values: Vec<f64>) -> Sampler {
    let n = values.len();
    Sampler::Table {
        interp: Interp::Linear,
        x: (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
        values,
    }
}

fn coupled() -> Scenario {
    Scenario::from_strings(
        1,
        1.5,
        &["2+sin(t)", "-1-0.5*cos(x)"],
        Some(&[&["0.2", "0.3*(-3-sin(t)-0.5*cos(x))"], &["0.1*(3+sin(t)+0.5*cos(x))", "-0.1"]]),
        Some(&[&["0.1", "0.2*x"], &["0.3", "0"]]),
        Some(&[&["0.4", "0.3*x"], &["0.2", "0.5"]]),
        None,
        vec![Sampler::zero(); 2],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printed_expressions_parse_back_to_the_same_function(src in expr_source(), x in 0.0..1.0f64, t in 0.0..3.0f64) {
        let e = Expr::parse(&src).unwrap();
        let back = Expr::parse(&e.to_string()).unwrap();
        let (a, b) = (e.value(x, t), back.value(x, t));
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{src} -> {e}: {a} vs {b}");
    }

    #[test]
    fn derivatives_match_finite_differences(src in expr_source(), x in 0.1..0.9f64, t in 0.5..2.5f64) {
        use smoothlab_core::expr::Var;
        let e = Expr::parse(&src).unwrap();
        let h = 1e-6;
        let fd = (e.value(x + h, t) - e.value(x - h, t)) / (2.0 * h);
        let d = e.differentiate(Var::X).value(x, t);
        prop_assert!((fd - d).abs() <= 1e-5 * (1.0 + d.abs()), "{src}: {d} vs {fd}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn marching_is_linear_in_the_data(
        p in prop::collection::vec(-1.0..1.0f64, 6),
        q in prop::collection::vec(-1.0..1.0f64, 6),
        alpha in -2.0..2.0f64,
    ) {
        let base = coupled();
        let spec = GridSpec::new(40, 1.0 / 120.0, base.horizon);
        let solve = |a: &[f64], b: &[f64]| {
            let s = base.clone().with_phi(vec![table(a.to_vec()), table(b.to_vec())]).unwrap();
            solve_marching(&s, spec).unwrap()
        };
        let u = solve(&p[..3], &p[3..]);
        let v = solve(&q[..3], &q[3..]);
        let mix: Vec<f64> = p.iter().zip(&q).map(|(a, b)| alpha * a + b).collect();
        let w = solve(&mix[..3], &mix[3..]);
        for ((x, y), z) in u.values().iter().zip(v.values()).zip(w.values()) {
            prop_assert!((alpha * x + y - z).abs() < 1e-10);
        }
    }

    #[test]
    fn pure_transport_never_exceeds_the_data(p in prop::collection::vec(-1.0..1.0f64, 8)) {
        let s = Scenario::from_strings(1, 2.0, &["1+0.5*sin(t)", "-0.7"], None, None, None, None,
            vec![table(p[..4].to_vec()), table(p[4..].to_vec())]).unwrap();
        let u = solve_marching(&s, GridSpec::new(50, 0.01, s.horizon)).unwrap();
        let bound = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(u.values().iter().all(|v| v.abs() <= bound + 1e-12));
    }
}
