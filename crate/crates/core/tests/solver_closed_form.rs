//! Decoupled problems with closed-form solutions.

use std::f64::consts::PI;
use std::path::PathBuf;

use smoothlab_core::scenario::{Interp, Sampler, Scenario};
use smoothlab_core::solver::{solve_marching, solve_marching_with, FootInterp, GridSpec};

fn bump(x: f64) -> f64 {
    (PI * x).sin().powi(2)
}

fn decoupled(lambda: f64) -> Scenario {
    let phi = |e: &str| Sampler::Expr(smoothlab_core::expr::Expr::parse(e).unwrap());
    Scenario::from_strings(
        1,
        1.5,
        &["1", "-1"],
        Some(&[&[&lambda.to_string(), "0"], &["0", "0"]]),
        None,
        None,
        None,
        vec![phi("sin(3.141592653589793*x)^2"), phi("sin(3.141592653589793*x)^2")],
    )
    .unwrap()
}

fn exact(lambda: f64) -> impl Fn(usize, f64, f64) -> f64 {
    move |j, x, t| match j {
        0 if x > t => (-lambda * t).exp() * bump(x - t),
        1 if x + t < 1.0 => bump(x + t),
        _ => 0.0,
    }
}

fn errors(s: &Scenario, lambda: f64, interp: FootInterp) -> Vec<f64> {
    [100usize, 200, 400]
        .iter()
        .map(|&nx| {
            let h = 1.0 / nx as f64;
            let u = solve_marching_with(s, GridSpec::new(nx, 0.8 * h, s.horizon), interp).unwrap();
            u.sup_error(exact(lambda))
        })
        .collect()
}

fn assert_first_order(e: &[f64]) {
    for (k, w) in e.windows(2).enumerate() {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.0, "order {order:.3} between levels {k} and {} ({e:?})", k + 1);
    }
    // L∞ error ≤ C h with one constant across the three grids
    let c = e[0] * 100.0;
    assert!(e.iter().zip([100.0, 200.0, 400.0]).all(|(err, n)| *err <= c / n * 1.0001));
}

#[test]
fn pure_transport_converges_at_first_order() {
    let e = errors(&decoupled(0.0), 0.0, FootInterp::Cubic);
    println!("transport errors {e:?}");
    assert_first_order(&e);
}

#[test]
fn integrating_factor_converges_at_first_order() {
    let e = errors(&decoupled(0.7), 0.7, FootInterp::Cubic);
    println!("integrating-factor errors {e:?}");
    assert_first_order(&e);
}

/// Linear feet smear the curvature jump carried from the corner; the order
/// approaches 1 from below on these grids.
#[test]
fn linear_feet_approach_first_order_from_below() {
    let e = errors(&decoupled(0.7), 0.7, FootInterp::Linear);
    let orders: Vec<f64> = e.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    assert!(orders[0] > 0.9 && orders[1] > orders[0] && orders[1] < 1.0, "{orders:?}");
    assert!(e[2] < 5e-3);
}

#[test]
fn jump_amplitude_follows_the_integrating_factor() {
    let lambda = 0.9;
    let mut s = decoupled(lambda);
    s = s
        .with_phi(vec![
            Sampler::Table {
                interp: Interp::Constant,
                x: vec![0.0, 0.3],
                values: vec![0.0, 1.0],
            },
            Sampler::zero(),
        ])
        .unwrap()
        .with_horizon(0.6)
        .unwrap();
    let nx = 400;
    let h = 1.0 / nx as f64;
    let u = solve_marching(&s, GridSpec::new(nx, h, s.horizon)).unwrap();
    for l in (40..u.levels).step_by(40) {
        let t = u.t(l);
        let front = 0.3 + t;
        let jump = u.interp_x(0, l, front + 0.05) - u.interp_x(0, l, front - 0.05);
        let expected = (-lambda * t).exp();
        assert!((jump - expected).abs() <= 0.05 * expected, "t = {t}: {jump} vs {expected}");
    }
}

#[test]
fn manufactured_file_matches_its_exact_solution() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/manufactured.json");
    let s = Scenario::load(path).unwrap();
    let ex = s.exact.clone().unwrap();
    let e: Vec<f64> = [100usize, 200, 400]
        .iter()
        .map(|&nx| {
            let h = 1.0 / nx as f64;
            let u = solve_marching(&s, GridSpec::new(nx, 0.8 * h, s.horizon)).unwrap();
            u.sup_error(|j, x, t| ex[j].value(x, t))
        })
        .collect();
    println!("manufactured errors {e:?}");
    assert_first_order(&e);
}
