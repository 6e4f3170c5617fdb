//! Grid solvers against a manufactured solution that exercises every term
//! of the system: variable speed, coupling, Volterra, forcing and the
//! integral boundary condition with extra boundary data.

use smoothlab_core::expr::Expr;
use smoothlab_core::scenario::{Sampler, Scenario};
use smoothlab_core::solver::{solve_marching, solve_marching_with, solve_picard, FootInterp, GridSpec, PicardConfig};

const U0: &str = "cos(t)*(1+x^2)";
const U1: &str = "exp(-t)*(2-x)";

fn manufactured(horizon: f64) -> Scenario {
    // forcing = u_t + a u_x + b u + ∫_0^x g u, worked out by hand
    let f0 = "-sin(t)*(1+x^2) + (1+0.2*x)*2*x*cos(t) + 0.1*cos(t)*(1+x^2) + 0.3*exp(-t)*(2-x) + 0.5*exp(-t)*(2*x - x^2/2)";
    let f1 = "-exp(-t)*(2-x) + exp(-t) - 0.2*cos(t)*(1+x^2) + 0.2*cos(t)*(x + x^3/3)";
    let phi = |e: &str| Sampler::Expr(Expr::parse(e).unwrap());
    Scenario::from_strings(
        1,
        horizon,
        &["1+0.2*x", "-1"],
        Some(&[&["0.1", "0.3"], &["-0.2", "0"]]),
        Some(&[&["0", "0.5"], &["0.2", "0"]]),
        Some(&[&["0", "0.4"], &["0.3", "0"]]),
        Some(&[f0, f1]),
        vec![phi("1+x^2"), phi("2-x")],
    )
    .unwrap()
    .with_boundary_data(vec![
        Expr::parse("cos(t) - 0.6*exp(-t)").unwrap(),
        Expr::parse("exp(-t) - 0.4*cos(t)").unwrap(),
    ])
    .unwrap()
}

fn exact(j: usize, x: f64, t: f64) -> f64 {
    Expr::parse(if j == 0 { U0 } else { U1 }).unwrap().value(x, t)
}

fn errors(interp: FootInterp) -> Vec<f64> {
    let s = manufactured(1.0);
    [25, 50, 100]
        .iter()
        .map(|&nx| {
            let h = 1.0 / nx as f64;
            solve_marching_with(&s, GridSpec::new(nx, 0.8 * h, 1.0), interp).unwrap().sup_error(exact)
        })
        .collect()
}

#[test]
fn linear_feet_converge_at_first_order() {
    let errs = errors(FootInterp::Linear);
    for w in errs.windows(2) {
        assert!(w[0] / w[1] > 1.8, "{errs:?}");
    }
}

#[test]
fn cubic_feet_converge_at_second_order() {
    let errs = errors(FootInterp::Cubic);
    assert!(errs[2] < 1e-4, "{errs:?}");
    for w in errs.windows(2) {
        assert!(w[0] / w[1] > 3.5, "{errs:?}");
    }
}

#[test]
fn picard_matches_the_manufactured_solution() {
    let s = manufactured(0.5);
    let nx = 40;
    let h = 1.0 / nx as f64;
    let (u, rep) = solve_picard(&s, GridSpec::new(nx, 0.8 * h, 0.5), &PicardConfig::default()).unwrap();
    let err = u.sup_error(exact);
    assert!(err < 5e-3, "{err} {rep:?}");
    assert!(rep.windows.iter().all(|w| w.change < 1e-10));
}

#[test]
fn picard_and_marching_agree_as_the_grid_refines() {
    let s = manufactured(0.5);
    let gap = |nx: usize| {
        let h = 1.0 / nx as f64;
        let spec = GridSpec::new(nx, 0.8 * h, 0.5);
        let a = solve_marching(&s, spec).unwrap();
        let (b, _) = solve_picard(&s, spec, &PicardConfig::default()).unwrap();
        let gap = a.sup_distance(&b);
        assert!(gap <= 10.0 * a.sup_error(exact), "{nx}: {gap}");
        gap
    };
    let (g1, g2) = (gap(80), gap(160));
    assert!(g1 / g2 > 1.6, "{g1} {g2}");
}


