//! Mollified-data sequences and the growth envelope fitted to them.

use std::path::PathBuf;

use smoothlab_core::scenario::{Interp, Sampler, Scenario};
use smoothlab_core::solver::{fit_growth, generalized_solution, GridSpec, MollifierConfig};

fn load(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"));
    Scenario::load(path).unwrap()
}

#[test]
fn step_data_sequence_is_monotone_cauchy_at_n800() {
    let s = load("benchmark");
    let h = 1.0 / 800.0;
    let cfg = MollifierConfig::default();
    assert_eq!(cfg.levels, 6);
    let (rep, _) = generalized_solution(&s, &cfg, GridSpec::new(800, h, s.horizon), 1e-3, false).unwrap();
    let d = rep.distances();
    println!("distances {d:?}\n{:?}", rep.diagnostic);
    assert!(rep.monotone && rep.converged, "{d:?}");
    // the resolved levels shrink roughly like sqrt(eps)
    assert!(d[1] / d[0] < 0.8 && d[2] / d[1] < 0.8);
    let data: Vec<f64> = rep.levels.iter().map(|l| l.data_distance).collect();
    for w in data.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 2f64.sqrt()).abs() < 0.1, "data distance ratio {ratio}");
    }
}

#[test]
fn compactly_supported_smooth_data_is_nearly_stationary() {
    // (1 - s²)^4 bump on [0.3, 0.7], tabulated finely
    let x: Vec<f64> = (0..=4000).map(|i| i as f64 / 4000.0).collect();
    let values: Vec<f64> = x.iter().map(|&x| (1.0 - ((x - 0.5) / 0.2).powi(2)).max(0.0).powi(4)).collect();
    let phi = Sampler::Table { interp: Interp::Linear, x, values };
    let s = load("benchmark").with_phi(vec![phi.clone(), phi]).unwrap().with_horizon(3.0).unwrap();
    let h = 1.0 / 400.0;
    let (rep, _) = generalized_solution(&s, &MollifierConfig::default(), GridSpec::new(400, h, 3.0), 1e-4, false).unwrap();
    let d = rep.distances();
    println!("smooth distances {d:?}");
    // second-order kernel error: each level a quarter of the previous
    assert!(d[0] < 1e-2 && d[1] / d[0] < 0.3 && d[2] / d[1] < 0.3, "{d:?}");
    assert!(rep.converged);
}

#[test]
fn one_envelope_bounds_every_level_and_the_halved_grid() {
    for name in ["benchmark", "variable", "coupled_var2"] {
        let s = load(name).with_horizon(6.0).unwrap();
        let h = 1.0 / 200.0;
        let spec = GridSpec::new(200, h / s.max_speed(), s.horizon);
        let cfg = MollifierConfig {
            levels: 4,
            ..Default::default()
        };
        let (coarse, _) = generalized_solution(&s, &cfg, spec, 1.0, false).unwrap();
        let all: Vec<(f64, f64)> = coarse.levels.iter().flat_map(|l| l.norm_ratios.iter().copied()).collect();
        let fit = fit_growth(&all, 1.0);
        for l in &coarse.levels {
            assert!(fit.worst(&l.norm_ratios) <= 1.0 + 1e-12);
        }
        let (fine, _) = generalized_solution(&s, &cfg, spec.halved(), 1.0, false).unwrap();
        let worst = fine.levels.iter().map(|l| fit.worst(&l.norm_ratios)).fold(0.0, f64::max);
        println!("{name}: M = {:.4}, omega = {:.4}, halved-grid worst ratio {worst:.4}", fit.m, fit.omega);
        assert!(worst <= 1.1, "{name}: {worst}");
    }
}
