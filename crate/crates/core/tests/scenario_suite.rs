//! The scenario files shipped in `scenarios/` load, validate and smooth.

use std::path::PathBuf;

use smoothlab_core::characteristics::CharField;
use smoothlab_core::scenario::{validate_cass1, validate_l1, validate_l3, Cass1Config, SampleGrid, Scenario};
use smoothlab_core::smoothing::{required_horizon, smoothing_report, smoothing_time, SmoothingConfig};
use smoothlab_core::solver::GridSpec;

fn load(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"));
    Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

const ALL: &[&str] = &[
    "benchmark",
    "smooth_benchmark",
    "constant",
    "variable",
    "coupled_var1",
    "coupled_var2",
    "coupled_var3",
    "degenerate_speeds",
    "l1_violation",
    "manufactured",
    "manufactured_coupled",
];

const COUPLED: &[&str] = &["variable", "coupled_var1", "coupled_var2", "coupled_var3"];

#[test]
fn every_file_loads_and_smoke_evaluates() {
    for name in ALL {
        let s = load(name);
        assert!(validate_l3(&s, SampleGrid::default()).pass, "{name}");
    }
}

#[test]
fn only_the_negative_control_violates_the_sign_pattern() {
    for name in ALL {
        let rep = validate_l1(&load(name), SampleGrid::default(), 1e-8).unwrap();
        assert_eq!(rep.pass, *name != "l1_violation", "{name}: {:?}", rep.violations);
    }
}

#[test]
fn coupled_scenarios_satisfy_the_structural_condition() {
    for name in COUPLED.iter().chain(&["degenerate_speeds"]) {
        let rep = validate_cass1(&load(name), &Cass1Config::default()).unwrap();
        assert!(rep.pass, "{name}: {:?}", rep.violations);
    }
}

#[test]
fn coupled_variable_scenarios_smooth_within_the_band() {
    let cfg = SmoothingConfig::default();
    for name in COUPLED {
        let s = load(name);
        let d = smoothing_time(&CharField::new(&s)).unwrap();
        let s = s.with_horizon(required_horizon(d, &cfg)).unwrap();
        let h = 1.0 / 200.0;
        let rep = smoothing_report(&s, GridSpec::new(200, h / s.max_speed(), s.horizon), &cfg).unwrap();
        println!("{name}: d = {d:.4}, {}", rep.verdict_label());
        assert!(rep.pass, "{name}: d = {d}, verdict {:?}", rep.verdict);
    }
}
