//! `smoothlab` command-line driver.
//!
//! Exit codes: 0 pass, 1 numerical or validation failure, 2 usage or
//! schema error, 3 unmet precondition.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use smoothlab_core::characteristics::CharField;
use smoothlab_core::proofcheck::{run_suite, ProofcheckConfig};
use smoothlab_core::scenario::{validate_cass1, validate_l1, validate_l3, Cass1Config, SampleGrid, Scenario, ScenarioError};
use smoothlab_core::smoothing::{required_horizon, smoothing_report, smoothing_time, SmoothingConfig, SmoothingError};
use smoothlab_core::solver::{
    convergence_table, fit_growth, norm_ratio_history, solve_marching_with, solve_picard, FootInterp, GridSpec, PicardConfig,
};

#[derive(Parser, Debug)]
#[command(name = "smoothlab", version, about = "Hyperbolic systems with integral boundary conditions: solve, check smoothing, verify identities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the sign pattern, coefficient evaluation and structural condition.
    Validate(Common),
    /// Solve and write the grid solution plus its norm history.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = SolverKind::Marching)]
        solver: SolverKind,
    },
    /// Two-grid jump indicator and smoothed-by verdict.
    Smoothing(Common),
    /// Numerical verification of the operator identities.
    Proofcheck(Common),
    /// Refinement study with observed orders.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Comma-separated cell counts, at least three.
        #[arg(long, value_delimiter = ',', default_values_t = vec![50usize, 100, 200, 400])]
        grids: Vec<usize>,
        /// Fail unless every observed order reaches this value.
        #[arg(long)]
        min_order: Option<f64>,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Cells in x.
    #[arg(long, default_value_t = 200)]
    grid: usize,
    /// Time step, or `auto` for h / max|a|.
    #[arg(long, default_value = "auto")]
    dt: Step,
    /// Overrides the horizon of the scenario file.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
    /// NAME=VALUE; names: tol, d3_scale, samples, anchors, fd_step, threshold_factor, band_factor.
    #[arg(long = "tol-override", value_name = "NAME=VAL")]
    overrides: Vec<Override>,
    /// Interpolation at characteristic feet; convergence defaults to cubic.
    #[arg(long, value_enum)]
    interp: Option<InterpArg>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Step {
    Auto,
    Fixed(f64),
}

impl FromStr for Step {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(Step::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Step::Fixed(v)),
            _ => Err(format!("expected a positive number or `auto`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone)]
struct Override {
    name: String,
    value: f64,
}

impl FromStr for Override {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, value) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
        let value = value.trim().parse::<f64>().map_err(|e| format!("`{value}`: {e}"))?;
        Ok(Override {
            name: name.trim().to_string(),
            value,
        })
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverKind {
    Marching,
    Picard,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InterpArg {
    Linear,
    Cubic,
}

impl From<InterpArg> for FootInterp {
    fn from(a: InterpArg) -> Self {
        match a {
            InterpArg::Linear => FootInterp::Linear,
            InterpArg::Cubic => FootInterp::Cubic,
        }
    }
}

/// Error with an exit code attached.
#[derive(Debug)]
struct Coded {
    code: u8,
    message: String,
}

impl fmt::Display for Coded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Coded {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    Coded {
        code: 2,
        message: message.into(),
    }
    .into()
}

fn precondition(message: impl Into<String>) -> anyhow::Error {
    Coded {
        code: 3,
        message: message.into(),
    }
    .into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<Coded>() {
            return c.code;
        }
        if cause.downcast_ref::<ScenarioError>().is_some() {
            return 2;
        }
        if let Some(SmoothingError::HorizonTooShort { .. }) = cause.downcast_ref::<SmoothingError>() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let common = match &cli.command {
        Command::Validate(c) | Command::Smoothing(c) | Command::Proofcheck(c) => c,
        Command::Solve { common, .. } | Command::Convergence { common, .. } => common,
    };
    if let Some(k) = common.threads {
        if k == 0 {
            return Err(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global().context("configuring the thread pool")?;
    }
    if common.grid == 0 {
        return Err(usage("--grid must be positive"));
    }
    match cli.command {
        Command::Validate(c) => cmd_validate(&c),
        Command::Solve { common, solver } => cmd_solve(&common, solver),
        Command::Smoothing(c) => cmd_smoothing(&c),
        Command::Proofcheck(c) => cmd_proofcheck(&c),
        Command::Convergence { common, grids, min_order } => cmd_convergence(&common, &grids, min_order),
    }
}

fn load(c: &Common) -> Result<Scenario> {
    let s = Scenario::load(&c.scenario).with_context(|| format!("loading {}", c.scenario.display()))?;
    match c.horizon {
        Some(h) => s.with_horizon(h).context("--horizon"),
        None => Ok(s),
    }
}

fn grid_spec(c: &Common, s: &Scenario) -> GridSpec {
    let dt = match c.dt {
        Step::Auto => 1.0 / (c.grid as f64 * s.max_speed()),
        Step::Fixed(v) => v,
    };
    GridSpec::new(c.grid, dt, s.horizon)
}

fn out_dir(c: &Common) -> Result<&Path> {
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    Ok(&c.out)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn check_overrides(c: &Common, allowed: &[&str]) -> Result<()> {
    for o in &c.overrides {
        if !allowed.contains(&o.name.as_str()) {
            return Err(usage(format!("unknown override `{}` for this command; known: {}", o.name, allowed.join(", "))));
        }
    }
    Ok(())
}

fn override_value(c: &Common, name: &str) -> Option<f64> {
    c.overrides.iter().rev().find(|o| o.name == name).map(|o| o.value)
}

#[derive(Serialize)]
struct ValidationReport {
    l1: smoothlab_core::scenario::L1Report,
    l3: smoothlab_core::scenario::L3Report,
    cass1: smoothlab_core::scenario::Cass1Report,
    pass: bool,
}

fn cmd_validate(c: &Common) -> Result<bool> {
    check_overrides(c, &[])?;
    let s = load(c)?;
    let grid = SampleGrid::default();
    let l1 = validate_l1(&s, grid, 1e-8)?;
    let l3 = validate_l3(&s, grid);
    let cass1 = validate_cass1(&s, &Cass1Config::default())?;

    let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
    println!("sign pattern (m = {} forward families): {}", s.m, mark(l1.pass));
    for (j, m) in l1.margins.iter().enumerate() {
        println!("  a[{j}]: min |a| = {m:.4e}");
    }
    for v in &l1.violations {
        println!("  a[{}] has the wrong sign at x = {:.4}, t = {:.4} (value {:.4e})", v.family, v.x, v.t, v.speed);
    }
    println!("coefficient evaluation ({} samples): {}", l3.evaluations, mark(l3.pass));
    for f in &l3.failures {
        println!("  {f}");
    }
    println!(
        "b_jk = beta_jk (a_k - a_j){}: {}",
        if cass1.used_supplied_beta { " with supplied beta" } else { "" },
        mark(cass1.pass)
    );
    for b in &cass1.betas {
        println!("  beta[{}][{}]: max |beta| = {:.4e}, Lipschitz estimate {:.4e}", b.j, b.k, b.max_abs, b.lipschitz);
    }
    for v in cass1.violations.iter().take(10) {
        println!("  ({}, {}) at x = {:.4}, t = {:.4}: {}", v.j, v.k, v.x, v.t, v.reason);
    }
    let pass = l1.pass && l3.pass && cass1.pass;
    write_json(&out_dir(c)?.join("validate.json"), &ValidationReport { l1, l3, cass1, pass })?;
    Ok(pass)
}

#[derive(Serialize)]
struct SolveSummary {
    solver: String,
    nx: usize,
    dt: f64,
    levels: usize,
    horizon: f64,
    growth: smoothlab_core::solver::GrowthFit,
    #[serde(skip_serializing_if = "Option::is_none")]
    picard: Option<smoothlab_core::solver::PicardReport>,
}

fn cmd_solve(c: &Common, solver: SolverKind) -> Result<bool> {
    check_overrides(c, &[])?;
    let s = load(c)?;
    let spec = grid_spec(c, &s);
    let interp = c.interp.map_or(FootInterp::Linear, Into::into);
    let (u, picard) = match solver {
        SolverKind::Marching => (solve_marching_with(&s, spec, interp)?, None),
        SolverKind::Picard => {
            let (u, rep) = solve_picard(&s, spec, &PicardConfig::default())?;
            (u, Some(rep))
        }
    };
    let dir = out_dir(c)?;
    u.write_csv(dir.join("solution.csv"))?;
    u.write_binary(dir.join("solution.bin"))?;
    u.write_norms(dir.join("norms.csv"))?;
    let growth = fit_growth(&norm_ratio_history(&u), 1.0);
    let summary = SolveSummary {
        solver: format!("{solver:?}").to_lowercase(),
        nx: u.nx,
        dt: u.dt,
        levels: u.levels,
        horizon: u.t(u.levels - 1),
        growth,
        picard,
    };
    write_json(&dir.join("solve.json"), &summary)?;
    println!(
        "{} solve: N = {}, dt = {:.4e}, {} levels; norm ratio <= {:.4} exp({:.4} t); wrote {}",
        summary.solver,
        u.nx,
        u.dt,
        u.levels,
        growth.m,
        growth.omega,
        dir.display()
    );
    Ok(true)
}

fn cmd_smoothing(c: &Common) -> Result<bool> {
    check_overrides(c, &["threshold_factor", "band_factor"])?;
    let s = load(c)?;
    let mut cfg = SmoothingConfig::default();
    if let Some(v) = override_value(c, "threshold_factor") {
        cfg.threshold_factor = v;
    }
    if let Some(v) = override_value(c, "band_factor") {
        cfg.band_factor = v;
    }
    if let Some(i) = c.interp {
        cfg.interp = i.into();
    }
    let d = smoothing_time(&CharField::new(&s))?;
    let need = required_horizon(d, &cfg);
    if s.horizon < need - 1e-12 {
        return Err(precondition(format!(
            "horizon {} is shorter than 4d + {} = {need} (d = {d}); rerun with --horizon {need}",
            s.horizon, cfg.margin
        )));
    }
    let rep = smoothing_report(&s, grid_spec(c, &s), &cfg)?;
    let dir = out_dir(c)?;
    write_json(&dir.join("smoothing.json"), &rep)?;
    fs::write(dir.join("indicator.csv"), rep.series_csv())?;
    println!("d = {:.6}, threshold = {:.3e}, {}", rep.d, rep.threshold, rep.verdict_label());
    for w in &rep.windows {
        println!("  max indicator on [{:.3}, {:.3}]: {:.3e}", w.start, rep.horizon, w.max_indicator);
    }
    println!(
        "  growth envelope {:.4} exp({:.4} t); fine grid worst ratio {:.4}",
        rep.bound.m, rep.bound.omega, rep.fine_bound_worst
    );
    println!("{} (band d + {:.4})", if rep.pass { "PASS" } else { "FAIL" }, rep.band);
    Ok(rep.pass)
}

fn cmd_proofcheck(c: &Common) -> Result<bool> {
    check_overrides(c, &["tol", "d3_scale", "samples", "anchors", "fd_step"])?;
    let s = load(c)?;
    let mut cfg = ProofcheckConfig {
        seed: c.seed,
        ..Default::default()
    };
    if let Some(v) = override_value(c, "tol") {
        cfg.tol = Some(v);
    }
    if let Some(v) = override_value(c, "d3_scale") {
        cfg.d3_scale = v;
    }
    if let Some(v) = override_value(c, "fd_step") {
        cfg.fd_step = v;
    }
    for (name, slot) in [("samples", &mut cfg.samples), ("anchors", &mut cfg.anchors)] {
        if let Some(v) = override_value(c, name) {
            if v < 1.0 || v.fract() != 0.0 {
                return Err(usage(format!("{name} must be a positive integer")));
            }
            *slot = v as usize;
        }
    }
    let rep = run_suite(&s, &cfg).map_err(|e| anyhow!(e))?;
    let dir = out_dir(c)?;
    let path = dir.join("proofcheck.json");
    write_json(&path, &rep)?;
    println!("{:<12} {:>7} {:>7} {:>10} {:>10} {:>8}  result", "identity", "samples", "skipped", "max abs", "max rel", "tol");
    for r in &rep.reports {
        println!(
            "{:<12} {:>7} {:>7} {:>10.3e} {:>10.3e} {:>8.0e}  {}",
            r.name,
            r.samples,
            r.skipped,
            r.max_abs,
            r.max_rel,
            r.tol,
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    if !rep.pass {
        eprintln!("identity check failed; report in {}", path.display());
    }
    Ok(rep.pass)
}

fn cmd_convergence(c: &Common, grids: &[usize], min_order: Option<f64>) -> Result<bool> {
    check_overrides(c, &[])?;
    if grids.len() < 3 {
        return Err(usage(format!("--grids needs at least 3 entries, got {}", grids.len())));
    }
    if grids.windows(2).any(|w| w[1] <= w[0]) {
        return Err(usage(format!("--grids must be strictly increasing, got {grids:?}")));
    }
    let s = load(c)?;
    // a fixed step on the first grid fixes the Courant number for all
    let courant = match c.dt {
        Step::Auto => 0.8,
        Step::Fixed(dt) => dt * grids[0] as f64 * s.max_speed(),
    };
    let interp = c.interp.map_or(FootInterp::Cubic, Into::into);
    let table = convergence_table(&s, grids, courant, interp)?;
    let dir = out_dir(c)?;
    fs::write(dir.join("convergence.csv"), table.to_csv())?;
    write_json(&dir.join("convergence.json"), &table)?;
    println!("reference: {}, feet: {:?}, Courant {courant:.3}", table.reference, table.interp);
    println!("{:>6} {:>12} {:>12} {:>7}", "N", "dt", "error", "order");
    for r in &table.rows {
        let order = r.order.map_or_else(|| "-".to_string(), |o| format!("{o:.3}"));
        println!("{:>6} {:>12.4e} {:>12.4e} {:>7}", r.nx, r.dt, r.error, order);
    }
    Ok(match (min_order, table.min_order()) {
        (Some(want), Some(got)) => got >= want,
        (Some(_), None) => false,
        (None, _) => true,
    })
}
