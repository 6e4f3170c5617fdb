//! When do the discontinuities of the initial data disappear?
//!
//! Jumps of incompatible data travel along the characteristics from the
//! corners (0,0) and (1,0) and from interior jump points. With an integral
//! boundary condition the boundary values are continuous in time, so once
//! these curves have left the domain nothing new is injected. This module
//! computes the smoothing time `d` (two successive traversals of [0, 1]),
//! measures discontinuities with a two-grid indicator and turns the
//! indicator series into a verdict.

use serde::Serialize;
use thiserror::Error;

use crate::characteristics::{CharField, TraceError};
use crate::scenario::Scenario;
use crate::solver::{fit_growth, norm_ratio_history, solve_marching_with, FootInterp, GridSolution, GridSpec, GrowthFit, SolverError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmoothingError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("horizon {horizon} is too short: the smoothing check needs at least {required} (4d + {margin} with d = {d})")]
    HorizonTooShort { horizon: f64, required: f64, d: f64, margin: f64 },
    #[error("grids are not nested: coarse N = {coarse_nx}, Δt = {coarse_dt}; fine N = {fine_nx}, Δt = {fine_dt}")]
    NotNested {
        coarse_nx: usize,
        coarse_dt: f64,
        fine_nx: usize,
        fine_dt: f64,
    },
}

/// Two traversals of [0, 1]: family k from the corner to the far side, then
/// family j from the inflow side at that time. Maximized over pairs of
/// forward families and, mirrored, over pairs of backward families.
pub fn smoothing_time(chars: &CharField<'_>) -> Result<f64, TraceError> {
    let s = chars.scenario();
    let mut d = 0.0f64;
    for (group, x0, x1) in [(0..s.m, 0.0, 1.0), (s.m..s.n, 1.0, 0.0)] {
        for k in group.clone() {
            let first = chars.trace(k, x0, 0.0, x1)?;
            for j in group.clone() {
                d = d.max(chars.trace(j, x0, first, x1)?);
            }
        }
    }
    Ok(d)
}

/// Characteristic of family `j` through a corner of the initial line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpCurve {
    pub family: usize,
    pub seed: (f64, f64),
    /// `(x, t)` nodes ordered by increasing x.
    pub polyline: Vec<(f64, f64)>,
    /// Time at which the curve leaves through the outflow boundary.
    pub exit_time: f64,
}

/// Forward families from (0, 0), backward families from (1, 0), traced
/// across the whole interval.
pub fn seed_jump_curves(chars: &CharField<'_>) -> Result<Vec<JumpCurve>, TraceError> {
    let s = chars.scenario();
    (0..s.n)
        .map(|j| {
            let x0 = s.inflow_boundary(j);
            let c = chars.characteristic(j, x0, 0.0)?;
            let polyline = c.polyline();
            let exit_time = c.at_boundary(1.0 - x0).omega;
            Ok(JumpCurve {
                family: j,
                seed: (x0, 0.0),
                polyline,
                exit_time,
            })
        })
        .collect()
}

/// Fine level matching coarse level `l`, if the grids are nested.
fn nested_level(coarse: &GridSolution, fine: &GridSolution, l: usize) -> Result<usize, SmoothingError> {
    let err = || SmoothingError::NotNested {
        coarse_nx: coarse.nx,
        coarse_dt: coarse.dt,
        fine_nx: fine.nx,
        fine_dt: fine.dt,
    };
    if fine.nx != 2 * coarse.nx || fine.n != coarse.n {
        return Err(err());
    }
    let ratio = coarse.dt / fine.dt;
    let r = ratio.round();
    if r < 1.0 || (ratio - r).abs() > 1e-9 * ratio {
        return Err(err());
    }
    let lf = l * r as usize;
    if lf >= fine.levels {
        return Err(err());
    }
    Ok(lf)
}

/// Largest coarse-cell difference of `u_j` at coarse level `l` over the cells
/// where refinement does not shrink the difference by 1.5 or more. A
/// resolved gradient halves under refinement; a jump does not.
pub fn jump_indicator(coarse: &GridSolution, fine: &GridSolution, j: usize, l: usize) -> Result<f64, SmoothingError> {
    let lf = nested_level(coarse, fine, l)?;
    Ok(indicator_at(coarse.level(j, l), fine.level(j, lf)))
}

fn indicator_at(c: &[f64], f: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..c.len() - 1 {
        let dc = (c[i + 1] - c[i]).abs();
        let df = (f[2 * i + 1] - f[2 * i]).abs().max((f[2 * i + 2] - f[2 * i + 1]).abs());
        if df > dc / 1.5 {
            best = best.max(dc);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothingConfig {
    /// Indicator threshold relative to the oscillation of the initial data.
    pub threshold_factor: f64,
    /// Extra horizon beyond 4d.
    pub margin: f64,
    /// Verdicts up to `d + band_factor·d` pass.
    pub band_factor: f64,
    /// Safety factor on the fitted growth constant M.
    pub fit_safety: f64,
    pub interp: FootInterp,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            threshold_factor: 1e-2,
            margin: 0.25,
            band_factor: 0.25,
            fit_safety: 1.0,
            interp: FootInterp::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndicatorSample {
    pub t: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowMax {
    pub start: f64,
    pub max_indicator: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothingReport {
    pub d: f64,
    pub horizon: f64,
    pub threshold: f64,
    pub coarse: (usize, f64),
    pub fine: (usize, f64),
    pub curves: Vec<JumpCurve>,
    pub series: Vec<IndicatorSample>,
    /// Largest indicator on `[w, horizon]` for w = d, 2d, 4d.
    pub windows: Vec<WindowMax>,
    /// Envelope fitted on the coarse norm history.
    pub bound: GrowthFit,
    /// Worst ratio of the fine-grid history to that envelope.
    pub fine_bound_worst: f64,
    /// First time after which every indicator stays below the threshold;
    /// None if that never happens within the horizon.
    pub verdict: Option<f64>,
    pub band: f64,
    pub pass: bool,
}

impl SmoothingReport {
    pub fn verdict_label(&self) -> String {
        match self.verdict {
            Some(t) => format!("smoothed-by {t}"),
            None => "not within horizon".into(),
        }
    }

    /// Largest indicator over samples with `t` in `[t0, t1]`.
    pub fn max_between(&self, t0: f64, t1: f64) -> f64 {
        self.series
            .iter()
            .filter(|s| s.t >= t0 && s.t <= t1)
            .flat_map(|s| s.values.iter().copied())
            .fold(0.0, f64::max)
    }

    /// Smallest indicator (max over components) over samples in `[t0, t1]`.
    pub fn min_between(&self, t0: f64, t1: f64) -> f64 {
        self.series
            .iter()
            .filter(|s| s.t >= t0 && s.t <= t1)
            .map(|s| s.values.iter().copied().fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV of `t, indicator_1, ..., indicator_n`.
    pub fn series_csv(&self) -> String {
        let n = self.series.first().map_or(0, |s| s.values.len());
        let mut out = String::from("t");
        for j in 1..=n {
            out.push_str(&format!(",indicator_{j}"));
        }
        out.push('\n');
        for s in &self.series {
            out.push_str(&format!("{}", s.t));
            for v in &s.values {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Required horizon for a report.
pub fn required_horizon(d: f64, cfg: &SmoothingConfig) -> f64 {
    4.0 * d + cfg.margin
}

/// Indicator series for a nested pair of solutions.
pub fn indicator_series(coarse: &GridSolution, fine: &GridSolution) -> Result<Vec<IndicatorSample>, SmoothingError> {
    (0..coarse.levels)
        .map(|l| {
            let values = (0..coarse.n)
                .map(|j| jump_indicator(coarse, fine, j, l))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(IndicatorSample { t: coarse.t(l), values })
        })
        .collect()
}

/// First sample time after which all indicators stay below `threshold`.
pub fn verdict(series: &[IndicatorSample], threshold: f64) -> Option<f64> {
    let last_bad = series.iter().rposition(|s| s.values.iter().any(|&v| v > threshold));
    match last_bad {
        None => series.first().map(|s| s.t),
        Some(k) => series.get(k + 1).map(|s| s.t),
    }
}

/// Solve on `spec` and on the halved grid, then assemble the report.
pub fn smoothing_report(s: &Scenario, spec: GridSpec, cfg: &SmoothingConfig) -> Result<SmoothingReport, SmoothingError> {
    let chars = CharField::new(s);
    let d = smoothing_time(&chars)?;
    let required = required_horizon(d, cfg);
    if spec.horizon < required - 1e-12 {
        return Err(SmoothingError::HorizonTooShort {
            horizon: spec.horizon,
            required,
            d,
            margin: cfg.margin,
        });
    }
    let curves = seed_jump_curves(&chars)?;
    let (coarse, fine) = rayon::join(
        || solve_marching_with(s, spec, cfg.interp),
        || solve_marching_with(s, spec.halved(), cfg.interp),
    );
    let (coarse, fine) = (coarse?, fine?);
    let series = indicator_series(&coarse, &fine)?;
    let threshold = cfg.threshold_factor * s.initial_oscillation();
    let verdict = verdict(&series, threshold);
    let windows = [d, 2.0 * d, 4.0 * d]
        .iter()
        .map(|&w| WindowMax {
            start: w,
            max_indicator: series
                .iter()
                .filter(|p| p.t >= w)
                .flat_map(|p| p.values.iter().copied())
                .fold(0.0, f64::max),
        })
        .collect();
    let bound = fit_growth(&norm_ratio_history(&coarse), cfg.fit_safety);
    let fine_bound_worst = bound.worst(&norm_ratio_history(&fine));
    let band = cfg.band_factor * d;
    let pass = verdict.is_some_and(|v| v <= d + band);
    Ok(SmoothingReport {
        d,
        horizon: spec.horizon,
        threshold,
        coarse: (coarse.nx, coarse.dt),
        fine: (fine.nx, fine.dt),
        curves,
        series,
        windows,
        bound,
        fine_bound_worst,
        verdict,
        band,
        pass,
    })
}
