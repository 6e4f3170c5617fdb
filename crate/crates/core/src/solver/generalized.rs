//! Generalized solutions as limits of solutions with mollified data.

use serde::Serialize;

use super::fit::norm_ratio_history;
use super::grid::{GridSolution, GridSpec};
use super::marching::solve_marching;
use super::mollify::mollify;
use super::SolverError;
use crate::scenario::{Sampler, Scenario};

/// Level `l` uses kernel width `eps0 / 2^l` and cutoff `delta0 / 2^l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MollifierConfig {
    pub levels: usize,
    pub eps0: f64,
    pub delta0: f64,
}

impl Default for MollifierConfig {
    fn default() -> Self {
        MollifierConfig {
            levels: 6,
            eps0: 0.05,
            delta0: 0.02,
        }
    }
}

impl MollifierConfig {
    pub fn eps(&self, l: usize) -> f64 {
        self.eps0 / 2f64.powi(l as i32)
    }

    pub fn delta(&self, l: usize) -> f64 {
        self.delta0 / 2f64.powi(l as i32)
    }

    /// Mollified initial data of level `l`.
    pub fn data(&self, s: &Scenario, l: usize) -> Vec<Sampler> {
        s.phi.iter().map(|p| mollify(p, self.eps(l), self.delta(l))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub level: usize,
    pub eps: f64,
    pub delta: f64,
    /// `max_j ‖φ_j^l - φ_j‖` on a fine grid.
    pub data_distance: f64,
    /// `max_t max_j ‖u^l(·,t) - u^{l-1}(·,t)‖`; absent for the first level.
    pub distance_to_previous: Option<f64>,
    /// `(t, max_j ‖u^l(·,t)‖ / max_j ‖φ^l‖)`.
    pub norm_ratios: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralizedReport {
    pub levels: Vec<LevelReport>,
    pub tol: f64,
    /// Successive distances never increase (up to 1e-14).
    pub monotone: bool,
    /// Monotone and the last distance is below `tol`.
    pub converged: bool,
    pub diagnostic: Option<String>,
}

impl GeneralizedReport {
    pub fn distances(&self) -> Vec<f64> {
        self.levels.iter().filter_map(|l| l.distance_to_previous).collect()
    }
}

/// Trapezoid L² distance of two samplers on a uniform grid of `cells` cells.
pub fn sampler_l2_distance(a: &Sampler, b: &Sampler, cells: usize) -> f64 {
    let h = 1.0 / cells as f64;
    let sq = |i: usize| {
        let x = i as f64 * h;
        let d = a.value(x) - b.value(x);
        d * d
    };
    let inner: f64 = (1..cells).map(sq).sum();
    (h * (inner + 0.5 * (sq(0) + sq(cells)))).sqrt()
}

const FINE_CELLS: usize = 1 << 14;

/// Solve with the data of every mollification level and measure how the
/// solutions approach each other. Returns the report and, if `keep`, the
/// solutions themselves (otherwise only the last one).
pub fn generalized_solution(
    s: &Scenario,
    cfg: &MollifierConfig,
    spec: GridSpec,
    tol: f64,
    keep: bool,
) -> Result<(GeneralizedReport, Vec<GridSolution>), SolverError> {
    if cfg.levels == 0 {
        return Err(SolverError::Invalid("at least one mollification level is required".into()));
    }
    let mut reports = Vec::with_capacity(cfg.levels);
    let mut kept = Vec::new();
    let mut prev: Option<GridSolution> = None;
    for l in 1..=cfg.levels {
        let data = cfg.data(s, l);
        let data_distance = data
            .iter()
            .zip(&s.phi)
            .map(|(m, p)| sampler_l2_distance(m, p, FINE_CELLS))
            .fold(0.0, f64::max);
        let sl = s.clone().with_phi(data).map_err(|e| SolverError::Invalid(e.to_string()))?;
        let u = solve_marching(&sl, spec)?;
        let distance_to_previous = prev.as_ref().map(|p| u.l2_distance(p));
        reports.push(LevelReport {
            level: l,
            eps: cfg.eps(l),
            delta: cfg.delta(l),
            data_distance,
            distance_to_previous,
            norm_ratios: norm_ratio_history(&u),
        });
        if keep {
            kept.push(u.clone());
        }
        prev = Some(u);
    }
    if !keep {
        kept.extend(prev);
    }
    let dists: Vec<f64> = reports.iter().filter_map(|r| r.distance_to_previous).collect();
    let monotone = dists.windows(2).all(|w| w[1] <= w[0] + 1e-14);
    let last = dists.last().copied();
    let converged = monotone && last.is_some_and(|d| d < tol);
    let diagnostic = if !monotone {
        Some(format!(
            "successive distances are not monotone ({dists:?}); the grid (N = {}) may be too coarse for the finest mollifier width {:.3e}",
            spec.nx,
            cfg.eps(cfg.levels)
        ))
    } else if !converged {
        Some(format!("last successive distance {:?} is not below {tol:.1e}", last))
    } else if cfg.eps(cfg.levels) < spec.h() {
        // the discrete data of such levels only differ at a node or two
        let first = (1..=cfg.levels).find(|&l| cfg.eps(l) < spec.h()).unwrap_or(cfg.levels);
        Some(format!(
            "mollifier widths from level {first} on are below the grid spacing {:.3e}; the distances there reflect the grid, not the continuum limit",
            spec.h()
        ))
    } else {
        None
    };
    Ok((
        GeneralizedReport {
            levels: reports,
            tol,
            monotone,
            converged,
            diagnostic,
        },
        kept,
    ))
}
