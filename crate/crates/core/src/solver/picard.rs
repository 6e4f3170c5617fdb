//! Picard iteration on the integral representation, window by window.
//!
//! Inside a window `[t_β, t_γ]` every node is represented relative to the
//! window: the characteristic is followed back either to the window bottom,
//! where the already computed level is data, or to the inflow boundary,
//! where the boundary condition is evaluated on the current iterate. The
//! coupling and Volterra terms are integrated along that segment with the
//! iterate interpolated bilinearly. Characteristic geometry does not change
//! between iterations, so it is computed once per window.

use rayon::prelude::*;
use serde::Serialize;

use super::grid::{lerp_nodes, GridSolution, GridSpec};
use super::SolverError;
use crate::characteristics::CharField;
use crate::quadrature::QuadratureRule;
use crate::scenario::{DomainWindow, SampleGrid, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub struct PicardConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Levels per window; computed from the contraction budget when None.
    pub window_levels: Option<usize>,
    /// Rule applied on each x-cell crossed by a segment.
    pub rule: QuadratureRule,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            max_iter: 200,
            tol: 1e-10,
            window_levels: None,
            rule: QuadratureRule::gauss_legendre(2, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowReport {
    pub beta: f64,
    pub gamma: f64,
    pub iterations: usize,
    pub change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardReport {
    /// Lipschitz bound per unit window height used for the default height.
    pub lambda: f64,
    pub window_height: f64,
    pub window_levels: usize,
    pub windows: Vec<WindowReport>,
}

/// Start of a node's segment.
#[derive(Debug, Clone, Copy)]
enum Start {
    /// Window bottom at abscissa `x`.
    Data { x: f64 },
    /// Inflow boundary at time `tau`.
    Lateral { tau: f64 },
}

/// Precomputed geometry of one unknown node.
#[derive(Debug, Clone)]
struct Segment {
    start: Start,
    c: f64,
    /// Quadrature nodes `(ξ, ω, w·d_j)` along the segment.
    quad: Vec<(f64, f64, f64)>,
    /// Off-diagonal `b_jk(ξ, ω)` at the quadrature nodes, `n` per node.
    b: Vec<f64>,
    forcing: f64,
}

/// Maxima used by the contraction budget.
fn lambda_bound(s: &Scenario, chars: &CharField<'_>) -> (f64, f64) {
    let grid = SampleGrid::default();
    let n = s.n as f64;
    let amax = s.max_speed();
    let mut amin = f64::INFINITY;
    for (x, t) in grid.points(s.horizon) {
        for a in &s.a {
            amin = amin.min(a.value(x, t).abs());
        }
    }
    let bdiag = (0..s.n)
        .map(|j| {
            let e = &s.b[j][j];
            if e.is_zero() {
                0.0
            } else {
                grid.points(s.horizon).map(|(x, t)| e.value(x, t).abs()).fold(0.0, f64::max)
            }
        })
        .fold(0.0, f64::max);
    let traversal = min_traversal(s, chars);
    let cmax = (bdiag / amin.max(1e-300)).exp();
    let dmax = cmax / amin.max(1e-300);
    let rmax = s.max_abs_matrix(&s.r, false);
    let bmax = s.max_abs_matrix(&s.b, true);
    let gmax = s.max_abs_matrix(&s.g, false);
    let lambda = amax * (n * cmax * rmax + n * dmax * (bmax + gmax));
    (lambda, traversal)
}

/// Shortest time any family needs to cross [0, 1], starting at t = 0.
fn min_traversal(s: &Scenario, chars: &CharField<'_>) -> f64 {
    (0..s.n)
        .filter_map(|j| {
            let xb = s.inflow_boundary(j);
            chars.trace(j, xb, 0.0, 1.0 - xb).ok().map(|w| w.abs())
        })
        .fold(f64::INFINITY, f64::min)
}

/// Chain windows over [0, T]; the bottom level of the first window is the
/// initial data.
pub fn solve_picard(s: &Scenario, spec: GridSpec, cfg: &PicardConfig) -> Result<(GridSolution, PicardReport), SolverError> {
    let chars = CharField::new(s);
    let (lambda, traversal) = lambda_bound(s, &chars);
    let height = if lambda > 0.0 { (0.25 / lambda).min(traversal) } else { traversal };
    let wl = cfg
        .window_levels
        .unwrap_or_else(|| ((height / spec.dt + 1e-9).floor() as usize).max(1));
    let levels = spec.levels();
    let mut u = GridSolution::zeros(s.n, spec.nx, levels, spec.dt);
    for j in 0..s.n {
        let xs: Vec<f64> = (0..=spec.nx).map(|i| u.x(i)).collect();
        for (v, x) in u.level_mut(j, 0).iter_mut().zip(xs) {
            *v = s.phi[j].value(x);
        }
    }
    if !u.all_finite() {
        return Err(SolverError::NonFinite { level: 0, t: 0.0 });
    }
    let mut windows = Vec::new();
    let mut l0 = 0;
    while l0 + 1 < levels {
        let l1 = (l0 + wl).min(levels - 1);
        // initial guess: the bottom level held constant in time
        for j in 0..s.n {
            let bottom = u.level(j, l0).to_vec();
            for l in l0 + 1..=l1 {
                u.level_mut(j, l).copy_from_slice(&bottom);
            }
        }
        let window = DomainWindow::new(u.t(l0), u.t(l1)).map_err(|e| SolverError::Invalid(e.to_string()))?;
        windows.push(picard_window(s, &chars, window, &mut u, cfg)?);
        l0 = l1;
    }
    Ok((
        u,
        PicardReport {
            lambda,
            window_height: wl as f64 * spec.dt,
            window_levels: wl,
            windows,
        },
    ))
}

/// Iterate on the levels of `u` strictly inside `(β, γ]`. Levels up to β
/// are data; the levels in the window hold the initial guess on entry and
/// the fixed point on exit.
pub fn picard_window(
    s: &Scenario,
    chars: &CharField<'_>,
    window: DomainWindow,
    u: &mut GridSolution,
    cfg: &PicardConfig,
) -> Result<WindowReport, SolverError> {
    let n = s.n;
    let nx = u.nx;
    let dt = u.dt;
    let l0 = (window.beta / dt).round() as usize;
    let l1 = ((window.gamma / dt).round() as usize).min(u.levels - 1);
    if l1 <= l0 {
        return Ok(WindowReport {
            beta: window.beta,
            gamma: window.gamma,
            iterations: 0,
            change: 0.0,
        });
    }
    let h = u.h();
    let t0 = u.t(l0);

    // geometry, per (j, level, node)
    let nodes: Vec<(usize, usize, usize)> = (0..n)
        .flat_map(|j| (l0 + 1..=l1).flat_map(move |l| (0..=nx).map(move |i| (j, l, i))))
        .collect();
    let segments: Vec<Segment> = nodes
        .par_iter()
        .map(|&(j, l, i)| segment(s, chars, cfg, j, i as f64 * h, l as f64 * dt, t0, h))
        .collect::<Result<_, _>>()?;

    let has_g = s.g.iter().flatten().any(|g| !g.is_zero());
    let mut change = f64::INFINITY;
    let mut last_change = f64::INFINITY;
    let mut streak = 0;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let bvals = boundary_history(s, u, l0, l1, cfg);
        let cum = if has_g { Some(volterra_history(s, u, l0, l1)) } else { None };
        let field = &*u;
        let new: Vec<f64> = nodes
            .par_iter()
            .zip(&segments)
            .map(|(&(j, _, _), seg)| {
                let start = match seg.start {
                    Start::Data { x } => field.interp_x(j, l0, x),
                    Start::Lateral { tau } => {
                        let hj = s.boundary_data.as_ref().map_or(0.0, |hd| hd[j].value(0.0, tau));
                        interp_time(&bvals[j], t0, dt, tau) + hj
                    }
                };
                let mut acc = seg.c * start + seg.forcing;
                for (q, &(xi, om, wd)) in seg.quad.iter().enumerate() {
                    let mut src = 0.0;
                    for k in 0..n {
                        let b = seg.b[q * n + k];
                        if b != 0.0 {
                            src += b * bilinear(field, k, l0, l1, xi, om);
                        }
                    }
                    if let Some(cum) = &cum {
                        src += bilinear_levels(&cum[j], l0, dt, nx, xi, om);
                    }
                    acc -= wd * src;
                }
                acc
            })
            .collect();
        change = 0.0;
        for (&(j, l, i), v) in nodes.iter().zip(&new) {
            change = f64::max(change, (u.get(j, l, i) - v).abs());
            u.level_mut(j, l)[i] = *v;
        }
        if !change.is_finite() {
            return Err(SolverError::NonFinite { level: l0 + 1, t: u.t(l0 + 1) });
        }
        if change < cfg.tol {
            break;
        }
        if change > last_change {
            streak += 1;
            if streak >= 5 {
                return Err(SolverError::NonContraction {
                    beta: window.beta,
                    gamma: window.gamma,
                    streak,
                    suggested_height: 0.5 * window.height(),
                });
            }
        } else {
            streak = 0;
        }
        last_change = change;
    }
    if change >= cfg.tol {
        return Err(SolverError::NoConvergence {
            beta: window.beta,
            gamma: window.gamma,
            iterations,
            change,
            tol: cfg.tol,
        });
    }
    Ok(WindowReport {
        beta: window.beta,
        gamma: window.gamma,
        iterations,
        change,
    })
}

#[allow(clippy::too_many_arguments)]
fn segment(
    s: &Scenario,
    chars: &CharField<'_>,
    cfg: &PicardConfig,
    j: usize,
    x: f64,
    t: f64,
    t0: f64,
    h: f64,
) -> Result<Segment, SolverError> {
    let n = s.n;
    let (c, stop, lateral) = chars.upstream_until(j, x, t, t0)?;
    let start = if lateral { Start::Lateral { tau: stop.omega } } else { Start::Data { x: stop.xi } };
    let a = &s.a[j];
    let mut quad = Vec::new();
    let mut b = Vec::new();
    let mut forcing = 0.0;
    let f = &s.f[j];
    for (xi, w) in cfg.rule.points_on(stop.xi, x, Some(h)) {
        let st = chars.state_on(&c, xi)?;
        let wd = w * st.c() / a.value(xi, st.omega);
        quad.push((xi, st.omega, wd));
        for k in 0..n {
            let e = &s.b[j][k];
            b.push(if k == j || e.is_zero() { 0.0 } else { e.value(xi, st.omega) });
        }
        if !f.is_zero() {
            forcing += wd * f.value(xi, st.omega);
        }
    }
    Ok(Segment {
        start,
        c: stop.c(),
        quad,
        b,
        forcing,
    })
}

/// `Σ_k ∫ r_jk u_k` on each level of the window, including the bottom.
fn boundary_history(s: &Scenario, u: &GridSolution, l0: usize, l1: usize, cfg: &PicardConfig) -> Vec<Vec<f64>> {
    let h = u.h();
    let pts = cfg.rule.points_on(0.0, 1.0, Some(h));
    (0..s.n)
        .map(|j| {
            (l0..=l1)
                .map(|l| {
                    let t = u.t(l);
                    let mut total = 0.0;
                    for (k, r) in s.r[j].iter().enumerate() {
                        if !r.is_zero() {
                            let vals = u.level(k, l);
                            total += pts.iter().map(|&(y, w)| w * r.value(y, t) * lerp_nodes(vals, y)).sum::<f64>();
                        }
                    }
                    total
                })
                .collect()
        })
        .collect()
}

/// Cumulative `Σ_k ∫_0^{x_i} g_jk u_k` per level of the window (trapezoid).
fn volterra_history(s: &Scenario, u: &GridSolution, l0: usize, l1: usize) -> Vec<Vec<Vec<f64>>> {
    let h = u.h();
    (0..s.n)
        .map(|j| {
            (l0..=l1)
                .map(|l| {
                    let t = u.t(l);
                    let mut out = vec![0.0; u.nx + 1];
                    for (k, g) in s.g[j].iter().enumerate() {
                        if g.is_zero() {
                            continue;
                        }
                        let vals = u.level(k, l);
                        let mut acc = 0.0;
                        let mut prev = g.value(0.0, t) * vals[0];
                        for i in 1..=u.nx {
                            let cur = g.value(u.x(i), t) * vals[i];
                            acc += 0.5 * h * (prev + cur);
                            prev = cur;
                            out[i] += acc;
                        }
                    }
                    out
                })
                .collect()
        })
        .collect()
}

#[inline]
fn interp_time(vals: &[f64], t0: f64, dt: f64, tau: f64) -> f64 {
    let s = ((tau - t0) / dt).clamp(0.0, (vals.len() - 1) as f64);
    let l = (s.floor() as usize).min(vals.len().saturating_sub(2));
    if vals.len() == 1 {
        return vals[0];
    }
    let w = s - l as f64;
    vals[l] * (1.0 - w) + vals[l + 1] * w
}

#[inline]
fn bilinear(u: &GridSolution, k: usize, l0: usize, l1: usize, x: f64, t: f64) -> f64 {
    let s = (t / u.dt).clamp(l0 as f64, l1 as f64);
    let l = (s.floor() as usize).min(l1 - 1);
    let w = s - l as f64;
    u.interp_x(k, l, x) * (1.0 - w) + u.interp_x(k, l + 1, x) * w
}

#[inline]
fn bilinear_levels(levels: &[Vec<f64>], l0: usize, dt: f64, _nx: usize, x: f64, t: f64) -> f64 {
    let last = levels.len() - 1;
    let s = (t / dt - l0 as f64).clamp(0.0, last as f64);
    let l = (s.floor() as usize).min(last.saturating_sub(1));
    let w = s - l as f64;
    let a = lerp_nodes(&levels[l], x);
    if last == 0 {
        return a;
    }
    a * (1.0 - w) + lerp_nodes(&levels[l + 1], x) * w
}
