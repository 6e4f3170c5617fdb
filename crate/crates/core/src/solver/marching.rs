//! Semi-Lagrangian time marching along characteristics.
//!
//! Each new node `(x_i, t_{n+1})` is traced back one step. If the foot stays
//! inside [0, 1] the node gets the integrating-factor-weighted value at the
//! foot (interpolated on level n) plus the trapezoidal integral of
//! the coupling, Volterra and forcing terms along the step. If the
//! characteristic enters through the inflow boundary within the step, the
//! boundary condition is imposed at the hit time, interpolated between the
//! boundary values at `t_n` and `t_{n+1}`, and the remaining piece of the
//! step is integrated the same way. A Heun predictor-corrector handles the
//! dependence of the sources and of the integral boundary condition on the
//! new level.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{cubic_nodes, lerp_nodes, GridSolution, GridSpec};
use super::SolverError;
use crate::characteristics::{CharField, TraceError};
use crate::expr::{Expr, Var};
use crate::quadrature::gauss_legendre_nodes;
use crate::scenario::Scenario;

/// Interpolation of the previous level at characteristic feet.
///
/// Linear is monotone and never overshoots at jumps, so it is the default;
/// it loses one order at fixed Courant number (first order overall). Cubic
/// gives second order on smooth data but rings at discontinuities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FootInterp {
    #[default]
    Linear,
    Cubic,
}

impl FootInterp {
    #[inline]
    fn eval(self, vals: &[f64], x: f64) -> f64 {
        match self {
            FootInterp::Linear => lerp_nodes(vals, x),
            FootInterp::Cubic => cubic_nodes(vals, x),
        }
    }
}

/// Where the backward step from a node lands.
#[derive(Debug, Clone, Copy)]
enum Foot {
    /// Foot at abscissa `x` on the previous level; `c` is the integrating
    /// factor over the step.
    Interior { x: f64, c: f64 },
    /// Boundary hit at `t_n + theta·Δt`; `rest` is the time from the hit to
    /// the node.
    Boundary { theta: f64, c: f64, rest: f64 },
}

/// Nodal samples of an expression, cached when it does not depend on t.
struct NodeExpr<'a> {
    expr: &'a Expr,
    fixed: Option<Vec<f64>>,
    zero: bool,
}

impl<'a> NodeExpr<'a> {
    fn new(expr: &'a Expr, xs: &[f64]) -> Self {
        let zero = expr.is_zero();
        let fixed = (!zero && expr.is_independent_of(Var::T)).then(|| xs.iter().map(|&x| expr.value(x, 0.0)).collect());
        NodeExpr { expr, fixed, zero }
    }

    fn at(&self, xs: &[f64], t: f64) -> Cow<'_, [f64]> {
        match &self.fixed {
            Some(v) => Cow::Borrowed(v),
            None => Cow::Owned(xs.iter().map(|&x| self.expr.value(x, t)).collect()),
        }
    }
}

/// Everything that is evaluated on whole levels.
struct LevelOps<'a> {
    s: &'a Scenario,
    xs: Vec<f64>,
    h: f64,
    b: Vec<Vec<NodeExpr<'a>>>,
    g: Vec<Vec<NodeExpr<'a>>>,
    f: Vec<NodeExpr<'a>>,
    /// Hat-function weights of `∫_0^1 r_jk(η, t) · dη`, cached when r_jk is t-independent.
    r_fixed: Vec<Vec<Option<Vec<f64>>>>,
}

impl<'a> LevelOps<'a> {
    fn new(s: &'a Scenario, nx: usize) -> Self {
        let xs: Vec<f64> = (0..=nx).map(|i| i as f64 / nx as f64).collect();
        let mat = |m: &'a [Vec<Expr>]| m.iter().map(|row| row.iter().map(|e| NodeExpr::new(e, &xs)).collect()).collect();
        let b = mat(&s.b);
        let g = mat(&s.g);
        let f = s.f.iter().map(|e| NodeExpr::new(e, &xs)).collect();
        let r_fixed = s
            .r
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| (!e.is_zero() && e.is_independent_of(Var::T)).then(|| hat_weights(e, 0.0, nx)))
                    .collect()
            })
            .collect();
        LevelOps {
            s,
            xs,
            h: 1.0 / nx as f64,
            b,
            g,
            f,
            r_fixed,
        }
    }

    /// `Σ_k ∫_0^1 r_jk(η, t) u_k(η) dη + h_j(t)` for the piecewise-linear level `u`.
    fn boundary_values(&self, u: &[Vec<f64>], t: f64) -> Vec<f64> {
        let nx = self.xs.len() - 1;
        (0..self.s.n)
            .map(|j| {
                let mut total = self.s.boundary_data.as_ref().map_or(0.0, |h| h[j].value(0.0, t));
                for (k, r) in self.s.r[j].iter().enumerate() {
                    if r.is_zero() {
                        continue;
                    }
                    let w = match &self.r_fixed[j][k] {
                        Some(w) => Cow::Borrowed(w),
                        None => Cow::Owned(hat_weights(r, t, nx)),
                    };
                    total += w.iter().zip(&u[k]).map(|(a, b)| a * b).sum::<f64>();
                }
                total
            })
            .collect()
    }

    /// Source `f_j - Σ_{k≠j} b_jk u_k - Σ_k ∫_0^x g_jk u_k` at every node.
    fn sources(&self, u: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
        let n = self.s.n;
        let np = self.xs.len();
        (0..n)
            .map(|j| {
                let mut out = if self.f[j].zero { vec![0.0; np] } else { self.f[j].at(&self.xs, t).into_owned() };
                for k in 0..n {
                    if k != j && !self.b[j][k].zero {
                        let b = self.b[j][k].at(&self.xs, t);
                        for ((o, bv), uv) in out.iter_mut().zip(b.iter()).zip(&u[k]) {
                            *o -= bv * uv;
                        }
                    }
                    if !self.g[j][k].zero {
                        let g = self.g[j][k].at(&self.xs, t);
                        // cumulative trapezoid of g·u from 0
                        let mut acc = 0.0;
                        let mut prev = g[0] * u[k][0];
                        for i in 1..np {
                            let cur = g[i] * u[k][i];
                            acc += 0.5 * self.h * (prev + cur);
                            prev = cur;
                            out[i] -= acc;
                        }
                    }
                }
                out
            })
            .collect()
    }
}

/// Weights `w_i = ∫_0^1 r(η, t) ψ_i(η) dη` for the hat functions ψ_i of the grid.
fn hat_weights(r: &Expr, t: f64, nx: usize) -> Vec<f64> {
    let (nodes, weights) = gauss_legendre_nodes(4);
    let h = 1.0 / nx as f64;
    let mut w = vec![0.0; nx + 1];
    for i in 0..nx {
        let x0 = i as f64 * h;
        for (z, wt) in nodes.iter().zip(&weights) {
            let sigma = 0.5 * (z + 1.0);
            let v = 0.5 * h * wt * r.value(x0 + sigma * h, t);
            w[i] += v * (1.0 - sigma);
            w[i + 1] += v * sigma;
        }
    }
    w
}

/// Backward RK4 step in τ for `dξ/dτ = a_j`, carrying `∫ b_jj dτ`.
fn foot(s: &Scenario, chars: &CharField<'_>, j: usize, x: f64, t1: f64, dt: f64) -> Result<Foot, TraceError> {
    let a = &s.a[j];
    let b = &s.b[j][j];
    let bz = b.is_zero();
    let rhs = |xi: f64, tau: f64| (a.value(xi, tau), if bz { 0.0 } else { b.value(xi, tau) });
    let hs = -dt;
    let (k1x, k1b) = rhs(x, t1);
    let (k2x, k2b) = rhs(x + 0.5 * hs * k1x, t1 + 0.5 * hs);
    let (k3x, k3b) = rhs(x + 0.5 * hs * k2x, t1 + 0.5 * hs);
    let (k4x, k4b) = rhs(x + hs * k3x, t1 + hs);
    let xf = x + hs / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    let ib = hs / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
    let inside = if s.is_forward(j) { xf > 0.0 } else { xf < 1.0 };
    if inside {
        return Ok(Foot::Interior {
            x: xf.clamp(0.0, 1.0),
            c: ib.exp(),
        });
    }
    let xb = s.inflow_boundary(j);
    let st = chars.state(j, x, t1, xb)?;
    let tau = st.omega.clamp(t1 - dt, t1);
    Ok(Foot::Boundary {
        theta: (tau - (t1 - dt)) / dt,
        c: st.c(),
        rest: t1 - tau,
    })
}

fn feet(s: &Scenario, chars: &CharField<'_>, xs: &[f64], t1: f64, dt: f64) -> Result<Vec<Vec<Foot>>, TraceError> {
    (0..s.n)
        .into_par_iter()
        .map(|j| xs.iter().map(|&x| foot(s, chars, j, x, t1, dt)).collect())
        .collect()
}

/// March from the initial data to the horizon of `spec` with linear foot
/// interpolation.
pub fn solve_marching(s: &Scenario, spec: GridSpec) -> Result<GridSolution, SolverError> {
    solve_marching_with(s, spec, FootInterp::Linear)
}

pub fn solve_marching_with(s: &Scenario, spec: GridSpec, interp: FootInterp) -> Result<GridSolution, SolverError> {
    let n = s.n;
    let nx = spec.nx;
    let dt = spec.dt;
    let levels = spec.levels();
    let ops = LevelOps::new(s, nx);
    let chars = CharField::new(s);
    let mut sol = GridSolution::zeros(n, nx, levels, dt);

    let mut u: Vec<Vec<f64>> = (0..n).map(|j| ops.xs.iter().map(|&x| s.phi[j].value(x)).collect()).collect();
    for j in 0..n {
        sol.level_mut(j, 0).copy_from_slice(&u[j]);
    }
    if !sol.level(0, 0).iter().chain((1..n).flat_map(|j| sol.level(j, 0).iter())).all(|v| v.is_finite()) {
        return Err(SolverError::NonFinite { level: 0, t: 0.0 });
    }

    let autonomous = (0..n).all(|j| s.a[j].is_independent_of(Var::T) && s.b[j][j].is_independent_of(Var::T));
    let fixed_feet = if autonomous { Some(feet(s, &chars, &ops.xs, dt, dt)?) } else { None };

    let mut bnd = ops.boundary_values(&u, 0.0);
    let mut bnd_prev: Option<Vec<f64>> = None;
    let mut src = ops.sources(&u, 0.0);

    for l in 1..levels {
        let t1 = l as f64 * dt;
        let level_feet = match &fixed_feet {
            Some(_) => None,
            None => Some(feet(s, &chars, &ops.xs, t1, dt)?),
        };
        let ft = fixed_feet.as_ref().or(level_feet.as_ref()).unwrap();

        // predictor: explicit Euler for the sources, extrapolated boundary values
        let bnd_pred: Vec<f64> = match &bnd_prev {
            Some(p) => bnd.iter().zip(p).map(|(a, b)| 2.0 * a - b).collect(),
            None => bnd.clone(),
        };
        let pred: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let xb_idx = if s.is_forward(j) { 0 } else { nx };
                ft[j]
                    .iter()
                    .map(|f| match *f {
                        Foot::Interior { x, c } => c * (interp.eval(&u[j], x) + dt * interp.eval(&src[j], x)),
                        Foot::Boundary { theta, c, rest } => {
                            let ub = bnd[j] + theta * (bnd_pred[j] - bnd[j]);
                            c * (ub + rest * src[j][xb_idx])
                        }
                    })
                    .collect()
            })
            .collect();

        // corrector: trapezoid with sources and boundary values of the prediction
        let src_new = ops.sources(&pred, t1);
        let bnd_new = ops.boundary_values(&pred, t1);
        let mut next: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let xb_idx = if s.is_forward(j) { 0 } else { nx };
                ft[j]
                    .iter()
                    .enumerate()
                    .map(|(i, f)| match *f {
                        Foot::Interior { x, c } => {
                            c * interp.eval(&u[j], x) + 0.5 * dt * (c * interp.eval(&src[j], x) + src_new[j][i])
                        }
                        Foot::Boundary { theta, c, rest } => {
                            let ub = bnd[j] + theta * (bnd_new[j] - bnd[j]);
                            let sb = src[j][xb_idx] + theta * (src_new[j][xb_idx] - src[j][xb_idx]);
                            c * ub + 0.5 * rest * (c * sb + src_new[j][i])
                        }
                    })
                    .collect()
            })
            .collect();

        let bnd_final = ops.boundary_values(&next, t1);
        for j in 0..n {
            let xb_idx = if s.is_forward(j) { 0 } else { nx };
            next[j][xb_idx] = bnd_final[j];
        }
        if !next.iter().flatten().all(|v| v.is_finite()) {
            return Err(SolverError::NonFinite { level: l, t: t1 });
        }
        for j in 0..n {
            sol.level_mut(j, l).copy_from_slice(&next[j]);
        }
        src = ops.sources(&next, t1);
        bnd_prev = Some(std::mem::replace(&mut bnd, bnd_final));
        u = next;
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Sampler;

    #[test]
    fn hat_weights_integrate_linear_functions() {
        let r = Expr::parse("1 + x").unwrap();
        let w = hat_weights(&r, 0.0, 10);
        // ∫ (1+x)·x dx = 1/2 + 1/3
        let got: f64 = w.iter().enumerate().map(|(i, w)| w * i as f64 / 10.0).sum();
        assert!((got - (0.5 + 1.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn zero_data_stays_zero() {
        let s = Scenario::from_strings(
            1,
            1.0,
            &["1", "-1"],
            Some(&[&["0.3", "1"], &["-2", "0"]]),
            None,
            Some(&[&["0.5", "0.5"], &["0.5", "0.5"]]),
            None,
            vec![Sampler::zero(); 2],
        )
        .unwrap();
        let u = solve_marching(&s, GridSpec::new(50, 0.02, 1.0)).unwrap();
        assert_eq!(u.sup_norm(0, u.levels - 1), 0.0);
    }

    #[test]
    fn unit_courant_transport_is_exact() {
        let phi = Sampler::Expr(Expr::parse("sin(3*x)^2").unwrap());
        let s = Scenario::from_strings(1, 1.0, &["1", "-1"], None, None, None, None, vec![phi.clone(), phi]).unwrap();
        let u = solve_marching(&s, GridSpec::new(64, 1.0 / 64.0, 0.5)).unwrap();
        let err = u.sup_error(|j, x, t| {
            let foot = if j == 0 { x - t } else { x + t };
            // after t = 0 the corner node takes the zero boundary value
            if t == 0.0 || (foot > 1e-12 && foot < 1.0 - 1e-12) {
                (3.0 * foot).sin().powi(2)
            } else {
                0.0
            }
        });
        assert!(err < 1e-13, "{err}");
    }
}
