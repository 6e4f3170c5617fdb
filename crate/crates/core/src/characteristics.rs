//! Characteristic curves `ξ ↦ ω_j(ξ, x, t)` and their derived quantities.
//!
//! A curve solves `∂_ξ ω = 1 / a_j(ξ, ω)` with `ω(x) = t`. It is integrated
//! with fixed-step RK4 in `ξ` starting at the anchor abscissa; an evaluation
//! at an arbitrary `ξ` takes the full steps first and then one partial step,
//! so a memoized curve and a fresh trace give identical numbers.
//!
//! Three path integrals ride along with `ω` in the same RK4 state:
//!
//! * `int_b  = ∫_x^ξ b_jj / a_j`      (integrating factor `c_j = exp(int_b)`)
//! * `int_dt = ∫_x^ξ ∂_t a_j / a_j²`  (`∂_t ω_j = exp(-int_dt)`)
//! * `int_dx = ∫_x^ξ ∂_x a_j / a_j`   (derivative of the inverse in its anchor time)
//!
//! RK4 applied to a pure quadrature is Simpson's rule on the step and its
//! midpoint, so these are composite Simpson sums on the trace nodes.

use std::sync::Arc;

use dashmap::DashMap;
use serde::Serialize;
use thiserror::Error;

use crate::expr::Expr;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum TraceError {
    #[error("family {family}: speed {speed:.3e} below floor at (ξ={xi}, ω={omega})")]
    SpeedBelowFloor {
        family: usize,
        xi: f64,
        omega: f64,
        speed: f64,
    },
    #[error("family {family}: ordinate {tau} outside the characteristic range [{lo}, {hi}]")]
    OutOfRange { family: usize, tau: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceConfig {
    /// RK4 step in ξ.
    pub step: f64,
    /// Smallest admissible |a_j| during a trace.
    pub speed_floor: f64,
    /// Memoized anchors kept before the cache is flushed.
    pub cache_capacity: usize,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            step: 1.0 / 1024.0,
            speed_floor: 1e-10,
            cache_capacity: 4096,
        }
    }
}

/// Point of a characteristic together with the path integrals from the anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharState {
    pub xi: f64,
    pub omega: f64,
    pub int_b: f64,
    pub int_dt: f64,
    pub int_dx: f64,
}

impl CharState {
    pub fn anchor(x: f64, t: f64) -> Self {
        CharState {
            xi: x,
            omega: t,
            int_b: 0.0,
            int_dt: 0.0,
            int_dx: 0.0,
        }
    }

    /// `c_j(ξ, x, t)`.
    pub fn c(&self) -> f64 {
        self.int_b.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExitKind {
    Lateral,
    Initial,
}

/// Where the characteristic through an anchor meets ∂Ω going back in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitPoint {
    pub kind: ExitKind,
    /// Abscissa `x_j`.
    pub x: f64,
    /// Ordinate `ω_j(x_j, x, t)`.
    pub tau: f64,
    pub state: CharState,
}

/// Coefficients of one family, with literal zeros skipped.
#[derive(Clone, Copy)]
struct Family<'s> {
    j: usize,
    a: &'s Expr,
    bjj: Option<&'s Expr>,
    dadt: Option<&'s Expr>,
    dadx: Option<&'s Expr>,
    forward: bool,
    floor: f64,
}

impl<'s> Family<'s> {
    fn new(s: &'s Scenario, j: usize, floor: f64) -> Self {
        let nz = |e: &'s Expr| if e.is_zero() { None } else { Some(e) };
        Family {
            j,
            a: &s.a[j],
            bjj: nz(&s.b[j][j]),
            dadt: nz(s.da_dt(j)),
            dadx: nz(s.da_dx(j)),
            forward: s.is_forward(j),
            floor,
        }
    }

    #[inline]
    fn rhs(&self, xi: f64, omega: f64) -> Result<[f64; 4], TraceError> {
        let a = self.a.value(xi, omega);
        let ok = if self.forward { a >= self.floor } else { a <= -self.floor };
        if !ok {
            return Err(TraceError::SpeedBelowFloor {
                family: self.j,
                xi,
                omega,
                speed: a,
            });
        }
        let inv = 1.0 / a;
        Ok([
            inv,
            self.bjj.map_or(0.0, |b| b.value(xi, omega) * inv),
            self.dadt.map_or(0.0, |d| d.value(xi, omega) * inv * inv),
            self.dadx.map_or(0.0, |d| d.value(xi, omega) * inv),
        ])
    }

    #[inline]
    fn step(&self, s: &CharState, h: f64) -> Result<CharState, TraceError> {
        if h == 0.0 {
            return Ok(*s);
        }
        let k1 = self.rhs(s.xi, s.omega)?;
        let k2 = self.rhs(s.xi + 0.5 * h, s.omega + 0.5 * h * k1[0])?;
        let k3 = self.rhs(s.xi + 0.5 * h, s.omega + 0.5 * h * k2[0])?;
        let k4 = self.rhs(s.xi + h, s.omega + h * k3[0])?;
        let comb = |i: usize| h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        Ok(CharState {
            xi: s.xi + h,
            omega: s.omega + comb(0),
            int_b: s.int_b + comb(1),
            int_dt: s.int_dt + comb(2),
            int_dx: s.int_dx + comb(3),
        })
    }

    /// Full steps of size `h` from `from` toward `to`, then one partial step.
    fn integrate(&self, from: CharState, to: f64, h: f64) -> Result<CharState, TraceError> {
        let dist = to - from.xi;
        let dir = dist.signum();
        let full = (dist.abs() / h).floor() as usize;
        let mut s = from;
        let x0 = from.xi;
        for k in 0..full {
            s = self.step(&s, dir * h)?;
            // keep node abscissae exact multiples of h from the anchor
            s.xi = x0 + dir * h * (k + 1) as f64;
        }
        let rest = to - s.xi;
        let mut out = self.step(&s, rest)?;
        out.xi = to;
        Ok(out)
    }
}

/// A characteristic traced from one anchor toward x = 0 and/or x = 1.
#[derive(Debug, Clone)]
pub struct Characteristic {
    pub family: usize,
    pub x: f64,
    pub t: f64,
    step: f64,
    /// Nodes at x, x-h, x-2h, ... (all >= 0) followed by the node at 0.
    left: Vec<CharState>,
    /// Nodes at x, x+h, ... (all <= 1) followed by the node at 1.
    right: Vec<CharState>,
    left_built: bool,
    right_built: bool,
}

impl Characteristic {
    fn build(fam: &Family<'_>, x: f64, t: f64, h: f64, left: bool, right: bool) -> Result<Self, TraceError> {
        let side = |dir: f64, end: f64, build: bool| -> Result<Vec<CharState>, TraceError> {
            let mut nodes = vec![CharState::anchor(x, t)];
            if !build {
                return Ok(nodes);
            }
            let full = ((end - x).abs() / h).floor() as usize;
            let mut s = nodes[0];
            for k in 0..full {
                s = fam.step(&s, dir * h)?;
                s.xi = x + dir * h * (k + 1) as f64;
                nodes.push(s);
            }
            if s.xi != end {
                let mut last = fam.step(&s, end - s.xi)?;
                last.xi = end;
                nodes.push(last);
            }
            Ok(nodes)
        };
        Ok(Characteristic {
            family: fam.j,
            x,
            t,
            step: h,
            left: side(-1.0, 0.0, left)?,
            right: side(1.0, 1.0, right)?,
            left_built: left,
            right_built: right,
        })
    }

    fn side(&self, xi: f64) -> (&[CharState], bool) {
        if xi < self.x {
            (&self.left, self.left_built)
        } else {
            (&self.right, self.right_built)
        }
    }

    fn state_with(&self, fam: &Family<'_>, xi: f64) -> Result<CharState, TraceError> {
        if xi == self.x {
            return Ok(self.left[0]);
        }
        let (nodes, built) = self.side(xi);
        if !built {
            return fam.integrate(nodes[0], xi, self.step);
        }
        let k = ((xi - self.x).abs() / self.step).floor() as usize;
        // the last node is the boundary, reached by a partial step; only
        // full-step nodes serve as bases
        let last_full = if (nodes[nodes.len() - 1].xi - self.x).abs() == self.step * (nodes.len() - 1) as f64 {
            nodes.len() - 1
        } else {
            nodes.len() - 2
        };
        let base = nodes[k.min(last_full)];
        if base.xi == xi {
            return Ok(base);
        }
        let mut s = fam.step(&base, xi - base.xi)?;
        s.xi = xi;
        Ok(s)
    }

    /// Polyline of trace nodes ordered by increasing ξ.
    pub fn polyline(&self) -> Vec<(f64, f64)> {
        self.left
            .iter()
            .rev()
            .chain(self.right.iter().skip(1))
            .map(|s| (s.xi, s.omega))
            .collect()
    }

    /// State at the end of a built side (x = 0 or x = 1).
    pub fn at_boundary(&self, xb: f64) -> CharState {
        if xb <= self.x {
            *self.left.last().unwrap()
        } else {
            *self.right.last().unwrap()
        }
    }
}

/// Characteristic machinery for every family of a scenario, with a
/// concurrent memo of whole-interval traces keyed by quantized anchors.
pub struct CharField<'s> {
    scenario: &'s Scenario,
    pub config: TraceConfig,
    cache: DashMap<(usize, i64, i64), Arc<Characteristic>>,
}

const QUANTUM: f64 = 1e12;

impl<'s> CharField<'s> {
    pub fn new(scenario: &'s Scenario) -> Self {
        Self::with_config(scenario, TraceConfig::default())
    }

    pub fn with_config(scenario: &'s Scenario, config: TraceConfig) -> Self {
        CharField {
            scenario,
            config,
            cache: DashMap::new(),
        }
    }

    pub fn scenario(&self) -> &'s Scenario {
        self.scenario
    }

    fn family(&self, j: usize) -> Family<'s> {
        Family::new(self.scenario, j, self.config.speed_floor)
    }

    pub fn clear_cache(&self) {
        self.cache.clear();
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    /// Whole-interval trace through (x, t), memoized.
    pub fn characteristic(&self, j: usize, x: f64, t: f64) -> Result<Arc<Characteristic>, TraceError> {
        let key = (j, (x * QUANTUM).round() as i64, (t * QUANTUM).round() as i64);
        if let Some(c) = self.cache.get(&key) {
            return Ok(Arc::clone(&c));
        }
        let c = Arc::new(Characteristic::build(&self.family(j), x, t, self.config.step, true, true)?);
        if self.cache.len() >= self.config.cache_capacity {
            self.cache.clear();
        }
        self.cache.insert(key, Arc::clone(&c));
        Ok(c)
    }

    /// Trace through (x, t) toward the inflow boundary only, not memoized.
    /// Enough for exit points and for everything evaluated between the exit
    /// and the anchor.
    pub fn upstream(&self, j: usize, x: f64, t: f64) -> Result<Characteristic, TraceError> {
        let fwd = self.scenario.is_forward(j);
        Characteristic::build(&self.family(j), x, t, self.config.step, fwd, !fwd)
    }

    /// Trace through (x, t) toward the inflow boundary, stopping where the
    /// ordinate drops to `t_min` or at the boundary, whichever comes first.
    /// Returns the partial trace, the stopping state and whether the stop is
    /// on the lateral boundary.
    pub fn upstream_until(&self, j: usize, x: f64, t: f64, t_min: f64) -> Result<(Characteristic, CharState, bool), TraceError> {
        let fam = self.family(j);
        let h = self.config.step;
        let end = self.scenario.inflow_boundary(j);
        let dir = (end - x).signum();
        let full = ((end - x).abs() / h).floor() as usize;
        let mut nodes = vec![CharState::anchor(x, t)];
        let mut stop = nodes[0];
        let mut lateral = x == end && t >= t_min;
        if t > t_min && x != end {
            let mut s = nodes[0];
            lateral = true;
            for k in 0..=full {
                let next_xi = if k < full { x + dir * h * (k + 1) as f64 } else { end };
                if next_xi == s.xi {
                    break;
                }
                let mut next = fam.step(&s, next_xi - s.xi)?;
                next.xi = next_xi;
                if next.omega < t_min {
                    stop = refine_in_step(&fam, s, next_xi - s.xi, t_min, true)?;
                    lateral = false;
                    break;
                }
                if k < full {
                    nodes.push(next);
                }
                s = next;
                stop = next;
            }
        }
        let forward = fam.forward;
        let c = Characteristic {
            family: j,
            x,
            t,
            step: h,
            left: if forward { nodes.clone() } else { vec![nodes[0]] },
            right: if forward { vec![nodes[0]] } else { nodes },
            left_built: forward,
            right_built: !forward,
        };
        Ok((c, stop, lateral))
    }

    /// State at `xi` on a traced characteristic.
    pub fn state_on(&self, c: &Characteristic, xi: f64) -> Result<CharState, TraceError> {
        c.state_with(&self.family(c.family), xi)
    }

    /// State at `xi` of the characteristic through (x, t), integrated afresh
    /// over the segment only.
    pub fn state(&self, j: usize, x: f64, t: f64, xi: f64) -> Result<CharState, TraceError> {
        self.family(j).integrate(CharState::anchor(x, t), xi, self.config.step)
    }

    /// `ω_j(ξ, x, t)`.
    pub fn trace(&self, j: usize, x: f64, t: f64, xi: f64) -> Result<f64, TraceError> {
        Ok(self.state(j, x, t, xi)?.omega)
    }

    /// Exit point going back in time: lateral boundary if reached at a
    /// nonnegative ordinate, otherwise the crossing with t = 0.
    pub fn exit_point(&self, j: usize, x: f64, t: f64) -> Result<ExitPoint, TraceError> {
        let c = self.upstream(j, x, t)?;
        self.exit_on(&c)
    }

    pub fn exit_on(&self, c: &Characteristic) -> Result<ExitPoint, TraceError> {
        let fam = self.family(c.family);
        let xb = self.scenario.inflow_boundary(c.family);
        let nodes = if xb < c.x { &c.left } else { &c.right };
        let end = *nodes.last().unwrap();
        if c.x == xb || end.omega >= 0.0 {
            return Ok(ExitPoint {
                kind: ExitKind::Lateral,
                x: xb,
                tau: end.omega,
                state: end,
            });
        }
        if c.t <= 0.0 {
            return Ok(ExitPoint {
                kind: ExitKind::Initial,
                x: c.x,
                tau: c.t,
                state: nodes[0],
            });
        }
        // ω decreases monotonically along `nodes`; find the first negative one.
        let k = nodes.partition_point(|s| s.omega >= 0.0);
        let base = nodes[k - 1];
        let full = nodes[k].xi - base.xi;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut s = base;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            s = fam.step(&base, mid * full)?;
            s.xi = base.xi + mid * full;
            if s.omega.abs() < 1e-13 {
                break;
            }
            if s.omega > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(ExitPoint {
            kind: ExitKind::Initial,
            x: s.xi,
            tau: 0.0,
            state: s,
        })
    }

    /// `ω̃_j(τ, x, t)`: the abscissa where the characteristic through (x, t)
    /// has ordinate τ.
    pub fn inverse(&self, j: usize, tau: f64, x: f64, t: f64) -> Result<f64, TraceError> {
        Ok(self.inverse_state(j, tau, x, t)?.xi)
    }

    /// State at `ω̃_j(τ, x, t)`, integrating from the anchor only as far as
    /// the crossing.
    pub fn inverse_state(&self, j: usize, tau: f64, x: f64, t: f64) -> Result<CharState, TraceError> {
        let fam = self.family(j);
        let anchor = CharState::anchor(x, t);
        if tau == t {
            return Ok(anchor);
        }
        let toward_inflow = tau < t;
        let end = if toward_inflow == fam.forward { 0.0 } else { 1.0 };
        let h = self.config.step;
        let dir = (end - x).signum();
        let full = ((end - x).abs() / h).floor() as usize;
        let passed = |s: &CharState| if toward_inflow { s.omega <= tau } else { s.omega >= tau };
        let mut s = anchor;
        for k in 0..=full {
            let next_xi = if k < full { x + dir * h * (k + 1) as f64 } else { end };
            if next_xi == s.xi {
                break;
            }
            let mut next = fam.step(&s, next_xi - s.xi)?;
            next.xi = next_xi;
            if passed(&next) {
                return refine_in_step(&fam, s, next_xi - s.xi, tau, toward_inflow);
            }
            s = next;
        }
        let slack = 1e-12 * (1.0 + tau.abs());
        if (s.omega - tau).abs() <= slack {
            return Ok(s);
        }
        let (lo, hi) = (s.omega.min(t), s.omega.max(t));
        Err(TraceError::OutOfRange { family: j, tau, lo, hi })
    }

    /// Inverse on an already traced characteristic.
    pub fn inverse_on(&self, c: &Characteristic, tau: f64) -> Result<CharState, TraceError> {
        let fam = self.family(c.family);
        if tau == c.t {
            return Ok(c.left[0]);
        }
        let toward_inflow = tau < c.t;
        let go_left = toward_inflow == fam.forward;
        let (nodes, built) = if go_left { (&c.left, c.left_built) } else { (&c.right, c.right_built) };
        if !built {
            return self.inverse_state(c.family, tau, c.x, c.t);
        }
        let end = nodes.last().unwrap().omega;
        let (lo, hi) = (end.min(c.t), end.max(c.t));
        let slack = 1e-12 * (1.0 + tau.abs());
        if tau < lo - slack || tau > hi + slack {
            return Err(TraceError::OutOfRange {
                family: c.family,
                tau,
                lo,
                hi,
            });
        }
        let tau = tau.clamp(lo, hi);
        let k = if toward_inflow {
            nodes.partition_point(|s| s.omega > tau)
        } else {
            nodes.partition_point(|s| s.omega < tau)
        }
        .clamp(1, nodes.len() - 1);
        let base = nodes[k - 1];
        refine_in_step(&fam, base, nodes[k].xi - base.xi, tau, toward_inflow)
    }

    /// `∂_t ω_j(ξ, x, t) = exp ∫_ξ^x ∂_t a_j / a_j²`.
    pub fn d_omega_dt(&self, j: usize, xi: f64, x: f64, t: f64) -> Result<f64, TraceError> {
        Ok((-self.state(j, x, t, xi)?.int_dt).exp())
    }

    /// `∂_x ω_j(ξ, x, t) = -(1/a_j(x, t)) exp ∫_ξ^x ∂_t a_j / a_j²`.
    pub fn d_omega_dx(&self, j: usize, xi: f64, x: f64, t: f64) -> Result<f64, TraceError> {
        let e = (-self.state(j, x, t, xi)?.int_dt).exp();
        Ok(-e / self.scenario.a[j].value(x, t))
    }

    /// `∂_3 ω̃_k(τ, x, t) = -a_k(x, t) exp(-∫_τ^t ∂_1 a_k(ω̃_k(ρ), ρ) dρ)`,
    /// the ρ-integral being taken along the curve in its ξ parametrization.
    pub fn d3_inverse(&self, k: usize, tau: f64, x: f64, t: f64) -> Result<f64, TraceError> {
        let s = self.inverse_state(k, tau, x, t)?;
        Ok(-self.scenario.a[k].value(x, t) * s.int_dx.exp())
    }

    /// `∂_3 ω̃_k` from the state at ω̃_k on a curve anchored at (x, t).
    pub fn d3_inverse_from_state(&self, k: usize, s: &CharState, x: f64, t: f64) -> f64 {
        -self.scenario.a[k].value(x, t) * s.int_dx.exp()
    }

    /// Intersection of the characteristic of family `fam` through (x, t)
    /// with a curve `ξ ↦ other(ξ)`, searched for between `x` and `toward`.
    /// Returns the state on the traced curve at the crossing.
    pub fn intersect<F>(&self, fam_j: usize, x: f64, t: f64, toward: f64, mut other: F) -> Result<Option<CharState>, TraceError>
    where
        F: FnMut(f64) -> Result<f64, TraceError>,
    {
        let fam = self.family(fam_j);
        let h = self.config.step;
        let dir = (toward - x).signum();
        let mut s = CharState::anchor(x, t);
        let mut gap = s.omega - other(x)?;
        if gap == 0.0 {
            return Ok(Some(s));
        }
        let full = ((toward - x).abs() / h).floor() as usize;
        let mut k = 0usize;
        loop {
            let next_xi = if k < full { x + dir * h * (k + 1) as f64 } else { toward };
            if next_xi == s.xi {
                return Ok(None);
            }
            let mut next = fam.step(&s, next_xi - s.xi)?;
            next.xi = next_xi;
            let next_gap = next.omega - other(next_xi)?;
            if next_gap == 0.0 {
                return Ok(Some(next));
            }
            if next_gap.signum() != gap.signum() {
                // refine on the step fraction with the secant/bisection hybrid
                let base = s;
                let len = next_xi - base.xi;
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                let (mut g_lo, mut g_hi) = (gap, next_gap);
                let mut best = next;
                for _ in 0..100 {
                    let mut frac = lo - g_lo * (hi - lo) / (g_hi - g_lo);
                    if !(frac > lo && frac < hi) || !frac.is_finite() {
                        frac = 0.5 * (lo + hi);
                    }
                    let mut st = fam.step(&base, frac * len)?;
                    st.xi = base.xi + frac * len;
                    let g = st.omega - other(st.xi)?;
                    best = st;
                    if g.abs() < 1e-14 * (1.0 + st.omega.abs()) || (hi - lo) * len.abs() < 1e-16 {
                        break;
                    }
                    if g.signum() == g_lo.signum() {
                        lo = frac;
                        g_lo = g;
                        // Illinois modification keeps the bracket shrinking on both ends
                        g_hi *= 0.5;
                    } else {
                        hi = frac;
                        g_hi = g;
                        g_lo *= 0.5;
                    }
                }
                return Ok(Some(best));
            }
            s = next;
            gap = next_gap;
            k += 1;
            if next_xi == toward {
                return Ok(None);
            }
        }
    }
}

/// Point inside one RK4 step (from `base`, length `full`) where ω = τ.
/// Safeguarded Newton on the step fraction with ∂_ξ ω = 1/a.
fn refine_in_step(fam: &Family<'_>, base: CharState, full: f64, tau: f64, toward_inflow: bool) -> Result<CharState, TraceError> {
    let eval = |frac: f64| -> Result<CharState, TraceError> {
        let mut s = fam.step(&base, frac * full)?;
        s.xi = base.xi + frac * full;
        Ok(s)
    };
    let short = |s: &CharState| if toward_inflow { s.omega > tau } else { s.omega < tau };
    let (mut lo_f, mut hi_f) = (0.0f64, 1.0f64);
    let a0 = fam.a.value(base.xi, base.omega);
    let mut frac = ((tau - base.omega) * a0 / full).clamp(0.0, 1.0);
    let mut s = eval(frac)?;
    for _ in 0..100 {
        let resid = s.omega - tau;
        if resid.abs() <= 1e-15 * (1.0 + tau.abs()) {
            break;
        }
        if short(&s) {
            lo_f = lo_f.max(frac);
        } else {
            hi_f = hi_f.min(frac);
        }
        let a = fam.a.value(s.xi, s.omega);
        let mut next = frac - resid * a / full;
        if !(next > lo_f && next < hi_f) {
            next = 0.5 * (lo_f + hi_f);
        }
        if (next - frac).abs() < 1e-16 {
            break;
        }
        frac = next;
        s = eval(frac)?;
    }
    Ok(s)
}
