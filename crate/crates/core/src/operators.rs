//! The integral operators of the characteristic representation
//!
//! ```text
//! u_j(x,t) = (Su)_j + (Bu)_j + (Gu)_j + F_j
//! ```
//!
//! where every term is an integral along the characteristic of family `j`
//! through (x, t), from its exit point `x_j` up to `x`.

use thiserror::Error;

use crate::characteristics::{CharField, CharState, Characteristic, ExitKind, ExitPoint, TraceError};
use crate::field::Field;
use crate::quadrature::QuadratureRule;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum OperatorError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("family {j}: characteristic through ({x}, {t}) starts on the initial line, R is undefined there")]
    InitialExit { j: usize, x: f64, t: f64 },
}

/// Operator evaluation context: scenario, characteristics and quadrature.
pub struct OperatorEval<'s> {
    pub scenario: &'s Scenario,
    pub chars: CharField<'s>,
    pub rule: QuadratureRule,
    /// Multiplier on every `∂_3 ω̃` used by the changed-variable formulas.
    /// Always 1 except for fault injection.
    pub d3_scale: f64,
}

/// The four terms of the representation at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RepTerms {
    pub s: f64,
    pub b: f64,
    pub g: f64,
    pub f: f64,
}

impl RepTerms {
    pub fn total(&self) -> f64 {
        self.s + self.b + self.g + self.f
    }
}

impl<'s> OperatorEval<'s> {
    pub fn new(scenario: &'s Scenario) -> Self {
        OperatorEval {
            scenario,
            chars: CharField::new(scenario),
            rule: QuadratureRule::default(),
            d3_scale: 1.0,
        }
    }

    pub fn with_rule(mut self, rule: QuadratureRule) -> Self {
        self.rule = rule;
        self
    }

    /// `c_j(ξ, x, t)`.
    pub fn c_factor(&self, j: usize, xi: f64, x: f64, t: f64) -> Result<f64, TraceError> {
        Ok(self.chars.state(j, x, t, xi)?.c())
    }

    /// `d_j(ξ, x, t) = c_j / a_j(ξ, ω_j(ξ))`.
    pub fn d_factor(&self, j: usize, xi: f64, x: f64, t: f64) -> Result<f64, TraceError> {
        let s = self.chars.state(j, x, t, xi)?;
        Ok(self.d_of(j, &s))
    }

    /// `d_j` from a state on the j-characteristic.
    #[inline]
    pub fn d_of(&self, j: usize, s: &CharState) -> f64 {
        s.c() / self.scenario.a[j].value(s.xi, s.omega)
    }

    pub fn exit_point(&self, j: usize, x: f64, t: f64) -> Result<ExitPoint, TraceError> {
        self.chars.exit_point(j, x, t)
    }

    fn upstream(&self, j: usize, x: f64, t: f64) -> Result<(Characteristic, ExitPoint), TraceError> {
        let c = self.chars.upstream(j, x, t)?;
        let e = self.chars.exit_on(&c)?;
        Ok((c, e))
    }

    /// Signed quadrature of `f(state)` along a characteristic between two abscissae.
    pub fn along(
        &self,
        c: &Characteristic,
        from: f64,
        to: f64,
        spacing: Option<f64>,
        mut f: impl FnMut(&CharState) -> f64,
    ) -> Result<f64, TraceError> {
        let mut total = 0.0;
        for (xi, w) in self.rule.points_on(from, to, spacing) {
            let s = self.chars.state_on(c, xi)?;
            total += w * f(&s);
        }
        Ok(total)
    }

    /// `Σ_k ∫_0^1 r_jk(η, τ) u_k(η, τ) dη`.
    pub fn boundary_integral(&self, u: &dyn Field, j: usize, tau: f64) -> f64 {
        let row = &self.scenario.r[j];
        if row.iter().all(|e| e.is_zero()) {
            return 0.0;
        }
        let pts = self.rule.points_on(0.0, 1.0, u.x_spacing());
        let mut total = 0.0;
        for (k, r) in row.iter().enumerate() {
            if r.is_zero() {
                continue;
            }
            total += pts.iter().map(|&(y, w)| w * r.value(y, tau) * u.value(k, y, tau)).sum::<f64>();
        }
        total
    }

    /// `(Ru)_j(x, t)`.
    pub fn apply_r(&self, u: &dyn Field, x: f64, t: f64, j: usize) -> Result<f64, OperatorError> {
        let e = self.chars.exit_point(j, x, t)?;
        if e.kind == ExitKind::Initial {
            return Err(OperatorError::InitialExit { j, x, t });
        }
        Ok(e.state.c() * self.boundary_integral(u, j, e.tau))
    }

    /// `(Bu)_j(x, t)`.
    pub fn apply_b(&self, u: &dyn Field, x: f64, t: f64, j: usize) -> Result<f64, OperatorError> {
        if !self.has_coupling(j) {
            return Ok(0.0);
        }
        let (c, e) = self.upstream(j, x, t)?;
        Ok(self.b_on(u, &c, &e, x, j)?)
    }

    fn has_coupling(&self, j: usize) -> bool {
        self.scenario.b[j].iter().enumerate().any(|(k, e)| k != j && !e.is_zero())
    }

    fn b_on(&self, u: &dyn Field, c: &Characteristic, e: &ExitPoint, x: f64, j: usize) -> Result<f64, TraceError> {
        let row = &self.scenario.b[j];
        let v = self.along(c, e.x, x, u.x_spacing(), |s| {
            let mut acc = 0.0;
            for (k, b) in row.iter().enumerate() {
                if k != j && !b.is_zero() {
                    acc += b.value(s.xi, s.omega) * u.value(k, s.xi, s.omega);
                }
            }
            self.d_of(j, s) * acc
        })?;
        Ok(-v)
    }

    /// `(Gu)_j(x, t)` as a nested integral with the inner one at frozen time `ω_j(ξ)`.
    pub fn apply_g(&self, u: &dyn Field, x: f64, t: f64, j: usize) -> Result<f64, OperatorError> {
        if self.scenario.g[j].iter().all(|e| e.is_zero()) {
            return Ok(0.0);
        }
        let (c, e) = self.upstream(j, x, t)?;
        Ok(self.g_on(u, &c, &e, x, j)?)
    }

    fn g_on(&self, u: &dyn Field, c: &Characteristic, e: &ExitPoint, x: f64, j: usize) -> Result<f64, TraceError> {
        let v = self.along(c, e.x, x, u.x_spacing(), |s| self.d_of(j, s) * self.volterra(u, j, s.xi, s.omega))?;
        Ok(-v)
    }

    /// `Σ_k ∫_0^x g_jk(y, t) u_k(y, t) dy`.
    pub fn volterra(&self, u: &dyn Field, j: usize, x: f64, t: f64) -> f64 {
        let row = &self.scenario.g[j];
        let pts = self.rule.points_on(0.0, x, u.x_spacing());
        let mut acc = 0.0;
        for (k, g) in row.iter().enumerate() {
            if !g.is_zero() {
                acc += pts.iter().map(|&(y, w)| w * g.value(y, t) * u.value(k, y, t)).sum::<f64>();
            }
        }
        acc
    }

    /// `(Gu)_j(x, t)` after the substitution `z = ω_j(ξ, x, t)`:
    /// `-Σ_k ∫_{ω_j(x_j)}^t ∫_0^{ω̃_j(z)} d_j(ω̃_j(z)) g_jk(y, z) a_j(ω̃_j(z), z) u_k(y, z) dy dz`.
    pub fn apply_g_changed(&self, u: &dyn Field, x: f64, t: f64, j: usize) -> Result<f64, OperatorError> {
        if self.scenario.g[j].iter().all(|e| e.is_zero()) {
            return Ok(0.0);
        }
        let (c, e) = self.upstream(j, x, t)?;
        let a = &self.scenario.a[j];
        let mut total = 0.0;
        for (z, w) in self.rule.points(e.tau, t) {
            let s = self.chars.inverse_on(&c, z)?;
            total += w * self.d_of(j, &s) * a.value(s.xi, z) * self.volterra(u, j, s.xi, z);
        }
        Ok(-total)
    }

    /// `(Su)_j(x, t)`: boundary branch or initial-data branch depending on
    /// where the characteristic starts. Includes optional boundary data.
    pub fn apply_s(&self, u: &dyn Field, x: f64, t: f64, j: usize) -> Result<f64, OperatorError> {
        let e = self.chars.exit_point(j, x, t)?;
        Ok(self.s_at(u, &e, j))
    }

    fn s_at(&self, u: &dyn Field, e: &ExitPoint, j: usize) -> f64 {
        match e.kind {
            ExitKind::Lateral => e.state.c() * (self.boundary_integral(u, j, e.tau) + self.boundary_data(j, e.tau)),
            ExitKind::Initial => e.state.c() * self.scenario.phi[j].value(e.x),
        }
    }

    /// Additive boundary data `h_j(t)` (zero unless the scenario supplies it).
    pub fn boundary_data(&self, j: usize, t: f64) -> f64 {
        self.scenario.boundary_data.as_ref().map_or(0.0, |h| h[j].value(0.0, t))
    }

    /// `∫_{x_j}^x d_j(ξ, x, t) f_j(ξ, ω_j(ξ)) dξ`.
    pub fn forcing_term(&self, x: f64, t: f64, j: usize) -> Result<f64, TraceError> {
        let f = &self.scenario.f[j];
        if f.is_zero() {
            return Ok(0.0);
        }
        let (c, e) = self.upstream(j, x, t)?;
        self.along(&c, e.x, x, None, |s| self.d_of(j, s) * f.value(s.xi, s.omega))
    }

    /// All terms of the representation at (x, t), sharing one trace.
    pub fn representation(&self, u: &dyn Field, x: f64, t: f64, j: usize) -> Result<RepTerms, TraceError> {
        let (c, e) = self.upstream(j, x, t)?;
        let mut out = RepTerms {
            s: self.s_at(u, &e, j),
            ..RepTerms::default()
        };
        if self.has_coupling(j) {
            out.b = self.b_on(u, &c, &e, x, j)?;
        }
        if self.scenario.g[j].iter().any(|g| !g.is_zero()) {
            out.g = self.g_on(u, &c, &e, x, j)?;
        }
        let f = &self.scenario.f[j];
        if !f.is_zero() {
            out.f = self.along(&c, e.x, x, None, |s| self.d_of(j, s) * f.value(s.xi, s.omega))?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    R,
    B,
    G,
}

/// `K u` viewed as a field, so operators compose. Evaluation failures
/// surface as NaN.
pub struct OpField<'a, 's> {
    pub eval: &'a OperatorEval<'s>,
    pub kind: OpKind,
    pub inner: &'a dyn Field,
}

impl Field for OpField<'_, '_> {
    fn value(&self, k: usize, x: f64, t: f64) -> f64 {
        let r = match self.kind {
            OpKind::R => self.eval.apply_r(self.inner, x, t, k),
            OpKind::B => self.eval.apply_b(self.inner, x, t, k),
            OpKind::G => self.eval.apply_g(self.inner, x, t, k),
        };
        r.unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FnField, TrigField};
    use crate::scenario::{Interp, Sampler};

    #[allow(clippy::too_many_arguments)]
    fn scen(
        m: usize,
        a: &[&str],
        b: Option<&[&[&str]]>,
        g: Option<&[&[&str]]>,
        r: Option<&[&[&str]]>,
        f: Option<&[&str]>,
        phi: Vec<Sampler>,
    ) -> Scenario {
        Scenario::from_strings(m, 10.0, a, b, g, r, f, phi).unwrap()
    }

    fn zeros(n: usize) -> Vec<Sampler> {
        vec![Sampler::zero(); n]
    }

    #[test]
    fn integrating_factor_closed_form() {
        let s = scen(1, &["1", "-1"], Some(&[&["0.7", "0"], &["0", "0"]]), None, None, None, zeros(2));
        let ev = OperatorEval::new(&s);
        assert_eq!(ev.c_factor(0, 0.4, 0.4, 1.0).unwrap(), 1.0);
        let got = ev.c_factor(0, 0.1, 0.8, 2.0).unwrap();
        assert!((got - (0.7f64 * (0.1 - 0.8)).exp()).abs() < 1e-13);
        // b_jj = 0 gives c = 1 and d = 1/a
        assert_eq!(ev.c_factor(1, 0.1, 0.8, 2.0).unwrap(), 1.0);
        assert_eq!(ev.d_factor(1, 0.1, 0.8, 2.0).unwrap(), -1.0);
    }

    #[test]
    fn r_examples() {
        let s = scen(1, &["1", "-1"], None, None, Some(&[&["0.3", "0.3"], &["x", "x"]]), None, zeros(2));
        let ev = OperatorEval::new(&s);
        let ones = FnField(|_, _, _| 1.0);
        assert!((ev.apply_r(&ones, 0.5, 3.0, 0).unwrap() - 0.6).abs() < 1e-14);
        let lin = FnField(|_, x, _| x);
        assert!((ev.apply_r(&lin, 0.5, 3.0, 1).unwrap() - 2.0 / 3.0).abs() < 1e-14);
        assert!(matches!(ev.apply_r(&ones, 0.5, 0.1, 0), Err(OperatorError::InitialExit { .. })));
    }

    #[test]
    fn b_example_and_zero_coupling() {
        let s = scen(1, &["1", "-1"], Some(&[&["0", "1"], &["0", "0"]]), None, None, None, zeros(2));
        let ev = OperatorEval::new(&s);
        let ones = FnField(|_, _, _| 1.0);
        assert!((ev.apply_b(&ones, 1.0, 1.5, 0).unwrap() + 1.0).abs() < 1e-14);
        assert_eq!(ev.apply_b(&ones, 1.0, 1.5, 1).unwrap(), 0.0);
    }

    #[test]
    fn g_example_and_changed_variables() {
        let s = scen(1, &["1", "-1"], None, Some(&[&["1", "1"], &["1", "1"]]), None, None, zeros(2));
        let ev = OperatorEval::new(&s);
        let ones = FnField(|_, _, _| 1.0);
        let x = 0.6;
        assert!((ev.apply_g(&ones, x, 2.0, 0).unwrap() + x * x).abs() < 1e-13);
        let v = scen(
            1,
            &["2 + sin(t)", "-1 - 0.5*cos(x)"],
            Some(&[&["0.2", "0.1*x"], &["t", "0"]]),
            Some(&[&["x*t", "1"], &["cos(x)", "0.5"]]),
            None,
            None,
            zeros(2),
        );
        let ev = OperatorEval::new(&v);
        for (x, t) in [(0.3, 2.0), (0.9, 1.4), (0.5, 0.2)] {
            for j in 0..2 {
                let a = ev.apply_g(&TrigField, x, t, j).unwrap();
                let b = ev.apply_g_changed(&TrigField, x, t, j).unwrap();
                assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn s_branches() {
        let phi = vec![
            Sampler::Expr(crate::expr::Expr::parse("sin(3*x)").unwrap()),
            Sampler::Table {
                interp: Interp::Linear,
                x: vec![0.0, 1.0],
                values: vec![0.0, 2.0],
            },
        ];
        let s = scen(1, &["1", "-1"], None, None, Some(&[&["0.5", "0.5"], &["0.5", "0.5"]]), None, phi);
        let ev = OperatorEval::new(&s);
        let ones = FnField(|_, _, _| 1.0);
        assert_eq!(ev.apply_s(&ones, 0.3, 0.0, 0).unwrap(), (3.0 * 0.3f64).sin());
        let got = ev.apply_s(&ones, 0.7, 0.2, 0).unwrap();
        assert!((got - (1.5f64).sin()).abs() < 1e-12);
        let got = ev.apply_s(&ones, 0.3, 0.2, 1).unwrap();
        assert!((got - 1.0).abs() < 1e-12);
        assert_eq!(ev.apply_s(&ones, 0.3, 5.0, 0).unwrap(), ev.apply_r(&ones, 0.3, 5.0, 0).unwrap());
    }

    #[test]
    fn forcing_unit_speed() {
        let s = scen(1, &["1", "-1"], None, None, None, Some(&["1", "0"]), zeros(2));
        let ev = OperatorEval::new(&s);
        assert!((ev.forcing_term(0.35, 4.0, 0).unwrap() - 0.35).abs() < 1e-14);
        assert_eq!(ev.forcing_term(0.35, 4.0, 1).unwrap(), 0.0);
    }

    #[test]
    fn cocycle() {
        let s = scen(
            1,
            &["2 + sin(t)", "-1 - 0.5*cos(x)"],
            Some(&[&["0.4*cos(t)", "0"], &["0", "x - t"]]),
            None,
            None,
            None,
            zeros(2),
        );
        let ev = OperatorEval::new(&s);
        for j in 0..2 {
            let (x, t, x1, x2) = (0.8, 2.0, 0.5, 0.1);
            let w1 = ev.chars.trace(j, x, t, x1).unwrap();
            let lhs = ev.c_factor(j, x2, x, t).unwrap();
            let rhs = ev.c_factor(j, x2, x1, w1).unwrap() * ev.c_factor(j, x1, x, t).unwrap();
            assert!((lhs - rhs).abs() < 1e-8);
        }
    }
}
