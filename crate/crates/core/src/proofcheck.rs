//! Machine checks of the calculus behind the smoothing argument.
//!
//! Every check evaluates one quantity through two (or three) independent
//! pipelines and reports the residuals: the Jacobian of the change of
//! variables along a pair of characteristics, the identity satisfied by its
//! inverse, the changed-variable forms of `B²`, `RB`, `BR` and of the
//! boundary composition `R_jk R_ki`, and the closed-form derivatives of the
//! characteristic map. Test fields are smooth closed forms, so the residuals
//! isolate quadrature and tracing error from solver error.
//!
//! Relative residuals are taken against `max(|reference|, 1e-3·scale)` where
//! `scale` is the largest reference magnitude in the sample set, so that
//! samples near a zero crossing do not dominate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::characteristics::{CharField, CharState, ExitKind, TraceError};
use crate::field::{Field, FnField, TrigField};
use crate::operators::{OpField, OpKind, OperatorError, OperatorEval};
use crate::quadrature::QuadratureRule;
use crate::scenario::Scenario;
use crate::smoothing::smoothing_time;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub name: String,
    pub samples: usize,
    pub skipped: usize,
    pub max_abs: f64,
    pub max_rel: f64,
    pub tol: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl IdentityReport {
    /// Build from `(value, reference)` pairs.
    pub fn from_pairs(name: &str, pairs: &[(f64, f64)], skipped: usize, tol: f64) -> Self {
        let scale = pairs.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
        let floor = 1e-3 * scale;
        let mut max_abs = 0.0f64;
        let mut max_rel = 0.0f64;
        for &(v, r) in pairs {
            let abs = (v - r).abs();
            let rel = if scale > 0.0 { abs / r.abs().max(floor) } else { abs };
            max_abs = max_abs.max(abs);
            // NaN must fail the check, so propagate it explicitly
            max_rel = if rel.is_nan() || max_rel.is_nan() { f64::NAN } else { max_rel.max(rel) };
        }
        let pass = !pairs.is_empty() && max_rel < tol;
        IdentityReport {
            name: name.into(),
            samples: pairs.len(),
            skipped,
            max_abs,
            max_rel,
            tol,
            pass,
            note: None,
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProofcheckConfig {
    pub seed: u64,
    /// Samples for pointwise identities.
    pub samples: usize,
    /// Anchors for operator identities.
    pub anchors: usize,
    pub rule: QuadratureRule,
    /// Central-difference step.
    pub fd_step: f64,
    /// Overrides the coefficient-dependent tolerance.
    pub tol: Option<f64>,
    /// Multiplier on `∂_3 ω̃` in the changed-variable formulas; 1 except
    /// for fault injection.
    pub d3_scale: f64,
}

impl Default for ProofcheckConfig {
    fn default() -> Self {
        ProofcheckConfig {
            seed: 42,
            samples: 500,
            anchors: 50,
            rule: QuadratureRule::gauss_legendre(8, 2),
            fd_step: 1e-5,
            tol: None,
            d3_scale: 1.0,
        }
    }
}

/// All coefficients are literal constants.
pub fn has_constant_coefficients(s: &Scenario) -> bool {
    let c = |e: &crate::expr::Expr| e.as_const().is_some();
    s.a.iter().all(c) && [&s.b, &s.g, &s.r].iter().all(|m| m.iter().flatten().all(c))
}

/// 1e-6 for constant coefficients, 1e-5 otherwise.
pub fn default_tolerance(s: &Scenario) -> f64 {
    if has_constant_coefficients(s) {
        1e-6
    } else {
        1e-5
    }
}

struct Ctx<'s> {
    s: &'s Scenario,
    ev: OperatorEval<'s>,
    tol: f64,
    d: f64,
}

impl<'s> Ctx<'s> {
    fn new(s: &'s Scenario, cfg: &ProofcheckConfig) -> Result<Self, TraceError> {
        let mut ev = OperatorEval::new(s).with_rule(cfg.rule.clone());
        ev.d3_scale = cfg.d3_scale;
        let d = smoothing_time(&ev.chars)?;
        Ok(Ctx {
            s,
            tol: cfg.tol.unwrap_or_else(|| default_tolerance(s)),
            ev,
            d,
        })
    }

    fn chars(&self) -> &CharField<'s> {
        &self.ev.chars
    }

    fn lateral(&self, j: usize, x: f64, t: f64) -> bool {
        matches!(self.chars().exit_point(j, x, t), Ok(e) if e.kind == ExitKind::Lateral)
    }

    /// Sign of `a_k - a_j` along the j-characteristic through (x, t) over
    /// [lo, hi]: Some(0) if identically zero there, None if it changes sign.
    fn speed_gap_sign(&self, j: usize, k: usize, x: f64, t: f64, lo: f64, hi: f64) -> Result<Option<i8>, TraceError> {
        let c = self.chars().characteristic(j, x, t)?;
        let mut sign = 0i8;
        for i in 0..=64 {
            let xi = lo + (hi - lo) * i as f64 / 64.0;
            let st = self.chars().state_on(&c, xi)?;
            let gap = self.s.a[k].value(xi, st.omega) - self.s.a[j].value(xi, st.omega);
            let sg = if gap.abs() < 1e-12 {
                0
            } else if gap > 0.0 {
                1
            } else {
                -1
            };
            if sg != 0 {
                if sign != 0 && sg != sign {
                    return Ok(None);
                }
                sign = sg;
            }
        }
        Ok(Some(sign))
    }

    fn beta(&self, j: usize, k: usize, x: f64, t: f64) -> f64 {
        match &self.s.beta {
            Some(b) => b[j][k].value(x, t),
            None => {
                let gap = self.s.a[k].value(x, t) - self.s.a[j].value(x, t);
                self.s.b[j][k].value(x, t) / gap
            }
        }
    }
}

fn rng(cfg: &ProofcheckConfig, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Signed quadrature of a fallible integrand.
fn integrate<E>(rule: &QuadratureRule, a: f64, b: f64, mut f: impl FnMut(f64) -> Result<f64, E>) -> Result<f64, E> {
    if a == b {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for (x, w) in rule.points(a, b) {
        acc += w * f(x)?;
    }
    Ok(acc)
}

/// Distinct ordered pairs of families.
fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|j| (0..n).filter(move |&k| k != j).map(move |k| (j, k))).collect()
}

// ---------------------------------------------------------------------------
// pointwise identities

/// `θ(ξ) = ω_k(η, ξ, ω_j(ξ, x, t))`.
fn theta_of(ch: &CharField<'_>, j: usize, k: usize, eta: f64, x: f64, t: f64, xi: f64) -> Result<f64, TraceError> {
    let om = ch.trace(j, x, t, xi)?;
    ch.trace(k, xi, om, eta)
}

/// Finite-difference `dθ/dξ` against `(a_k - a_j)/(a_j a_k) · ∂_3 ω_k`.
/// Samples where the speeds coincide are compared against 0 separately.
pub fn check_jacobian_theta(s: &Scenario, cfg: &ProofcheckConfig) -> Result<Vec<IdentityReport>, TraceError> {
    let ctx = Ctx::new(s, cfg)?;
    let ch = ctx.chars();
    let mut r = rng(cfg, 1);
    let prs = pairs(s.n);
    let samples: Vec<_> = (0..cfg.samples)
        .map(|_| {
            let (j, k) = prs[r.gen_range(0..prs.len())];
            (j, k, r.gen_range(0.0..1.0), r.gen_range(1.0..3.0), r.gen_range(0.02..0.98), r.gen_range(0.0..1.0))
        })
        .collect();
    let h = cfg.fd_step;
    let results: Vec<(bool, f64, f64)> = samples
        .par_iter()
        .map(|&(j, k, x, t, xi, eta)| {
            let om = ch.trace(j, x, t, xi)?;
            let (aj, ak) = (s.a[j].value(xi, om), s.a[k].value(xi, om));
            let closed = (ak - aj) / (aj * ak) * ch.d_omega_dt(k, eta, xi, om)?;
            let fd = (theta_of(ch, j, k, eta, x, t, xi + h)? - theta_of(ch, j, k, eta, x, t, xi - h)?) / (2.0 * h);
            Ok(((ak - aj).abs() < 1e-6, fd, closed))
        })
        .collect::<Result<_, TraceError>>()?;
    let regular: Vec<(f64, f64)> = results.iter().filter(|r| !r.0).map(|r| (r.1, r.2)).collect();
    let degenerate: Vec<(f64, f64)> = results.iter().filter(|r| r.0).map(|r| (r.1, r.2)).collect();
    let mut out = vec![IdentityReport::from_pairs("theta", &regular, degenerate.len(), ctx.tol)];
    if !degenerate.is_empty() {
        // the closed form is ~0 here; compare absolute values against 1e-6
        let worst = degenerate.iter().map(|p| (p.0 - p.1).abs()).fold(0.0, f64::max);
        out.push(IdentityReport {
            name: "theta_degenerate".into(),
            samples: degenerate.len(),
            skipped: 0,
            max_abs: worst,
            max_rel: worst,
            tol: 1e-6,
            pass: worst < 1e-6,
            note: Some("coinciding speeds: dθ/dξ must vanish".into()),
        });
    }
    Ok(out)
}

/// Root of `θ(ξ) = target` on [lo, hi] by bisection; θ is monotone there.
fn invert_theta(ch: &CharField<'_>, j: usize, k: usize, eta: f64, x: f64, t: f64, target: f64) -> Result<Option<f64>, TraceError> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let f_lo = theta_of(ch, j, k, eta, x, t, lo)? - target;
    let f_hi = theta_of(ch, j, k, eta, x, t, hi)? - target;
    if f_lo == 0.0 {
        return Ok(Some(lo));
    }
    if f_hi == 0.0 {
        return Ok(Some(hi));
    }
    if f_lo.signum() == f_hi.signum() {
        return Ok(None);
    }
    let up = f_hi > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = theta_of(ch, j, k, eta, x, t, mid)? - target;
        if f == 0.0 {
            return Ok(Some(mid));
        }
        if (f > 0.0) == up {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Invert the change of variables for x̃ and compare `ω_k(x̃, η, θ)` with
/// `ω_j(x̃, x, t)`. Targets outside the swept θ-range are skipped.
pub fn check_identity_kj(s: &Scenario, cfg: &ProofcheckConfig) -> Result<IdentityReport, TraceError> {
    let ctx = Ctx::new(s, cfg)?;
    let ch = ctx.chars();
    let mut r = rng(cfg, 2);
    let prs = pairs(s.n);
    let samples: Vec<_> = (0..cfg.samples)
        .map(|_| {
            let (j, k) = prs[r.gen_range(0..prs.len())];
            (j, k, r.gen_range(0.0..1.0), r.gen_range(1.0..3.0), r.gen_range(0.0..1.0), r.gen_range(-0.1..1.1))
        })
        .collect();
    let results: Vec<Option<(f64, f64)>> = samples
        .par_iter()
        .map(|&(j, k, x, t, eta, frac)| {
            if ctx.speed_gap_sign(j, k, x, t, 0.0, 1.0)?.is_none_or(|sg| sg == 0) {
                return Ok(None);
            }
            let th0 = theta_of(ch, j, k, eta, x, t, 0.0)?;
            let th1 = theta_of(ch, j, k, eta, x, t, 1.0)?;
            let target = th0 + frac * (th1 - th0);
            let Some(xt) = invert_theta(ch, j, k, eta, x, t, target)? else {
                return Ok(None);
            };
            Ok(Some((ch.trace(k, eta, target, xt)?, ch.trace(j, x, t, xt)?)))
        })
        .collect::<Result<_, TraceError>>()?;
    let pairs: Vec<(f64, f64)> = results.iter().flatten().copied().collect();
    let skipped = results.len() - pairs.len();
    // the identity is exact up to tracing error; hold it to 1e-8 (1e-7 for
    // variable coefficients) unless overridden
    let tol = cfg.tol.unwrap_or(if has_constant_coefficients(s) { 1e-8 } else { 1e-7 });
    Ok(IdentityReport::from_pairs("kj", &pairs, skipped, tol))
}

/// Closed-form `∂_x ω`, `∂_t ω` and `∂_3 ω̃` against central differences.
pub fn check_derivative_formulas(s: &Scenario, cfg: &ProofcheckConfig) -> Result<Vec<IdentityReport>, TraceError> {
    let ch = CharField::new(s);
    let mut r = rng(cfg, 3);
    let samples: Vec<_> = (0..cfg.samples)
        .map(|_| {
            (
                r.gen_range(0..s.n),
                r.gen_range(0.05..0.95),
                r.gen_range(0.05..0.95),
                r.gen_range(0.5..3.0),
            )
        })
        .collect();
    let h = cfg.fd_step;
    let rows: Vec<[(f64, f64); 3]> = samples
        .par_iter()
        .map(|&(j, xi, x, t)| {
            let dx_fd = (ch.trace(j, x + h, t, xi)? - ch.trace(j, x - h, t, xi)?) / (2.0 * h);
            let dt_fd = (ch.trace(j, x, t + h, xi)? - ch.trace(j, x, t - h, xi)?) / (2.0 * h);
            let tau = ch.trace(j, x, t, xi)?;
            let d3_fd = (ch.inverse(j, tau, x, t + h)? - ch.inverse(j, tau, x, t - h)?) / (2.0 * h);
            Ok([
                (ch.d_omega_dx(j, xi, x, t)?, dx_fd),
                (ch.d_omega_dt(j, xi, x, t)?, dt_fd),
                (ch.d3_inverse(j, tau, x, t)?, d3_fd),
            ])
        })
        .collect::<Result<_, TraceError>>()?;
    let tol = cfg.tol.unwrap_or(1e-5);
    Ok(["d_omega_dx", "d_omega_dt", "d3_inverse"]
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let p: Vec<(f64, f64)> = rows.iter().map(|r| r[m]).collect();
            IdentityReport::from_pairs(name, &p, 0, tol)
        })
        .collect())
}

// ---------------------------------------------------------------------------
// operator identities

/// Random anchors in Ω_{2d}^{2d+1}.
fn anchors(ctx: &Ctx<'_>, cfg: &ProofcheckConfig, salt: u64) -> Vec<(usize, f64, f64)> {
    let mut r = rng(cfg, salt);
    let d = ctx.d;
    (0..cfg.anchors)
        .map(|_| (r.gen_range(0..ctx.s.n), r.gen_range(0.01..0.99), r.gen_range(2.0 * d..2.0 * d + 1.0)))
        .collect()
}

/// Per-pair statistics of the changed-variable `B²`.
#[derive(Debug, Clone, Default)]
struct B2Stats {
    /// Pairs skipped because `a_k - a_j` changes sign along the curve.
    skipped_pairs: usize,
    /// Families k that contributed.
    used: Vec<usize>,
    /// `max |kernel|` per (k, i) over all quadrature nodes visited.
    kernel_max: Vec<Vec<f64>>,
}

/// Nested `B(Bu)` restricted to the intermediate families in `ks`.
fn b2_direct(ctx: &Ctx<'_>, u: &dyn Field, j: usize, x: f64, t: f64, ks: &[usize]) -> Result<f64, OperatorError> {
    let ev = &ctx.ev;
    let ch = ctx.chars();
    let c = ch.upstream(j, x, t)?;
    let e = ch.exit_on(&c)?;
    let mut err = None;
    let v = ev.along(&c, e.x, x, None, |st| {
        let mut acc = 0.0;
        for &k in ks {
            let bjk = ctx.s.b[j][k].value(st.xi, st.omega);
            match ev.apply_b(u, st.xi, st.omega, k) {
                Ok(inner) => acc += bjk * inner,
                Err(e) => err = Some(e),
            }
        }
        ev.d_of(j, st) * acc
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(-v),
    }
}

/// `B²` after the substitution `ξ ↦ θ = ω_k(η, ξ, ω_j(ξ))` with η outer:
/// for each η the ξ-range is the part of the j-curve between `x_j` and `x`
/// on the side of η away from `x_k`; its image is a θ-interval, and the
/// point x̃ is recovered as the crossing of the k-curve through (η, θ) with
/// the j-curve.
fn b2_changed(ctx: &Ctx<'_>, u: &dyn Field, j: usize, x: f64, t: f64, stats: &mut B2Stats) -> Result<f64, OperatorError> {
    let s = ctx.s;
    let ch = ctx.chars();
    let rule = &ctx.ev.rule;
    let jc = ch.characteristic(j, x, t)?;
    let xj = s.inflow_boundary(j);
    let (lo_j, hi_j) = (xj.min(x), xj.max(x));
    let s1 = if x >= xj { 1.0 } else { -1.0 };
    let omega_j = |xi: f64| ch.state_on(&jc, xi).map(|st| st.omega);
    stats.kernel_max = vec![vec![0.0; s.n]; s.n];
    let mut total = 0.0;
    for k in 0..s.n {
        if k == j || s.b[j][k].is_zero() {
            continue;
        }
        match ctx.speed_gap_sign(j, k, x, t, lo_j, hi_j)? {
            None => {
                stats.skipped_pairs += 1;
                continue;
            }
            // coinciding speeds: b_jk vanishes by the structural condition
            Some(0) => {
                stats.used.push(k);
                continue;
            }
            Some(_) => stats.used.push(k),
        }
        let xk = s.inflow_boundary(k);
        let s2 = if xk == 0.0 { 1.0 } else { -1.0 };
        let mut kmax = vec![0.0f64; s.n];
        let mut per_eta = |eta: f64| -> Result<f64, OperatorError> {
            let (xlo, xhi) = if xk == 0.0 { (lo_j.max(eta), hi_j) } else { (lo_j, hi_j.min(eta)) };
            if xhi <= xlo {
                return Ok(0.0);
            }
            let th_lo = ch.trace(k, xlo, omega_j(xlo)?, eta)?;
            let th_hi = ch.trace(k, xhi, omega_j(xhi)?, eta)?;
            let toward = if xk == 0.0 { xhi } else { xlo };
            integrate(rule, th_lo, th_hi, |theta| -> Result<f64, OperatorError> {
                let Some(st) = ch.intersect(k, eta, theta, toward, omega_j)? else {
                    return Ok(0.0);
                };
                let xt = st.xi;
                let om = st.omega;
                let ck = (-st.int_b).exp();
                let d3 = st.int_dt.exp();
                let dk = ck / s.a[k].value(eta, theta);
                let js = ch.state_on(&jc, xt)?;
                let dj = js.c() / s.a[j].value(xt, om);
                let (aj, ak) = (s.a[j].value(xt, om), s.a[k].value(xt, om));
                let base = dj * dk * ctx.beta(j, k, xt, om) * ak * aj / d3;
                let mut acc = 0.0;
                for (i, b) in s.b[k].iter().enumerate() {
                    if i != k && !b.is_zero() {
                        let kern = base * b.value(eta, theta);
                        kmax[i] = kmax[i].max(kern.abs());
                        acc += kern * u.value(i, eta, theta);
                    }
                }
                Ok(acc)
            })
        };
        let mut acc = 0.0;
        for (a, b) in [(0.0, x), (x, 1.0)] {
            acc += integrate(rule, a, b, &mut per_eta)?;
        }
        total += s1 * s2 * acc;
        for (i, m) in kmax.into_iter().enumerate() {
            stats.kernel_max[k][i] = stats.kernel_max[k][i].max(m);
        }
    }
    Ok(total)
}

fn operator_report(
    name: &str,
    results: Vec<Result<Option<(f64, f64)>, OperatorError>>,
    tol: f64,
) -> Result<IdentityReport, OperatorError> {
    let mut pairs = Vec::new();
    let mut skipped = 0;
    for r in results {
        match r? {
            Some(p) => pairs.push(p),
            None => skipped += 1,
        }
    }
    Ok(IdentityReport::from_pairs(name, &pairs, skipped, tol))
}

/// `B²u` by nested quadrature against the changed-variable double integral.
pub fn check_b2_equivalence(s: &Scenario, u: &dyn Field, cfg: &ProofcheckConfig) -> Result<IdentityReport, OperatorError> {
    let ctx = Ctx::new(s, cfg)?;
    let pts = anchors(&ctx, cfg, 10);
    let skipped_pairs = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<_> = pts
        .par_iter()
        .map(|&(j, x, t)| {
            if !b2_anchor_ok(&ctx, j, x, t) {
                return Ok(None);
            }
            let mut st = B2Stats::default();
            let changed = b2_changed(&ctx, u, j, x, t, &mut st)?;
            skipped_pairs.fetch_add(st.skipped_pairs, std::sync::atomic::Ordering::Relaxed);
            let direct = b2_direct(&ctx, u, j, x, t, &st.used)?;
            Ok(Some((changed, direct)))
        })
        .collect();
    let rep = operator_report("B2", results, ctx.tol)?;
    let sp = skipped_pairs.into_inner();
    Ok(if sp > 0 {
        rep.with_note(format!("{sp} (anchor, k) pairs skipped: a_k - a_j changes sign along the curve"))
    } else {
        rep
    })
}

/// The j-curve and the k-curves through its end points exit laterally.
fn b2_anchor_ok(ctx: &Ctx<'_>, j: usize, x: f64, t: f64) -> bool {
    let Ok(e) = ctx.chars().exit_point(j, x, t) else { return false };
    if e.kind != ExitKind::Lateral {
        return false;
    }
    (0..ctx.s.n)
        .filter(|&k| k != j && !ctx.s.b[j][k].is_zero())
        .all(|k| ctx.lateral(k, e.x, e.tau) && ctx.lateral(k, x, t))
}

/// Bound shadow: `|(B²u)_j| ≤ 2d Σ_{k,i} C_ki max_t ∫|u_i|` with `C_ki` the
/// largest changed-variable kernel seen. Residual is the ratio to the bound.
pub fn check_b2_bound(s: &Scenario, u: &dyn Field, cfg: &ProofcheckConfig) -> Result<IdentityReport, OperatorError> {
    let ctx = Ctx::new(s, cfg)?;
    let d = ctx.d;
    let horizon = 2.0 * d + 1.0;
    let l1: Vec<f64> = (0..s.n)
        .map(|i| {
            (0..=200)
                .map(|m| {
                    let t = horizon * m as f64 / 200.0;
                    ctx.ev.rule.integrate(0.0, 1.0, |y| u.value(i, y, t).abs())
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let pts = anchors(&ctx, cfg, 11);
    let ratios: Vec<Result<Option<f64>, OperatorError>> = pts
        .par_iter()
        .map(|&(j, x, t)| {
            if !b2_anchor_ok(&ctx, j, x, t) {
                return Ok(None);
            }
            let mut st = B2Stats::default();
            let v = b2_changed(&ctx, u, j, x, t, &mut st)?;
            let bound: f64 = st
                .kernel_max
                .iter()
                .map(|row| row.iter().zip(&l1).map(|(c, m)| c * m).sum::<f64>())
                .sum::<f64>()
                * 2.0
                * d;
            Ok(Some(if bound > 0.0 { v.abs() / bound } else { v.abs() }))
        })
        .collect();
    let mut worst = 0.0f64;
    let mut n = 0;
    let mut skipped = 0;
    for r in ratios {
        match r? {
            Some(v) => {
                worst = worst.max(v);
                n += 1;
            }
            None => skipped += 1,
        }
    }
    Ok(IdentityReport {
        name: "B2_bound".into(),
        samples: n,
        skipped,
        max_abs: worst,
        max_rel: worst,
        tol: 1.0,
        pass: n > 0 && worst <= 1.0,
        note: Some("residual is |B²u| divided by the assembled bound".into()),
    })
}

/// Changed-variable `RB`: `η ↦ z = ω_k(ξ, η, τ_j)` after swapping the order.
fn rb_changed(ctx: &Ctx<'_>, u: &dyn Field, j: usize, x: f64, t: f64) -> Result<f64, OperatorError> {
    let s = ctx.s;
    let ch = ctx.chars();
    let rule = &ctx.ev.rule;
    let e = ch.exit_point(j, x, t)?;
    if e.kind != ExitKind::Lateral {
        return Err(OperatorError::InitialExit { j, x, t });
    }
    let tau0 = e.tau;
    let mut total = 0.0;
    for k in 0..s.n {
        let r = &s.r[j][k];
        if r.is_zero() || s.b[k].iter().enumerate().all(|(i, b)| i == k || b.is_zero()) {
            continue;
        }
        let far = 1.0 - s.inflow_boundary(k);
        let fc = ch.upstream(k, far, tau0)?;
        total += integrate(rule, 0.0, 1.0, |xi| -> Result<f64, OperatorError> {
            let ztop = ch.state_on(&fc, xi)?.omega;
            integrate(rule, tau0, ztop, |z| -> Result<f64, OperatorError> {
                let st = ch.inverse_state(k, tau0, xi, z)?;
                let ak = s.a[k].value(xi, z);
                let dk = (-st.int_b).exp() / ak;
                let d3 = ctx.ev.d3_scale * ch.d3_inverse_from_state(k, &st, xi, z);
                let mut acc = 0.0;
                for (i, b) in s.b[k].iter().enumerate() {
                    if i != k && !b.is_zero() {
                        acc += b.value(xi, z) * u.value(i, xi, z);
                    }
                }
                Ok(r.value(st.xi, tau0) * dk * d3 * acc)
            })
        })?;
    }
    Ok(-e.state.c() * total)
}

/// `R(Bu)` by composition against the changed-variable form.
pub fn check_rb_equivalence(s: &Scenario, u: &dyn Field, cfg: &ProofcheckConfig) -> Result<IdentityReport, OperatorError> {
    let ctx = Ctx::new(s, cfg)?;
    let pts = anchors(&ctx, cfg, 12);
    let results: Vec<_> = pts
        .par_iter()
        .map(|&(j, x, t)| {
            let Ok(e) = ctx.chars().exit_point(j, x, t) else { return Ok(None) };
            if e.kind != ExitKind::Lateral || !(0..s.n).all(|k| ctx.lateral(k, 1.0 - s.inflow_boundary(k), e.tau)) {
                return Ok(None);
            }
            let bu = OpField {
                eval: &ctx.ev,
                kind: OpKind::B,
                inner: u,
            };
            let direct = ctx.ev.apply_r(&bu, x, t, j)?;
            Ok(Some((rb_changed(&ctx, u, j, x, t)?, direct)))
        })
        .collect();
    operator_report("RB", results, ctx.tol)
}

/// `B(Ru)` by composition against the explicit double integral with the
/// boundary variable outside.
fn br_explicit(ctx: &Ctx<'_>, u: &dyn Field, j: usize, x: f64, t: f64) -> Result<f64, OperatorError> {
    let s = ctx.s;
    let ch = ctx.chars();
    let rule = &ctx.ev.rule;
    let jc = ch.upstream(j, x, t)?;
    let e = ch.exit_on(&jc)?;
    // per k: quadrature nodes on the j-curve with weight·d_j·b_jk·c_k and τ_k
    let mut nodes: Vec<(usize, f64, f64)> = Vec::new();
    for (xi, w) in rule.points_on(e.x, x, None) {
        let js = ch.state_on(&jc, xi)?;
        let dj = ctx.ev.d_of(j, &js);
        for k in 0..s.n {
            if k == j || s.b[j][k].is_zero() || s.r[k].iter().all(|r| r.is_zero()) {
                continue;
            }
            let ks = ch.state(k, xi, js.omega, s.inflow_boundary(k))?;
            if ks.omega < 0.0 {
                return Err(OperatorError::InitialExit { j: k, x: xi, t: js.omega });
            }
            nodes.push((k, w * dj * s.b[j][k].value(xi, js.omega) * ks.c(), ks.omega));
        }
    }
    let v = integrate(rule, 0.0, 1.0, |eta| -> Result<f64, OperatorError> {
        let mut acc = 0.0;
        for &(k, wk, tau) in &nodes {
            for (l, r) in s.r[k].iter().enumerate() {
                if !r.is_zero() {
                    acc += wk * r.value(eta, tau) * u.value(l, eta, tau);
                }
            }
        }
        Ok(acc)
    })?;
    Ok(-v)
}

/// `B(Ru)` by composition against the explicit form.
pub fn check_br_form(s: &Scenario, u: &dyn Field, cfg: &ProofcheckConfig) -> Result<IdentityReport, OperatorError> {
    let ctx = Ctx::new(s, cfg)?;
    let pts = anchors(&ctx, cfg, 13);
    let results: Vec<_> = pts
        .par_iter()
        .map(|&(j, x, t)| {
            if !b2_anchor_ok(&ctx, j, x, t) {
                return Ok(None);
            }
            let ru = OpField {
                eval: &ctx.ev,
                kind: OpKind::R,
                inner: u,
            };
            let direct = ctx.ev.apply_b(&ru, x, t, j)?;
            Ok(Some((br_explicit(&ctx, u, j, x, t)?, direct)))
        })
        .collect();
    operator_report("BR", results, ctx.tol)
}

/// `(R_jk v)(x, t) = c_j(x_j, x, t) ∫_0^1 r_jk(η, τ_j) v(η, τ_j) dη`.
fn r_pair(ctx: &Ctx<'_>, j: usize, k: usize, v: &dyn Fn(f64, f64) -> Result<f64, OperatorError>, x: f64, t: f64) -> Result<f64, OperatorError> {
    let e = ctx.chars().exit_point(j, x, t)?;
    if e.kind != ExitKind::Lateral {
        return Err(OperatorError::InitialExit { j, x, t });
    }
    let r = &ctx.s.r[j][k];
    let inner = integrate(&ctx.ev.rule, 0.0, 1.0, |eta| Ok::<f64, OperatorError>(r.value(eta, e.tau) * v(eta, e.tau)?))?;
    Ok(e.state.c() * inner)
}

/// `(P_j v)(x, t) = c_j(x_j, x, t) ∫_0^1 v(η, τ_j) dη`; the time shift to
/// the exit ordinate lives here so that `R_jk = P_j Q_jk` holds exactly with
/// `Q_jk` a plain multiplication by `r_jk`.
fn p_op(ctx: &Ctx<'_>, j: usize, v: &dyn Fn(f64, f64) -> Result<f64, OperatorError>, x: f64, t: f64) -> Result<f64, OperatorError> {
    let e = ctx.chars().exit_point(j, x, t)?;
    if e.kind != ExitKind::Lateral {
        return Err(OperatorError::InitialExit { j, x, t });
    }
    let inner = integrate(&ctx.ev.rule, 0.0, 1.0, |eta| v(eta, e.tau))?;
    Ok(e.state.c() * inner)
}

/// Single changed-variable formula for `P_j Q_jk P_k W` with `ξ ↦ z = ω_k(x_k, ξ, τ_j)`.
fn pqp_changed(ctx: &Ctx<'_>, j: usize, k: usize, w: &dyn Fn(f64, f64) -> f64, x: f64, t: f64) -> Result<f64, OperatorError> {
    let s = ctx.s;
    let ch = ctx.chars();
    let rule = &ctx.ev.rule;
    let e = ch.exit_point(j, x, t)?;
    if e.kind != ExitKind::Lateral {
        return Err(OperatorError::InitialExit { j, x, t });
    }
    let tau = e.tau;
    let xk = s.inflow_boundary(k);
    let z0 = ch.trace(k, 0.0, tau, xk)?;
    let z1 = ch.trace(k, 1.0, tau, xk)?;
    let v = integrate(rule, z0, z1, |z| -> Result<f64, OperatorError> {
        let st: CharState = ch.inverse_state(k, tau, xk, z)?;
        let ck = (-st.int_b).exp();
        let d3 = ctx.ev.d3_scale * ch.d3_inverse_from_state(k, &st, xk, z);
        let inner = rule.integrate(0.0, 1.0, |eta| w(eta, z));
        Ok(s.r[j][k].value(st.xi, tau) * ck * d3 * inner)
    })?;
    Ok(e.state.c() * v)
}

/// `R_jk R_ki w` three ways: direct composition, staged `P_j Q_jk P_k Q_ki`,
/// and the changed-variable formula. Residual is the worst pairwise one.
pub fn check_pqp_factorization(s: &Scenario, w: &dyn Field, cfg: &ProofcheckConfig) -> Result<IdentityReport, OperatorError> {
    let ctx = Ctx::new(s, cfg)?;
    let pts = anchors(&ctx, cfg, 14);
    let mut r = rng(cfg, 15);
    let triples: Vec<(usize, usize, usize, f64, f64)> = pts
        .iter()
        .map(|&(j, x, t)| (j, r.gen_range(0..s.n), r.gen_range(0..s.n), x, t))
        .collect();
    type Sample = Result<Option<[(f64, f64); 2]>, OperatorError>;
    let results: Vec<Sample> = triples
        .par_iter()
        .map(|&(j, k, i, x, t)| {
            let Ok(e) = ctx.chars().exit_point(j, x, t) else { return Ok(None) };
            let far = 1.0 - s.inflow_boundary(k);
            if e.kind != ExitKind::Lateral || !ctx.lateral(k, far, e.tau) {
                return Ok(None);
            }
            let wi = |y: f64, tt: f64| Ok::<f64, OperatorError>(w.value(i, y, tt));
            let inner = |y: f64, tt: f64| r_pair(&ctx, k, i, &wi, y, tt);
            let direct = r_pair(&ctx, j, k, &inner, x, t)?;

            let q_ki = |y: f64, tt: f64| Ok::<f64, OperatorError>(s.r[k][i].value(y, tt) * w.value(i, y, tt));
            let p_k = |y: f64, tt: f64| p_op(&ctx, k, &q_ki, y, tt);
            let q_jk = |y: f64, tt: f64| Ok::<f64, OperatorError>(s.r[j][k].value(y, tt) * p_k(y, tt)?);
            let staged = p_op(&ctx, j, &q_jk, x, t)?;

            let big_w = |y: f64, tt: f64| s.r[k][i].value(y, tt) * w.value(i, y, tt);
            let changed = pqp_changed(&ctx, j, k, &big_w, x, t)?;
            Ok(Some([(staged, direct), (changed, direct)]))
        })
        .collect();
    let mut staged = Vec::new();
    let mut changed = Vec::new();
    let mut skipped = 0;
    for r in results {
        match r? {
            Some([a, b]) => {
                staged.push(a);
                changed.push(b);
            }
            None => skipped += 1,
        }
    }
    let a = IdentityReport::from_pairs("PQP", &staged, skipped, ctx.tol);
    let b = IdentityReport::from_pairs("PQP", &changed, skipped, ctx.tol);
    let mut worst = if b.max_rel.is_nan() || b.max_rel > a.max_rel { b } else { a.clone() };
    worst.max_abs = worst.max_abs.max(a.max_abs);
    worst.note = Some(format!("staged vs direct max rel {:.2e}; changed-variable vs direct reported", a.max_rel));
    worst.pass = worst.pass && a.pass;
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub reports: Vec<IdentityReport>,
    pub pass: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ProofcheckError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Every check with the trigonometric test field.
pub fn run_suite(s: &Scenario, cfg: &ProofcheckConfig) -> Result<SuiteReport, ProofcheckError> {
    let u = TrigField;
    let mut reports = check_jacobian_theta(s, cfg)?;
    reports.push(check_identity_kj(s, cfg)?);
    reports.extend(check_derivative_formulas(s, cfg)?);
    reports.push(check_b2_equivalence(s, &u, cfg)?);
    reports.push(check_b2_bound(s, &random_field(s.n, cfg.seed), cfg)?);
    reports.push(check_rb_equivalence(s, &u, cfg)?);
    reports.push(check_br_form(s, &u, cfg)?);
    reports.push(check_pqp_factorization(s, &u, cfg)?);
    let pass = reports.iter().all(|r| r.pass);
    Ok(SuiteReport { reports, pass })
}

/// Bounded smooth field with seeded random modes.
pub fn random_field(n: usize, seed: u64) -> FnField<impl Fn(usize, f64, f64) -> f64 + Sync> {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let modes: Vec<[f64; 4]> = (0..n)
        .map(|_| [r.gen_range(0.5..2.0), r.gen_range(0.5..6.0), r.gen_range(0.1..3.0), r.gen_range(0.0..6.3)])
        .collect();
    FnField(move |k: usize, x: f64, t: f64| {
        let [a, p, q, ph] = modes[k];
        a * (p * x + q * t + ph).sin()
    })
}
