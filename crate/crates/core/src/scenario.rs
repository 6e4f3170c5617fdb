//! Problem instances: coefficients, initial data, structural checks and the
//! JSON scenario file.
//!
//! Families are indexed from zero. Families `0..m` have positive speed and
//! take their boundary condition at `x = 0`; families `m..n` have negative
//! speed and take it at `x = 1`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_expression, EvalError, Expr, ParseError, Var};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("field `{field}`: expected {expected}, found {found}")]
    Dimension {
        field: String,
        expected: String,
        found: String,
    },
    #[error("field `m`: m = {m} exceeds n = {n}")]
    MTooLarge { m: usize, n: usize },
    #[error("field `n`: n = {0} but at least 2 components are required")]
    NTooSmall(usize),
    #[error("field `T`: horizon must be positive and finite, got {0}")]
    Horizon(f64),
    #[error("field `{field}`: {source}")]
    Parse {
        field: String,
        #[source]
        source: ParseError,
    },
    #[error("field `{field}`: {message}")]
    Table { field: String, message: String },
}

/// Interpolation mode of a tabulated sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interp {
    /// `values[i]` on `[x[i], x[i+1])`; the last value from the last node on.
    Constant,
    /// Linear between nodes, constant beyond the end nodes.
    Linear,
}

/// A function of `x` on `[0, 1]`, used for initial data.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampler {
    Expr(Expr),
    Table {
        interp: Interp,
        x: Vec<f64>,
        values: Vec<f64>,
    },
    /// Output of [`crate::solver::mollify`].
    Mollified(Box<crate::solver::Mollified>),
}

impl Sampler {
    pub fn zero() -> Self {
        Sampler::Expr(Expr::Const(0.0))
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Sampler::Expr(e) => e.value(x, 0.0),
            Sampler::Table { interp, x: xs, values } => table_value(*interp, xs, values, x),
            Sampler::Mollified(m) => m.value(x),
        }
    }

    /// Abscissae in `(a, b)` where the sampler may fail to be smooth.
    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        match self {
            Sampler::Expr(_) | Sampler::Mollified(_) => Vec::new(),
            Sampler::Table { x, .. } => x.iter().copied().filter(|&p| p > a && p < b).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Sampler::Expr(e) => e.is_zero(),
            Sampler::Table { values, .. } => values.iter().all(|&v| v == 0.0),
            Sampler::Mollified(m) => m.base.is_zero(),
        }
    }
}

fn table_value(interp: Interp, xs: &[f64], values: &[f64], x: f64) -> f64 {
    let last = xs.len() - 1;
    if x <= xs[0] {
        return values[0];
    }
    if x >= xs[last] {
        return values[last];
    }
    // first index with xs[i] > x
    let i = xs.partition_point(|&p| p <= x);
    match interp {
        Interp::Constant => values[i - 1],
        Interp::Linear => {
            let (x0, x1) = (xs[i - 1], xs[i]);
            let s = (x - x0) / (x1 - x0);
            values[i - 1] * (1.0 - s) + values[i] * s
        }
    }
}

/// Problem instance. Coefficients are immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n: usize,
    pub m: usize,
    pub horizon: f64,
    pub a: Vec<Expr>,
    pub b: Vec<Vec<Expr>>,
    pub g: Vec<Vec<Expr>>,
    pub r: Vec<Vec<Expr>>,
    pub f: Vec<Expr>,
    pub phi: Vec<Sampler>,
    pub beta: Option<Vec<Vec<Expr>>>,
    /// Extra boundary source added to the integral boundary condition.
    pub boundary_data: Option<Vec<Expr>>,
    /// Closed-form solution, when known; used by convergence studies.
    pub exact: Option<Vec<Expr>>,
    da_dt: Vec<Expr>,
    da_dx: Vec<Expr>,
}

impl Scenario {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        m: usize,
        horizon: f64,
        a: Vec<Expr>,
        b: Vec<Vec<Expr>>,
        g: Vec<Vec<Expr>>,
        r: Vec<Vec<Expr>>,
        f: Vec<Expr>,
        phi: Vec<Sampler>,
    ) -> Result<Self, ScenarioError> {
        let n = a.len();
        if n < 2 {
            return Err(ScenarioError::NTooSmall(n));
        }
        if m > n {
            return Err(ScenarioError::MTooLarge { m, n });
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(ScenarioError::Horizon(horizon));
        }
        check_matrix("b", &b, n)?;
        check_matrix("g", &g, n)?;
        check_matrix("r", &r, n)?;
        check_len("f", f.len(), n)?;
        check_len("phi", phi.len(), n)?;
        let da_dt = a.iter().map(|e| e.differentiate(Var::T)).collect();
        let da_dx = a.iter().map(|e| e.differentiate(Var::X)).collect();
        Ok(Scenario {
            n,
            m,
            horizon,
            a,
            b,
            g,
            r,
            f,
            phi,
            beta: None,
            boundary_data: None,
            exact: None,
            da_dt,
            da_dx,
        })
    }

    /// Build from expression strings; the zero matrices and forcing default to "0".
    pub fn from_strings(
        m: usize,
        horizon: f64,
        a: &[&str],
        b: Option<&[&[&str]]>,
        g: Option<&[&[&str]]>,
        r: Option<&[&[&str]]>,
        f: Option<&[&str]>,
        phi: Vec<Sampler>,
    ) -> Result<Self, ScenarioError> {
        let n = a.len();
        let a = parse_vec("a", a)?;
        let mat = |name: &str, v: Option<&[&[&str]]>| -> Result<Vec<Vec<Expr>>, ScenarioError> {
            match v {
                Some(rows) => rows
                    .iter()
                    .enumerate()
                    .map(|(i, row)| parse_vec(&format!("{name}[{i}]"), row))
                    .collect(),
                None => Ok(vec![vec![Expr::Const(0.0); n]; n]),
            }
        };
        let b = mat("b", b)?;
        let g = mat("g", g)?;
        let r = mat("r", r)?;
        let f = match f {
            Some(v) => parse_vec("f", v)?,
            None => vec![Expr::Const(0.0); n],
        };
        Scenario::new(m, horizon, a, b, g, r, f, phi)
    }

    pub fn with_beta(mut self, beta: Vec<Vec<Expr>>) -> Result<Self, ScenarioError> {
        check_matrix("beta", &beta, self.n)?;
        self.beta = Some(beta);
        Ok(self)
    }

    pub fn with_boundary_data(mut self, h: Vec<Expr>) -> Result<Self, ScenarioError> {
        check_len("boundary_data", h.len(), self.n)?;
        self.boundary_data = Some(h);
        Ok(self)
    }

    pub fn with_exact(mut self, exact: Vec<Expr>) -> Result<Self, ScenarioError> {
        check_len("exact", exact.len(), self.n)?;
        self.exact = Some(exact);
        Ok(self)
    }

    pub fn with_phi(mut self, phi: Vec<Sampler>) -> Result<Self, ScenarioError> {
        check_len("phi", phi.len(), self.n)?;
        self.phi = phi;
        Ok(self)
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self, ScenarioError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(ScenarioError::Horizon(horizon));
        }
        self.horizon = horizon;
        Ok(self)
    }

    /// Positive-speed family (boundary condition at x = 0).
    #[inline]
    pub fn is_forward(&self, j: usize) -> bool {
        j < self.m
    }

    /// Abscissa of the lateral boundary where family `j` enters.
    #[inline]
    pub fn inflow_boundary(&self, j: usize) -> f64 {
        if self.is_forward(j) {
            0.0
        } else {
            1.0
        }
    }

    pub fn da_dt(&self, j: usize) -> &Expr {
        &self.da_dt[j]
    }

    pub fn da_dx(&self, j: usize) -> &Expr {
        &self.da_dx[j]
    }

    /// Largest |a_j| over a sample grid of [0,1] x [0,T].
    pub fn max_speed(&self) -> f64 {
        let grid = SampleGrid::default();
        let mut best = 0.0f64;
        for (x, t) in grid.points(self.horizon) {
            for a in &self.a {
                best = best.max(a.value(x, t).abs());
            }
        }
        best
    }

    /// Largest |e| over the default sample grid for each entry of a matrix.
    pub fn max_abs_matrix(&self, mat: &[Vec<Expr>], skip_diagonal: bool) -> f64 {
        let grid = SampleGrid::default();
        let mut best = 0.0f64;
        for (j, row) in mat.iter().enumerate() {
            for (k, e) in row.iter().enumerate() {
                if (skip_diagonal && j == k) || e.is_zero() {
                    continue;
                }
                for (x, t) in grid.points(self.horizon) {
                    best = best.max(e.value(x, t).abs());
                }
            }
        }
        best
    }

    /// Oscillation max - min of the initial data over all components.
    pub fn initial_oscillation(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in &self.phi {
            for i in 0..=2000 {
                let v = p.value(i as f64 / 2000.0);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        hi - lo
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        file.into_scenario()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScenarioFile::from_scenario(self)).expect("scenario serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn check_len(field: &str, found: usize, n: usize) -> Result<(), ScenarioError> {
    if found != n {
        return Err(ScenarioError::Dimension {
            field: field.into(),
            expected: format!("{n} entries"),
            found: format!("{found}"),
        });
    }
    Ok(())
}

fn check_matrix(field: &str, mat: &[Vec<Expr>], n: usize) -> Result<(), ScenarioError> {
    let bad = mat.len() != n || mat.iter().any(|row| row.len() != n);
    if bad {
        let shape: Vec<usize> = mat.iter().map(Vec::len).collect();
        return Err(ScenarioError::Dimension {
            field: field.into(),
            expected: format!("{n}x{n} matrix"),
            found: format!("{} rows with lengths {shape:?}", mat.len()),
        });
    }
    Ok(())
}

fn parse_vec<S: AsRef<str>>(field: &str, v: &[S]) -> Result<Vec<Expr>, ScenarioError> {
    v.iter()
        .enumerate()
        .map(|(i, s)| {
            parse_expression(s.as_ref()).map_err(|source| ScenarioError::Parse {
                field: format!("{field}[{i}]"),
                source,
            })
        })
        .collect()
}

/// On-disk layout of a scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub a: Vec<String>,
    pub b: Vec<Vec<String>>,
    pub g: Vec<Vec<String>>,
    pub r: Vec<Vec<String>>,
    pub f: Vec<String>,
    pub phi: Vec<PhiSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_data: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PhiSpec {
    Expr { expr: String },
    Table { interp: Interp, x: Vec<f64>, values: Vec<f64> },
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario, ScenarioError> {
        let n = self.n;
        if n < 2 {
            return Err(ScenarioError::NTooSmall(n));
        }
        if self.m > n {
            return Err(ScenarioError::MTooLarge { m: self.m, n });
        }
        check_len("a", self.a.len(), n)?;
        let mat = |name: &str, rows: &[Vec<String>]| -> Result<Vec<Vec<Expr>>, ScenarioError> {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(ScenarioError::Dimension {
                    field: name.into(),
                    expected: format!("{n}x{n} matrix"),
                    found: format!("{} rows with lengths {:?}", rows.len(), rows.iter().map(Vec::len).collect::<Vec<_>>()),
                });
            }
            rows.iter()
                .enumerate()
                .map(|(i, row)| parse_vec(&format!("{name}[{i}]"), row))
                .collect()
        };
        let a = parse_vec("a", &self.a)?;
        let b = mat("b", &self.b)?;
        let g = mat("g", &self.g)?;
        let r = mat("r", &self.r)?;
        check_len("f", self.f.len(), n)?;
        let f = parse_vec("f", &self.f)?;
        check_len("phi", self.phi.len(), n)?;
        let phi = self
            .phi
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.into_sampler(&format!("phi[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let mut s = Scenario::new(self.m, self.horizon, a, b, g, r, f, phi)?;
        if let Some(beta) = self.beta {
            s = s.with_beta(mat("beta", &beta)?)?;
        }
        if let Some(h) = self.boundary_data {
            check_len("boundary_data", h.len(), n)?;
            s = s.with_boundary_data(parse_vec("boundary_data", &h)?)?;
        }
        if let Some(ex) = self.exact {
            check_len("exact", ex.len(), n)?;
            s = s.with_exact(parse_vec("exact", &ex)?)?;
        }
        Ok(s)
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        let vs = |v: &[Expr]| v.iter().map(ToString::to_string).collect::<Vec<_>>();
        let ms = |m: &[Vec<Expr>]| m.iter().map(|row| vs(row)).collect::<Vec<_>>();
        ScenarioFile {
            n: s.n,
            m: s.m,
            horizon: s.horizon,
            a: vs(&s.a),
            b: ms(&s.b),
            g: ms(&s.g),
            r: ms(&s.r),
            f: vs(&s.f),
            phi: s.phi.iter().map(PhiSpec::from_sampler).collect(),
            beta: s.beta.as_deref().map(ms),
            boundary_data: s.boundary_data.as_deref().map(vs),
            exact: s.exact.as_deref().map(vs),
        }
    }
}

impl PhiSpec {
    fn into_sampler(self, field: &str) -> Result<Sampler, ScenarioError> {
        match self {
            PhiSpec::Expr { expr } => {
                let e = parse_expression(&expr).map_err(|source| ScenarioError::Parse {
                    field: field.into(),
                    source,
                })?;
                Ok(Sampler::Expr(e))
            }
            PhiSpec::Table { interp, x, values } => {
                if x.is_empty() || x.len() != values.len() {
                    return Err(ScenarioError::Table {
                        field: field.into(),
                        message: format!("x has {} nodes, values has {}", x.len(), values.len()),
                    });
                }
                if x.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(ScenarioError::Table {
                        field: field.into(),
                        message: "x must be strictly increasing".into(),
                    });
                }
                if x.iter().chain(values.iter()).any(|v| !v.is_finite()) {
                    return Err(ScenarioError::Table {
                        field: field.into(),
                        message: "non-finite entry".into(),
                    });
                }
                Ok(Sampler::Table { interp, x, values })
            }
        }
    }

    fn from_sampler(s: &Sampler) -> Self {
        match s {
            Sampler::Expr(e) => PhiSpec::Expr { expr: e.to_string() },
            Sampler::Table { interp, x, values } => PhiSpec::Table {
                interp: *interp,
                x: x.clone(),
                values: values.clone(),
            },
            // Mollified data is a derived object; store it tabulated.
            Sampler::Mollified(m) => {
                let x: Vec<f64> = (0..=4096).map(|i| i as f64 / 4096.0).collect();
                let values = x.iter().map(|&p| m.value(p)).collect();
                PhiSpec::Table {
                    interp: Interp::Linear,
                    x,
                    values,
                }
            }
        }
    }
}

/// Ω_β^γ: the strip of times strictly between `beta` and `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainWindow {
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Error)]
#[error("empty window: need beta < gamma, got [{beta}, {gamma}]")]
pub struct EmptyWindow {
    pub beta: f64,
    pub gamma: f64,
}

impl DomainWindow {
    pub fn new(beta: f64, gamma: f64) -> Result<Self, EmptyWindow> {
        if beta < gamma {
            Ok(DomainWindow { beta, gamma })
        } else {
            Err(EmptyWindow { beta, gamma })
        }
    }

    pub fn height(&self) -> f64 {
        self.gamma - self.beta
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.beta && t <= self.gamma
    }
}

/// Uniform validation grid over [0,1] x [0,T].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub nx: usize,
    pub nt: usize,
}

impl Default for SampleGrid {
    fn default() -> Self {
        SampleGrid { nx: 101, nt: 101 }
    }
}

impl SampleGrid {
    pub fn x(&self, i: usize) -> f64 {
        i as f64 / (self.nx - 1) as f64
    }

    pub fn t(&self, k: usize, horizon: f64) -> f64 {
        horizon * k as f64 / (self.nt - 1) as f64
    }

    pub fn points(&self, horizon: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.nt).flat_map(move |k| (0..self.nx).map(move |i| (self.x(i), self.t(k, horizon))))
    }
}

#[derive(Debug, Error)]
#[error("evaluation of `{name}` failed: {source}")]
pub struct CoefficientEvalError {
    pub name: String,
    #[source]
    pub source: EvalError,
}

#[derive(Debug, Clone, Serialize)]
pub struct SignViolation {
    pub family: usize,
    pub x: f64,
    pub t: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct L1Report {
    /// min |a_j| over the sample grid, per family.
    pub margins: Vec<f64>,
    pub floor: f64,
    pub pass: bool,
    pub violations: Vec<SignViolation>,
}

/// Check the sign pattern of the speeds on a sample grid.
pub fn validate_l1(s: &Scenario, grid: SampleGrid, floor: f64) -> Result<L1Report, CoefficientEvalError> {
    let mut margins = vec![f64::INFINITY; s.n];
    let mut violations = Vec::new();
    for (j, a) in s.a.iter().enumerate() {
        let mut first_bad: Option<SignViolation> = None;
        for (x, t) in grid.points(s.horizon) {
            let v = a.eval(x, t).map_err(|source| CoefficientEvalError {
                name: format!("a[{j}]"),
                source,
            })?;
            margins[j] = margins[j].min(v.abs());
            let ok = if s.is_forward(j) { v >= floor } else { v <= -floor };
            if !ok && first_bad.is_none() {
                first_bad = Some(SignViolation { family: j, x, t, speed: v });
            }
        }
        violations.extend(first_bad);
    }
    Ok(L1Report {
        pass: violations.is_empty(),
        margins,
        floor,
        violations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct L3Report {
    pub evaluations: usize,
    pub pass: bool,
    pub failures: Vec<String>,
}

/// Smoke evaluation of every coefficient (and the derivatives the
/// characteristic formulas use) on the sample grid.
pub fn validate_l3(s: &Scenario, grid: SampleGrid) -> L3Report {
    let mut named: Vec<(String, Expr)> = Vec::new();
    for j in 0..s.n {
        named.push((format!("a[{j}]"), s.a[j].clone()));
        named.push((format!("d/dt a[{j}]"), s.da_dt[j].clone()));
        named.push((format!("d/dx a[{j}]"), s.da_dx[j].clone()));
        named.push((format!("f[{j}]"), s.f[j].clone()));
        for k in 0..s.n {
            named.push((format!("b[{j}][{k}]"), s.b[j][k].clone()));
            named.push((format!("d/dx b[{j}][{k}]"), s.b[j][k].differentiate(Var::X)));
            named.push((format!("d/dt b[{j}][{k}]"), s.b[j][k].differentiate(Var::T)));
            named.push((format!("g[{j}][{k}]"), s.g[j][k].clone()));
            named.push((format!("r[{j}][{k}]"), s.r[j][k].clone()));
        }
    }
    let mut evaluations = 0;
    let mut failures = Vec::new();
    for (name, e) in &named {
        if e.as_const().is_some() {
            continue;
        }
        for (x, t) in grid.points(s.horizon) {
            evaluations += 1;
            if let Err(err) = e.eval(x, t) {
                failures.push(format!("{name}: {err}"));
                break;
            }
        }
    }
    L3Report {
        evaluations,
        pass: failures.is_empty(),
        failures,
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Cass1Config {
    pub grid: SampleGrid,
    /// Speeds closer than this are treated as coincident.
    pub tol: f64,
    /// Upper bound for |beta|, also scales the allowance for |b_jk| on the
    /// coincidence set.
    pub beta_cap: f64,
    /// Upper bound for the finite-difference Lipschitz estimate of beta.
    pub lipschitz_cap: f64,
}

impl Default for Cass1Config {
    fn default() -> Self {
        Cass1Config {
            grid: SampleGrid::default(),
            tol: 1e-8,
            beta_cap: 1e4,
            lipschitz_cap: 1e4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Cass1Violation {
    pub j: usize,
    pub k: usize,
    pub x: f64,
    pub t: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BetaSamples {
    pub j: usize,
    pub k: usize,
    /// Row-major over (t, x) on the sample grid; `None` where speeds coincide.
    pub values: Vec<Option<f64>>,
    pub max_abs: f64,
    pub lipschitz: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Cass1Report {
    pub pass: bool,
    pub used_supplied_beta: bool,
    pub betas: Vec<BetaSamples>,
    pub violations: Vec<Cass1Violation>,
}

impl Cass1Report {
    pub fn beta(&self, j: usize, k: usize) -> Option<&BetaSamples> {
        self.betas.iter().find(|b| b.j == j && b.k == k)
    }
}

/// Check the factorization b_jk = beta_jk (a_k - a_j) for j != k.
pub fn validate_cass1(s: &Scenario, cfg: &Cass1Config) -> Result<Cass1Report, CoefficientEvalError> {
    let grid = cfg.grid;
    let ev = |e: &Expr, name: &str, x: f64, t: f64| {
        e.eval(x, t).map_err(|source| CoefficientEvalError {
            name: name.to_string(),
            source,
        })
    };
    let mut betas = Vec::new();
    let mut violations = Vec::new();
    for j in 0..s.n {
        for k in 0..s.n {
            if j == k {
                continue;
            }
            let bname = format!("b[{j}][{k}]");
            let mut values = Vec::with_capacity(grid.nx * grid.nt);
            let mut max_abs = 0.0f64;
            let mut first_violation = None;
            for (x, t) in grid.points(s.horizon) {
                let b = ev(&s.b[j][k], &bname, x, t)?;
                let gap = ev(&s.a[k], "a", x, t)? - ev(&s.a[j], "a", x, t)?;
                if let Some(beta) = &s.beta {
                    let bv = ev(&beta[j][k], &format!("beta[{j}][{k}]"), x, t)?;
                    values.push(Some(bv));
                    max_abs = max_abs.max(bv.abs());
                    if (b - bv * gap).abs() > cfg.tol && first_violation.is_none() {
                        first_violation = Some(format!("|b - beta (a_k - a_j)| = {:.3e}", (b - bv * gap).abs()));
                        violations.push(Cass1Violation { j, k, x, t, reason: first_violation.clone().unwrap() });
                    }
                } else if gap.abs() > cfg.tol {
                    let bh = b / gap;
                    values.push(Some(bh));
                    max_abs = max_abs.max(bh.abs());
                    if bh.abs() > cfg.beta_cap && first_violation.is_none() {
                        first_violation = Some(format!("|beta| = {:.3e} exceeds cap", bh.abs()));
                        violations.push(Cass1Violation { j, k, x, t, reason: first_violation.clone().unwrap() });
                    }
                } else {
                    values.push(None);
                    if b.abs() > cfg.tol * cfg.beta_cap && first_violation.is_none() {
                        first_violation = Some(format!("speeds coincide but |b| = {:.3e}", b.abs()));
                        violations.push(Cass1Violation { j, k, x, t, reason: first_violation.clone().unwrap() });
                    }
                }
            }
            let lipschitz = lipschitz_estimate(&values, grid, s.horizon);
            if lipschitz.is_finite() && lipschitz > cfg.lipschitz_cap {
                violations.push(Cass1Violation {
                    j,
                    k,
                    x: f64::NAN,
                    t: f64::NAN,
                    reason: format!("beta Lipschitz estimate {lipschitz:.3e} exceeds cap"),
                });
            }
            betas.push(BetaSamples { j, k, values, max_abs, lipschitz });
        }
    }
    Ok(Cass1Report {
        pass: violations.is_empty(),
        used_supplied_beta: s.beta.is_some(),
        betas,
        violations,
    })
}

fn lipschitz_estimate(values: &[Option<f64>], grid: SampleGrid, horizon: f64) -> f64 {
    let dx = 1.0 / (grid.nx - 1) as f64;
    let dt = horizon / (grid.nt - 1) as f64;
    let at = |i: usize, k: usize| values[k * grid.nx + i];
    let mut best = 0.0f64;
    for k in 0..grid.nt {
        for i in 0..grid.nx {
            let Some(v) = at(i, k) else { continue };
            if i + 1 < grid.nx {
                if let Some(w) = at(i + 1, k) {
                    best = best.max((w - v).abs() / dx);
                }
            }
            if k + 1 < grid.nt {
                if let Some(w) = at(i, k + 1) {
                    best = best.max((w - v).abs() / dt);
                }
            }
        }
    }
    best
}
