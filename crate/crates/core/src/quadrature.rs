//! Composite quadrature on panels: Gauss-Legendre or Simpson.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureKind {
    GaussLegendre,
    Simpson,
}

/// A composite rule: `panels` equal panels, each with a fixed local rule.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub kind: QuadratureKind,
    pub order: usize,
    pub panels: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule::gauss_legendre(8, 4)
    }
}

impl QuadratureRule {
    pub fn gauss_legendre(order: usize, panels: usize) -> Self {
        assert!(order >= 1 && panels >= 1);
        let (nodes, weights) = gauss_legendre_nodes(order);
        QuadratureRule {
            kind: QuadratureKind::GaussLegendre,
            order,
            panels,
            nodes,
            weights,
        }
    }

    pub fn simpson(panels: usize) -> Self {
        assert!(panels >= 1);
        QuadratureRule {
            kind: QuadratureKind::Simpson,
            order: 3,
            panels,
            nodes: vec![-1.0, 0.0, 1.0],
            weights: vec![1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0],
        }
    }

    /// Same local rule with twice as many panels.
    pub fn refined(&self) -> Self {
        let mut r = self.clone();
        r.panels *= 2;
        r
    }

    pub fn with_panels(&self, panels: usize) -> Self {
        let mut r = self.clone();
        r.panels = panels.max(1);
        r
    }

    /// Reference nodes and weights on [-1, 1].
    pub fn reference(&self) -> (&[f64], &[f64]) {
        (&self.nodes, &self.weights)
    }

    /// Signed integral of `f` over [a, b].
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let w = (b - a) / self.panels as f64;
        let mut total = 0.0;
        for p in 0..self.panels {
            let lo = a + w * p as f64;
            total += self.panel(lo, lo + w, &mut f);
        }
        total
    }

    /// Signed integral with the panel boundaries forced through `breaks`;
    /// each piece between consecutive breaks gets `self.panels` panels.
    pub fn integrate_with_breaks(&self, a: f64, b: f64, breaks: &[f64], mut f: impl FnMut(f64) -> f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&p| p > lo && p < hi).collect();
        cuts.sort_by(f64::total_cmp);
        let mut total = 0.0;
        let mut left = lo;
        for right in cuts.into_iter().chain(std::iter::once(hi)) {
            if right > left {
                total += self.integrate(left, right, &mut f);
            }
            left = right;
        }
        sign * total
    }

    /// Signed integral with one local rule per cell of the uniform grid of
    /// spacing `h` anchored at 0; cells are clipped to [a, b].
    pub fn integrate_aligned(&self, a: f64, b: f64, h: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut total = 0.0;
        let mut left = lo;
        let mut cell = (lo / h).floor() as i64 + 1;
        loop {
            let edge = cell as f64 * h;
            let right = if edge < hi - 1e-14 * h { edge } else { hi };
            if right > left {
                total += self.panel(left, right, &mut f);
            }
            if right >= hi {
                break;
            }
            left = right;
            cell += 1;
        }
        sign * total
    }

    /// Nodes and signed weights with one local rule per grid cell of spacing
    /// `h` (clipped to [a, b]), or the plain composite rule when `h` is None.
    pub fn points_on(&self, a: f64, b: f64, h: Option<f64>) -> Vec<(f64, f64)> {
        let Some(h) = h else {
            return self.points(a, b);
        };
        if a == b {
            return Vec::new();
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut out = Vec::new();
        let mut left = lo;
        let mut cell = (lo / h).floor() as i64 + 1;
        loop {
            let edge = cell as f64 * h;
            let right = if edge < hi - 1e-14 * h { edge } else { hi };
            if right > left {
                let half = 0.5 * (right - left);
                let mid = left + half;
                for (s, w) in self.nodes.iter().zip(&self.weights) {
                    out.push((mid + half * s, sign * half * w));
                }
            }
            if right >= hi {
                break;
            }
            left = right;
            cell += 1;
        }
        out
    }

    /// Nodes and weights of the composite rule on [a, b] (signed weights).
    pub fn points(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let w = (b - a) / self.panels as f64;
        let mut out = Vec::with_capacity(self.panels * self.nodes.len());
        for p in 0..self.panels {
            let lo = a + w * p as f64;
            let mid = lo + 0.5 * w;
            for (s, wt) in self.nodes.iter().zip(&self.weights) {
                out.push((mid + 0.5 * w * s, 0.5 * w * wt));
            }
        }
        out
    }

    #[inline]
    fn panel(&self, lo: f64, hi: f64, f: &mut impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = lo + half;
        let mut acc = 0.0;
        for (s, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * s);
        }
        acc * half
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], ascending.
pub fn gauss_legendre_nodes(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_to_degree_2p_minus_1() {
        for p in 1..=12usize {
            let rule = QuadratureRule::gauss_legendre(p, 1);
            for deg in 0..=(2 * p - 1) {
                let exact = (1.0f64.powi(deg as i32 + 1) - (-0.5f64).powi(deg as i32 + 1)) / (deg as f64 + 1.0);
                let got = rule.integrate(-0.5, 1.0, |x| x.powi(deg as i32));
                assert!((got - exact).abs() < 1e-14 * (1.0 + exact.abs()), "p={p} deg={deg}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn weights_sum_to_two() {
        for p in 1..=16 {
            let (_, w) = gauss_legendre_nodes(p);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let r = QuadratureRule::simpson(3);
        let got = r.integrate(0.0, 2.0, |x| x * x * x - x);
        assert!((got - 2.0).abs() < 1e-14);
    }

    #[test]
    fn signed_orientation() {
        let r = QuadratureRule::default();
        assert!((r.integrate(1.0, 0.0, |x| x) + 0.5).abs() < 1e-15);
        assert!((r.integrate_aligned(1.0, 0.0, 0.1, |x| x) + 0.5).abs() < 1e-15);
        assert!((r.integrate_with_breaks(1.0, 0.0, &[0.3], |x| x) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn aligned_handles_kinks_exactly() {
        let r = QuadratureRule::gauss_legendre(2, 1);
        // kink at 0.5, a node of the grid of spacing 0.25
        let got = r.integrate_aligned(0.0, 1.0, 0.25, |x| (x - 0.5).abs());
        assert!((got - 0.25).abs() < 1e-14);
        let got = r.integrate_aligned(0.1, 0.9, 0.25, |x| x);
        assert!((got - 0.4).abs() < 1e-14);
    }

    #[test]
    fn points_reproduce_integrate() {
        let r = QuadratureRule::gauss_legendre(5, 3);
        let a: f64 = r.points(0.2, 1.7).iter().map(|(x, w)| w * x.sin()).sum();
        assert!((a - r.integrate(0.2, 1.7, f64::sin)).abs() < 1e-15);
    }
}
