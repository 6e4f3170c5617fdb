//! Smooth approximations of initial data: convolution with a compactly
//! supported polynomial kernel, multiplied by a cutoff vanishing near x = 0
//! and x = 1.

use serde::Serialize;

use crate::quadrature::gauss_legendre_nodes;
use crate::scenario::Sampler;

/// `χ_δ · (K_ε * base)` where `K_ε(s) = (315/256)/ε · (1 - (s/ε)²)^4` on
/// `|s| < ε` and `χ_δ` is a C³ cutoff equal to 1 on `[2δ, 1-2δ]` and to 0
/// outside `(δ, 1-δ)`. The base is extended outside [0, 1] by its end values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mollified {
    #[serde(skip)]
    pub base: Sampler,
    pub eps: f64,
    pub delta: f64,
}

const KERNEL_ORDER: usize = 8;

impl Mollified {
    pub fn value(&self, x: f64) -> f64 {
        let chi = cutoff(x, self.delta);
        if chi == 0.0 {
            return 0.0;
        }
        chi * self.convolved(x)
    }

    /// `(K_ε * base)(x)` without the cutoff.
    pub fn convolved(&self, x: f64) -> f64 {
        let eps = self.eps;
        let (nodes, weights) = gauss_legendre_nodes(KERNEL_ORDER);
        // pieces of s in [-1, 1] between breakpoints of the base
        let mut cuts: Vec<f64> = self
            .base
            .breakpoints(x - eps, x + eps)
            .into_iter()
            .map(|p| (p - x) / eps)
            .collect();
        for end in [0.0, 1.0] {
            let s = (end - x) / eps;
            if s > -1.0 && s < 1.0 {
                cuts.push(s);
            }
        }
        cuts.sort_by(f64::total_cmp);
        let mut total = 0.0;
        let mut lo = -1.0;
        for hi in cuts.into_iter().chain(std::iter::once(1.0)) {
            if hi > lo {
                let half = 0.5 * (hi - lo);
                let mid = lo + half;
                let mut acc = 0.0;
                for (z, w) in nodes.iter().zip(&weights) {
                    let s = mid + half * z;
                    let y = (x + eps * s).clamp(0.0, 1.0);
                    acc += w * kernel(s) * self.base.value(y);
                }
                total += half * acc;
            }
            lo = hi;
        }
        total
    }
}

#[inline]
fn kernel(s: f64) -> f64 {
    let q = 1.0 - s * s;
    315.0 / 256.0 * q * q * q * q
}

/// C³ smoothstep on [0, 1].
#[inline]
fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * s * (35.0 - 84.0 * s + 70.0 * s * s - 20.0 * s * s * s)
}

fn cutoff(x: f64, delta: f64) -> f64 {
    if delta <= 0.0 {
        return if (0.0..=1.0).contains(&x) { 1.0 } else { 0.0 };
    }
    let d = x.min(1.0 - x);
    if d <= delta {
        0.0
    } else if d >= 2.0 * delta {
        1.0
    } else {
        smoothstep((d - delta) / delta)
    }
}

/// Mollify `base` with width `eps` and cutoff parameter `delta`.
pub fn mollify(base: &Sampler, eps: f64, delta: f64) -> Sampler {
    assert!(eps > 0.0 && delta >= 0.0 && 4.0 * delta < 1.0, "invalid mollifier parameters");
    Sampler::Mollified(Box::new(Mollified {
        base: base.clone(),
        eps,
        delta,
    }))
}
