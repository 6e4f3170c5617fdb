//! Exponential envelopes `M e^{ωt}` for norm histories.
//!
//! The growth rate ω is the least-squares slope of `ln ρ(t)`, where ρ is
//! the ratio of the solution norm to the initial-data norm; M is then the
//! smallest constant making `ρ(t) ≤ M e^{ωt}` hold at every sample, times
//! an optional safety factor.

use serde::Serialize;

use super::grid::GridSolution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthFit {
    pub m: f64,
    pub omega: f64,
}

/// A sample where the envelope fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeViolation {
    pub t: f64,
    pub ratio: f64,
    pub bound: f64,
}

impl GrowthFit {
    pub fn bound(&self, t: f64) -> f64 {
        self.m * (self.omega * t).exp()
    }

    /// Worst sample of `ratio / bound`; values ≤ 1 mean the envelope holds.
    pub fn worst(&self, history: &[(f64, f64)]) -> f64 {
        history.iter().map(|&(t, r)| r / self.bound(t)).fold(0.0, f64::max)
    }

    /// First sample exceeding `slack · bound`.
    pub fn violation(&self, history: &[(f64, f64)], slack: f64) -> Option<EnvelopeViolation> {
        history.iter().find(|&&(t, r)| r > slack * self.bound(t)).map(|&(t, r)| EnvelopeViolation {
            t,
            ratio: r,
            bound: self.bound(t),
        })
    }
}

/// `(t, max_j ‖u_j(·,t)‖ / max_j ‖u_j(·,0)‖)` over all levels. A zero initial
/// norm gives the raw norms.
pub fn norm_ratio_history(u: &GridSolution) -> Vec<(f64, f64)> {
    let base = u.max_l2(0);
    let scale = if base > 0.0 { 1.0 / base } else { 1.0 };
    (0..u.levels).map(|l| (u.t(l), u.max_l2(l) * scale)).collect()
}

/// Fit `(M, ω)` to a ratio history. Samples below `1e-12 · max` are ignored
/// for the slope but still bounded.
pub fn fit_growth(history: &[(f64, f64)], safety: f64) -> GrowthFit {
    let peak = history.iter().map(|p| p.1).fold(0.0, f64::max);
    if peak == 0.0 {
        return GrowthFit { m: 0.0, omega: 0.0 };
    }
    let pts: Vec<(f64, f64)> = history
        .iter()
        .filter(|p| p.1 > 1e-12 * peak)
        .map(|&(t, r)| (t, r.ln()))
        .collect();
    let omega = if pts.len() >= 2 {
        let k = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
        if sxx > 0.0 {
            sxy / sxx
        } else {
            0.0
        }
    } else {
        0.0
    };
    let m = history.iter().map(|&(t, r)| r * (-omega * t).exp()).fold(0.0, f64::max);
    GrowthFit { m: m * safety, omega }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_exponential_is_recovered() {
        let h: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 0.1, 2.0 * (0.3 * i as f64 * 0.1).exp())).collect();
        let f = fit_growth(&h, 1.0);
        assert!((f.omega - 0.3).abs() < 1e-12);
        assert!((f.m - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn envelope_bounds_its_own_data(vals in proptest::collection::vec(1e-3f64..10.0, 2..60), safety in 1.0f64..1.2) {
            let h: Vec<(f64, f64)> = vals.iter().enumerate().map(|(i, v)| (i as f64 * 0.05, *v)).collect();
            let f = fit_growth(&h, safety);
            prop_assert!(f.worst(&h) <= 1.0 + 1e-12);
            prop_assert!(f.violation(&h, 1.0 + 1e-12).is_none());
        }
    }
}
