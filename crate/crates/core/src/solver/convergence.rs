//! Refinement studies: errors on a sequence of grids and observed orders.

use serde::Serialize;

use super::grid::{GridSolution, GridSpec};
use super::marching::{solve_marching_with, FootInterp};
use super::SolverError;
use crate::field::Field;
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub nx: usize,
    pub dt: f64,
    /// Sup error against the exact solution, or the sup difference to the
    /// next finer grid when no exact solution is known.
    pub error: f64,
    /// Order between this row and the previous one.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    /// `exact` or `successive`.
    pub reference: String,
    pub interp: FootInterp,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn min_order(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.order).reduce(f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("nx,dt,error,order\n");
        for r in &self.rows {
            let order = r.order.map(|o| o.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{:e},{}\n", r.nx, r.dt, r.error, order));
        }
        out
    }
}

/// Sup over the nodes of `coarse` of the difference to `fine`, which is
/// evaluated bilinearly.
fn sup_difference(coarse: &GridSolution, fine: &GridSolution) -> f64 {
    let mut best = 0.0f64;
    for j in 0..coarse.n {
        for l in 0..coarse.levels {
            let t = coarse.t(l);
            for (i, v) in coarse.level(j, l).iter().enumerate() {
                best = best.max((v - fine.value(j, coarse.x(i), t)).abs());
            }
        }
    }
    best
}

/// Solve on each grid of `grids` (strictly increasing `nx`) with
/// `dt = courant · h / max|a|` and tabulate errors. Without an exact
/// solution the last grid only serves as reference, so the table has one
/// row fewer.
pub fn convergence_table(s: &Scenario, grids: &[usize], courant: f64, interp: FootInterp) -> Result<ConvergenceTable, SolverError> {
    if grids.len() < 3 {
        return Err(SolverError::Invalid(format!("a refinement study needs at least 3 grids, got {}", grids.len())));
    }
    if grids.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SolverError::Invalid(format!("grids must be strictly increasing, got {grids:?}")));
    }
    let speed = s.max_speed();
    let sols = grids
        .iter()
        .map(|&nx| solve_marching_with(s, GridSpec::with_courant(nx, courant, speed, s.horizon), interp))
        .collect::<Result<Vec<_>, _>>()?;
    let (reference, errors): (&str, Vec<f64>) = match &s.exact {
        Some(ex) => ("exact", sols.iter().map(|u| u.sup_error(|j, x, t| ex[j].value(x, t))).collect()),
        None => ("successive", sols.windows(2).map(|w| sup_difference(&w[0], &w[1])).collect()),
    };
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(errors.len());
    for (k, &error) in errors.iter().enumerate() {
        let order = (k > 0).then(|| (errors[k - 1] / error).ln() / (grids[k] as f64 / grids[k - 1] as f64).ln());
        rows.push(ConvergenceRow {
            nx: grids[k],
            dt: sols[k].dt,
            error,
            order,
        });
    }
    Ok(ConvergenceTable {
        reference: reference.into(),
        interp,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Sampler;

    #[test]
    fn rejects_short_or_unsorted_lists() {
        let s = Scenario::from_strings(1, 1.0, &["1", "-1"], None, None, None, None, vec![Sampler::zero(); 2]).unwrap();
        assert!(convergence_table(&s, &[10, 20], 0.8, FootInterp::Linear).is_err());
        assert!(convergence_table(&s, &[10, 20, 20], 0.8, FootInterp::Linear).is_err());
    }

    #[test]
    fn zero_solution_has_zero_errors() {
        let s = Scenario::from_strings(
            1,
            1.0,
            &["1+0.3*x", "-1"],
            Some(&[&["0.2", "0"], &["0", "0.1"]]),
            None,
            None,
            None,
            vec![Sampler::zero(); 2],
        )
        .unwrap()
        .with_exact(vec![crate::expr::Expr::constant(0.0), crate::expr::Expr::constant(0.0)])
        .unwrap();
        let t = convergence_table(&s, &[10, 20, 40], 0.8, FootInterp::Cubic).unwrap();
        assert!(t.rows.iter().all(|r| r.error == 0.0));
    }
}
