//! Solutions stored on a uniform space-time grid, their norms and file formats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::field::Field;

#[derive(Debug, Error)]
pub enum GridIoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed grid file: {0}")]
    Format(String),
}

/// Uniform grid specification: `nx` cells in x, step `dt` in t, up to `horizon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub dt: f64,
    pub horizon: f64,
}

impl GridSpec {
    pub fn new(nx: usize, dt: f64, horizon: f64) -> Self {
        assert!(nx >= 1 && dt > 0.0 && horizon > 0.0, "invalid grid");
        GridSpec { nx, dt, horizon }
    }

    /// Step equal to `courant · h / max_speed`.
    pub fn with_courant(nx: usize, courant: f64, max_speed: f64, horizon: f64) -> Self {
        GridSpec::new(nx, courant / (nx as f64 * max_speed), horizon)
    }

    pub fn h(&self) -> f64 {
        1.0 / self.nx as f64
    }

    /// Number of stored levels, the last one at or just past the horizon.
    pub fn levels(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil() as usize + 1
    }

    /// Half the spacing and half the step, ending on the last level of this
    /// grid so that every level here has a partner there.
    pub fn halved(&self) -> Self {
        let last = (self.levels() - 1) as f64 * self.dt;
        GridSpec::new(self.nx * 2, self.dt / 2.0, last)
    }
}

/// Values `u_j(x_i, t_l)` with `x_i = i/N`, `t_l = l·Δt`, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub n: usize,
    pub nx: usize,
    pub levels: usize,
    pub dt: f64,
    values: Vec<f64>,
}

impl GridSolution {
    pub fn zeros(n: usize, nx: usize, levels: usize, dt: f64) -> Self {
        GridSolution {
            n,
            nx,
            levels,
            dt,
            values: vec![0.0; n * levels * (nx + 1)],
        }
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec::new(self.nx, self.dt, self.t(self.levels - 1).max(self.dt))
    }

    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.nx as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 / self.nx as f64
    }

    #[inline]
    pub fn t(&self, l: usize) -> f64 {
        l as f64 * self.dt
    }

    #[inline]
    fn offset(&self, j: usize, l: usize) -> usize {
        (j * self.levels + l) * (self.nx + 1)
    }

    #[inline]
    pub fn get(&self, j: usize, l: usize, i: usize) -> f64 {
        self.values[self.offset(j, l) + i]
    }

    pub fn level(&self, j: usize, l: usize) -> &[f64] {
        let o = self.offset(j, l);
        &self.values[o..o + self.nx + 1]
    }

    pub fn level_mut(&mut self, j: usize, l: usize) -> &mut [f64] {
        let o = self.offset(j, l);
        let w = self.nx + 1;
        &mut self.values[o..o + w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Linear interpolation in x at level `l`.
    #[inline]
    pub fn interp_x(&self, j: usize, l: usize, x: f64) -> f64 {
        lerp_nodes(self.level(j, l), x)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Trapezoid L² norm of component `j` at level `l`.
    pub fn l2_norm(&self, j: usize, l: usize) -> f64 {
        l2_trapezoid(self.level(j, l))
    }

    /// `max_j ‖u_j(·, t_l)‖`.
    pub fn max_l2(&self, l: usize) -> f64 {
        (0..self.n).map(|j| self.l2_norm(j, l)).fold(0.0, f64::max)
    }

    /// Largest |u| over the levels in `[l0, l1]`.
    pub fn sup_norm(&self, l0: usize, l1: usize) -> f64 {
        let mut best = 0.0f64;
        for j in 0..self.n {
            for l in l0..=l1.min(self.levels - 1) {
                best = self.level(j, l).iter().fold(best, |m, v| m.max(v.abs()));
            }
        }
        best
    }

    /// Per-level `(t, L²_1, ..., L²_n)`.
    pub fn norm_history(&self) -> Vec<(f64, Vec<f64>)> {
        (0..self.levels)
            .map(|l| (self.t(l), (0..self.n).map(|j| self.l2_norm(j, l)).collect()))
            .collect()
    }

    /// `max_l ‖u(·, t_l) - v(·, t_l)‖` (max over components), for solutions on the same grid.
    pub fn l2_distance(&self, other: &GridSolution) -> f64 {
        assert_eq!((self.n, self.nx, self.levels), (other.n, other.nx, other.levels));
        let mut best = 0.0f64;
        let mut diff = vec![0.0; self.nx + 1];
        for j in 0..self.n {
            for l in 0..self.levels {
                for ((d, a), b) in diff.iter_mut().zip(self.level(j, l)).zip(other.level(j, l)) {
                    *d = a - b;
                }
                best = best.max(l2_trapezoid(&diff));
            }
        }
        best
    }

    /// Largest nodal difference to another solution on the same grid.
    pub fn sup_distance(&self, other: &GridSolution) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Largest nodal difference to a closed form evaluated at the nodes.
    pub fn sup_error(&self, exact: impl Fn(usize, f64, f64) -> f64) -> f64 {
        let mut best = 0.0f64;
        for j in 0..self.n {
            for l in 0..self.levels {
                let t = self.t(l);
                for (i, v) in self.level(j, l).iter().enumerate() {
                    best = best.max((v - exact(j, self.x(i), t)).abs());
                }
            }
        }
        best
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), GridIoError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["x".to_string(), "t".to_string()];
        header.extend((1..=self.n).map(|j| format!("u_{j}")));
        w.write_record(&header)?;
        for l in 0..self.levels {
            for i in 0..=self.nx {
                let mut rec = vec![fmt(self.x(i)), fmt(self.t(l))];
                rec.extend((0..self.n).map(|j| fmt(self.get(j, l, i))));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, GridIoError> {
        let mut r = csv::Reader::from_path(path)?;
        let n = r.headers()?.len().checked_sub(2).ok_or_else(|| GridIoError::Format("missing columns".into()))?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| GridIoError::Format(format!("bad number {s:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        let nx = rows
            .iter()
            .position(|r| r[1] != rows[0][1])
            .unwrap_or(rows.len())
            .checked_sub(1)
            .filter(|&v| v >= 1)
            .ok_or_else(|| GridIoError::Format("fewer than two x nodes".into()))?;
        if !rows.len().is_multiple_of(nx + 1) {
            return Err(GridIoError::Format("row count is not a multiple of the x-grid size".into()));
        }
        let levels = rows.len() / (nx + 1);
        let dt = if levels > 1 { rows[nx + 1][1] - rows[0][1] } else { 0.0 };
        let mut g = GridSolution::zeros(n, nx, levels, dt);
        for (idx, row) in rows.iter().enumerate() {
            let (l, i) = (idx / (nx + 1), idx % (nx + 1));
            for j in 0..n {
                g.level_mut(j, l)[i] = row[j + 2];
            }
        }
        Ok(g)
    }

    /// Little-endian layout: `n`, `N`, `levels` as u64, `Δt` as f64, then
    /// the values in component, level, node order.
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<(), GridIoError> {
        let mut w = BufWriter::new(File::create(path)?);
        for v in [self.n as u64, self.nx as u64, self.levels as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.dt.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: impl AsRef<Path>) -> Result<Self, GridIoError> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        if bytes.len() < 32 || bytes.len() % 8 != 0 {
            return Err(GridIoError::Format("truncated header".into()));
        }
        let word = |k: usize| -> [u8; 8] { bytes[8 * k..8 * k + 8].try_into().unwrap() };
        let n = u64::from_le_bytes(word(0)) as usize;
        let nx = u64::from_le_bytes(word(1)) as usize;
        let levels = u64::from_le_bytes(word(2)) as usize;
        let dt = f64::from_le_bytes(word(3));
        let count = n * levels * (nx + 1);
        if bytes.len() != 32 + 8 * count {
            return Err(GridIoError::Format(format!("expected {count} values")));
        }
        let values = (0..count).map(|k| f64::from_le_bytes(word(4 + k))).collect();
        Ok(GridSolution { n, nx, levels, dt, values })
    }

    /// CSV with columns `t, L2_1, ..., L2_n`.
    pub fn write_norms(&self, path: impl AsRef<Path>) -> Result<(), GridIoError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.n).map(|j| format!("L2_{j}")));
        w.write_record(&header)?;
        for (t, norms) in self.norm_history() {
            let mut rec = vec![fmt(t)];
            rec.extend(norms.iter().map(|v| fmt(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same f64.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

/// Piecewise-linear interpolation of nodal values on the uniform grid of [0, 1].
#[inline]
pub fn lerp_nodes(vals: &[f64], x: f64) -> f64 {
    let nx = vals.len() - 1;
    let s = (x * nx as f64).clamp(0.0, nx as f64);
    let i = (s.floor() as usize).min(nx - 1);
    let w = s - i as f64;
    vals[i] * (1.0 - w) + vals[i + 1] * w
}

/// Four-point Lagrange interpolation of nodal values on [0, 1]; the stencil
/// is shifted inward at the ends. Falls back to linear on tiny grids.
pub fn cubic_nodes(vals: &[f64], x: f64) -> f64 {
    let nx = vals.len() - 1;
    if nx < 3 {
        return lerp_nodes(vals, x);
    }
    let s = (x * nx as f64).clamp(0.0, nx as f64);
    let i = (s.floor() as usize).clamp(1, nx - 2);
    let w = s - i as f64;
    if w == 0.0 {
        return vals[i];
    }
    let (wm, w0, w1, w2) = (
        -w * (w - 1.0) * (w - 2.0) / 6.0,
        (w + 1.0) * (w - 1.0) * (w - 2.0) / 2.0,
        -(w + 1.0) * w * (w - 2.0) / 2.0,
        (w + 1.0) * w * (w - 1.0) / 6.0,
    );
    wm * vals[i - 1] + w0 * vals[i] + w1 * vals[i + 1] + w2 * vals[i + 2]
}

/// Composite trapezoid L² norm of nodal values on [0, 1].
pub fn l2_trapezoid(vals: &[f64]) -> f64 {
    let nx = vals.len() - 1;
    let h = 1.0 / nx as f64;
    let inner: f64 = vals[1..nx].iter().map(|v| v * v).sum();
    (h * (inner + 0.5 * (vals[0] * vals[0] + vals[nx] * vals[nx]))).sqrt()
}

impl Field for GridSolution {
    /// Bilinear interpolation; times past the last level use the last level.
    fn value(&self, k: usize, x: f64, t: f64) -> f64 {
        let s = (t / self.dt).clamp(0.0, (self.levels - 1) as f64);
        let l = (s.floor() as usize).min(self.levels.saturating_sub(2));
        if self.levels == 1 {
            return self.interp_x(k, 0, x);
        }
        let w = s - l as f64;
        let a = self.interp_x(k, l, x);
        if w == 0.0 {
            return a;
        }
        a * (1.0 - w) + self.interp_x(k, l + 1, x) * w
    }

    fn x_spacing(&self) -> Option<f64> {
        Some(self.h())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_interpolation_reproduces_cubics() {
        let p = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x - 3.0 * x * x * x;
        let vals: Vec<f64> = (0..=10).map(|i| p(i as f64 / 10.0)).collect();
        for x in [0.0, 0.03, 0.31, 0.5, 0.97, 1.0] {
            assert!((cubic_nodes(&vals, x) - p(x)).abs() < 1e-13, "{x}");
        }
    }

    fn filled(f: impl Fn(usize, f64, f64) -> f64) -> GridSolution {
        let mut g = GridSolution::zeros(2, 1000, 3, 0.5);
        for j in 0..2 {
            for l in 0..3 {
                let t = g.t(l);
                let xs: Vec<f64> = (0..=1000).map(|i| g.x(i)).collect();
                for (v, x) in g.level_mut(j, l).iter_mut().zip(xs) {
                    *v = f(j, x, t);
                }
            }
        }
        g
    }

    #[test]
    fn norms() {
        let one = filled(|_, _, _| 1.0);
        assert!((one.l2_norm(0, 0) - 1.0).abs() < 1e-14);
        let lin = filled(|_, x, _| x);
        assert!((lin.l2_norm(1, 2) - (1.0f64 / 3.0).sqrt()).abs() < 1e-6);
        let scaled = filled(|_, x, _| -3.0 * x);
        assert!((scaled.l2_norm(0, 1) - 3.0 * lin.l2_norm(0, 1)).abs() < 1e-12);
        assert_eq!(scaled.sup_norm(0, 2), 3.0);
    }

    #[test]
    fn bilinear_field_is_exact_for_bilinear_data() {
        let g = filled(|j, x, t| 1.0 + j as f64 + 2.0 * x - t + x * t);
        for (x, t) in [(0.1234, 0.3), (0.9999, 0.77), (0.0, 1.0)] {
            let v = g.value(1, x, t);
            // x·t is bilinear in each cell, so the interpolant reproduces it
            assert!((v - (2.0 + 2.0 * x - t + x * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_and_csv_round_trip() {
        let g = filled(|j, x, t| (j as f64 + 1.0) * (x * 7.0).sin() + t / 3.0);
        let dir = std::env::temp_dir().join(format!("smoothlab-grid-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        g.write_binary(dir.join("u.bin")).unwrap();
        assert_eq!(GridSolution::read_binary(dir.join("u.bin")).unwrap(), g);
        g.write_csv(dir.join("u.csv")).unwrap();
        let back = GridSolution::read_csv(dir.join("u.csv")).unwrap();
        assert_eq!(back.values(), g.values());
        for l in 0..3 {
            assert!((back.max_l2(l) - g.max_l2(l)).abs() < 1e-12);
        }
        std::fs::remove_dir_all(dir).ok();
    }
}
