//! Vector fields `u(x, t)` that operators can be applied to.

use crate::expr::Expr;

/// A vector function on [0,1] x [0,∞), component-indexed from zero.
pub trait Field: Sync {
    fn value(&self, k: usize, x: f64, t: f64) -> f64;

    /// Spacing of the x-grid the field interpolates on, if any. Quadrature
    /// in x is then aligned to that grid so interpolation kinks fall on
    /// panel boundaries.
    fn x_spacing(&self) -> Option<f64> {
        None
    }
}

/// Field given by a closure.
pub struct FnField<F>(pub F);

impl<F> Field for FnField<F>
where
    F: Fn(usize, f64, f64) -> f64 + Sync,
{
    fn value(&self, k: usize, x: f64, t: f64) -> f64 {
        (self.0)(k, x, t)
    }
}

/// Field with one expression per component.
pub struct ExprField(pub Vec<Expr>);

impl Field for ExprField {
    fn value(&self, k: usize, x: f64, t: f64) -> f64 {
        self.0[k].value(x, t)
    }
}

pub struct ZeroField;

impl Field for ZeroField {
    fn value(&self, _k: usize, _x: f64, _t: f64) -> f64 {
        0.0
    }
}

/// Smooth trigonometric test field. For two components this is
/// `(sin πx, cos πt)`; further components mix both variables.
pub struct TrigField;

impl Field for TrigField {
    fn value(&self, k: usize, x: f64, t: f64) -> f64 {
        use std::f64::consts::PI;
        match k {
            0 => (PI * x).sin(),
            1 => (PI * t).cos(),
            _ => {
                let kf = k as f64;
                (PI * kf * x + 0.3).sin() * (0.7 * kf * t).cos()
            }
        }
    }
}

impl<T: Field + ?Sized> Field for &T {
    fn value(&self, k: usize, x: f64, t: f64) -> f64 {
        (**self).value(k, x, t)
    }

    fn x_spacing(&self) -> Option<f64> {
        (**self).x_spacing()
    }
}
