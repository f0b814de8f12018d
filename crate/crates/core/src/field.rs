//! Scalar functions of the null coordinates `(u, v)`.

use std::fmt;
use std::sync::Arc;

use crate::expr::{Expr, Var};

/// A smooth function of `(u, v)` with access to derivatives along each axis.
///
/// The default derivative methods use Richardson-extrapolated centered
/// differences; implementations that know their derivatives override them.
pub trait ScalarField: Send + Sync + fmt::Debug {
    fn value(&self, u: f64, v: f64) -> f64;

    /// `d^k/du^k` at `(u, v)` for `k = 0..=order`.
    fn u_derivatives(&self, u: f64, v: f64, order: usize) -> Vec<f64> {
        richardson_derivatives(|x| self.value(x, v), u, order)
    }

    /// `d^k/dv^k` at `(u, v)` for `k = 0..=order`.
    fn v_derivatives(&self, u: f64, v: f64, order: usize) -> Vec<f64> {
        richardson_derivatives(|x| self.value(u, x), v, order)
    }

    /// True when the field is identically zero.
    fn is_zero(&self) -> bool {
        false
    }
}

pub type Field = Arc<dyn ScalarField>;

const FD_STEP: f64 = 1e-2;

fn binomial(n: usize, k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Centered k-th difference quotient with step `h`, second order in `h`.
fn central_difference<F: Fn(f64) -> f64>(f: &F, x: f64, k: usize, h: f64) -> f64 {
    let mut acc = 0.0;
    for j in 0..=k {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binomial(k, j) * f(x + (k as f64 / 2.0 - j as f64) * h);
    }
    acc / h.powi(k as i32)
}

/// Three-level Richardson extrapolation of centered differences (sixth order
/// in the step for every derivative order).
pub fn richardson_derivatives<F: Fn(f64) -> f64>(f: F, x: f64, order: usize) -> Vec<f64> {
    let mut out = vec![f(x)];
    for k in 1..=order {
        let h = FD_STEP * (1.0 + 0.5 * k as f64);
        let d1 = central_difference(&f, x, k, h);
        let d2 = central_difference(&f, x, k, h / 2.0);
        let d4 = central_difference(&f, x, k, h / 4.0);
        let r1 = (4.0 * d2 - d1) / 3.0;
        let r2 = (4.0 * d4 - d2) / 3.0;
        out.push((16.0 * r2 - r1) / 15.0);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl ScalarField for Constant {
    fn value(&self, _u: f64, _v: f64) -> f64 {
        self.0
    }
    fn u_derivatives(&self, _u: f64, _v: f64, order: usize) -> Vec<f64> {
        let mut d = vec![0.0; order + 1];
        d[0] = self.0;
        d
    }
    fn v_derivatives(&self, u: f64, v: f64, order: usize) -> Vec<f64> {
        self.u_derivatives(u, v, order)
    }
    fn is_zero(&self) -> bool {
        self.0 == 0.0
    }
}

impl ScalarField for Expr {
    fn value(&self, u: f64, v: f64) -> f64 {
        self.eval(u, v)
    }
    fn u_derivatives(&self, u: f64, v: f64, order: usize) -> Vec<f64> {
        self.derivatives(Var::U, u, v, order)
    }
    fn v_derivatives(&self, u: f64, v: f64, order: usize) -> Vec<f64> {
        self.derivatives(Var::V, u, v, order)
    }
    fn is_zero(&self) -> bool {
        self.is_constant() && self.eval(0.0, 0.0) == 0.0
    }
}

/// A closure-backed field; derivatives come from finite differences.
pub struct FnField<F>(pub F);

impl<F> fmt::Debug for FnField<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnField")
    }
}

impl<F> ScalarField for FnField<F>
where
    F: Fn(f64, f64) -> f64 + Send + Sync,
{
    fn value(&self, u: f64, v: f64) -> f64 {
        (self.0)(u, v)
    }
}

pub fn constant(c: f64) -> Field {
    Arc::new(Constant(c))
}

pub fn zero() -> Field {
    constant(0.0)
}

pub fn from_fn<F>(f: F) -> Field
where
    F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
{
    Arc::new(FnField(f))
}

/// `sum c_k f_k`, with derivatives combined term by term.
#[derive(Debug, Clone)]
pub struct Combination(pub Vec<(f64, Field)>);

impl Combination {
    fn sum<F: Fn(&Field) -> Vec<f64>>(&self, order: usize, d: F) -> Vec<f64> {
        let mut out = vec![0.0; order + 1];
        for (c, f) in &self.0 {
            if *c == 0.0 || f.is_zero() {
                continue;
            }
            for (o, x) in out.iter_mut().zip(d(f)) {
                *o += c * x;
            }
        }
        out
    }
}

impl ScalarField for Combination {
    fn value(&self, u: f64, v: f64) -> f64 {
        self.0.iter().map(|(c, f)| if *c == 0.0 { 0.0 } else { c * f.value(u, v) }).sum()
    }
    fn u_derivatives(&self, u: f64, v: f64, order: usize) -> Vec<f64> {
        self.sum(order, |f| f.u_derivatives(u, v, order))
    }
    fn v_derivatives(&self, u: f64, v: f64, order: usize) -> Vec<f64> {
        self.sum(order, |f| f.v_derivatives(u, v, order))
    }
    fn is_zero(&self) -> bool {
        self.0.iter().all(|(c, f)| *c == 0.0 || f.is_zero())
    }
}

/// `a f + b g`.
pub fn linear_combination(a: f64, f: &Field, b: f64, g: &Field) -> Field {
    Arc::new(Combination(vec![(a, f.clone()), (b, g.clone())]))
}

/// `a f`.
pub fn scaled(a: f64, f: &Field) -> Field {
    Arc::new(Combination(vec![(a, f.clone())]))
}

pub fn expr(src: &str) -> crate::Result<Field> {
    let e = Expr::parse(src)?;
    if e.is_constant() {
        return Ok(constant(e.eval(0.0, 0.0)));
    }
    Ok(Arc::new(e))
}
