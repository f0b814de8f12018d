//! Null hypersurfaces in a (d+1)-dimensional spacetime and their expansion
//! density `L_{n#}(iota_n mu_g)`.
//!
//! A hypersurface is given by a generator-adapted chart `(s, y) -> x`: the
//! curves of constant `y` are null generators, and the base conormal is
//! `n = g(d_s, .)`, so that `n# = d_s`. For a rescaled conormal `alpha n` the
//! weight `iota_{alpha n} mu_g` and the generator field `g^{-1}(alpha n)` are
//! recomputed from scratch rather than derived from the base case.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

pub type ChartFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
pub type MetricFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
/// A scalar function on the hypersurface in chart coordinates.
pub type ScalarOnN<'a> = &'a (dyn Fn(f64, &[f64]) -> f64 + Sync);

/// Tolerance on `|g(d_s, d_s)|` and `|g(d_s, d_y)|` for a chart to count as adapted.
pub const ADAPTED_TOL: f64 = 1e-8;

const DEFAULT_STEP: f64 = 1e-4;

#[derive(Clone)]
pub struct HypersurfaceParam {
    pub dim_ambient: usize,
    chart: ChartFn,
    metric: MetricFn,
    step: f64,
}

impl std::fmt::Debug for HypersurfaceParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HypersurfaceParam")
            .field("dim_ambient", &self.dim_ambient)
            .field("step", &self.step)
            .finish()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionSamples {
    pub points: Vec<(f64, Vec<f64>)>,
    /// `iota_n mu_g` weights in `|ds dy|`.
    pub weight: Vec<f64>,
    /// Expansion density in `|ds dy|`.
    pub expansion: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConformalReport {
    pub exponent: f64,
    pub max_abs_error: f64,
    /// Relative to the largest expected density, floored at `ADAPTED_TOL`
    /// times the largest weight so that vanishing densities compare their
    /// finite-difference noise against the weight scale.
    pub max_rel_error: f64,
}

fn d4<F: Fn(f64) -> T, T: Sub4>(f: F, x: f64, h: f64) -> T {
    T::combine(f(x - 2.0 * h), f(x - h), f(x + h), f(x + 2.0 * h), h)
}

trait Sub4 {
    fn combine(m2: Self, m1: Self, p1: Self, p2: Self, h: f64) -> Self;
}

impl Sub4 for f64 {
    fn combine(m2: f64, m1: f64, p1: f64, p2: f64, h: f64) -> f64 {
        (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h)
    }
}

impl Sub4 for Vec<f64> {
    fn combine(m2: Vec<f64>, m1: Vec<f64>, p1: Vec<f64>, p2: Vec<f64>, h: f64) -> Vec<f64> {
        (0..m2.len()).map(|k| f64::combine(m2[k], m1[k], p1[k], p2[k], h)).collect()
    }
}

impl HypersurfaceParam {
    pub fn new(dim_ambient: usize, chart: ChartFn, metric: MetricFn) -> Self {
        HypersurfaceParam { dim_ambient, chart, metric, step: DEFAULT_STEP }
    }

    /// Geometric difference step `max(1e-4, h/10)` tied to a grid spacing `h`.
    pub fn with_grid_spacing(mut self, h: f64) -> Self {
        self.step = DEFAULT_STEP.max(h / 10.0);
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    fn dim_n(&self) -> usize {
        self.dim_ambient - 1
    }

    pub fn point(&self, s: f64, y: &[f64]) -> Vec<f64> {
        (self.chart)(s, y)
    }

    pub fn metric_at(&self, s: f64, y: &[f64]) -> DMatrix<f64> {
        (self.metric)(&self.point(s, y))
    }

    /// Columns `d_s x, d_{y_1} x, ...`.
    fn jacobian(&self, s: f64, y: &[f64]) -> DMatrix<f64> {
        let n = self.dim_ambient;
        let mut j = DMatrix::zeros(n, n - 1);
        let h = self.step;
        let ds = d4(|x| self.point(x, y), s, h);
        for r in 0..n {
            j[(r, 0)] = ds[r];
        }
        for k in 0..y.len() {
            let col = d4(
                |x| {
                    let mut yy = y.to_vec();
                    yy[k] = x;
                    self.point(s, &yy)
                },
                y[k],
                h,
            );
            for r in 0..n {
                j[(r, k + 1)] = col[r];
            }
        }
        j
    }

    /// Ambient components of the base conormal `n = g(d_s, .)`.
    fn base_conormal(&self, s: f64, y: &[f64], jac: &DMatrix<f64>) -> DVector<f64> {
        self.metric_at(s, y) * jac.column(0)
    }

    fn check_adapted(&self, s: f64, y: &[f64]) -> Result<()> {
        let jac = self.jacobian(s, y);
        let g = self.metric_at(s, y);
        let es = jac.column(0);
        let nn = (es.transpose() * &g * es)[(0, 0)];
        if nn.abs() > ADAPTED_TOL {
            return Err(Error::NotAdapted(format!("|g(d_s, d_s)| = {:e} at s = {s}", nn.abs())));
        }
        for k in 1..jac.ncols() {
            let ek = jac.column(k);
            let x = (es.transpose() * &g * ek)[(0, 0)];
            if x.abs() > ADAPTED_TOL {
                return Err(Error::NotAdapted(format!("|g(d_s, d_y{k})| = {:e} at s = {s}", x.abs())));
            }
        }
        Ok(())
    }

    /// Weight of `iota_{alpha n} mu_{lambda g}` and the chart components of the
    /// generator `(lambda g)^{-1}(alpha n)` at one point.
    fn local(&self, s: f64, y: &[f64], alpha: f64, lambda: f64) -> (f64, DVector<f64>) {
        let jac = self.jacobian(s, y);
        let n_e = self.base_conormal(s, y, &jac);
        let g = self.metric_at(s, y) * lambda;
        let theta = &n_e / n_e.norm_squared();
        let dim = self.dim_ambient;
        let mut frame = DMatrix::zeros(dim, dim);
        frame.set_column(0, &theta);
        for k in 0..dim - 1 {
            frame.set_column(k + 1, &jac.column(k));
        }
        let vol = g.determinant().abs().sqrt();
        let w = vol * frame.determinant().abs() / alpha.abs();
        let ginv = g.clone().try_inverse().expect("metric must be invertible");
        let gen_ambient = ginv * (&n_e * alpha);
        let jt = jac.transpose();
        let a = (&jt * &jac)
            .lu()
            .solve(&(&jt * gen_ambient))
            .expect("chart Jacobian must have full rank");
        (w, a)
    }
}

fn density_core(
    hs: &HypersurfaceParam,
    lambda: ScalarOnN<'_>,
    alpha: ScalarOnN<'_>,
    points: &[(f64, Vec<f64>)],
) -> Result<ExpansionSamples> {
    let h = hs.step;
    let dn = hs.dim_n();
    let mut weight = Vec::with_capacity(points.len());
    let mut expansion = Vec::with_capacity(points.len());
    for (idx, (s, y)) in points.iter().enumerate() {
        if y.len() + 1 != dn {
            return Err(Error::NotAdapted(format!("chart point has {} transverse coordinates", y.len())));
        }
        hs.check_adapted(*s, y)?;
        let a0 = alpha(*s, y);
        if a0 == 0.0 || !a0.is_finite() {
            return Err(Error::VanishingConormal { index: idx });
        }
        let flux = |ss: f64, yy: &[f64], comp: usize| {
            let (w, a) = hs.local(ss, yy, alpha(ss, yy), lambda(ss, yy));
            a[comp] * w
        };
        let mut e = d4(|x| flux(x, y, 0), *s, h);
        for k in 0..y.len() {
            e += d4(
                |x| {
                    let mut yy = y.clone();
                    yy[k] = x;
                    flux(*s, &yy, k + 1)
                },
                y[k],
                h,
            );
        }
        weight.push(hs.local(*s, y, a0, lambda(*s, y)).0);
        expansion.push(e);
    }
    Ok(ExpansionSamples { points: points.to_vec(), weight, expansion })
}

/// Expansion density of the conormal `alpha n` at the given chart points.
pub fn expansion_density(
    hs: &HypersurfaceParam,
    alpha: ScalarOnN<'_>,
    points: &[(f64, Vec<f64>)],
) -> Result<ExpansionSamples> {
    density_core(hs, &|_, _| 1.0, alpha, points)
}

/// Expansion density for the conformally related metric `lambda g`, with the
/// conormal `alpha n` held fixed as a covector.
pub fn expansion_density_in(
    hs: &HypersurfaceParam,
    lambda: ScalarOnN<'_>,
    alpha: ScalarOnN<'_>,
    points: &[(f64, Vec<f64>)],
) -> Result<ExpansionSamples> {
    density_core(hs, lambda, alpha, points)
}

/// Compares the expansion density under `lambda g` with `lambda^((d-1)/2)`
/// times the density under `g`.
///
/// For `d = 1` the law has exponent zero and holds for any positive
/// `lambda`, so the constancy precondition is only enforced for `d > 1`.
pub fn conformal_scaling_check(
    hs: &HypersurfaceParam,
    lambda: ScalarOnN<'_>,
    points: &[(f64, Vec<f64>)],
) -> Result<ConformalReport> {
    let d = hs.dim_n();
    for (s, y) in points {
        let l = lambda(*s, y);
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::NonPositiveScale(format!("lambda = {l} at s = {s}")));
        }
        if d > 1 {
            let dl = d4(|x| lambda(x, y), *s, hs.step);
            if dl.abs() > ADAPTED_TOL * (1.0 + l.abs()) {
                return Err(Error::NotConstantAlongGenerators(dl.abs()));
            }
        }
    }
    let exponent = (d as f64 - 1.0) / 2.0;
    let one = |_: f64, _: &[f64]| 1.0;
    let base = density_core(hs, &one, &one, points)?;
    let scaled = density_core(hs, lambda, &one, points)?;
    let expected: Vec<f64> = points
        .iter()
        .zip(&base.expansion)
        .map(|((s, y), e)| lambda(*s, y).powf(exponent) * e)
        .collect();
    let floor = ADAPTED_TOL * scaled.weight.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let denom = expected.iter().fold(floor, |m, e| m.max(e.abs())).max(f64::MIN_POSITIVE);
    let max_err = expected.iter().zip(&scaled.expansion).fold(0.0f64, |m, (e, x)| m.max((e - x).abs()));
    Ok(ConformalReport { exponent, max_abs_error: max_err, max_rel_error: max_err / denom })
}

/// Weight of `T phi = {2 n# phi + n(X) phi} iota_n mu_g + phi L_{n#}(iota_n mu_g)`
/// for the conormal `alpha n`, where `dphi_ds` is the derivative along `d_s`
/// and `n_of_x` the value of `n(X)` for the rescaled conormal.
pub fn t_operator_weight(
    hs: &HypersurfaceParam,
    alpha: ScalarOnN<'_>,
    phi: ScalarOnN<'_>,
    dphi_ds: ScalarOnN<'_>,
    n_of_x: ScalarOnN<'_>,
    points: &[(f64, Vec<f64>)],
    include_expansion: bool,
) -> Result<Vec<f64>> {
    let ex = expansion_density(hs, alpha, points)?;
    Ok(points
        .iter()
        .enumerate()
        .map(|(k, (s, y))| {
            let a = alpha(*s, y);
            let mut w = (2.0 * a * dphi_ds(*s, y) + n_of_x(*s, y) * phi(*s, y)) * ex.weight[k];
            if include_expansion {
                w += phi(*s, y) * ex.expansion[k];
            }
            w
        })
        .collect())
}

/// Outgoing light cone `t = r` in 3+1 Minkowski space, signature `(+,-,-,-)`,
/// charted by `(s, theta, phi) -> (s, s sin(theta) cos(phi), s sin(theta) sin(phi), s cos(theta))`.
pub fn light_cone() -> HypersurfaceParam {
    let chart: ChartFn = Arc::new(|s, y| {
        let (th, ph) = (y[0], y[1]);
        vec![s, s * th.sin() * ph.cos(), s * th.sin() * ph.sin(), s * th.cos()]
    });
    let metric: MetricFn = Arc::new(|_| DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, -1.0, -1.0])));
    HypersurfaceParam::new(4, chart, metric)
}

/// The line `u = 0` of the slab in ambient coordinates `(u, v)`, metric
/// `Omega du dv`, charted by `s = v`. The base conormal is `Omega du / 2`.
pub fn null_line(omega: crate::field::Field) -> HypersurfaceParam {
    let chart: ChartFn = Arc::new(|s, _| vec![0.0, s]);
    let metric: MetricFn = Arc::new(move |x| {
        let o = omega.value(x[0], x[1]);
        DMatrix::from_row_slice(2, 2, &[0.0, 0.5 * o, 0.5 * o, 0.0])
    });
    HypersurfaceParam::new(2, chart, metric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cone_points() -> Vec<(f64, Vec<f64>)> {
        let mut p = Vec::new();
        for &s in &[1.0, 2.0, 3.5, 5.0] {
            for &th in &[0.4, 1.3, 2.2] {
                p.push((s, vec![th, 0.7]));
            }
        }
        p
    }

    #[test]
    fn flat_null_line_has_zero_expansion() {
        let hs = null_line(crate::field::constant(1.0));
        let pts: Vec<_> = (0..10).map(|k| (1.0 + 0.5 * k as f64, vec![])).collect();
        let ex = expansion_density(&hs, &|_, _| 2.0, &pts).unwrap();
        for (w, e) in ex.weight.iter().zip(&ex.expansion) {
            assert_relative_eq!(*w, 0.5, epsilon = 1e-12);
            assert!(e.abs() <= 1e-10);
        }
    }

    #[test]
    fn light_cone_ratio_is_two_over_r() {
        let hs = light_cone();
        let pts = cone_points();
        let ex = expansion_density(&hs, &|_, _| 1.0, &pts).unwrap();
        for (k, (s, y)) in pts.iter().enumerate() {
            assert_relative_eq!(ex.weight[k], s * s * y[0].sin(), max_relative = 1e-10);
            assert_relative_eq!(ex.expansion[k] / ex.weight[k], 2.0 / s, max_relative = 1e-6);
        }
    }

    #[test]
    fn non_null_chart_is_rejected() {
        let chart: ChartFn = Arc::new(|s, _| vec![s, 0.5 * s]);
        let metric: MetricFn = Arc::new(|_| DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0])));
        let hs = HypersurfaceParam::new(2, chart, metric);
        let e = expansion_density(&hs, &|_, _| 1.0, &[(1.0, vec![])]);
        assert!(matches!(e, Err(Error::NotAdapted(_))));
    }

    #[test]
    fn conformal_law_on_light_cone() {
        let hs = light_cone();
        let rep = conformal_scaling_check(&hs, &|_, _| 4.0, &cone_points()).unwrap();
        assert_eq!(rep.exponent, 1.0);
        assert!(rep.max_rel_error < 1e-6, "{}", rep.max_rel_error);
        let e = conformal_scaling_check(&hs, &|s, _| 1.0 + s, &cone_points());
        assert!(matches!(e, Err(Error::NotConstantAlongGenerators(_))));
    }

    #[test]
    fn expansion_term_is_visible_in_t_weight() {
        let hs = light_cone();
        let pts = cone_points();
        let phi = |s: f64, _: &[f64]| (-(s - 3.0).powi(2)).exp();
        let dphi = |s: f64, _: &[f64]| -2.0 * (s - 3.0) * (-(s - 3.0).powi(2)).exp();
        let zero = |_: f64, _: &[f64]| 0.0;
        let with = t_operator_weight(&hs, &|_, _| 1.0, &phi, &dphi, &zero, &pts, true).unwrap();
        let without = t_operator_weight(&hs, &|_, _| 1.0, &phi, &dphi, &zero, &pts, false).unwrap();
        let diff = with.iter().zip(&without).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff > 1e-3);
    }
}
