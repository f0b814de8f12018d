//! `P = 4 d_u d_v + A d_u + B d_v + q`, its formal adjoint
//! `P^dag = 4 d_u d_v - A d_u - B d_v + (q - div X)` with `div X = d_u A + d_v B`,
//! and the Green vector field `j` with `div j = chi P phi - phi P^dag chi`.

use std::sync::Arc;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{self, Field};
use crate::geometry::{GridRef, SlabGrid};
use crate::par;

/// Upper bound on transverse jet orders available from coefficient fields.
pub const MAX_JET_ORDER: usize = 16;

#[derive(Debug, Clone)]
pub struct WaveOperator {
    /// Coefficient of `d_u`.
    pub a: Field,
    /// Coefficient of `d_v`.
    pub b: Field,
    pub q: Field,
    pub jet_order: usize,
}

/// Transverse jets `d_u^k A, d_u^k B, d_u^k q` at one point of `u = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientJets {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub q: Vec<f64>,
}

impl WaveOperator {
    pub fn new(a: Field, b: Field, q: Field) -> Self {
        WaveOperator { a, b, q, jet_order: MAX_JET_ORDER }
    }

    pub fn d_alembertian() -> Self {
        Self::new(field::zero(), field::zero(), field::zero())
    }

    pub fn klein_gordon(q: f64) -> Self {
        Self::new(field::zero(), field::zero(), field::constant(q))
    }

    pub fn with_jet_order(mut self, order: usize) -> Self {
        self.jet_order = order;
        self
    }

    /// `X` is tangent to the null line exactly when `A` vanishes.
    pub fn x_is_tangent(&self) -> bool {
        self.a.is_zero()
    }

    pub fn is_formally_self_adjoint(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    pub fn div_x(&self, u: f64, v: f64) -> f64 {
        let da = if self.a.is_zero() { 0.0 } else { self.a.u_derivatives(u, v, 1)[1] };
        let db = if self.b.is_zero() { 0.0 } else { self.b.v_derivatives(u, v, 1)[1] };
        da + db
    }

    /// `P phi` from the pointwise derivatives of `phi`.
    pub fn apply_at(&self, u: f64, v: f64, phi: f64, phi_u: f64, phi_v: f64, phi_uv: f64) -> f64 {
        4.0 * phi_uv + self.a.value(u, v) * phi_u + self.b.value(u, v) * phi_v + self.q.value(u, v) * phi
    }

    /// `P^dag chi` from the pointwise derivatives of `chi`.
    pub fn apply_adjoint_at(&self, u: f64, v: f64, chi: f64, chi_u: f64, chi_v: f64, chi_uv: f64) -> f64 {
        4.0 * chi_uv - self.a.value(u, v) * chi_u - self.b.value(u, v) * chi_v
            + (self.q.value(u, v) - self.div_x(u, v)) * chi
    }

    /// Jets up to `order` on the null line at `v`.
    pub fn jets_on_null(&self, v: f64, order: usize) -> Result<CoefficientJets> {
        if order > self.jet_order {
            return Err(Error::JetOrderExceeded { requested: order, available: self.jet_order });
        }
        Ok(CoefficientJets {
            a: self.a.u_derivatives(0.0, v, order),
            b: self.b.u_derivatives(0.0, v, order),
            q: self.q.u_derivatives(0.0, v, order),
        })
    }

    /// Coefficients of `P` sampled at grid nodes.
    pub fn sample(&self, grid: &SlabGrid) -> NodeCoefficients {
        let (nu, nv) = grid.shape();
        let mut a = Array2::zeros((nu, nv));
        let mut b = Array2::zeros((nu, nv));
        let mut q = Array2::zeros((nu, nv));
        let mut div = Array2::zeros((nu, nv));
        for (arr, f) in [(&mut a, &self.a), (&mut b, &self.b), (&mut q, &self.q)] {
            if f.is_zero() {
                continue;
            }
            par::fill_rows(arr, |i, mut row| {
                for j in 0..nv {
                    row[j] = f.value(grid.u(i), grid.v(j));
                }
            });
        }
        if !self.is_formally_self_adjoint() {
            par::fill_rows(&mut div, |i, mut row| {
                for j in 0..nv {
                    row[j] = self.div_x(grid.u(i), grid.v(j));
                }
            });
        }
        NodeCoefficients { a, b, q, div }
    }
}

#[derive(Debug, Clone)]
pub struct NodeCoefficients {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub q: Array2<f64>,
    pub div: Array2<f64>,
}

/// Samples of a function on every node of a grid.
///
/// `ring` counts the outer layers of nodes that carry no valid value (set by
/// stencil operations, which cannot reach the boundary).
#[derive(Debug, Clone)]
pub struct GridField {
    pub grid: GridRef,
    pub values: Array2<f64>,
    pub ring: usize,
}

impl GridField {
    pub fn new(grid: GridRef, values: Array2<f64>) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(Error::ShapeMismatch);
        }
        Ok(GridField { grid, values, ring: 0 })
    }

    pub fn zeros(grid: &GridRef) -> Self {
        GridField { grid: grid.clone(), values: Array2::zeros(grid.shape()), ring: 0 }
    }

    pub fn from_fn<F>(grid: &GridRef, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Sync + Send,
    {
        let mut values = Array2::zeros(grid.shape());
        let g = grid.clone();
        par::fill_rows(&mut values, |i, mut row| {
            for j in 0..g.nv() {
                row[j] = f(g.u(i), g.v(j));
            }
        });
        GridField { grid: grid.clone(), values, ring: 0 }
    }

    pub fn same_grid(&self, other: &GridField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_as(&other.grid)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    /// Max of `|value|` over valid nodes.
    pub fn max_abs(&self) -> f64 {
        let (nu, nv) = self.grid.shape();
        let r = self.ring;
        let mut m = 0.0f64;
        for i in r..nu.saturating_sub(r) {
            for j in r..nv.saturating_sub(r) {
                m = m.max(self.values[[i, j]].abs());
            }
        }
        m
    }

    pub fn max_abs_diff(&self, other: &GridField) -> Result<f64> {
        if !self.same_grid(other) {
            return Err(Error::ShapeMismatch);
        }
        let r = self.ring.max(other.ring);
        let (nu, nv) = self.grid.shape();
        let mut m = 0.0f64;
        for i in r..nu.saturating_sub(r) {
            for j in r..nv.saturating_sub(r) {
                m = m.max((self.values[[i, j]] - other.values[[i, j]]).abs());
            }
        }
        Ok(m)
    }

    pub fn scaled(&self, a: f64) -> GridField {
        GridField { grid: self.grid.clone(), values: &self.values * a, ring: self.ring }
    }

    pub fn linear_combination(&self, a: f64, other: &GridField, b: f64) -> Result<GridField> {
        if !self.same_grid(other) {
            return Err(Error::ShapeMismatch);
        }
        Ok(GridField {
            grid: self.grid.clone(),
            values: &self.values * a + &other.values * b,
            ring: self.ring.max(other.ring),
        })
    }

    /// Values on the `u = 0` line.
    pub fn trace(&self) -> Vec<f64> {
        self.values.row(self.grid.i0()).to_vec()
    }

    /// Largest `|value|` within `width` nodes of the grid boundary.
    pub fn boundary_max(&self, width: usize) -> f64 {
        let (nu, nv) = self.grid.shape();
        let mut m = 0.0f64;
        for i in 0..nu {
            for j in 0..nv {
                if i < width || j < width || i + width >= nu || j + width >= nv {
                    m = m.max(self.values[[i, j]].abs());
                }
            }
        }
        m
    }
}

/// `mu_g`-quadrature `sum(values) h^2 / 2` over valid nodes.
pub fn integrate(f: &GridField) -> f64 {
    let (nu, nv) = f.grid.shape();
    let r = f.ring;
    let mut acc = 0.0;
    for i in r..nu.saturating_sub(r) {
        for j in r..nv.saturating_sub(r) {
            acc += f.values[[i, j]];
        }
    }
    acc * f.grid.h * f.grid.h * 0.5
}

fn ensure_stencil_room(grid: &SlabGrid) -> Result<()> {
    let (nu, nv) = grid.shape();
    if nu < 3 || nv < 3 {
        return Err(Error::GridTooSmall { needed: 3, have_u: nu, have_v: nv });
    }
    Ok(())
}

/// `4 f_uv + a f_u + b f_v + c f` with second-order centered differences.
fn stencil(f: &GridField, a: &Array2<f64>, b: &Array2<f64>, c: &Array2<f64>) -> Result<GridField> {
    let grid = &f.grid;
    ensure_stencil_room(grid)?;
    let (nu, nv) = grid.shape();
    let h = grid.h;
    let x = &f.values;
    let mut out = Array2::zeros((nu, nv));
    par::fill_rows(&mut out, |i, mut row| {
        if i == 0 || i + 1 == nu {
            return;
        }
        for j in 1..nv - 1 {
            let fuv = (x[[i + 1, j + 1]] - x[[i + 1, j - 1]] - x[[i - 1, j + 1]] + x[[i - 1, j - 1]]) / (4.0 * h * h);
            let fu = (x[[i + 1, j]] - x[[i - 1, j]]) / (2.0 * h);
            let fv = (x[[i, j + 1]] - x[[i, j - 1]]) / (2.0 * h);
            row[j] = 4.0 * fuv + a[[i, j]] * fu + b[[i, j]] * fv + c[[i, j]] * x[[i, j]];
        }
    });
    Ok(GridField { grid: grid.clone(), values: out, ring: f.ring + 1 })
}

pub fn apply_p(op: &WaveOperator, phi: &GridField) -> Result<GridField> {
    let k = op.sample(&phi.grid);
    apply_p_with(&k, phi)
}

pub fn apply_p_with(k: &NodeCoefficients, phi: &GridField) -> Result<GridField> {
    stencil(phi, &k.a, &k.b, &k.q)
}

pub fn apply_p_adjoint(op: &WaveOperator, chi: &GridField) -> Result<GridField> {
    let k = op.sample(&chi.grid);
    apply_p_adjoint_with(&k, chi)
}

pub fn apply_p_adjoint_with(k: &NodeCoefficients, chi: &GridField) -> Result<GridField> {
    // `0.0 - x` keeps zero coefficients as +0.0, so X = 0 reproduces P bit for bit.
    let na = k.a.mapv(|x| 0.0 - x);
    let nb = k.b.mapv(|x| 0.0 - x);
    let c = &k.q - &k.div;
    stencil(chi, &na, &nb, &c)
}

/// Components `(j^u, j^v)` of `j = chi grad phi - phi grad chi + chi phi X`,
/// using `grad f = (2 f_v, 2 f_u)` and `X = (A, B)`.
pub fn green_vector_field(op: &WaveOperator, chi: &GridField, phi: &GridField) -> Result<(GridField, GridField)> {
    if !chi.same_grid(phi) {
        return Err(Error::ShapeMismatch);
    }
    let grid = &phi.grid;
    ensure_stencil_room(grid)?;
    let k = op.sample(grid);
    Ok(green_vector_field_with(&k, chi, phi))
}

fn green_vector_field_with(k: &NodeCoefficients, chi: &GridField, phi: &GridField) -> (GridField, GridField) {
    let grid = &phi.grid;
    let (nu, nv) = grid.shape();
    let h = grid.h;
    let (c, p) = (&chi.values, &phi.values);
    let mut ju = Array2::zeros((nu, nv));
    let mut jv = Array2::zeros((nu, nv));
    par::fill_rows(&mut ju, |i, mut row| {
        if i == 0 || i + 1 == nu {
            return;
        }
        for j in 1..nv - 1 {
            let pv = (p[[i, j + 1]] - p[[i, j - 1]]) / (2.0 * h);
            let cv = (c[[i, j + 1]] - c[[i, j - 1]]) / (2.0 * h);
            row[j] = 2.0 * (c[[i, j]] * pv - p[[i, j]] * cv) + c[[i, j]] * p[[i, j]] * k.a[[i, j]];
        }
    });
    par::fill_rows(&mut jv, |i, mut row| {
        if i == 0 || i + 1 == nu {
            return;
        }
        for j in 1..nv - 1 {
            let pu = (p[[i + 1, j]] - p[[i - 1, j]]) / (2.0 * h);
            let cu = (c[[i + 1, j]] - c[[i - 1, j]]) / (2.0 * h);
            row[j] = 2.0 * (c[[i, j]] * pu - p[[i, j]] * cu) + c[[i, j]] * p[[i, j]] * k.b[[i, j]];
        }
    });
    let ring = chi.ring.max(phi.ring) + 1;
    (
        GridField { grid: grid.clone(), values: ju, ring },
        GridField { grid: grid.clone(), values: jv, ring },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreenIdentityReport {
    /// Max over interior nodes of `|chi P phi - phi P^dag chi - div j|`.
    pub max_abs_residual: f64,
    /// `|integral (chi P phi - phi P^dag chi) mu_g|`.
    pub quadrature_residual: f64,
}

pub fn check_green_identity(op: &WaveOperator, phi: &GridField, chi: &GridField) -> Result<GreenIdentityReport> {
    if !chi.same_grid(phi) {
        return Err(Error::ShapeMismatch);
    }
    let grid = phi.grid.clone();
    ensure_stencil_room(&grid)?;
    for (name, f) in [("phi", phi), ("chi", chi)] {
        let m = f.boundary_max(2);
        if m > 0.0 {
            return Err(Error::SupportTouchesBoundary(format!("{name} is {m:e} within two nodes of the edge")));
        }
    }
    let k = op.sample(&grid);
    let p_phi = apply_p_with(&k, phi)?;
    let pd_chi = apply_p_adjoint_with(&k, chi)?;
    let (ju, jv) = green_vector_field_with(&k, chi, phi);
    let (nu, nv) = grid.shape();
    let h = grid.h;
    let mut lhs = Array2::zeros((nu, nv));
    for i in 1..nu - 1 {
        for j in 1..nv - 1 {
            lhs[[i, j]] = chi.values[[i, j]] * p_phi.values[[i, j]] - phi.values[[i, j]] * pd_chi.values[[i, j]];
        }
    }
    let mut max_abs_residual = 0.0f64;
    for i in 2..nu.saturating_sub(2) {
        for j in 2..nv.saturating_sub(2) {
            let div = (ju.values[[i + 1, j]] - ju.values[[i - 1, j]] + jv.values[[i, j + 1]] - jv.values[[i, j - 1]])
                / (2.0 * h);
            max_abs_residual = max_abs_residual.max((lhs[[i, j]] - div).abs());
        }
    }
    let quad = integrate(&GridField { grid, values: lhs, ring: 1 });
    Ok(GreenIdentityReport { max_abs_residual, quadrature_residual: quad.abs() })
}
