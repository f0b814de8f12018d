//! Transverse jets `psi_r = d_u^r phi |_{u=0}` from the tower of propagation
//! equations along the generators of the null line.
//!
//! Differentiating `P phi = F` `r` times in `u` and restricting to `u = 0`:
//!
//! ```text
//! 4 psi'_{r+1} + A psi_{r+1} = d_u^r F
//!     - sum_{k=1..r} C(r,k) A_k psi_{r+1-k}
//!     - sum_{k=0..r} C(r,k) (B_{r-k} psi'_k + q_{r-k} psi_k)
//! ```
//!
//! with `A_k = d_u^k A |_{u=0}` and so on. Each level is a linear ODE in `v`
//! integrated by RK4 from a cross-section below (future type) or above
//! (past type) all data supports, where `psi_{r+1}` starts at zero.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{Field, ScalarField};
use crate::geometry::{Interval, SlabGrid};
use crate::operators::{WaveOperator, MAX_JET_ORDER};

/// Values below this are treated as zero when checking data supports.
pub const SUPPORT_TOL: f64 = 1e-12;
pub const DEFAULT_N_JET: usize = 6;
pub const MAX_N_JET: usize = 12;
pub const DEFAULT_MARGIN_CELLS: usize = 5;

/// Data `f` on the null line, sampled on the grid's v-nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicDatum {
    pub f: Vec<f64>,
    /// `f'` on the same nodes.
    pub df: Vec<f64>,
    /// `None` for identically zero data.
    pub support: Option<Interval>,
}

pub(crate) fn fd_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|j| {
            if j >= 2 && j + 2 < n {
                (f[j - 2] - 8.0 * f[j - 1] + 8.0 * f[j + 1] - f[j + 2]) / (12.0 * h)
            } else if j + 4 < n {
                (-25.0 * f[j] + 48.0 * f[j + 1] - 36.0 * f[j + 2] + 16.0 * f[j + 3] - 3.0 * f[j + 4]) / (12.0 * h)
            } else if j >= 4 {
                (25.0 * f[j] - 48.0 * f[j - 1] + 36.0 * f[j - 2] - 16.0 * f[j - 3] + 3.0 * f[j - 4]) / (12.0 * h)
            } else {
                0.0
            }
        })
        .collect()
}

impl CharacteristicDatum {
    pub fn zero(grid: &SlabGrid) -> Self {
        CharacteristicDatum { f: vec![0.0; grid.nv()], df: vec![0.0; grid.nv()], support: None }
    }

    /// Samples of `f`; `f'` from fourth-order differences.
    pub fn from_samples(grid: &SlabGrid, f: Vec<f64>, support: Interval) -> Result<Self> {
        if f.len() != grid.nv() {
            return Err(Error::ShapeMismatch);
        }
        let df = fd_derivative(&f, grid.h);
        let d = CharacteristicDatum { f, df, support: Some(support) };
        d.validate(grid)?;
        Ok(d)
    }

    /// Data `f(v) = field(0, v)` with exact derivatives from the field.
    pub fn from_field(grid: &SlabGrid, field: &dyn ScalarField, support: Interval) -> Result<Self> {
        let mut f = Vec::with_capacity(grid.nv());
        let mut df = Vec::with_capacity(grid.nv());
        for &v in grid.v_coords() {
            let d = field.v_derivatives(0.0, v, 1);
            f.push(d[0]);
            df.push(d[1]);
        }
        let d = CharacteristicDatum { f, df, support: Some(support) };
        d.validate(grid)?;
        Ok(d)
    }

    pub fn validate(&self, grid: &SlabGrid) -> Result<()> {
        if self.f.len() != grid.nv() || self.df.len() != grid.nv() {
            return Err(Error::ShapeMismatch);
        }
        let Some(s) = self.support else {
            if self.f.iter().any(|x| x.abs() > SUPPORT_TOL) {
                return Err(Error::DataViolation {
                    condition: "temporal compactness of f",
                    detail: "nonzero samples but no support interval".into(),
                });
            }
            return Ok(());
        };
        let (lo, hi) = (grid.v(0), grid.v(grid.nv() - 1));
        if !(s.lo > lo && s.hi < hi && s.lo <= s.hi) {
            return Err(Error::DataViolation {
                condition: "temporal compactness of f",
                detail: format!("support [{}, {}] not strictly inside the v-range [{lo}, {hi}]", s.lo, s.hi),
            });
        }
        for (j, &x) in self.f.iter().enumerate() {
            let v = grid.v(j);
            if !s.contains(v) && x.abs() > SUPPORT_TOL {
                return Err(Error::DataViolation {
                    condition: "temporal compactness of f",
                    detail: format!("|f({v})| = {:e} outside the declared support", x.abs()),
                });
            }
        }
        Ok(())
    }

    pub fn sup_norm(&self) -> f64 {
        self.f.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, a: f64) -> Self {
        CharacteristicDatum {
            f: self.f.iter().map(|x| a * x).collect(),
            df: self.df.iter().map(|x| a * x).collect(),
            support: self.support,
        }
    }

    /// `a self + b other`; the support is the hull of both.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        let support = match (self.support, other.support) {
            (Some(x), Some(y)) => Some(x.hull(&y)),
            (x, None) => x,
            (None, y) => y,
        };
        CharacteristicDatum {
            f: self.f.iter().zip(&other.f).map(|(x, y)| a * x + b * y).collect(),
            df: self.df.iter().zip(&other.df).map(|(x, y)| a * x + b * y).collect(),
            support,
        }
    }
}

/// A source `F` supported in `J(N)` with v-bounds `[v_c, v_d]`.
#[derive(Debug, Clone)]
pub struct Inhomogeneity {
    pub field: Field,
    pub v_bounds: Interval,
    pub jet_order: usize,
}

impl Inhomogeneity {
    pub fn new(field: Field, v_bounds: Interval) -> Self {
        Inhomogeneity { field, v_bounds, jet_order: MAX_JET_ORDER }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Inhomogeneity {
            field: crate::field::scaled(a, &self.field),
            v_bounds: self.v_bounds,
            jet_order: self.jet_order,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JetType {
    Future,
    Past,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JetSequence {
    pub order: usize,
    /// `psi[r][j]` is `d_u^r phi` at `(0, v_j)`.
    pub psi: Vec<Vec<f64>>,
    /// `d/dv` of each row.
    pub dpsi: Vec<Vec<f64>>,
    pub jet_type: JetType,
    pub cross_section_v: f64,
    pub cross_section_index: usize,
}

impl JetSequence {
    /// `1e-10 (1 + max |psi_r|)`.
    pub fn tol_support(&self, r: usize) -> f64 {
        1e-10 * (1.0 + self.psi[r].iter().fold(0.0f64, |m, x| m.max(x.abs())))
    }

    /// Whether every `psi_r`, `r >= 1`, vanishes on the side of the data
    /// support that the declared type forbids (shrunk by one cell).
    pub fn support_law_holds(&self, grid: &SlabGrid, data: Interval) -> bool {
        for r in 1..=self.order {
            let tol = self.tol_support(r);
            for (j, &x) in self.psi[r].iter().enumerate() {
                let v = grid.v(j);
                let forbidden = match self.jet_type {
                    JetType::Future => v < data.lo - grid.h,
                    JetType::Past => v > data.hi + grid.h,
                };
                if forbidden && x.abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

/// Transverse jets of the coefficients and the source on every v-node.
#[derive(Debug, Clone)]
pub struct TowerJets {
    pub order: usize,
    /// `a[j][k] = d_u^k A (0, v_j)`.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    /// `A(0, v_j + h/2)`.
    pub kappa_mid: Vec<f64>,
}

impl TowerJets {
    pub fn new(op: &WaveOperator, source: Option<&Inhomogeneity>, grid: &SlabGrid, order: usize) -> Result<Self> {
        if let Some(s) = source {
            if order > s.jet_order {
                return Err(Error::JetOrderExceeded { requested: order, available: s.jet_order });
            }
        }
        let rows = crate::par::map_slice(grid.v_coords(), |&v| {
            let c = op.jets_on_null(v, order)?;
            let f = match source {
                Some(s) if !s.field.is_zero() => s.field.u_derivatives(0.0, v, order),
                _ => vec![0.0; order + 1],
            };
            Ok((c, f))
        });
        let mut a = Vec::with_capacity(grid.nv());
        let mut b = Vec::with_capacity(grid.nv());
        let mut q = Vec::with_capacity(grid.nv());
        let mut f = Vec::with_capacity(grid.nv());
        for row in rows {
            let (c, fr) = row?;
            a.push(c.a);
            b.push(c.b);
            q.push(c.q);
            f.push(fr);
        }
        let h = grid.h;
        let kappa_mid = (0..grid.nv().saturating_sub(1)).map(|j| op.a.value(0.0, grid.v(j) + 0.5 * h)).collect();
        Ok(TowerJets { order, a, b, q, f, kappa_mid })
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// The ODE `4 psi'_{r+1} + kappa psi_{r+1} = R_r` at level `r`.
#[derive(Debug, Clone)]
pub struct TowerLevel {
    pub r: usize,
    jets: Arc<TowerJets>,
}

impl TowerLevel {
    /// `kappa_r(v_j) = A(0, v_j)`.
    pub fn kappa(&self) -> Vec<f64> {
        self.jets.a.iter().map(|a| a[0]).collect()
    }

    /// Right-hand side `R_r` on every node from `psi_0..psi_r` and their v-derivatives.
    pub fn rhs(&self, psi: &[Vec<f64>], dpsi: &[Vec<f64>]) -> Vec<f64> {
        let r = self.r;
        assert!(psi.len() > r && dpsi.len() > r, "tower level {r} needs psi_0..psi_{r}");
        let jets = &self.jets;
        (0..jets.a.len())
            .map(|j| {
                let mut acc = jets.f[j][r];
                for k in 1..=r {
                    acc -= binomial(r, k) * jets.a[j][k] * psi[r + 1 - k][j];
                }
                for k in 0..=r {
                    let c = binomial(r, k);
                    acc -= c * (jets.b[j][r - k] * dpsi[k][j] + jets.q[j][r - k] * psi[k][j]);
                }
                acc
            })
            .collect()
    }
}

/// Level `r` of the tower.
pub fn assemble_tower(op: &WaveOperator, source: Option<&Inhomogeneity>, r: usize, grid: &SlabGrid) -> Result<TowerLevel> {
    let jets = TowerJets::new(op, source, grid, r)?;
    Ok(TowerLevel { r, jets: Arc::new(jets) })
}

/// Cubic interpolation of node values to the midpoint of `[j, j+1]`, biased
/// against the integration direction so the stencil never reaches past the
/// node being stepped to and the discrete support cannot spread backwards.
fn midpoint(r: &[f64], j: usize, jet_type: JetType) -> f64 {
    let n = r.len();
    let behind = match jet_type {
        JetType::Future => j >= 2,
        JetType::Past => j + 3 >= n,
    };
    if behind {
        (r[j - 2] - 5.0 * r[j - 1] + 15.0 * r[j] + 5.0 * r[j + 1]) / 16.0
    } else {
        (5.0 * r[j] + 15.0 * r[j + 1] - 5.0 * r[j + 2] + r[j + 3]) / 16.0
    }
}

/// Solves `4 y' + kappa y = rhs` from `y(v_start) = 0` with RK4 on the nodes.
pub(crate) fn integrate_level(rhs: &[f64], kappa: &[f64], kappa_mid: &[f64], start: usize, jet_type: JetType, h: f64) -> Vec<f64> {
    let n = rhs.len();
    let mut y = vec![0.0; n];
    let g = |r: f64, k: f64, y: f64| (r - k * y) / 4.0;
    match jet_type {
        JetType::Future => {
            for j in start..n - 1 {
                let rm = midpoint(rhs, j, jet_type);
                let km = kappa_mid[j];
                let y0 = y[j];
                let k1 = g(rhs[j], kappa[j], y0);
                let k2 = g(rm, km, y0 + 0.5 * h * k1);
                let k3 = g(rm, km, y0 + 0.5 * h * k2);
                let k4 = g(rhs[j + 1], kappa[j + 1], y0 + h * k3);
                y[j + 1] = y0 + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
        JetType::Past => {
            for j in (1..=start).rev() {
                let rm = midpoint(rhs, j - 1, jet_type);
                let km = kappa_mid[j - 1];
                let y0 = y[j];
                let s = -h;
                let k1 = g(rhs[j], kappa[j], y0);
                let k2 = g(rm, km, y0 + 0.5 * s * k1);
                let k3 = g(rm, km, y0 + 0.5 * s * k2);
                let k4 = g(rhs[j - 1], kappa[j - 1], y0 + s * k3);
                y[j - 1] = y0 + s / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
    }
    y
}

/// Hull of the v-supports of `f` and `F`.
pub fn data_interval(datum: &CharacteristicDatum, source: Option<&Inhomogeneity>) -> Option<Interval> {
    let s = source.filter(|s| !s.field.is_zero()).map(|s| s.v_bounds);
    match (datum.support, s) {
        (Some(a), Some(b)) => Some(a.hull(&b)),
        (a, None) => a,
        (None, b) => b,
    }
}

/// Cross-section node for the given type: `margin` cells beyond the data.
pub fn cross_section(grid: &SlabGrid, data: Option<Interval>, jet_type: JetType, margin: usize) -> Result<usize> {
    let Some(d) = data else {
        return Ok(match jet_type {
            JetType::Future => 0,
            JetType::Past => grid.nv() - 1,
        });
    };
    let m = margin as f64 * grid.h;
    match jet_type {
        JetType::Future => grid.v_index_floor(d.lo - m).ok_or_else(|| {
            Error::InfeasibleCrossSection(format!("{} - {margin} cells lies below the grid start {}", d.lo, grid.v(0)))
        }),
        JetType::Past => match grid.v_index_ceil(d.hi + m) {
            Some(j) => Ok(j),
            None => Err(Error::InfeasibleCrossSection(format!(
                "{} + {margin} cells lies above the grid end {}",
                d.hi,
                grid.v(grid.nv() - 1)
            ))),
        },
    }
}

pub fn solve_propagation(
    op: &WaveOperator,
    datum: &CharacteristicDatum,
    source: Option<&Inhomogeneity>,
    jet_type: JetType,
    n_jet: usize,
    margin: usize,
    grid: &SlabGrid,
) -> Result<JetSequence> {
    if n_jet == 0 || n_jet > MAX_N_JET {
        return Err(Error::Precondition(format!("jet order {n_jet} outside 1..={MAX_N_JET}")));
    }
    if grid.nv() < 4 {
        return Err(Error::GridTooSmall { needed: 4, have_u: grid.nu(), have_v: grid.nv() });
    }
    datum.validate(grid)?;
    let start = cross_section(grid, data_interval(datum, source), jet_type, margin)?;
    let jets = Arc::new(TowerJets::new(op, source, grid, n_jet - 1)?);
    solve_with_jets(&jets, datum, jet_type, n_jet, start, grid)
}

pub(crate) fn solve_with_jets(
    jets: &Arc<TowerJets>,
    datum: &CharacteristicDatum,
    jet_type: JetType,
    n_jet: usize,
    start: usize,
    grid: &SlabGrid,
) -> Result<JetSequence> {
    let kappa: Vec<f64> = jets.a.iter().map(|a| a[0]).collect();
    let mut psi = vec![datum.f.clone()];
    let mut dpsi = vec![datum.df.clone()];
    for r in 0..n_jet {
        let level = TowerLevel { r, jets: jets.clone() };
        let rhs = level.rhs(&psi, &dpsi);
        let y = integrate_level(&rhs, &kappa, &jets.kappa_mid, start, jet_type, grid.h);
        let dy = rhs.iter().zip(&kappa).zip(&y).map(|((r, k), y)| (r - k * y) / 4.0).collect();
        psi.push(y);
        dpsi.push(dy);
    }
    Ok(JetSequence {
        order: n_jet,
        psi,
        dpsi,
        jet_type,
        cross_section_v: grid.v(start),
        cross_section_index: start,
    })
}

/// `Delta_r = sup_v |psi_r^future - psi_r^past|`.
pub fn jump_table(future: &JetSequence, past: &JetSequence) -> Result<Vec<f64>> {
    if future.order != past.order || future.psi[0].len() != past.psi[0].len() {
        return Err(Error::ShapeMismatch);
    }
    Ok(future
        .psi
        .iter()
        .zip(&past.psi)
        .map(|(a, b)| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field;
    use crate::geometry::{build_grid, SlabSpacetime};

    fn grid(h: f64) -> SlabGrid {
        build_grid(SlabSpacetime::minkowski(0.0, 4.0).unwrap(), h, 1.0, Interval::new(1.0, 7.0)).unwrap()
    }

    fn bump_datum(g: &SlabGrid) -> CharacteristicDatum {
        let f = field::expr("bump(4, 0.8)").unwrap();
        CharacteristicDatum::from_field(g, f.as_ref(), Interval::new(3.2, 4.8)).unwrap()
    }

    #[test]
    fn order_zero_tower_for_klein_gordon() {
        let g = grid(0.1);
        let op = WaveOperator::klein_gordon(2.0);
        let src = Inhomogeneity::new(field::expr("bump(u, 0, 0.5)*bump(4, 1)").unwrap(), Interval::new(3.0, 5.0));
        let lvl = assemble_tower(&op, Some(&src), 0, &g).unwrap();
        assert!(lvl.kappa().iter().all(|&k| k == 0.0));
        let d = bump_datum(&g);
        let rhs = lvl.rhs(&[d.f.clone()], &[d.df.clone()]);
        for j in 0..g.nv() {
            let expect = src.field.value(0.0, g.v(j)) - 2.0 * d.f[j];
            assert!((rhs[j] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn leibniz_term_for_a_equal_u() {
        let g = grid(0.1);
        let op = WaveOperator::new(field::expr("u").unwrap(), field::zero(), field::zero());
        let lvl = assemble_tower(&op, None, 2, &g).unwrap();
        let n = g.nv();
        let psi = vec![vec![0.0; n], vec![0.0; n], vec![1.5; n]];
        let dpsi = vec![vec![0.0; n]; 3];
        let rhs = lvl.rhs(&psi, &dpsi);
        assert!(rhs.iter().all(|&x| (x + 3.0).abs() < 1e-14));
    }

    #[test]
    fn jet_order_limit_is_enforced() {
        let g = grid(0.1);
        let op = WaveOperator::d_alembertian().with_jet_order(2);
        assert!(matches!(assemble_tower(&op, None, 3, &g), Err(Error::JetOrderExceeded { .. })));
    }

    #[test]
    fn zero_data_gives_zero_jets() {
        let g = grid(0.1);
        let op = WaveOperator::klein_gordon(1.0);
        for t in [JetType::Future, JetType::Past] {
            let j = solve_propagation(&op, &CharacteristicDatum::zero(&g), None, t, 6, 5, &g).unwrap();
            assert!(j.psi.iter().flatten().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn pure_wave_has_trivial_higher_jets() {
        let g = grid(0.1);
        let d = bump_datum(&g);
        let op = WaveOperator::d_alembertian();
        let f = solve_propagation(&op, &d, None, JetType::Future, 6, 5, &g).unwrap();
        let p = solve_propagation(&op, &d, None, JetType::Past, 6, 5, &g).unwrap();
        assert_eq!(f.psi[0], d.f);
        for r in 1..=6 {
            assert!(f.psi[r].iter().chain(&p.psi[r]).all(|&x| x == 0.0));
        }
        let dt = jump_table(&f, &p).unwrap();
        assert!(dt.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn klein_gordon_first_jet_matches_quadrature() {
        let q = 1.5;
        let op = WaveOperator::klein_gordon(q);
        let mut errs = Vec::new();
        for &h in &[0.05, 0.025, 0.0125] {
            let g = grid(h);
            let d = bump_datum(&g);
            let fut = solve_propagation(&op, &d, None, JetType::Future, 2, 5, &g).unwrap();
            let past = solve_propagation(&op, &d, None, JetType::Past, 2, 5, &g).unwrap();
            let fine = 4000;
            let cum = |a: f64, b: f64| {
                let hh = (b - a) / fine as f64;
                let f = |x: f64| {
                    let z: f64 = (x - 4.0) / 0.8;
                    if z.abs() >= 1.0 { 0.0 } else { (1.0 - 1.0 / (1.0 - z * z)).exp() }
                };
                (0..fine).map(|k| f(a + (k as f64 + 0.5) * hh)).sum::<f64>() * hh
            };
            let mut e = 0.0f64;
            for j in 0..g.nv() {
                let v = g.v(j);
                let exact_f = -(q / 4.0) * cum(fut.cross_section_v, v.max(fut.cross_section_v));
                let exact_p = (q / 4.0) * cum(v.min(past.cross_section_v), past.cross_section_v);
                e = e.max((fut.psi[1][j] - exact_f).abs()).max((past.psi[1][j] - exact_p).abs());
            }
            errs.push(e);
            let dt = jump_table(&fut, &past).unwrap();
            let total = cum(3.0, 5.0);
            assert!((dt[1] - q / 4.0 * total).abs() < 15.0 * h.powi(4));
            assert!(fut.support_law_holds(&g, d.support.unwrap()));
            assert!(past.support_law_holds(&g, d.support.unwrap()));
            assert_eq!(fut.psi[1][fut.cross_section_index], 0.0);
        }
        assert!(errs[1] / errs[2] > 12.0, "{errs:?}");
    }

    #[test]
    fn cross_section_must_fit() {
        let g = grid(0.1);
        let f = field::expr("bump(1.6, 0.5)").unwrap();
        let d = CharacteristicDatum::from_field(&g, f.as_ref(), Interval::new(1.1, 2.1)).unwrap();
        let e = solve_propagation(&WaveOperator::klein_gordon(1.0), &d, None, JetType::Future, 4, 5, &g);
        assert!(matches!(e, Err(Error::InfeasibleCrossSection(_))));
        assert!(solve_propagation(&WaveOperator::klein_gordon(1.0), &d, None, JetType::Past, 4, 5, &g).is_ok());
    }
}
