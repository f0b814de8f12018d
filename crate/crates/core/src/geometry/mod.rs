//! The slab spacetime, its null grid, causal regions and densities on the
//! null line `u = 0`.
//!
//! Conventions: `u = t - x`, `v = t + x`, `g = du dv` (so `g_uv = 1/2`,
//! `g^uv = 2`) and `mu_g = (1/2) |du dv|`. The conformal variant multiplies
//! the metric by `Omega(u, v) > 0`.

mod hypersurface;

pub use hypersurface::{
    conformal_scaling_check, expansion_density, expansion_density_in, light_cone, null_line,
    t_operator_weight, ChartFn, ConformalReport, ExpansionSamples, HypersurfaceParam, MetricFn,
    ScalarOnN, ADAPTED_TOL,
};

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Field;

/// Relative slack when testing slab containment of grid nodes, which may sit
/// exactly on `t_min` or `t_max`.
const SLAB_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub enum Metric {
    Minkowski,
    /// `Omega(u, v) du dv` with `Omega > 0`.
    Conformal(Field),
}

#[derive(Debug, Clone)]
pub struct SlabSpacetime {
    pub t_min: f64,
    pub t_max: f64,
    pub metric: Metric,
}

impl SlabSpacetime {
    pub fn minkowski(t_min: f64, t_max: f64) -> Result<Self> {
        Self::new(t_min, t_max, Metric::Minkowski)
    }

    pub fn new(t_min: f64, t_max: f64, metric: Metric) -> Result<Self> {
        if !(t_min < t_max) || !t_min.is_finite() || !t_max.is_finite() {
            return Err(Error::InvalidSlab { t_min, t_max });
        }
        Ok(SlabSpacetime { t_min, t_max, metric })
    }

    pub fn is_minkowski(&self) -> bool {
        matches!(self.metric, Metric::Minkowski)
    }

    fn tol(&self) -> f64 {
        SLAB_TOL * (1.0 + self.t_min.abs().max(self.t_max.abs()))
    }

    /// Containment in the slab, closed up to a roundoff tolerance.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        let t = 0.5 * (u + v);
        t >= self.t_min - self.tol() && t <= self.t_max + self.tol()
    }

    /// Conformal factor at a point, checked for positivity.
    pub fn omega(&self, u: f64, v: f64) -> Result<f64> {
        match &self.metric {
            Metric::Minkowski => Ok(1.0),
            Metric::Conformal(f) => {
                let value = f.value(u, v);
                if value > 0.0 && value.is_finite() {
                    Ok(value)
                } else {
                    Err(Error::NonPositiveConformalFactor { u, v, value })
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CausalRegion {
    Jplus,
    Jminus,
    J,
    Exterior,
}

impl CausalRegion {
    pub fn label(self) -> &'static str {
        match self {
            CausalRegion::Jplus => "Jplus",
            CausalRegion::Jminus => "Jminus",
            CausalRegion::J => "J",
            CausalRegion::Exterior => "exterior",
        }
    }
}

fn in_jplus(u: f64, v: f64, s: &SlabSpacetime) -> bool {
    u >= 0.0 && v > 2.0 * s.t_min
}

fn in_jminus(u: f64, v: f64, s: &SlabSpacetime) -> bool {
    u <= 0.0 && v < 2.0 * s.t_max
}

/// Indicator of a causal region of the null segment `{u = 0}` in the slab.
pub fn classify(point: (f64, f64), region: CausalRegion, spacetime: &SlabSpacetime) -> Result<bool> {
    let (u, v) = point;
    if !spacetime.contains(u, v) {
        return Err(Error::PointOutsideSlab { u, v });
    }
    let p = in_jplus(u, v, spacetime);
    let m = in_jminus(u, v, spacetime);
    Ok(match region {
        CausalRegion::Jplus => p,
        CausalRegion::Jminus => m,
        CausalRegion::J => p || m,
        CausalRegion::Exterior => !(p || m),
    })
}

/// Null-coordinate grid over a rectangle of the slab with `u = 0` on a grid line.
#[derive(Debug, Clone)]
pub struct SlabGrid {
    pub spacetime: SlabSpacetime,
    pub h: f64,
    pub u_halfwidth: f64,
    pub v_range: Interval,
    u: Vec<f64>,
    v: Vec<f64>,
    i0: usize,
}

pub fn build_grid(spacetime: SlabSpacetime, h: f64, u_halfwidth: f64, v_range: Interval) -> Result<SlabGrid> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::NonPositiveSpacing(h));
    }
    if !(u_halfwidth >= 0.0) || !(v_range.hi > v_range.lo) {
        return Err(Error::RangeOutsideSlab(format!(
            "u half-width {u_halfwidth}, v range [{}, {}]",
            v_range.lo, v_range.hi
        )));
    }
    let half = (u_halfwidth / h + 1e-9).floor() as usize;
    let nv = ((v_range.hi - v_range.lo) / h + 1e-9).floor() as usize + 1;
    let u: Vec<f64> = (0..2 * half + 1).map(|i| (i as f64 - half as f64) * h).collect();
    let v: Vec<f64> = (0..nv).map(|j| v_range.lo + j as f64 * h).collect();
    let (u_lo, u_hi) = (u[0], u[u.len() - 1]);
    let (v_lo, v_hi) = (v[0], v[nv - 1]);
    if !spacetime.contains(u_lo, v_lo) || !spacetime.contains(u_hi, v_hi) {
        return Err(Error::RangeOutsideSlab(format!(
            "t spans [{}, {}] but the slab is [{}, {}]",
            0.5 * (u_lo + v_lo),
            0.5 * (u_hi + v_hi),
            spacetime.t_min,
            spacetime.t_max
        )));
    }
    for &uu in &u {
        for &vv in &v {
            spacetime.omega(uu, vv)?;
        }
    }
    Ok(SlabGrid { spacetime, h, u_halfwidth, v_range, u, v, i0: half })
}

impl SlabGrid {
    pub fn nu(&self) -> usize {
        self.u.len()
    }

    pub fn nv(&self) -> usize {
        self.v.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.u.len(), self.v.len())
    }

    /// Index of the `u = 0` line.
    pub fn i0(&self) -> usize {
        self.i0
    }

    pub fn u(&self, i: usize) -> f64 {
        self.u[i]
    }

    pub fn v(&self, j: usize) -> f64 {
        self.v[j]
    }

    pub fn u_coords(&self) -> &[f64] {
        &self.u
    }

    pub fn v_coords(&self) -> &[f64] {
        &self.v
    }

    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        (self.u[i], self.v[j])
    }

    /// Largest `|u|` actually present on the grid.
    pub fn u_extent(&self) -> f64 {
        self.u[self.u.len() - 1]
    }

    /// Most specific region label of a node: `N` on the null line, then
    /// `Jplus`, `Jminus` or `exterior`.
    pub fn region_label(&self, i: usize, j: usize) -> &'static str {
        let (u, v) = self.node(i, j);
        let p = in_jplus(u, v, &self.spacetime);
        let m = in_jminus(u, v, &self.spacetime);
        match (p, m) {
            (true, true) => "N",
            (true, false) => "Jplus",
            (false, true) => "Jminus",
            (false, false) => "exterior",
        }
    }

    pub fn in_region(&self, i: usize, j: usize, region: CausalRegion) -> bool {
        let (u, v) = self.node(i, j);
        let p = in_jplus(u, v, &self.spacetime);
        let m = in_jminus(u, v, &self.spacetime);
        match region {
            CausalRegion::Jplus => p,
            CausalRegion::Jminus => m,
            CausalRegion::J => p || m,
            CausalRegion::Exterior => !(p || m),
        }
    }

    /// Index of the first v-node at or above `v`.
    pub fn v_index_ceil(&self, v: f64) -> Option<usize> {
        let x = ((v - self.v_range.lo) / self.h - 1e-9).ceil();
        if x < 0.0 {
            Some(0)
        } else if (x as usize) < self.nv() {
            Some(x as usize)
        } else {
            None
        }
    }

    /// Index of the last v-node at or below `v`.
    pub fn v_index_floor(&self, v: f64) -> Option<usize> {
        let x = ((v - self.v_range.lo) / self.h + 1e-9).floor();
        if x < 0.0 {
            None
        } else {
            Some((x as usize).min(self.nv() - 1))
        }
    }

    pub fn same_as(&self, other: &SlabGrid) -> bool {
        self.shape() == other.shape() && self.h == other.h && self.i0 == other.i0 && self.v[0] == other.v[0]
    }
}

/// Samples `w` of a density `w |ds dy|` on a hypersurface.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityOnN {
    pub weight: Vec<f64>,
}

/// `iota_n mu_g` on `{u = 0}` for the conormal `n = alpha(v) du`.
///
/// Any `Theta` with `n(Theta) = 1` gives the same contraction; `Theta =
/// d_u / alpha` yields `w = Omega / (2 |alpha|)`.
pub fn interior_product_density(alpha: &[f64], grid: &SlabGrid) -> Result<DensityOnN> {
    if alpha.len() != grid.nv() {
        return Err(Error::ShapeMismatch);
    }
    let sign = alpha.first().map(|a| a.signum()).unwrap_or(1.0);
    let mut weight = Vec::with_capacity(alpha.len());
    for (j, &a) in alpha.iter().enumerate() {
        if a == 0.0 || !a.is_finite() || a.signum() != sign {
            return Err(Error::VanishingConormal { index: j });
        }
        let omega = grid.spacetime.omega(0.0, grid.v(j))?;
        weight.push(omega / (2.0 * a.abs()));
    }
    Ok(DensityOnN { weight })
}

pub type GridRef = Arc<SlabGrid>;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn slab() -> SlabSpacetime {
        SlabSpacetime::minkowski(0.0, 4.0).unwrap()
    }

    #[test]
    fn grid_line_counts() {
        let g = build_grid(slab(), 0.1, 1.0, Interval::new(1.0, 7.0)).unwrap();
        assert_eq!(g.shape(), (21, 61));
        assert_eq!(g.u(g.i0()), 0.0);
    }

    #[test]
    fn grid_outside_slab_is_rejected() {
        let s = SlabSpacetime::minkowski(0.0, 1.0).unwrap();
        let e = build_grid(s, 0.1, 5.0, Interval::new(0.5, 1.5));
        assert!(matches!(e, Err(Error::RangeOutsideSlab(_))));
        assert!(matches!(
            build_grid(slab(), 0.0, 1.0, Interval::new(1.0, 7.0)),
            Err(Error::NonPositiveSpacing(_))
        ));
    }

    #[test]
    fn refinement_halves_spacing() {
        let a = build_grid(slab(), 0.1, 1.0, Interval::new(1.0, 7.0)).unwrap();
        let b = build_grid(slab(), 0.05, 1.0, Interval::new(1.0, 7.0)).unwrap();
        assert_eq!(b.shape(), (41, 121));
        for i in 0..a.nu() {
            for j in 0..a.nv() {
                let (u, v) = a.node(i, j);
                let (u2, v2) = b.node(2 * i, 2 * j);
                assert_relative_eq!(u, u2, epsilon = 1e-12);
                assert_relative_eq!(v, v2, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn classification_examples() {
        let s = slab();
        assert!(classify((0.5, 1.0), CausalRegion::Jplus, &s).unwrap());
        assert!(!classify((2.0, -1.5), CausalRegion::J, &s).unwrap());
        assert!(classify((2.0, -1.5), CausalRegion::Exterior, &s).unwrap());
        for r in [CausalRegion::Jplus, CausalRegion::Jminus, CausalRegion::J] {
            assert!(classify((0.0, 3.0), r, &s).unwrap());
        }
        assert!(matches!(
            classify((10.0, 10.0), CausalRegion::J, &s),
            Err(Error::PointOutsideSlab { .. })
        ));
    }

    #[test]
    fn interior_product_examples() {
        let g = build_grid(slab(), 0.5, 1.0, Interval::new(1.0, 7.0)).unwrap();
        let ones = vec![1.0; g.nv()];
        let w = interior_product_density(&ones, &g).unwrap();
        assert!(w.weight.iter().all(|&x| x == 0.5));
        let twos = vec![2.0; g.nv()];
        let w2 = interior_product_density(&twos, &g).unwrap();
        assert!(w2.weight.iter().all(|&x| x == 0.25));
        let ev: Vec<f64> = g.v_coords().iter().map(|v| v.exp()).collect();
        let we = interior_product_density(&ev, &g).unwrap();
        for (j, w) in we.weight.iter().enumerate() {
            assert_relative_eq!(*w, (-g.v(j)).exp() / 2.0, max_relative = 1e-15);
        }
        let mut bad = ones.clone();
        bad[3] = 0.0;
        assert_eq!(interior_product_density(&bad, &g), Err(Error::VanishingConormal { index: 3 }));
    }

    #[test]
    fn conformal_density_carries_omega() {
        let omega = crate::field::expr("1 + 0.1*v").unwrap();
        let s = SlabSpacetime::new(0.0, 4.0, Metric::Conformal(omega)).unwrap();
        let g = build_grid(s, 0.5, 1.0, Interval::new(1.0, 7.0)).unwrap();
        let w = interior_product_density(&vec![1.0; g.nv()], &g).unwrap();
        for (j, w) in w.weight.iter().enumerate() {
            assert_relative_eq!(*w, (1.0 + 0.1 * g.v(j)) / 2.0, max_relative = 1e-14);
        }
    }
}
