//! Seeded families of smooth, compactly supported test functions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{GridRef, Interval, SlabGrid};
use crate::operators::GridField;
use crate::series::{bump_series, Series};

pub const DEFAULT_BATTERY_SIZE: usize = 20;
pub const DEFAULT_SEED: u64 = 20_240_601;

/// Nodes next to the grid edge on which every member vanishes.
pub const ZERO_RING: usize = 3;

/// `amp b((u - u0)/wu) b((v - v0)/wv) (1 + c1 (u - u0) + c2 (v - v0))`, with
/// `b(z) = exp(1 - 1/(1 - z^2))` on `|z| < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BumpParams {
    pub u0: f64,
    pub v0: f64,
    pub wu: f64,
    pub wv: f64,
    pub c1: f64,
    pub c2: f64,
    pub amp: f64,
}

impl BumpParams {
    /// Value and first two derivatives of the 1-D factor.
    fn factor(x: f64, x0: f64, w: f64) -> [f64; 3] {
        let d = bump_series(&Series::variable((x - x0) / w, 2)).derivatives();
        [d[0], d[1] / w, d[2] / (w * w)]
    }

    pub fn value(&self, u: f64, v: f64) -> f64 {
        self.jet(u, v)[0]
    }

    /// `[chi, chi_u, chi_v, chi_uu, chi_uv, chi_vv]`.
    pub fn jet(&self, u: f64, v: f64) -> [f64; 6] {
        let bu = Self::factor(u, self.u0, self.wu);
        let bv = Self::factor(v, self.v0, self.wv);
        if bu[0] == 0.0 || bv[0] == 0.0 {
            return [0.0; 6];
        }
        let m = 1.0 + self.c1 * (u - self.u0) + self.c2 * (v - self.v0);
        let a = self.amp;
        [
            a * bu[0] * bv[0] * m,
            a * (bu[1] * bv[0] * m + bu[0] * bv[0] * self.c1),
            a * (bu[0] * bv[1] * m + bu[0] * bv[0] * self.c2),
            a * (bu[2] * bv[0] * m + 2.0 * bu[1] * bv[0] * self.c1),
            a * (bu[1] * bv[1] * m + bu[1] * bv[0] * self.c2 + bu[0] * bv[1] * self.c1),
            a * (bu[0] * bv[2] * m + 2.0 * bu[0] * bv[1] * self.c2),
        ]
    }
}

/// Test functions `chi` sampled on a grid, each vanishing on the outer
/// [`ZERO_RING`] nodes, with their `C^2` norms over the grid nodes.
#[derive(Debug, Clone)]
pub struct TestFunctionBattery {
    pub members: Vec<GridField>,
    pub params: Vec<BumpParams>,
    pub c2_norms: Vec<f64>,
    pub seed: u64,
}

impl TestFunctionBattery {
    /// `size` members with supports straddling `u = 0` anywhere in the v-range.
    pub fn generate(grid: &GridRef, size: usize, seed: u64) -> Result<Self> {
        let window = Interval::new(grid.v(0), grid.v(grid.nv() - 1));
        Self::generate_in(grid, size, seed, window)
    }

    /// As [`generate`](Self::generate), with v-centres drawn from `window`.
    pub fn generate_in(grid: &GridRef, size: usize, seed: u64, window: Interval) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let margin = (ZERO_RING + 1) as f64 * grid.h;
        let u_room = grid.u_extent() - margin;
        let (vlo, vhi) = (grid.v(0) + margin, grid.v(grid.nv() - 1) - margin);
        if u_room < 4.0 * grid.h || vhi - vlo < 8.0 * grid.h {
            return Err(Error::GridTooSmall { needed: 2 * ZERO_RING + 8, have_u: grid.nu(), have_v: grid.nv() });
        }
        let mut params = Vec::with_capacity(size);
        for _ in 0..size {
            let u0 = rng.random_range(-0.2..=0.2) * u_room;
            let wu = (rng.random_range(0.45..=0.75) * u_room).min(u_room - u0.abs());
            let wv = rng.random_range(0.6..=1.2f64).min(0.5 * (vhi - vlo));
            let lo = (vlo + wv).max(window.lo);
            let hi = (vhi - wv).min(window.hi);
            if lo > hi {
                return Err(Error::Precondition(format!("v-window [{}, {}] leaves no room for test functions", window.lo, window.hi)));
            }
            let v0 = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            params.push(BumpParams {
                u0,
                v0,
                wu,
                wv,
                c1: rng.random_range(-0.5..=0.5),
                c2: rng.random_range(-0.5..=0.5),
                amp: rng.random_range(0.5..=1.5),
            });
        }
        let built = crate::par::map_slice(&params, |p| sample(grid, p));
        let (members, c2_norms) = built.into_iter().unzip();
        Ok(TestFunctionBattery { members, params, c2_norms, seed })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

fn sample(grid: &GridRef, p: &BumpParams) -> (GridField, f64) {
    let g: &SlabGrid = grid;
    let mut norm = 0.0f64;
    let mut field = GridField::zeros(grid);
    for ((i, j), x) in field.values.indexed_iter_mut() {
        let jet = p.jet(g.u(i), g.v(j));
        *x = jet[0];
        norm = jet.iter().fold(norm, |m, d| m.max(d.abs()));
    }
    (field, norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, SlabSpacetime};
    use std::sync::Arc;

    fn grid(h: f64) -> GridRef {
        Arc::new(build_grid(SlabSpacetime::minkowski(0.0, 4.0).unwrap(), h, 1.0, Interval::new(1.0, 7.0)).unwrap())
    }

    #[test]
    fn members_vanish_on_the_outer_ring() {
        let b = TestFunctionBattery::generate(&grid(0.05), DEFAULT_BATTERY_SIZE, 7).unwrap();
        assert_eq!(b.len(), DEFAULT_BATTERY_SIZE);
        for m in &b.members {
            assert_eq!(m.boundary_max(ZERO_RING), 0.0);
            assert!(m.max_abs() > 0.1);
        }
    }

    #[test]
    fn supports_straddle_the_null_line() {
        let g = grid(0.05);
        let b = TestFunctionBattery::generate(&g, 20, 3).unwrap();
        for m in &b.members {
            assert!(m.trace().iter().any(|x| x.abs() > 1e-3));
        }
    }

    #[test]
    fn same_seed_same_battery() {
        let g = grid(0.05);
        let a = TestFunctionBattery::generate(&g, 5, 11).unwrap();
        let b = TestFunctionBattery::generate(&g, 5, 11).unwrap();
        let c = TestFunctionBattery::generate(&g, 5, 12).unwrap();
        assert_eq!(a.params, b.params);
        assert_ne!(a.params, c.params);
        for (x, y) in a.members.iter().zip(&b.members) {
            assert_eq!(x.values, y.values);
        }
    }

    #[test]
    fn jet_matches_differences() {
        let p = BumpParams { u0: 0.1, v0: 3.0, wu: 0.6, wv: 0.9, c1: 0.3, c2: -0.2, amp: 1.2 };
        let (u, v, e) = (0.2, 3.3, 1e-5);
        let j = p.jet(u, v);
        assert!((j[1] - (p.value(u + e, v) - p.value(u - e, v)) / (2.0 * e)).abs() < 1e-7);
        assert!((j[2] - (p.value(u, v + e) - p.value(u, v - e)) / (2.0 * e)).abs() < 1e-7);
        let fuv = (p.value(u + e, v + e) - p.value(u + e, v - e) - p.value(u - e, v + e) + p.value(u - e, v - e)) / (4.0 * e * e);
        assert!((j[4] - fuv).abs() < 1e-4);
        let fuu = (p.value(u + e, v) - 2.0 * p.value(u, v) + p.value(u - e, v)) / (e * e);
        assert!((j[3] - fuu).abs() < 1e-3);
    }

    #[test]
    fn window_restricts_centres() {
        let g = grid(0.05);
        let b = TestFunctionBattery::generate_in(&g, 10, 5, Interval::new(3.0, 4.0)).unwrap();
        assert!(b.params.iter().all(|p| (3.0..=4.0).contains(&p.v0)));
        assert!(TestFunctionBattery::generate_in(&g, 1, 5, Interval::new(20.0, 21.0)).is_err());
    }
}
