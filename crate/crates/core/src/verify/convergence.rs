//! Error tables over grid refinements.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{GridRef, SlabGrid};
use crate::operators::GridField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub error: f64,
    /// `log(e_prev / e) / log(h_prev / h)`; `None` on the first row.
    pub observed_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// `false` when some error fails to decrease under refinement.
    pub monotone: bool,
}

impl ConvergenceTable {
    pub fn from_errors(hs: &[f64], errors: &[f64]) -> Self {
        let orders = observed_orders(hs, errors);
        let rows = hs
            .iter()
            .zip(errors)
            .enumerate()
            .map(|(k, (&h, &error))| ConvergenceRow { h, error, observed_order: if k == 0 { None } else { Some(orders[k - 1]) } })
            .collect();
        let monotone = errors.windows(2).all(|w| w[1] < w[0]);
        ConvergenceTable { rows, monotone }
    }

    pub fn orders(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.observed_order).collect()
    }

    pub fn min_order(&self) -> f64 {
        self.orders().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max_order(&self) -> f64 {
        self.orders().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Successive observed orders.
pub fn observed_orders(hs: &[f64], errors: &[f64]) -> Vec<f64> {
    hs.windows(2)
        .zip(errors.windows(2))
        .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

/// Errors `error(h)` for every `h` (coarsest first), with observed orders.
pub fn convergence_study<F>(h_list: &[f64], error: F) -> Result<ConvergenceTable>
where
    F: Fn(f64) -> Result<f64> + Sync + Send,
{
    if h_list.len() < 3 {
        return Err(Error::Precondition(format!("convergence study needs at least 3 grid levels, got {}", h_list.len())));
    }
    if h_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Precondition("grid spacings must decrease".into()));
    }
    let errors: Vec<f64> = crate::par::map_slice(h_list, |&h| error(h)).into_iter().collect::<Result<_>>()?;
    Ok(ConvergenceTable::from_errors(h_list, &errors))
}

/// Reference solution for [`solution_convergence`].
#[derive(Clone)]
pub enum Reference {
    ClosedForm(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
    /// The same solver at this (finer) spacing, restricted to each level.
    Finest(f64),
}

/// Sup-norm errors of `solve(h)` against a reference, over the valid nodes.
pub fn solution_convergence<F>(h_list: &[f64], solve: F, reference: &Reference) -> Result<ConvergenceTable>
where
    F: Fn(f64) -> Result<GridField> + Sync + Send,
{
    let finest = match reference {
        Reference::Finest(h) => {
            if h_list.iter().any(|x| x <= h) {
                return Err(Error::Precondition("the reference level must be finer than every study level".into()));
            }
            Some(solve(*h)?)
        }
        Reference::ClosedForm(_) => None,
    };
    convergence_study(h_list, |h| {
        let phi = solve(h)?;
        let exact = match (reference, &finest) {
            (Reference::ClosedForm(f), _) => {
                let f = f.clone();
                GridField::from_fn(&phi.grid, move |u, v| f(u, v))
            }
            (_, Some(fine)) => restrict_to(fine, &phi.grid)?,
            _ => unreachable!(),
        };
        phi.max_abs_diff(&exact)
    })
}

/// Values of `fine` at the nodes of a coarser grid whose nodes are a subset.
pub fn restrict_to(fine: &GridField, coarse: &GridRef) -> Result<GridField> {
    let f: &SlabGrid = &fine.grid;
    let tol = 1e-9 * f.h;
    let index = |x: f64, x0: f64, n: usize| -> Result<usize> {
        let k = ((x - x0) / f.h).round();
        if k < 0.0 || k as usize >= n || (x0 + k * f.h - x).abs() > tol {
            return Err(Error::Precondition(format!("coarse node {x} is not a fine-grid node")));
        }
        Ok(k as usize)
    };
    let iu: Vec<usize> = coarse.u_coords().iter().map(|&u| index(u, f.u(0), f.nu())).collect::<Result<_>>()?;
    let iv: Vec<usize> = coarse.v_coords().iter().map(|&v| index(v, f.v(0), f.nv())).collect::<Result<_>>()?;
    let mut out = GridField::zeros(coarse);
    for ((i, j), x) in out.values.indexed_iter_mut() {
        *x = fine.values[[iu[i], iv[j]]];
    }
    let ratio = (coarse.h / f.h).round() as usize;
    out.ring = fine.ring.div_ceil(ratio.max(1));
    Ok(out)
}
