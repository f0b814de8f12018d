//! Quadrature-level checks of the jump formulae, adjoint identities,
//! equivariance and choice independence.
//!
//! Every distributional pairing is computed adjoint-side: `P` never acts on
//! a field multiplied by an indicator function.

pub mod battery;
pub mod convergence;
pub mod reference;

pub use battery::{BumpParams, TestFunctionBattery, DEFAULT_BATTERY_SIZE, DEFAULT_SEED, ZERO_RING};
pub use convergence::{convergence_study, observed_orders, restrict_to, solution_convergence, ConvergenceRow, ConvergenceTable, Reference};
pub use reference::{klein_gordon_kernel, klein_gordon_u_jump, KleinGordonReference};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{self, CausalRegion, SlabGrid};
use crate::green::trapezoid;
use crate::operators::{apply_p_adjoint_with, apply_p_with, integrate, GridField, WaveOperator};
use crate::propagation::{fd_derivative, CharacteristicDatum};
use crate::solver::{self, MergedSolution, PathTag, Problem, SolverConfig};

/// The weak residual `max |int_{J^-} chi PΦ mu_g| / |chi|_{C^2}` must stay
/// below `KERNEL_RESIDUAL_FACTOR h^2 max|Φ|` for the second jump formula to
/// apply.
pub const KERNEL_RESIDUAL_FACTOR: f64 = 10.0;

/// Per-member sides of an identity `lhs = rhs`, tested against a battery.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairingReport {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `residual / |chi|_{C^2}`.
    pub normalized: Vec<f64>,
    pub max_residual: f64,
    pub max_normalized: f64,
}

impl PairingReport {
    fn new(pairs: Vec<(f64, f64)>, norms: &[f64]) -> Self {
        let (lhs, rhs): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let residuals: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).collect();
        let normalized: Vec<f64> = residuals.iter().zip(norms).map(|(r, n)| if *n > 0.0 { r / n } else { *r }).collect();
        let max_residual = residuals.iter().fold(0.0f64, |m, x| m.max(*x));
        let max_normalized = normalized.iter().fold(0.0f64, |m, x| m.max(*x));
        PairingReport { lhs, rhs, residuals, normalized, max_residual, max_normalized }
    }
}

fn check_inputs(grid: &SlabGrid, fields: &[&GridField], battery: &TestFunctionBattery) -> Result<()> {
    if !grid.spacetime.is_minkowski() {
        return Err(Error::UnsupportedMetric);
    }
    for f in fields {
        if !f.grid.same_as(grid) {
            return Err(Error::ShapeMismatch);
        }
    }
    for (k, chi) in battery.members.iter().enumerate() {
        if !chi.grid.same_as(grid) {
            return Err(Error::ShapeMismatch);
        }
        if chi.boundary_max(ZERO_RING) != 0.0 {
            return Err(Error::SupportTouchesBoundary(format!("test function {k} is nonzero near the grid edge")));
        }
    }
    Ok(())
}

/// `int_D f mu_g`: trapezoid in `u` with half weight on the null line.
fn region_integral(f: &GridField, region: CausalRegion) -> f64 {
    let grid = &f.grid;
    let i0 = grid.i0();
    let (nu, nv) = grid.shape();
    let r = f.ring;
    let rows = match region {
        CausalRegion::Jplus => i0.max(r)..nu.saturating_sub(r),
        _ => r..(i0 + 1).min(nu.saturating_sub(r)),
    };
    let mut acc = 0.0;
    for i in rows {
        let row: f64 = (r..nv.saturating_sub(r)).map(|j| f.values[[i, j]]).sum();
        acc += if i == i0 { 0.5 * row } else { row };
    }
    acc * grid.h * grid.h * 0.5
}

/// Orientation of `∂D = N` relative to the conormal `du`.
fn boundary_sign(region: CausalRegion) -> Result<f64> {
    match region {
        CausalRegion::Jminus => Ok(1.0),
        CausalRegion::Jplus => Ok(-1.0),
        other => Err(Error::Precondition(format!("jump formula needs D = Jplus or Jminus, got {}", other.label()))),
    }
}

fn product(a: &GridField, b: &GridField) -> GridField {
    GridField { grid: a.grid.clone(), values: &a.values * &b.values, ring: a.ring.max(b.ring) }
}

fn n_of_x(op: &WaveOperator, grid: &SlabGrid) -> Vec<f64> {
    grid.v_coords().iter().map(|&v| op.a.value(0.0, v)).collect()
}

/// `iota_n mu_g` for `n = du`.
fn du_density(grid: &SlabGrid) -> Result<Vec<f64>> {
    Ok(geometry::interior_product_density(&vec![1.0; grid.nv()], grid)?.weight)
}

/// `int_D (chi P Φ - Φ P† chi) mu_g` against
/// `± int_N [chi n# Φ - Φ n# chi + Φ chi n(X)] iota_n mu_g`, with `n = du`
/// and `n# = 2 d_v`.
pub fn verify_jump_formula(op: &WaveOperator, region: CausalRegion, phi: &GridField, battery: &TestFunctionBattery) -> Result<PairingReport> {
    let sign = boundary_sign(region)?;
    let grid = phi.grid.clone();
    check_inputs(&grid, &[phi], battery)?;
    let k = op.sample(&grid);
    let p_phi = apply_p_with(&k, phi)?;
    let h = grid.h;
    let trace = phi.trace();
    let dtrace = fd_derivative(&trace, h);
    let nx = n_of_x(op, &grid);
    let w = du_density(&grid)?;
    let pairs = crate::par::map_slice(&battery.members, |chi| -> Result<(f64, f64)> {
        let adj = apply_p_adjoint_with(&k, chi)?;
        let integrand = product(chi, &p_phi).linear_combination(1.0, &product(phi, &adj), -1.0)?;
        let lhs = region_integral(&integrand, region);
        let c = chi.trace();
        let dc = fd_derivative(&c, h);
        let y: Vec<f64> = (0..grid.nv())
            .map(|j| (2.0 * c[j] * dtrace[j] - 2.0 * trace[j] * dc[j] + trace[j] * c[j] * nx[j]) * w[j])
            .collect();
        Ok((lhs, sign * trapezoid(&y, h)))
    });
    Ok(PairingReport::new(pairs.into_iter().collect::<Result<_>>()?, &battery.c2_norms))
}

/// `int_{J^-} (chi P Φ - Φ P† chi) mu_g` against `<S(T(Φ|_N)), chi mu_g>`,
/// with `T` built by the geometry module including the expansion term.
pub fn verify_t_identity(op: &WaveOperator, phi: &GridField, battery: &TestFunctionBattery) -> Result<PairingReport> {
    let grid = phi.grid.clone();
    check_inputs(&grid, &[phi], battery)?;
    let k = op.sample(&grid);
    let p_phi = apply_p_with(&k, phi)?;
    let trace = phi.trace();
    let t = solver::t_weight_samples(op, &trace, &fd_derivative(&trace, grid.h), &grid, true)?;
    let pairs = crate::par::map_slice(&battery.members, |chi| -> Result<(f64, f64)> {
        let adj = apply_p_adjoint_with(&k, chi)?;
        let integrand = product(chi, &p_phi).linear_combination(1.0, &product(phi, &adj), -1.0)?;
        let lhs = region_integral(&integrand, CausalRegion::Jminus);
        let y: Vec<f64> = chi.trace().iter().zip(&t).map(|(c, w)| c * w).collect();
        Ok((lhs, trapezoid(&y, grid.h)))
    });
    Ok(PairingReport::new(pairs.into_iter().collect::<Result<_>>()?, &battery.c2_norms))
}

/// `max |T phi with - without the expansion term|` on a null hypersurface;
/// nonzero wherever the expansion density and `phi` are, so a dropped term
/// shows up. On a 1+1 null line the density vanishes for every conformal
/// factor, so only higher-dimensional surfaces can exercise it.
pub fn expansion_term_guard(
    hs: &geometry::HypersurfaceParam,
    alpha: geometry::ScalarOnN<'_>,
    phi: geometry::ScalarOnN<'_>,
    dphi_ds: geometry::ScalarOnN<'_>,
    n_of_x: geometry::ScalarOnN<'_>,
    points: &[(f64, Vec<f64>)],
) -> Result<f64> {
    let with = geometry::t_operator_weight(hs, alpha, phi, dphi_ds, n_of_x, points, true)?;
    let without = geometry::t_operator_weight(hs, alpha, phi, dphi_ds, n_of_x, points, false)?;
    Ok(with.iter().zip(&without).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondJumpReport {
    /// `int_{J^-} Φ P† chi mu_g` against `-int_N Φ 𝒯† chi iota_n mu_g`.
    pub pairing: PairingReport,
    /// Right side of the T identity on the same inputs.
    pub t_rhs: Vec<f64>,
    /// `max |second-jump rhs + T-identity rhs|`; the two agree up to sign when `PΦ = 0`.
    pub consistency: f64,
    /// `max |int_{J^-} chi PΦ mu_g| / |chi|_{C^2}` over the battery.
    pub kernel_residual: f64,
    /// `max |PΦ|` on `u < 0`; dominated by stencil truncation wherever the
    /// extension cutoff is steep, so it is reported but not tested.
    pub pointwise_residual: f64,
}

/// Second jump formula on `D = J^-` for `Φ` from a homogeneous solve of `f`.
pub fn verify_second_jump(op: &WaveOperator, f: &CharacteristicDatum, battery: &TestFunctionBattery, cfg: &SolverConfig) -> Result<SecondJumpReport> {
    let grid = battery
        .members
        .first()
        .map(|m| m.grid.clone())
        .ok_or_else(|| Error::Precondition("empty battery".into()))?;
    let problem = Problem::new(op.clone(), grid.clone(), f.clone());
    let sol = solver::solve_rendall(&problem, cfg)?;
    let tol = KERNEL_RESIDUAL_FACTOR * grid.h * grid.h * sol.minus.max_abs();
    verify_second_jump_with(op, &sol.minus, battery, tol)
}

/// Second jump formula for a supplied `Φ`, valid on `u <= 0`.
pub fn verify_second_jump_with(op: &WaveOperator, phi: &GridField, battery: &TestFunctionBattery, kernel_tol: f64) -> Result<SecondJumpReport> {
    let grid = phi.grid.clone();
    check_inputs(&grid, &[phi], battery)?;
    let k = op.sample(&grid);
    let p_phi = apply_p_with(&k, phi)?;
    let i0 = grid.i0();
    let mut pointwise_residual = 0.0f64;
    for i in p_phi.ring..i0 {
        for j in p_phi.ring..grid.nv() - p_phi.ring {
            pointwise_residual = pointwise_residual.max(p_phi.values[[i, j]].abs());
        }
    }
    // The stencil on the null line reaches past the side where Φ is valid.
    let mut interior = p_phi.clone();
    interior.values.row_mut(i0).fill(0.0);
    let weak = crate::par::map_slice(&battery.members, |chi| region_integral(&product(chi, &interior), CausalRegion::Jminus));
    let kernel_residual = weak.iter().zip(&battery.c2_norms).fold(0.0f64, |m, (x, n)| m.max(x.abs() / n.max(f64::MIN_POSITIVE)));
    if kernel_residual > kernel_tol {
        return Err(Error::Precondition(format!(
            "weak residual of P phi = {kernel_residual:e} exceeds {kernel_tol:e}: phi is not an approximate kernel element"
        )));
    }
    let h = grid.h;
    let trace = phi.trace();
    let nx = n_of_x(op, &grid);
    let w = du_density(&grid)?;
    let theta = null_line_expansion(&grid)?;
    let t = solver::t_weight_samples(op, &trace, &fd_derivative(&trace, h), &grid, true)?;
    let rows = crate::par::map_slice(&battery.members, |chi| -> Result<(f64, f64, f64)> {
        let adj = apply_p_adjoint_with(&k, chi)?;
        let lhs = region_integral(&product(phi, &adj), CausalRegion::Jminus);
        let c = chi.trace();
        let dc = fd_derivative(&c, h);
        // 𝒯† chi = -2 n# chi + (n(X) - Theta) chi, with n# = 2 d_v.
        let y: Vec<f64> = (0..grid.nv()).map(|j| -trace[j] * (-4.0 * dc[j] + (nx[j] - theta[j]) * c[j]) * w[j]).collect();
        let ty: Vec<f64> = c.iter().zip(&t).map(|(c, w)| c * w).collect();
        Ok((lhs, trapezoid(&y, h), trapezoid(&ty, h)))
    });
    let rows: Vec<(f64, f64, f64)> = rows.into_iter().collect::<Result<_>>()?;
    let consistency = rows.iter().fold(0.0f64, |m, r| m.max((r.1 + r.2).abs()));
    let t_rhs = rows.iter().map(|r| r.2).collect();
    let pairing = PairingReport::new(rows.into_iter().map(|r| (r.0, r.1)).collect(), &battery.c2_norms);
    Ok(SecondJumpReport { pairing, t_rhs, consistency, kernel_residual, pointwise_residual })
}

/// `Theta` on the null line for `n = du`, as a function: expansion density
/// over `iota_n mu_g`.
fn null_line_expansion(grid: &SlabGrid) -> Result<Vec<f64>> {
    let hs = geometry::null_line(crate::field::constant(1.0)).with_grid_spacing(grid.h);
    let points: Vec<(f64, Vec<f64>)> = grid.v_coords().iter().map(|&v| (v, Vec::new())).collect();
    let ex = geometry::expansion_density(&hs, &|_, _| 2.0, &points)?;
    Ok(ex.expansion.iter().zip(&ex.weight).map(|(e, w)| e / w).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivarianceReport {
    pub lambda: f64,
    /// `<S_{mu_g'}(T_{g'} phi), chi mu>` per member.
    pub lhs: Vec<f64>,
    /// `<S_{mu_g}(T_g(phi / lambda)), chi mu>` per member.
    pub rhs: Vec<f64>,
    pub max_rel_error: f64,
}

/// Pairing-level check of `S_{mu_g'} T_{g'} = S_{mu_g} T_g [1/lambda]` for
/// `g' = lambda g` on the null line. In 1+1 dimensions the line is a single
/// generator, so `lambda` must be a positive constant.
pub fn verify_equivariance(op: &WaveOperator, lambda: &[f64], phi_n: &[f64], battery: &TestFunctionBattery) -> Result<EquivarianceReport> {
    let grid = battery
        .members
        .first()
        .map(|m| m.grid.clone())
        .ok_or_else(|| Error::Precondition("empty battery".into()))?;
    check_inputs(&grid, &[], battery)?;
    if !op.x_is_tangent() {
        return Err(Error::Precondition("equivariance needs X tangent to the null line (A = 0)".into()));
    }
    if lambda.len() != grid.nv() || phi_n.len() != grid.nv() {
        return Err(Error::ShapeMismatch);
    }
    let l = lambda[0];
    if lambda.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::NonPositiveScale(format!("lambda = {l}")));
    }
    let spread = lambda.iter().fold(0.0f64, |m, x| m.max((x - l).abs()));
    if spread > 1e-12 * l {
        return Err(Error::NotConstantAlongGenerators(spread / grid.h));
    }
    let h = grid.h;
    let w = du_density(&grid)?;
    let dphi = fd_derivative(phi_n, h);
    let scaled: Vec<f64> = phi_n.iter().map(|x| x / l).collect();
    let dscaled = fd_derivative(&scaled, h);
    // Under g' = lambda g: n#' = n# / lambda and iota_n mu_g' = lambda iota_n mu_g.
    let t_prime: Vec<f64> = (0..grid.nv()).map(|j| (4.0 * dphi[j] / l) * (l * w[j])).collect();
    let t_base: Vec<f64> = (0..grid.nv()).map(|j| 4.0 * dscaled[j] * w[j]).collect();
    let pairs = crate::par::map_slice(&battery.members, |chi| {
        let c = chi.trace();
        let a: Vec<f64> = c.iter().zip(&t_prime).map(|(c, t)| c * t / l).collect();
        let b: Vec<f64> = c.iter().zip(&t_base).map(|(c, t)| c * t).collect();
        (trapezoid(&a, h), trapezoid(&b, h))
    });
    let max_rel_error = pairs.iter().fold(0.0f64, |m, (a, b)| {
        let scale = a.abs().max(b.abs());
        if scale == 0.0 {
            m
        } else {
            m.max((a - b).abs() / scale)
        }
    });
    let (lhs, rhs) = pairs.into_iter().unzip();
    Ok(EquivarianceReport { lambda: l, lhs, rhs, max_rel_error })
}

/// `<φ, P† chi mu_g>` against `<F, chi mu_g>` for a merged solution, with
/// the null line weighted by the mean of both one-sided values.
pub fn distributional_residual(problem: &Problem, sol: &MergedSolution, battery: &TestFunctionBattery) -> Result<PairingReport> {
    let grid = problem.grid.clone();
    check_inputs(&grid, &[&sol.plus, &sol.minus], battery)?;
    let k = problem.op.sample(&grid);
    let sided = sol.sided();
    let src = problem.source_field();
    let pairs = crate::par::map_slice(&battery.members, |chi| -> Result<(f64, f64)> {
        let adj = apply_p_adjoint_with(&k, chi)?;
        Ok((sided.integrate_against(&adj), integrate(&product(&src, chi))))
    });
    Ok(PairingReport::new(pairs.into_iter().collect::<Result<_>>()?, &battery.c2_norms))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDistance {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceReport {
    pub path: PathTag,
    pub distances: Vec<PairDistance>,
    pub max_distance: f64,
}

/// Pairwise sup distances between merged solutions for several solver
/// configurations.
pub fn independence_suite(problem: &Problem, variants: &[SolverConfig], path: PathTag) -> Result<IndependenceReport> {
    if variants.len() < 2 {
        return Err(Error::Precondition("independence suite needs at least two variants".into()));
    }
    let sols = crate::par::map_slice(variants, |cfg| solver::solve(problem, cfg, path).map(|s| s.merged()));
    let sols: Vec<GridField> = sols.into_iter().collect::<Result<_>>()?;
    let mut distances = Vec::new();
    for a in 0..sols.len() {
        for b in a + 1..sols.len() {
            distances.push(PairDistance { a, b, distance: sols[a].max_abs_diff(&sols[b])? });
        }
    }
    let max_distance = distances.iter().fold(0.0f64, |m, d| m.max(d.distance));
    Ok(IndependenceReport { path, distances, max_distance })
}

/// `|S(a p + b q) - a S(p) - b S(q)| / max(|a S(p)|, |b S(q)|)` for the
/// solution map `S` of one path.
pub fn linearity_defect(p: &Problem, q: &Problem, a: f64, b: f64, cfg: &SolverConfig, path: PathTag) -> Result<f64> {
    if !p.grid.same_as(&q.grid) {
        return Err(Error::ShapeMismatch);
    }
    let source = match (&p.source, &q.source) {
        (None, None) => None,
        (x, y) => {
            let fx = x.as_ref().map(|s| s.field.clone()).unwrap_or_else(crate::field::zero);
            let fy = y.as_ref().map(|s| s.field.clone()).unwrap_or_else(crate::field::zero);
            let bounds = match (x, y) {
                (Some(s), Some(t)) => s.v_bounds.hull(&t.v_bounds),
                (Some(s), None) => s.v_bounds,
                (None, Some(t)) => t.v_bounds,
                (None, None) => unreachable!(),
            };
            let combined = crate::field::linear_combination(a, &fx, b, &fy);
            let jet_order = x.iter().chain(y.iter()).map(|s| s.jet_order).min().unwrap_or(crate::operators::MAX_JET_ORDER);
            Some(crate::propagation::Inhomogeneity { field: combined, v_bounds: bounds, jet_order })
        }
    };
    let combined = Problem { op: p.op.clone(), grid: p.grid.clone(), f: p.f.combine(a, &q.f, b), source };
    let (sp, sq) = crate::par::join(|| solver::solve(p, cfg, path), || solver::solve(q, cfg, path));
    let (sp, sq) = (sp?.merged(), sq?.merged());
    let sc = solver::solve(&combined, cfg, path)?.merged();
    let expected = sp.linear_combination(a, &sq, b)?;
    let scale = sp.scaled(a).max_abs().max(sq.scaled(b).max_abs());
    let diff = sc.max_abs_diff(&expected)?;
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

/// Data-to-solution gain `sup|φ| / max(|f|_{C^1}, |F|_sup)`.
pub fn data_gain(problem: &Problem, cfg: &SolverConfig, path: PathTag) -> Result<f64> {
    let sol = solver::solve(problem, cfg, path)?;
    let c1 = problem.f.f.iter().chain(&problem.f.df).fold(0.0f64, |m, x| m.max(x.abs()));
    let data = c1.max(problem.source_field().max_abs());
    if data == 0.0 {
        return Ok(0.0);
    }
    Ok(sol.merged().max_abs() / data)
}

#[cfg(test)]
mod tests;
