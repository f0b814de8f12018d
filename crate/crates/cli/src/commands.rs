//! The four subcommands. Each returns whether every configured tolerance held.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use charcauchy_core::borel;
use charcauchy_core::field;
use charcauchy_core::geometry::{self, conformal_scaling_check, expansion_density, Interval, ADAPTED_TOL};
use charcauchy_core::solver::{self, regularity_report, PathTag, Problem};
use charcauchy_core::verify::{
    distributional_residual, independence_suite, linearity_defect, solution_convergence, verify_equivariance,
    verify_jump_formula, verify_second_jump, verify_t_identity, KleinGordonReference, Reference, TestFunctionBattery,
};
use charcauchy_core::geometry::CausalRegion;
use serde::Serialize;

use crate::config::{ConfigError, ReferenceKind, RunConfig, Surface};
use crate::output::{self, finite};

#[derive(Debug, Serialize)]
struct SolveSummary {
    h: f64,
    paths: Vec<PathTag>,
    trace_error: f64,
    /// `max |<phi, P^dag chi mu> - <F, chi mu>| / |chi|_{C^2}` over the battery;
    /// null when the metric is not Minkowski.
    residual: Option<f64>,
    jump_table: Vec<f64>,
    #[serde(rename = "C_k_class")]
    c_k_class: usize,
    tol_reg: f64,
    /// Sup distance of each extra path's merged field from the first path's.
    path_agreement: BTreeMap<String, f64>,
}

pub fn solve(cfg: &RunConfig, out: &Path) -> Result<bool> {
    let grid = cfg.grid()?;
    let problem = cfg.problem(&grid)?;
    let scfg = cfg.solver_config();
    let paths = cfg.paths();
    let mut fields = Vec::new();
    let mut primary = None;
    for &path in &paths {
        let sol = solver::solve(&problem, &scfg, path).with_context(|| format!("solving on the {} path", path.label()))?;
        let merged = sol.merged();
        output::write(&out.join(format!("field_{}.csv", path.label())), &output::field_csv(&merged))?;
        fields.push((path, merged));
        if primary.is_none() {
            primary = Some(sol);
        }
    }
    let sol = primary.context("no solver path selected")?;
    let reg = regularity_report(&sol, &sol.future, &sol.past)?;
    let residual = TestFunctionBattery::generate(&grid, cfg.verify.battery_size, cfg.verify.seed)
        .ok()
        .and_then(|b| distributional_residual(&problem, &sol, &b).ok())
        .map(|r| r.max_normalized);
    let mut path_agreement = BTreeMap::new();
    for (path, field) in &fields[1..] {
        path_agreement.insert(format!("{}_vs_{}", path.label(), paths[0].label()), field.max_abs_diff(&fields[0].1)?);
    }
    let summary = SolveSummary {
        h: grid.h,
        paths,
        trace_error: sol.trace_error(&problem.f),
        residual,
        jump_table: reg.jump_table,
        c_k_class: reg.c_k_class,
        tol_reg: reg.tol_reg,
        path_agreement,
    };
    output::write_json(&out.join("summary.json"), &summary)?;
    Ok(true)
}

#[derive(Debug, Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
    pass: bool,
}

impl Check {
    fn new(name: &'static str, value: f64, tolerance: f64) -> Self {
        Check { name, value, tolerance, pass: value <= tolerance }
    }
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    h: f64,
    seed: u64,
    battery_size: usize,
    checks: Vec<Check>,
    skipped: Vec<String>,
    pass: bool,
}

/// Source and datum as two separate problems, for the linearity check.
fn split(problem: &Problem) -> (Problem, Problem) {
    match &problem.source {
        Some(_) => {
            let f_only = Problem { source: None, ..problem.clone() };
            let src_only = Problem { f: charcauchy_core::propagation::CharacteristicDatum::zero(&problem.grid), ..problem.clone() };
            (f_only, src_only)
        }
        None => (problem.clone(), problem.scaled(-0.5)),
    }
}

pub fn verify(cfg: &RunConfig, out: &Path) -> Result<bool> {
    let grid = cfg.grid()?;
    if !grid.spacetime.is_minkowski() {
        bail!(ConfigError("verify runs on the Minkowski slab only; drop spacetime.omega".into()));
    }
    let problem = cfg.problem(&grid)?;
    let scfg = cfg.solver_config();
    let tol = &cfg.verify.tolerances;
    let h2 = grid.h * grid.h;
    let battery = TestFunctionBattery::generate(&grid, cfg.verify.battery_size, cfg.verify.seed)?;
    let mut checks = Vec::new();
    let mut skipped = Vec::new();

    let phi = borel::simple_extension(&problem.f, scfg.delta_e(&grid), &grid)?;
    let op = &problem.op;
    for (name, region) in [("jump_formula_jminus", CausalRegion::Jminus), ("jump_formula_jplus", CausalRegion::Jplus)] {
        let r = verify_jump_formula(op, region, &phi, &battery)?;
        checks.push(Check::new(name, r.max_normalized, tol.pairing * h2));
    }
    let t = verify_t_identity(op, &phi, &battery)?;
    checks.push(Check::new("t_identity", t.max_normalized, tol.pairing * h2));

    if problem.source.is_none() {
        let s = verify_second_jump(op, &problem.f, &battery, &scfg)?;
        checks.push(Check::new("second_jump", s.pairing.max_normalized, tol.pairing * h2));
        checks.push(Check::new("second_jump_consistency", s.consistency, tol.pairing * h2));
    } else {
        skipped.push("second_jump: needs a homogeneous problem".into());
    }

    let sol = solver::solve_rendall(&problem, &scfg)?;
    let d = distributional_residual(&problem, &sol, &battery)?;
    checks.push(Check::new("distributional", d.max_normalized, tol.distributional * h2));

    if op.x_is_tangent() {
        let e = verify_equivariance(op, &vec![4.0; grid.nv()], &problem.f.f, &battery)?;
        checks.push(Check::new("equivariance", e.max_rel_error, tol.equivariance));
    } else {
        skipped.push("equivariance: needs A = 0".into());
    }

    let variants = cfg.variants();
    if variants.len() >= 2 {
        let r = independence_suite(&problem, &variants, PathTag::Rendall)?;
        checks.push(Check::new("independence", r.max_distance, tol.independence * (h2 + h2 * h2)));
    } else {
        skipped.push("independence: no verify.variants given".into());
    }

    let (p, q) = split(&problem);
    let lin = linearity_defect(&p, &q, 2.0, -0.7, &scfg, PathTag::Rendall)?;
    checks.push(Check::new("linearity", lin, tol.linearity));

    let again = solver::solve_rendall(&problem, &scfg)?;
    let same = sol.merged().values.iter().zip(again.merged().values.iter()).all(|(a, b)| a.to_bits() == b.to_bits());
    checks.push(Check::new("determinism", if same { 0.0 } else { 1.0 }, 0.0));

    let pass = checks.iter().all(|c| c.pass);
    let report = VerifyReport { h: grid.h, seed: cfg.verify.seed, battery_size: battery.len(), checks, skipped, pass };
    output::write_json(&out.join("verify.json"), &report)?;
    Ok(pass)
}

#[derive(Debug, Serialize)]
struct Rescaling {
    alpha: f64,
    error: f64,
}

#[derive(Debug, Serialize)]
struct ExpansionReport {
    surface: &'static str,
    samples: usize,
    max_abs_expansion: f64,
    /// `max |expansion / weight * s / 2 - 1|` on the light cone.
    cone_ratio_error: Option<f64>,
    /// Errors are absolute on the null line (where the density vanishes) and
    /// relative to the largest density otherwise.
    rescaling: Vec<Rescaling>,
    lambda: f64,
    conformal_exponent: f64,
    conformal_error: f64,
    tolerance: f64,
    pass: bool,
}

/// Absolute tolerance for densities that vanish identically.
const ZERO_DENSITY_TOL: f64 = 1e-10;

pub fn expansion(cfg: &RunConfig, out: &Path) -> Result<bool> {
    let e = &cfg.expansion;
    let (hs, name) = match e.surface {
        Surface::NullLine => {
            let omega = match &cfg.spacetime.omega {
                Some(w) => field::expr(w).map_err(|err| ConfigError(format!("spacetime.omega: {err}")))?,
                None => field::constant(1.0),
            };
            (geometry::null_line(omega), "null_line")
        }
        Surface::LightCone => (geometry::light_cone(), "light_cone"),
    };
    let hs = hs.with_step(e.step);
    let angles = match (e.surface, e.angles.is_empty()) {
        (Surface::NullLine, _) => vec![Vec::new()],
        (Surface::LightCone, true) => vec![vec![0.4, 0.7], vec![1.3, 2.1], vec![2.2, 4.0]],
        (Surface::LightCone, false) => e.angles.clone(),
    };
    let [s0, s1] = e.s_range;
    let mut points = Vec::new();
    for k in 0..e.samples {
        let s = s0 + (s1 - s0) * k as f64 / (e.samples - 1) as f64;
        for y in &angles {
            points.push((s, y.clone()));
        }
    }
    let base = expansion_density(&hs, &|_, _| 1.0, &points)?;

    let mut csv = String::from("s");
    for k in 0..angles[0].len() {
        csv.push_str(&format!(",y{k}"));
    }
    csv.push_str(",weight,expansion\n");
    for (k, (s, y)) in points.iter().enumerate() {
        csv.push_str(&s.to_string());
        for c in y {
            csv.push_str(&format!(",{c}"));
        }
        csv.push_str(&format!(",{},{}\n", base.weight[k], base.expansion[k]));
    }
    output::write(&out.join("expansion.csv"), &csv)?;

    let sup = |x: &[f64]| x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max_abs = sup(&base.expansion);
    let null_line = e.surface == Surface::NullLine;
    let scale = if null_line { 1.0 } else { max_abs.max(ADAPTED_TOL * sup(&base.weight)) };
    let limit = if null_line { ZERO_DENSITY_TOL } else { e.tolerance };
    let mut pass = !null_line || max_abs <= ZERO_DENSITY_TOL;

    let cone_ratio_error = (e.surface == Surface::LightCone).then(|| {
        points
            .iter()
            .enumerate()
            .fold(0.0f64, |m, (k, (s, _))| m.max((base.expansion[k] / base.weight[k] * s / 2.0 - 1.0).abs()))
    });
    if let Some(r) = cone_ratio_error {
        pass &= r <= e.tolerance;
    }

    let mut rescaling = Vec::new();
    for &alpha in &e.alphas {
        let r = expansion_density(&hs, &|_, _| alpha, &points)?;
        let sign = alpha.signum();
        let err = r.expansion.iter().zip(&base.expansion).fold(0.0f64, |m, (a, b)| m.max((a - sign * b).abs())) / scale;
        pass &= err <= limit;
        rescaling.push(Rescaling { alpha, error: err });
    }

    let lambda = e.lambda;
    let c = conformal_scaling_check(&hs, &|_, _| lambda, &points)?;
    let conformal_error = if null_line { c.max_abs_error } else { c.max_rel_error };
    pass &= conformal_error <= limit;

    let report = ExpansionReport {
        surface: name,
        samples: points.len(),
        max_abs_expansion: max_abs,
        cone_ratio_error,
        rescaling,
        lambda,
        conformal_exponent: c.exponent,
        conformal_error,
        tolerance: e.tolerance,
        pass,
    };
    output::write_json(&out.join("expansion.json"), &report)?;
    Ok(pass)
}

#[derive(Debug, Serialize)]
struct ConvergenceSummary {
    path: PathTag,
    monotone: bool,
    orders: Vec<f64>,
    min_order: f64,
    max_order: Option<f64>,
    pass: bool,
}

pub fn converge(cfg: &RunConfig, out: &Path) -> Result<bool> {
    let c = &cfg.convergence;
    let scfg = cfg.solver_config();
    let path = c.path;
    let reference = match c.reference {
        ReferenceKind::Finest => {
            let last = *c.h_list.last().context("convergence.h_list is empty")?;
            Reference::Finest(last / 2.0)
        }
        ReferenceKind::PureWave => {
            let (f, _) = cfg.f_field()?.context("the pure_wave reference needs data.f")?;
            Reference::ClosedForm(Arc::new(move |_, v| f.value(0.0, v)))
        }
        ReferenceKind::KleinGordon => {
            let q = cfg.klein_gordon_q()?;
            let (f, support) = cfg.f_field()?.context("the klein_gordon reference needs data.f")?;
            let r = KleinGordonReference::new(q, Interval::new(support.lo, support.hi), move |v| f.v_derivatives(0.0, v, 1)[1]);
            Reference::ClosedForm(Arc::new(move |u, v| r.value(u, v)))
        }
    };
    let table = solution_convergence(
        &c.h_list,
        |h| {
            let grid = cfg.grid_with(h).map_err(|e| charcauchy_core::Error::Precondition(e.to_string()))?;
            let problem = cfg.problem(&grid).map_err(|e| charcauchy_core::Error::Precondition(e.to_string()))?;
            Ok(solver::solve(&problem, &scfg, path)?.merged())
        },
        &reference,
    )?;
    let mut csv = String::from("h,error,observed_order\n");
    for r in &table.rows {
        let order = r.observed_order.map(|p| p.to_string()).unwrap_or_default();
        csv.push_str(&format!("{},{},{}\n", r.h, r.error, order));
    }
    output::write(&out.join("convergence.csv"), &csv)?;
    let orders = table.orders();
    let pass = table.monotone && orders.iter().all(|p| *p >= c.min_order && *p <= c.max_order);
    let summary = ConvergenceSummary {
        path,
        monotone: table.monotone,
        min_order: c.min_order,
        max_order: finite(c.max_order),
        orders,
        pass,
    };
    output::write_json(&out.join("convergence.json"), &summary)?;
    Ok(pass)
}
