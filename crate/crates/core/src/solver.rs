//! The two-sided characteristic problem `P phi = F`, `phi|_N = f`, solved by
//! three routes that must agree:
//!
//! * `solve_rendall`: Borel sums of the future/past jets, corrected by
//!   retarded/advanced solves of the one-sided residuals;
//! * `solve_representation`: the same correction applied to the simple
//!   extension `e(f)`;
//! * `solve_final_formula`: the causal Green operator applied to the single
//!   layer `S(T f)` (homogeneous problems on the Minkowski slab).

use serde::{Deserialize, Serialize};

use crate::borel::{self, BorelSeries, BumpProfile, ExtensionConfig, MuRule};
use crate::error::{Error, Result};
use crate::field;
use crate::geometry::{self, CausalRegion, GridRef, Interval, SlabGrid};
use crate::green::{self, Conormal, Direction, GreenOperator, SidedSource, SingleLayer};
use crate::operators::{GridField, NodeCoefficients, WaveOperator};
use crate::propagation::{
    self, data_interval, jump_table, CharacteristicDatum, Inhomogeneity, JetSequence, JetType, SUPPORT_TOL,
};

/// `tol_reg = TOL_REG_FACTOR h^2 max(|f|, |F|)`.
pub const TOL_REG_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub n_jet: usize,
    /// Transverse scale of the Borel sums; `None` picks `0.9 min(1, u-extent)`.
    pub delta: Option<f64>,
    /// Transverse scale of the simple extension; same default.
    pub delta_e: Option<f64>,
    pub mu_rule: MuRule,
    pub profile: BumpProfile,
    pub margin_cells: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_jet: propagation::DEFAULT_N_JET,
            delta: None,
            delta_e: None,
            mu_rule: MuRule::Unit,
            profile: BumpProfile::Exp,
            margin_cells: propagation::DEFAULT_MARGIN_CELLS,
        }
    }
}

impl SolverConfig {
    pub fn extension(&self, grid: &SlabGrid) -> ExtensionConfig {
        ExtensionConfig {
            delta: self.delta.unwrap_or_else(|| borel::default_delta(grid)),
            mu_rule: self.mu_rule,
            n_jet: self.n_jet,
            profile: self.profile,
        }
    }

    pub fn delta_e(&self, grid: &SlabGrid) -> f64 {
        self.delta_e.unwrap_or_else(|| borel::default_delta(grid))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathTag {
    Rendall,
    Representation,
    FinalFormula,
}

impl PathTag {
    pub fn label(self) -> &'static str {
        match self {
            PathTag::Rendall => "rendall",
            PathTag::Representation => "representation",
            PathTag::FinalFormula => "final_formula",
        }
    }
}

/// Operator, grid and data of one problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub op: WaveOperator,
    pub grid: GridRef,
    pub f: CharacteristicDatum,
    pub source: Option<Inhomogeneity>,
}

impl Problem {
    pub fn new(op: WaveOperator, grid: GridRef, f: CharacteristicDatum) -> Self {
        Problem { op, grid, f, source: None }
    }

    pub fn with_source(mut self, source: Inhomogeneity) -> Self {
        self.source = Some(source);
        self
    }

    fn active_source(&self) -> Option<&Inhomogeneity> {
        self.source.as_ref().filter(|s| !s.field.is_zero())
    }

    /// `F` sampled on the grid (zero when absent).
    pub fn source_field(&self) -> GridField {
        match self.active_source() {
            Some(s) => {
                let f = s.field.clone();
                GridField::from_fn(&self.grid, move |u, v| f.value(u, v))
            }
            None => GridField::zeros(&self.grid),
        }
    }

    /// `max(|f|, |F|)` on the grid.
    pub fn data_scale(&self) -> f64 {
        self.f.sup_norm().max(self.source_field().max_abs())
    }

    /// The same problem with `f` and `F` scaled by `a`.
    pub fn scaled(&self, a: f64) -> Self {
        Problem {
            op: self.op.clone(),
            grid: self.grid.clone(),
            f: self.f.scaled(a),
            source: self.source.as_ref().map(|s| s.scaled(a)),
        }
    }
}

/// Outcome of the data checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataReport {
    pub f_support: Option<Interval>,
    /// Declared v-bounds of `F`; `None` when `F = 0`.
    pub source_support: Option<Interval>,
    /// v-extent of the samples of `1^+ F` and `1^- F`.
    pub plus_source_v: Option<Interval>,
    pub minus_source_v: Option<Interval>,
    /// Hull of all data supports: the interval the cross-sections must clear.
    pub data_interval: Option<Interval>,
}

fn extend(acc: &mut Option<Interval>, v: f64) {
    *acc = Some(match *acc {
        Some(i) => Interval::new(i.lo.min(v), i.hi.max(v)),
        None => Interval::new(v, v),
    });
}

pub fn validate_data(grid: &GridRef, f: &CharacteristicDatum, source: Option<&Inhomogeneity>) -> Result<DataReport> {
    f.validate(grid)?;
    let source = source.filter(|s| !s.field.is_zero());
    let mut plus = None;
    let mut minus = None;
    if let Some(s) = source {
        let values = GridField::from_fn(grid, |u, v| s.field.value(u, v));
        let tol = SUPPORT_TOL * values.max_abs().max(1.0);
        let (nu, nv) = grid.shape();
        for i in 0..nu {
            for j in 0..nv {
                let x = values.values[[i, j]];
                if x.abs() <= tol {
                    continue;
                }
                let (u, v) = grid.node(i, j);
                if !grid.in_region(i, j, CausalRegion::J) {
                    return Err(Error::DataViolation {
                        condition: "supp F in J(N)",
                        detail: format!("F({u}, {v}) = {x:e} outside J(N)"),
                    });
                }
                if !s.v_bounds.contains(v) {
                    return Err(Error::DataViolation {
                        condition: "v-bounds of F",
                        detail: format!("F({u}, {v}) = {x:e} outside [{}, {}]", s.v_bounds.lo, s.v_bounds.hi),
                    });
                }
                if i == 0 || j == 0 || i + 1 == nu || j + 1 == nv {
                    return Err(Error::DataViolation {
                        condition: "temporal compactness of F",
                        detail: format!("F({u}, {v}) = {x:e} on the grid boundary"),
                    });
                }
                if u >= 0.0 {
                    extend(&mut plus, v);
                }
                if u <= 0.0 {
                    extend(&mut minus, v);
                }
            }
        }
        exterior_scan(grid, s, tol)?;
    }
    Ok(DataReport {
        f_support: f.support,
        source_support: source.map(|s| s.v_bounds),
        plus_source_v: plus,
        minus_source_v: minus,
        data_interval: data_interval(f, source),
    })
}

/// A grid inside the slab lies in `J(N)`; the slab points below and above
/// it, on the same u-lines and spacing, are where `F` could leave `J(N)`.
fn exterior_scan(grid: &SlabGrid, s: &Inhomogeneity, tol: f64) -> Result<()> {
    let st = &grid.spacetime;
    let h = grid.h;
    for &u in grid.u_coords() {
        for (start, step) in [(grid.v(0), -h), (grid.v(grid.nv() - 1), h)] {
            let mut k = 1;
            loop {
                let v = start + step * k as f64;
                if !st.contains(u, v) {
                    break;
                }
                let x = s.field.value(u, v);
                if x.abs() > tol && !geometry::classify((u, v), CausalRegion::J, st)? {
                    return Err(Error::DataViolation {
                        condition: "supp F in J(N)",
                        detail: format!("F({u}, {v}) = {x:e} outside J(N)"),
                    });
                }
                k += 1;
            }
        }
    }
    Ok(())
}

/// Both one-sided solutions, with the jets they came from.
#[derive(Debug, Clone)]
pub struct MergedSolution {
    /// Valid on `u >= 0`.
    pub plus: GridField,
    /// Valid on `u <= 0`.
    pub minus: GridField,
    /// `plus` on the null line.
    pub trace: Vec<f64>,
    /// `Delta_r = sup |psi_r^future - psi_r^past|`.
    pub jump_report: Vec<f64>,
    pub path: PathTag,
    pub future: JetSequence,
    pub past: JetSequence,
    /// `max(|f|, |F|)`.
    pub data_scale: f64,
}

impl MergedSolution {
    pub fn grid(&self) -> &GridRef {
        &self.plus.grid
    }

    /// `plus` on `J^+(N)`, `minus` on `J^-(N) \ N`, zero elsewhere.
    pub fn merged(&self) -> GridField {
        let g = self.grid().clone();
        let mut out = GridField::zeros(&g);
        let i0 = g.i0();
        for ((i, j), x) in out.values.indexed_iter_mut() {
            *x = if i >= i0 && g.in_region(i, j, CausalRegion::Jplus) {
                self.plus.values[[i, j]]
            } else if i < i0 && g.in_region(i, j, CausalRegion::Jminus) {
                self.minus.values[[i, j]]
            } else {
                0.0
            };
        }
        out
    }

    pub fn sided(&self) -> green::SidedField {
        green::SidedField { plus: self.plus.clone(), minus: self.minus.clone() }
    }

    /// `max |phi^+(0, v) - f|` and `max |phi^-(0, v) - f|`, whichever is larger.
    pub fn trace_error(&self, f: &CharacteristicDatum) -> f64 {
        let i0 = self.grid().i0();
        let p = self.plus.values.row(i0);
        let m = self.minus.values.row(i0);
        f.f.iter().enumerate().fold(0.0f64, |e, (j, x)| e.max((p[j] - x).abs()).max((m[j] - x).abs()))
    }
}

fn jets(problem: &Problem, cfg: &SolverConfig) -> Result<(JetSequence, JetSequence)> {
    let src = problem.active_source();
    let run = |t| propagation::solve_propagation(&problem.op, &problem.f, src, t, cfg.n_jet, cfg.margin_cells, &problem.grid);
    let (f, p) = crate::par::join(|| run(JetType::Future), || run(JetType::Past));
    Ok((f?, p?))
}

/// `phi^+ = a^+ - G_+[1^+(P a^+ - F)]`, `phi^- = a^- - G_-[1^-(P a^- - F)]`.
fn correct(problem: &Problem, plus: &BorelSeries, minus: &BorelSeries) -> Result<(GridField, GridField)> {
    let grid = &problem.grid;
    let gop = GreenOperator::new(&problem.op, grid)?;
    let k: NodeCoefficients = problem.op.sample(grid);
    let fsrc = problem.source_field();
    let side = |app: &BorelSeries, dir: Direction| -> Result<GridField> {
        let residual = app.apply_p_with(&k).linear_combination(1.0, &fsrc, -1.0)?;
        let (src, region) = match dir {
            Direction::Retarded => (SidedSource::plus_only(&residual), CausalRegion::Jplus),
            _ => (SidedSource::minus_only(&residual), CausalRegion::Jminus),
        };
        let corr = gop.solve(&src, dir)?;
        let mut out = app.field().linear_combination(1.0, &corr, -1.0)?;
        for ((i, j), x) in out.values.indexed_iter_mut() {
            if !grid.in_region(i, j, region) {
                *x = 0.0;
            }
        }
        Ok(out)
    };
    let (p, m) = crate::par::join(|| side(plus, Direction::Retarded), || side(minus, Direction::Advanced));
    Ok((p?, m?))
}

fn assemble(problem: &Problem, path: PathTag, plus: GridField, minus: GridField, fut: JetSequence, past: JetSequence) -> Result<MergedSolution> {
    let jump_report = jump_table(&fut, &past)?;
    Ok(MergedSolution {
        trace: plus.trace(),
        plus,
        minus,
        jump_report,
        path,
        future: fut,
        past,
        data_scale: problem.data_scale(),
    })
}

pub fn solve_rendall(problem: &Problem, cfg: &SolverConfig) -> Result<MergedSolution> {
    validate_data(&problem.grid, &problem.f, problem.source.as_ref())?;
    let (fut, past) = jets(problem, cfg)?;
    let ext = cfg.extension(&problem.grid);
    let ap = borel::borel_series(&fut, &ext, &problem.grid)?;
    let am = borel::borel_series(&past, &ext, &problem.grid)?;
    let (plus, minus) = correct(problem, &ap, &am)?;
    assemble(problem, PathTag::Rendall, plus, minus, fut, past)
}

pub fn solve_representation(problem: &Problem, cfg: &SolverConfig) -> Result<MergedSolution> {
    validate_data(&problem.grid, &problem.f, problem.source.as_ref())?;
    let (fut, past) = jets(problem, cfg)?;
    let e = borel::simple_extension_series(&problem.f, cfg.delta_e(&problem.grid), cfg.profile, &problem.grid)?;
    let (plus, minus) = correct(problem, &e, &e)?;
    assemble(problem, PathTag::Representation, plus, minus, fut, past)
}

/// Weight of `T f = {2 n# f + n(X) f} iota_n mu_g + f L_{n#} iota_n mu_g` for
/// `n = du` on the null line, via the geometry module.
pub fn t_weight(op: &WaveOperator, f: &CharacteristicDatum, grid: &SlabGrid) -> Result<Vec<f64>> {
    t_weight_samples(op, &f.f, &f.df, grid, true)
}

/// [`t_weight`] from samples of `f` and `f'`; `include_expansion = false`
/// drops the `f L_{n#} iota_n mu_g` term.
pub fn t_weight_samples(op: &WaveOperator, f: &[f64], df: &[f64], grid: &SlabGrid, include_expansion: bool) -> Result<Vec<f64>> {
    if f.len() != grid.nv() || df.len() != grid.nv() {
        return Err(Error::ShapeMismatch);
    }
    let omega = match &grid.spacetime.metric {
        geometry::Metric::Minkowski => field::constant(1.0),
        geometry::Metric::Conformal(w) => w.clone(),
    };
    let hs = geometry::null_line(omega.clone()).with_grid_spacing(grid.h);
    let points: Vec<(f64, Vec<f64>)> = grid.v_coords().iter().map(|&v| (v, Vec::new())).collect();
    let index = |s: f64| grid.v_index_floor(s + 0.5 * grid.h).unwrap_or(0).min(grid.nv() - 1);
    let phi = |s: f64, _: &[f64]| f[index(s)];
    let dphi = |s: f64, _: &[f64]| df[index(s)];
    let n_of_x = |s: f64, _: &[f64]| op.a.value(0.0, s);
    // The base conormal of the null line is Omega du / 2.
    let alpha = |s: f64, _: &[f64]| 2.0 / omega.value(0.0, s);
    geometry::t_operator_weight(&hs, &alpha, &phi, &dphi, &n_of_x, &points, include_expansion)
}

pub fn solve_final_formula(problem: &Problem, cfg: &SolverConfig) -> Result<MergedSolution> {
    if problem.active_source().is_some() {
        return Err(Error::InhomogeneousFinalFormula);
    }
    if !problem.grid.spacetime.is_minkowski() {
        return Err(Error::UnsupportedMetric);
    }
    validate_data(&problem.grid, &problem.f, None)?;
    let (fut, past) = jets(problem, cfg)?;
    let grid = &problem.grid;
    let weight = if problem.f.support.is_none() { vec![0.0; grid.nv()] } else { t_weight(&problem.op, &problem.f, grid)? };
    let layer = SingleLayer::new(weight, Conormal::Du);
    let s = green::green_single_layer(&problem.op, &layer, Direction::Causal, grid)?;
    assemble(problem, PathTag::FinalFormula, s.plus, s.minus, fut, past)
}

pub fn solve(problem: &Problem, cfg: &SolverConfig, path: PathTag) -> Result<MergedSolution> {
    match path {
        PathTag::Rendall => solve_rendall(problem, cfg),
        PathTag::Representation => solve_representation(problem, cfg),
        PathTag::FinalFormula => solve_final_formula(problem, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    /// Largest `k <= N_jet` with `Delta_r <= tol_reg` for all `r <= k`.
    pub c_k_class: usize,
    pub jump_table: Vec<f64>,
    pub tol_reg: f64,
}

pub fn regularity_report(sol: &MergedSolution, future: &JetSequence, past: &JetSequence) -> Result<RegularityReport> {
    let table = jump_table(future, past)?;
    let h = sol.grid().h;
    let tol_reg = TOL_REG_FACTOR * h * h * sol.data_scale;
    let n = table.len() - 1;
    let c_k_class = table.iter().position(|&d| d > tol_reg).map(|r| r.saturating_sub(1)).unwrap_or(n);
    Ok(RegularityReport { c_k_class, jump_table: table, tol_reg })
}
