//! Run configuration: flat JSON with one block per concern.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use charcauchy_core::borel::{BumpProfile, MuRule};
use charcauchy_core::field::{self, Field};
use charcauchy_core::geometry::{build_grid, GridRef, Interval, Metric, SlabSpacetime};
use charcauchy_core::operators::WaveOperator;
use charcauchy_core::propagation::{CharacteristicDatum, Inhomogeneity};
use charcauchy_core::solver::{PathTag, Problem, SolverConfig};
use charcauchy_core::verify::{DEFAULT_BATTERY_SIZE, DEFAULT_SEED};
use serde::Deserialize;

/// A config file that could not be read or parsed; exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub spacetime: SpacetimeBlock,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub operator: OperatorBlock,
    #[serde(default)]
    pub data: DataBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub verify: VerifyBlock,
    #[serde(default)]
    pub expansion: ExpansionBlock,
    #[serde(default)]
    pub convergence: ConvergenceBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacetimeBlock {
    pub t_min: f64,
    pub t_max: f64,
    /// Conformal factor `Omega(u, v)`; absent means Minkowski.
    #[serde(default)]
    pub omega: Option<String>,
}

impl Default for SpacetimeBlock {
    fn default() -> Self {
        SpacetimeBlock { t_min: 0.0, t_max: 4.0, omega: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub h: f64,
    pub u_halfwidth: f64,
    pub v_range: [f64; 2],
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock { h: 0.02, u_halfwidth: 1.0, v_range: [1.0, 7.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorPreset {
    Wave,
    KleinGordon,
}

/// Either a preset or the coefficients of `4 d_u d_v + A d_u + B d_v + q`
/// as expressions in `u` and `v`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorBlock {
    #[serde(default)]
    pub preset: Option<OperatorPreset>,
    #[serde(default)]
    pub a: Option<String>,
    #[serde(default)]
    pub b: Option<String>,
    #[serde(default)]
    pub q: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    pub expr: String,
    /// v-support of `f`, or the v-bounds of `F`.
    pub support: [f64; 2],
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    #[serde(default)]
    pub f: Option<FunctionSpec>,
    #[serde(default, rename = "F")]
    pub source: Option<FunctionSpec>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default)]
    pub n_jet: Option<usize>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub delta_e: Option<f64>,
    #[serde(default)]
    pub mu_rule: Option<MuRule>,
    #[serde(default)]
    pub profile: Option<BumpProfile>,
    #[serde(default)]
    pub margin_cells: Option<usize>,
    /// Paths to run; the first is the primary one.
    #[serde(default)]
    pub paths: Vec<PathTag>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Pairing residuals must stay below `pairing * h^2`.
    pub pairing: f64,
    /// Distributional residual bound `distributional * h^2 |chi|_{C^2}`.
    pub distributional: f64,
    /// Choice independence bound `independence * (h^2 + h^4)`.
    pub independence: f64,
    /// Relative linearity defect.
    pub linearity: f64,
    /// Relative equivariance error.
    pub equivariance: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { pairing: 10.0, distributional: 10.0, independence: 20.0, linearity: 1e-12, equivariance: 1e-10 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyBlock {
    pub seed: u64,
    pub battery_size: usize,
    pub tolerances: Tolerances,
    /// Solver variants for the independence check, as overrides of the base config.
    pub variants: Vec<SolverBlock>,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        VerifyBlock { seed: DEFAULT_SEED, battery_size: DEFAULT_BATTERY_SIZE, tolerances: Tolerances::default(), variants: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    /// The line `u = 0` of the slab, with the spacetime's conformal factor.
    NullLine,
    /// The outgoing light cone of 3+1 Minkowski space.
    LightCone,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpansionBlock {
    pub surface: Surface,
    /// Generator parameter range and number of samples along it.
    pub s_range: [f64; 2],
    pub samples: usize,
    /// Transverse chart points `y` (empty for the null line).
    pub angles: Vec<Vec<f64>>,
    /// Constant conormal rescalings to compare against the base conormal.
    pub alphas: Vec<f64>,
    /// Constant conformal factor for the scaling law.
    pub lambda: f64,
    /// Finite-difference step along the generators.
    pub step: f64,
    pub tolerance: f64,
}

impl Default for ExpansionBlock {
    fn default() -> Self {
        ExpansionBlock {
            surface: Surface::NullLine,
            s_range: [1.0, 5.0],
            samples: 9,
            angles: Vec::new(),
            alphas: vec![2.0, -1.0],
            lambda: 4.0,
            step: 1e-4,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// The finest grid in the list.
    Finest,
    /// `phi = f(v)` for the d'Alembertian.
    PureWave,
    /// Closed-form Klein-Gordon solution; needs the klein_gordon preset.
    KleinGordon,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceBlock {
    pub h_list: Vec<f64>,
    pub reference: ReferenceKind,
    pub path: PathTag,
    pub min_order: f64,
    pub max_order: f64,
}

impl Default for ConvergenceBlock {
    fn default() -> Self {
        ConvergenceBlock { h_list: vec![0.08, 0.04, 0.02], reference: ReferenceKind::Finest, path: PathTag::Rendall, min_order: 1.7, max_order: f64::INFINITY }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: PathBuf,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { dir: PathBuf::from("out") }
    }
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    parse(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())).into())
}

pub fn parse(text: &str) -> std::result::Result<RunConfig, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path.is_empty() || path == "." {
            inner.to_string()
        } else {
            format!("at `{path}`: {inner}")
        }
    })
}

fn expr(src: &str, what: &str) -> Result<Field> {
    field::expr(src).map_err(|e| ConfigError(format!("{what}: {e} in `{src}`")).into())
}

impl RunConfig {
    pub fn spacetime(&self) -> Result<SlabSpacetime> {
        let metric = match &self.spacetime.omega {
            Some(w) => Metric::Conformal(expr(w, "spacetime.omega")?),
            None => Metric::Minkowski,
        };
        Ok(SlabSpacetime::new(self.spacetime.t_min, self.spacetime.t_max, metric)?)
    }

    pub fn grid_with(&self, h: f64) -> Result<GridRef> {
        let g = &self.grid;
        let grid = build_grid(self.spacetime()?, h, g.u_halfwidth, Interval::new(g.v_range[0], g.v_range[1]))
            .with_context(|| format!("building the grid with h = {h}"))?;
        Ok(Arc::new(grid))
    }

    pub fn grid(&self) -> Result<GridRef> {
        self.grid_with(self.grid.h)
    }

    pub fn operator(&self) -> Result<WaveOperator> {
        let o = &self.operator;
        match o.preset {
            Some(OperatorPreset::Wave) => {
                if o.a.is_some() || o.b.is_some() || o.q.is_some() {
                    bail!(ConfigError("operator: the wave preset takes no coefficients".into()));
                }
                Ok(WaveOperator::d_alembertian())
            }
            Some(OperatorPreset::KleinGordon) => {
                if o.a.is_some() || o.b.is_some() {
                    bail!(ConfigError("operator: the klein_gordon preset only takes q".into()));
                }
                Ok(WaveOperator::klein_gordon(self.klein_gordon_q()?))
            }
            None => {
                let get = |s: &Option<String>, name: &str| expr(s.as_deref().unwrap_or("0"), &format!("operator.{name}"));
                Ok(WaveOperator::new(get(&o.a, "a")?, get(&o.b, "b")?, get(&o.q, "q")?))
            }
        }
    }

    /// The constant `q` of the klein_gordon preset.
    pub fn klein_gordon_q(&self) -> Result<f64> {
        let o = &self.operator;
        if o.preset != Some(OperatorPreset::KleinGordon) {
            bail!(ConfigError("this run needs the klein_gordon operator preset".into()));
        }
        let src = o.q.as_deref().ok_or_else(|| ConfigError("operator: klein_gordon needs q".into()))?;
        let q = expr(src, "operator.q")?;
        let (a, b) = (q.value(0.0, 0.0), q.value(1.3, -0.7));
        if a != b {
            bail!(ConfigError(format!("operator.q must be constant for klein_gordon, got `{src}`")));
        }
        Ok(a)
    }

    pub fn f_field(&self) -> Result<Option<(Field, Interval)>> {
        self.data
            .f
            .as_ref()
            .map(|f| Ok((expr(&f.expr, "data.f")?, Interval::new(f.support[0], f.support[1]))))
            .transpose()
    }

    pub fn problem(&self, grid: &GridRef) -> Result<Problem> {
        let f = match self.f_field()? {
            Some((field, support)) => CharacteristicDatum::from_field(grid, field.as_ref(), support).context("data.f")?,
            None => CharacteristicDatum::zero(grid),
        };
        let mut p = Problem::new(self.operator()?, grid.clone(), f);
        if let Some(s) = &self.data.source {
            p = p.with_source(Inhomogeneity::new(expr(&s.expr, "data.F")?, Interval::new(s.support[0], s.support[1])));
        }
        Ok(p)
    }

    pub fn solver_config(&self) -> SolverConfig {
        merge(SolverConfig::default(), &self.solver)
    }

    pub fn paths(&self) -> Vec<PathTag> {
        if self.solver.paths.is_empty() {
            vec![PathTag::Rendall]
        } else {
            self.solver.paths.clone()
        }
    }

    pub fn variants(&self) -> Vec<SolverConfig> {
        let base = self.solver_config();
        std::iter::once(base).chain(self.verify.variants.iter().map(|v| merge(base, v))).collect()
    }

    pub fn check(&self) -> Result<()> {
        if !(self.grid.h > 0.0) {
            bail!(ConfigError(format!("grid.h must be positive, got {}", self.grid.h)));
        }
        if self.expansion.samples < 2 {
            bail!(ConfigError("expansion.samples must be at least 2".into()));
        }
        self.spacetime()?;
        self.operator()?;
        self.f_field()?;
        if let Some(s) = &self.data.source {
            expr(&s.expr, "data.F")?;
        }
        Ok(())
    }
}

fn merge(base: SolverConfig, b: &SolverBlock) -> SolverConfig {
    SolverConfig {
        n_jet: b.n_jet.unwrap_or(base.n_jet),
        delta: b.delta.or(base.delta),
        delta_e: b.delta_e.or(base.delta_e),
        mu_rule: b.mu_rule.unwrap_or(base.mu_rule),
        profile: b.profile.unwrap_or(base.profile),
        margin_cells: b.margin_cells.unwrap_or(base.margin_cells),
    }
}
