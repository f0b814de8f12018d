use thiserror::Error;

/// Errors raised by the geometry, solver and verification layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid spacing must be positive, got {0}")]
    NonPositiveSpacing(f64),

    #[error("invalid slab: t_min = {t_min} must be below t_max = {t_max}")]
    InvalidSlab { t_min: f64, t_max: f64 },

    #[error("requested range leaves the slab: {0}")]
    RangeOutsideSlab(String),

    #[error("point (u = {u}, v = {v}) lies outside the slab")]
    PointOutsideSlab { u: f64, v: f64 },

    #[error("conformal factor must be positive, got {value} at (u = {u}, v = {v})")]
    NonPositiveConformalFactor { u: f64, v: f64, value: f64 },

    #[error("conormal scale vanishes or changes sign at sample {index}")]
    VanishingConormal { index: usize },

    #[error("chart is not generator-adapted: {0}")]
    NotAdapted(String),

    #[error("scale factor must be positive: {0}")]
    NonPositiveScale(String),

    #[error("conformal factor varies along the generators (|d lambda/ds| = {0:e})")]
    NotConstantAlongGenerators(f64),

    #[error("grid too small: need at least {needed} lines in each direction, have {have_u} x {have_v}")]
    GridTooSmall { needed: usize, have_u: usize, have_v: usize },

    #[error("fields live on different grids")]
    ShapeMismatch,

    #[error("support touches the grid boundary: {0}")]
    SupportTouchesBoundary(String),

    #[error("jet order {requested} exceeds the available order {available}")]
    JetOrderExceeded { requested: usize, available: usize },

    #[error("no room for the cross-section: {0}")]
    InfeasibleCrossSection(String),

    #[error("transverse support scale {delta} too large for the grid half-width {halfwidth}")]
    DeltaTooLarge { delta: f64, halfwidth: f64 },

    #[error("source is active on the inflow boundary ({0})")]
    SourceAtInflow(String),

    #[error("marching became unstable (|value| = {0:e})")]
    Unstable(f64),

    #[error("data violates {condition}: {detail}")]
    DataViolation { condition: &'static str, detail: String },

    #[error("the final representation formula only covers homogeneous problems")]
    InhomogeneousFinalFormula,

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("only the Minkowski slab metric is supported here")]
    UnsupportedMetric,

    #[error("expression error at column {column}: {message}")]
    Expression { column: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
