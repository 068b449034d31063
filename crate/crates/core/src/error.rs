use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid four-vector: {0}")]
    InvalidVector(String),

    #[error("degenerate boundary subspace: {0}")]
    DegenerateBoundary(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("physics validation failed: {0}")]
    Physics(String),

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("region [{lo}, {hi}] lies outside the domain")]
    RegionOutsideDomain { lo: f64, hi: f64 },

    #[error("boundary worldline left the grid at t = {t}")]
    WorldlineOffGrid { t: f64 },

    #[error("superluminal worldline segment at t = {t} (|v| = {speed})")]
    Superluminal { t: f64, speed: f64 },

    #[error("probability ledger violated: residual {residual:e} exceeds {tolerance:e}")]
    Ledger { residual: f64, tolerance: f64 },

    #[error("dimension {dim} exceeds the explicit-matrix cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("Schmidt rank {rank} exceeds the cap {cap}")]
    RankCap { rank: usize, cap: usize },

    #[error("query (t = {t}, x = {x}) outside stored field history")]
    OutsideHistory { t: f64, x: f64 },

    #[error("ladder needs at least 3 rungs, got {0}")]
    LadderTooShort(usize),

    #[error("unsupported: {0}")]
    Unsupported(String),
}
