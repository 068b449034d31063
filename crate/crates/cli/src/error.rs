use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Schema(String),

    #[error(transparent)]
    Core(#[from] dirac_detect::Error),

    /// A numeric check failed beyond its tolerance.
    #[error("check failed: {0}")]
    Check(String),

    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    /// 2 for schema problems, 3 for physics validation, 4 for ledger and
    /// tolerance violations, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use dirac_detect::Error as E;
        match self {
            CliError::Schema(_) => 2,
            CliError::Check(_) => 4,
            CliError::Io { .. } => 1,
            CliError::Core(e) => match e {
                E::InvalidConfig(_) | E::DimensionCap { .. } | E::RankCap { .. } | E::LadderTooShort(_) => 2,
                E::Ledger { .. } => 4,
                E::OutsideHistory { .. } => 1,
                E::InvalidVector(_)
                | E::DegenerateBoundary(_)
                | E::Physics(_)
                | E::ZeroNorm
                | E::RegionOutsideDomain { .. }
                | E::WorldlineOffGrid { .. }
                | E::Superluminal { .. }
                | E::Unsupported(_) => 3,
            },
        }
    }
}
