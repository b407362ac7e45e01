use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Schema(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("fixture failed: {0}")]
    Fixture(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 1,
            CliError::Infeasible(_) => 2,
            CliError::Solver(_) | CliError::Io(_) => 3,
            CliError::Fixture(_) => 4,
        }
    }
}

impl From<isac_core::Error> for CliError {
    fn from(e: isac_core::Error) -> Self {
        use isac_core::Error as E;
        match e {
            E::Infeasible { .. } => CliError::Infeasible(e.to_string()),
            E::Structural(_) | E::Config(_) | E::Domain(_) | E::DegeneratePrior(_) => CliError::Schema(e.to_string()),
            E::Unbounded(_) | E::Solver(_) | E::Contract(_) => CliError::Solver(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
